#pragma once

// Per-experiment result records, one YAML file each:
//   <root>/results/<experiment_id>/<guid>.yaml
//   <root>/index.jsonl     one {"experiment_id","guid","path","created_at"} per line
//   <root>/.lock           advisory writer lock

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bench/spec_model.hpp"
#include "bench/stopwatch.hpp"

namespace bench {

struct Provenance {
  std::string user = "unknown";
  std::string hostname = "unknown";
  std::string resource = "local";
  std::string org = "unknown";
  std::string tool_version = std::string(kToolVersion);
  std::optional<TimePoint> created_at;

  bool operator==(const Provenance&) const = default;
};

struct TimerStat {
  std::string name;
  std::size_t count = 0;
  double total_s = 0, mean_s = 0, min_s = 0, max_s = 0;

  bool operator==(const TimerStat&) const = default;
};

struct ResultRecord {
  std::string experiment_id;
  Assignments assignments;
  std::string guid;
  Provenance provenance;
  SystemInfo system;
  std::vector<TimerStat> timers;
  std::map<std::string, double> metrics;
  std::vector<std::string> artifacts;
  std::optional<std::string> license;
  std::string spec_hash;

  bool operator==(const ResultRecord&) const = default;
};

/// A record for `point` with a fresh guid, provenance from `system` and
/// created_at = now (millisecond precision).
ResultRecord make_result(const ExperimentPoint& point, const SystemInfo& system, const std::string& resource,
                         TimePoint now = Clock::now());
std::vector<TimerStat> timer_stats(const std::vector<TimerSummary>& summaries);

/// Schema problems, one string per offending field; empty when valid.
std::vector<std::string> validate_record(const ResultRecord& r);

std::string record_to_yaml(const ResultRecord& r);
/// Throws ValidationError listing every missing or malformed field.
ResultRecord record_from_yaml(std::string_view text);

struct IndexEntry {
  std::string experiment_id;
  std::string guid;
  std::string path;  // relative to the repository root
  std::string created_at;
};

struct Predicate {
  enum class Op { eq, ge, le, range };
  std::string key;
  Op op = Op::eq;
  std::string value;
  double lo = 0, hi = 0;

  /// "k=v", "k=a..b", "k>=v", "k<=v". Throws ValidationError otherwise.
  static Predicate parse(std::string_view text);
  bool matches(const Assignments& a) const;
};

struct QueryResult {
  std::vector<ResultRecord> records;
  std::vector<std::string> warnings;
};

struct MergeConflict {
  std::string guid;
  std::string experiment_id;
  std::string dest_sha256;
  std::string source_sha256;
};

struct MergeReport {
  std::vector<std::string> copied;
  std::vector<std::string> skipped;
  std::vector<MergeConflict> conflicts;

  std::string to_yaml() const;
};

class Repository {
 public:
  /// Opens (and with `create`, initializes) a repository at `root`.
  explicit Repository(std::filesystem::path root, bool create = true);

  const std::filesystem::path& root() const { return root_; }

  /// Validates and stores the record; returns its guid.
  /// Throws ValidationError on schema problems or a duplicate guid.
  std::string record(ResultRecord r);

  std::vector<IndexEntry> index() const;
  std::vector<ResultRecord> records() const;
  std::optional<ResultRecord> find(const std::string& guid) const;
  /// Records matching every predicate, ordered by created_at.
  QueryResult query(const std::vector<Predicate>& filter) const;

  std::filesystem::path path_for(const std::string& experiment_id, const std::string& guid) const;

 private:
  friend MergeReport merge(Repository& dest, const Repository& source);
  void write_index(const std::vector<IndexEntry>& entries) const;

  std::filesystem::path root_;
};

/// Copies source records missing from dest (by guid). Same guid with the same
/// canonical content is skipped; differing content is reported as a conflict
/// and dest keeps its version.
MergeReport merge(Repository& dest, const Repository& source);

}  // namespace bench
