#include "bench/results.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <regex>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "bench/error.hpp"

namespace bench {

namespace fs = std::filesystem;

namespace {

class RepoLock {
 public:
  explicit RepoLock(const fs::path& file) {
    fd_ = ::open(file.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(ErrorKind::generic, "cannot open lock file " + file.string());
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw Error(ErrorKind::generic, "cannot lock " + file.string());
    }
  }
  ~RepoLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  RepoLock(const RepoLock&) = delete;
  RepoLock& operator=(const RepoLock&) = delete;

 private:
  int fd_ = -1;
};

std::string number(double v) { return fmt::format("{}", v); }

std::optional<double> to_number(std::string_view s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

TimePoint floor_millis(TimePoint t) { return std::chrono::time_point_cast<std::chrono::milliseconds>(t); }

std::string created_text(const ResultRecord& r) {
  return r.provenance.created_at ? format_utc_millis(*r.provenance.created_at) : "";
}

YAML::Node load_yaml(std::string_view text) {
  try {
    return YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ParseError(e.msg, e.mark.line + 1, e.mark.column + 1);
  }
}

}  // namespace

ResultRecord make_result(const ExperimentPoint& point, const SystemInfo& system, const std::string& resource,
                         TimePoint now) {
  ResultRecord r;
  r.experiment_id = experiment_id(point.assignments);
  r.assignments = point.assignments;
  r.guid = uuid_v4();
  r.provenance.user = system.user;
  r.provenance.hostname = system.hostname;
  r.provenance.resource = resource;
  r.provenance.created_at = floor_millis(now);
  r.system = system;
  return r;
}

std::vector<TimerStat> timer_stats(const std::vector<TimerSummary>& summaries) {
  std::vector<TimerStat> out;
  for (const auto& s : summaries) out.push_back({s.name, s.count, s.total(), s.mean(), s.min(), s.max()});
  return out;
}

std::vector<std::string> validate_record(const ResultRecord& r) {
  std::vector<std::string> problems;
  if (r.experiment_id.empty()) problems.push_back("experiment_id: missing");
  else if (r.experiment_id != experiment_id(r.assignments))
    problems.push_back("experiment_id: '" + r.experiment_id + "' does not match assignments ('" +
                       experiment_id(r.assignments) + "')");
  if (!is_uuid_v4(r.guid)) problems.push_back("guid: '" + r.guid + "' is not a UUID v4");
  if (!r.provenance.created_at) problems.push_back("provenance.created_at: missing");
  for (const auto& a : r.artifacts)
    if (a.empty() || fs::path(a).is_absolute()) problems.push_back("artifacts: '" + a + "' is not a relative path");
  return problems;
}

std::string record_to_yaml(const ResultRecord& r) {
  YAML::Emitter em;
  auto quoted = [&](const std::string& k, const std::string& v) {
    em << YAML::Key << k << YAML::Value << YAML::DoubleQuoted << v;
  };
  em << YAML::BeginMap;
  quoted("experiment_id", r.experiment_id);
  quoted("guid", r.guid);
  em << YAML::Key << "assignments" << YAML::Value << YAML::BeginMap;
  for (const auto& [k, v] : r.assignments) quoted(k, v);
  em << YAML::EndMap;

  em << YAML::Key << "provenance" << YAML::Value << YAML::BeginMap;
  quoted("user", r.provenance.user);
  quoted("hostname", r.provenance.hostname);
  quoted("resource", r.provenance.resource);
  quoted("org", r.provenance.org);
  quoted("tool_version", r.provenance.tool_version);
  em << YAML::Key << "created_at" << YAML::Value;
  if (r.provenance.created_at) em << format_utc_millis(*r.provenance.created_at);
  else em << YAML::Null;
  em << YAML::EndMap;

  em << YAML::Key << "system" << YAML::Value << YAML::BeginMap;
  for (const auto& [k, v] : r.system.fields()) quoted(k, v);
  em << YAML::EndMap;

  em << YAML::Key << "timers" << YAML::Value << YAML::BeginSeq;
  for (const auto& t : r.timers) {
    em << YAML::Flow << YAML::BeginMap;
    quoted("name", t.name);
    em << YAML::Key << "count" << YAML::Value << t.count;
    em << YAML::Key << "total_s" << YAML::Value << number(t.total_s);
    em << YAML::Key << "mean_s" << YAML::Value << number(t.mean_s);
    em << YAML::Key << "min_s" << YAML::Value << number(t.min_s);
    em << YAML::Key << "max_s" << YAML::Value << number(t.max_s);
    em << YAML::EndMap;
  }
  em << YAML::EndSeq;

  em << YAML::Key << "metrics" << YAML::Value << YAML::BeginMap;
  for (const auto& [k, v] : r.metrics) em << YAML::Key << k << YAML::Value << number(v);
  em << YAML::EndMap;

  em << YAML::Key << "artifacts" << YAML::Value << YAML::BeginSeq;
  for (const auto& a : r.artifacts) em << YAML::DoubleQuoted << a;
  em << YAML::EndSeq;

  em << YAML::Key << "license" << YAML::Value;
  if (r.license) em << YAML::DoubleQuoted << *r.license;
  else em << YAML::Null;
  quoted("spec_hash", r.spec_hash);
  em << YAML::EndMap;
  return std::string(em.c_str()) + "\n";
}

ResultRecord record_from_yaml(std::string_view text) {
  const YAML::Node doc = load_yaml(text);
  if (!doc.IsMap()) throw ValidationError("result record: top level must be a mapping");
  std::vector<std::string> missing;
  auto str = [&](const YAML::Node& parent, const char* key, const std::string& where) -> std::string {
    const YAML::Node n = parent[key];
    if (!n || n.IsNull() || !n.IsScalar()) {
      missing.push_back(where + key);
      return {};
    }
    return n.Scalar();
  };

  ResultRecord r;
  r.experiment_id = str(doc, "experiment_id", "");
  r.guid = str(doc, "guid", "");
  if (const YAML::Node a = doc["assignments"]; a && a.IsMap()) {
    for (const auto& kv : a) r.assignments.emplace_back(kv.first.Scalar(), kv.second.Scalar());
  } else if (a && !a.IsNull()) {
    missing.push_back("assignments");
  }

  const YAML::Node prov = doc["provenance"];
  if (!prov || !prov.IsMap()) {
    missing.push_back("provenance.created_at");
  } else {
    for (auto [key, field] : {std::pair{"user", &r.provenance.user}, {"hostname", &r.provenance.hostname},
                              {"resource", &r.provenance.resource}, {"org", &r.provenance.org},
                              {"tool_version", &r.provenance.tool_version}})
      if (const YAML::Node n = prov[key]; n && n.IsScalar()) *field = n.Scalar();
    const auto created = str(prov, "created_at", "provenance.");
    if (!created.empty()) {
      try {
        r.provenance.created_at = parse_utc(created);
      } catch (const ValidationError&) {
        missing.push_back("provenance.created_at (malformed)");
      }
    }
  }

  if (const YAML::Node sys = doc["system"]; sys && sys.IsMap()) {
    for (auto [key, field] : {std::pair{"os_name", &r.system.os_name}, {"os_version", &r.system.os_version},
                              {"hostname", &r.system.hostname}, {"user", &r.system.user},
                              {"cpu_model", &r.system.cpu_model}, {"cpu_count", &r.system.cpu_count},
                              {"total_mem_bytes", &r.system.total_mem_bytes},
                              {"tool_version", &r.system.tool_version}})
      if (const YAML::Node n = sys[key]; n && n.IsScalar()) *field = n.Scalar();
    if (const YAML::Node n = sys["captured_at"]; n && n.IsScalar()) r.system.captured_at = parse_utc(n.Scalar());
  }

  try {
    for (const auto& t : doc["timers"])
      r.timers.push_back({t["name"].as<std::string>(), t["count"].as<std::size_t>(), t["total_s"].as<double>(),
                          t["mean_s"].as<double>(), t["min_s"].as<double>(), t["max_s"].as<double>()});
    for (const auto& kv : doc["metrics"]) r.metrics[kv.first.Scalar()] = kv.second.as<double>();
    for (const auto& a : doc["artifacts"]) r.artifacts.push_back(a.as<std::string>());
  } catch (const YAML::Exception& e) {
    missing.push_back(std::string("timers/metrics/artifacts: ") + e.what());
  }
  if (const YAML::Node lic = doc["license"]; lic && !lic.IsNull()) r.license = lic.Scalar();
  if (const YAML::Node h = doc["spec_hash"]; h && h.IsScalar()) r.spec_hash = h.Scalar();

  if (!missing.empty()) throw ValidationError("result record: missing or malformed fields: " + join(missing, ", "));
  return r;
}

// ---- predicates --------------------------------------------------------------

Predicate Predicate::parse(std::string_view text) {
  static const std::regex re(R"(^([A-Za-z_][A-Za-z0-9_]*)\s*(>=|<=|=)\s*(.*)$)");
  std::cmatch m;
  const std::string s(text);
  if (!std::regex_match(s.c_str(), m, re)) throw ValidationError("bad filter '" + s + "' (expected k=v, k=a..b, k>=v or k<=v)");
  Predicate p;
  p.key = m[1];
  const std::string op = m[2];
  p.value = trim(m[3].str());
  auto num = [&](std::string_view v) {
    auto d = to_number(trim(v));
    if (!d) throw ValidationError("bad filter '" + s + "': '" + std::string(v) + "' is not a number");
    return *d;
  };
  if (op == ">=") {
    p.op = Op::ge;
    p.lo = num(p.value);
  } else if (op == "<=") {
    p.op = Op::le;
    p.hi = num(p.value);
  } else if (auto dots = p.value.find(".."); dots != std::string::npos) {
    p.op = Op::range;
    p.lo = num(std::string_view(p.value).substr(0, dots));
    p.hi = num(std::string_view(p.value).substr(dots + 2));
  }
  return p;
}

bool Predicate::matches(const Assignments& a) const {
  auto it = std::find_if(a.begin(), a.end(), [&](const auto& kv) { return kv.first == key; });
  if (it == a.end()) return false;
  if (op == Op::eq) {
    if (it->second == value) return true;
    auto x = to_number(it->second), y = to_number(value);
    return x && y && *x == *y;
  }
  auto x = to_number(it->second);
  if (!x) return false;
  switch (op) {
    case Op::ge: return *x >= lo;
    case Op::le: return *x <= hi;
    case Op::range: return *x >= lo && *x <= hi;
    default: return false;
  }
}

// ---- repository --------------------------------------------------------------

std::string MergeReport::to_yaml() const {
  YAML::Emitter em;
  em << YAML::BeginMap;
  em << YAML::Key << "copied" << YAML::Value << copied.size();
  em << YAML::Key << "skipped" << YAML::Value << skipped.size();
  em << YAML::Key << "conflicts" << YAML::Value << YAML::BeginSeq;
  for (const auto& c : conflicts) {
    em << YAML::BeginMap;
    em << YAML::Key << "guid" << YAML::Value << c.guid;
    em << YAML::Key << "experiment_id" << YAML::Value << c.experiment_id;
    em << YAML::Key << "dest_sha256" << YAML::Value << c.dest_sha256;
    em << YAML::Key << "source_sha256" << YAML::Value << c.source_sha256;
    em << YAML::EndMap;
  }
  em << YAML::EndSeq;
  em << YAML::Key << "copied_guids" << YAML::Value << YAML::Flow << copied;
  em << YAML::EndMap;
  return std::string(em.c_str()) + "\n";
}

Repository::Repository(fs::path root, bool create) : root_(std::move(root)) {
  if (create) {
    fs::create_directories(root_ / "results");
  } else if (!fs::is_directory(root_)) {
    throw ValidationError("no results repository at " + root_.string());
  }
}

fs::path Repository::path_for(const std::string& experiment_id, const std::string& guid) const {
  return root_ / "results" / experiment_id / (guid + ".yaml");
}

std::vector<IndexEntry> Repository::index() const {
  std::vector<IndexEntry> out;
  auto text = try_read_file(root_ / "index.jsonl");
  if (!text) return out;
  for (const auto& line : split(*text, '\n')) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.at("experiment_id"), j.at("guid"), j.at("path"), j.value("created_at", "")});
  }
  return out;
}

void Repository::write_index(const std::vector<IndexEntry>& entries) const {
  std::string text;
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["experiment_id"] = e.experiment_id;
    j["guid"] = e.guid;
    j["path"] = e.path;
    j["created_at"] = e.created_at;
    text += j.dump() + "\n";
  }
  write_file_atomic(root_ / "index.jsonl", text);
}

std::string Repository::record(ResultRecord r) {
  if (r.provenance.created_at) r.provenance.created_at = floor_millis(*r.provenance.created_at);
  if (auto problems = validate_record(r); !problems.empty())
    throw ValidationError("result record: schema violation: " + join(problems, "; "));

  RepoLock lock(root_ / ".lock");
  auto entries = index();
  for (const auto& e : entries)
    if (e.guid == r.guid) throw ValidationError("result record: duplicate guid " + r.guid);
  const auto path = path_for(r.experiment_id, r.guid);
  if (fs::exists(path)) throw ValidationError("result record: duplicate guid " + r.guid);
  fs::create_directories(path.parent_path());
  write_file_atomic(path, record_to_yaml(r));
  entries.push_back({r.experiment_id, r.guid, fs::relative(path, root_).generic_string(), created_text(r)});
  write_index(entries);
  return r.guid;
}

std::vector<ResultRecord> Repository::records() const {
  std::vector<ResultRecord> out;
  for (const auto& e : index()) out.push_back(record_from_yaml(read_file(root_ / e.path)));
  return out;
}

std::optional<ResultRecord> Repository::find(const std::string& guid) const {
  for (const auto& e : index())
    if (e.guid == guid) return record_from_yaml(read_file(root_ / e.path));
  return std::nullopt;
}

QueryResult Repository::query(const std::vector<Predicate>& filter) const {
  QueryResult out;
  auto all = records();
  for (const auto& p : filter) {
    const bool known = std::any_of(all.begin(), all.end(), [&](const ResultRecord& r) {
      return std::any_of(r.assignments.begin(), r.assignments.end(), [&](const auto& kv) { return kv.first == p.key; });
    });
    if (!known) {
      out.warnings.push_back("unknown parameter '" + p.key + "'");
      return out;
    }
  }
  for (auto& r : all)
    if (std::all_of(filter.begin(), filter.end(), [&](const Predicate& p) { return p.matches(r.assignments); }))
      out.records.push_back(std::move(r));
  std::stable_sort(out.records.begin(), out.records.end(), [](const ResultRecord& a, const ResultRecord& b) {
    return a.provenance.created_at < b.provenance.created_at;
  });
  return out;
}

MergeReport merge(Repository& dest, const Repository& source) {
  if (::access(dest.root().c_str(), W_OK) != 0)
    throw Error(ErrorKind::generic, "merge: destination " + dest.root().string() + " is not writable");
  RepoLock lock(dest.root() / ".lock");

  MergeReport report;
  auto entries = dest.index();
  std::map<std::string, IndexEntry> by_guid;
  for (const auto& e : entries) by_guid[e.guid] = e;

  for (const auto& e : source.index()) {
    const auto bytes = read_file(source.root() / e.path);
    const auto rec = record_from_yaml(bytes);
    if (auto it = by_guid.find(e.guid); it != by_guid.end()) {
      const auto dest_bytes = read_file(dest.root() / it->second.path);
      if (record_to_yaml(record_from_yaml(dest_bytes)) == record_to_yaml(rec))
        report.skipped.push_back(e.guid);
      else
        report.conflicts.push_back({e.guid, rec.experiment_id, sha256_hex(dest_bytes), sha256_hex(bytes)});
      continue;
    }
    const auto path = dest.path_for(rec.experiment_id, rec.guid);
    fs::create_directories(path.parent_path());
    write_file_atomic(path, bytes);
    IndexEntry added{rec.experiment_id, rec.guid, fs::relative(path, dest.root()).generic_string(), created_text(rec)};
    entries.push_back(added);
    by_guid[rec.guid] = added;
    report.copied.push_back(rec.guid);
  }
  if (!report.copied.empty()) dest.write_index(entries);
  return report;
}

}  // namespace bench
