#pragma once

// Named timers with environment capture and multi-format summaries.
// Timestamps are truncated to microseconds when taken, so reports that
// carry them as integers round-trip exactly.

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "bench/util.hpp"

namespace bench {

struct TimerEvent {
  std::string name;
  TimePoint start;
  std::optional<TimePoint> stop;
  std::optional<std::string> status;
  std::map<std::string, std::string> context;

  /// Seconds; 0 while the event is open.
  double elapsed() const;
  std::int64_t elapsed_us() const;
  bool operator==(const TimerEvent&) const = default;
};

struct SystemInfo {
  std::string os_name = "unknown";
  std::string os_version = "unknown";
  std::string hostname = "unknown";
  std::string user = "unknown";
  std::string cpu_model = "unknown";
  std::string cpu_count = "unknown";
  std::string total_mem_bytes = "unknown";
  std::string tool_version = std::string(kToolVersion);
  TimePoint captured_at{};

  static SystemInfo capture(TimePoint now = Clock::now());
  /// Field name/value pairs in declaration order.
  std::vector<std::pair<std::string, std::string>> fields() const;
  bool operator==(const SystemInfo&) const = default;
};

struct TimerSummary {
  std::string name;
  std::size_t count = 0;
  std::int64_t total_us = 0;
  std::int64_t min_us = 0;
  std::int64_t max_us = 0;
  TimePoint first_start{};
  TimePoint last_stop{};

  double total() const { return total_us / 1e6; }
  double mean() const { return count ? total() / static_cast<double>(count) : 0.0; }
  double min() const { return min_us / 1e6; }
  double max() const { return max_us / 1e6; }
};

enum class ReportFormat { txt, csv, json, yaml, html };
std::optional<ReportFormat> report_format_from(std::string_view s);

struct MllogContext {
  std::string ns = "bench";
  std::map<std::string, std::string> metadata;
};

class Stopwatch {
 public:
  using ClockFn = std::function<TimePoint()>;

  explicit Stopwatch(ClockFn clock = nullptr, std::optional<SystemInfo> system = std::nullopt);

  /// Throws ValidationError if `name` is empty or already running.
  void start(const std::string& name, std::map<std::string, std::string> context = {});
  /// Throws ValidationError naming the timer if it is not running.
  TimerEvent stop(const std::string& name, std::optional<std::string> status = std::nullopt);

  /// Closed events in start order.
  std::vector<TimerEvent> events() const;
  /// One entry per timer name, in order of first start.
  std::vector<TimerSummary> summary() const;
  const SystemInfo& system() const { return system_; }

  std::string report(ReportFormat format) const;
  /// `:::MLLOG {json}` lines, two per closed event, sorted by time_ms.
  std::vector<std::string> mllog_export(const MllogContext& ctx = {}) const;

 private:
  TimePoint now() const;

  ClockFn clock_;
  SystemInfo system_;
  mutable std::mutex mutex_;
  std::map<std::string, std::pair<std::uint64_t, TimerEvent>> open_;
  std::vector<std::pair<std::uint64_t, TimerEvent>> closed_;
  std::uint64_t sequence_ = 0;
};

std::vector<TimerSummary> summarize(const std::vector<TimerEvent>& events);

/// Readers for the lossless report formats.
std::vector<TimerEvent> events_from_json(std::string_view text);
std::vector<TimerEvent> events_from_yaml(std::string_view text);

}  // namespace bench
