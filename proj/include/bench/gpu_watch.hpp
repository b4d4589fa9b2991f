#pragma once

// Periodic GPU sampling into csv rows:
//   ts,gpu,util_pct,mem_used,power_w,temp_c
// The sampler is any command printing "util, mem, power, temp" on its first
// output line; "{gpu}" in its argv is replaced by the GPU index.

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <stop_token>
#include <string>
#include <vector>

#include "bench/command_runner.hpp"
#include "bench/util.hpp"

namespace bench {

std::vector<std::string> default_gpu_sampler();

struct GpuSample {
  TimePoint ts;
  int gpu = 0;
  std::string util_pct = "unknown";
  std::string mem_used = "unknown";
  std::string power_w = "unknown";
  std::string temp_c = "unknown";

  /// Equality of the measured values only (timestamps ignored).
  bool same_values(const GpuSample& o) const;
  std::string csv_row() const;
  std::string json_line() const;
};

inline constexpr std::string_view kGpuCsvHeader = "ts,gpu,util_pct,mem_used,power_w,temp_c";

/// Parses sampler output; nullopt if the first line does not hold four fields.
std::optional<GpuSample> parse_gpu_sample(std::string_view text, int gpu, TimePoint ts);

struct GpuWatchOptions {
  std::vector<std::string> sampler = default_gpu_sampler();
  int gpu = 0;
  double delay_seconds = 1.0;
  bool dense = false;
  /// One JSON object per line instead of csv (no header).
  bool json_lines = false;
  /// Stop after this many seconds of (possibly injected) clock time.
  std::optional<double> duration_seconds;
  std::shared_ptr<CommandRunner> runner;
  std::function<TimePoint()> clock;
  std::function<void(std::chrono::duration<double>)> sleep;
};

struct GpuWatchStats {
  std::size_t samples = 0;
  std::size_t rows = 0;
  std::size_t failures = 0;
};

/// Writes the header and then one row per sample until `stop` is requested or
/// the duration elapses. Throws Error before sampling if the sampler
/// executable cannot be found.
GpuWatchStats gpu_watch(const GpuWatchOptions& opts, std::ostream& out, std::stop_token stop = {});

}  // namespace bench
