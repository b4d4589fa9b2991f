#pragma once

// Append-only status files. One record per line:
//   # cmstatus ts=<iso> resource=<r> name=<n> status=<s> progress=<p> msg="<m>"
// Lines without the marker are ignored, so records can be interleaved with
// arbitrary job output.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bench/util.hpp"

namespace bench {

enum class RecordState { ready, submitted, pending, running, done, failed, cancelled };

std::string_view to_string(RecordState s);
std::optional<RecordState> record_state_from(std::string_view s);
bool is_terminal(RecordState s);

struct StatusRecord {
  TimePoint timestamp;
  std::string resource;
  std::string name;
  RecordState state = RecordState::ready;
  int progress = 0;
  std::string message;

  bool operator==(const StatusRecord&) const = default;
};

inline constexpr std::string_view kStatusMarker = "# cmstatus ";

/// Throws ValidationError for progress outside [0,100], a newline in the
/// message, or whitespace in resource/name. No trailing newline.
std::string emit(const StatusRecord& record);

/// nullopt when the line is not a status line. Throws ValidationError when
/// the line carries the marker but does not follow the grammar.
std::optional<StatusRecord> parse_status_line(std::string_view line);

struct StatusScan {
  std::vector<StatusRecord> records;
  std::vector<std::string> warnings;
};

/// All well-formed records in file order. A final line without a trailing
/// newline is treated as torn and dropped.
StatusScan parse_all(std::string_view stream);

/// Greatest timestamp wins; ties go to the later line.
std::optional<StatusRecord> parse_latest(std::string_view stream, std::vector<std::string>* warnings = nullptr);

/// POSIX sh function `cm_status <state> <progress> [msg...]`. Honors
/// CM_STATUS_FILE, CM_STATUS_RESOURCE and CM_STATUS_NAME.
std::string shell_helper();

}  // namespace bench
