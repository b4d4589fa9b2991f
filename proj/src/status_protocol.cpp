#include "bench/status_protocol.hpp"

#include <regex>

#include <fmt/format.h>

#include "bench/error.hpp"

namespace bench {

namespace {

constexpr RecordState kAllStates[] = {RecordState::ready,   RecordState::submitted, RecordState::pending,
                                      RecordState::running, RecordState::done,      RecordState::failed,
                                      RecordState::cancelled};

bool has_space(std::string_view s) { return s.find_first_of(" \t\r\n\"") != std::string_view::npos; }

std::string escape_message(std::string_view m) {
  std::string out;
  for (char c : m) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

std::string unescape_message(std::string_view m) {
  std::string out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] == '\\' && i + 1 < m.size()) ++i;
    out += m[i];
  }
  return out;
}

}  // namespace

std::string_view to_string(RecordState s) {
  switch (s) {
    case RecordState::ready: return "ready";
    case RecordState::submitted: return "submitted";
    case RecordState::pending: return "pending";
    case RecordState::running: return "running";
    case RecordState::done: return "done";
    case RecordState::failed: return "failed";
    case RecordState::cancelled: return "cancelled";
  }
  return "?";
}

std::optional<RecordState> record_state_from(std::string_view s) {
  for (auto st : kAllStates)
    if (to_string(st) == s) return st;
  return std::nullopt;
}

bool is_terminal(RecordState s) {
  return s == RecordState::done || s == RecordState::failed || s == RecordState::cancelled;
}

std::string emit(const StatusRecord& r) {
  if (r.progress < 0 || r.progress > 100)
    throw ValidationError(fmt::format("progress {} outside [0,100]", r.progress));
  if (r.message.find_first_of("\r\n") != std::string::npos)
    throw ValidationError("status message must not contain a newline");
  if (r.resource.empty() || has_space(r.resource)) throw ValidationError("bad resource name '" + r.resource + "'");
  if (r.name.empty() || has_space(r.name)) throw ValidationError("bad job name '" + r.name + "'");
  return fmt::format("{}ts={} resource={} name={} status={} progress={} msg=\"{}\"", kStatusMarker,
                     format_utc(r.timestamp), r.resource, r.name, to_string(r.state), r.progress,
                     escape_message(r.message));
}

std::optional<StatusRecord> parse_status_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  if (line.substr(0, kStatusMarker.size()) != kStatusMarker) return std::nullopt;
  static const std::regex re(
      R"re(# cmstatus ts=(\S+) resource=(\S+) name=(\S+) status=(\S+) progress=(\d{1,3}) msg="((?:[^"\\]|\\.)*)")re");
  std::cmatch m;
  if (!std::regex_match(line.begin(), line.end(), m, re))
    throw ValidationError("malformed status line: " + std::string(line));
  StatusRecord r;
  r.timestamp = parse_utc(m[1].str());
  r.resource = m[2].str();
  r.name = m[3].str();
  auto st = record_state_from(m[4].str());
  if (!st) throw ValidationError("unknown status '" + m[4].str() + "'");
  r.state = *st;
  r.progress = std::stoi(m[5].str());
  if (r.progress > 100) throw ValidationError("progress out of range: " + m[5].str());
  r.message = unescape_message(m[6].str());
  return r;
}

StatusScan parse_all(std::string_view stream) {
  StatusScan scan;
  std::size_t start = 0;
  while (start < stream.size()) {
    const auto nl = stream.find('\n', start);
    if (nl == std::string_view::npos) break;  // torn tail
    const auto line = stream.substr(start, nl - start);
    start = nl + 1;
    try {
      if (auto r = parse_status_line(line)) scan.records.push_back(std::move(*r));
    } catch (const ValidationError& e) {
      scan.warnings.emplace_back(e.what());
    }
  }
  return scan;
}

std::optional<StatusRecord> parse_latest(std::string_view stream, std::vector<std::string>* warnings) {
  auto scan = parse_all(stream);
  if (warnings) warnings->insert(warnings->end(), scan.warnings.begin(), scan.warnings.end());
  std::optional<StatusRecord> best;
  for (auto& r : scan.records)
    if (!best || r.timestamp >= best->timestamp) best = std::move(r);
  return best;
}

std::string shell_helper() {
  return R"SH(# status reporting helper; safe to source more than once
cm_status() {
  _cm_state="$1"
  _cm_progress="${2:-0}"
  if [ $# -ge 2 ]; then shift 2; else shift $#; fi
  _cm_msg=$(printf '%s' "$*" | tr '\r\n' '  ' | sed -e 's/\\/\\\\/g' -e 's/"/\\"/g')
  _cm_line="# cmstatus ts=$(date -u +%Y-%m-%dT%H:%M:%SZ) resource=${CM_STATUS_RESOURCE:-$(hostname)} name=${CM_STATUS_NAME:-job} status=${_cm_state} progress=${_cm_progress} msg=\"${_cm_msg}\""
  printf '%s\n' "$_cm_line"
  if [ -n "${CM_STATUS_FILE:-}" ]; then
    printf '%s\n' "$_cm_line" >> "$CM_STATUS_FILE"
  fi
}
)SH";
}

}  // namespace bench
