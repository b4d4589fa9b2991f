#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bench {

using Clock = std::chrono::system_clock;
using TimePoint = Clock::time_point;

inline constexpr std::string_view kToolVersion = "1.0.0";

// strings
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool is_identifier(std::string_view s);

// UTC time, ISO-8601
std::string format_utc(TimePoint t);         // 2025-01-01T00:00:00Z
std::string format_utc_millis(TimePoint t);  // 2025-01-01T00:00:00.123Z
TimePoint parse_utc(std::string_view iso);   // throws ValidationError
std::int64_t epoch_millis(TimePoint t);

// files
std::string read_file(const std::filesystem::path& p);
std::optional<std::string> try_read_file(const std::filesystem::path& p);
/// Writes via a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& p, std::string_view content);
void append_file(const std::filesystem::path& p, std::string_view content);

std::string sha256_hex(std::string_view data);
std::string uuid_v4();
bool is_uuid_v4(std::string_view s);

std::string shell_quote(std::string_view s);

}  // namespace bench
