#include "bench/stopwatch.hpp"

#include <sys/utsname.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "bench/error.hpp"

namespace bench {

namespace {

using std::chrono::microseconds;

TimePoint to_micros(TimePoint t) { return std::chrono::time_point_cast<microseconds>(t); }

std::int64_t epoch_micros(TimePoint t) {
  return std::chrono::duration_cast<microseconds>(t.time_since_epoch()).count();
}

TimePoint from_epoch_micros(std::int64_t us) { return TimePoint(microseconds(us)); }

std::string seconds(std::int64_t us) { return fmt::format("{:.6f}", us / 1e6); }

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const std::vector<std::string> kColumns = {"timer", "count", "total_s", "mean_s", "min_s", "max_s", "first_start",
                                           "last_stop"};

std::vector<std::string> summary_cells(const TimerSummary& s) {
  return {s.name,
          std::to_string(s.count),
          fmt::format("{:.3f}", s.total()),
          fmt::format("{:.3f}", s.mean()),
          fmt::format("{:.3f}", s.min()),
          fmt::format("{:.3f}", s.max()),
          format_utc_millis(s.first_start),
          format_utc_millis(s.last_stop)};
}

nlohmann::ordered_json event_json(const TimerEvent& e) {
  nlohmann::ordered_json j;
  j["name"] = e.name;
  j["start"] = format_utc_millis(e.start);
  j["start_us"] = epoch_micros(e.start);
  if (e.stop) {
    j["stop"] = format_utc_millis(*e.stop);
    j["stop_us"] = epoch_micros(*e.stop);
  } else {
    j["stop"] = nullptr;
    j["stop_us"] = nullptr;
  }
  j["elapsed_s"] = e.elapsed();
  j["status"] = e.status ? nlohmann::ordered_json(*e.status) : nlohmann::ordered_json(nullptr);
  j["context"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : e.context) j["context"][k] = v;
  return j;
}

nlohmann::ordered_json summary_json(const TimerSummary& s) {
  nlohmann::ordered_json j;
  j["name"] = s.name;
  j["count"] = s.count;
  j["total_s"] = s.total();
  j["mean_s"] = s.mean();
  j["min_s"] = s.min();
  j["max_s"] = s.max();
  j["first_start"] = format_utc_millis(s.first_start);
  j["last_stop"] = format_utc_millis(s.last_stop);
  return j;
}

std::string read_first_match(const char* path, std::string_view key) {
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key, 0) != 0) continue;
    auto colon = line.find(':');
    if (colon != std::string::npos) return trim(line.substr(colon + 1));
  }
  return "";
}

}  // namespace

double TimerEvent::elapsed() const { return elapsed_us() / 1e6; }

std::int64_t TimerEvent::elapsed_us() const {
  if (!stop) return 0;
  return std::chrono::duration_cast<microseconds>(*stop - start).count();
}

SystemInfo SystemInfo::capture(TimePoint now) {
  SystemInfo info;
  info.captured_at = to_micros(now);
  struct utsname u {};
  if (uname(&u) == 0) {
    info.os_name = u.sysname;
    info.os_version = u.release;
    info.hostname = u.nodename;
  }
  char host[256] = {};
  if (gethostname(host, sizeof host - 1) == 0 && host[0]) info.hostname = host;
  if (const char* user = std::getenv("USER"); user && *user) info.user = user;
  if (auto model = read_first_match("/proc/cpuinfo", "model name"); !model.empty()) info.cpu_model = model;
  if (auto n = std::thread::hardware_concurrency(); n > 0) info.cpu_count = std::to_string(n);
  const long pages = sysconf(_SC_PHYS_PAGES), page = sysconf(_SC_PAGE_SIZE);
  if (pages > 0 && page > 0) info.total_mem_bytes = std::to_string(static_cast<std::uint64_t>(pages) * page);
  return info;
}

std::vector<std::pair<std::string, std::string>> SystemInfo::fields() const {
  return {{"os_name", os_name},
          {"os_version", os_version},
          {"hostname", hostname},
          {"user", user},
          {"cpu_model", cpu_model},
          {"cpu_count", cpu_count},
          {"total_mem_bytes", total_mem_bytes},
          {"tool_version", tool_version},
          {"captured_at", format_utc_millis(captured_at)}};
}

std::optional<ReportFormat> report_format_from(std::string_view s) {
  if (s == "txt") return ReportFormat::txt;
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  if (s == "yaml") return ReportFormat::yaml;
  if (s == "html") return ReportFormat::html;
  return std::nullopt;
}

Stopwatch::Stopwatch(ClockFn clock, std::optional<SystemInfo> system)
    : clock_(clock ? std::move(clock) : ClockFn([] { return Clock::now(); })),
      system_(system ? *system : SystemInfo::capture(clock_())) {}

TimePoint Stopwatch::now() const { return to_micros(clock_()); }

void Stopwatch::start(const std::string& name, std::map<std::string, std::string> context) {
  if (name.empty()) throw ValidationError("timer name must not be empty");
  const auto t = now();
  std::lock_guard lock(mutex_);
  if (open_.count(name)) throw ValidationError("timer '" + name + "' is already running");
  open_[name] = {sequence_++, TimerEvent{name, t, std::nullopt, std::nullopt, std::move(context)}};
}

TimerEvent Stopwatch::stop(const std::string& name, std::optional<std::string> status) {
  const auto t = now();
  std::lock_guard lock(mutex_);
  auto it = open_.find(name);
  if (it == open_.end()) throw ValidationError("timer '" + name + "' was stopped without being started");
  auto [seq, event] = std::move(it->second);
  open_.erase(it);
  event.stop = std::max(t, event.start);
  event.status = std::move(status);
  closed_.emplace_back(seq, event);
  return event;
}

std::vector<TimerEvent> Stopwatch::events() const {
  std::vector<std::pair<std::uint64_t, TimerEvent>> copy;
  {
    std::lock_guard lock(mutex_);
    copy = closed_;
  }
  std::sort(copy.begin(), copy.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<TimerEvent> out;
  for (auto& [seq, e] : copy) out.push_back(std::move(e));
  return out;
}

std::vector<TimerSummary> summarize(const std::vector<TimerEvent>& events) {
  std::vector<TimerSummary> out;
  for (const auto& e : events) {
    if (!e.stop) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const TimerSummary& s) { return s.name == e.name; });
    const auto us = e.elapsed_us();
    if (it == out.end()) {
      out.push_back(TimerSummary{e.name, 1, us, us, us, e.start, *e.stop});
      continue;
    }
    ++it->count;
    it->total_us += us;
    it->min_us = std::min(it->min_us, us);
    it->max_us = std::max(it->max_us, us);
    it->first_start = std::min(it->first_start, e.start);
    it->last_stop = std::max(it->last_stop, *e.stop);
  }
  return out;
}

std::vector<TimerSummary> Stopwatch::summary() const { return summarize(events()); }

std::string Stopwatch::report(ReportFormat format) const {
  const auto evs = events();
  const auto rows = summarize(evs);
  switch (format) {
    case ReportFormat::txt: {
      std::vector<std::vector<std::string>> table{kColumns};
      for (const auto& s : rows) table.push_back(summary_cells(s));
      std::vector<std::size_t> width(kColumns.size(), 0);
      for (const auto& r : table)
        for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
      std::string out;
      for (const auto& r : table) {
        std::string line;
        for (std::size_t i = 0; i < r.size(); ++i) {
          if (i) line += "  ";
          // name and timestamps left-aligned, numbers right-aligned
          const bool left = i == 0 || i >= 6;
          line += left ? fmt::format("{:<{}}", r[i], width[i]) : fmt::format("{:>{}}", r[i], width[i]);
        }
        out += line.substr(0, line.find_last_not_of(' ') + 1) + "\n";
      }
      out += "\nsystem\n";
      std::size_t kw = 0;
      for (const auto& [k, v] : system_.fields()) kw = std::max(kw, k.size());
      for (const auto& [k, v] : system_.fields()) out += fmt::format("  {:<{}}  {}\n", k, kw, v);
      return out;
    }
    case ReportFormat::csv: {
      std::string out = join(kColumns, ",") + "\r\n";
      for (const auto& s : rows) {
        auto cells = summary_cells(s);
        cells[2] = seconds(s.total_us);
        cells[3] = fmt::format("{:.6f}", s.mean());
        cells[4] = seconds(s.min_us);
        cells[5] = seconds(s.max_us);
        for (auto& c : cells) c = csv_field(c);
        out += join(cells, ",") + "\r\n";
      }
      out += "\r\nkey,value\r\n";
      for (const auto& [k, v] : system_.fields()) out += csv_field(k) + "," + csv_field(v) + "\r\n";
      return out;
    }
    case ReportFormat::json: {
      nlohmann::ordered_json j;
      j["system"] = nlohmann::ordered_json::object();
      for (const auto& [k, v] : system_.fields()) j["system"][k] = v;
      j["timers"] = nlohmann::ordered_json::array();
      for (const auto& s : rows) j["timers"].push_back(summary_json(s));
      j["events"] = nlohmann::ordered_json::array();
      for (const auto& e : evs) j["events"].push_back(event_json(e));
      return j.dump(2) + "\n";
    }
    case ReportFormat::yaml: {
      YAML::Emitter em;
      em << YAML::BeginMap << YAML::Key << "system" << YAML::Value << YAML::BeginMap;
      for (const auto& [k, v] : system_.fields()) em << YAML::Key << k << YAML::Value << YAML::DoubleQuoted << v;
      em << YAML::EndMap << YAML::Key << "timers" << YAML::Value << YAML::BeginSeq;
      for (const auto& s : rows) {
        em << YAML::BeginMap;
        em << YAML::Key << "name" << YAML::Value << YAML::DoubleQuoted << s.name;
        em << YAML::Key << "count" << YAML::Value << s.count;
        em << YAML::Key << "total_s" << YAML::Value << seconds(s.total_us);
        em << YAML::Key << "mean_s" << YAML::Value << fmt::format("{:.6f}", s.mean());
        em << YAML::Key << "min_s" << YAML::Value << seconds(s.min_us);
        em << YAML::Key << "max_s" << YAML::Value << seconds(s.max_us);
        em << YAML::Key << "first_start" << YAML::Value << format_utc_millis(s.first_start);
        em << YAML::Key << "last_stop" << YAML::Value << format_utc_millis(s.last_stop);
        em << YAML::EndMap;
      }
      em << YAML::EndSeq << YAML::Key << "events" << YAML::Value << YAML::BeginSeq;
      for (const auto& e : evs) {
        em << YAML::BeginMap;
        em << YAML::Key << "name" << YAML::Value << YAML::DoubleQuoted << e.name;
        em << YAML::Key << "start_us" << YAML::Value << epoch_micros(e.start);
        em << YAML::Key << "stop_us" << YAML::Value;
        if (e.stop) em << epoch_micros(*e.stop); else em << YAML::Null;
        em << YAML::Key << "elapsed_s" << YAML::Value << seconds(e.elapsed_us());
        em << YAML::Key << "status" << YAML::Value;
        if (e.status) em << YAML::DoubleQuoted << *e.status; else em << YAML::Null;
        em << YAML::Key << "context" << YAML::Value << YAML::BeginMap;
        for (const auto& [k, v] : e.context) em << YAML::Key << k << YAML::Value << YAML::DoubleQuoted << v;
        em << YAML::EndMap << YAML::EndMap;
      }
      em << YAML::EndSeq << YAML::EndMap;
      return std::string(em.c_str()) + "\n";
    }
    case ReportFormat::html: {
      std::string out = "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>timers</title>\n</head>\n<body>\n";
      out += "<table class=\"timers\">\n<tr>";
      for (const auto& c : kColumns) out += "<th>" + c + "</th>";
      out += "</tr>\n";
      for (const auto& s : rows) {
        out += "<tr>";
        for (const auto& c : summary_cells(s)) out += "<td>" + html_escape(c) + "</td>";
        out += "</tr>\n";
      }
      out += "</table>\n<table class=\"system\">\n";
      for (const auto& [k, v] : system_.fields())
        out += "<tr><th>" + html_escape(k) + "</th><td>" + html_escape(v) + "</td></tr>\n";
      out += "</table>\n</body>\n</html>\n";
      return out;
    }
  }
  return {};
}

std::vector<std::string> Stopwatch::mllog_export(const MllogContext& ctx) const {
  struct Line {
    std::int64_t time_ms;
    std::string text;
  };
  std::vector<Line> lines;
  for (const auto& e : events()) {
    if (!e.stop) continue;
    auto boundary = [&](std::string_view type, TimePoint t) {
      nlohmann::ordered_json j;
      j["namespace"] = ctx.ns;
      j["time_ms"] = epoch_millis(t);
      j["event_type"] = type;
      j["key"] = e.name;
      if (type == "INTERVAL_END")
        j["value"] = e.status ? nlohmann::ordered_json(*e.status) : nlohmann::ordered_json(nullptr);
      else
        j["value"] = nullptr;
      nlohmann::ordered_json meta = nlohmann::ordered_json::object();
      for (const auto& [k, v] : ctx.metadata) meta[k] = v;
      for (const auto& [k, v] : e.context) meta[k] = v;
      if (type == "INTERVAL_END") meta["elapsed_s"] = e.elapsed();
      j["metadata"] = meta;
      lines.push_back({epoch_millis(t), ":::MLLOG " + j.dump()});
    };
    boundary("INTERVAL_START", e.start);
    boundary("INTERVAL_END", *e.stop);
  }
  std::stable_sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) { return a.time_ms < b.time_ms; });
  std::vector<std::string> out;
  for (auto& l : lines) out.push_back(std::move(l.text));
  return out;
}

std::vector<TimerEvent> events_from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  std::vector<TimerEvent> out;
  for (const auto& e : j.at("events")) {
    TimerEvent ev;
    ev.name = e.at("name").get<std::string>();
    ev.start = from_epoch_micros(e.at("start_us").get<std::int64_t>());
    if (!e.at("stop_us").is_null()) ev.stop = from_epoch_micros(e.at("stop_us").get<std::int64_t>());
    if (!e.at("status").is_null()) ev.status = e.at("status").get<std::string>();
    for (const auto& [k, v] : e.at("context").items()) ev.context[k] = v.get<std::string>();
    out.push_back(std::move(ev));
  }
  return out;
}

std::vector<TimerEvent> events_from_yaml(std::string_view text) {
  const YAML::Node doc = YAML::Load(std::string(text));
  std::vector<TimerEvent> out;
  for (const auto& e : doc["events"]) {
    TimerEvent ev;
    ev.name = e["name"].as<std::string>();
    ev.start = from_epoch_micros(e["start_us"].as<std::int64_t>());
    if (!e["stop_us"].IsNull()) ev.stop = from_epoch_micros(e["stop_us"].as<std::int64_t>());
    if (!e["status"].IsNull()) ev.status = e["status"].as<std::string>();
    for (const auto& kv : e["context"]) ev.context[kv.first.as<std::string>()] = kv.second.as<std::string>();
    out.push_back(std::move(ev));
  }
  return out;
}

}  // namespace bench
