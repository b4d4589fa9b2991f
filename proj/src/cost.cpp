#include "bench/cost.hpp"

#include <algorithm>
#include <regex>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "bench/error.hpp"
#include "bench/util.hpp"

namespace bench {

namespace {

using boost::multiprecision::cpp_int;

cpp_int pow10(int n) {
  cpp_int p = 1;
  for (int i = 0; i < n; ++i) p *= 10;
  return p;
}

YAML::Node load(std::string_view text) {
  try {
    return YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ParseError(e.msg, e.mark.line + 1, e.mark.column + 1);
  }
}

/// First present key among the aliases.
YAML::Node field(const YAML::Node& map, std::initializer_list<const char*> keys) {
  for (const char* k : keys)
    if (const YAML::Node n = map[k]) return n;
  return YAML::Node();
}

Money decimal_field(const YAML::Node& map, std::initializer_list<const char*> keys, const std::string& where,
                    std::optional<Money> fallback = std::nullopt) {
  const YAML::Node n = field(map, keys);
  if (!n) {
    if (fallback) return *fallback;
    throw ValidationError(where + ": missing " + *keys.begin());
  }
  if (!n.IsScalar()) throw ValidationError(where + ": " + *keys.begin() + " must be a number");
  return parse_decimal(n.Scalar());
}

std::int64_t count_field(const YAML::Node& map, std::initializer_list<const char*> keys, const std::string& where,
                         std::optional<std::int64_t> fallback = std::nullopt) {
  const YAML::Node n = field(map, keys);
  if (!n) {
    if (fallback) return *fallback;
    throw ValidationError(where + ": missing " + *keys.begin());
  }
  static const std::regex re(R"(^\d+$)");
  if (!n.IsScalar() || !std::regex_match(n.Scalar(), re))
    throw ValidationError(where + ": " + *keys.begin() + " must be a non-negative integer");
  return std::stoll(n.Scalar());
}

YAML::Node entries(const YAML::Node& doc, const char* key) {
  if (doc.IsSequence()) return doc;
  if (doc.IsMap()) {
    if (const YAML::Node n = doc[key]; n && n.IsSequence()) return n;
    YAML::Node single(YAML::NodeType::Sequence);
    single.push_back(doc);
    return single;
  }
  throw ValidationError(std::string("expected a list of ") + key);
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string render_rows(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w;
  for (const auto& r : rows) {
    w.resize(std::max(w.size(), r.size()), 0);
    for (std::size_t i = 0; i < r.size(); ++i) w[i] = std::max(w[i], r[i].size());
  }
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) line += "  ";
      line += i == 0 ? fmt::format("{:<{}}", r[i], w[i]) : fmt::format("{:>{}}", r[i], w[i]);
    }
    out += line.substr(0, line.find_last_not_of(' ') + 1) + "\n";
  }
  return out;
}

}  // namespace

Money parse_decimal(std::string_view text) {
  static const std::regex re(R"(^\s*\$?(\d+)(?:\.(\d+))?\s*$)");
  std::cmatch m;
  const std::string s(text);
  if (!std::regex_match(s.c_str(), m, re)) throw ValidationError("'" + s + "' is not a non-negative decimal");
  const std::string frac = m[2].matched ? m[2].str() : "";
  const cpp_int whole(m[1].str()), part = frac.empty() ? cpp_int(0) : cpp_int(frac);
  return Money(whole) + Money(part, pow10(static_cast<int>(frac.size())));
}

std::string format_decimal(const Money& v, int places) {
  const bool negative = v < 0;
  const Money scaled = (negative ? Money(-v) : v) * Money(pow10(places));
  const cpp_int num = boost::multiprecision::numerator(scaled), den = boost::multiprecision::denominator(scaled);
  const cpp_int rounded = (2 * num + den) / (2 * den);
  const cpp_int unit = pow10(places);
  std::string out = (negative && rounded != 0 ? "-" : "") + cpp_int(rounded / unit).str();
  if (places > 0) {
    std::string frac = cpp_int(rounded % unit).str();
    out += "." + std::string(places - frac.size(), '0') + frac;
  }
  return out;
}

double to_double(const Money& v) { return v.convert_to<double>(); }

void CostScenario::validate() const {
  if (controller_fee_per_hour < 0 || node_mgmt_fee_per_hour < 0 || instance_cost_per_hour < 0 || node_count < 0)
    throw ValidationError("scenario '" + name + "': values must be non-negative");
  if (gpus_per_node < 0) throw ValidationError("scenario '" + name + "': gpus_per_node must be non-negative");
}

void RunPlan::validate() const {
  if (repeats < 1) throw ValidationError("plan '" + name + "': repeats must be >= 1");
  if (avg_duration_minutes <= 0) throw ValidationError("plan '" + name + "': duration must be > 0");
}

Money hourly_cost(const CostScenario& s) {
  return s.controller_fee_per_hour + Money(s.node_count) * (s.node_mgmt_fee_per_hour + s.instance_cost_per_hour);
}

Money per_gpu_hour(const CostScenario& s) {
  if (s.node_count == 0) throw ValidationError("scenario '" + s.name + "': per-GPU cost undefined for 0 nodes");
  if (s.gpus_per_node < 1) throw ValidationError("scenario '" + s.name + "': per-GPU cost needs gpus_per_node >= 1");
  return hourly_cost(s) / Money(s.node_count * s.gpus_per_node);
}

Money run_cost(const CostScenario& s, const RunPlan& p) { return hourly_cost(s) * p.total_minutes() / 60; }

std::vector<CostScenario> parse_scenarios(std::string_view yaml) {
  std::vector<CostScenario> out;
  const YAML::Node list = entries(load(yaml), "scenarios");
  for (std::size_t i = 0; i < list.size(); ++i) {
    const YAML::Node e = list[i];
    if (!e.IsMap()) throw ValidationError("scenario " + std::to_string(i) + ": expected a mapping");
    CostScenario s;
    s.name = e["name"] ? e["name"].as<std::string>() : "scenario-" + std::to_string(i + 1);
    const auto where = "scenario '" + s.name + "'";
    s.controller_fee_per_hour = decimal_field(e, {"controller_fee_per_hour", "C"}, where);
    s.node_count = count_field(e, {"node_count", "N"}, where);
    s.node_mgmt_fee_per_hour = decimal_field(e, {"node_mgmt_fee_per_hour", "M"}, where);
    s.instance_cost_per_hour = decimal_field(e, {"instance_cost_per_hour", "I"}, where);
    s.gpus_per_node = count_field(e, {"gpus_per_node", "gpus"}, where, 1);
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<RunPlan> parse_plans(std::string_view yaml) {
  std::vector<RunPlan> out;
  const YAML::Node list = entries(load(yaml), "plans");
  for (std::size_t i = 0; i < list.size(); ++i) {
    const YAML::Node e = list[i];
    if (!e.IsMap()) throw ValidationError("plan " + std::to_string(i) + ": expected a mapping");
    RunPlan p;
    p.name = e["name"] ? e["name"].as<std::string>() : "plan-" + std::to_string(i + 1);
    const auto where = "plan '" + p.name + "'";
    if (e["scenario"]) p.scenario = e["scenario"].as<std::string>();
    p.avg_duration_minutes = decimal_field(e, {"avg_duration_minutes", "minutes"}, where);
    p.repeats = count_field(e, {"repeats"}, where, 1);
    p.validate();
    out.push_back(std::move(p));
  }
  return out;
}

std::optional<CostFormat> cost_format_from(std::string_view s) {
  if (s == "table") return CostFormat::table;
  if (s == "csv") return CostFormat::csv;
  if (s == "json") return CostFormat::json;
  return std::nullopt;
}

Estimate estimate(const std::vector<CostScenario>& scenarios, const std::vector<RunPlan>& plans,
                  const std::optional<Money>& limit, CostFormat format) {
  auto scenario_for = [&](const RunPlan& p) -> const CostScenario& {
    if (p.scenario.empty()) {
      if (scenarios.size() == 1) return scenarios.front();
      throw ValidationError("plan '" + p.name + "' must name a scenario");
    }
    auto it = std::find_if(scenarios.begin(), scenarios.end(), [&](const auto& s) { return s.name == p.scenario; });
    if (it == scenarios.end()) throw ValidationError("plan '" + p.name + "': unknown scenario '" + p.scenario + "'");
    return *it;
  };

  Estimate est;
  std::vector<std::vector<std::string>> srows{
      {"scenario", "nodes", "gpus", "I", "C", "M", "hourly_usd", "per_gpu_hour_usd"}};
  for (const auto& s : scenarios) {
    const std::string per_gpu =
        s.node_count > 0 && s.gpus_per_node > 0 ? format_decimal(per_gpu_hour(s)) : std::string("-");
    srows.push_back({s.name, std::to_string(s.node_count), std::to_string(s.node_count * s.gpus_per_node),
                     format_decimal(s.instance_cost_per_hour), format_decimal(s.controller_fee_per_hour),
                     format_decimal(s.node_mgmt_fee_per_hour), format_decimal(hourly_cost(s)), per_gpu});
  }
  std::vector<std::vector<std::string>> prows{
      {"plan", "scenario", "nodes", "avg_minutes", "repeats", "total_minutes", "cost_usd"}};
  for (const auto& p : plans) {
    const auto& s = scenario_for(p);
    const Money cost = run_cost(s, p);
    est.total += cost;
    prows.push_back({p.name, s.name, std::to_string(s.node_count), format_decimal(p.avg_duration_minutes),
                     std::to_string(p.repeats), format_decimal(p.total_minutes()), format_decimal(cost)});
  }
  est.over_budget = limit && est.total > *limit;

  switch (format) {
    case CostFormat::table:
      est.text = render_rows(srows);
      if (!plans.empty()) {
        est.text += "\n" + render_rows(prows);
        est.text += "\ntotal_usd: " + format_decimal(est.total) + "\n";
      }
      if (limit)
        est.text += "limit_usd: " + format_decimal(*limit) + (est.over_budget ? " (over budget)\n" : " (ok)\n");
      break;
    case CostFormat::csv: {
      auto emit = [](const std::vector<std::vector<std::string>>& rows) {
        std::string out;
        for (const auto& r : rows) {
          std::vector<std::string> cells;
          for (const auto& c : r) cells.push_back(csv_cell(c));
          out += join(cells, ",") + "\r\n";
        }
        return out;
      };
      est.text = emit(srows);
      if (!plans.empty()) est.text += "\r\n" + emit(prows);
      break;
    }
    case CostFormat::json: {
      nlohmann::ordered_json j;
      j["scenarios"] = nlohmann::ordered_json::array();
      for (const auto& s : scenarios) {
        nlohmann::ordered_json row;
        row["name"] = s.name;
        row["node_count"] = s.node_count;
        row["gpus"] = s.node_count * s.gpus_per_node;
        row["hourly_usd"] = format_decimal(hourly_cost(s));
        row["per_gpu_hour_usd"] =
            s.node_count > 0 && s.gpus_per_node > 0 ? nlohmann::ordered_json(format_decimal(per_gpu_hour(s), 4))
                                                    : nlohmann::ordered_json(nullptr);
        j["scenarios"].push_back(row);
      }
      j["plans"] = nlohmann::ordered_json::array();
      for (const auto& p : plans) {
        const auto& s = scenario_for(p);
        nlohmann::ordered_json row;
        row["name"] = p.name;
        row["scenario"] = s.name;
        row["total_minutes"] = format_decimal(p.total_minutes());
        row["cost_usd"] = format_decimal(run_cost(s, p));
        j["plans"].push_back(row);
      }
      j["total_usd"] = format_decimal(est.total);
      j["limit_usd"] = limit ? nlohmann::ordered_json(format_decimal(*limit)) : nlohmann::ordered_json(nullptr);
      j["over_budget"] = est.over_budget;
      est.text = j.dump(2) + "\n";
      break;
    }
  }
  return est;
}

}  // namespace bench
