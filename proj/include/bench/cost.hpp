#pragma once

// Cluster cost model: hourly H = C + N * (M + I), billed per minute.
// All arithmetic is exact; rounding happens only when formatting.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace bench {

using Money = boost::multiprecision::cpp_rational;

/// Exact value of a plain decimal ("32.77", "5", "0.6"). Throws ValidationError.
Money parse_decimal(std::string_view text);
/// Rounds half away from zero to `places` decimals.
std::string format_decimal(const Money& v, int places = 2);
double to_double(const Money& v);

struct CostScenario {
  std::string name;
  Money controller_fee_per_hour;   // C
  std::int64_t node_count = 0;     // N
  Money node_mgmt_fee_per_hour;    // M
  Money instance_cost_per_hour;    // I
  std::int64_t gpus_per_node = 1;

  void validate() const;
};

struct RunPlan {
  std::string name;
  std::string scenario;
  Money avg_duration_minutes;
  std::int64_t repeats = 1;

  void validate() const;
  Money total_minutes() const { return avg_duration_minutes * repeats; }
};

Money hourly_cost(const CostScenario& s);
/// Throws ValidationError when the scenario has no GPUs.
Money per_gpu_hour(const CostScenario& s);
Money run_cost(const CostScenario& s, const RunPlan& p);

std::vector<CostScenario> parse_scenarios(std::string_view yaml);
std::vector<RunPlan> parse_plans(std::string_view yaml);

enum class CostFormat { table, csv, json };
std::optional<CostFormat> cost_format_from(std::string_view s);

struct Estimate {
  std::string text;
  /// Sum of all plan costs.
  Money total;
  bool over_budget = false;
};

/// Scenario rows, then plan rows when plans are given. Plans naming no
/// scenario use the only scenario, if there is exactly one.
Estimate estimate(const std::vector<CostScenario>& scenarios, const std::vector<RunPlan>& plans,
                  const std::optional<Money>& limit, CostFormat format);

}  // namespace bench
