#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "bench/cost.hpp"
#include "bench/error.hpp"
#include "support.hpp"

using namespace bench;
using bench::testing::data_file;

namespace {

std::vector<CostScenario> a100() { return parse_scenarios(read_file(data_file("a100_scenarios.yaml"))); }
std::vector<RunPlan> mlperf() { return parse_plans(read_file(data_file("mlperf_plans.yaml"))); }

const CostScenario& by_name(const std::vector<CostScenario>& all, const std::string& name) {
  return *std::find_if(all.begin(), all.end(), [&](const CostScenario& s) { return s.name == name; });
}

/// Hourly cost in integer cents, computed from integer-cent inputs.
std::int64_t hourly_cents(std::int64_t c, std::int64_t n, std::int64_t m, std::int64_t i) { return c + n * (m + i); }

}  // namespace

TEST(Cost, DecimalParsing) {
  EXPECT_EQ(format_decimal(parse_decimal("32.77")), "32.77");
  EXPECT_EQ(format_decimal(parse_decimal("0.6")), "0.60");
  EXPECT_EQ(format_decimal(parse_decimal("2.005")), "2.01");
  EXPECT_EQ(format_decimal(-parse_decimal("2.005")), "-2.01");
  EXPECT_EQ(format_decimal(parse_decimal("1.2345"), 3), "1.235");
  EXPECT_THROW(parse_decimal("1e3"), ValidationError);
  EXPECT_THROW(parse_decimal("abc"), ValidationError);
}

TEST(Cost, HourlyMatchesPublishedTable) {
  const auto s = a100();
  const std::map<std::string, std::pair<double, std::int64_t>> expected = {
      {"Small", {2140, hourly_cents(60, 64, 67, 3277)}},
      {"Medium", {4283, hourly_cents(334, 128, 67, 3277)}},
      {"Large", {8567, hourly_cents(671, 256, 67, 3277)}}};
  for (const auto& [name, want] : expected) {
    const auto h = hourly_cost(by_name(s, name));
    EXPECT_NEAR(to_double(h), want.first, 1.0) << name;
    EXPECT_EQ(h, Money(want.second) / 100) << name;
    EXPECT_NEAR(to_double(per_gpu_hour(by_name(s, name))), 4.18, 0.01) << name;
  }
  EXPECT_EQ(format_decimal(hourly_cost(by_name(s, "Small"))), "2140.76");
  EXPECT_EQ(format_decimal(per_gpu_hour(by_name(s, "Small"))), "4.18");
}

TEST(Cost, RunCostMatchesPublishedTable) {
  const auto s = a100();
  const auto plans = mlperf();
  const std::vector<double> published = {473, 5740, 1192};
  const std::vector<std::string> exact = {"472.75", "5740.10", "1192.29"};
  ASSERT_EQ(plans.size(), 3u);
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const auto& sc = by_name(s, plans[i].scenario);
    const auto cost = run_cost(sc, plans[i]);
    EXPECT_NEAR(to_double(cost), published[i], 1.0) << plans[i].name;
    EXPECT_EQ(format_decimal(cost), exact[i]);
    const double oracle = to_double(hourly_cost(sc)) * to_double(plans[i].avg_duration_minutes) *
                          static_cast<double>(plans[i].repeats) / 60.0;
    EXPECT_NEAR(to_double(cost), oracle, 1e-6);
  }
}

TEST(Cost, EdgeCases) {
  auto s = a100()[0];
  s.node_count = 0;
  EXPECT_EQ(hourly_cost(s), s.controller_fee_per_hour);
  EXPECT_THROW(per_gpu_hour(s), ValidationError);
  CostScenario free{"free", Money(0), 1, Money(0), Money(0), 1};
  EXPECT_EQ(per_gpu_hour(free), Money(0));
  s.node_count = -1;
  EXPECT_THROW(s.validate(), ValidationError);
  EXPECT_THROW(parse_scenarios("scenarios:\n  - name: x\n    node_count: 2\n"), ValidationError);
}

TEST(CostProperty, LinearInNodesAndRepeats) {
  std::mt19937 rng(1234);
  for (int trial = 0; trial < 200; ++trial) {
    CostScenario s;
    s.name = "s";
    s.controller_fee_per_hour = Money(std::uniform_int_distribution<int>(0, 10000)(rng)) / 100;
    s.node_mgmt_fee_per_hour = Money(std::uniform_int_distribution<int>(0, 500)(rng)) / 100;
    s.instance_cost_per_hour = Money(std::uniform_int_distribution<int>(0, 10000)(rng)) / 100;
    const auto n = std::uniform_int_distribution<std::int64_t>(0, 1000)(rng);
    s.node_count = n;
    const auto slope = s.node_mgmt_fee_per_hour + s.instance_cost_per_hour;
    ASSERT_EQ(hourly_cost(s), s.controller_fee_per_hour + slope * n);
    auto next = s;
    next.node_count = n + 1;
    ASSERT_EQ(hourly_cost(next) - hourly_cost(s), slope);

    RunPlan p{"p", "s", Money(std::uniform_int_distribution<int>(1, 10000)(rng)) / 100, 1};
    const auto one = run_cost(s, p);
    p.repeats = std::uniform_int_distribution<std::int64_t>(1, 50)(rng);
    ASSERT_EQ(run_cost(s, p), one * p.repeats);
  }
}

TEST(Estimate, BudgetLimit) {
  const auto s = a100();
  auto plans = mlperf();
  plans.resize(1);
  const auto ok = estimate(s, plans, parse_decimal("500"), CostFormat::table);
  EXPECT_FALSE(ok.over_budget);
  EXPECT_NE(ok.text.find("limit_usd: 500.00 (ok)"), std::string::npos) << ok.text;
  const auto over = estimate(s, plans, parse_decimal("400"), CostFormat::table);
  EXPECT_TRUE(over.over_budget);
  EXPECT_NE(over.text.find("over budget"), std::string::npos);
  EXPECT_EQ(format_decimal(over.total), "472.75");
}

TEST(Estimate, Formats) {
  const auto all = estimate(a100(), mlperf(), std::nullopt, CostFormat::table);
  EXPECT_NE(all.text.find("total_usd: 7405.15"), std::string::npos) << all.text;

  const auto j = nlohmann::json::parse(estimate(a100(), mlperf(), std::nullopt, CostFormat::json).text);
  EXPECT_EQ(j.at("scenarios").size(), 3u);
  EXPECT_EQ(j.at("plans").size(), 3u);
  EXPECT_EQ(j.at("total_usd"), "7405.15");

  const auto csv = estimate(a100(), {}, std::nullopt, CostFormat::csv).text;
  EXPECT_NE(csv.find("Small,64,"), std::string::npos) << csv;

  auto plans = mlperf();
  plans[0].scenario = "Tiny";
  EXPECT_THROW(estimate(a100(), plans, std::nullopt, CostFormat::table), ValidationError);
}
