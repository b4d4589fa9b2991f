#include <gtest/gtest.h>

#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "bench/error.hpp"
#include "bench/gpu_watch.hpp"
#include "bench/stopwatch.hpp"
#include "support.hpp"

using namespace bench;
using bench::testing::at_millis;

namespace {

constexpr std::int64_t kT0 = 1735689600000;  // 2025-01-01T00:00:00Z in ms

/// Manually stepped clock.
struct FakeClock {
  std::int64_t ms = kT0;
  Stopwatch::ClockFn fn() {
    return [this] { return at_millis(ms); };
  }
};

SystemInfo fixed_system() {
  SystemInfo s;
  s.os_name = "Linux";
  s.hostname = "node1";
  s.captured_at = at_millis(kT0);
  return s;
}

struct Agg {
  std::size_t count;
  double total, mean;
};
using AggMap = std::map<std::string, Agg>;

std::vector<std::string> words(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

AggMap from_txt(const std::string& text) {
  AggMap out;
  const auto lines = split(text, '\n');
  for (std::size_t i = 1; i < lines.size() && !lines[i].empty(); ++i) {
    const auto w = words(lines[i]);
    out[w[0]] = {std::stoul(w[1]), std::stod(w[2]), std::stod(w[3])};
  }
  return out;
}

AggMap from_csv(const std::string& text) {
  AggMap out;
  const auto lines = split(text, '\n');
  for (std::size_t i = 1; i < lines.size() && trim(lines[i]) != ""; ++i) {
    const auto c = split(trim(lines[i]), ',');
    out[c[0]] = {std::stoul(c[1]), std::stod(c[2]), std::stod(c[3])};
  }
  return out;
}

AggMap from_json(const std::string& text) {
  AggMap out;
  const auto doc = nlohmann::json::parse(text);
  for (const auto& t : doc.at("timers"))
    out[t.at("name").get<std::string>()] = {t.at("count").get<std::size_t>(), t.at("total_s").get<double>(), t.at("mean_s").get<double>()};
  return out;
}

AggMap from_yaml(const std::string& text) {
  AggMap out;
  const YAML::Node doc = YAML::Load(text);
  for (const auto& t : doc["timers"])
    out[t["name"].as<std::string>()] = {t["count"].as<std::size_t>(), t["total_s"].as<double>(), t["mean_s"].as<double>()};
  return out;
}

AggMap from_html(const std::string& text) {
  AggMap out;
  static const std::regex row(R"(<tr><td>([^<]*)</td><td>(\d+)</td><td>([0-9.]+)</td><td>([0-9.]+)</td>)");
  for (auto it = std::sregex_iterator(text.begin(), text.end(), row); it != std::sregex_iterator(); ++it)
    out[(*it)[1]] = {std::stoul((*it)[2]), std::stod((*it)[3]), std::stod((*it)[4])};
  return out;
}

}  // namespace

TEST(Stopwatch, InjectedClockIsExact) {
  FakeClock c;
  Stopwatch sw(c.fn(), fixed_system());
  sw.start("train");
  c.ms += 2000;
  const auto e = sw.stop("train", "success");
  EXPECT_EQ(e.elapsed(), 2.0);
  EXPECT_EQ(e.elapsed_us(), 2000000);
  c.ms += 1;
  sw.start("train");
  c.ms += 2000;
  sw.stop("train");
  const auto s = sw.summary();
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].count, 2u);
  EXPECT_EQ(s[0].total(), 4.0);
  EXPECT_EQ(s[0].mean(), 2.0);
  EXPECT_EQ(s[0].first_start, at_millis(kT0));
  EXPECT_EQ(s[0].last_stop, at_millis(kT0 + 4001));
}

TEST(Stopwatch, Errors) {
  Stopwatch sw(FakeClock{}.fn(), fixed_system());
  try {
    sw.stop("never");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("'never'"), std::string::npos);
  }
  sw.start("a");
  EXPECT_THROW(sw.start("a"), ValidationError);
  EXPECT_THROW(sw.start(""), ValidationError);
}

TEST(Stopwatch, NestedTimersKeepStartOrder) {
  FakeClock c;
  Stopwatch sw(c.fn(), fixed_system());
  sw.start("outer");
  c.ms += 10;
  sw.start("inner");
  c.ms += 10;
  sw.stop("inner");
  sw.stop("outer");
  const auto ev = sw.events();
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_EQ(ev[0].name, "outer");
  EXPECT_EQ(ev[1].name, "inner");
}

TEST(Stopwatch, TxtGolden) {
  FakeClock c;
  Stopwatch sw(c.fn(), fixed_system());
  sw.start("epoch");
  c.ms += 1000;
  sw.stop("epoch");
  sw.start("epoch");
  c.ms += 3000;
  sw.stop("epoch");
  const std::string expected =
      "timer  count  total_s  mean_s  min_s  max_s  first_start               last_stop\n"
      "epoch      2    4.000   2.000  1.000  3.000  2025-01-01T00:00:00.000Z  2025-01-01T00:00:04.000Z\n"
      "\n"
      "system\n"
      "  os_name          Linux\n"
      "  os_version       unknown\n"
      "  hostname         node1\n"
      "  user             unknown\n"
      "  cpu_model        unknown\n"
      "  cpu_count        unknown\n"
      "  total_mem_bytes  unknown\n"
      "  tool_version     1.0.0\n"
      "  captured_at      2025-01-01T00:00:00.000Z\n";
  EXPECT_EQ(sw.report(ReportFormat::txt), expected);
}

TEST(Stopwatch, EmptyCsv) {
  Stopwatch sw(FakeClock{}.fn(), fixed_system());
  const auto csv = sw.report(ReportFormat::csv);
  EXPECT_EQ(csv.rfind("timer,count,total_s,mean_s,min_s,max_s,first_start,last_stop\r\n\r\nkey,value\r\n", 0), 0u)
      << csv;
  EXPECT_NE(csv.find("hostname,node1\r\n"), std::string::npos);
}

TEST(Stopwatch, FiveFormatsAgree) {
  FakeClock c;
  Stopwatch sw(c.fn(), fixed_system());
  const std::vector<std::pair<std::string, int>> plan = {{"load", 1500}, {"train", 2000}, {"load", 250},
                                                         {"eval", 7},    {"train", 3001}, {"train", 12}};
  AggMap oracle;
  for (const auto& [name, ms] : plan) {
    sw.start(name);
    c.ms += ms;
    sw.stop(name);
    auto& a = oracle[name];
    ++a.count;
    a.total += ms / 1000.0;
  }
  for (auto& [name, a] : oracle) a.mean = a.total / static_cast<double>(a.count);

  const std::map<std::string, AggMap> parsed = {{"txt", from_txt(sw.report(ReportFormat::txt))},
                                                {"csv", from_csv(sw.report(ReportFormat::csv))},
                                                {"json", from_json(sw.report(ReportFormat::json))},
                                                {"yaml", from_yaml(sw.report(ReportFormat::yaml))},
                                                {"html", from_html(sw.report(ReportFormat::html))}};
  for (const auto& [format, got] : parsed) {
    ASSERT_EQ(got.size(), oracle.size()) << format;
    for (const auto& [name, want] : oracle) {
      const auto& g = got.at(name);
      EXPECT_EQ(g.count, want.count) << format << " " << name;
      EXPECT_NEAR(g.total, want.total, 0.0005) << format << " " << name;
      EXPECT_NEAR(g.mean, want.mean, 0.0005) << format << " " << name;
    }
  }
}

TEST(Stopwatch, JsonAndYamlRoundTrip) {
  FakeClock c;
  Stopwatch sw(c.fn(), fixed_system());
  sw.start("a", {{"epoch", "3"}});
  c.ms += 1234;
  sw.stop("a", "ok");
  sw.start("b");
  c.ms += 1;
  sw.stop("b");
  EXPECT_EQ(events_from_json(sw.report(ReportFormat::json)), sw.events());
  EXPECT_EQ(events_from_yaml(sw.report(ReportFormat::yaml)), sw.events());
}

TEST(Stopwatch, RealClockMicroseconds) {
  Stopwatch sw;
  sw.start("x");
  const auto e = sw.stop("x");
  EXPECT_GE(e.elapsed(), 0.0);
  EXPECT_EQ(events_from_json(sw.report(ReportFormat::json)), sw.events());
  EXPECT_NE(sw.system().hostname, "");
}

TEST(Mllog, LinesParseAndSort) {
  FakeClock c;
  Stopwatch sw(c.fn(), fixed_system());
  sw.start("train", {{"epoch", "1"}});
  c.ms += 2000;
  sw.stop("train", "success");
  MllogContext ctx;
  ctx.ns = "cloudmask";
  ctx.metadata = {{"gpu", "a100"}};
  const auto lines = sw.mllog_export(ctx);
  ASSERT_EQ(lines.size(), 2u);
  std::int64_t prev = 0;
  for (const auto& line : lines) {
    ASSERT_EQ(line.rfind(":::MLLOG ", 0), 0u);
    const auto j = nlohmann::json::parse(line.substr(9));
    EXPECT_EQ(j.at("namespace"), "cloudmask");
    EXPECT_EQ(j.at("key"), "train");
    EXPECT_EQ(j.at("metadata").at("gpu"), "a100");
    EXPECT_EQ(j.at("metadata").at("epoch"), "1");
    EXPECT_GE(j.at("time_ms").get<std::int64_t>(), prev);
    prev = j.at("time_ms").get<std::int64_t>();
  }
  const auto start = nlohmann::json::parse(lines[0].substr(9));
  const auto end = nlohmann::json::parse(lines[1].substr(9));
  EXPECT_EQ(start.at("event_type"), "INTERVAL_START");
  EXPECT_EQ(end.at("event_type"), "INTERVAL_END");
  EXPECT_EQ(end.at("time_ms").get<std::int64_t>() - start.at("time_ms").get<std::int64_t>(), 2000);
  EXPECT_EQ(end.at("value"), "success");
  EXPECT_EQ(end.at("metadata").at("elapsed_s"), 2.0);
}

TEST(Mllog, InterleavedEventsSortedByTime) {
  FakeClock c;
  Stopwatch sw(c.fn(), fixed_system());
  sw.start("a");
  c.ms += 5;
  sw.start("b");
  c.ms += 5;
  sw.stop("b");
  c.ms += 5;
  sw.stop("a");
  const auto lines = sw.mllog_export();
  ASSERT_EQ(lines.size(), 4u);
  std::vector<std::string> keys;
  for (const auto& l : lines) {
    const auto j = nlohmann::json::parse(l.substr(9));
    keys.push_back(j.at("key").get<std::string>() + ":" + j.at("event_type").get<std::string>());
  }
  EXPECT_EQ(keys, (std::vector<std::string>{"a:INTERVAL_START", "b:INTERVAL_START", "b:INTERVAL_END", "a:INTERVAL_END"}));
}

namespace {

GpuWatchOptions fake_watch(const std::string& sampler_output, double delay, double duration, std::int64_t& clock_ms) {
  GpuWatchOptions o;
  o.sampler = {"sh", "-c", sampler_output};
  o.delay_seconds = delay;
  o.duration_seconds = duration;
  o.clock = [&clock_ms] { return at_millis(clock_ms); };
  o.sleep = [&clock_ms](std::chrono::duration<double> d) {
    clock_ms += static_cast<std::int64_t>(d.count() * 1000);
  };
  return o;
}

}  // namespace

TEST(GpuWatch, ConstantDenseCollapses) {
  std::int64_t t = kT0;
  auto o = fake_watch("echo '40, 1024, 250.5, 61'", 0.5, 2.0, t);
  std::ostringstream out;
  const auto stats = gpu_watch(o, out);
  EXPECT_EQ(stats.samples, 4u);
  EXPECT_EQ(stats.rows, 4u);

  t = kT0;
  o.dense = true;
  std::ostringstream dense;
  const auto dstats = gpu_watch(o, dense);
  EXPECT_EQ(dstats.samples, 4u);
  EXPECT_EQ(dstats.rows, 1u);
  const auto lines = split(trim(dense.str()), '\n');
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0], kGpuCsvHeader);
  EXPECT_EQ(lines[1], "2025-01-01T00:00:00.000Z,0,40,1024,250.5,61");
}

TEST(GpuWatch, FailedSampleIsUnknownRow) {
  std::int64_t t = kT0;
  auto o = fake_watch("exit 1", 1.0, 1.0, t);
  std::ostringstream out;
  const auto stats = gpu_watch(o, out);
  EXPECT_EQ(stats.failures, 1u);
  EXPECT_NE(out.str().find(",0,unknown,unknown,unknown,unknown"), std::string::npos) << out.str();
}

TEST(GpuWatch, MissingSampler) {
  GpuWatchOptions o;
  o.sampler = {"no-such-gpu-sampler-xyz"};
  std::ostringstream out;
  EXPECT_THROW(gpu_watch(o, out), Error);
  EXPECT_EQ(out.str(), "");
}

TEST(GpuWatch, StopToken) {
  std::int64_t t = kT0;
  auto o = fake_watch("echo '1, 2, 3, 4'", 1.0, 1000.0, t);
  std::stop_source src;
  int calls = 0;
  o.sleep = [&](std::chrono::duration<double>) {
    if (++calls == 3) src.request_stop();
  };
  std::ostringstream out;
  EXPECT_EQ(gpu_watch(o, out, src.get_token()).samples, 3u);
}

TEST(GpuWatch, ParseSample) {
  const auto s = parse_gpu_sample("87, 30000, 310.2, 70\nsecond line\n", 2, at_millis(kT0));
  ASSERT_TRUE(s);
  EXPECT_EQ(s->gpu, 2);
  EXPECT_EQ(s->power_w, "310.2");
  EXPECT_FALSE(parse_gpu_sample("garbage", 0, at_millis(kT0)).has_value());
}
