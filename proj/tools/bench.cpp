// bench: experiment generation, submission, workflows, results, cost, gpu sampling.

#include <unistd.h>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <regex>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "bench/coordinator.hpp"
#include "bench/cost.hpp"
#include "bench/error.hpp"
#include "bench/experiment_generator.hpp"
#include "bench/gpu_watch.hpp"
#include "bench/results.hpp"
#include "bench/scheduler.hpp"
#include "bench/spec_model.hpp"
#include "bench/status_protocol.hpp"
#include "bench/template_engine.hpp"
#include "cli_config.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace bench::cli {
namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

void install_signal_handlers() {
  struct sigaction sa {};
  sa.sa_handler = on_signal;
  sigemptyset(&sa.sa_mask);
  sigaction(SIGINT, &sa, nullptr);
  sigaction(SIGTERM, &sa, nullptr);
}

constexpr int kInterrupted = 130;

struct Context {
  CliFlags flags;
  CliConfig config;

  void log(int level, const std::string& msg) const {
    if (config.verbosity >= level) std::cerr << msg << "\n";
  }
  bool color_out() const { return config.color && isatty(STDOUT_FILENO); }
};

std::string colorize_states(const std::string& text, bool on) {
  if (!on) return text;
  static const std::vector<std::pair<std::regex, std::string>> rules = {
      {std::regex(R"(\bdone\b)"), "\033[32mdone\033[0m"},
      {std::regex(R"(\bfailed\b)"), "\033[31mfailed\033[0m"},
      {std::regex(R"(\bcancelled\b)"), "\033[90mcancelled\033[0m"},
      {std::regex(R"(\brunning\b)"), "\033[34mrunning\033[0m"},
  };
  std::string out = text;
  for (const auto& [re, repl] : rules) out = std::regex_replace(out, re, repl);
  return out;
}

std::vector<ResourceTarget> resources(const Context& ctx) { return load_resources(ctx.config.resources); }

VarMap parse_pairs(const std::vector<std::string>& items, const std::string& flag) {
  VarMap out;
  for (const auto& item : items) {
    auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorKind::usage, flag + " expects key=value, got '" + item + "'");
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

void check_format(const std::string& format, std::initializer_list<std::string_view> allowed) {
  for (auto a : allowed)
    if (format == a) return;
  std::vector<std::string> names(allowed.begin(), allowed.end());
  throw Error(ErrorKind::usage, "unsupported --format '" + format + "' (expected " + join(names, ", ") + ")");
}

// ---- handles -----------------------------------------------------------------

fs::path handles_path(const fs::path& out) { return out / "handles.jsonl"; }

std::vector<JobHandle> read_handles(const fs::path& out) {
  std::vector<JobHandle> handles;
  auto text = try_read_file(handles_path(out));
  if (!text) return handles;
  for (const auto& line : split(*text, '\n'))
    if (!trim(line).empty()) handles.push_back(nlohmann::json::parse(line).get<JobHandle>());
  return handles;
}

void append_handle(const fs::path& out, const JobHandle& h) {
  append_file(handles_path(out), nlohmann::json(h).dump() + "\n");
}

MockOptions mock_options(const fs::path& state_dir) {
  MockOptions m;
  m.state_file = state_dir / ".mock-scheduler.json";
  return m;
}

// ---- ee generate ---------------------------------------------------------------

struct GenerateArgs {
  std::string spec, tmpl, out, format = "text";
  bool force = false;
  std::vector<std::string> db;
  std::size_t max_points = 100000;
};

int cmd_generate(const Context& ctx, const GenerateArgs& a) {
  check_format(a.format, {"text", "json"});
  const fs::path out = a.out.empty() ? ctx.config.out : fs::path(a.out);
  const auto spec = parse_spec(read_file(a.spec));
  const auto tpl = scan_file(a.tmpl);
  for (const auto& w : tpl.warnings) ctx.log(0, fmt::format("warning: {}:{}:{}: {}", a.tmpl, w.pos.line, w.pos.column, w.message));

  GenerateOptions opts;
  opts.env = environment_map();
  opts.db = {{"version", std::string(kToolVersion)}};
  for (auto& [k, v] : parse_pairs(a.db, "--db")) opts.db[k] = v;
  opts.force = a.force;
  opts.expand.max_points = a.max_points;
  const auto set = generate(spec, tpl, out, opts);

  if (a.format == "json") {
    json j;
    j["count"] = set.experiments.size();
    j["root"] = fs::absolute(set.root).string();
    j["index"] = fs::absolute(set.index_path).string();
    j["experiments"] = json::array();
    for (const auto& e : set.experiments) j["experiments"].push_back(e.point.id);
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << set.experiments.size() << " experiments generated in " << fs::absolute(set.root).string() << "\n";
  }
  return 0;
}

// ---- ee submit -----------------------------------------------------------------

struct SubmitArgs {
  std::string out, target = "local", format = "text";
  std::optional<int> max_queued;
  bool no_wait = false;
  int poll_ms = 1000;
};

/// Polls until every handle is terminal; cancels them on interrupt.
bool wait_terminal(Scheduler& sched, const std::vector<JobHandle>& handles, std::chrono::milliseconds poll) {
  for (;;) {
    bool all = true;
    for (const auto& h : handles) all = is_terminal(sched.status(h)) && all;
    if (all) return true;
    if (g_interrupted) {
      for (const auto& h : handles) sched.cancel(h);
      return false;
    }
    sched.idle(poll);
  }
}

int cmd_submit(const Context& ctx, const SubmitArgs& a) {
  check_format(a.format, {"text", "json"});
  const fs::path out = fs::absolute(a.out.empty() ? ctx.config.out : fs::path(a.out));
  const auto set = load_generated(out);
  auto target = find_resource(resources(ctx), a.target);
  QueuePolicy policy = target.policy.value_or(QueuePolicy{});
  if (a.max_queued) policy.max_queued_jobs = *a.max_queued;
  policy.validate();
  target.policy = policy;
  ctx.log(1, fmt::format("target {} ({})", target.name, to_string(target.kind)));

  std::set<std::string> already;
  for (const auto& h : read_handles(out)) already.insert(h.experiment_id);
  GeneratedSet pending = set;
  pending.experiments.clear();
  for (const auto& e : set.experiments)
    if (!already.count(e.point.id)) pending.experiments.push_back(e);

  const auto batches = split_for_policy(pending, policy);
  auto sched = make_scheduler(target, nullptr, mock_options(out));
  const auto poll = std::chrono::milliseconds(a.poll_ms);

  json report;
  report["target"] = target.name;
  report["batches"] = batches.size();
  report["skipped"] = already.size();
  report["batch_sizes"] = json::array();
  std::size_t submitted = 0;
  bool interrupted = false;
  for (const auto& batch : batches) {
    std::vector<JobHandle> handles;
    for (const auto& e : batch.experiments) {
      auto h = sched->submit(e.script_path, e.point.id, e.dir);
      append_handle(out, h);
      handles.push_back(h);
    }
    submitted += handles.size();
    report["batch_sizes"].push_back(handles.size());
    if (a.format == "text")
      std::cout << fmt::format("batch {}/{}: {} submitted\n", batch.index + 1, batches.size(), handles.size());
    const bool last = batch.index + 1 == batches.size();
    if (a.no_wait) {
      if (!last) std::cout << "stopping after one batch (--no-wait); re-run submit for the rest\n";
      break;
    }
    if (!wait_terminal(*sched, handles, poll)) {
      interrupted = true;
      break;
    }
  }
  report["submitted"] = submitted;
  report["handles"] = handles_path(out).string();
  if (a.format == "json")
    std::cout << report.dump(2) << "\n";
  else
    std::cout << fmt::format("{} batches, {} jobs submitted to {}\n", batches.size(), submitted, target.name);
  return interrupted ? kInterrupted : 0;
}

// ---- ee status -----------------------------------------------------------------

struct StatusArgs {
  std::string out, format = "table";
  int advance = 0;
};

int cmd_status(const Context& ctx, const StatusArgs& a) {
  check_format(a.format, {"table", "json"});
  const fs::path out = fs::absolute(a.out.empty() ? ctx.config.out : fs::path(a.out));
  const auto set = load_generated(out);
  const auto handles = read_handles(out);
  SchedulerPool pool(resources(ctx), nullptr, mock_options(out));

  if (a.advance > 0) {
    std::set<std::string> mocks;
    for (const auto& h : handles) mocks.insert(h.resource);
    for (const auto& name : mocks)
      if (auto* m = dynamic_cast<MockScheduler*>(&pool.get(name))) m->advance(a.advance);
  }

  std::map<std::string, JobHandle> by_id;
  for (const auto& h : handles) by_id[h.experiment_id] = h;

  struct Row {
    std::string id, resource, native_id, state, progress, updated, msg;
  };
  std::vector<Row> rows;
  std::map<std::string, int> counts;
  for (const auto& e : set.experiments) {
    Row r{e.point.id, "-", "-", "not-submitted", "-", "-", ""};
    if (auto it = by_id.find(e.point.id); it != by_id.end()) {
      const auto& h = it->second;
      auto& sched = pool.get(h.resource);
      JobState st = JobState::unknown;
      try {
        st = sched.status(h);
      } catch (const TransportError& err) {
        ctx.log(0, "warning: " + std::string(err.what()));
      }
      r.resource = h.resource;
      r.native_id = h.native_id;
      r.state = std::string(to_string(st));
      std::optional<std::string> text;
      try {
        text = sched.fetch_text(fs::path(h.workdir) / "status.log");
      } catch (const TransportError&) {
      }
      if (text)
        if (auto latest = parse_latest(*text)) {
          r.progress = std::to_string(latest->progress);
          r.updated = format_utc(latest->timestamp);
          r.msg = latest->message;
        }
    }
    ++counts[r.state];
    rows.push_back(std::move(r));
  }

  if (a.format == "json") {
    json j;
    j["root"] = out.string();
    j["experiments"] = json::array();
    for (const auto& r : rows) {
      json e;
      e["id"] = r.id;
      e["resource"] = r.resource;
      e["native_id"] = r.native_id;
      e["state"] = r.state;
      e["progress"] = r.progress == "-" ? json(nullptr) : json(std::stoi(r.progress));
      e["updated_at"] = r.updated == "-" ? json(nullptr) : json(r.updated);
      e["msg"] = r.msg;
      j["experiments"].push_back(e);
    }
    j["counts"] = counts;
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  std::size_t w[5] = {10, 8, 9, 5, 8};
  for (const auto& r : rows) {
    w[0] = std::max(w[0], r.id.size());
    w[1] = std::max(w[1], r.resource.size());
    w[2] = std::max(w[2], r.native_id.size());
    w[3] = std::max(w[3], r.state.size());
    w[4] = std::max(w[4], r.progress.size());
  }
  std::string table = fmt::format("{:<{}}  {:<{}}  {:<{}}  {:<{}}  {:>{}}  {}\n", "experiment", w[0], "resource", w[1],
                                  "native_id", w[2], "state", w[3], "progress", w[4], "updated_at");
  for (const auto& r : rows)
    table += fmt::format("{:<{}}  {:<{}}  {:<{}}  {:<{}}  {:>{}}  {}\n", r.id, w[0], r.resource, w[1], r.native_id,
                         w[2], r.state, w[3], r.progress, w[4], r.updated);
  std::cout << colorize_states(table, ctx.color_out());
  std::vector<std::string> summary;
  for (const auto& [state, n] : counts) summary.push_back(fmt::format("{} {}", n, state));
  std::cout << join(summary, ", ") << "\n";
  return 0;
}

// ---- cc run / sync / view ------------------------------------------------------

struct WorkflowArgs {
  std::string workflow, run_dir, target, format = "table";
  std::size_t width = 4;
  int poll_ms = 1000;
  bool resume = false;
  std::string output;
};

fs::path run_dir_for(const Context& ctx, const WorkflowArgs& a, const WorkflowGraph& g) {
  if (!a.run_dir.empty()) return fs::absolute(a.run_dir);
  return fs::absolute(ctx.config.out / "runs" / g.name);
}

std::optional<std::string> target_of(const WorkflowArgs& a) {
  return a.target.empty() ? std::nullopt : std::optional<std::string>(a.target);
}

json ledger_json(const RunLedger& l) {
  json j;
  j["workflow"] = l.workflow;
  j["state"] = to_string(l.overall());
  j["started_at"] = l.started_at ? json(format_utc(*l.started_at)) : json(nullptr);
  j["updated_at"] = l.updated_at ? json(format_utc(*l.updated_at)) : json(nullptr);
  j["nodes"] = json::object();
  for (const auto& [name, e] : l.nodes) {
    json n;
    n["state"] = to_string(e.state);
    n["progress"] = e.latest ? json(e.latest->progress) : json(nullptr);
    n["updated_at"] = e.latest ? json(format_utc(e.latest->timestamp)) : json(nullptr);
    n["msg"] = e.latest ? json(e.latest->message) : json(nullptr);
    n["native_id"] = e.handle ? json(e.handle->native_id) : json(nullptr);
    n["resource"] = e.handle ? json(e.handle->resource) : json(nullptr);
    j["nodes"][name] = n;
  }
  return j;
}

void print_ledger(const Context& ctx, const WorkflowGraph& g, const RunLedger& l, const std::string& format) {
  if (format == "json")
    std::cout << ledger_json(l).dump(2) << "\n";
  else if (format == "yaml")
    std::cout << ledger_to_yaml(l);
  else
    std::cout << colorize_states(export_view(g, l, ViewFormat::table), ctx.color_out());
}

int cmd_run(const Context& ctx, const WorkflowArgs& a) {
  check_format(a.format, {"table", "json", "yaml"});
  const auto graph = load_workflow(a.workflow);
  const auto run_dir = run_dir_for(ctx, a, graph);
  fs::create_directories(run_dir);
  SchedulerPool pool(resources(ctx), nullptr, mock_options(run_dir));
  RunOptions opts;
  opts.width = a.width;
  opts.poll = std::chrono::milliseconds(a.poll_ms);
  opts.target = target_of(a);
  Coordinator coord(graph, pool, run_dir, opts);
  if (a.resume) coord.resume(sync(graph, run_dir, pool, opts.target));
  ctx.log(1, "run directory " + run_dir.string());

  while (coord.step()) {
    if (g_interrupted) {
      ctx.log(0, "interrupted: cancelling active nodes");
      coord.cancel_active();
      print_ledger(ctx, graph, coord.ledger(), a.format);
      return kInterrupted;
    }
  }
  const auto ledger = coord.ledger();
  print_ledger(ctx, graph, ledger, a.format);
  return ledger.overall() == RunState::done ? 0 : 1;
}

int cmd_sync(const Context& ctx, const WorkflowArgs& a) {
  check_format(a.format, {"table", "json", "yaml"});
  const auto graph = load_workflow(a.workflow);
  const auto run_dir = run_dir_for(ctx, a, graph);
  SchedulerPool pool(resources(ctx), nullptr, mock_options(run_dir));
  const auto ledger = sync(graph, run_dir, pool, target_of(a));
  if (fs::is_directory(run_dir)) write_file_atomic(run_dir / "ledger.yaml", ledger_to_yaml(ledger));
  print_ledger(ctx, graph, ledger, a.format);
  return 0;
}

int cmd_view(const Context& ctx, const WorkflowArgs& a) {
  check_format(a.format, {"table", "dot", "html", "log", "json"});
  const auto graph = load_workflow(a.workflow);
  const auto run_dir = run_dir_for(ctx, a, graph);
  SchedulerPool pool(resources(ctx), nullptr, mock_options(run_dir));
  const auto ledger = sync(graph, run_dir, pool, target_of(a));
  const std::string text =
      a.format == "json" ? ledger_json(ledger).dump(2) + "\n" : export_view(graph, ledger, *view_format_from(a.format));
  if (!a.output.empty()) {
    write_file_atomic(a.output, text);
    return 0;
  }
  std::cout << (a.format == "table" ? colorize_states(text, ctx.color_out()) : text);
  return 0;
}

// ---- results -------------------------------------------------------------------

struct MergeArgs {
  std::string into, from, format = "yaml";
};

int cmd_merge(const Context&, const MergeArgs& a) {
  check_format(a.format, {"yaml", "json"});
  const Repository source(a.from, false);
  if (!fs::exists(a.into)) fs::create_directories(a.into);
  Repository dest(a.into, true);
  const auto report = merge(dest, source);
  if (a.format == "json") {
    json j;
    j["copied"] = report.copied.size();
    j["skipped"] = report.skipped.size();
    j["conflicts"] = json::array();
    for (const auto& c : report.conflicts)
      j["conflicts"].push_back(
          {{"guid", c.guid}, {"experiment_id", c.experiment_id}, {"dest_sha256", c.dest_sha256}, {"source_sha256", c.source_sha256}});
    j["copied_guids"] = report.copied;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << report.to_yaml();
  }
  return 0;
}

struct QueryArgs {
  std::string repo = "results-repo", format = "table";
  std::vector<std::string> where;
};

int cmd_query(const Context& ctx, const QueryArgs& a) {
  check_format(a.format, {"table", "json", "yaml"});
  const Repository repo(a.repo, false);
  std::vector<Predicate> filter;
  for (const auto& w : a.where) filter.push_back(Predicate::parse(w));
  const auto result = repo.query(filter);
  for (const auto& w : result.warnings) ctx.log(0, "warning: " + w);

  if (a.format == "json") {
    json j = json::array();
    for (const auto& r : result.records) {
      json e;
      e["guid"] = r.guid;
      e["experiment_id"] = r.experiment_id;
      e["created_at"] = r.provenance.created_at ? json(format_utc_millis(*r.provenance.created_at)) : json(nullptr);
      e["assignments"] = json::object();
      for (const auto& [k, v] : r.assignments) e["assignments"][k] = v;
      e["metrics"] = r.metrics;
      e["user"] = r.provenance.user;
      e["hostname"] = r.provenance.hostname;
      j.push_back(e);
    }
    std::cout << j.dump(2) << "\n";
  } else if (a.format == "yaml") {
    for (const auto& r : result.records) std::cout << "---\n" << record_to_yaml(r);
  } else {
    std::size_t w = 13;
    for (const auto& r : result.records) w = std::max(w, r.experiment_id.size());
    std::cout << fmt::format("{:<{}}  {:<36}  {:<24}  {}\n", "experiment_id", w, "guid", "created_at", "user@host");
    for (const auto& r : result.records)
      std::cout << fmt::format("{:<{}}  {:<36}  {:<24}  {}@{}\n", r.experiment_id, w, r.guid,
                               r.provenance.created_at ? format_utc_millis(*r.provenance.created_at) : "-",
                               r.provenance.user, r.provenance.hostname);
    std::cout << result.records.size() << " records\n";
  }
  return 0;
}

// ---- cost ----------------------------------------------------------------------

struct CostArgs {
  std::string scenario, plan, limit, format = "table";
};

int cmd_cost(const Context&, const CostArgs& a) {
  auto format = cost_format_from(a.format);
  if (!format) throw Error(ErrorKind::usage, "unsupported --format '" + a.format + "' (expected table, csv, json)");
  const auto scenarios = parse_scenarios(read_file(a.scenario));
  const auto plans = a.plan.empty() ? std::vector<RunPlan>{} : parse_plans(read_file(a.plan));
  std::optional<Money> limit;
  if (!a.limit.empty()) limit = parse_decimal(a.limit);
  const auto est = estimate(scenarios, plans, limit, *format);
  std::cout << est.text;
  if (est.over_budget)
    throw OverBudget(fmt::format("over budget: projected ${} exceeds limit ${}", format_decimal(est.total),
                                 format_decimal(*limit)));
  return 0;
}

// ---- gpu watch -----------------------------------------------------------------

struct GpuArgs {
  int gpu = 0;
  double delay = 1.0;
  bool dense = false;
  std::string sampler, out, format = "csv";
  std::optional<double> duration;
};

int cmd_gpu(const Context& ctx, const GpuArgs& a) {
  check_format(a.format, {"csv", "json"});
  GpuWatchOptions opts;
  opts.gpu = a.gpu;
  opts.delay_seconds = a.delay;
  opts.dense = a.dense;
  opts.json_lines = a.format == "json";
  opts.duration_seconds = a.duration;
  if (!a.sampler.empty()) {
    opts.sampler.clear();
    for (auto& part : split(a.sampler, ' '))
      if (!part.empty()) opts.sampler.push_back(part);
  }

  std::stop_source stop;
  std::jthread watcher([&stop](std::stop_token self) {
    while (!self.stop_requested() && !stop.stop_requested()) {
      if (g_interrupted) stop.request_stop();
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  });
  opts.sleep = [&stop](std::chrono::duration<double> d) {
    const auto until = std::chrono::steady_clock::now() + d;
    while (!stop.stop_requested() && std::chrono::steady_clock::now() < until)
      std::this_thread::sleep_for(std::min<std::chrono::duration<double>>(d, std::chrono::milliseconds(20)));
  };

  GpuWatchStats stats;
  if (!a.out.empty()) {
    std::ofstream file(a.out);
    if (!file) throw Error(ErrorKind::generic, "cannot write " + a.out);
    stats = gpu_watch(opts, file, stop.get_token());
  } else {
    stats = gpu_watch(opts, std::cout, stop.get_token());
  }
  watcher.request_stop();
  ctx.log(1, fmt::format("{} samples, {} rows, {} sampler failures", stats.samples, stats.rows, stats.failures));
  return g_interrupted ? kInterrupted : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Benchmark experiment generation, execution and reporting", "bench"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  Context ctx;
  app.add_option("--config", ctx.flags.config, "Config file (YAML: resources, out, verbosity, color)");
  app.add_option("--resources", ctx.flags.resources, "Resources file [env: BENCH_RESOURCES]");
  app.add_flag("--no-color", ctx.flags.no_color, "Disable colored tables [env: BENCH_NO_COLOR]");
  app.add_flag("-v,--verbose", ctx.flags.verbosity, "More diagnostics on stderr");

  std::function<int()> action;

  // ee
  auto* ee = app.add_subcommand("ee", "Experiment executor");
  ee->require_subcommand(1);

  GenerateArgs gen;
  auto* gen_cmd = ee->add_subcommand("generate", "Expand a spec into one directory per experiment");
  gen_cmd->add_option("--spec", gen.spec, "Experiment spec YAML")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--template", gen.tmpl, "Job script template")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", gen.out, "Output root [env: BENCH_OUT]");
  gen_cmd->add_flag("--force", gen.force, "Replace an existing, different tree");
  gen_cmd->add_option("--db", gen.db, "Extra db/cloudmesh variable key=value")->take_all();
  gen_cmd->add_option("--max-points", gen.max_points, "Refuse grids larger than this");
  gen_cmd->add_option("--format", gen.format, "text|json");
  gen_cmd->callback([&] { action = [&] { return cmd_generate(ctx, gen); }; });

  SubmitArgs sub;
  auto* sub_cmd = ee->add_subcommand("submit", "Submit generated experiments in policy-sized batches");
  sub_cmd->add_option("--out", sub.out, "Generated root [env: BENCH_OUT]");
  sub_cmd->add_option("--target", sub.target, "Resource name");
  sub_cmd->add_option("--max-queued", sub.max_queued, "Override the target's max queued jobs")->check(CLI::PositiveNumber);
  sub_cmd->add_flag("--no-wait", sub.no_wait, "Submit one batch and return");
  sub_cmd->add_option("--poll-ms", sub.poll_ms, "Poll interval for real schedulers");
  sub_cmd->add_option("--format", sub.format, "text|json");
  sub_cmd->callback([&] { action = [&] { return cmd_submit(ctx, sub); }; });

  StatusArgs st;
  auto* st_cmd = ee->add_subcommand("status", "Show the state of every generated experiment");
  st_cmd->add_option("--out", st.out, "Generated root [env: BENCH_OUT]");
  st_cmd->add_option("--advance", st.advance, "Advance mock schedulers by N ticks first");
  st_cmd->add_option("--format", st.format, "table|json");
  st_cmd->callback([&] { action = [&] { return cmd_status(ctx, st); }; });

  // cc
  auto* cc = app.add_subcommand("cc", "Compute coordinator (workflow DAGs)");
  cc->require_subcommand(1);
  WorkflowArgs wf;
  auto add_workflow_opts = [&](CLI::App* c) {
    c->add_option("--workflow", wf.workflow, "Workflow YAML")->required()->check(CLI::ExistingFile);
    c->add_option("--run-dir", wf.run_dir, "Run directory (default <out>/runs/<workflow>)");
    c->add_option("--target", wf.target, "Resource for nodes that do not name one");
  };
  auto* run_cmd = cc->add_subcommand("run", "Run a workflow to completion");
  add_workflow_opts(run_cmd);
  run_cmd->add_option("--width", wf.width, "Nodes running at once")->check(CLI::PositiveNumber);
  run_cmd->add_option("--poll-ms", wf.poll_ms, "Poll interval for real schedulers");
  run_cmd->add_flag("--resume", wf.resume, "Continue a run from its status files");
  run_cmd->add_option("--format", wf.format, "table|json|yaml");
  run_cmd->callback([&] { action = [&] { return cmd_run(ctx, wf); }; });

  auto* sync_cmd = cc->add_subcommand("sync", "Rebuild the ledger from status files");
  add_workflow_opts(sync_cmd);
  sync_cmd->add_option("--format", wf.format, "table|json|yaml");
  sync_cmd->callback([&] { action = [&] { return cmd_sync(ctx, wf); }; });

  auto* view_cmd = cc->add_subcommand("view", "Render the workflow state");
  add_workflow_opts(view_cmd);
  view_cmd->add_option("--format", wf.format, "table|dot|html|log|json");
  view_cmd->add_option("-o,--output", wf.output, "Write to a file instead of stdout");
  view_cmd->callback([&] { action = [&] { return cmd_view(ctx, wf); }; });

  // results
  auto* res = app.add_subcommand("results", "Result repositories");
  res->require_subcommand(1);
  MergeArgs mg;
  auto* merge_cmd = res->add_subcommand("merge", "Copy records missing from --into");
  merge_cmd->add_option("--into", mg.into, "Destination repository")->required();
  merge_cmd->add_option("--from", mg.from, "Source repository")->required()->check(CLI::ExistingDirectory);
  merge_cmd->add_option("--format", mg.format, "yaml|json");
  merge_cmd->callback([&] { action = [&] { return cmd_merge(ctx, mg); }; });

  QueryArgs q;
  auto* query_cmd = res->add_subcommand("query", "Filter records by parameter");
  query_cmd->add_option("--repo", q.repo, "Repository root");
  query_cmd->add_option("--where", q.where, "k=v, k=a..b, k>=v or k<=v (repeatable)")->take_all();
  query_cmd->add_option("--format", q.format, "table|json|yaml");
  query_cmd->callback([&] { action = [&] { return cmd_query(ctx, q); }; });

  // cost
  auto* cost = app.add_subcommand("cost", "Cluster cost model");
  cost->require_subcommand(1);
  CostArgs ca;
  auto* est_cmd = cost->add_subcommand("estimate", "Hourly and per-run cost projections");
  est_cmd->add_option("--scenario", ca.scenario, "Scenario YAML")->required()->check(CLI::ExistingFile);
  est_cmd->add_option("--plan", ca.plan, "Run plan YAML")->check(CLI::ExistingFile);
  est_cmd->add_option("--limit", ca.limit, "Budget in USD; exceeding it exits 6");
  est_cmd->add_option("--format", ca.format, "table|csv|json");
  est_cmd->callback([&] { action = [&] { return cmd_cost(ctx, ca); }; });

  // gpu
  auto* gpu = app.add_subcommand("gpu", "GPU sampling");
  gpu->require_subcommand(1);
  GpuArgs ga;
  auto* watch_cmd = gpu->add_subcommand("watch", "Sample a GPU periodically into csv");
  watch_cmd->add_option("--gpu", ga.gpu, "GPU index");
  watch_cmd->add_option("--delay", ga.delay, "Seconds between samples")->check(CLI::PositiveNumber);
  watch_cmd->add_flag("--dense", ga.dense, "Skip rows identical to the previous one");
  watch_cmd->add_option("--sampler", ga.sampler, "Sampler command; {gpu} is replaced by the index");
  watch_cmd->add_option("--out", ga.out, "Write rows to a file");
  watch_cmd->add_option("--duration", ga.duration, "Stop after this many seconds");
  watch_cmd->add_option("--format", ga.format, "csv|json");
  watch_cmd->callback([&] { action = [&] { return cmd_gpu(ctx, ga); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::usage);
  }

  try {
    ctx.config = resolve_config(ctx.flags);
    install_signal_handlers();
    return action ? action() : static_cast<int>(ErrorKind::usage);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (auto* s = dynamic_cast<const SubmitError*>(&e); s && !s->stderr_text.empty())
      std::cerr << s->stderr_text << "\n";
    return e.exit_code();
  } catch (const YAML::Exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::validation);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::validation);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::generic);
  }
}

}  // namespace bench::cli

int main(int argc, char** argv) { return bench::cli::main(argc, argv); }
