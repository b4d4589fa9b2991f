#include <gtest/gtest.h>

#include <random>

#include <fmt/format.h>

#include "bench/coordinator.hpp"
#include "bench/error.hpp"
#include "bench/workflow.hpp"
#include "support.hpp"

using namespace bench;
using bench::testing::stage_chain_workflow;
using bench::testing::TempDir;
namespace fs = std::filesystem;

namespace {

RunOptions on_mock(std::size_t width = 4) {
  RunOptions o;
  o.width = width;
  o.poll = std::chrono::milliseconds(0);
  o.target = "mock";
  return o;
}

SchedulerPool mock_pool(int width = 4) {
  return SchedulerPool(parse_resources(fmt::format("resources:\n  mock: {{kind: mock, width: {}}}\n", width)));
}

/// Records for one node in history order.
std::vector<StatusRecord> records_of(const RunLedger& ledger, const std::string& node) {
  std::vector<StatusRecord> out;
  for (const auto& r : ledger.history)
    if (r.name == node) out.push_back(r);
  return out;
}

std::optional<TimePoint> first_time(const RunLedger& ledger, const std::string& node, RecordState s) {
  for (const auto& r : records_of(ledger, node))
    if (r.state == s) return r.timestamp;
  return std::nullopt;
}

std::map<std::string, NodeState> terminal_states(const RunLedger& ledger) {
  std::map<std::string, NodeState> out;
  for (const auto& [name, e] : ledger.nodes) out[name] = e.state;
  return out;
}

struct Dag {
  std::vector<std::string> names;
  std::set<std::pair<std::string, std::string>> edges;
};

/// Every ordering of `names` consistent with `edges`.
std::set<std::vector<std::string>> all_topological_sorts(const Dag& dag) {
  std::set<std::vector<std::string>> out;
  auto order = dag.names;
  std::sort(order.begin(), order.end());
  do {
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
    bool ok = true;
    for (const auto& [a, b] : dag.edges) ok = ok && pos[a] < pos[b];
    if (ok) out.insert(order);
  } while (std::next_permutation(order.begin(), order.end()));
  return out;
}

Dag random_dag(std::mt19937& rng, int n) {
  Dag d;
  for (int i = 0; i < n; ++i) d.names.push_back(fmt::format("n{}", i));
  std::vector<std::string> rank = d.names;
  std::shuffle(rank.begin(), rank.end(), rng);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng() % 3 == 0) d.edges.insert({rank[static_cast<std::size_t>(i)], rank[static_cast<std::size_t>(j)]});
  return d;
}

fs::path write_dag(const fs::path& dir, const Dag& dag, std::mt19937& rng, const std::set<std::string>& failing = {}) {
  std::string yaml = "workflow:\n  nodes:\n";
  for (const auto& n : dag.names) {
    const int ticks = std::uniform_int_distribution<int>(1, 3)(rng);
    write_file_atomic(dir / (n + ".sh"),
                      fmt::format("#!/bin/sh\n# mock: ticks={} exit={}\n", ticks, failing.count(n) ? 1 : 0));
    yaml += fmt::format("    {0}: {{name: {0}, script: {0}.sh}}\n", n);
  }
  yaml += "  dependencies:\n";
  for (const auto& [a, b] : dag.edges) yaml += fmt::format("    - {},{}\n", a, b);
  write_file_atomic(dir / "dag.yaml", yaml);
  return dir / "dag.yaml";
}

}  // namespace

TEST(Workflow, ParsesChain) {
  const auto g = load_workflow(bench::testing::data_file("chain_workflow.yaml"));
  ASSERT_EQ(g.nodes.size(), 5u);
  EXPECT_EQ(g.nodes[1].name, "fetch-data");
  EXPECT_EQ(g.nodes[1].user, "gregor");
  EXPECT_EQ(g.nodes[1].status, NodeState::ready);
  EXPECT_EQ(g.edges.size(), 4u);
  EXPECT_EQ(g.predecessors("compute"), (std::vector<std::string>{"fetch-data"}));
  EXPECT_EQ(g.successors("analyze"), (std::vector<std::string>{"end"}));
  auto d = g.descendants("compute");
  std::sort(d.begin(), d.end());
  EXPECT_EQ(d, (std::vector<std::string>{"analyze", "end"}));
  EXPECT_TRUE(g.script_path(g.nodes[2])->is_absolute());
}

TEST(Workflow, CycleNamed) {
  const std::string text = "workflow:\n  nodes:\n    a: {name: a}\n    b: {name: b}\n  dependencies:\n    - a,b\n    - b,a\n";
  try {
    parse_workflow(text);
    FAIL();
  } catch (const CycleError& e) {
    const std::string msg = e.what();
    EXPECT_TRUE(msg.find("a -> b -> a") != std::string::npos || msg.find("b -> a -> b") != std::string::npos) << msg;
  }
}

TEST(Workflow, Rejections) {
  EXPECT_THROW(parse_workflow("workflow:\n  nodes:\n    a: {name: a}\n  dependencies:\n    - a,zz\n"), ValidationError);
  EXPECT_THROW(parse_workflow("workflow:\n  nodes:\n    a: {name: b}\n"), ValidationError);
  EXPECT_THROW(parse_workflow("workflow:\n  nodes:\n    a: {status: sleeping}\n"), ValidationError);
  EXPECT_THROW(parse_workflow("nodes: {}\n"), ValidationError);
  EXPECT_THROW(parse_workflow("workflow: [\n"), ParseError);
}

TEST(Workflow, Labels) {
  WorkflowNode n;
  n.name = "compute";
  EXPECT_EQ(render_node_label(n), "compute");
  n.label = "{status}";
  n.status = NodeState::done;
  EXPECT_EQ(render_node_label(n), "done");
  n.label = "{name}\\nprogress={progress}";
  n.progress = 40;
  EXPECT_EQ(render_node_label(n), "compute\\nprogress=40");
  n.label = "{now.date} {now.time} {mystery}";
  std::vector<TemplateWarning> warnings;
  EXPECT_EQ(render_node_label(n, TimePoint(std::chrono::seconds(1735732800)), &warnings), "2025-01-01 12:00:00 {mystery}");
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Coordinator, ChainRunsInOrder) {
  TempDir tmp;
  auto pool = mock_pool();
  Coordinator cc(load_workflow(stage_chain_workflow(tmp.path())), pool, tmp / "run", on_mock());
  const auto ledger = cc.run();
  EXPECT_EQ(ledger.overall(), RunState::done);
  const std::vector<std::string> chain = {"start", "fetch-data", "compute", "analyze", "end"};
  for (const auto& n : chain) EXPECT_EQ(ledger.state_of(n), NodeState::done) << n;
  for (std::size_t i = 2; i + 1 < chain.size(); ++i) {
    const auto running = first_time(ledger, chain[i], RecordState::running);
    const auto pred_done = first_time(ledger, chain[i - 1], RecordState::done);
    ASSERT_TRUE(running && pred_done);
    EXPECT_GE(*running, *pred_done) << chain[i];
  }
  EXPECT_EQ(cc.submission_order(), (std::vector<std::string>{"fetch-data", "compute", "analyze"}));
  EXPECT_TRUE(fs::exists(tmp / "run" / "ledger.yaml"));
  EXPECT_TRUE(fs::exists(tmp / "run" / "compute" / "handle.json"));
  EXPECT_EQ(ledger_from_yaml(read_file(tmp / "run" / "ledger.yaml")), ledger);
}

TEST(Coordinator, FailureCancelsDownstream) {
  TempDir tmp;
  stage_chain_workflow(tmp.path());
  write_file_atomic(tmp / "compute.sh", "#!/bin/sh\n# mock: ticks=2 exit=1\n");
  auto pool = mock_pool();
  Coordinator cc(load_workflow(tmp / "chain_workflow.yaml"), pool, tmp / "run", on_mock());
  const auto ledger = cc.run();
  EXPECT_EQ(ledger.state_of("fetch-data"), NodeState::done);
  EXPECT_EQ(ledger.state_of("compute"), NodeState::failed);
  EXPECT_EQ(ledger.state_of("analyze"), NodeState::cancelled);
  EXPECT_EQ(ledger.state_of("end"), NodeState::cancelled);
  EXPECT_EQ(ledger.overall(), RunState::failed);
  EXPECT_NE(ledger.nodes.at("analyze").latest->message.find("compute"), std::string::npos);
  EXPECT_FALSE(fs::exists(tmp / "run" / "analyze" / "handle.json"));
}

TEST(Coordinator, DiamondOverlaps) {
  TempDir tmp;
  for (const char* n : {"a", "b", "c", "d"}) write_file_atomic(tmp / (std::string(n) + ".sh"), "# mock: ticks=3\n");
  write_file_atomic(tmp / "w.yaml",
                    "workflow:\n  nodes:\n    a: {script: a.sh}\n    b: {script: b.sh}\n    c: {script: c.sh}\n"
                    "    d: {script: d.sh}\n  dependencies:\n    - a,b,d\n    - a,c,d\n");
  auto pool = mock_pool(2);
  const auto ledger = Coordinator(load_workflow(tmp / "w.yaml"), pool, tmp / "run", on_mock(2)).run();
  const auto b_run = *first_time(ledger, "b", RecordState::running), b_done = *first_time(ledger, "b", RecordState::done);
  const auto c_run = *first_time(ledger, "c", RecordState::running), c_done = *first_time(ledger, "c", RecordState::done);
  EXPECT_LT(b_run, c_done);
  EXPECT_LT(c_run, b_done);
  EXPECT_GE(*first_time(ledger, "d", RecordState::running), std::max(b_done, c_done));
}

TEST(Coordinator, SyncAfterCompletion) {
  TempDir tmp;
  auto pool = mock_pool();
  const auto graph = load_workflow(stage_chain_workflow(tmp.path()));
  const auto ran = Coordinator(graph, pool, tmp / "run", on_mock()).run();
  const auto synced = sync(graph, tmp / "run", pool, "mock");
  EXPECT_EQ(synced, ran);
  EXPECT_EQ(sync(graph, tmp / "run", pool, "mock"), synced);

  fs::remove(tmp / "run" / "analyze" / "status.log");
  const auto partial = sync(graph, tmp / "run", pool, "mock");
  EXPECT_EQ(partial.state_of("analyze"), NodeState::unknown);
  for (const char* n : {"start", "fetch-data", "compute", "end"}) EXPECT_EQ(partial.state_of(n), NodeState::done) << n;
}

TEST(Coordinator, MissingScriptRejected) {
  TempDir tmp;
  write_file_atomic(tmp / "w.yaml", "workflow:\n  nodes:\n    a: {name: a, script: nope.sh}\n");
  auto pool = mock_pool();
  EXPECT_THROW(Coordinator(load_workflow(tmp / "w.yaml"), pool, tmp / "run", on_mock()), ValidationError);
}

// Random DAGs up to six nodes; the submission sequence must be one of the brute-force topological sorts.
TEST(CoordinatorProperty, ExecutionOrderIsTopological) {
  std::mt19937 rng(31337);
  for (int n = 1; n <= 6; ++n) {
    for (int trial = 0; trial < 25; ++trial) {
      TempDir tmp;
      const auto dag = random_dag(rng, n);
      const auto path = write_dag(tmp.path(), dag, rng);
      const auto width = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
      auto pool = mock_pool(static_cast<int>(width));
      Coordinator cc(load_workflow(path), pool, tmp / "run", on_mock(width));
      const auto ledger = cc.run();
      ASSERT_EQ(ledger.overall(), RunState::done);
      const auto sorts = all_topological_sorts(dag);
      ASSERT_TRUE(sorts.count(cc.submission_order())) << "n=" << n << " trial=" << trial;
      for (const auto& [a, b] : dag.edges)
        ASSERT_GE(*first_time(ledger, b, RecordState::running), *first_time(ledger, a, RecordState::done));
    }
  }
}

TEST(CoordinatorProperty, FailureClosesDescendants) {
  std::mt19937 rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    TempDir tmp;
    const auto dag = random_dag(rng, 5);
    const std::string bad = dag.names[rng() % dag.names.size()];
    const auto path = write_dag(tmp.path(), dag, rng, {bad});
    auto pool = mock_pool(2);
    const auto graph = load_workflow(path);
    Coordinator cc(graph, pool, tmp / "run", on_mock(2));
    const auto ledger = cc.run();
    EXPECT_EQ(ledger.state_of(bad), NodeState::failed);
    for (const auto& d : graph.descendants(bad)) EXPECT_EQ(ledger.state_of(d), NodeState::cancelled) << d;
    for (const auto& [name, e] : ledger.nodes) EXPECT_TRUE(is_terminal(e.state)) << name;
  }
}

TEST(Coordinator, StatelessResync) {
  TempDir tmp;
  const auto wf = stage_chain_workflow(tmp.path());

  auto pool_a = mock_pool();
  const auto uninterrupted = Coordinator(load_workflow(wf), pool_a, tmp / "a", on_mock()).run();

  auto pool_b = mock_pool();
  {
    Coordinator first(load_workflow(wf), pool_b, tmp / "b", on_mock());
    for (int i = 0; i < 3; ++i) ASSERT_TRUE(first.step());
    const auto mid = first.ledger();
    const auto synced = sync(load_workflow(wf), tmp / "b", pool_b, "mock");
    for (const auto& [name, e] : synced.nodes)
      if (e.latest) EXPECT_EQ(e.state, mid.state_of(name)) << name;
    EXPECT_EQ(synced.history, mid.history);
    const auto log = parse_all(export_view(load_workflow(wf), mid, ViewFormat::log)).records;
    EXPECT_TRUE(std::is_sorted(log.begin(), log.end(),
                               [](const StatusRecord& x, const StatusRecord& y) { return x.timestamp < y.timestamp; }));
  }
  fs::remove(tmp / "b" / "ledger.yaml");

  const auto graph = load_workflow(wf);
  const auto rebuilt = sync(graph, tmp / "b", pool_b, "mock");
  EXPECT_EQ(rebuilt.overall(), RunState::running);
  Coordinator second(graph, pool_b, tmp / "b", on_mock());
  second.resume(rebuilt);
  const auto resumed = second.run();
  EXPECT_EQ(terminal_states(resumed), terminal_states(uninterrupted));
  EXPECT_EQ(terminal_states(sync(graph, tmp / "b", pool_b, "mock")), terminal_states(uninterrupted));
}

TEST(Coordinator, CancelActive) {
  TempDir tmp;
  stage_chain_workflow(tmp.path());
  write_file_atomic(tmp / "fetch-data.sh", "#!/bin/sh\n# mock: ticks=50\n");
  auto pool = mock_pool();
  Coordinator cc(load_workflow(tmp / "chain_workflow.yaml"), pool, tmp / "run", on_mock());
  cc.step();
  cc.step();
  cc.cancel_active();
  const auto ledger = cc.ledger();
  EXPECT_EQ(ledger.state_of("fetch-data"), NodeState::cancelled);
  EXPECT_EQ(ledger.state_of("compute"), NodeState::ready);
}

TEST(Views, Formats) {
  TempDir tmp;
  auto pool = mock_pool();
  const auto graph = load_workflow(stage_chain_workflow(tmp.path()));
  const auto ledger = Coordinator(graph, pool, tmp / "run", on_mock()).run();

  const auto table = export_view(graph, ledger, ViewFormat::table);
  const auto lines = split(trim(table), '\n');
  ASSERT_EQ(lines.size(), 6u);
  EXPECT_EQ(lines[0].rfind("node", 0), 0u);
  EXPECT_NE(lines[3].find("compute"), std::string::npos);
  EXPECT_NE(lines[3].find("done"), std::string::npos);

  const auto dot = export_view(graph, ledger, ViewFormat::dot);
  EXPECT_EQ(dot.rfind("digraph", 0), 0u);
  EXPECT_NE(dot.find("\"fetch-data\" -> \"compute\";"), std::string::npos);
  EXPECT_NE(dot.find("label=\"compute\\nprogress=100\""), std::string::npos) << dot;
  EXPECT_NE(dot.find("palegreen"), std::string::npos);

  const auto html = export_view(graph, ledger, ViewFormat::html);
  EXPECT_NE(html.find("<td>analyze</td>"), std::string::npos);

  const auto log = export_view(graph, ledger, ViewFormat::log);
  EXPECT_EQ(parse_all(log).records, ledger.history);
}

TEST(Views, EmptyGraph) {
  WorkflowGraph g;
  g.name = "empty";
  RunLedger l;
  const auto table = export_view(g, l, ViewFormat::table);
  EXPECT_EQ(split(trim(table), '\n').size(), 1u);
  EXPECT_EQ(export_view(g, l, ViewFormat::log), "");
}
