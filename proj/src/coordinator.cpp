#include "bench/coordinator.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "bench/error.hpp"

namespace bench {

namespace fs = std::filesystem;

namespace {

NodeState from_record(RecordState s) {
  switch (s) {
    case RecordState::ready: return NodeState::ready;
    case RecordState::submitted: return NodeState::submitted;
    case RecordState::pending: return NodeState::pending;
    case RecordState::running: return NodeState::running;
    case RecordState::done: return NodeState::done;
    case RecordState::failed: return NodeState::failed;
    case RecordState::cancelled: return NodeState::cancelled;
  }
  return NodeState::unknown;
}

std::optional<JobHandle> read_handle(const fs::path& dir) {
  auto text = try_read_file(dir / "handle.json");
  if (!text) return std::nullopt;
  try {
    return nlohmann::json::parse(*text).get<JobHandle>();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

struct NodeRead {
  NodeEntry entry;
  std::vector<StatusRecord> records;
  bool has_file = false;
};

NodeRead read_node(Scheduler& sched, const fs::path& dir) {
  NodeRead out;
  out.entry.handle = read_handle(dir);
  std::optional<std::string> text;
  try {
    text = sched.fetch_text(dir / "status.log");
  } catch (const TransportError&) {
    text.reset();
  }
  if (!text) {
    out.entry.state = NodeState::unknown;
    return out;
  }
  out.has_file = true;
  auto scan = parse_all(*text);
  out.records = std::move(scan.records);
  for (const auto& r : out.records)
    if (!out.entry.latest || r.timestamp >= out.entry.latest->timestamp) out.entry.latest = r;
  out.entry.state = out.entry.latest ? from_record(out.entry.latest->state) : NodeState::unknown;
  return out;
}

using MissingState = std::function<NodeState(const std::string&)>;

RunLedger build_ledger(const WorkflowGraph& graph, const fs::path& run_dir,
                       const std::function<Scheduler&(const WorkflowNode&)>& sched_for, const MissingState& missing) {
  RunLedger ledger;
  ledger.workflow = graph.name;
  for (const auto& node : graph.nodes) {
    auto read = read_node(sched_for(node), run_dir / node.name);
    if (!read.has_file) read.entry.state = missing(node.name);
    for (auto& r : read.records) ledger.history.push_back(std::move(r));
    ledger.nodes[node.name] = std::move(read.entry);
  }
  std::stable_sort(ledger.history.begin(), ledger.history.end(),
                   [](const StatusRecord& a, const StatusRecord& b) { return a.timestamp < b.timestamp; });
  if (!ledger.history.empty()) {
    ledger.started_at = ledger.history.front().timestamp;
    ledger.updated_at = ledger.history.back().timestamp;
  }
  return ledger;
}

std::string escape_html(std::string_view s) {
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

std::string escape_dot(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"') out += '\\';
    out += c;
  }
  return out;
}

std::string_view fill_color(NodeState s) {
  switch (s) {
    case NodeState::done: return "palegreen";
    case NodeState::failed: return "salmon";
    case NodeState::cancelled: return "lightgrey";
    case NodeState::running: return "lightblue";
    case NodeState::submitted:
    case NodeState::pending: return "lightyellow";
    default: return "white";
  }
}

struct Row {
  std::string node, status, progress, host, updated;
};

std::vector<Row> table_rows(const WorkflowGraph& graph, const RunLedger& ledger) {
  std::vector<Row> rows;
  for (const auto& n : graph.nodes) {
    Row r;
    r.node = n.name;
    auto it = ledger.nodes.find(n.name);
    const NodeEntry* e = it == ledger.nodes.end() ? nullptr : &it->second;
    r.status = std::string(to_string(e ? e->state : n.status));
    r.progress = std::to_string(e && e->latest ? e->latest->progress : n.progress);
    r.host = n.host ? *n.host : (e && e->handle ? e->handle->resource : "-");
    r.updated = e && e->latest ? format_utc(e->latest->timestamp) : "-";
    rows.push_back(std::move(r));
  }
  return rows;
}

WorkflowNode with_ledger(const WorkflowNode& n, const RunLedger& ledger) {
  WorkflowNode copy = n;
  if (auto it = ledger.nodes.find(n.name); it != ledger.nodes.end()) {
    copy.status = it->second.state;
    if (it->second.latest) copy.progress = it->second.latest->progress;
  }
  return copy;
}

}  // namespace

std::string_view to_string(RunState s) {
  switch (s) {
    case RunState::running: return "running";
    case RunState::done: return "done";
    case RunState::failed: return "failed";
    case RunState::cancelled: return "cancelled";
  }
  return "running";
}

NodeState RunLedger::state_of(const std::string& node) const {
  auto it = nodes.find(node);
  return it == nodes.end() ? NodeState::unknown : it->second.state;
}

RunState RunLedger::overall() const {
  bool all_terminal = true, any_failed = false, any_cancelled = false;
  for (const auto& [name, e] : nodes) {
    all_terminal = all_terminal && is_terminal(e.state);
    any_failed = any_failed || e.state == NodeState::failed;
    any_cancelled = any_cancelled || e.state == NodeState::cancelled;
  }
  if (any_failed) return RunState::failed;
  if (!all_terminal) return RunState::running;
  return any_cancelled ? RunState::cancelled : RunState::done;
}

std::string ledger_to_yaml(const RunLedger& ledger) {
  YAML::Emitter em;
  em << YAML::BeginMap;
  em << YAML::Key << "workflow" << YAML::Value << ledger.workflow;
  em << YAML::Key << "state" << YAML::Value << std::string(to_string(ledger.overall()));
  if (ledger.started_at) em << YAML::Key << "started_at" << YAML::Value << format_utc(*ledger.started_at);
  if (ledger.updated_at) em << YAML::Key << "updated_at" << YAML::Value << format_utc(*ledger.updated_at);
  em << YAML::Key << "nodes" << YAML::Value << YAML::BeginMap;
  for (const auto& [name, e] : ledger.nodes) {
    em << YAML::Key << name << YAML::Value << YAML::BeginMap;
    em << YAML::Key << "state" << YAML::Value << std::string(to_string(e.state));
    if (e.latest) em << YAML::Key << "latest" << YAML::Value << YAML::DoubleQuoted << emit(*e.latest);
    if (e.handle) {
      em << YAML::Key << "handle" << YAML::Value << YAML::BeginMap;
      em << YAML::Key << "resource" << YAML::Value << e.handle->resource;
      em << YAML::Key << "native_id" << YAML::Value << YAML::DoubleQuoted << e.handle->native_id;
      em << YAML::Key << "experiment_id" << YAML::Value << e.handle->experiment_id;
      em << YAML::Key << "submitted_at" << YAML::Value << format_utc(e.handle->submitted_at);
      em << YAML::Key << "workdir" << YAML::Value << e.handle->workdir;
      em << YAML::EndMap;
    }
    em << YAML::EndMap;
  }
  em << YAML::EndMap;
  em << YAML::Key << "history" << YAML::Value << YAML::BeginSeq;
  for (const auto& r : ledger.history) em << YAML::DoubleQuoted << emit(r);
  em << YAML::EndSeq << YAML::EndMap;
  return std::string(em.c_str()) + "\n";
}

RunLedger ledger_from_yaml(std::string_view text) {
  const YAML::Node doc = YAML::Load(std::string(text));
  RunLedger ledger;
  ledger.workflow = doc["workflow"].as<std::string>();
  if (doc["started_at"]) ledger.started_at = parse_utc(doc["started_at"].as<std::string>());
  if (doc["updated_at"]) ledger.updated_at = parse_utc(doc["updated_at"].as<std::string>());
  for (const auto& kv : doc["nodes"]) {
    NodeEntry e;
    const YAML::Node body = kv.second;
    e.state = node_state_from(body["state"].as<std::string>()).value_or(NodeState::unknown);
    if (body["latest"]) e.latest = parse_status_line(body["latest"].as<std::string>());
    if (const YAML::Node h = body["handle"]) {
      e.handle = JobHandle{h["resource"].as<std::string>(), h["native_id"].as<std::string>(),
                           h["experiment_id"].as<std::string>(), parse_utc(h["submitted_at"].as<std::string>()),
                           h["workdir"].as<std::string>()};
    }
    ledger.nodes[kv.first.as<std::string>()] = std::move(e);
  }
  for (const auto& line : doc["history"])
    if (auto r = parse_status_line(line.as<std::string>())) ledger.history.push_back(*r);
  return ledger;
}

// ---- scheduler pool ----------------------------------------------------------

SchedulerPool::SchedulerPool(std::vector<ResourceTarget> targets, std::shared_ptr<CommandRunner> runner,
                             MockOptions mock)
    : targets_(std::move(targets)), runner_(std::move(runner)), mock_(std::move(mock)) {
  if (targets_.empty()) targets_ = parse_resources("");
}

void SchedulerPool::add(std::shared_ptr<Scheduler> scheduler) {
  live_[scheduler->target().name] = std::move(scheduler);
}

Scheduler& SchedulerPool::get(const std::string& name) {
  if (auto it = live_.find(name); it != live_.end()) return *it->second;
  const auto& target = find_resource(targets_, name);
  auto sched = std::shared_ptr<Scheduler>(make_scheduler(target, runner_, mock_));
  live_[name] = sched;
  return *sched;
}

Scheduler& SchedulerPool::for_node(const WorkflowNode& node, const std::optional<std::string>& override_target) {
  if (node.resource) return get(*node.resource);
  if (override_target) return get(*override_target);
  if (node.host && *node.host != "localhost" && *node.host != "127.0.0.1") {
    const auto name = "ssh:" + (node.user ? *node.user + "@" : std::string()) + *node.host;
    if (!live_.count(name)) {
      ResourceTarget t;
      t.name = name;
      t.kind = ResourceKind::ssh;
      t.host = node.host;
      t.user = node.user;
      live_[name] = std::shared_ptr<Scheduler>(make_scheduler(t, runner_, mock_));
    }
    return *live_[name];
  }
  return get("local");
}

// ---- coordinator -------------------------------------------------------------

Coordinator::Coordinator(WorkflowGraph graph, SchedulerPool& pool, fs::path run_dir, RunOptions opts)
    : graph_(std::move(graph)), pool_(pool), run_dir_(std::move(run_dir)), opts_(std::move(opts)) {
  if (opts_.width < 1) throw ValidationError("workflow width must be >= 1");
  for (const auto& n : graph_.nodes) {
    auto script = graph_.script_path(n);
    auto& sched = scheduler_for(n);
    const bool local_files = sched.target().kind != ResourceKind::ssh;
    if (script && local_files && !fs::exists(*script))
      throw ValidationError(fmt::format("node '{}': script {} does not exist", n.name, script->string()));
    live_[n.name] = Live{NodeState::ready, std::nullopt};
  }
  if (!opts_.clock) {
    Scheduler* clock_source = &pool_.get(opts_.target.value_or("local"));
    opts_.clock = [clock_source] { return clock_source->now(); };
  }
  fs::create_directories(run_dir_);
}

fs::path Coordinator::node_dir(const std::string& node) const { return run_dir_ / node; }

Scheduler& Coordinator::scheduler_for(const WorkflowNode& node) { return pool_.for_node(node, opts_.target); }

void Coordinator::write_record(const WorkflowNode& node, RecordState state, int progress, const std::string& msg) {
  StatusRecord r{opts_.clock(), scheduler_for(node).target().name, node.name, state, progress, msg};
  append_file(node_dir(node.name) / "status.log", emit(r) + "\n");
  live_[node.name].state = from_record(state);
}

void Coordinator::resume(const RunLedger& ledger) {
  for (const auto& n : graph_.nodes) {
    auto it = ledger.nodes.find(n.name);
    if (it == ledger.nodes.end()) continue;
    const auto& e = it->second;
    auto& live = live_[n.name];
    if (is_terminal(e.state)) {
      live.state = e.state;
      live.handle = e.handle;
    } else if (e.handle) {
      live.state = e.state == NodeState::unknown ? NodeState::submitted : e.state;
      live.handle = e.handle;
      submitted_.push_back(n.name);
    } else {
      live.state = NodeState::ready;
    }
  }
}

void Coordinator::refresh(const WorkflowNode& node) {
  auto& live = live_[node.name];
  auto& sched = scheduler_for(node);
  auto read = read_node(sched, node_dir(node.name));
  if (read.entry.latest) live.state = from_record(read.entry.latest->state);
  if (is_terminal(live.state) || !live.handle) return;

  JobState js = JobState::unknown;
  try {
    js = sched.status(*live.handle);
  } catch (const TransportError&) {
    return;  // retry next round
  }
  switch (js) {
    case JobState::done: write_record(node, RecordState::done, 100, ""); break;
    case JobState::failed: write_record(node, RecordState::failed, 0, "job failed"); break;
    case JobState::cancelled: write_record(node, RecordState::cancelled, 0, "cancelled by scheduler"); break;
    case JobState::running:
      if (live.state == NodeState::submitted || live.state == NodeState::pending) live.state = NodeState::running;
      break;
    default: break;
  }
}

void Coordinator::propagate_failure(const std::string& failed) {
  for (const auto& d : graph_.descendants(failed)) {
    auto& live = live_[d];
    if (is_terminal(live.state) || live.handle) continue;
    write_record(*graph_.node(d), RecordState::cancelled, 0, "upstream " + failed + " did not complete");
  }
}

bool Coordinator::start_ready() {
  bool started_any = false;
  for (bool changed = true; changed;) {
    changed = false;
    std::size_t active = 0;
    for (const auto& [name, live] : live_)
      if (live.handle && !is_terminal(live.state)) ++active;

    for (const auto& node : graph_.nodes) {
      auto& live = live_[node.name];
      if (live.handle || is_terminal(live.state)) continue;
      bool preds_done = true;
      for (const auto& p : graph_.predecessors(node.name)) preds_done = preds_done && live_[p].state == NodeState::done;
      if (!preds_done) continue;

      auto script = graph_.script_path(node);
      if (!script) {
        write_record(node, RecordState::done, 100, "");
        changed = started_any = true;
        continue;
      }
      if (active >= opts_.width) continue;
      auto& sched = scheduler_for(node);
      try {
        write_record(node, RecordState::submitted, 0, "");
        live.handle = sched.submit(*script, node.name, node_dir(node.name));
        write_file_atomic(node_dir(node.name) / "handle.json", nlohmann::json(*live.handle).dump() + "\n");
        submitted_.push_back(node.name);
        ++active;
        changed = started_any = true;
      } catch (const PolicyError&) {
        // queue full: stays waiting until a slot frees up
        live.state = NodeState::ready;
      } catch (const Error& e) {
        write_record(node, RecordState::failed, 0, e.what());
        propagate_failure(node.name);
        changed = started_any = true;
      }
    }
  }
  return started_any;
}

bool Coordinator::finished() const {
  return std::all_of(live_.begin(), live_.end(), [](const auto& kv) { return is_terminal(kv.second.state); });
}

bool Coordinator::step() {
  if (finished()) {
    persist();
    return false;
  }
  for (const auto& node : graph_.nodes) {
    const auto& live = live_[node.name];
    if (live.handle && !is_terminal(live.state)) refresh(node);
  }
  for (const auto& node : graph_.nodes) {
    const auto st = live_[node.name].state;
    if (st == NodeState::failed || st == NodeState::cancelled) propagate_failure(node.name);
  }
  const bool started = start_ready();
  if (finished()) {
    persist();
    return false;
  }

  std::vector<Scheduler*> busy;
  for (const auto& node : graph_.nodes) {
    const auto& live = live_[node.name];
    if (!live.handle || is_terminal(live.state)) continue;
    auto* s = &scheduler_for(node);
    if (std::find(busy.begin(), busy.end(), s) == busy.end()) busy.push_back(s);
  }
  if (busy.empty() && !started) throw Error(ErrorKind::generic, "workflow '" + graph_.name + "' cannot make progress");
  for (auto* s : busy) s->idle(opts_.poll);
  persist();
  return true;
}

RunLedger Coordinator::run() {
  while (step()) {
  }
  return ledger();
}

void Coordinator::cancel_active() {
  for (const auto& node : graph_.nodes) {
    auto& live = live_[node.name];
    if (!live.handle || is_terminal(live.state)) continue;
    try {
      scheduler_for(node).cancel(*live.handle);
    } catch (const Error&) {
    }
    refresh(node);
  }
  persist();
}

RunLedger Coordinator::ledger() {
  return build_ledger(
      graph_, run_dir_, [this](const WorkflowNode& n) -> Scheduler& { return scheduler_for(n); },
      [this](const std::string& n) { return live_[n].state; });
}

void Coordinator::persist() { write_file_atomic(run_dir_ / "ledger.yaml", ledger_to_yaml(ledger())); }

RunLedger sync(const WorkflowGraph& graph, const fs::path& run_dir, SchedulerPool& pool,
               const std::optional<std::string>& target) {
  return build_ledger(
      graph, run_dir, [&](const WorkflowNode& n) -> Scheduler& { return pool.for_node(n, target); },
      [](const std::string&) { return NodeState::unknown; });
}

// ---- views -------------------------------------------------------------------

std::optional<ViewFormat> view_format_from(std::string_view s) {
  if (s == "table") return ViewFormat::table;
  if (s == "dot") return ViewFormat::dot;
  if (s == "html") return ViewFormat::html;
  if (s == "log") return ViewFormat::log;
  return std::nullopt;
}

std::string export_view(const WorkflowGraph& graph, const RunLedger& ledger, ViewFormat format, TimePoint now) {
  switch (format) {
    case ViewFormat::table: {
      const Row header{"node", "status", "progress", "host", "updated_at"};
      auto rows = table_rows(graph, ledger);
      std::size_t w[4] = {header.node.size(), header.status.size(), header.progress.size(), header.host.size()};
      for (const auto& r : rows) {
        w[0] = std::max(w[0], r.node.size());
        w[1] = std::max(w[1], r.status.size());
        w[2] = std::max(w[2], r.progress.size());
        w[3] = std::max(w[3], r.host.size());
      }
      auto line = [&](const Row& r) {
        return fmt::format("{:<{}}  {:<{}}  {:>{}}  {:<{}}  {}\n", r.node, w[0], r.status, w[1], r.progress, w[2],
                           r.host, w[3], r.updated);
      };
      std::string out = line(header);
      for (const auto& r : rows) out += line(r);
      return out;
    }
    case ViewFormat::dot: {
      std::string out = fmt::format("digraph \"{}\" {{\n  rankdir=LR;\n  node [shape=box, style=filled];\n",
                                    escape_dot(graph.name));
      for (const auto& n : graph.nodes) {
        const auto view = with_ledger(n, ledger);
        out += fmt::format("  \"{}\" [label=\"{}\", fillcolor=\"{}\"];\n", escape_dot(n.name),
                           escape_dot(render_node_label(view, now)), fill_color(view.status));
      }
      for (const auto& n : graph.nodes)
        for (const auto& succ : graph.successors(n.name))
          out += fmt::format("  \"{}\" -> \"{}\";\n", escape_dot(n.name), escape_dot(succ));
      out += "}\n";
      return out;
    }
    case ViewFormat::html: {
      std::string out = "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n";
      out += fmt::format("<title>{}</title>\n", escape_html(graph.name));
      out += "<style>\nbody{font-family:sans-serif}table{border-collapse:collapse}"
             "td,th{border:1px solid #999;padding:4px 8px}th{background:#eee}"
             ".done{background:#cfc}.failed{background:#fcc}.running{background:#cdf}.cancelled{background:#ddd}\n"
             "</style>\n</head>\n<body>\n";
      out += fmt::format("<h1>{}</h1>\n<p>state: {}</p>\n<table>\n", escape_html(graph.name),
                         to_string(ledger.overall()));
      out += "<tr><th>node</th><th>status</th><th>progress</th><th>host</th><th>updated_at</th></tr>\n";
      for (const auto& r : table_rows(graph, ledger)) {
        out += fmt::format("<tr class=\"{0}\"><td>{1}</td><td>{0}</td><td>{2}</td><td>{3}</td><td>{4}</td></tr>\n",
                           escape_html(r.status), escape_html(r.node), escape_html(r.progress), escape_html(r.host),
                           escape_html(r.updated));
      }
      out += "</table>\n</body>\n</html>\n";
      return out;
    }
    case ViewFormat::log: {
      std::string out;
      for (const auto& r : ledger.history) out += emit(r) + "\n";
      return out;
    }
  }
  return {};
}

}  // namespace bench
