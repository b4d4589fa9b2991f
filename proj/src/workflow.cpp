#include "bench/workflow.hpp"

#include <functional>
#include <map>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "bench/error.hpp"
#include "bench/spec_model.hpp"

namespace bench {

namespace fs = std::filesystem;

namespace {

constexpr NodeState kNodeStates[] = {NodeState::undefined, NodeState::ready,  NodeState::submitted,
                                     NodeState::pending,   NodeState::running, NodeState::done,
                                     NodeState::failed,    NodeState::cancelled, NodeState::unknown};

std::optional<std::string> opt_string(const YAML::Node& n, const char* key) {
  const YAML::Node v = n[key];
  if (!v || v.IsNull()) return std::nullopt;
  if (!v.IsScalar()) throw ValidationError(fmt::format("node field '{}' must be a scalar", key));
  return v.Scalar();
}

void check_acyclic(const WorkflowGraph& g) {
  std::map<std::string, int> color;  // 0 white, 1 grey, 2 black
  std::vector<std::string> stack;
  std::function<void(const std::string&)> visit = [&](const std::string& n) {
    color[n] = 1;
    stack.push_back(n);
    for (const auto& s : g.successors(n)) {
      if (color[s] == 1) {
        auto begin = std::find(stack.begin(), stack.end(), s);
        std::vector<std::string> cycle(begin, stack.end());
        cycle.push_back(s);
        throw CycleError("workflow '" + g.name + "' has a cycle: " + join(cycle, " -> "));
      }
      if (color[s] == 0) visit(s);
    }
    stack.pop_back();
    color[n] = 2;
  };
  for (const auto& n : g.nodes)
    if (color[n.name] == 0) visit(n.name);
}

}  // namespace

std::string_view to_string(NodeState s) {
  switch (s) {
    case NodeState::undefined: return "undefined";
    case NodeState::ready: return "ready";
    case NodeState::submitted: return "submitted";
    case NodeState::pending: return "pending";
    case NodeState::running: return "running";
    case NodeState::done: return "done";
    case NodeState::failed: return "failed";
    case NodeState::cancelled: return "cancelled";
    case NodeState::unknown: return "unknown";
  }
  return "unknown";
}

std::optional<NodeState> node_state_from(std::string_view s) {
  for (auto st : kNodeStates)
    if (to_string(st) == s) return st;
  return std::nullopt;
}

bool is_terminal(NodeState s) { return s == NodeState::done || s == NodeState::failed || s == NodeState::cancelled; }

const WorkflowNode* WorkflowGraph::node(std::string_view n) const {
  for (const auto& x : nodes)
    if (x.name == n) return &x;
  return nullptr;
}

std::vector<std::string> WorkflowGraph::predecessors(std::string_view n) const {
  std::vector<std::string> out;
  for (const auto& [a, b] : edges)
    if (b == n) out.push_back(a);
  return out;
}

std::vector<std::string> WorkflowGraph::successors(std::string_view n) const {
  std::vector<std::string> out;
  for (const auto& [a, b] : edges)
    if (a == n) out.push_back(b);
  return out;
}

std::vector<std::string> WorkflowGraph::descendants(std::string_view n) const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::vector<std::string> todo = successors(n);
  while (!todo.empty()) {
    auto cur = todo.back();
    todo.pop_back();
    if (!seen.insert(cur).second) continue;
    out.push_back(cur);
    for (auto& s : successors(cur)) todo.push_back(s);
  }
  return out;
}

std::optional<fs::path> WorkflowGraph::script_path(const WorkflowNode& n) const {
  if (!n.script) return std::nullopt;
  if (n.script->is_absolute() || base_dir.empty()) return *n.script;
  return base_dir / *n.script;
}

WorkflowGraph parse_workflow(std::string_view text, std::string name_hint, fs::path base_dir) {
  YAML::Node doc;
  try {
    doc = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ParseError("malformed workflow YAML: " + e.msg, e.mark.line + 1, e.mark.column + 1);
  }
  check_duplicate_keys(doc);
  const YAML::Node& root = doc;
  const YAML::Node wf = root.IsMap() && root["workflow"] ? root["workflow"] : YAML::Node();
  if (!wf || !wf.IsMap()) throw ValidationError("workflow file needs a top-level 'workflow' mapping");

  WorkflowGraph g;
  g.name = wf["name"] ? wf["name"].as<std::string>() : std::move(name_hint);
  g.base_dir = std::move(base_dir);

  const YAML::Node nodes = wf["nodes"];
  if (!nodes || !nodes.IsMap()) throw ValidationError("workflow.nodes must be a mapping");
  for (const auto& kv : nodes) {
    WorkflowNode n;
    n.name = kv.first.as<std::string>();
    const YAML::Node body = kv.second;
    if (!body.IsMap() && !body.IsNull()) throw ValidationError("node '" + n.name + "' must be a mapping");
    if (body.IsMap()) {
      if (auto declared = opt_string(body, "name"); declared && *declared != n.name)
        throw ValidationError(fmt::format("node key '{}' does not match its name '{}'", n.name, *declared));
      n.user = opt_string(body, "user");
      n.host = opt_string(body, "host");
      if (auto s = opt_string(body, "script")) n.script = fs::path(*s);
      n.label = opt_string(body, "label");
      n.resource = opt_string(body, "resource");
      if (auto st = opt_string(body, "status")) {
        auto parsed = node_state_from(*st);
        if (!parsed) throw ValidationError(fmt::format("node '{}' has unknown status '{}'", n.name, *st));
        n.status = *parsed;
      }
      if (auto p = opt_string(body, "progress")) {
        try {
          n.progress = std::stoi(*p);
        } catch (const std::exception&) {
          throw ValidationError(fmt::format("node '{}' progress '{}' is not an integer", n.name, *p));
        }
        if (n.progress < 0 || n.progress > 100)
          throw ValidationError(fmt::format("node '{}' progress {} outside [0,100]", n.name, n.progress));
      }
    }
    g.nodes.push_back(std::move(n));
  }

  if (const YAML::Node deps = wf["dependencies"]) {
    if (!deps.IsSequence() && !deps.IsNull()) throw ValidationError("workflow.dependencies must be a list");
    for (const auto& entry : deps) {
      std::vector<std::string> chain;
      if (entry.IsSequence()) {
        for (const auto& x : entry) chain.push_back(trim(x.as<std::string>()));
      } else {
        for (const auto& x : split(entry.as<std::string>(), ',')) chain.push_back(trim(x));
      }
      for (const auto& n : chain)
        if (!g.node(n)) throw ValidationError(fmt::format("dependency names unknown node '{}'", n));
      for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
        if (chain[i] == chain[i + 1]) throw CycleError("node '" + chain[i] + "' depends on itself");
        g.edges.emplace(chain[i], chain[i + 1]);
      }
    }
  }
  check_acyclic(g);
  return g;
}

WorkflowGraph load_workflow(const fs::path& path) {
  return parse_workflow(read_file(path), path.stem().string(), fs::absolute(path).parent_path());
}

std::string render_node_label(const WorkflowNode& node, TimePoint now, std::vector<TemplateWarning>* warnings) {
  if (!node.label) return node.name;
  const auto tpl = scan(*node.label);
  const auto iso = format_utc(now);
  auto resolve = [&](std::string_view path) -> std::string {
    if (path == "name") return node.name;
    if (path == "progress") return std::to_string(node.progress);
    if (path == "status") return std::string(to_string(node.status));
    if (path == "host" && node.host) return *node.host;
    if (path == "user" && node.user) return *node.user;
    if (path == "now") return iso;
    if (path == "now.date") return iso.substr(0, 10);
    if (path == "now.time") return iso.substr(11, 8);
    throw UndefinedVariable(std::string(path));
  };
  auto out = render(tpl, resolve, RenderMode::lenient);
  if (warnings) warnings->insert(warnings->end(), out.warnings.begin(), out.warnings.end());
  return out.text;
}

}  // namespace bench
