#pragma once

// Workflow DAGs of script nodes:
//
//   workflow:
//     nodes:
//       fetch-data: {name: fetch-data, script: fetch-data.sh, label: '{name}\nprogress={progress}'}
//       ...
//     dependencies:
//       - start,fetch-data,compute,analyze,end

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bench/template_engine.hpp"
#include "bench/util.hpp"

namespace bench {

enum class NodeState { undefined, ready, submitted, pending, running, done, failed, cancelled, unknown };

std::string_view to_string(NodeState s);
std::optional<NodeState> node_state_from(std::string_view s);
bool is_terminal(NodeState s);

struct WorkflowNode {
  std::string name;
  std::optional<std::string> user;
  std::optional<std::string> host;
  std::optional<std::filesystem::path> script;
  std::optional<std::string> label;
  NodeState status = NodeState::ready;
  int progress = 0;
  std::optional<std::string> resource;
};

struct WorkflowGraph {
  std::string name;
  std::vector<WorkflowNode> nodes;  // declaration order
  std::set<std::pair<std::string, std::string>> edges;
  /// Relative script paths resolve against this directory.
  std::filesystem::path base_dir;

  const WorkflowNode* node(std::string_view name) const;
  std::vector<std::string> predecessors(std::string_view name) const;
  std::vector<std::string> successors(std::string_view name) const;
  /// Every node reachable from `name`, excluding itself.
  std::vector<std::string> descendants(std::string_view name) const;
  std::optional<std::filesystem::path> script_path(const WorkflowNode& n) const;
};

/// Dependency entries "a,b,c" become chain edges a->b, b->c. Throws
/// ValidationError for unknown nodes and CycleError naming one cycle.
WorkflowGraph parse_workflow(std::string_view text, std::string name_hint = "workflow",
                             std::filesystem::path base_dir = {});
WorkflowGraph load_workflow(const std::filesystem::path& path);

/// Node-scope variables {name} {progress} {status} {host} {user} and the
/// time forms {now} {now.date} {now.time}. Unknown placeholders stay
/// verbatim. Without a label the node name is returned.
std::string render_node_label(const WorkflowNode& node, TimePoint now = Clock::now(),
                              std::vector<TemplateWarning>* warnings = nullptr);

}  // namespace bench
