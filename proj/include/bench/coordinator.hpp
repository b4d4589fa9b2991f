#pragma once

// Runs workflow DAGs on scheduler adapters. All run state lives in per-node
// files under the run directory:
//   <run_dir>/<node>/status.log   status records (see status_protocol.hpp)
//   <run_dir>/<node>/handle.json  scheduler handle, written at submission
//   <run_dir>/ledger.yaml         last ledger snapshot (informational)
// so a fresh client can rebuild the ledger with sync() and resume.

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bench/scheduler.hpp"
#include "bench/status_protocol.hpp"
#include "bench/workflow.hpp"

namespace bench {

struct NodeEntry {
  NodeState state = NodeState::ready;
  std::optional<StatusRecord> latest;
  std::optional<JobHandle> handle;

  bool operator==(const NodeEntry&) const = default;
};

enum class RunState { running, done, failed, cancelled };
std::string_view to_string(RunState s);

struct RunLedger {
  std::string workflow;
  std::map<std::string, NodeEntry> nodes;
  std::optional<TimePoint> started_at;
  std::optional<TimePoint> updated_at;
  /// Every record from every node's status file, sorted by timestamp (stable).
  std::vector<StatusRecord> history;

  NodeState state_of(const std::string& node) const;
  RunState overall() const;
  bool operator==(const RunLedger&) const = default;
};

std::string ledger_to_yaml(const RunLedger& ledger);
RunLedger ledger_from_yaml(std::string_view text);

/// Lazily builds adapters for resource targets; explicit instances may be added.
class SchedulerPool {
 public:
  explicit SchedulerPool(std::vector<ResourceTarget> targets = {}, std::shared_ptr<CommandRunner> runner = nullptr,
                         MockOptions mock = {});

  void add(std::shared_ptr<Scheduler> scheduler);
  Scheduler& get(const std::string& name);

  /// node.resource, else the override, else an ssh target for a non-local
  /// host, else "local".
  Scheduler& for_node(const WorkflowNode& node, const std::optional<std::string>& override_target);

 private:
  std::vector<ResourceTarget> targets_;
  std::shared_ptr<CommandRunner> runner_;
  MockOptions mock_;
  std::map<std::string, std::shared_ptr<Scheduler>> live_;
};

struct RunOptions {
  std::size_t width = 4;
  std::chrono::milliseconds poll{1000};
  /// Resource for nodes that do not name one.
  std::optional<std::string> target;
  /// Timestamp source for coordinator-written records; defaults to the
  /// default target's clock so simulated and real records never interleave.
  std::function<TimePoint()> clock;
};

class Coordinator {
 public:
  Coordinator(WorkflowGraph graph, SchedulerPool& pool, std::filesystem::path run_dir, RunOptions opts = {});

  /// Continue from a ledger rebuilt by sync(): terminal nodes stay terminal,
  /// nodes with a handle are polled, the rest start normally.
  void resume(const RunLedger& ledger);

  /// One coordination round. Returns false once every node is terminal.
  bool step();
  RunLedger run();
  /// Cancels active nodes; waiting nodes are left untouched.
  void cancel_active();

  RunLedger ledger();
  const std::vector<std::string>& submission_order() const { return submitted_; }
  bool finished() const;

 private:
  struct Live {
    NodeState state = NodeState::ready;
    std::optional<JobHandle> handle;
  };

  std::filesystem::path node_dir(const std::string& node) const;
  Scheduler& scheduler_for(const WorkflowNode& node);
  void write_record(const WorkflowNode& node, RecordState state, int progress, const std::string& msg);
  void refresh(const WorkflowNode& node);
  void propagate_failure(const std::string& node);
  bool start_ready();
  void persist();

  WorkflowGraph graph_;
  SchedulerPool& pool_;
  std::filesystem::path run_dir_;
  RunOptions opts_;
  std::map<std::string, Live> live_;
  std::vector<std::string> submitted_;
};

/// Rebuilds the ledger from status files (read through each node's resource)
/// and handle.json files only. Missing or unreadable status file -> unknown.
RunLedger sync(const WorkflowGraph& graph, const std::filesystem::path& run_dir, SchedulerPool& pool,
               const std::optional<std::string>& target = std::nullopt);

enum class ViewFormat { table, dot, html, log };
std::optional<ViewFormat> view_format_from(std::string_view s);

std::string export_view(const WorkflowGraph& graph, const RunLedger& ledger, ViewFormat format,
                        TimePoint now = Clock::now());

}  // namespace bench
