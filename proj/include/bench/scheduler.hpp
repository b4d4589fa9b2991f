#pragma once

// Uniform submit/status/cancel over SLURM, LSF, SSH, local processes and a
// deterministic tick-driven mock.

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "bench/command_runner.hpp"
#include "bench/status_protocol.hpp"
#include "bench/util.hpp"

namespace bench {

enum class JobState { pending, running, done, failed, cancelled, unknown };

std::string_view to_string(JobState s);
std::optional<JobState> job_state_from(std::string_view s);
bool is_terminal(JobState s);

struct QueuePolicy {
  std::optional<int> max_queued_jobs;
  std::optional<int> max_wall_minutes;
  std::optional<int> max_nodes;

  void validate() const;
  bool operator==(const QueuePolicy&) const = default;
};

QueuePolicy parse_policy(const YAML::Node& node);

enum class ResourceKind { local, ssh, slurm, lsf, mock };

std::string_view to_string(ResourceKind k);

struct ResourceTarget {
  std::string name;
  ResourceKind kind = ResourceKind::local;
  std::optional<std::string> host;
  std::optional<std::string> user;
  std::optional<std::string> remote_workdir;
  std::optional<QueuePolicy> policy;
  /// Jobs allowed to run at once (local/ssh concurrency, mock queue width).
  int width = 1;

  void validate() const;
};

/// `resources:` as a mapping name -> fields or a list of entries with `name`.
/// Built-in `local` and `mock` targets are added unless redefined.
std::vector<ResourceTarget> parse_resources(std::string_view yaml_text);
std::vector<ResourceTarget> load_resources(const std::optional<std::filesystem::path>& path);
const ResourceTarget& find_resource(const std::vector<ResourceTarget>& targets, std::string_view name);

struct JobHandle {
  std::string resource;
  std::string native_id;
  std::string experiment_id;
  TimePoint submitted_at;
  std::string workdir;

  bool operator==(const JobHandle&) const = default;
};

void to_json(nlohmann::json& j, const JobHandle& h);
void from_json(const nlohmann::json& j, JobHandle& h);

class Scheduler {
 public:
  explicit Scheduler(ResourceTarget target);
  virtual ~Scheduler() = default;
  Scheduler(const Scheduler&) = delete;
  Scheduler& operator=(const Scheduler&) = delete;

  const ResourceTarget& target() const { return target_; }

  /// Policy pre-check, then exactly one submission attempt (never retried).
  /// `workdir` holds status.log / exit_code; defaults to the script's directory.
  JobHandle submit(const std::filesystem::path& script, const std::string& experiment_id,
                   const std::optional<std::filesystem::path>& workdir = std::nullopt);
  /// Never throws for unrecognized native states (-> unknown). Terminal
  /// states are sticky and states never move backwards.
  JobState status(const JobHandle& handle);
  /// Idempotent: a finished job keeps its terminal state.
  JobState cancel(const JobHandle& handle);

  /// Jobs submitted through this adapter that are not yet terminal.
  std::size_t live_jobs();

  virtual TimePoint now() const { return Clock::now(); }
  /// One poll interval: sleeps for real targets, advances one tick for the mock.
  virtual void idle(std::chrono::milliseconds poll);
  /// Reads a file where the job runs (remote for ssh-hosted targets).
  virtual std::optional<std::string> fetch_text(const std::filesystem::path& path);

 protected:
  struct SubmitRequest {
    std::filesystem::path script;
    std::string experiment_id;
    std::filesystem::path workdir;
  };

  virtual std::string do_submit(const SubmitRequest& req) = 0;
  virtual JobState do_status(const JobHandle& handle) = 0;
  virtual JobState do_cancel(const JobHandle& handle) = 0;

 private:
  JobState observe(const std::string& native_id, JobState reported);

  ResourceTarget target_;
  std::mutex submit_mutex_;
  std::mutex state_mutex_;
  std::map<std::string, JobState> known_;
  std::map<std::string, JobHandle> handles_;
};

/// SLURM via sbatch/squeue/sacct/scancel, remote over ssh when host is set.
class SlurmScheduler final : public Scheduler {
 public:
  SlurmScheduler(ResourceTarget target, std::shared_ptr<CommandRunner> runner);
  std::optional<std::string> fetch_text(const std::filesystem::path& path) override;

  static std::optional<std::string> parse_submit_output(std::string_view out);
  /// squeue %T / sacct State vocabulary -> JobState.
  static JobState map_state(std::string_view native);

 protected:
  std::string do_submit(const SubmitRequest& req) override;
  JobState do_status(const JobHandle& handle) override;
  JobState do_cancel(const JobHandle& handle) override;

 private:
  CommandResult run(Command cmd);
  std::shared_ptr<CommandRunner> runner_;
};

/// LSF via bsub/bjobs/bkill.
class LsfScheduler final : public Scheduler {
 public:
  LsfScheduler(ResourceTarget target, std::shared_ptr<CommandRunner> runner);
  std::optional<std::string> fetch_text(const std::filesystem::path& path) override;

  static std::optional<std::string> parse_submit_output(std::string_view out);
  static JobState map_state(std::string_view stat);

 protected:
  std::string do_submit(const SubmitRequest& req) override;
  JobState do_status(const JobHandle& handle) override;
  JobState do_cancel(const JobHandle& handle) override;

 private:
  CommandResult run(Command cmd);
  std::shared_ptr<CommandRunner> runner_;
};

/// Shell snippet that runs `script` in `workdir`, reports running/done/failed
/// into workdir/status.log and leaves workdir/exit_code on completion.
std::string job_wrapper(const std::filesystem::path& script, const std::filesystem::path& workdir,
                        const std::string& resource, const std::string& job_name);

/// Detached local processes; native id is the process id.
class LocalScheduler final : public Scheduler {
 public:
  explicit LocalScheduler(ResourceTarget target);

 protected:
  std::string do_submit(const SubmitRequest& req) override;
  JobState do_status(const JobHandle& handle) override;
  JobState do_cancel(const JobHandle& handle) override;

 private:
  std::mutex cancelled_mutex_;
  std::map<std::string, bool> cancelled_;
};

/// Background processes on a remote host started over the system ssh client.
class SshScheduler final : public Scheduler {
 public:
  SshScheduler(ResourceTarget target, std::shared_ptr<CommandRunner> runner);
  std::optional<std::string> fetch_text(const std::filesystem::path& path) override;

 protected:
  std::string do_submit(const SubmitRequest& req) override;
  JobState do_status(const JobHandle& handle) override;
  JobState do_cancel(const JobHandle& handle) override;

 private:
  CommandResult run(const std::string& shell);
  std::shared_ptr<CommandRunner> runner_;
};

struct MockJobBehavior {
  int ticks = 1;
  int exit_code = 0;
};

struct MockOptions {
  /// Simulated wall time of tick 0; one tick is one minute.
  TimePoint epoch = TimePoint(std::chrono::seconds(1735689600));  // 2025-01-01T00:00:00Z
  std::optional<std::filesystem::path> state_file;
};

/// Deterministic in-memory scheduler. Jobs queue as pending, start when a
/// slot of the target's width frees up, finish after their tick count and
/// fail with reason "timeout" once they exceed policy.max_wall_minutes ticks.
/// Writes status records into each job's workdir/status.log, as a real job would.
class MockScheduler final : public Scheduler {
 public:
  explicit MockScheduler(ResourceTarget target, MockOptions opts = {});

  void advance(int ticks);
  long long clock() const;
  TimePoint now() const override;
  void idle(std::chrono::milliseconds poll) override;

  /// Overrides `# mock: ticks=N exit=K` script directives for one experiment.
  void set_behavior(const std::string& experiment_id, MockJobBehavior behavior);
  std::string reason(const std::string& native_id) const;
  std::size_t queued() const;

 protected:
  std::string do_submit(const SubmitRequest& req) override;
  JobState do_status(const JobHandle& handle) override;
  JobState do_cancel(const JobHandle& handle) override;

 private:
  struct Job {
    std::string native_id;
    std::string experiment_id;
    std::string workdir;
    MockJobBehavior behavior;
    JobState state = JobState::pending;
    long long start_tick = -1;
    long long end_tick = -1;
    std::string reason;
  };

  void schedule_locked();
  void report_locked(const Job& job, RecordState state, int progress, const std::string& msg);
  void save_locked() const;
  void load();

  MockOptions opts_;
  mutable std::mutex mutex_;
  long long clock_ = 0;
  long long next_id_ = 1;
  std::vector<Job> jobs_;
  std::map<std::string, MockJobBehavior> overrides_;
};

MockJobBehavior parse_mock_directive(std::string_view script_text);

/// Builds the adapter for a target. `runner` defaults to a ProcessRunner.
std::unique_ptr<Scheduler> make_scheduler(const ResourceTarget& target,
                                          std::shared_ptr<CommandRunner> runner = nullptr,
                                          MockOptions mock = {});

}  // namespace bench
