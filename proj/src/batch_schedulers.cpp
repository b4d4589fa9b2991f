#include <regex>

#include <fmt/format.h>

#include "bench/error.hpp"
#include "bench/scheduler.hpp"

namespace bench {

namespace {

bool is_remote(const ResourceTarget& t) { return t.host && *t.host != "localhost"; }

CommandResult run_on(const ResourceTarget& t, const std::shared_ptr<CommandRunner>& runner, Command cmd) {
  if (is_remote(t)) return SshRunner(runner, *t.host, t.user, t.remote_workdir).run(cmd);
  return runner->run(cmd);
}

std::optional<std::string> fetch_on(const ResourceTarget& t, const std::shared_ptr<CommandRunner>& runner,
                                    const std::filesystem::path& path) {
  if (!is_remote(t)) return try_read_file(path);
  auto r = run_on(t, runner, Command{{"cat", path.string()}, {}, {}});
  if (r.exit_code != 0) return std::nullopt;
  return r.out;
}

std::string first_line(std::string_view text) {
  for (const auto& line : split(text, '\n')) {
    auto t = trim(line);
    if (!t.empty()) return t;
  }
  return {};
}

}  // namespace

// ---- SLURM -----------------------------------------------------------------

SlurmScheduler::SlurmScheduler(ResourceTarget target, std::shared_ptr<CommandRunner> runner)
    : Scheduler(std::move(target)), runner_(std::move(runner)) {}

CommandResult SlurmScheduler::run(Command cmd) { return run_on(target(), runner_, std::move(cmd)); }

std::optional<std::string> SlurmScheduler::fetch_text(const std::filesystem::path& path) {
  return fetch_on(target(), runner_, path);
}

std::optional<std::string> SlurmScheduler::parse_submit_output(std::string_view out) {
  static const std::regex re(R"(Submitted batch job (\d+))");
  std::cmatch m;
  if (std::regex_search(out.begin(), out.end(), m, re)) return m[1].str();
  return std::nullopt;
}

JobState SlurmScheduler::map_state(std::string_view native) {
  // "CANCELLED by 1234" and "COMPLETED+" style suffixes carry no extra meaning here.
  std::string word = trim(native);
  if (auto sp = word.find_first_of(" +"); sp != std::string::npos) word.resize(sp);
  static const std::map<std::string, JobState, std::less<>> table = {
      {"PENDING", JobState::pending},        {"CONFIGURING", JobState::pending},
      {"REQUEUED", JobState::pending},       {"REQUEUE_HOLD", JobState::pending},
      {"REQUEUE_FED", JobState::pending},    {"RESV_DEL_HOLD", JobState::pending},
      {"RUNNING", JobState::running},        {"COMPLETING", JobState::running},
      {"SUSPENDED", JobState::running},      {"STAGE_OUT", JobState::running},
      {"SIGNALING", JobState::running},      {"RESIZING", JobState::running},
      {"STOPPED", JobState::running},        {"COMPLETED", JobState::done},
      {"FAILED", JobState::failed},          {"TIMEOUT", JobState::failed},
      {"NODE_FAIL", JobState::failed},       {"OUT_OF_MEMORY", JobState::failed},
      {"BOOT_FAIL", JobState::failed},       {"DEADLINE", JobState::failed},
      {"PREEMPTED", JobState::failed},       {"REVOKED", JobState::failed},
      {"SPECIAL_EXIT", JobState::failed},    {"CANCELLED", JobState::cancelled},
  };
  if (auto it = table.find(word); it != table.end()) return it->second;
  return JobState::unknown;
}

std::string SlurmScheduler::do_submit(const SubmitRequest& req) {
  auto r = run(Command{{"sbatch", req.script.string()}, {}, req.workdir});
  if (r.exit_code != 0)
    throw SubmitError(fmt::format("sbatch exited with {}: {}", r.exit_code, trim(r.err)), r.err);
  auto id = parse_submit_output(r.out);
  if (!id) throw SubmitError("could not find a job id in sbatch output: " + trim(r.out), r.err);
  return *id;
}

JobState SlurmScheduler::do_status(const JobHandle& h) {
  auto q = run(Command{{"squeue", "-j", h.native_id, "-h", "-o", "%T"}, {}, {}});
  if (q.exit_code == 0) {
    auto line = first_line(q.out);
    if (!line.empty()) return map_state(line);
  }
  // gone from the queue: ask accounting
  auto a = run(Command{{"sacct", "-j", h.native_id, "-n", "-o", "State"}, {}, {}});
  if (a.exit_code != 0) return JobState::unknown;
  auto line = first_line(a.out);
  return line.empty() ? JobState::unknown : map_state(line);
}

JobState SlurmScheduler::do_cancel(const JobHandle& h) {
  auto r = run(Command{{"scancel", h.native_id}, {}, {}});
  if (r.exit_code != 0)
    throw SubmitError(fmt::format("scancel {} exited with {}: {}", h.native_id, r.exit_code, trim(r.err)), r.err);
  return JobState::cancelled;
}

// ---- LSF -------------------------------------------------------------------

LsfScheduler::LsfScheduler(ResourceTarget target, std::shared_ptr<CommandRunner> runner)
    : Scheduler(std::move(target)), runner_(std::move(runner)) {}

CommandResult LsfScheduler::run(Command cmd) { return run_on(target(), runner_, std::move(cmd)); }

std::optional<std::string> LsfScheduler::fetch_text(const std::filesystem::path& path) {
  return fetch_on(target(), runner_, path);
}

std::optional<std::string> LsfScheduler::parse_submit_output(std::string_view out) {
  static const std::regex re(R"(Job <(\d+)>)");
  std::cmatch m;
  if (std::regex_search(out.begin(), out.end(), m, re)) return m[1].str();
  return std::nullopt;
}

JobState LsfScheduler::map_state(std::string_view stat) {
  static const std::map<std::string, JobState, std::less<>> table = {
      {"PEND", JobState::pending},  {"PSUSP", JobState::pending}, {"WAIT", JobState::pending},
      {"RUN", JobState::running},   {"USUSP", JobState::running}, {"SSUSP", JobState::running},
      {"PROV", JobState::running},  {"DONE", JobState::done},     {"EXIT", JobState::failed},
  };
  if (auto it = table.find(trim(stat)); it != table.end()) return it->second;
  return JobState::unknown;
}

std::string LsfScheduler::do_submit(const SubmitRequest& req) {
  auto r = run(Command{{"bsub"}, req.script, req.workdir});
  if (r.exit_code != 0) throw SubmitError(fmt::format("bsub exited with {}: {}", r.exit_code, trim(r.err)), r.err);
  auto id = parse_submit_output(r.out);
  if (!id) throw SubmitError("could not find a job id in bsub output: " + trim(r.out), r.err);
  return *id;
}

JobState LsfScheduler::do_status(const JobHandle& h) {
  auto r = run(Command{{"bjobs", "-noheader", h.native_id}, {}, {}});
  if (r.exit_code != 0) return JobState::unknown;
  // JOBID USER STAT QUEUE FROM_HOST EXEC_HOST JOB_NAME SUBMIT_TIME
  auto fields = split(first_line(r.out), ' ');
  std::vector<std::string> cols;
  for (auto& f : fields)
    if (!f.empty()) cols.push_back(f);
  if (cols.size() < 3 || cols[0] != h.native_id) return JobState::unknown;
  return map_state(cols[2]);
}

JobState LsfScheduler::do_cancel(const JobHandle& h) {
  auto r = run(Command{{"bkill", h.native_id}, {}, {}});
  if (r.exit_code != 0)
    throw SubmitError(fmt::format("bkill {} exited with {}: {}", h.native_id, r.exit_code, trim(r.err)), r.err);
  return JobState::cancelled;
}

}  // namespace bench
