#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>

#include "bench/error.hpp"
#include "bench/scheduler.hpp"

namespace bench {

namespace fs = std::filesystem;

namespace {

void append_cancelled(const fs::path& workdir, const std::string& resource, const std::string& name) {
  StatusRecord r{Clock::now(), resource, name, RecordState::cancelled, 0, "cancelled"};
  append_file(workdir / "status.log", emit(r) + "\n");
}

}  // namespace

std::string job_wrapper(const fs::path& script, const fs::path& workdir, const std::string& resource,
                        const std::string& job_name) {
  const auto s = shell_quote(script.string());
  const auto w = shell_quote(workdir.string());
  std::string out = shell_helper();
  out += fmt::format("CM_STATUS_FILE={}/status.log; CM_STATUS_RESOURCE={}; CM_STATUS_NAME={}\n", w,
                     shell_quote(resource), shell_quote(job_name));
  out += "export CM_STATUS_FILE CM_STATUS_RESOURCE CM_STATUS_NAME\n";
  out += fmt::format("cd {} || exit 1\n", w);
  out += "cm_status running 0 > /dev/null\n";
  out += fmt::format("if [ -x {0} ]; then {0}; else sh {0}; fi > stdout.log 2> stderr.log\n", s);
  out += "code=$?\n";
  out += "if [ \"$code\" -eq 0 ]; then cm_status done 100 > /dev/null; "
         "else cm_status failed 0 \"exit code $code\" > /dev/null; fi\n";
  out += "echo \"$code\" > exit_code.tmp && mv exit_code.tmp exit_code\n";
  return out;
}

// ---- local -----------------------------------------------------------------

LocalScheduler::LocalScheduler(ResourceTarget target) : Scheduler(std::move(target)) {}

std::string LocalScheduler::do_submit(const SubmitRequest& req) {
  if (!fs::exists(req.script)) throw SubmitError("script not found: " + req.script.string(), "");
  fs::create_directories(req.workdir);
  const auto wrapper = job_wrapper(fs::absolute(req.script), fs::absolute(req.workdir), target().name,
                                   req.experiment_id);

  int fds[2];
  if (pipe(fds) != 0) throw SubmitError("pipe() failed", "");
  const pid_t child = fork();
  if (child < 0) throw SubmitError("fork() failed", "");
  if (child == 0) {
    const pid_t grandchild = fork();
    if (grandchild == 0) {
      setsid();
      close(fds[0]);
      close(fds[1]);
      const int devnull = open("/dev/null", O_RDWR);
      dup2(devnull, STDIN_FILENO);
      dup2(devnull, STDOUT_FILENO);
      dup2(devnull, STDERR_FILENO);
      execl("/bin/sh", "sh", "-c", wrapper.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    [[maybe_unused]] auto n = write(fds[1], &grandchild, sizeof grandchild);
    _exit(grandchild < 0 ? 1 : 0);
  }
  close(fds[1]);
  pid_t job = -1;
  const auto got = read(fds[0], &job, sizeof job);
  close(fds[0]);
  int status = 0;
  waitpid(child, &status, 0);
  if (got != sizeof job || job <= 0) throw SubmitError("could not start " + req.script.string(), "");
  return std::to_string(job);
}

JobState LocalScheduler::do_status(const JobHandle& h) {
  if (auto code = try_read_file(fs::path(h.workdir) / "exit_code")) {
    return trim(*code) == "0" ? JobState::done : JobState::failed;
  }
  {
    std::lock_guard lock(cancelled_mutex_);
    if (cancelled_.count(h.native_id)) return JobState::cancelled;
  }
  const pid_t pid = static_cast<pid_t>(std::stol(h.native_id));
  if (kill(pid, 0) == 0) return JobState::running;
  return JobState::failed;  // vanished without leaving an exit code
}

JobState LocalScheduler::do_cancel(const JobHandle& h) {
  const pid_t pid = static_cast<pid_t>(std::stol(h.native_id));
  {
    std::lock_guard lock(cancelled_mutex_);
    cancelled_[h.native_id] = true;
  }
  if (kill(-pid, SIGTERM) != 0) kill(pid, SIGTERM);
  append_cancelled(h.workdir, target().name, h.experiment_id);
  return JobState::cancelled;
}

// ---- ssh -------------------------------------------------------------------

SshScheduler::SshScheduler(ResourceTarget target, std::shared_ptr<CommandRunner> runner)
    : Scheduler(std::move(target)), runner_(std::move(runner)) {}

CommandResult SshScheduler::run(const std::string& shell) {
  SshRunner ssh(runner_, *target().host, target().user);
  return ssh.run(Command{{"sh", "-c", shell}, {}, {}});
}

std::optional<std::string> SshScheduler::fetch_text(const fs::path& path) {
  auto r = run("cat " + shell_quote(path.string()));
  if (r.exit_code != 0) return std::nullopt;
  return r.out;
}

std::string SshScheduler::do_submit(const SubmitRequest& req) {
  const auto wrapper = job_wrapper(req.script, req.workdir, target().name, req.experiment_id);
  const auto shell = fmt::format("mkdir -p {0} && setsid sh -c {1} > /dev/null 2>&1 < /dev/null & echo $!",
                                 shell_quote(req.workdir.string()), shell_quote(wrapper));
  auto r = run(shell);
  if (r.exit_code != 0)
    throw SubmitError(fmt::format("remote start failed with {}: {}", r.exit_code, trim(r.err)), r.err);
  auto pid = trim(r.out);
  if (pid.empty() || pid.find_first_not_of("0123456789") != std::string::npos)
    throw SubmitError("remote start did not report a process id: " + pid, r.err);
  return pid;
}

JobState SshScheduler::do_status(const JobHandle& h) {
  const auto exit_file = shell_quote((fs::path(h.workdir) / "exit_code").string());
  auto r = run(fmt::format("if [ -f {0} ]; then cat {0}; elif kill -0 {1} 2>/dev/null; then echo running; "
                           "else echo gone; fi",
                           exit_file, h.native_id));
  if (r.exit_code != 0) return JobState::unknown;
  const auto word = trim(r.out);
  if (word == "running") return JobState::running;
  if (word == "gone") return JobState::failed;
  if (word == "0") return JobState::done;
  if (!word.empty() && word.find_first_not_of("0123456789") == std::string::npos) return JobState::failed;
  return JobState::unknown;
}

JobState SshScheduler::do_cancel(const JobHandle& h) {
  StatusRecord rec{Clock::now(), target().name, h.experiment_id, RecordState::cancelled, 0, "cancelled"};
  auto r = run(fmt::format("kill -TERM -{0} 2>/dev/null || kill -TERM {0} 2>/dev/null; printf '%s\\n' {1} >> {2}",
                           h.native_id, shell_quote(emit(rec)),
                           shell_quote((fs::path(h.workdir) / "status.log").string())));
  if (r.exit_code != 0)
    throw SubmitError(fmt::format("remote cancel failed with {}: {}", r.exit_code, trim(r.err)), r.err);
  return JobState::cancelled;
}

}  // namespace bench
