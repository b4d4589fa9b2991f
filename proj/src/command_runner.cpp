#include "bench/command_runner.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstdlib>
#include <cstring>

#include "bench/error.hpp"
#include "bench/util.hpp"

namespace bench {

namespace {

bool needs_quoting(const std::string& s) {
  if (s.empty()) return true;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || std::strchr("-_./%=:,+@", c))) return true;
  return false;
}

}  // namespace

std::string Command::str() const {
  std::string out;
  for (const auto& a : argv) {
    if (!out.empty()) out += ' ';
    out += needs_quoting(a) ? shell_quote(a) : a;
  }
  if (stdin_file) out += " < " + stdin_file->string();
  return out;
}

CommandResult ProcessRunner::run(const Command& cmd) {
  if (cmd.argv.empty()) throw Error(ErrorKind::generic, "empty command");
  int out_pipe[2], err_pipe[2];
  if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0) throw Error(ErrorKind::generic, "pipe() failed");

  const pid_t pid = fork();
  if (pid < 0) throw Error(ErrorKind::generic, "fork() failed");
  if (pid == 0) {
    dup2(out_pipe[1], STDOUT_FILENO);
    dup2(err_pipe[1], STDERR_FILENO);
    close(out_pipe[0]);
    close(err_pipe[0]);
    close(out_pipe[1]);
    close(err_pipe[1]);
    int in = cmd.stdin_file ? open(cmd.stdin_file->c_str(), O_RDONLY) : open("/dev/null", O_RDONLY);
    if (in < 0) {
      dprintf(STDERR_FILENO, "cannot open %s\n", cmd.stdin_file ? cmd.stdin_file->c_str() : "/dev/null");
      _exit(127);
    }
    dup2(in, STDIN_FILENO);
    close(in);
    if (cmd.cwd && chdir(cmd.cwd->c_str()) != 0) {
      dprintf(STDERR_FILENO, "cannot chdir to %s\n", cmd.cwd->c_str());
      _exit(127);
    }
    std::vector<char*> args;
    for (const auto& a : cmd.argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    execvp(args[0], args.data());
    dprintf(STDERR_FILENO, "%s: %s\n", args[0], std::strerror(errno));
    _exit(127);
  }
  close(out_pipe[1]);
  close(err_pipe[1]);

  CommandResult result;
  std::array<pollfd, 2> fds{{{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}}};
  std::array<std::string*, 2> sinks{&result.out, &result.err};
  int open_fds = 2;
  char buf[4096];
  while (open_fds > 0) {
    if (poll(fds.data(), fds.size(), -1) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    for (std::size_t i = 0; i < fds.size(); ++i) {
      if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      const auto n = read(fds[i].fd, buf, sizeof buf);
      if (n > 0) {
        sinks[i]->append(buf, static_cast<std::size_t>(n));
      } else {
        close(fds[i].fd);
        fds[i].fd = -1;
        --open_fds;
      }
    }
  }
  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return result;
}

FixtureRunner& FixtureRunner::on(const std::string& command, CommandResult result) {
  std::lock_guard lock(mutex_);
  replies_[command] = {std::move(result)};
  return *this;
}

FixtureRunner& FixtureRunner::then(const std::string& command, CommandResult result) {
  std::lock_guard lock(mutex_);
  replies_[command].push_back(std::move(result));
  return *this;
}

CommandResult FixtureRunner::run(const Command& cmd) {
  std::lock_guard lock(mutex_);
  const auto key = cmd.str();
  calls_.push_back(key);
  auto it = replies_.find(key);
  if (it == replies_.end() || it->second.empty()) return {127, "", "no fixture for: " + key};
  auto result = it->second.front();
  if (it->second.size() > 1) it->second.erase(it->second.begin());
  return result;
}

std::vector<std::string> FixtureRunner::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

SshRunner::SshRunner(std::shared_ptr<CommandRunner> inner, std::string host, std::optional<std::string> user,
                     std::optional<std::string> workdir)
    : inner_(std::move(inner)), destination_(user ? *user + "@" + host : host), workdir_(std::move(workdir)) {}

Command SshRunner::wrap(const Command& cmd) const {
  std::string remote = cmd.str();
  const auto dir = cmd.cwd ? std::optional<std::string>(cmd.cwd->string()) : workdir_;
  if (dir) remote = "cd " + shell_quote(*dir) + " && " + remote;
  return Command{{"ssh", "-o", "BatchMode=yes", destination_, "--", remote}, std::nullopt, std::nullopt};
}

CommandResult SshRunner::run(const Command& cmd) {
  auto result = inner_->run(wrap(cmd));
  if (result.exit_code == 255)
    throw TransportError("ssh to " + destination_ + " failed: " + trim(result.err));
  return result;
}

bool executable_exists(const std::string& name) {
  if (name.empty()) return false;
  if (name.find('/') != std::string::npos) return access(name.c_str(), X_OK) == 0;
  const char* path = std::getenv("PATH");
  if (!path) return false;
  for (const auto& dir : split(path, ':')) {
    const auto candidate = (dir.empty() ? std::string(".") : dir) + "/" + name;
    if (access(candidate.c_str(), X_OK) == 0) return true;
  }
  return false;
}

}  // namespace bench
