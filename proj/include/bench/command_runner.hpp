#pragma once

// External command execution. Adapters talk to schedulers only through a
// CommandRunner, so every adapter can be driven from recorded transcripts.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace bench {

struct Command {
  std::vector<std::string> argv;
  std::optional<std::filesystem::path> stdin_file;
  std::optional<std::filesystem::path> cwd;

  /// Shell-style rendering used for transcripts, e.g. "bsub < job.sh".
  std::string str() const;
};

struct CommandResult {
  int exit_code = 0;
  std::string out;
  std::string err;
};

class CommandRunner {
 public:
  virtual ~CommandRunner() = default;
  virtual CommandResult run(const Command& cmd) = 0;
};

/// Runs commands as child processes (fork/exec), capturing stdout/stderr.
/// Exit code 127 when the executable cannot be started.
class ProcessRunner final : public CommandRunner {
 public:
  CommandResult run(const Command& cmd) override;
};

/// Replays canned results keyed by Command::str(); unmatched commands return
/// exit code 127 with an explanatory stderr. Records every call.
class FixtureRunner final : public CommandRunner {
 public:
  FixtureRunner& on(const std::string& command, CommandResult result);
  /// Queue several results for the same command; consumed in order, the last repeats.
  FixtureRunner& then(const std::string& command, CommandResult result);
  CommandResult run(const Command& cmd) override;
  std::vector<std::string> calls() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::vector<CommandResult>> replies_;
  std::vector<std::string> calls_;
};

/// Wraps commands in `ssh -o BatchMode=yes [user@]host -- <command>`.
/// ssh's own failure (exit 255) becomes TransportError.
class SshRunner final : public CommandRunner {
 public:
  SshRunner(std::shared_ptr<CommandRunner> inner, std::string host, std::optional<std::string> user,
            std::optional<std::string> workdir = std::nullopt);
  CommandResult run(const Command& cmd) override;
  Command wrap(const Command& cmd) const;

 private:
  std::shared_ptr<CommandRunner> inner_;
  std::string destination_;
  std::optional<std::string> workdir_;
};

/// True if `name` resolves to an executable (absolute/relative path or $PATH lookup).
bool executable_exists(const std::string& name);

}  // namespace bench
