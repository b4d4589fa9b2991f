#pragma once

#include <filesystem>
#include <optional>
#include <string>

namespace bench::cli {

struct CliConfig {
  std::optional<std::filesystem::path> resources;
  std::filesystem::path out = "experiments";
  int verbosity = 0;
  bool color = true;
};

struct CliFlags {
  std::optional<std::string> config;
  std::optional<std::string> resources;
  std::optional<std::string> out;
  int verbosity = 0;
  bool no_color = false;
};

/// flags > BENCH_* environment > config file > defaults. The config file is
/// --config, else $BENCH_CONFIG, else ~/.config/bench/config.yaml if present.
CliConfig resolve_config(const CliFlags& flags);

}  // namespace bench::cli
