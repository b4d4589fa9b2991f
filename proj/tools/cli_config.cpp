#include "cli_config.hpp"

#include <cstdlib>

#include <yaml-cpp/yaml.h>

#include "bench/error.hpp"
#include "bench/util.hpp"

namespace bench::cli {

namespace {

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

bool truthy(std::string_view v) { return v == "1" || v == "true" || v == "yes" || v == "on"; }

std::optional<std::filesystem::path> config_path(const CliFlags& flags) {
  if (flags.config) return std::filesystem::path(*flags.config);
  if (auto p = env("BENCH_CONFIG")) return std::filesystem::path(*p);
  if (auto home = env("HOME")) {
    auto p = std::filesystem::path(*home) / ".config" / "bench" / "config.yaml";
    if (std::filesystem::exists(p)) return p;
  }
  return std::nullopt;
}

}  // namespace

CliConfig resolve_config(const CliFlags& flags) {
  CliConfig cfg;

  if (auto path = config_path(flags)) {
    auto text = try_read_file(*path);
    if (!text) throw ValidationError("cannot read config file " + path->string());
    YAML::Node doc;
    try {
      doc = YAML::Load(*text);
    } catch (const YAML::ParserException& e) {
      throw ParseError(path->string() + ": " + e.msg, e.mark.line + 1, e.mark.column + 1);
    }
    if (doc.IsMap()) {
      const auto base = path->parent_path();
      if (doc["resources"]) cfg.resources = base / doc["resources"].as<std::string>();
      if (doc["out"]) cfg.out = base / doc["out"].as<std::string>();
      if (doc["verbosity"]) cfg.verbosity = doc["verbosity"].as<int>();
      if (doc["color"]) cfg.color = doc["color"].as<bool>();
    } else if (!doc.IsNull()) {
      throw ValidationError(path->string() + ": expected a mapping");
    }
  }

  if (auto v = env("BENCH_RESOURCES")) cfg.resources = *v;
  if (auto v = env("BENCH_OUT")) cfg.out = *v;
  if (auto v = env("BENCH_NO_COLOR")) cfg.color = !truthy(*v);

  if (flags.resources) cfg.resources = *flags.resources;
  if (flags.out) cfg.out = *flags.out;
  if (flags.verbosity > 0) cfg.verbosity = flags.verbosity;
  if (flags.no_color) cfg.color = false;
  return cfg;
}

}  // namespace bench::cli
