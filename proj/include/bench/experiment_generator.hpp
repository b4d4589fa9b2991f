#pragma once

// Materializes one directory per grid point:
//   <root>/<id>/{job.sh, config.yaml, manifest.yaml} and <root>/index.jsonl

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bench/scheduler.hpp"
#include "bench/spec_model.hpp"
#include "bench/template_engine.hpp"

namespace bench {

struct JobRequirements {
  std::optional<int> wall_minutes;
  int nodes = 1;

  bool operator==(const JobRequirements&) const = default;
};

/// Reads `#SBATCH --time=` / `#BSUB -W` and `--nodes=` / `-N` style directives,
/// falling back to the spec's system.wall_minutes / system.nodes.
JobRequirements job_requirements(std::string_view script_text, const ExperimentSpec* spec = nullptr);

/// SLURM time formats: M, M:S, H:M:S, D-H, D-H:M, D-H:M:S. Seconds round up.
std::optional<int> parse_wall_minutes(std::string_view text);

struct GeneratedExperiment {
  ExperimentPoint point;
  std::filesystem::path dir;
  std::filesystem::path script_path;
  std::filesystem::path config_path;
  JobRequirements requirements;
  std::map<std::string, std::string> manifest;
};

struct GeneratedSet {
  std::filesystem::path root;
  std::vector<GeneratedExperiment> experiments;
  std::filesystem::path index_path;
};

struct GenerateOptions {
  VarMap env;
  VarMap db;
  bool force = false;
  ExpandOptions expand;
  std::function<TimePoint()> clock = [] { return Clock::now(); };
};

/// Stages everything in a sibling temp directory and renames it into place,
/// so a failure leaves out_root untouched. Re-running with identical inputs
/// leaves an identical tree; different content needs `force`.
GeneratedSet generate(const ExperimentSpec& spec, const TemplateDocument& script_template,
                      const std::filesystem::path& out_root, const GenerateOptions& opts = {});

/// Reloads a generated set from its index.jsonl.
GeneratedSet load_generated(const std::filesystem::path& root);

struct SubmissionBatch {
  std::size_t index = 0;
  std::vector<GeneratedExperiment> experiments;
};

/// Order-preserving partition of the set into batches that respect
/// max_queued_jobs and max_nodes. An experiment whose declared wall time
/// exceeds max_wall_minutes raises PolicyError.
std::vector<SubmissionBatch> split_for_policy(const GeneratedSet& set, const QueuePolicy& policy);

}  // namespace bench
