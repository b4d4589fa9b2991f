#include "bench/experiment_generator.hpp"

#include <random>
#include <regex>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "bench/error.hpp"

namespace bench {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kScript = "job.sh";
constexpr const char* kConfig = "config.yaml";
constexpr const char* kManifest = "manifest.yaml";
constexpr const char* kIndex = "index.jsonl";

std::string normalize_newlines(std::string text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\r' && i + 1 < text.size() && text[i + 1] == '\n') continue;
    out += text[i];
  }
  return out;
}

std::string manifest_text(const std::map<std::string, std::string>& fields, const Assignments& assignments) {
  YAML::Emitter em;
  em << YAML::BeginMap;
  for (const auto& [k, v] : fields) em << YAML::Key << k << YAML::Value << v;
  em << YAML::Key << "assignments" << YAML::Value << YAML::BeginMap;
  for (const auto& [k, v] : assignments) em << YAML::Key << k << YAML::Value << v;
  em << YAML::EndMap << YAML::EndMap;
  return std::string(em.c_str()) + "\n";
}

std::string without_created_at(const std::string& manifest) {
  std::string out;
  for (const auto& line : split(manifest, '\n'))
    if (line.rfind("created_at:", 0) != 0) out += line + "\n";
  return out;
}

/// Removes the staging directory unless released.
class StagingDir {
 public:
  explicit StagingDir(const fs::path& out_root) {
    std::random_device rd;
    path_ = out_root.parent_path() /
            fmt::format(".{}.staging-{:08x}", out_root.filename().string(), static_cast<unsigned>(rd()));
    fs::create_directories(path_);
  }
  ~StagingDir() {
    std::error_code ec;
    if (!path_.empty()) fs::remove_all(path_, ec);
  }
  StagingDir(const StagingDir&) = delete;
  StagingDir& operator=(const StagingDir&) = delete;

  const fs::path& path() const { return path_; }
  void release() { path_.clear(); }

 private:
  fs::path path_;
};

bool same_generated_tree(const fs::path& staged, const fs::path& existing, const std::vector<std::string>& ids) {
  auto old_index = try_read_file(existing / kIndex);
  if (!old_index || *old_index != read_file(staged / kIndex)) return false;
  for (const auto& id : ids) {
    for (const char* name : {kScript, kConfig}) {
      auto old = try_read_file(existing / id / name);
      if (!old || *old != read_file(staged / id / name)) return false;
    }
    auto old = try_read_file(existing / id / kManifest);
    if (!old || without_created_at(*old) != without_created_at(read_file(staged / id / kManifest))) return false;
  }
  return true;
}

}  // namespace

std::optional<int> parse_wall_minutes(std::string_view text) {
  static const std::regex re(R"(^(?:(\d+)-)?(\d+)(?::(\d+))?(?::(\d+))?$)");
  const std::string t = trim(text);
  std::smatch m;
  if (!std::regex_match(t, m, re)) return std::nullopt;
  const bool has_days = m[1].matched;
  long days = has_days ? std::stol(m[1].str()) : 0;
  long a = std::stol(m[2].str());
  long b = m[3].matched ? std::stol(m[3].str()) : -1;
  long c = m[4].matched ? std::stol(m[4].str()) : -1;
  long seconds = 0;
  if (has_days) {
    // D-H, D-H:M, D-H:M:S
    seconds = days * 86400 + a * 3600 + (b >= 0 ? b * 60 : 0) + (c >= 0 ? c : 0);
  } else if (c >= 0) {
    seconds = a * 3600 + b * 60 + c;  // H:M:S
  } else if (b >= 0) {
    seconds = a * 60 + b;  // M:S
  } else {
    seconds = a * 60;  // M
  }
  return static_cast<int>((seconds + 59) / 60);
}

JobRequirements job_requirements(std::string_view script_text, const ExperimentSpec* spec) {
  JobRequirements req;
  if (spec && spec->system && spec->system.IsMap()) {
    const YAML::Node& sys = spec->system;
    if (sys["wall_minutes"]) req.wall_minutes = sys["wall_minutes"].as<int>();
    if (sys["nodes"]) req.nodes = sys["nodes"].as<int>();
  }
  static const std::regex time_re(R"(^#SBATCH\s+(?:--time[= ]|-t\s*)(\S+))");
  static const std::regex bsub_wall_re(R"(^#BSUB\s+-W\s+(\S+))");
  static const std::regex nodes_re(R"(^#SBATCH\s+(?:--nodes[= ]|-N\s*)(\d+))");
  for (const auto& raw : split(script_text, '\n')) {
    const auto line = trim(raw);
    std::smatch m;
    if (std::regex_search(line, m, time_re) || std::regex_search(line, m, bsub_wall_re)) {
      // LSF -W is [H:]M, which parse_wall_minutes reads as M:S; handle it here
      if (line.rfind("#BSUB", 0) == 0) {
        auto parts = split(m[1].str(), ':');
        req.wall_minutes = parts.size() == 2 ? std::stoi(parts[0]) * 60 + std::stoi(parts[1]) : std::stoi(parts[0]);
      } else if (auto w = parse_wall_minutes(m[1].str())) {
        req.wall_minutes = w;
      }
    } else if (std::regex_search(line, m, nodes_re)) {
      req.nodes = std::stoi(m[1].str());
    }
  }
  return req;
}

GeneratedSet generate(const ExperimentSpec& spec, const TemplateDocument& script_template, const fs::path& out_root,
                      const GenerateOptions& opts) {
  const auto points = expand_grid(spec, opts.expand);

  std::map<std::string, const ExperimentPoint*> by_id;
  for (const auto& p : points) {
    auto [it, fresh] = by_id.emplace(p.id, &p);
    if (!fresh) {
      auto show = [](const ExperimentPoint& q) {
        std::vector<std::string> kv;
        for (const auto& [k, v] : q.assignments) kv.push_back(k + "=" + v);
        return "{" + join(kv, ", ") + "}";
      };
      throw ValidationError(fmt::format("experiment id '{}' is shared by {} and {}", p.id, show(*it->second), show(p)));
    }
  }

  const auto root = fs::absolute(out_root).lexically_normal();
  fs::create_directories(root.parent_path());
  StagingDir staging(root);

  const auto spec_hash = sha256_hex(spec.text);
  const auto template_hash = sha256_hex(script_template.body);
  const auto created_at = format_utc(opts.clock());

  GeneratedSet set;
  set.root = root;
  set.index_path = root / kIndex;
  std::string index;
  std::vector<std::string> ids;

  for (const auto& point : points) {
    const auto stage_dir = staging.path() / point.id;
    fs::create_directories(stage_dir);

    auto script = normalize_newlines(render(script_template, point, spec, opts.env, opts.db, RenderMode::strict).text);
    write_file_atomic(stage_dir / kScript, script);
    fs::permissions(stage_dir / kScript, fs::perms(0755));
    write_file_atomic(stage_dir / kConfig, render_config(spec, point));

    GeneratedExperiment gen;
    gen.point = point;
    gen.dir = root / point.id;
    gen.script_path = gen.dir / kScript;
    gen.config_path = gen.dir / kConfig;
    gen.requirements = job_requirements(script, &spec);
    gen.manifest = {{"experiment_id", point.id},
                    {"ordinal", std::to_string(point.ordinal)},
                    {"spec_hash", spec_hash},
                    {"template_hash", template_hash},
                    {"created_at", created_at},
                    {"tool_version", std::string(kToolVersion)}};
    if (spec.data)
      gen.manifest["data"] = render(scan(*spec.data), point, spec, opts.env, opts.db, RenderMode::lenient).text;
    write_file_atomic(stage_dir / kManifest, manifest_text(gen.manifest, point.assignments));

    ojson line;
    line["id"] = point.id;
    line["ordinal"] = point.ordinal;
    line["assignments"] = ojson::object();
    for (const auto& [k, v] : point.assignments) line["assignments"][k] = v;
    line["dir"] = point.id;
    line["script"] = point.id + "/" + kScript;
    line["config"] = point.id + "/" + kConfig;
    line["wall_minutes"] = gen.requirements.wall_minutes ? ojson(*gen.requirements.wall_minutes) : ojson(nullptr);
    line["nodes"] = gen.requirements.nodes;
    index += line.dump() + "\n";
    ids.push_back(point.id);
    set.experiments.push_back(std::move(gen));
  }
  write_file_atomic(staging.path() / kIndex, index);

  if (!fs::exists(root)) {
    fs::rename(staging.path(), root);
    staging.release();
    return set;
  }
  if (same_generated_tree(staging.path(), root, ids)) {
    // keep the existing tree (and its creation timestamps) byte-for-byte
    return load_generated(root);
  }
  if (!opts.force)
    throw ValidationError(fmt::format("{} already holds different generated content; use --force to replace it",
                                      root.string()));
  auto backup = root;
  backup += ".replaced";
  fs::remove_all(backup);
  fs::rename(root, backup);
  fs::rename(staging.path(), root);
  staging.release();
  fs::remove_all(backup);
  return set;
}

GeneratedSet load_generated(const fs::path& root_in) {
  const auto root = fs::absolute(root_in).lexically_normal();
  GeneratedSet set;
  set.root = root;
  set.index_path = root / kIndex;
  auto text = try_read_file(set.index_path);
  if (!text) throw ValidationError("no generated experiments at " + root.string() + " (missing index.jsonl)");
  for (const auto& line : split(*text, '\n')) {
    if (trim(line).empty()) continue;
    auto j = ojson::parse(line);
    GeneratedExperiment gen;
    gen.point.id = j.at("id").get<std::string>();
    gen.point.ordinal = j.at("ordinal").get<std::size_t>();
    for (const auto& [k, v] : j.at("assignments").items()) gen.point.assignments.emplace_back(k, v.get<std::string>());
    gen.dir = root / j.at("dir").get<std::string>();
    gen.script_path = root / j.at("script").get<std::string>();
    gen.config_path = root / j.at("config").get<std::string>();
    if (!j.at("wall_minutes").is_null()) gen.requirements.wall_minutes = j.at("wall_minutes").get<int>();
    gen.requirements.nodes = j.at("nodes").get<int>();
    if (auto m = try_read_file(gen.dir / kManifest)) {
      auto doc = YAML::Load(*m);
      for (const auto& kv : doc)
        if (kv.second.IsScalar()) gen.manifest[kv.first.as<std::string>()] = kv.second.Scalar();
    }
    set.experiments.push_back(std::move(gen));
  }
  return set;
}

std::vector<SubmissionBatch> split_for_policy(const GeneratedSet& set, const QueuePolicy& policy) {
  policy.validate();
  for (const auto& e : set.experiments) {
    const auto& req = e.requirements;
    if (policy.max_wall_minutes && req.wall_minutes && *req.wall_minutes > *policy.max_wall_minutes)
      throw PolicyError(fmt::format(
          "experiment {} declares {} min of wall time but the queue allows {} min per job; "
          "split it into checkpoint-chained jobs (e.g. a workflow of resumable stages)",
          e.point.id, *req.wall_minutes, *policy.max_wall_minutes));
    if (policy.max_nodes && req.nodes > *policy.max_nodes)
      throw PolicyError(fmt::format("experiment {} needs {} nodes but the queue allows {}", e.point.id, req.nodes,
                                    *policy.max_nodes));
  }

  std::vector<SubmissionBatch> batches;
  int nodes_in_batch = 0;
  for (const auto& e : set.experiments) {
    const bool full =
        !batches.empty() &&
        ((policy.max_queued_jobs &&
          batches.back().experiments.size() >= static_cast<std::size_t>(*policy.max_queued_jobs)) ||
         (policy.max_nodes && nodes_in_batch + e.requirements.nodes > *policy.max_nodes));
    if (batches.empty() || full) {
      batches.push_back({batches.size(), {}});
      nodes_in_batch = 0;
    }
    batches.back().experiments.push_back(e);
    nodes_in_batch += e.requirements.nodes;
  }
  return batches;
}

}  // namespace bench
