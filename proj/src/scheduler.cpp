#include "bench/scheduler.hpp"

#include <thread>

#include <fmt/format.h>

#include "bench/error.hpp"

namespace bench {

namespace {

constexpr JobState kJobStates[] = {JobState::pending, JobState::running,   JobState::done,
                                   JobState::failed,  JobState::cancelled, JobState::unknown};

int rank(JobState s) {
  switch (s) {
    case JobState::pending: return 0;
    case JobState::running: return 1;
    case JobState::unknown: return -1;
    default: return 2;
  }
}

std::optional<int> positive_int(const YAML::Node& n, const char* key) {
  const YAML::Node v = n[key];
  if (!v) return std::nullopt;
  try {
    return v.as<int>();
  } catch (const YAML::Exception&) {
    throw ValidationError(fmt::format("policy.{} must be an integer", key));
  }
}

ResourceTarget parse_target(const std::string& name, const YAML::Node& n) {
  if (!n.IsMap()) throw ValidationError("resource '" + name + "' must be a mapping");
  ResourceTarget t;
  t.name = name;
  const auto kind = n["kind"] ? n["kind"].as<std::string>() : std::string("local");
  static const std::pair<const char*, ResourceKind> kinds[] = {{"local", ResourceKind::local},
                                                               {"ssh", ResourceKind::ssh},
                                                               {"slurm", ResourceKind::slurm},
                                                               {"lsf", ResourceKind::lsf},
                                                               {"mock", ResourceKind::mock}};
  bool found = false;
  for (const auto& [label, k] : kinds) {
    if (kind == label) {
      t.kind = k;
      found = true;
    }
  }
  if (!found) throw ValidationError("resource '" + name + "': unknown kind '" + kind + "'");
  if (n["host"]) t.host = n["host"].as<std::string>();
  if (n["user"]) t.user = n["user"].as<std::string>();
  if (n["workdir"]) t.remote_workdir = n["workdir"].as<std::string>();
  if (n["width"]) t.width = n["width"].as<int>();
  if (n["policy"]) t.policy = parse_policy(n["policy"]);
  t.validate();
  return t;
}

}  // namespace

std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::pending: return "pending";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
    case JobState::cancelled: return "cancelled";
    case JobState::unknown: return "unknown";
  }
  return "unknown";
}

std::optional<JobState> job_state_from(std::string_view s) {
  for (auto st : kJobStates)
    if (to_string(st) == s) return st;
  return std::nullopt;
}

bool is_terminal(JobState s) { return s == JobState::done || s == JobState::failed || s == JobState::cancelled; }

std::string_view to_string(ResourceKind k) {
  switch (k) {
    case ResourceKind::local: return "local";
    case ResourceKind::ssh: return "ssh";
    case ResourceKind::slurm: return "slurm";
    case ResourceKind::lsf: return "lsf";
    case ResourceKind::mock: return "mock";
  }
  return "?";
}

void QueuePolicy::validate() const {
  for (auto [label, v] : {std::pair{"max_queued_jobs", max_queued_jobs}, std::pair{"max_wall_minutes", max_wall_minutes},
                          std::pair{"max_nodes", max_nodes}})
    if (v && *v <= 0) throw ValidationError(fmt::format("policy.{} must be positive (got {})", label, *v));
}

QueuePolicy parse_policy(const YAML::Node& node) {
  if (!node.IsMap()) throw ValidationError("policy must be a mapping");
  QueuePolicy p;
  p.max_queued_jobs = positive_int(node, "max_queued_jobs");
  p.max_wall_minutes = positive_int(node, "max_wall_minutes");
  p.max_nodes = positive_int(node, "max_nodes");
  p.validate();
  return p;
}

void ResourceTarget::validate() const {
  if (name.empty()) throw ValidationError("resource without a name");
  const bool needs_host = kind == ResourceKind::ssh || kind == ResourceKind::slurm || kind == ResourceKind::lsf;
  if (needs_host && !host) throw ValidationError(fmt::format("resource '{}' of kind {} needs a host", name, to_string(kind)));
  if (!needs_host && host)
    throw ValidationError(fmt::format("resource '{}' of kind {} must not set a host", name, to_string(kind)));
  if (width < 1) throw ValidationError(fmt::format("resource '{}': width must be >= 1", name));
  if (policy) policy->validate();
}

std::vector<ResourceTarget> parse_resources(std::string_view yaml_text) {
  YAML::Node doc;
  try {
    doc = YAML::Load(std::string(yaml_text));
  } catch (const YAML::ParserException& e) {
    throw ParseError("malformed resources file: " + e.msg, e.mark.line + 1, e.mark.column + 1);
  }
  std::vector<ResourceTarget> targets;
  const YAML::Node& root = doc;
  const YAML::Node list = root.IsMap() && root["resources"] ? root["resources"] : root;
  if (list.IsMap()) {
    for (const auto& kv : list) targets.push_back(parse_target(kv.first.as<std::string>(), kv.second));
  } else if (list.IsSequence()) {
    for (const auto& item : list) {
      if (!item.IsMap() || !item["name"]) throw ValidationError("resource list entries need a name");
      targets.push_back(parse_target(item["name"].as<std::string>(), item));
    }
  } else if (!list.IsNull()) {
    throw ValidationError("resources must be a mapping or a list");
  }
  for (std::size_t i = 0; i < targets.size(); ++i)
    for (std::size_t j = i + 1; j < targets.size(); ++j)
      if (targets[i].name == targets[j].name) throw ValidationError("duplicate resource '" + targets[i].name + "'");

  auto has = [&](std::string_view n) {
    for (const auto& t : targets)
      if (t.name == n) return true;
    return false;
  };
  if (!has("local")) targets.push_back(ResourceTarget{"local", ResourceKind::local, {}, {}, {}, {}, 1});
  if (!has("mock")) targets.push_back(ResourceTarget{"mock", ResourceKind::mock, {}, {}, {}, {}, 4});
  return targets;
}

std::vector<ResourceTarget> load_resources(const std::optional<std::filesystem::path>& path) {
  if (!path) return parse_resources("");
  return parse_resources(read_file(*path));
}

const ResourceTarget& find_resource(const std::vector<ResourceTarget>& targets, std::string_view name) {
  for (const auto& t : targets)
    if (t.name == name) return t;
  throw ValidationError(fmt::format("unknown resource '{}'", name));
}

void to_json(nlohmann::json& j, const JobHandle& h) {
  j = nlohmann::json{{"resource", h.resource},
                     {"native_id", h.native_id},
                     {"experiment_id", h.experiment_id},
                     {"submitted_at", format_utc(h.submitted_at)},
                     {"workdir", h.workdir}};
}

void from_json(const nlohmann::json& j, JobHandle& h) {
  h.resource = j.at("resource").get<std::string>();
  h.native_id = j.at("native_id").get<std::string>();
  h.experiment_id = j.at("experiment_id").get<std::string>();
  h.submitted_at = parse_utc(j.at("submitted_at").get<std::string>());
  h.workdir = j.value("workdir", std::string());
}

Scheduler::Scheduler(ResourceTarget target) : target_(std::move(target)) { target_.validate(); }

JobHandle Scheduler::submit(const std::filesystem::path& script, const std::string& experiment_id,
                            const std::optional<std::filesystem::path>& workdir) {
  std::lock_guard lock(submit_mutex_);
  if (target_.policy && target_.policy->max_queued_jobs) {
    const auto limit = static_cast<std::size_t>(*target_.policy->max_queued_jobs);
    if (live_jobs() >= limit)
      throw PolicyError(fmt::format("target '{}' already has {} queued jobs (max_queued_jobs={})", target_.name,
                                    limit, limit));
  }
  SubmitRequest req{script, experiment_id, workdir ? *workdir : script.parent_path()};
  const auto native = do_submit(req);
  JobHandle handle{target_.name, native, experiment_id, now(), req.workdir.string()};
  std::lock_guard state_lock(state_mutex_);
  known_[native] = JobState::pending;
  handles_[native] = handle;
  return handle;
}

JobState Scheduler::observe(const std::string& native_id, JobState reported) {
  std::lock_guard lock(state_mutex_);
  auto it = known_.find(native_id);
  if (reported == JobState::unknown) return JobState::unknown;
  if (it == known_.end()) {
    known_[native_id] = reported;
    return reported;
  }
  if (is_terminal(it->second) || rank(reported) < rank(it->second)) return it->second;
  it->second = reported;
  return reported;
}

JobState Scheduler::status(const JobHandle& handle) {
  {
    std::lock_guard lock(state_mutex_);
    auto it = known_.find(handle.native_id);
    if (it != known_.end() && is_terminal(it->second)) return it->second;
  }
  return observe(handle.native_id, do_status(handle));
}

JobState Scheduler::cancel(const JobHandle& handle) {
  std::lock_guard lock(submit_mutex_);
  const auto current = status(handle);
  if (is_terminal(current)) return current;
  return observe(handle.native_id, do_cancel(handle));
}

std::size_t Scheduler::live_jobs() {
  std::vector<JobHandle> live;
  {
    std::lock_guard lock(state_mutex_);
    for (const auto& [id, st] : known_)
      if (!is_terminal(st)) live.push_back(handles_.at(id));
  }
  std::size_t count = 0;
  for (const auto& h : live)
    if (!is_terminal(status(h))) ++count;
  return count;
}

void Scheduler::idle(std::chrono::milliseconds poll) { std::this_thread::sleep_for(poll); }

std::optional<std::string> Scheduler::fetch_text(const std::filesystem::path& path) { return try_read_file(path); }

std::unique_ptr<Scheduler> make_scheduler(const ResourceTarget& target, std::shared_ptr<CommandRunner> runner,
                                          MockOptions mock) {
  if (!runner) runner = std::make_shared<ProcessRunner>();
  switch (target.kind) {
    case ResourceKind::local: return std::make_unique<LocalScheduler>(target);
    case ResourceKind::ssh: return std::make_unique<SshScheduler>(target, runner);
    case ResourceKind::slurm: return std::make_unique<SlurmScheduler>(target, runner);
    case ResourceKind::lsf: return std::make_unique<LsfScheduler>(target, runner);
    case ResourceKind::mock: return std::make_unique<MockScheduler>(target, std::move(mock));
  }
  throw ValidationError("unsupported resource kind");
}

}  // namespace bench
