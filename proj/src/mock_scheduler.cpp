#include <regex>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "bench/error.hpp"
#include "bench/scheduler.hpp"

namespace bench {

MockJobBehavior parse_mock_directive(std::string_view script_text) {
  MockJobBehavior b;
  static const std::regex line_re(R"(#\s*mock:\s*(.*))");
  static const std::regex kv_re(R"((ticks|exit)\s*=\s*(-?\d+))");
  for (const auto& line : split(script_text, '\n')) {
    std::smatch m;
    if (!std::regex_search(line, m, line_re)) continue;
    const std::string rest = m[1].str();
    for (auto it = std::sregex_iterator(rest.begin(), rest.end(), kv_re); it != std::sregex_iterator(); ++it) {
      const int v = std::stoi((*it)[2].str());
      if ((*it)[1] == "ticks")
        b.ticks = v;
      else
        b.exit_code = v;
    }
  }
  if (b.ticks < 1) throw ValidationError("mock ticks must be >= 1");
  return b;
}

MockScheduler::MockScheduler(ResourceTarget target, MockOptions opts)
    : Scheduler(std::move(target)), opts_(std::move(opts)) {
  load();
}

long long MockScheduler::clock() const {
  std::lock_guard lock(mutex_);
  return clock_;
}

TimePoint MockScheduler::now() const { return opts_.epoch + std::chrono::minutes(clock()); }

void MockScheduler::idle(std::chrono::milliseconds) { advance(1); }

void MockScheduler::set_behavior(const std::string& experiment_id, MockJobBehavior behavior) {
  std::lock_guard lock(mutex_);
  overrides_[experiment_id] = behavior;
}

std::string MockScheduler::reason(const std::string& native_id) const {
  std::lock_guard lock(mutex_);
  for (const auto& j : jobs_)
    if (j.native_id == native_id) return j.reason;
  return {};
}

std::size_t MockScheduler::queued() const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& j : jobs_)
    if (!is_terminal(j.state)) ++n;
  return n;
}

void MockScheduler::report_locked(const Job& job, RecordState state, int progress, const std::string& msg) {
  if (job.workdir.empty()) return;
  StatusRecord r{opts_.epoch + std::chrono::minutes(clock_), target().name, job.experiment_id, state, progress, msg};
  append_file(std::filesystem::path(job.workdir) / "status.log", emit(r) + "\n");
}

void MockScheduler::schedule_locked() {
  std::size_t running = 0;
  for (const auto& j : jobs_)
    if (j.state == JobState::running) ++running;
  for (auto& j : jobs_) {
    if (running >= static_cast<std::size_t>(target().width)) break;
    if (j.state != JobState::pending) continue;
    j.state = JobState::running;
    j.start_tick = clock_;
    ++running;
    report_locked(j, RecordState::running, 0, "");
  }
}

void MockScheduler::advance(int ticks) {
  std::lock_guard lock(mutex_);
  const auto& policy = target().policy;
  for (int t = 0; t < ticks; ++t) {
    schedule_locked();
    ++clock_;
    for (auto& j : jobs_) {
      if (j.state != JobState::running) continue;
      if (j.start_tick + j.behavior.ticks <= clock_) {
        j.end_tick = clock_;
        if (j.behavior.exit_code == 0) {
          j.state = JobState::done;
          report_locked(j, RecordState::done, 100, "");
        } else {
          j.state = JobState::failed;
          j.reason = fmt::format("exit code {}", j.behavior.exit_code);
          report_locked(j, RecordState::failed, 0, j.reason);
        }
      } else if (policy && policy->max_wall_minutes && clock_ - j.start_tick >= *policy->max_wall_minutes) {
        j.end_tick = clock_;
        j.state = JobState::failed;
        j.reason = "timeout";
        report_locked(j, RecordState::failed, 0, j.reason);
      }
    }
    schedule_locked();
  }
  save_locked();
}

std::string MockScheduler::do_submit(const SubmitRequest& req) {
  MockJobBehavior behavior;
  if (auto text = try_read_file(req.script)) behavior = parse_mock_directive(*text);
  std::lock_guard lock(mutex_);
  if (auto it = overrides_.find(req.experiment_id); it != overrides_.end()) behavior = it->second;
  Job job;
  job.native_id = fmt::format("m-{}", next_id_++);
  job.experiment_id = req.experiment_id;
  job.workdir = req.workdir.string();
  job.behavior = behavior;
  jobs_.push_back(job);
  save_locked();
  return job.native_id;
}

JobState MockScheduler::do_status(const JobHandle& h) {
  std::lock_guard lock(mutex_);
  for (const auto& j : jobs_)
    if (j.native_id == h.native_id) return j.state;
  return JobState::unknown;
}

JobState MockScheduler::do_cancel(const JobHandle& h) {
  std::lock_guard lock(mutex_);
  for (auto& j : jobs_) {
    if (j.native_id != h.native_id) continue;
    if (is_terminal(j.state)) return j.state;
    j.state = JobState::cancelled;
    j.end_tick = clock_;
    j.reason = "cancelled";
    report_locked(j, RecordState::cancelled, 0, "cancelled");
    save_locked();
    return j.state;
  }
  return JobState::unknown;
}

void MockScheduler::save_locked() const {
  if (!opts_.state_file) return;
  nlohmann::json doc;
  doc["clock"] = clock_;
  doc["next_id"] = next_id_;
  doc["jobs"] = nlohmann::json::array();
  for (const auto& j : jobs_) {
    doc["jobs"].push_back({{"native_id", j.native_id},
                           {"experiment_id", j.experiment_id},
                           {"workdir", j.workdir},
                           {"ticks", j.behavior.ticks},
                           {"exit_code", j.behavior.exit_code},
                           {"state", to_string(j.state)},
                           {"start_tick", j.start_tick},
                           {"end_tick", j.end_tick},
                           {"reason", j.reason}});
  }
  write_file_atomic(*opts_.state_file, doc.dump(2) + "\n");
}

void MockScheduler::load() {
  if (!opts_.state_file) return;
  auto text = try_read_file(*opts_.state_file);
  if (!text) return;
  auto doc = nlohmann::json::parse(*text);
  clock_ = doc.at("clock").get<long long>();
  next_id_ = doc.at("next_id").get<long long>();
  for (const auto& j : doc.at("jobs")) {
    Job job;
    job.native_id = j.at("native_id").get<std::string>();
    job.experiment_id = j.at("experiment_id").get<std::string>();
    job.workdir = j.at("workdir").get<std::string>();
    job.behavior = {j.at("ticks").get<int>(), j.at("exit_code").get<int>()};
    job.state = job_state_from(j.at("state").get<std::string>()).value_or(JobState::unknown);
    job.start_tick = j.at("start_tick").get<long long>();
    job.end_tick = j.at("end_tick").get<long long>();
    job.reason = j.at("reason").get<std::string>();
    jobs_.push_back(std::move(job));
  }
}

}  // namespace bench
