#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "bench/error.hpp"
#include "bench/scheduler.hpp"
#include "support.hpp"

using namespace bench;
using bench::testing::TempDir;
namespace fs = std::filesystem;

namespace {

ResourceTarget slurm_target(std::optional<std::string> host = std::string("localhost")) {
  ResourceTarget t;
  t.name = "rivanna";
  t.kind = ResourceKind::slurm;
  t.host = std::move(host);
  return t;
}

ResourceTarget lsf_target() {
  ResourceTarget t;
  t.name = "summit";
  t.kind = ResourceKind::lsf;
  t.host = "localhost";
  return t;
}

ResourceTarget mock_target(int width, std::optional<int> wall_cap = std::nullopt,
                           std::optional<int> max_queued = std::nullopt) {
  ResourceTarget t;
  t.name = "mock";
  t.kind = ResourceKind::mock;
  t.width = width;
  if (wall_cap || max_queued) t.policy = QueuePolicy{max_queued, wall_cap, std::nullopt};
  return t;
}

JobHandle handle_for(const std::string& resource, const std::string& id) {
  return JobHandle{resource, id, "exp", TimePoint{}, "/tmp"};
}

fs::path write_script(const fs::path& dir, const std::string& name, const std::string& body) {
  fs::create_directories(dir);
  const auto p = dir / name;
  write_file_atomic(p, body);
  fs::permissions(p, fs::perms(0755));
  return p;
}

/// FIFO queue of `width` slots; returns (start, finish, failed_by_timeout) per job.
struct SimJob {
  long long start, finish;
  bool timeout;
};
std::vector<SimJob> simulate_queue(int width, const std::vector<int>& ticks, std::optional<int> cap) {
  std::vector<long long> slots(static_cast<std::size_t>(width), 0);
  std::vector<SimJob> out;
  for (int t : ticks) {
    auto slot = std::min_element(slots.begin(), slots.end());
    const long long start = *slot;
    const bool timeout = cap && t > *cap;
    const long long finish = start + (timeout ? *cap : t);
    *slot = finish;
    out.push_back({start, finish, timeout});
  }
  return out;
}

}  // namespace

TEST(Policy, Validation) {
  EXPECT_THROW((QueuePolicy{0, std::nullopt, std::nullopt}.validate()), ValidationError);
  EXPECT_THROW(parse_policy(YAML::Load("{max_wall_minutes: -5}")), ValidationError);
  EXPECT_EQ(parse_policy(YAML::Load("{max_queued_jobs: 10, max_nodes: 2}")), (QueuePolicy{10, std::nullopt, 2}));
}

TEST(Resources, HostRules) {
  EXPECT_THROW(parse_resources("resources:\n  a: {kind: slurm}\n"), ValidationError);
  EXPECT_THROW(parse_resources("resources:\n  a: {kind: mock, host: x}\n"), ValidationError);
  EXPECT_THROW(parse_resources("resources:\n  a: {kind: pbs, host: x}\n"), ValidationError);
  const auto targets = parse_resources(
      "resources:\n  rivanna: {kind: slurm, host: rivanna.hpc, user: alice, workdir: /scratch/a,\n"
      "            policy: {max_queued_jobs: 10, max_wall_minutes: 120}}\n");
  const auto& r = find_resource(targets, "rivanna");
  EXPECT_EQ(r.kind, ResourceKind::slurm);
  EXPECT_EQ(r.host, "rivanna.hpc");
  EXPECT_EQ(r.remote_workdir, "/scratch/a");
  EXPECT_EQ(r.policy->max_wall_minutes, 120);
  EXPECT_NO_THROW(find_resource(targets, "local"));
  EXPECT_NO_THROW(find_resource(targets, "mock"));
  EXPECT_THROW(find_resource(targets, "nowhere"), ValidationError);
}

TEST(Slurm, SubmitParsesJobId) {
  auto runner = std::make_shared<FixtureRunner>();
  runner->on("sbatch /w/e1/job.sh", {0, "Submitted batch job 4242\n", ""});
  SlurmScheduler s(slurm_target(), runner);
  const auto h = s.submit("/w/e1/job.sh", "e1");
  EXPECT_EQ(h.native_id, "4242");
  EXPECT_EQ(h.resource, "rivanna");
  EXPECT_EQ(runner->calls(), (std::vector<std::string>{"sbatch /w/e1/job.sh"}));
}

TEST(Slurm, SubmitFailureCarriesStderr) {
  auto runner = std::make_shared<FixtureRunner>();
  runner->on("sbatch /w/job.sh", {1, "", "sbatch: error: invalid partition specified: gpuq\n"});
  SlurmScheduler s(slurm_target(), runner);
  try {
    s.submit("/w/job.sh", "e1");
    FAIL();
  } catch (const SubmitError& e) {
    EXPECT_NE(e.stderr_text.find("invalid partition"), std::string::npos);
  }
  EXPECT_EQ(runner->calls().size(), 1u);  // never retried
}

TEST(Slurm, StatusFallsBackToSacct) {
  auto runner = std::make_shared<FixtureRunner>();
  runner->on("squeue -j 7 -h -o %T", {0, "PENDING\n", ""});
  runner->on("squeue -j 8 -h -o %T", {0, "RUNNING\n", ""});
  runner->on("squeue -j 9 -h -o %T", {1, "", "slurm_load_jobs error: Invalid job id specified\n"});
  runner->on("sacct -j 9 -n -o State", {0, "   TIMEOUT \n   CANCELLED \n", ""});
  runner->on("squeue -j 10 -h -o %T", {0, "", ""});
  runner->on("sacct -j 10 -n -o State", {0, " COMPLETED \n", ""});
  runner->on("squeue -j 11 -h -o %T", {0, "WEIRD_STATE\n", ""});
  SlurmScheduler s(slurm_target(), runner);
  EXPECT_EQ(s.status(handle_for("rivanna", "7")), JobState::pending);
  EXPECT_EQ(s.status(handle_for("rivanna", "8")), JobState::running);
  EXPECT_EQ(s.status(handle_for("rivanna", "9")), JobState::failed);
  EXPECT_EQ(s.status(handle_for("rivanna", "10")), JobState::done);
  EXPECT_EQ(s.status(handle_for("rivanna", "11")), JobState::unknown);
}

TEST(Slurm, StateTable) {
  EXPECT_EQ(SlurmScheduler::map_state("TIMEOUT"), JobState::failed);
  EXPECT_EQ(SlurmScheduler::map_state("CANCELLED by 1234"), JobState::cancelled);
  EXPECT_EQ(SlurmScheduler::map_state("COMPLETING"), JobState::running);
  EXPECT_EQ(SlurmScheduler::map_state("OUT_OF_MEMORY"), JobState::failed);
  EXPECT_EQ(SlurmScheduler::map_state(""), JobState::unknown);
  EXPECT_EQ(SlurmScheduler::parse_submit_output("Submitted batch job 4242"), "4242");
  EXPECT_FALSE(SlurmScheduler::parse_submit_output("sbatch: error").has_value());
}

TEST(Slurm, RemoteCommandsGoThroughSsh) {
  auto runner = std::make_shared<FixtureRunner>();
  auto target = slurm_target("rivanna.hpc");
  target.user = "alice";
  SshRunner ssh(runner, "rivanna.hpc", std::string("alice"));
  const Command submit{{"sbatch", "/w/job.sh"}, {}, fs::path("/w")};
  EXPECT_EQ(ssh.wrap(submit).str(), "ssh -o BatchMode=yes alice@rivanna.hpc -- 'cd '\\''/w'\\'' && sbatch /w/job.sh'");
  runner->on(ssh.wrap(submit).str(), {0, "Submitted batch job 5\n", ""});
  runner->on(ssh.wrap(Command{{"squeue", "-j", "5", "-h", "-o", "%T"}, {}, {}}).str(), {255, "", "Connection refused"});

  SlurmScheduler s(target, runner);
  const auto h = s.submit("/w/job.sh", "e");
  EXPECT_EQ(h.native_id, "5");
  EXPECT_THROW(s.status(h), TransportError);
}

TEST(Slurm, CancelIsIdempotent) {
  auto runner = std::make_shared<FixtureRunner>();
  runner->on("sbatch /w/a.sh", {0, "Submitted batch job 1\n", ""});
  runner->then("squeue -j 1 -h -o %T", {0, "RUNNING\n", ""});
  runner->on("scancel 1", {0, "", ""});
  SlurmScheduler s(slurm_target(), runner);
  const auto h = s.submit("/w/a.sh", "a");
  EXPECT_EQ(s.cancel(h), JobState::cancelled);
  EXPECT_EQ(s.cancel(h), JobState::cancelled);
  EXPECT_EQ(s.status(h), JobState::cancelled);
  const auto calls = runner->calls();
  EXPECT_EQ(std::count(calls.begin(), calls.end(), "scancel 1"), 1);
}

TEST(Lsf, Transcript) {
  auto runner = std::make_shared<FixtureRunner>();
  runner->on("bsub < /w/job.sh", {0, "Job <881> is submitted to queue <batch>.\n", ""});
  runner->then("bjobs -noheader 881", {0, "881     alice   PEND  batch  login1   -   job  Jan  1 00:00\n", ""});
  runner->then("bjobs -noheader 881", {0, "881     alice   RUN   batch  login1   h12 job  Jan  1 00:00\n", ""});
  runner->then("bjobs -noheader 881", {0, "881     alice   DONE  batch  login1   h12 job  Jan  1 00:00\n", ""});
  LsfScheduler s(lsf_target(), runner);
  const auto h = s.submit("/w/job.sh", "e");
  EXPECT_EQ(h.native_id, "881");
  EXPECT_EQ(s.status(h), JobState::pending);
  EXPECT_EQ(s.status(h), JobState::running);
  EXPECT_EQ(s.status(h), JobState::done);
  EXPECT_EQ(s.cancel(h), JobState::done);
  EXPECT_EQ(LsfScheduler::map_state("EXIT"), JobState::failed);
  EXPECT_EQ(LsfScheduler::map_state("ZOMBI"), JobState::unknown);
}

TEST(Lsf, StatesNeverMoveBackwards) {
  auto runner = std::make_shared<FixtureRunner>();
  runner->on("bsub < /w/job.sh", {0, "Job <3> is submitted to default queue <normal>.\n", ""});
  runner->then("bjobs -noheader 3", {0, "3 u RUN q h h j t\n", ""});
  runner->then("bjobs -noheader 3", {0, "3 u PEND q h h j t\n", ""});
  LsfScheduler s(lsf_target(), runner);
  const auto h = s.submit("/w/job.sh", "e");
  EXPECT_EQ(s.status(h), JobState::running);
  EXPECT_EQ(s.status(h), JobState::running);
}

TEST(Mock, FirstHandleAndPolicyLimit) {
  MockScheduler m(mock_target(1, std::nullopt, 10));
  TempDir tmp;
  const auto script = write_script(tmp.path(), "job.sh", "# mock: ticks=3\n");
  EXPECT_EQ(m.submit(script, "e0").native_id, "m-1");
  for (int i = 1; i < 10; ++i) m.submit(script, "e" + std::to_string(i));
  try {
    m.submit(script, "e10");
    FAIL();
  } catch (const PolicyError& e) {
    EXPECT_NE(std::string(e.what()).find("max_queued_jobs=10"), std::string::npos);
  }
}

TEST(Mock, WidthOneTrace) {
  MockScheduler m(mock_target(1));
  m.set_behavior("a", {2, 0});
  m.set_behavior("b", {2, 0});
  const auto a = m.submit("/nonexistent/a.sh", "a", fs::path());
  const auto b = m.submit("/nonexistent/b.sh", "b", fs::path());
  EXPECT_EQ(m.status(a), JobState::pending);
  m.advance(1);
  EXPECT_EQ(m.status(a), JobState::running);
  EXPECT_EQ(m.status(b), JobState::pending);
  m.advance(1);
  EXPECT_EQ(m.status(a), JobState::done);
  EXPECT_EQ(m.status(b), JobState::running);
  m.advance(2);
  EXPECT_EQ(m.status(b), JobState::done);
}

TEST(Mock, WidthTwoThreeShortJobs) {
  MockScheduler m(mock_target(2));
  std::vector<JobHandle> hs;
  for (const char* id : {"a", "b", "c"}) hs.push_back(m.submit("/x.sh", id, fs::path()));
  m.advance(2);
  for (const auto& h : hs) EXPECT_EQ(m.status(h), JobState::done) << h.experiment_id;
}

TEST(Mock, CancelRunningWithinOneTick) {
  TempDir tmp;
  MockScheduler m(mock_target(1));
  m.set_behavior("long", {100, 0});
  const auto h = m.submit("/x.sh", "long", tmp / "long");
  m.advance(1);
  ASSERT_EQ(m.status(h), JobState::running);
  EXPECT_EQ(m.cancel(h), JobState::cancelled);
  m.advance(1);
  EXPECT_EQ(m.status(h), JobState::cancelled);
  EXPECT_EQ(parse_latest(read_file(tmp / "long" / "status.log"))->state, RecordState::cancelled);
}

TEST(Mock, TimeoutUnderWallCap) {
  MockScheduler m(mock_target(1, 3));
  m.set_behavior("long", {5, 0});
  const auto h = m.submit("/x.sh", "long", fs::path());
  m.advance(10);
  EXPECT_EQ(m.status(h), JobState::failed);
  EXPECT_EQ(m.reason(h.native_id), "timeout");
}

TEST(Mock, CancelPendingAndDone) {
  MockScheduler m(mock_target(1));
  const auto a = m.submit("/x.sh", "a", fs::path());
  const auto b = m.submit("/x.sh", "b", fs::path());
  EXPECT_EQ(m.cancel(b), JobState::cancelled);
  m.advance(3);
  EXPECT_EQ(m.status(a), JobState::done);
  EXPECT_EQ(m.cancel(a), JobState::done);
  EXPECT_EQ(m.status(b), JobState::cancelled);
}

TEST(Mock, DirectiveAndStatusFile) {
  TempDir tmp;
  const auto script = write_script(tmp / "job", "job.sh", "#!/bin/sh\n# mock: ticks=2 exit=3\n");
  EXPECT_EQ(parse_mock_directive(read_file(script)).ticks, 2);
  MockScheduler m(mock_target(1));
  const auto h = m.submit(script, "job");
  m.advance(2);
  EXPECT_EQ(m.status(h), JobState::failed);
  const auto latest = parse_latest(read_file(tmp / "job" / "status.log"));
  ASSERT_TRUE(latest);
  EXPECT_EQ(latest->state, RecordState::failed);
  EXPECT_EQ(latest->message, "exit code 3");
  EXPECT_EQ(format_utc(latest->timestamp), "2025-01-01T00:02:00Z");
}

TEST(Mock, StatePersists) {
  TempDir tmp;
  MockOptions opts;
  opts.state_file = tmp / "mock.json";
  JobHandle h;
  {
    MockScheduler m(mock_target(1), opts);
    m.set_behavior("a", {3, 0});
    h = m.submit("/x.sh", "a", fs::path());
    m.advance(1);
  }
  MockScheduler again(mock_target(1), opts);
  EXPECT_EQ(again.clock(), 1);
  EXPECT_EQ(again.status(h), JobState::running);
  again.advance(2);
  EXPECT_EQ(again.status(h), JobState::done);
}

TEST(MockProperty, MatchesQueueSimulation) {
  std::mt19937 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const int width = std::uniform_int_distribution<int>(1, 4)(rng);
    const int n = std::uniform_int_distribution<int>(1, 8)(rng);
    std::optional<int> cap;
    if (rng() % 3 == 0) cap = std::uniform_int_distribution<int>(1, 4)(rng);
    std::vector<int> ticks;
    for (int i = 0; i < n; ++i) ticks.push_back(std::uniform_int_distribution<int>(1, 5)(rng));
    const auto expected = simulate_queue(width, ticks, cap);

    MockScheduler m(mock_target(width, cap));
    std::vector<JobHandle> handles;
    std::vector<std::vector<JobState>> seen(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      m.set_behavior("j" + std::to_string(i), {ticks[static_cast<std::size_t>(i)], 0});
      handles.push_back(m.submit("/x.sh", "j" + std::to_string(i), fs::path()));
    }
    for (long long t = 0; t <= 45; ++t) {
      for (std::size_t i = 0; i < handles.size(); ++i) {
        const auto& e = expected[i];
        // queued jobs are picked up when the clock first moves
        JobState want = t == 0 || t < e.start ? JobState::pending
                        : t < e.finish ? JobState::running
                        : e.timeout ? JobState::failed
                                    : JobState::done;
        ASSERT_EQ(m.status(handles[i]), want) << "trial " << trial << " job " << i << " t=" << t;
      }
      m.advance(1);
    }
  }
}

TEST(Local, RunsScriptAndCapturesExit) {
  TempDir tmp;
  ResourceTarget t;
  t.name = "local";
  LocalScheduler s(t);
  const auto ok = write_script(tmp / "ok", "job.sh", "#!/bin/sh\necho hi > out.txt\n");
  const auto bad = write_script(tmp / "bad", "job.sh", "#!/bin/sh\nexit 4\n");
  const auto h1 = s.submit(ok, "ok");
  const auto h2 = s.submit(bad, "bad");
  EXPECT_GT(std::stol(h1.native_id), 0);
  auto wait = [&](const JobHandle& h) {
    for (int i = 0; i < 500; ++i) {
      const auto st = s.status(h);
      if (is_terminal(st)) return st;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    return JobState::unknown;
  };
  EXPECT_EQ(wait(h1), JobState::done);
  EXPECT_EQ(wait(h2), JobState::failed);
  EXPECT_EQ(read_file(tmp / "ok" / "out.txt"), "hi\n");
  const auto latest = parse_latest(read_file(tmp / "ok" / "status.log"));
  ASSERT_TRUE(latest);
  EXPECT_EQ(latest->state, RecordState::done);
}

TEST(Local, CancelRunningJob) {
  TempDir tmp;
  ResourceTarget t;
  t.name = "local";
  LocalScheduler s(t);
  const auto script = write_script(tmp / "slow", "job.sh", "#!/bin/sh\nsleep 30\n");
  const auto h = s.submit(script, "slow");
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  EXPECT_EQ(s.cancel(h), JobState::cancelled);
  EXPECT_EQ(s.status(h), JobState::cancelled);
  EXPECT_EQ(parse_latest(read_file(tmp / "slow" / "status.log"))->state, RecordState::cancelled);
}

TEST(Ssh, TranscriptThroughFixture) {
  auto runner = std::make_shared<FixtureRunner>();
  ResourceTarget t;
  t.name = "lab";
  t.kind = ResourceKind::ssh;
  t.host = "lab.example.org";
  SshScheduler s(t, runner);
  EXPECT_THROW(s.submit("/w/job.sh", "e"), SubmitError);  // no fixture: exit 127
  const auto calls = runner->calls();
  ASSERT_EQ(calls.size(), 1u);
  EXPECT_EQ(calls[0].rfind("ssh -o BatchMode=yes lab.example.org -- ", 0), 0u) << calls[0];
  EXPECT_NE(calls[0].find("echo $!"), std::string::npos);
}
