#include "bench/gpu_watch.hpp"

#include <thread>

#include <nlohmann/json.hpp>

#include "bench/error.hpp"

namespace bench {

std::vector<std::string> default_gpu_sampler() {
  return {"nvidia-smi", "--query-gpu=utilization.gpu,memory.used,power.draw,temperature.gpu",
          "--format=csv,noheader,nounits", "-i", "{gpu}"};
}

bool GpuSample::same_values(const GpuSample& o) const {
  return gpu == o.gpu && util_pct == o.util_pct && mem_used == o.mem_used && power_w == o.power_w &&
         temp_c == o.temp_c;
}

std::string GpuSample::csv_row() const {
  return join({format_utc_millis(ts), std::to_string(gpu), util_pct, mem_used, power_w, temp_c}, ",");
}

std::string GpuSample::json_line() const {
  nlohmann::ordered_json j;
  j["ts"] = format_utc_millis(ts);
  j["gpu"] = gpu;
  j["util_pct"] = util_pct;
  j["mem_used"] = mem_used;
  j["power_w"] = power_w;
  j["temp_c"] = temp_c;
  return j.dump();
}

std::optional<GpuSample> parse_gpu_sample(std::string_view text, int gpu, TimePoint ts) {
  const auto line = text.substr(0, text.find('\n'));
  auto fields = split(line, ',');
  if (fields.size() != 4) return std::nullopt;
  for (auto& f : fields) {
    f = trim(f);
    if (f.empty() || f.find('"') != std::string::npos) return std::nullopt;
  }
  return GpuSample{ts, gpu, fields[0], fields[1], fields[2], fields[3]};
}

GpuWatchStats gpu_watch(const GpuWatchOptions& opts, std::ostream& out, std::stop_token stop) {
  if (opts.sampler.empty()) throw ValidationError("gpu watch: empty sampler command");
  if (opts.delay_seconds <= 0) throw ValidationError("gpu watch: delay must be positive");
  if (!executable_exists(opts.sampler.front()))
    throw Error(ErrorKind::generic, "gpu watch: sampler '" + opts.sampler.front() + "' not found");

  auto runner = opts.runner ? opts.runner : std::make_shared<ProcessRunner>();
  auto clock = opts.clock ? opts.clock : [] { return Clock::now(); };
  auto sleep = opts.sleep ? opts.sleep : [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };

  Command cmd;
  for (const auto& arg : opts.sampler) {
    auto a = arg;
    for (auto pos = a.find("{gpu}"); pos != std::string::npos; pos = a.find("{gpu}"))
      a.replace(pos, 5, std::to_string(opts.gpu));
    cmd.argv.push_back(std::move(a));
  }

  GpuWatchStats stats;
  std::optional<GpuSample> last;
  if (!opts.json_lines) out << kGpuCsvHeader << "\n" << std::flush;
  const auto begin = clock();
  while (!stop.stop_requested()) {
    const auto now = clock();
    if (opts.duration_seconds && std::chrono::duration<double>(now - begin).count() >= *opts.duration_seconds) break;

    std::optional<GpuSample> sample;
    try {
      auto r = runner->run(cmd);
      if (r.exit_code == 0) sample = parse_gpu_sample(r.out, opts.gpu, now);
    } catch (const Error&) {
      sample.reset();
    }
    if (!sample) {
      ++stats.failures;
      sample = GpuSample{now, opts.gpu};
    }
    ++stats.samples;
    if (!(opts.dense && last && last->same_values(*sample))) {
      out << (opts.json_lines ? sample->json_line() : sample->csv_row()) << "\n" << std::flush;
      ++stats.rows;
    }
    last = sample;
    sleep(std::chrono::duration<double>(opts.delay_seconds));
  }
  return stats;
}

}  // namespace bench
