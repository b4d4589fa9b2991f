#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "bench/util.hpp"

namespace bench::testing {

namespace fs = std::filesystem;

inline fs::path data_file(const std::string& name) { return fs::path(BENCH_TEST_DATA) / name; }

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("bench-test-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

/// sha256 over sorted relative paths and file contents. With `skip_prefix`,
/// lines starting with it are dropped before hashing.
inline std::string tree_hash(const fs::path& root, const std::string& skip_prefix = "") {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& f : files) {
    std::string body = read_file(root / f);
    if (!skip_prefix.empty()) {
      std::string kept;
      for (const auto& line : split(body, '\n'))
        if (line.rfind(skip_prefix, 0) != 0) kept += line + "\n";
      body = kept;
    }
    acc += f.generic_string() + "\n" + sha256_hex(body) + "\n";
  }
  return sha256_hex(acc);
}

/// Copies the five-node chain workflow and its scripts into `dir`.
inline fs::path stage_chain_workflow(const fs::path& dir) {
  for (const char* f : {"chain_workflow.yaml", "fetch-data.sh", "compute.sh", "analyze.sh"})
    fs::copy_file(data_file(f), dir / f, fs::copy_options::overwrite_existing);
  return dir / "chain_workflow.yaml";
}

inline TimePoint at_millis(std::int64_t ms) { return TimePoint(std::chrono::milliseconds(ms)); }

}  // namespace bench::testing
