#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmh/error.hpp"
#include "mmh/signal_io.hpp"

namespace mmh::testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "mmh");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

struct Fixture {
  fs::path dir;
  fs::path config;
  fs::path train;
  std::vector<std::string> targets;
};

/// YAML run configuration with the given per-section lines ("key: value").
std::string config_yaml(const std::vector<std::string>& model, const std::vector<std::string>& data,
                        const std::vector<std::string>& processor, const std::vector<std::string>& training);

/// n four-word sentences copied from signal text to output; the train split doubles as test split.
Fixture copy_task(const fs::path& dir, size_t n = 16, uint64_t seed = 1);

/// n noise pose files (K=4, C=3, about 20 frames at 25 fps) each mapped to a
/// distinct three-word target behind the prompt "<slt> <en>". Every second row
/// carries non-zero millisecond clip bounds.
Fixture pose_task(const fs::path& dir, size_t n = 16, uint64_t seed = 2);

/// Mixed records "<word> <signal:file#S-E> <word>" with a distinct three-word label each.
Fixture mixed_task(const fs::path& dir, size_t n = 16, uint64_t seed = 3);

PoseSequence random_pose(uint32_t frames, uint32_t keypoints, uint32_t channels, double fps, uint64_t seed);

double exact_match(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Runs the command line in-process; stdout and stderr are captured when requested.
int run_cli(const std::vector<std::string>& args, std::string* out = nullptr, std::string* err = nullptr);

/// Last line of the form "<metric>: <score>" parsed from captured stdout; NaN if absent.
/// Code of the mmh::Error thrown by f, or nullopt when nothing is thrown.
template <class F>
std::optional<ErrorCode> code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

double printed_score(const std::string& out, const std::string& metric);

}  // namespace mmh::testing
