#include "support.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "mmh/cli.hpp"
#include "mmh/text.hpp"

namespace mmh::testing {

namespace {

const std::vector<std::string> kWords = {"apple", "river", "stone", "cloud", "green", "house",
                                         "light", "music", "night", "paper", "quiet", "sugar"};

std::vector<std::string> distinct_phrases(size_t n, size_t words, std::mt19937_64& rng) {
  std::set<std::string> seen;
  std::vector<std::string> out;
  while (out.size() < n) {
    std::string s;
    for (size_t w = 0; w < words; ++w) s += (w ? " " : "") + kWords[rng() % kWords.size()];
    if (seen.insert(s).second) out.push_back(s);
  }
  return out;
}

std::string section(const std::string& name, const std::vector<std::string>& lines) {
  if (lines.empty()) return name + ": {}\n";
  std::string s = name + ":\n";
  for (const auto& l : lines) s += "  " + l + "\n";
  return s;
}

}  // namespace

TempDir::TempDir(const std::string& tag) {
  std::string pattern = (fs::temp_directory_path() / (tag + "-XXXXXX")).string();
  if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
  path_ = pattern;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string config_yaml(const std::vector<std::string>& model, const std::vector<std::string>& data,
                        const std::vector<std::string>& processor, const std::vector<std::string>& training) {
  std::vector<std::string> m = {"type: default_multimodal_encoder_decoder"};
  m.insert(m.end(), model.begin(), model.end());
  return section("model", m) + section("data", data) + section("processor", processor) +
         section("training", training);
}

PoseSequence random_pose(uint32_t frames, uint32_t keypoints, uint32_t channels, double fps, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  PoseSequence p;
  p.frames = frames;
  p.keypoints = keypoints;
  p.channels = channels;
  p.fps = fps;
  p.data.resize(size_t{frames} * keypoints * channels);
  for (auto& x : p.data) x = d(rng);
  return p;
}

Fixture copy_task(const fs::path& dir, size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  Fixture f{dir, dir / "config.yaml", dir / "train.tsv", distinct_phrases(n, 4, rng)};
  std::string tsv = "signal\tsignal_start\tsignal_end\tencoder_prompt\tdecoder_prompt\toutput\n";
  for (const auto& s : f.targets) tsv += s + "\t0\t0\t\t\t" + s + "\n";
  text::write_file(f.train, tsv);
  text::write_file(f.config, config_yaml({"d_model: 64", "dropout: 0.0"},
                                         {"train_metadata_file: train.tsv", "test_metadata_file: train.tsv"}, {},
                                         {"max_steps: 300", "batch_size: 16", "lr: 0.003", "max_len: 16",
                                          "seed: 7", "output_dir: artifacts"}));
  return f;
}

Fixture pose_task(const fs::path& dir, size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  Fixture f{dir, dir / "config.yaml", dir / "train.tsv", distinct_phrases(n, 3, rng)};
  fs::create_directories(dir / "poses");
  std::string tsv = "signal\tsignal_start\tsignal_end\tencoder_prompt\tdecoder_prompt\toutput\n";
  for (size_t i = 0; i < n; ++i) {
    const auto frames = static_cast<uint32_t>(18 + rng() % 5);
    const std::string name = "poses/sample" + std::to_string(i) + ".mmhpose";
    save_pose(random_pose(frames, 4, 3, 25.0, seed * 1000 + i), dir / name);
    const bool clipped = i % 2 == 1;
    tsv += name + "\t" + (clipped ? "120\t680" : "0\t0") + "\t<slt> <en>\t\t" + f.targets[i] + "\n";
  }
  text::write_file(f.train, tsv);
  text::write_file(f.config, config_yaml({"d_model: 64", "dropout: 0.0", "multimodal_mapper_type: linear"},
                                         {"train_metadata_file: train.tsv", "test_metadata_file: train.tsv"},
                                         {"new_vocabulary: \"<slt>,<en>\""},
                                         {"max_steps: 500", "batch_size: 16", "lr: 0.003", "max_len: 12",
                                          "seed: 11", "output_dir: artifacts"}));
  return f;
}

Fixture mixed_task(const fs::path& dir, size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  Fixture f{dir, dir / "config.yaml", dir / "train.tsv", distinct_phrases(n, 3, rng)};
  fs::create_directories(dir / "poses");
  std::string tsv = "encoder_input\tdecoder_input\tlabel\n";
  for (size_t i = 0; i < n; ++i) {
    const std::string name = "poses/clip" + std::to_string(i) + ".mmhpose";
    save_pose(random_pose(20, 4, 3, 25.0, seed * 1000 + i), dir / name);
    const std::string bounds = i % 2 ? "#120-680" : "";
    tsv += "describe <signal:" + name + bounds + "> " + kWords[i % 3] + "\t\t" + f.targets[i] + "\n";
  }
  text::write_file(f.train, tsv);
  text::write_file(f.config, config_yaml({"d_model: 64", "dropout: 0.0"},
                                         {"train_metadata_file: train.tsv", "test_metadata_file: train.tsv"}, {},
                                         {"max_steps: 500", "batch_size: 16", "lr: 0.003", "max_len: 12",
                                          "seed: 13", "output_dir: artifacts"}));
  return f;
}

double exact_match(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size() || a.empty()) return 0.0;
  size_t hits = 0;
  for (size_t i = 0; i < a.size(); ++i) hits += a[i] == b[i];
  return static_cast<double>(hits) / static_cast<double>(a.size());
}

int run_cli(const std::vector<std::string>& args, std::string* out, std::string* err) {
  std::ostringstream o, e;
  const int code = mmh::run_cli(args, o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return code;
}

double printed_score(const std::string& out, const std::string& metric) {
  double score = std::numeric_limits<double>::quiet_NaN();
  std::istringstream in(out);
  std::string line;
  const std::string prefix = metric + ": ";
  while (std::getline(in, line)) {
    if (line.rfind(prefix, 0) == 0) score = std::strtod(line.c_str() + prefix.size(), nullptr);
  }
  return score;
}

}  // namespace mmh::testing
