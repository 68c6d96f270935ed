#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mmh/model.hpp"
#include "mmh/optim.hpp"

namespace mmh {

struct ModelSection {
  std::string type = "default_multimodal_encoder_decoder";
  /// Names of pretrained families (t5, mt5, byt5, m2m100) select the built-in backbone.
  std::string backbone_type = "tiny-transformer";
  std::string pretrained_backbone;  // recorded, never loaded
  std::string pretrained_checkpoint;
  ModelSpec spec;  // input_dim and vocab_size are filled in by setup
};

struct DataFilters {
  size_t max_signal_frames = 0;  // 0 disables
  size_t max_output_tokens = 0;  // 0 disables
  std::vector<std::string> required_fields;
};

struct DataSection {
  std::string train_metadata_file;
  std::string validation_metadata_file;
  std::string test_metadata_file;
  DataFilters filters;
};

struct ProcessorSection {
  std::string text_tokenizer_path;
  std::string new_vocabulary;
  size_t min_count = 1;
  uint32_t skip_frames_stride = 1;
  double fps_default = 25.0;
  bool normalize_pose = false;
  uint32_t image_height = 24;
  uint32_t image_width = 96;
  uint32_t image_scale = 2;
  std::string font_path;
  std::map<std::string, std::string> extensions;  // ".ext" -> pose | features | video
};

struct TrainingSection {
  size_t max_steps = 1000;
  size_t batch_size = 16;
  AdamConfig optimizer;
  uint64_t seed = 42;
  size_t eval_every = 0;        // 0: evaluate only after the last step
  size_t checkpoint_every = 0;  // 0: checkpoint only after the last step
  size_t log_every = 0;         // progress lines on stderr; 0 silences them
  size_t max_len = 64;
  size_t beam = 1;
  std::string freeze_policy = "none";
  std::string output_dir;
};

struct RunConfig {
  ModelSection model;
  DataSection data;
  ProcessorSection processor;
  TrainingSection training;

  /// Fully resolved YAML; loading it again yields an equal configuration.
  std::string to_yaml() const;
  ProcessorConfig processor_config() const;
};

using Override = std::pair<std::string, std::string>;

/// `key` is "section.key" or a bare training key; `value` is parsed as YAML.
/// Throws MissingSection, UnknownKey or TypeError. Relative paths resolve
/// against the config file's directory. When the file sets no seed and no
/// override does, MMH_SEED is consulted before the built-in default.
RunConfig load_config(const std::filesystem::path& path, const std::vector<Override>& overrides = {});
RunConfig parse_config(const std::string& yaml, const std::filesystem::path& base_dir,
                       const std::vector<Override>& overrides = {});

}  // namespace mmh
