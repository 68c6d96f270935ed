#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mmh/config.hpp"
#include "mmh/metrics.hpp"
#include "mmh/modality.hpp"

namespace mmh {

/// Artifacts directory layout (training.output_dir):
///   config.yaml           resolved configuration snapshot
///   vocab.txt             vocabulary, one token per line
///   setup.json            modality, input_dim, model spec, vocab hash, dataset fingerprints
///   init.ckpt             freshly initialized model
///   checkpoints/step-NNNNNN.ckpt
///   best.ckpt             lowest validation loss (final weights when no validation split)
///   train_log.jsonl       one JSON object per step and per evaluation
///   predictions.txt       written by generate
namespace artifacts {
inline constexpr const char* kConfig = "config.yaml";
inline constexpr const char* kVocab = "vocab.txt";
inline constexpr const char* kSetup = "setup.json";
inline constexpr const char* kInitCheckpoint = "init.ckpt";
inline constexpr const char* kBestCheckpoint = "best.ckpt";
inline constexpr const char* kCheckpointDir = "checkpoints";
inline constexpr const char* kTrainLog = "train_log.jsonl";
inline constexpr const char* kPredictions = "predictions.txt";
std::filesystem::path step_checkpoint(const std::filesystem::path& dir, uint64_t step);
}  // namespace artifacts

struct DatasetFingerprint {
  std::string split;
  std::string path;
  size_t rows = 0;
  std::string content_hash;
};

struct SetupInfo {
  Modality modality = Modality::Text2Text;
  ModelSpec spec;
  uint64_t vocab_hash = 0;
  std::vector<DatasetFingerprint> datasets;

  std::string to_json() const;
  static SetupInfo from_json(const std::string& json);
};

/// Validates the data, builds or loads the vocabulary, probes the signal
/// width, initializes the model from training.seed and writes the artifacts
/// directory. Throws ValidationFailed or SignalProbeFailed.
std::filesystem::path setup(Modality modality, const RunConfig& config, std::ostream* warnings = nullptr);

/// "seq2seq" for single-modality data, "mixed-seq2seq" for mixed2text. Throws UnknownTask.
void check_task(std::string_view task, Modality modality);

struct TrainOptions {
  std::string task = "seq2seq";
  std::vector<Override> overrides;
  std::optional<std::filesystem::path> resume_from;
  std::ostream* progress = nullptr;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
  std::filesystem::path log_path;
  uint64_t first_step = 1;
  uint64_t last_step = 0;
  std::vector<double> losses;  // one per executed step
};

/// Throws NonFiniteLoss after saving the last good state as a step checkpoint.
TrainResult train(const std::filesystem::path& artifacts_dir, const TrainOptions& options = {});

struct GenerateOptions {
  std::string task = "seq2seq";
  std::string metric_name = "bleu";
  std::string split = "test";
  std::optional<std::filesystem::path> checkpoint;  // default: best.ckpt, else the newest step checkpoint
  std::optional<std::filesystem::path> predictions_path;
  std::vector<Override> overrides;
};

struct GenerateResult {
  EvalResult eval;
  std::filesystem::path predictions_path;
  std::vector<std::string> predictions;
  std::vector<std::string> references;
};

/// Decodes every record of the split in file order. Throws UnknownMetric or IncompatibleSpec.
GenerateResult generate(const std::filesystem::path& artifacts_dir, const GenerateOptions& options = {});

/// Metric names accepted by generate.
const std::vector<std::string>& supported_metrics();

}  // namespace mmh
