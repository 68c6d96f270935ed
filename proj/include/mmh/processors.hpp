#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "mmh/metadata.hpp"
#include "mmh/modality.hpp"
#include "mmh/render.hpp"
#include "mmh/vocab.hpp"

namespace mmh {

/// Row-major dense matrix of doubles.
struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& at(size_t r, size_t c) { return data[r * cols + c]; }
  double at(size_t r, size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(size_t r) const { return {data.data() + r * cols, cols}; }
  bool empty() const { return rows == 0; }
  bool operator==(const Matrix&) const = default;
};

enum class EncoderKind { Tokens, Features };

/// A contiguous run of encoder positions taken from either the token list or
/// the feature rows of a ModelInput.
struct EncoderBlock {
  enum class Source { Tokens, Features };
  Source source = Source::Tokens;
  size_t offset = 0;
  size_t length = 0;

  bool operator==(const EncoderBlock&) const = default;
};

struct ModelInput {
  EncoderKind encoder_kind = EncoderKind::Tokens;
  std::vector<int> encoder_tokens;
  Matrix encoder_features;
  /// Order of the encoder stream. Single-signal samples use prompt tokens first,
  /// then features; mixed records interleave blocks in source order.
  std::vector<EncoderBlock> layout;
  std::vector<int> decoder_prompt_tokens;
  std::vector<int> label_tokens;
  size_t source_index = 0;

  size_t encoder_length() const { return encoder_tokens.size() + encoder_features.rows; }
  bool operator==(const ModelInput&) const = default;
};

struct ProcessorConfig {
  uint32_t skip_frames_stride = 1;
  double fps_default = 25.0;
  bool normalize_pose = false;
  RenderOptions image;
  std::shared_ptr<const GlyphTable> font = std::make_shared<GlyphTable>(GlyphTable::builtin());
  ExtensionRegistry extensions = ExtensionRegistry::defaults();
};

/// Loads, clips, subsamples and flattens one signal file into [T, D] features.
/// Pose -> [T, K*C] (optionally standardized per channel); features -> [T, D];
/// video -> [T, H*W*C] scaled to [0, 1].
Matrix signal_features(const std::filesystem::path& path, SignalKind kind, int64_t start_ms, int64_t end_ms,
                       const ProcessorConfig& config);

/// Flattens each word image to a row scaled to [0, 1].
Matrix image_features(const ImageSequence& images);

/// Errors from loading or clipping are re-raised with the row index in the message.
ModelInput process_sample(const SampleRecord& record, size_t source_index, Modality modality,
                          const Vocabulary& vocab, const ProcessorConfig& config,
                          const std::filesystem::path& base_dir = {});

/// Processes every record of a table, resolving relative signal paths against the table's directory.
std::vector<ModelInput> process_table(const SplitTable& table, Modality modality, const Vocabulary& vocab,
                                      const ProcessorConfig& config);

inline constexpr int kIgnoreIndex = -100;

struct EncoderSlot {
  enum class Source : uint8_t { Pad, Token, Feature };
  Source source = Source::Pad;
  uint32_t index = 0;  // into Batch::encoder_tokens or the rows of Batch::features

  bool operator==(const EncoderSlot&) const = default;
};

/// Right-padded batch. Decoder inputs are the prompt followed by the labels
/// shifted right; label positions that predict prompt tokens or padding hold
/// kIgnoreIndex.
struct Batch {
  size_t size = 0;
  EncoderKind kind = EncoderKind::Tokens;
  size_t feature_dim = 0;
  size_t max_prompt = 0;
  size_t max_frames = 0;
  size_t encoder_length = 0;
  size_t decoder_length = 0;

  std::vector<int> encoder_tokens;        // [B, max_prompt]
  std::vector<double> features;           // [B, max_frames, feature_dim]
  std::vector<uint8_t> encoder_mask;      // [B, encoder_length]
  std::vector<EncoderSlot> encoder_plan;  // [B, encoder_length]
  std::vector<int> decoder_input;         // [B, decoder_length]
  std::vector<int> labels;                // [B, decoder_length]
  std::vector<uint8_t> decoder_mask;      // [B, decoder_length]

  std::vector<size_t> prompt_lengths;
  std::vector<size_t> feature_lengths;
  std::vector<size_t> encoder_lengths;
  std::vector<size_t> decoder_lengths;
  std::vector<size_t> source_indices;
};

/// Throws HeterogeneousBatch on mixed encoder kinds or feature widths.
Batch collate(std::span<const ModelInput> inputs, const Vocabulary& vocab);

}  // namespace mmh
