#include "mmh/processors.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <optional>

#include "mmh/error.hpp"
#include "mmh/signal_io.hpp"

namespace mmh {

namespace {

template <class T>
Matrix to_matrix(size_t rows, size_t cols, const std::vector<T>& data, double scale) {
  Matrix m(rows, cols);
  for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = static_cast<double>(data[i]) * scale;
  return m;
}

void standardize_channels(Matrix& m, size_t channels) {
  if (channels == 0 || m.cols % channels != 0) return;
  const size_t per_row = m.cols / channels;
  for (size_t c = 0; c < channels; ++c) {
    double sum = 0.0, sq = 0.0;
    const double n = static_cast<double>(m.rows * per_row);
    for (size_t r = 0; r < m.rows; ++r) {
      for (size_t k = 0; k < per_row; ++k) sum += m.at(r, k * channels + c);
    }
    const double mean = sum / n;
    for (size_t r = 0; r < m.rows; ++r) {
      for (size_t k = 0; k < per_row; ++k) {
        const double d = m.at(r, k * channels + c) - mean;
        sq += d * d;
      }
    }
    double sd = std::sqrt(sq / n);
    if (sd < 1e-8) sd = 1.0;
    for (size_t r = 0; r < m.rows; ++r) {
      for (size_t k = 0; k < per_row; ++k) {
        double& v = m.at(r, k * channels + c);
        v = (v - mean) / sd;
      }
    }
  }
}

std::vector<int> decoder_prompt(const Vocabulary& vocab, const std::string& prompt) {
  std::vector<int> ids = vocab.tokenize(prompt);
  if (ids.empty()) ids.push_back(vocab.pad_id());
  return ids;
}

}  // namespace

Matrix signal_features(const std::filesystem::path& path, SignalKind kind, int64_t start_ms, int64_t end_ms,
                       const ProcessorConfig& config) {
  switch (kind) {
    case SignalKind::Pose: {
      auto seq = skip_frames(clip_temporal(load_pose(path, config.fps_default), start_ms, end_ms),
                             config.skip_frames_stride);
      Matrix m = to_matrix(seq.frames, seq.frame_size(), seq.data, 1.0);
      if (config.normalize_pose) standardize_channels(m, seq.channels);
      return m;
    }
    case SignalKind::Features: {
      auto seq = skip_frames(clip_temporal(load_features(path), start_ms, end_ms), config.skip_frames_stride);
      return to_matrix(seq.frames, seq.frame_size(), seq.data, 1.0);
    }
    case SignalKind::Video: {
      auto seq = skip_frames(clip_temporal(load_frames(path), start_ms, end_ms), config.skip_frames_stride);
      return to_matrix(seq.frames, seq.frame_size(), seq.data, 1.0 / 255.0);
    }
  }
  return {};
}

Matrix image_features(const ImageSequence& images) {
  return to_matrix(images.count, size_t{images.height} * images.width, images.data, 1.0 / 255.0);
}

ModelInput process_sample(const SampleRecord& record, size_t source_index, Modality modality,
                          const Vocabulary& vocab, const ProcessorConfig& config,
                          const std::filesystem::path& base_dir) {
  ModelInput in;
  in.source_index = source_index;
  in.encoder_tokens = vocab.tokenize(record.encoder_prompt);

  try {
    switch (modality) {
      case Modality::Text2Text: {
        auto signal_tokens = vocab.tokenize(record.signal);
        in.encoder_tokens.insert(in.encoder_tokens.end(), signal_tokens.begin(), signal_tokens.end());
        break;
      }
      case Modality::Pose2Text:
      case Modality::Features2Text:
      case Modality::Video2Text: {
        if (record.signal.empty()) break;
        std::filesystem::path p{record.signal};
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        in.encoder_features =
            signal_features(p, *signal_kind_of(modality), record.signal_start, record.signal_end, config);
        break;
      }
      case Modality::Image2Text: {
        if (record.signal.empty()) break;
        in.encoder_features = image_features(render_word_images(record.signal, *config.font, config.image));
        break;
      }
      case Modality::Mixed2Text:
        throw Error(ErrorCode::UnknownModality, "mixed2text records go through the meta processor");
    }
  } catch (const Error& e) {
    throw Error(e.code(), "row " + std::to_string(source_index) + ": " + e.message());
  }

  in.encoder_kind = in.encoder_features.rows > 0 ? EncoderKind::Features : EncoderKind::Tokens;
  if (!in.encoder_tokens.empty()) {
    in.layout.push_back({EncoderBlock::Source::Tokens, 0, in.encoder_tokens.size()});
  }
  if (in.encoder_features.rows > 0) {
    in.layout.push_back({EncoderBlock::Source::Features, 0, in.encoder_features.rows});
  }
  in.decoder_prompt_tokens = decoder_prompt(vocab, record.decoder_prompt);
  if (!record.output.empty()) {
    in.label_tokens = vocab.tokenize(record.output);
    in.label_tokens.push_back(vocab.eos_id());
  }
  return in;
}

std::vector<ModelInput> process_table(const SplitTable& table, Modality modality, const Vocabulary& vocab,
                                      const ProcessorConfig& config) {
  const auto base = std::filesystem::path(table.source_path).parent_path();
  const auto n = static_cast<std::ptrdiff_t>(table.records.size());
  std::vector<ModelInput> out(table.records.size());
  std::vector<std::exception_ptr> errors(table.records.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = process_sample(table.records[i], static_cast<size_t>(i), modality, vocab, config, base);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

Batch collate(std::span<const ModelInput> inputs, const Vocabulary& vocab) {
  if (inputs.empty()) throw Error(ErrorCode::EmptyInput, "cannot collate an empty list");
  Batch b;
  b.size = inputs.size();
  b.kind = inputs[0].encoder_kind;
  b.feature_dim = inputs[0].encoder_features.cols;
  for (const auto& in : inputs) {
    if (in.encoder_kind != b.kind) throw Error(ErrorCode::HeterogeneousBatch, "token and feature samples mixed");
    if (in.encoder_kind == EncoderKind::Features && in.encoder_features.cols != b.feature_dim) {
      throw Error(ErrorCode::HeterogeneousBatch, "feature widths " + std::to_string(b.feature_dim) + " and " +
                                                     std::to_string(in.encoder_features.cols));
    }
    b.max_prompt = std::max(b.max_prompt, in.encoder_tokens.size());
    b.max_frames = std::max(b.max_frames, in.encoder_features.rows);
    b.encoder_length = std::max(b.encoder_length, in.encoder_length());
    const size_t dec = in.decoder_prompt_tokens.size() + in.label_tokens.size() - (in.label_tokens.empty() ? 0 : 1);
    b.decoder_length = std::max(b.decoder_length, dec);
  }
  if (b.kind == EncoderKind::Tokens) b.feature_dim = 0;

  const size_t B = b.size, D = b.feature_dim;
  b.encoder_tokens.assign(B * b.max_prompt, vocab.pad_id());
  b.features.assign(B * b.max_frames * D, 0.0);
  b.encoder_mask.assign(B * b.encoder_length, 0);
  b.encoder_plan.assign(B * b.encoder_length, EncoderSlot{});
  b.decoder_input.assign(B * b.decoder_length, vocab.pad_id());
  b.labels.assign(B * b.decoder_length, kIgnoreIndex);
  b.decoder_mask.assign(B * b.decoder_length, 0);

  for (size_t i = 0; i < B; ++i) {
    const auto& in = inputs[i];
    b.prompt_lengths.push_back(in.encoder_tokens.size());
    b.feature_lengths.push_back(in.encoder_features.rows);
    b.encoder_lengths.push_back(in.encoder_length());
    b.source_indices.push_back(in.source_index);

    std::copy(in.encoder_tokens.begin(), in.encoder_tokens.end(), b.encoder_tokens.begin() + i * b.max_prompt);
    if (D > 0) {
      std::copy(in.encoder_features.data.begin(), in.encoder_features.data.end(),
                b.features.begin() + i * b.max_frames * D);
    }

    size_t pos = 0;
    for (const auto& block : in.layout) {
      for (size_t k = 0; k < block.length; ++k, ++pos) {
        EncoderSlot slot;
        if (block.source == EncoderBlock::Source::Tokens) {
          slot.source = EncoderSlot::Source::Token;
          slot.index = static_cast<uint32_t>(i * b.max_prompt + block.offset + k);
        } else {
          slot.source = EncoderSlot::Source::Feature;
          slot.index = static_cast<uint32_t>(i * b.max_frames + block.offset + k);
        }
        b.encoder_plan[i * b.encoder_length + pos] = slot;
        b.encoder_mask[i * b.encoder_length + pos] = 1;
      }
    }

    std::vector<int> full = in.decoder_prompt_tokens;
    full.insert(full.end(), in.label_tokens.begin(), in.label_tokens.end());
    const size_t dec_len = in.label_tokens.empty() ? full.size() : full.size() - 1;
    b.decoder_lengths.push_back(dec_len);
    for (size_t t = 0; t < dec_len; ++t) {
      b.decoder_input[i * b.decoder_length + t] = full[t];
      b.decoder_mask[i * b.decoder_length + t] = 1;
      if (!in.label_tokens.empty() && t + 1 >= in.decoder_prompt_tokens.size()) {
        b.labels[i * b.decoder_length + t] = full[t + 1];
      }
    }
  }
  return b;
}

}  // namespace mmh
