#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmh/autograd.hpp"
#include "mmh/processors.hpp"

namespace mmh {

enum class ExtractorType { Identity, Linear };
enum class MapperType { Linear, Mlp };

std::string_view extractor_name(ExtractorType t);
std::string_view mapper_name(MapperType t);
ExtractorType parse_extractor(std::string_view s);
MapperType parse_mapper(std::string_view s);

/// Feature extractor -> multimodal mapper -> pre-norm encoder-decoder transformer.
/// input_dim == 0 builds a tokens-only model with no extractor or mapper.
struct ModelSpec {
  ExtractorType extractor_type = ExtractorType::Identity;
  MapperType mapper_type = MapperType::Linear;
  std::string backbone_type = "tiny-transformer";
  size_t d_model = 64;
  size_t n_layers = 2;
  size_t n_heads = 4;
  size_t d_ff = 128;
  size_t input_dim = 0;
  size_t vocab_size = 0;
  double dropout = 0.1;
  size_t max_positions = 512;

  /// Throws InvalidSpec.
  void validate() const;
  std::string to_json() const;
  static ModelSpec from_json(std::string_view json);
  bool operator==(const ModelSpec&) const = default;
};

/// Named parameter tensors in creation order. A tensor is trainable when its
/// node has requires_grad set.
struct Parameters {
  ModelSpec spec;
  std::vector<std::pair<std::string, ag::Var>> tensors;

  ag::Var get(std::string_view name) const;
  std::optional<ag::Var> find(std::string_view name) const;
  bool trainable(std::string_view name) const { return get(name)->requires_grad; }
  size_t trainable_count() const;
  /// Deep copy: the result shares no storage with this object.
  Parameters clone() const;
};

Parameters init_model(const ModelSpec& spec, uint64_t seed);

enum class FreezePolicy { None, FreezeBackboneExceptEmbedding, FreezeAllExceptMapper, FreezeAll };

/// Accepts "none", "freeze_backbone_except_embedding", "freeze_all_except(mapper)"
/// (or "freeze_all_except_mapper") and "freeze_all". Throws UnknownPolicy.
FreezePolicy parse_freeze_policy(std::string_view s);
std::string_view freeze_policy_name(FreezePolicy p);
void set_freeze_policy(Parameters& params, FreezePolicy policy);

/// x: [T, input_dim] -> [T, d_f].
ag::Var extract_features(const Parameters& params, const ag::Var& x);
/// f: [T, d_f] -> [T, d_model].
ag::Var map_features(const Parameters& params, const ag::Var& f);

struct ForwardOutput {
  ag::Var logits;  // [B * decoder_length, vocab_size]
  ag::Var loss;    // 1x1, null when the batch has no labels
  size_t n_tokens = 0;
};

/// Dropout is active only in train mode; its mask is a pure function of dropout_seed.
ForwardOutput forward(const Parameters& params, const Batch& batch, bool train_mode, uint64_t dropout_seed = 0);

/// Sinusoidal position table [positions, d].
std::vector<double> sinusoidal_positions(size_t positions, size_t d);

/// Decoding starts from the input's decoder prompt; the result excludes the
/// prompt and the end-of-sequence token.
std::vector<int> generate_greedy(const Parameters& params, const ModelInput& input, size_t max_len);
/// No length normalization; ties go to the lower token id, so beam == 1 matches greedy.
std::vector<int> generate_beam(const Parameters& params, const ModelInput& input, size_t beam, size_t max_len);

}  // namespace mmh
