#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "mmh/model.hpp"
#include "mmh/optim.hpp"

namespace mmh {

inline constexpr char kCheckpointMagic[8] = {'M', 'M', 'H', 'C', 'K', 'P', 'T', '1'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Parameters params;
  AdamState optimizer;
  uint64_t step = 0;
  uint64_t vocab_hash = 0;
};

/// Layout (little-endian): magic, u32 version, u32 tensor count, then per
/// tensor: u32 name length, name, u8 dtype (1 = f64), u8 flags (bit 0 =
/// trainable), u32 ndim, u64 dims, payload. Trailer: u32 length + JSON with
/// spec, step and optimizer step, then u64 vocab hash and u64 step.
/// Optimizer moments are stored as tensors named "adam.m/<name>" and "adam.v/<name>".
void save_checkpoint(const std::filesystem::path& path, const Parameters& params, const AdamState& optimizer,
                     uint64_t step, uint64_t vocab_hash);

/// Throws IncompatibleSpec when an expectation does not match the file.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<ModelSpec>& expect_spec = {},
                           std::optional<uint64_t> expect_vocab_hash = {});

}  // namespace mmh
