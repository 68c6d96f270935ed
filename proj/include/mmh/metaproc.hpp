#pragma once

// Mixed-modality inputs: free text with inline signal references
//
//   <signal:PATH>              whole signal
//   <signal:PATH#START-END>    clip in milliseconds (END == 0 or END > START)
//
// `\<` is a literal '<' and `\\` a literal backslash; any other backslash is
// kept as is. A '<' not followed by "signal:" is ordinary text.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mmh/modality.hpp"
#include "mmh/processors.hpp"

namespace mmh {

struct TextSegment {
  std::string content;
  bool operator==(const TextSegment&) const = default;
};

struct SignalSegment {
  std::string path;
  int64_t start_ms = 0;
  int64_t end_ms = 0;
  std::optional<SignalKind> kind;  // empty when the extension is not registered

  bool operator==(const SignalSegment&) const = default;
};

using Segment = std::variant<TextSegment, SignalSegment>;

/// Throws MalformedReference with the byte offset of the offending reference.
std::vector<Segment> detect_signals(std::string_view text,
                                    const ExtensionRegistry& registry = ExtensionRegistry::defaults());

/// Canonical text form; detect_signals(serialize_segments(s)) == s.
std::string serialize_segments(const std::vector<Segment>& segments);

struct MixedRecord {
  std::string encoder_input;
  std::string decoder_input;
  std::string label;

  bool operator==(const MixedRecord&) const = default;
};

struct MixedTable {
  std::vector<MixedRecord> records;
  std::string source_path;
};

inline constexpr std::string_view kMixedHeader = "encoder_input\tdecoder_input\tlabel";

MixedTable parse_mixed_tsv(const std::filesystem::path& path);
void write_mixed_tsv(const MixedTable& table, const std::filesystem::path& path);

struct TokenBlock {
  std::vector<int> ids;
  bool operator==(const TokenBlock&) const = default;
};

struct FeatureBlock {
  Matrix features;
  bool operator==(const FeatureBlock&) const = default;
};

using StreamBlock = std::variant<TokenBlock, FeatureBlock>;

struct AlignedStreams {
  std::vector<StreamBlock> blocks;
  size_t total_length = 0;
};

struct MixedSample {
  AlignedStreams streams;
  std::vector<int> decoder_prompt_tokens;
  std::vector<int> label_tokens;
};

/// Text becomes token blocks, signals feature blocks, in source order. Errors
/// from loading a signal carry the segment index.
MixedSample process_mixed(const MixedRecord& record, const Vocabulary& vocab, const ProcessorConfig& config,
                          const std::filesystem::path& base_dir = {});

struct Placement {
  enum class Source { Token, Feature };
  Source source = Source::Token;
  size_t block = 0;
  size_t offset = 0;

  bool operator==(const Placement&) const = default;
};

/// One entry per encoder position, 0-based and contiguous.
std::vector<Placement> assemble_encoder_embedding_plan(const AlignedStreams& streams);

/// Flattens the streams into a ModelInput whose layout keeps the block order.
ModelInput to_model_input(const MixedSample& sample, size_t source_index);

std::vector<ModelInput> process_mixed_table(const MixedTable& table, const Vocabulary& vocab,
                                            const ProcessorConfig& config);

}  // namespace mmh
