#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mmh/modality.hpp"

namespace mmh {

/// One row of a dataset split. Times are milliseconds; 0 means unset.
struct SampleRecord {
  std::string signal;
  int64_t signal_start = 0;
  int64_t signal_end = 0;
  std::string encoder_prompt;
  std::string decoder_prompt;
  std::string output;

  bool operator==(const SampleRecord&) const = default;
};

enum class Split { Train, Validation, Test };

std::string_view split_name(Split s);
/// Guesses the split from a file name ("train", "val"/"dev", "test"); defaults to Train.
Split infer_split(const std::filesystem::path& path);

struct SplitTable {
  Split split = Split::Train;
  std::vector<SampleRecord> records;
  std::string source_path;
};

inline constexpr std::string_view kMetadataHeader =
    "signal\tsignal_start\tsignal_end\tencoder_prompt\tdecoder_prompt\toutput";

/// Generic tab-separated reader shared by the standard and mixed-mode formats.
/// The header must name `columns` exactly and in order.
std::vector<std::vector<std::string>> read_tsv(const std::filesystem::path& path,
                                               const std::vector<std::string>& columns);

/// Returns warnings for sanitized fields. Throws MalformedRow if a field contains a tab.
std::vector<std::string> write_tsv(const std::filesystem::path& path,
                                   const std::vector<std::string>& columns,
                                   const std::vector<std::vector<std::string>>& rows);

SplitTable parse_metadata_tsv(const std::filesystem::path& path);
SplitTable parse_metadata_tsv(const std::filesystem::path& path, Split split);

/// Newlines inside fields are replaced by a single space; each replacement adds a warning.
std::vector<std::string> write_metadata_tsv(const SplitTable& table, const std::filesystem::path& path);

SplitTable concat_multitask(const std::vector<SplitTable>& tables);

struct Violation {
  size_t row = 0;
  std::string message;

  bool operator==(const Violation&) const = default;
};

/// Reports every invariant breach; never throws for bad records.
std::vector<Violation> validate_records(const SplitTable& table, Modality modality,
                                        const ExtensionRegistry& registry = ExtensionRegistry::defaults());

/// Relative signal paths resolve against the directory holding the TSV.
std::filesystem::path resolve_signal_path(const SplitTable& table, std::string_view signal);

}  // namespace mmh
