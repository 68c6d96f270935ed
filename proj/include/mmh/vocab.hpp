#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mmh {

/// Token <-> id bijection with specials at ids 0..2 (pad, eos, unk).
///
/// Tokens that the pre-tokenizer would split apart (control tokens such as
/// `<slt>`, and the specials themselves) are matched atomically by
/// tokenize() before pre-tokenization runs on the remaining text.
class Vocabulary {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kEosId = 1;
  static constexpr int kUnkId = 2;
  static constexpr std::string_view kPad = "<pad>";
  static constexpr std::string_view kEos = "</s>";
  static constexpr std::string_view kUnk = "<unk>";

  Vocabulary();

  /// Throws EmptyCorpus when the corpus has no strings.
  static Vocabulary build(const std::vector<std::string>& corpus, size_t min_count = 1);
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Appends each comma-separated token not already present. frozen_size() is unchanged.
  Vocabulary extend(std::string_view comma_separated) const;

  size_t size() const { return id_to_token_.size(); }
  size_t frozen_size() const { return frozen_size_; }
  int pad_id() const { return kPadId; }
  int eos_id() const { return kEosId; }
  int unk_id() const { return kUnkId; }
  bool is_special(int id) const { return id >= 0 && id <= kUnkId; }

  std::optional<int> find(std::string_view token) const;
  int id(std::string_view token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  std::vector<int> tokenize(std::string_view text) const;
  /// Joins with single spaces; specials are dropped.
  std::string detokenize(std::span<const int> ids) const;

  uint64_t hash() const;

  bool operator==(const Vocabulary& o) const { return id_to_token_ == o.id_to_token_; }

 private:
  void append(std::string token);
  void rebuild_atomic();

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> atomic_;  // longest first
  size_t frozen_size_ = 0;
};

}  // namespace mmh
