#include "mmh/vocab.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "mmh/error.hpp"
#include "mmh/text.hpp"

namespace mmh {

Vocabulary::Vocabulary() {
  append(std::string(kPad));
  append(std::string(kEos));
  append(std::string(kUnk));
  frozen_size_ = size();
  rebuild_atomic();
}

void Vocabulary::append(std::string token) {
  token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
  id_to_token_.push_back(std::move(token));
}

void Vocabulary::rebuild_atomic() {
  atomic_.clear();
  for (const auto& tok : id_to_token_) {
    auto pieces = text::pretokenize(tok);
    if (pieces.size() != 1 || pieces[0] != tok) atomic_.push_back(tok);
  }
  std::stable_sort(atomic_.begin(), atomic_.end(),
                   [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus, size_t min_count) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "no strings to build a vocabulary from");
  std::map<std::string, size_t> counts;
  for (const auto& line : corpus) {
    for (auto& tok : text::pretokenize(line)) ++counts[tok];
  }
  std::vector<std::pair<std::string, size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (auto& [tok, count] : ranked) {
    if (count >= min_count && !v.token_to_id_.contains(tok)) v.append(tok);
  }
  v.frozen_size_ = v.size();
  v.rebuild_atomic();
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  const std::string content = text::read_file(path);
  auto lines = text::split(content, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.size() < 3 || lines[0] != kPad || lines[1] != kEos || lines[2] != kUnk) {
    throw Error(ErrorCode::IoFailure, path.string() + ": vocabulary must start with <pad>, </s>, <unk>");
  }
  Vocabulary v;
  for (size_t i = 3; i < lines.size(); ++i) {
    if (v.token_to_id_.contains(lines[i])) {
      throw Error(ErrorCode::IoFailure, path.string() + ": duplicate token on line " + std::to_string(i));
    }
    v.append(lines[i]);
  }
  v.frozen_size_ = v.size();
  v.rebuild_atomic();
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& tok : id_to_token_) {
    out += tok;
    out += '\n';
  }
  text::write_file(path, out);
}

Vocabulary Vocabulary::extend(std::string_view comma_separated) const {
  Vocabulary v = *this;
  for (const auto& piece : text::split(comma_separated, ',')) {
    std::string tok = text::trim(piece);
    if (tok.empty() || v.token_to_id_.contains(tok)) continue;
    if (tok.find_first_of("\n\t") != std::string::npos) {
      throw Error(ErrorCode::InvalidSpec, "vocabulary token contains a tab or newline");
    }
    v.append(std::move(tok));
  }
  v.rebuild_atomic();
  return v;
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnkId); }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<size_t>(id) >= id_to_token_.size()) return id_to_token_[kUnkId];
  return id_to_token_[static_cast<size_t>(id)];
}

std::vector<int> Vocabulary::tokenize(std::string_view input) const {
  std::vector<int> ids;
  auto emit_plain = [&](std::string_view chunk) {
    for (const auto& tok : text::pretokenize(chunk)) ids.push_back(id(tok));
  };
  size_t plain_start = 0;
  size_t i = 0;
  while (i < input.size()) {
    const std::string* hit = nullptr;
    for (const auto& a : atomic_) {
      if (input.substr(i).starts_with(a)) {
        hit = &a;
        break;
      }
    }
    if (!hit) {
      ++i;
      continue;
    }
    emit_plain(input.substr(plain_start, i - plain_start));
    ids.push_back(token_to_id_.at(*hit));
    i += hit->size();
    plain_start = i;
  }
  emit_plain(input.substr(plain_start));
  return ids;
}

std::string Vocabulary::detokenize(std::span<const int> ids) const {
  std::vector<std::string> parts;
  for (int id : ids) {
    if (is_special(id)) continue;
    parts.push_back(token(id));
  }
  return text::join(parts, " ");
}

uint64_t Vocabulary::hash() const {
  uint64_t h = text::fnv1a64("");
  for (const auto& tok : id_to_token_) {
    h = text::fnv1a64(tok, h);
    h = text::fnv1a64("\n", h);
  }
  return h;
}

}  // namespace mmh
