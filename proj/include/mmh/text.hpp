#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mmh::text {

/// Decodes UTF-8 into codepoints. Malformed bytes decode to U+FFFD, one per byte.
std::vector<char32_t> decode_utf8(std::string_view s);
std::string encode_utf8(char32_t cp);
std::string encode_utf8(const std::vector<char32_t>& cps);

bool is_space(char32_t cp);
bool is_punctuation(char32_t cp);

/// Whitespace-and-punctuation pre-tokenizer shared by the vocabulary, the
/// word-image renderer, and BLEU. Splits on Unicode whitespace; every
/// punctuation codepoint becomes its own token.
std::vector<std::string> pretokenize(std::string_view s);

/// Tokens joined by single spaces.
std::string normalize(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);

uint64_t fnv1a64(std::string_view data, uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(uint64_t v);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace mmh::text
