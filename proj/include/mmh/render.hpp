#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string_view>

#include "mmh/signal_io.hpp"

namespace mmh {

using GlyphRows = std::array<uint8_t, 8>;

/// 8x8 monochrome glyphs. Bit 0 of each row byte is the leftmost pixel.
class GlyphTable {
 public:
  /// Printable ASCII (U+0020..U+007E).
  static GlyphTable builtin();
  /// JSON object mapping a codepoint ("65", "0x41" or "U+0041") to 8 row bytes.
  /// Entries override or extend the built-in table.
  static GlyphTable load_json(const std::filesystem::path& path);

  const GlyphRows* find(char32_t cp) const;
  const GlyphRows& fallback() const { return fallback_; }
  void set(char32_t cp, const GlyphRows& rows) { glyphs_[cp] = rows; }
  size_t size() const { return glyphs_.size(); }

 private:
  std::map<char32_t, GlyphRows> glyphs_;
  GlyphRows fallback_ = {0x7F, 0x41, 0x41, 0x41, 0x41, 0x41, 0x7F, 0x00};
};

struct RenderOptions {
  uint32_t height = 24;
  uint32_t width = 96;
  uint32_t scale = 2;
};

/// One left-aligned grayscale bitmap per pre-tokenized word. Ink is 255,
/// background 0; glyphs past the right edge are cut off.
ImageSequence render_word_images(std::string_view text, const GlyphTable& font, const RenderOptions& opts = {});

}  // namespace mmh
