#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mmh/error.hpp"

namespace mmh {

/// Keypoints per frame, laid out [T, K, C] frame-major.
struct PoseSequence {
  uint32_t frames = 0;
  uint32_t keypoints = 0;
  uint32_t channels = 0;
  double fps = 25.0;
  std::vector<float> data;

  size_t frame_size() const { return size_t{keypoints} * channels; }
  bool operator==(const PoseSequence&) const = default;
};

/// Precomputed per-frame feature vectors, [T, D].
struct FeatureSequence {
  uint32_t frames = 0;
  uint32_t dim = 0;
  double fps = 25.0;
  std::vector<float> data;

  size_t frame_size() const { return dim; }
  bool operator==(const FeatureSequence&) const = default;
};

/// Raw video frames, [T, H, W, C] with C in {1, 3}.
struct FrameSequence {
  uint32_t frames = 0;
  uint32_t height = 0;
  uint32_t width = 0;
  uint32_t channels = 0;
  double fps = 25.0;
  std::vector<uint8_t> data;

  size_t frame_size() const { return size_t{height} * width * channels; }
  bool operator==(const FrameSequence&) const = default;
};

/// Grayscale word images, [N, H, W], one per source token.
struct ImageSequence {
  uint32_t count = 0;
  uint32_t height = 0;
  uint32_t width = 0;
  std::vector<uint8_t> data;
  std::vector<std::string> source_tokens;
  size_t missing_glyphs = 0;
};

inline constexpr char kPoseMagic[8] = {'M', 'M', 'H', 'P', 'O', 'S', 'E', '1'};
inline constexpr char kFeatureMagic[8] = {'M', 'M', 'H', 'F', 'E', 'A', 'T', '1'};
inline constexpr char kVideoMagic[8] = {'M', 'M', 'H', 'V', 'I', 'D', '1', '\0'};

/// Binary container or the JSON fallback `{"fps": 25, "frames": [[[x, y, c], ...], ...]}`.
/// `default_fps` applies only to JSON files without an "fps" key.
PoseSequence load_pose(const std::filesystem::path& path, double default_fps = 25.0);
FeatureSequence load_features(const std::filesystem::path& path);
FrameSequence load_frames(const std::filesystem::path& path);

void save_pose(const PoseSequence& seq, const std::filesystem::path& path);
void save_features(const FeatureSequence& seq, const std::filesystem::path& path);
void save_frames(const FrameSequence& seq, const std::filesystem::path& path);

template <class S>
concept TemporalSequence = requires(S s) {
  { s.frames } -> std::convertible_to<uint32_t>;
  { s.fps } -> std::convertible_to<double>;
  { s.frame_size() } -> std::convertible_to<size_t>;
  s.data;
};

struct FrameRange {
  size_t begin = 0;
  size_t end = 0;
};

/// Frame window covering [start_ms, end_ms): floor on the start, ceil on the end,
/// clamped to [0, frames]. end_ms == 0 means "until the last frame".
inline FrameRange clip_frame_range(size_t frames, double fps, int64_t start_ms, int64_t end_ms) {
  if (start_ms < 0 || end_ms < 0 || (end_ms != 0 && end_ms <= start_ms)) {
    throw Error(ErrorCode::EmptyClip, "invalid bounds " + std::to_string(start_ms) + "-" + std::to_string(end_ms));
  }
  const double t = static_cast<double>(frames);
  double b = std::floor(static_cast<double>(start_ms) * fps / 1000.0);
  double e = end_ms == 0 ? t : std::ceil(static_cast<double>(end_ms) * fps / 1000.0);
  b = std::clamp(b, 0.0, t);
  e = std::clamp(e, 0.0, t);
  if (e <= b) {
    throw Error(ErrorCode::EmptyClip, "bounds " + std::to_string(start_ms) + "-" + std::to_string(end_ms) +
                                          " ms select no frames of a " + std::to_string(frames) + "-frame signal");
  }
  return {static_cast<size_t>(b), static_cast<size_t>(e)};
}

template <TemporalSequence S>
S clip_temporal(const S& seq, int64_t start_ms, int64_t end_ms) {
  if (start_ms == 0 && end_ms == 0) return seq;
  const FrameRange r = clip_frame_range(seq.frames, seq.fps, start_ms, end_ms);
  S out = seq;
  const size_t fs = seq.frame_size();
  out.frames = static_cast<uint32_t>(r.end - r.begin);
  out.data.assign(seq.data.begin() + static_cast<std::ptrdiff_t>(r.begin * fs),
                  seq.data.begin() + static_cast<std::ptrdiff_t>(r.end * fs));
  return out;
}

/// Keeps frames 0, stride, 2*stride, ...; fps is divided by the stride.
template <TemporalSequence S>
S skip_frames(const S& seq, uint32_t stride) {
  if (stride == 0) throw Error(ErrorCode::InvalidSpec, "skip_frames stride must be >= 1");
  if (stride == 1) return seq;
  S out = seq;
  const size_t fs = seq.frame_size();
  const size_t kept = (size_t{seq.frames} + stride - 1) / stride;
  out.frames = static_cast<uint32_t>(kept);
  out.fps = seq.fps / stride;
  out.data.clear();
  out.data.reserve(kept * fs);
  for (size_t i = 0; i < seq.frames; i += stride) {
    auto first = seq.data.begin() + static_cast<std::ptrdiff_t>(i * fs);
    out.data.insert(out.data.end(), first, first + static_cast<std::ptrdiff_t>(fs));
  }
  return out;
}

}  // namespace mmh
