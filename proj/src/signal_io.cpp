#include "mmh/signal_io.hpp"

#include <bit>
#include <cstring>
#include "json.hpp"

#include "mmh/text.hpp"

namespace mmh {

namespace {

class Reader {
 public:
  Reader(const std::string& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t{static_cast<unsigned char>(bytes_[pos_ + i])} << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  void skip(size_t n) {
    need(n);
    pos_ += n;
  }

  const char* take(size_t n) {
    need(n);
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  void need(size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorCode::TruncatedFile, what_ + ": expected " + std::to_string(n) + " more bytes at offset " +
                                                std::to_string(pos_));
    }
  }

  const std::string& bytes_;
  std::string what_;
  size_t pos_ = 0;
};

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<uint32_t>(v)); }

void check_magic(const std::string& bytes, const char (&magic)[8], const std::filesystem::path& path) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), magic, 8) != 0) {
    std::string seen = bytes.substr(0, std::min<size_t>(8, bytes.size()));
    for (auto& c : seen) {
      if (c == '\0') c = '0';
    }
    throw Error(ErrorCode::BadMagic, path.string() + " starts with '" + seen + "'");
  }
}

void check_fps(double fps, const std::filesystem::path& path) {
  if (!std::isfinite(fps) || fps <= 0) {
    throw Error(ErrorCode::NonFiniteValue, path.string() + ": fps must be positive and finite");
  }
}

std::vector<float> read_floats(Reader& r, size_t n, const std::filesystem::path& path) {
  const char* p = r.take(n * 4);
  std::vector<float> out(n);
  for (size_t i = 0; i < n; ++i) {
    uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= uint32_t{static_cast<unsigned char>(p[4 * i + b])} << (8 * b);
    out[i] = std::bit_cast<float>(v);
    if (!std::isfinite(out[i])) {
      throw Error(ErrorCode::NonFiniteValue, path.string() + ": value " + std::to_string(i) + " is not finite");
    }
  }
  return out;
}

PoseSequence load_pose_json(const std::string& bytes, const std::filesystem::path& path, double default_fps) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadMagic, path.string() + ": not a pose container or valid JSON (" + e.what() + ")");
  }
  PoseSequence seq;
  seq.fps = j.contains("fps") ? j.at("fps").get<double>() : default_fps;
  check_fps(seq.fps, path);
  const auto& frames = j.at("frames");
  if (!frames.is_array() || frames.empty() || !frames[0].is_array() || frames[0].empty() ||
      !frames[0][0].is_array()) {
    throw Error(ErrorCode::ShapeMismatch, path.string() + ": 'frames' must be a non-empty [T][K][C] array");
  }
  seq.frames = static_cast<uint32_t>(frames.size());
  seq.keypoints = static_cast<uint32_t>(frames[0].size());
  seq.channels = static_cast<uint32_t>(frames[0][0].size());
  if (seq.channels < 2) throw Error(ErrorCode::ShapeMismatch, path.string() + ": need at least 2 channels");
  seq.data.reserve(size_t{seq.frames} * seq.frame_size());
  for (const auto& frame : frames) {
    if (frame.size() != seq.keypoints) throw Error(ErrorCode::ShapeMismatch, path.string() + ": ragged keypoints");
    for (const auto& kp : frame) {
      if (kp.size() != seq.channels) throw Error(ErrorCode::ShapeMismatch, path.string() + ": ragged channels");
      for (const auto& v : kp) {
        if (!v.is_number()) throw Error(ErrorCode::NonFiniteValue, path.string() + ": non-numeric value");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw Error(ErrorCode::NonFiniteValue, path.string() + ": non-finite value");
        seq.data.push_back(static_cast<float>(d));
      }
    }
  }
  return seq;
}

}  // namespace

PoseSequence load_pose(const std::filesystem::path& path, double default_fps) {
  const std::string bytes = text::read_file(path);
  const auto first = bytes.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && bytes[first] == '{') return load_pose_json(bytes, path, default_fps);

  check_magic(bytes, kPoseMagic, path);
  Reader r(bytes, path.string());
  r.skip(8);
  PoseSequence seq;
  seq.frames = r.u32();
  seq.keypoints = r.u32();
  seq.channels = r.u32();
  seq.fps = r.f32();
  if (seq.frames < 1 || seq.keypoints < 1 || seq.channels < 2) {
    throw Error(ErrorCode::ShapeMismatch, path.string() + ": invalid pose header dimensions");
  }
  check_fps(seq.fps, path);
  seq.data = read_floats(r, size_t{seq.frames} * seq.frame_size(), path);
  return seq;
}

FeatureSequence load_features(const std::filesystem::path& path) {
  const std::string bytes = text::read_file(path);
  check_magic(bytes, kFeatureMagic, path);
  Reader r(bytes, path.string());
  r.skip(8);
  FeatureSequence seq;
  seq.frames = r.u32();
  seq.dim = r.u32();
  seq.fps = r.f32();
  if (seq.frames < 1 || seq.dim < 1) {
    throw Error(ErrorCode::ShapeMismatch, path.string() + ": invalid feature header dimensions");
  }
  check_fps(seq.fps, path);
  seq.data = read_floats(r, size_t{seq.frames} * seq.dim, path);
  return seq;
}

FrameSequence load_frames(const std::filesystem::path& path) {
  const std::string bytes = text::read_file(path);
  check_magic(bytes, kVideoMagic, path);
  Reader r(bytes, path.string());
  r.skip(8);
  FrameSequence seq;
  seq.frames = r.u32();
  seq.height = r.u32();
  seq.width = r.u32();
  seq.channels = r.u32();
  seq.fps = r.f32();
  if (seq.frames < 1 || seq.height < 1 || seq.width < 1 || (seq.channels != 1 && seq.channels != 3)) {
    throw Error(ErrorCode::ShapeMismatch, path.string() + ": invalid video header dimensions");
  }
  check_fps(seq.fps, path);
  const size_t n = size_t{seq.frames} * seq.frame_size();
  const char* p = r.take(n);
  seq.data.assign(reinterpret_cast<const uint8_t*>(p), reinterpret_cast<const uint8_t*>(p) + n);
  return seq;
}

void save_pose(const PoseSequence& seq, const std::filesystem::path& path) {
  std::string out(kPoseMagic, 8);
  put_u32(out, seq.frames);
  put_u32(out, seq.keypoints);
  put_u32(out, seq.channels);
  put_f32(out, static_cast<float>(seq.fps));
  for (float v : seq.data) put_f32(out, v);
  text::write_file(path, out);
}

void save_features(const FeatureSequence& seq, const std::filesystem::path& path) {
  std::string out(kFeatureMagic, 8);
  put_u32(out, seq.frames);
  put_u32(out, seq.dim);
  put_f32(out, static_cast<float>(seq.fps));
  for (float v : seq.data) put_f32(out, v);
  text::write_file(path, out);
}

void save_frames(const FrameSequence& seq, const std::filesystem::path& path) {
  std::string out(kVideoMagic, 8);
  put_u32(out, seq.frames);
  put_u32(out, seq.height);
  put_u32(out, seq.width);
  put_u32(out, seq.channels);
  put_f32(out, static_cast<float>(seq.fps));
  out.append(reinterpret_cast<const char*>(seq.data.data()), seq.data.size());
  text::write_file(path, out);
}

}  // namespace mmh
