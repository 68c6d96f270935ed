#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "doctest.h"
#include "mmh/error.hpp"
#include "mmh/signal_io.hpp"
#include "mmh/text.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mmh;
using namespace mmh::testing;

namespace {

std::string u32(uint32_t v) { return std::string(reinterpret_cast<const char*>(&v), 4); }
std::string f32(float v) { return std::string(reinterpret_cast<const char*>(&v), 4); }

FeatureSequence indexed(uint32_t frames, double fps) {
  FeatureSequence s{frames, 1, fps, {}};
  for (uint32_t i = 0; i < frames; ++i) s.data.push_back(static_cast<float>(i));
  return s;
}

}  // namespace

TEST_SUITE("signal_io") {
  TEST_CASE("pose container header is echoed") {
    TempDir d;
    std::string bytes(kPoseMagic, 8);
    bytes += u32(100) + u32(33) + u32(3) + f32(25.0f);
    for (int i = 0; i < 100 * 33 * 3; ++i) bytes += f32(static_cast<float>(i % 7));
    text::write_file(d / "a.mmhpose", bytes);
    const auto p = load_pose(d / "a.mmhpose");
    CHECK(p.frames == 100);
    CHECK(p.keypoints == 33);
    CHECK(p.channels == 3);
    CHECK(p.fps == 25.0);
    CHECK(p.data.size() == 9900);
  }

  TEST_CASE("JSON pose fallback") {
    TempDir d;
    text::write_file(d / "a.json", R"({"fps":25,"frames":[[[0.1,0.2,0.9]]]})");
    const auto p = load_pose(d / "a.json");
    CHECK(p.frames == 1);
    CHECK(p.keypoints == 1);
    CHECK(p.channels == 3);
    CHECK(p.data[2] == doctest::Approx(0.9f));
    text::write_file(d / "b.json", R"({"frames":[[[1,2]],[[3,4]]]})");
    CHECK(load_pose(d / "b.json", 30.0).fps == 30.0);
  }

  TEST_CASE("wrong magic is BadMagic") {
    TempDir d;
    save_features(FeatureSequence{1, 2, 25.0, {1.0f, 2.0f}}, d / "a.mmhpose");
    CHECK(code_of([&] { load_pose(d / "a.mmhpose"); }) == ErrorCode::BadMagic);
  }

  TEST_CASE("feature and video containers") {
    TempDir d;
    FeatureSequence f{10, 1024, 25.0, std::vector<float>(10 * 1024, 0.5f)};
    save_features(f, d / "f.mmhfeat");
    const auto g = load_features(d / "f.mmhfeat");
    CHECK(g.frames == 10);
    CHECK(g.dim == 1024);
    CHECK(g == f);
    FrameSequence v{4, 8, 8, 3, 25.0, std::vector<uint8_t>(4 * 8 * 8 * 3, 9)};
    save_frames(v, d / "v.mmhvid");
    const auto w = load_frames(d / "v.mmhvid");
    CHECK(w.frames == 4);
    CHECK(w.height == 8);
    CHECK(w == v);
  }

  TEST_CASE("non-finite values and truncation are rejected") {
    TempDir d;
    save_features(FeatureSequence{2, 1, 25.0, {1.0f, std::numeric_limits<float>::quiet_NaN()}}, d / "n.mmhfeat");
    CHECK(code_of([&] { load_features(d / "n.mmhfeat"); }) == ErrorCode::NonFiniteValue);
    save_pose(random_pose(3, 2, 3, 25.0, 1), d / "t.mmhpose");
    auto bytes = text::read_file(d / "t.mmhpose");
    text::write_file(d / "t.mmhpose", bytes.substr(0, bytes.size() - 5));
    CHECK(code_of([&] { load_pose(d / "t.mmhpose"); }) == ErrorCode::TruncatedFile);
    CHECK(code_of([&] { load_pose(d / "absent.mmhpose"); }) == ErrorCode::IoFailure);
  }

  TEST_CASE("clip of 404-514 ms at 25 fps keeps frames 10..12") {
    const auto s = indexed(50, 25.0);
    const auto c = clip_temporal(s, 404, 514);
    CHECK(c.frames == 3);
    CHECK(c.data == std::vector<float>{10, 11, 12});
    const auto oracle = oracle_clip_frames(50, 50, 404, 514);
    CHECK(oracle == std::vector<size_t>{10, 11, 12});
  }

  TEST_CASE("zero bounds are the identity and out-of-range clips are empty") {
    const auto s = indexed(50, 25.0);
    CHECK(clip_temporal(s, 0, 0) == s);
    CHECK(code_of([&] { clip_temporal(s, 5000, 0); }) == ErrorCode::EmptyClip);
    CHECK(code_of([&] { clip_temporal(s, 5000, 6000); }) == ErrorCode::EmptyClip);
    CHECK(clip_temporal(s, 1000, 0).frames == 25);
  }

  TEST_CASE("skip_frames keeps every stride-th frame") {
    const auto ten = skip_frames(indexed(10, 25.0), 2);
    CHECK(ten.frames == 5);
    CHECK(ten.fps == 12.5);
    CHECK(ten.data == std::vector<float>{0, 2, 4, 6, 8});
    CHECK(skip_frames(indexed(5, 25.0), 2).data == std::vector<float>{0, 2, 4});
    CHECK(skip_frames(indexed(7, 25.0), 1) == indexed(7, 25.0));
    CHECK(code_of([&] { skip_frames(indexed(7, 25.0), 0); }) == ErrorCode::InvalidSpec);
  }

  TEST_CASE("nested subsampling equals the product stride") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
      const auto s = indexed(1 + static_cast<uint32_t>(rng() % 100), 30.0);
      const uint32_t a = 1 + static_cast<uint32_t>(rng() % 4), b = 1 + static_cast<uint32_t>(rng() % 4);
      const auto nested = skip_frames(skip_frames(s, a), b);
      const auto direct = skip_frames(s, a * b);
      CHECK(nested.data == direct.data);
      CHECK(nested.fps == doctest::Approx(direct.fps));
    }
  }

  TEST_CASE("clip and subsample agree with the frame enumeration oracle") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 300; ++trial) {
      const uint32_t frames = 1 + static_cast<uint32_t>(rng() % 120);
      const uint32_t fps2 = 20 + static_cast<uint32_t>(rng() % 101);
      const int64_t start = static_cast<int64_t>(rng() % 6000);
      const int64_t end = rng() % 4 == 0 ? 0 : start + 1 + static_cast<int64_t>(rng() % 6000);
      const uint32_t stride = 1 + static_cast<uint32_t>(rng() % 3);
      const auto oracle = oracle_clip_frames(frames, fps2, start, end);
      const auto s = indexed(frames, fps2 / 2.0);
      if (oracle.empty()) {
        CHECK(code_of([&] { clip_temporal(s, start, end); }) == ErrorCode::EmptyClip);
        continue;
      }
      const auto out = skip_frames(clip_temporal(s, start, end), stride);
      REQUIRE(out.frames == (oracle.size() + stride - 1) / stride);
      for (size_t k = 0; k < out.frames; ++k) CHECK(out.data[k] == static_cast<float>(oracle[k * stride]));
    }
  }

  TEST_CASE("clips work on every container kind") {
    auto p = random_pose(50, 2, 3, 25.0, 4);
    CHECK(clip_temporal(p, 404, 514).data.size() == 3 * 6);
    FrameSequence v{50, 2, 2, 1, 25.0, std::vector<uint8_t>(200, 1)};
    CHECK(clip_temporal(v, 404, 514).frames == 3);
  }
}
