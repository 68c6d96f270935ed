#include <random>

#include "doctest.h"
#include "mmh/error.hpp"
#include "mmh/processors.hpp"
#include "mmh/render.hpp"
#include "mmh/text.hpp"
#include "mmh/vocab.hpp"
#include "support.hpp"

using namespace mmh;
using namespace mmh::testing;

namespace {

ModelInput features_input(size_t frames, size_t dim, int label) {
  ModelInput in;
  in.encoder_kind = EncoderKind::Features;
  in.encoder_features = Matrix(frames, dim, 1.0);
  in.layout = {{EncoderBlock::Source::Features, 0, frames}};
  in.decoder_prompt_tokens = {Vocabulary::kPadId};
  in.label_tokens = {label, Vocabulary::kEosId};
  return in;
}

}  // namespace

TEST_SUITE("processors") {
  TEST_CASE("vocabulary from a small corpus") {
    const auto v = Vocabulary::build({"a b", "a"});
    CHECK(v.size() == 5);
    CHECK(v.token(0) == "<pad>");
    CHECK(v.token(1) == "</s>");
    CHECK(v.token(2) == "<unk>");
    CHECK(v.find("a").has_value());
    CHECK(v.find("b").has_value());
    const auto v2 = Vocabulary::build({"a b", "a"}, 2);
    CHECK(v2.size() == 4);
    CHECK(v2.tokenize("b") == std::vector<int>{v2.unk_id()});
    CHECK_THROWS_AS(Vocabulary::build({}), Error);
  }

  TEST_CASE("extension with control tokens") {
    std::vector<std::string> corpus;
    for (int i = 0; i < 97; ++i) corpus.push_back("w" + std::to_string(i));
    const auto v = Vocabulary::build(corpus);
    REQUIRE(v.size() == 100);
    const auto e = v.extend("<slt>,<agn>,<mt>,<aug>");
    CHECK(e.size() == 104);
    CHECK(e.frozen_size() == v.frozen_size());
    CHECK(e.extend("<slt>").size() == 104);
    CHECK(e.extend("<slt>,<agn>,<mt>,<aug>") == e);
    CHECK(e.tokenize("<slt> w3") == std::vector<int>{e.id("<slt>"), e.id("w3")});
  }

  TEST_CASE("ids stay dense after any sequence of extensions") {
    std::mt19937_64 rng(8);
    auto v = Vocabulary::build({"x y z"});
    for (int i = 0; i < 20; ++i) {
      v = v.extend("<t" + std::to_string(rng() % 10) + ">,w" + std::to_string(rng() % 10));
      for (size_t id = 0; id < v.size(); ++id) CHECK(v.id(v.token(static_cast<int>(id))) == static_cast<int>(id));
    }
  }

  TEST_CASE("tokenize and detokenize") {
    const auto v = Vocabulary::build({"a b", "hello , world !"});
    CHECK(v.tokenize("a b") == std::vector<int>{v.id("a"), v.id("b")});
    CHECK(v.tokenize("zzz") == std::vector<int>{v.unk_id()});
    CHECK(v.detokenize(v.tokenize("hello,   world!")) == text::normalize("hello, world!"));
  }

  TEST_CASE("vocabulary file round trip and hash") {
    TempDir d;
    const auto v = Vocabulary::build({"über straße", "a"}).extend("<mt>");
    v.save(d / "vocab.txt");
    const auto w = Vocabulary::load(d / "vocab.txt");
    CHECK(w == v);
    CHECK(w.hash() == v.hash());
    CHECK(v.extend("<x>").hash() != v.hash());
  }

  TEST_CASE("word images follow the pre-tokenizer") {
    const auto font = GlyphTable::builtin();
    const auto imgs = render_word_images("Hi there", font);
    CHECK(imgs.count == 2);
    CHECK(imgs.source_tokens == std::vector<std::string>{"Hi", "there"});
    CHECK(imgs.height == 24);
    CHECK(imgs.width == 96);
    CHECK(render_word_images("", font).count == 0);
    CHECK(render_word_images("a.", font).source_tokens == text::pretokenize("a."));
    std::mt19937_64 rng(5);
    const std::vector<std::string> pieces = {"a", " ", "\xd7\xa9", "\xd7\x9c", "!", ",", "\xe2\x80\x99", "Z",
                                             "\t", "\xc3\xa9", "7"};
    for (int i = 0; i < 200; ++i) {
      std::string s;
      for (size_t k = rng() % 12; k > 0; --k) s += pieces[rng() % pieces.size()];
      CHECK(render_word_images(s, font).count == text::pretokenize(s).size());
    }
  }

  TEST_CASE("uncovered codepoints use the fallback glyph") {
    const auto imgs = render_word_images("\xd7\xa9", GlyphTable::builtin());
    CHECK(imgs.count == 1);
    CHECK(imgs.missing_glyphs == 1);
    size_t ink = 0;
    for (auto px : imgs.data) ink += px == 255;
    CHECK(ink > 0);
  }

  TEST_CASE("pose row becomes prompt tokens plus clipped features") {
    TempDir d;
    save_pose(random_pose(60, 33, 3, 25.0, 1), d / "pose2.mmhpose");
    const auto v = Vocabulary::build({"asl en", "moving the stick"}).extend("<slt>");
    SampleRecord r{"pose2.mmhpose", 404, 514, "<slt> asl en", "", "moving the stick"};
    const auto in = process_sample(r, 0, Modality::Pose2Text, v, ProcessorConfig{}, d.path());
    CHECK(in.encoder_kind == EncoderKind::Features);
    CHECK(in.encoder_tokens == v.tokenize("<slt> asl en"));
    CHECK(in.encoder_features.rows == 3);
    CHECK(in.encoder_features.cols == 99);
    CHECK(in.label_tokens.back() == v.eos_id());
    CHECK(in.decoder_prompt_tokens == std::vector<int>{v.pad_id()});
    CHECK(in.layout == std::vector<EncoderBlock>{{EncoderBlock::Source::Tokens, 0, 3},
                                                 {EncoderBlock::Source::Features, 0, 3}});
    CHECK(process_sample(r, 0, Modality::Pose2Text, v, ProcessorConfig{}, d.path()) == in);
  }

  TEST_CASE("text row has no features") {
    const auto v = Vocabulary::build({"es en el gato", "the cat"}).extend("<mt>");
    SampleRecord r{"", 0, 0, "<mt> es en el gato", "", "the cat"};
    const auto in = process_sample(r, 0, Modality::Text2Text, v, ProcessorConfig{});
    CHECK(in.encoder_kind == EncoderKind::Tokens);
    CHECK(in.encoder_features.rows == 0);
    CHECK(in.encoder_tokens.size() == 5);
  }

  TEST_CASE("loader errors carry the row index") {
    const auto v = Vocabulary::build({"x"});
    SampleRecord r{"nope.mmhpose", 0, 0, "x", "", "x"};
    SplitTable t{Split::Train, {r, r}, "/nonexistent/train.tsv"};
    CHECK_THROWS_WITH_AS(process_table(t, Modality::Pose2Text, v, ProcessorConfig{}), doctest::Contains("row 0"),
                         Error);
  }

  TEST_CASE("features and video flatten per frame") {
    TempDir d;
    save_features(FeatureSequence{4, 6, 25.0, std::vector<float>(24, 2.0f)}, d / "f.mmhfeat");
    const auto f = signal_features(d / "f.mmhfeat", SignalKind::Features, 0, 0, ProcessorConfig{});
    CHECK(f.rows == 4);
    CHECK(f.cols == 6);
    save_frames(FrameSequence{2, 2, 2, 3, 25.0, std::vector<uint8_t>(24, 255)}, d / "v.mmhvid");
    const auto v = signal_features(d / "v.mmhvid", SignalKind::Video, 0, 0, ProcessorConfig{});
    CHECK(v.cols == 12);
    CHECK(v.at(1, 11) == 1.0);
  }

  TEST_CASE("collate pads and masks") {
    const Vocabulary v;
    std::vector<ModelInput> in = {features_input(3, 4, 5), features_input(5, 4, 6)};
    const auto b = collate(in, v);
    CHECK(b.size == 2);
    CHECK(b.max_frames == 5);
    CHECK(b.features.size() == 2 * 5 * 4);
    size_t row0 = 0, row1 = 0;
    for (size_t j = 0; j < b.encoder_length; ++j) {
      row0 += b.encoder_mask[j];
      row1 += b.encoder_mask[b.encoder_length + j];
    }
    CHECK(row0 == 3);
    CHECK(row1 == 5);
    const auto single = collate(std::vector<ModelInput>{features_input(3, 4, 5)}, v);
    for (auto m : single.encoder_mask) CHECK(m == 1);
    ModelInput tokens;
    tokens.encoder_tokens = {4};
    tokens.layout = {{EncoderBlock::Source::Tokens, 0, 1}};
    tokens.decoder_prompt_tokens = {0};
    tokens.label_tokens = {4, 1};
    CHECK_THROWS_AS(collate(std::vector<ModelInput>{features_input(3, 4, 5), tokens}, v), Error);
    CHECK_THROWS_AS(collate(std::vector<ModelInput>{features_input(3, 4, 5), features_input(3, 5, 5)}, v), Error);
  }

  TEST_CASE("labels that predict the prompt are ignored") {
    ModelInput in = features_input(2, 3, 7);
    in.decoder_prompt_tokens = {0, 9};
    const auto b = collate(std::vector<ModelInput>{in}, Vocabulary());
    REQUIRE(b.decoder_length == 3);
    CHECK(b.decoder_input == std::vector<int>{0, 9, 7});
    CHECK(b.labels == std::vector<int>{kIgnoreIndex, 7, Vocabulary::kEosId});
  }
}
