#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "doctest.h"
#include "mmh/checkpoint.hpp"
#include "mmh/error.hpp"
#include "mmh/model.hpp"
#include "mmh/optim.hpp"
#include "mmh/text.hpp"
#include "support.hpp"

using namespace mmh;
using namespace mmh::testing;

namespace {

ModelSpec tiny(size_t vocab = 16, size_t input_dim = 0) {
  ModelSpec s;
  s.d_model = 16;
  s.n_layers = 1;
  s.n_heads = 2;
  s.d_ff = 32;
  s.vocab_size = vocab;
  s.input_dim = input_dim;
  s.dropout = 0.0;
  return s;
}

ModelInput token_input(std::vector<int> src, std::vector<int> label) {
  ModelInput in;
  in.encoder_tokens = std::move(src);
  in.layout = {{EncoderBlock::Source::Tokens, 0, in.encoder_tokens.size()}};
  in.decoder_prompt_tokens = {Vocabulary::kPadId};
  in.label_tokens = std::move(label);
  in.label_tokens.push_back(Vocabulary::kEosId);
  return in;
}

ModelInput feature_input(size_t frames, size_t dim, uint64_t seed, std::vector<int> label) {
  ModelInput in;
  in.encoder_kind = EncoderKind::Features;
  in.encoder_features = Matrix(frames, dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  for (auto& x : in.encoder_features.data) x = d(rng);
  in.encoder_tokens = {3};
  in.layout = {{EncoderBlock::Source::Tokens, 0, 1}, {EncoderBlock::Source::Features, 0, frames}};
  in.decoder_prompt_tokens = {Vocabulary::kPadId};
  in.label_tokens = std::move(label);
  in.label_tokens.push_back(Vocabulary::kEosId);
  return in;
}

std::vector<ModelInput> copy_inputs(size_t n, size_t vocab, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ModelInput> out;
  for (size_t i = 0; i < n; ++i) {
    std::vector<int> s;
    for (size_t k = 0; k < 4; ++k) s.push_back(static_cast<int>(3 + rng() % (vocab - 3)));
    out.push_back(token_input(s, s));
  }
  return out;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("initialization is a pure function of spec and seed") {
    const auto a = init_model(tiny(), 5), b = init_model(tiny(), 5), c = init_model(tiny(), 6);
    bool differs = false;
    for (size_t i = 0; i < a.tensors.size(); ++i) {
      CHECK(a.tensors[i].first == b.tensors[i].first);
      CHECK(a.tensors[i].second->value == b.tensors[i].second->value);
      differs |= a.tensors[i].second->value != c.tensors[i].second->value;
    }
    CHECK(differs);
  }

  TEST_CASE("spec validation") {
    auto s = tiny();
    s.d_model = 65;
    s.n_heads = 4;
    CHECK(code_of([&] { s.validate(); }) == ErrorCode::InvalidSpec);
    auto v = tiny(2);
    CHECK(code_of([&] { v.validate(); }) == ErrorCode::InvalidSpec);
    const auto t = tiny(30, 7);
    CHECK(ModelSpec::from_json(t.to_json()) == t);
  }

  TEST_CASE("tokens-only models have no extractor or mapper") {
    const auto p = init_model(tiny(), 1);
    for (const auto& [name, t] : p.tensors) {
      CHECK_FALSE(name.starts_with("extractor"));
      CHECK_FALSE(name.starts_with("mapper"));
    }
    CHECK(p.find("shared_embedding").has_value());
  }

  TEST_CASE("feature extractor") {
    auto spec = tiny(16, 99);
    const auto p = init_model(spec, 1);
    const auto x = ag::constant(3, 99, std::vector<double>(297, 0.5));
    CHECK(extract_features(p, x)->value == x->value);
    CHECK(code_of([&] { extract_features(p, ag::constant(3, 98, std::vector<double>(294))); }) ==
          ErrorCode::ShapeMismatch);
    auto lin = tiny(16, 16);
    lin.extractor_type = ExtractorType::Linear;
    const auto q = init_model(lin, 1);
    auto w = q.get("extractor.weight");
    std::fill(w->value.begin(), w->value.end(), 0.0);
    for (size_t i = 0; i < 16; ++i) w->value[i * 16 + i] = 1.0;
    const auto y = ag::constant(2, 16, std::vector<double>(32, 0.25));
    CHECK(extract_features(q, y)->value == y->value);
  }

  TEST_CASE("linear mapper") {
    auto spec = tiny(16, 8);
    const auto p = init_model(spec, 2);
    auto bias = p.get("mapper.bias");
    for (size_t i = 0; i < bias->value.size(); ++i) bias->value[i] = 0.1 * static_cast<double>(i);
    const auto out = map_features(p, ag::constant(4, 8, std::vector<double>(32, 0.0)));
    for (size_t r = 0; r < 4; ++r) {
      for (size_t c = 0; c < 16; ++c) CHECK(out->value[r * 16 + c] == bias->value[c]);
    }
  }

  TEST_CASE("linear mapper gradient against finite differences") {
    auto p = init_model(tiny(16, 8), 3);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> xs(32), r(4), c(16);
    for (auto& v : xs) v = u(rng);
    for (auto& v : r) v = u(rng);
    for (auto& v : c) v = u(rng);
    const auto x = ag::leaf(4, 8, xs, true);
    auto scalar = [&] { return ag::matmul(ag::matmul(ag::constant(1, 4, r), map_features(p, x)), ag::constant(16, 1, c)); };
    zero_grad(p);
    ag::backward(scalar());
    const std::vector<ag::Var> targets = {x, p.get("mapper.weight"), p.get("mapper.bias")};
    double worst = 0.0;
    for (const auto& t : targets) {
      const auto analytic = t->grad;
      REQUIRE(analytic.size() == t->value.size());
      for (size_t i = 0; i < t->value.size(); ++i) {
        const double keep = t->value[i];
        ag::NoGradGuard ng;
        t->value[i] = keep + 1e-4;
        const double up = scalar()->value[0];
        t->value[i] = keep - 1e-4;
        const double down = scalar()->value[0];
        t->value[i] = keep;
        const double num = (up - down) / 2e-4;
        worst = std::max(worst, std::abs(num - analytic[i]) / std::max({std::abs(num), std::abs(analytic[i]), 1e-6}));
      }
    }
    CHECK(worst < 1e-6);
  }

  TEST_CASE("mlp mapper with zero output weights gives constant rows") {
    auto spec = tiny(16, 8);
    spec.mapper_type = MapperType::Mlp;
    const auto p = init_model(spec, 5);
    auto w2 = p.get("mapper.fc2.weight");
    std::fill(w2->value.begin(), w2->value.end(), 0.0);
    std::vector<double> xs(24);
    for (size_t i = 0; i < xs.size(); ++i) xs[i] = std::sin(static_cast<double>(i));
    const auto out = map_features(p, ag::constant(3, 8, xs));
    for (size_t r = 1; r < 3; ++r) {
      for (size_t c = 0; c < 16; ++c) CHECK(out->value[r * 16 + c] == out->value[c]);
    }
  }

  TEST_CASE("a batch with no labels is degenerate") {
    auto p = init_model(tiny(), 1);
    auto b = collate(std::vector<ModelInput>{token_input({4, 5}, {6})}, Vocabulary());
    b.labels.assign(b.labels.size(), kIgnoreIndex);
    CHECK(forward(p, b, false).loss == nullptr);
    AdamState st;
    CHECK(code_of([&] { train_step(p, b, st, AdamConfig{}); }) == ErrorCode::DegenerateBatch);
  }

  TEST_CASE("padded encoder positions never influence logits") {
    const auto p = init_model(tiny(16, 6), 7);
    std::vector<ModelInput> in = {feature_input(2, 6, 1, {4, 5}), feature_input(5, 6, 2, {6})};
    auto b = collate(in, Vocabulary());
    ag::NoGradGuard ng;
    const auto base = forward(p, b, false).logits->value;
    for (size_t f = 2; f < b.max_frames; ++f) {
      for (size_t c = 0; c < 6; ++c) b.features[(0 * b.max_frames + f) * 6 + c] = 1e3 * static_cast<double>(f + c);
    }
    CHECK(forward(p, b, false).logits->value == base);
  }

  TEST_CASE("initial loss is near ln V") {
    auto spec = tiny(101);
    spec.d_model = 64;
    spec.n_heads = 4;
    const auto p = init_model(spec, 11);
    const auto b = collate(copy_inputs(16, 101, 3), Vocabulary());
    ag::NoGradGuard ng;
    const double loss = forward(p, b, false).loss->value[0];
    CHECK(std::abs(loss - std::log(101.0)) / std::log(101.0) < 0.05);
  }

  TEST_CASE("freeze policies select the trainable set") {
    auto spec = tiny(16, 6);
    auto p = init_model(spec, 1);
    set_freeze_policy(p, FreezePolicy::None);
    CHECK(p.trainable_count() == p.tensors.size());
    set_freeze_policy(p, parse_freeze_policy("freeze_backbone_except_embedding"));
    std::set<std::string> trainable;
    for (const auto& [name, t] : p.tensors) {
      if (t->requires_grad) trainable.insert(name);
    }
    for (const auto& name : trainable) {
      CHECK((name == "shared_embedding" || name.starts_with("mapper.") || name.starts_with("extractor.")));
    }
    CHECK(trainable.count("shared_embedding") == 1);
    CHECK(trainable.count("mapper.weight") == 1);
    set_freeze_policy(p, parse_freeze_policy("freeze_all_except(mapper)"));
    for (const auto& [name, t] : p.tensors) CHECK(t->requires_grad == name.starts_with("mapper."));
    CHECK(parse_freeze_policy("freeze_all_except_mapper") == FreezePolicy::FreezeAllExceptMapper);
    CHECK(code_of([] { parse_freeze_policy("freeze_some"); }) == ErrorCode::UnknownPolicy);
    set_freeze_policy(p, FreezePolicy::FreezeAll);
    AdamState st;
    const auto b = collate(std::vector<ModelInput>{feature_input(3, 6, 1, {4})}, Vocabulary());
    CHECK(code_of([&] { train_step(p, b, st, AdamConfig{}); }) == ErrorCode::NoTrainableParameters);
  }

  TEST_CASE("frozen tensors are bit-unchanged by training") {
    auto p = init_model(tiny(16, 6), 2);
    const auto before = p.clone();
    set_freeze_policy(p, FreezePolicy::FreezeBackboneExceptEmbedding);
    AdamState st;
    const auto b = collate(std::vector<ModelInput>{feature_input(3, 6, 1, {4, 5}), feature_input(3, 6, 2, {6})},
                           Vocabulary());
    for (int i = 0; i < 10; ++i) train_step(p, b, st, AdamConfig{1e-2});
    for (size_t i = 0; i < p.tensors.size(); ++i) {
      const auto& name = p.tensors[i].first;
      const bool same = p.tensors[i].second->value == before.tensors[i].second->value;
      if (name.starts_with("encoder.") || name.starts_with("decoder.")) {
        CHECK(same);
      } else {
        CHECK_FALSE(same);
      }
    }
  }

  TEST_CASE("non-finite loss leaves parameters untouched") {
    auto p = init_model(tiny(), 3);
    p.get("shared_embedding")->value[0] = std::numeric_limits<double>::infinity();
    const auto before = p.clone();
    AdamState st;
    const auto b = collate(copy_inputs(2, 16, 1), Vocabulary());
    CHECK(code_of([&] { train_step(p, b, st, AdamConfig{}); }) == ErrorCode::NonFiniteLoss);
    for (size_t i = 0; i < p.tensors.size(); ++i) {
      const auto& x = p.tensors[i].second->value;
      const auto& y = before.tensors[i].second->value;
      CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end(),
                       [](double u, double v) { return u == v || (std::isnan(u) && std::isnan(v)); }));
    }
    CHECK(st.t == 0);
  }

  TEST_CASE("copy task overfits in 200 steps") {
    auto spec = tiny(20);
    spec.d_model = 64;
    spec.n_heads = 4;
    spec.d_ff = 128;
    auto p = init_model(spec, 1);
    const auto inputs = copy_inputs(16, 20, 9);
    const auto b = collate(inputs, Vocabulary());
    AdamState st;
    double loss = 0.0;
    for (int i = 0; i < 200; ++i) loss = train_step(p, b, st, AdamConfig{3e-3}).loss;
    CHECK(loss < 0.1);
    size_t exact = 0;
    for (const auto& in : inputs) {
      auto want = in.label_tokens;
      want.pop_back();
      exact += generate_greedy(p, in, 10) == want;
    }
    CHECK(exact >= 15);
  }

  TEST_CASE("beam of one equals greedy and max_len zero is empty") {
    const auto p = init_model(tiny(), 4);
    std::mt19937_64 rng(6);
    for (int i = 0; i < 50; ++i) {
      std::vector<int> src;
      for (size_t k = 1 + rng() % 5; k > 0; --k) src.push_back(static_cast<int>(3 + rng() % 13));
      const auto in = token_input(src, {});
      CHECK(generate_beam(p, in, 1, 8) == generate_greedy(p, in, 8));
    }
    const auto in = token_input({4, 5}, {});
    CHECK(generate_greedy(p, in, 0).empty());
    CHECK(generate_beam(p, in, 3, 0).empty());
    CHECK(generate_beam(p, in, 4, 6).size() <= 6);
  }

  TEST_CASE("dropout only in train mode and seeded") {
    auto spec = tiny();
    spec.dropout = 0.3;
    const auto p = init_model(spec, 4);
    const auto b = collate(copy_inputs(2, 16, 2), Vocabulary());
    ag::NoGradGuard ng;
    const auto eval1 = forward(p, b, false, 1).logits->value;
    CHECK(forward(p, b, false, 2).logits->value == eval1);
    const auto t1 = forward(p, b, true, 1).logits->value;
    CHECK(forward(p, b, true, 1).logits->value == t1);
    CHECK(forward(p, b, true, 2).logits->value != t1);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("save and load are bit-identical") {
    TempDir d;
    auto p = init_model(tiny(16, 6), 8);
    set_freeze_policy(p, FreezePolicy::FreezeAllExceptMapper);
    AdamState st;
    const auto b = collate(std::vector<ModelInput>{feature_input(3, 6, 1, {4})}, Vocabulary());
    train_step(p, b, st, AdamConfig{});
    save_checkpoint(d / "a.ckpt", p, st, 17, 0xabcdef);
    const auto c = load_checkpoint(d / "a.ckpt", p.spec, 0xabcdef);
    CHECK(c.step == 17);
    CHECK(c.vocab_hash == 0xabcdef);
    CHECK(c.optimizer == st);
    CHECK(c.params.spec == p.spec);
    REQUIRE(c.params.tensors.size() == p.tensors.size());
    for (size_t i = 0; i < p.tensors.size(); ++i) {
      CHECK(c.params.tensors[i].first == p.tensors[i].first);
      CHECK(c.params.tensors[i].second->value == p.tensors[i].second->value);
      CHECK(c.params.tensors[i].second->requires_grad == p.tensors[i].second->requires_grad);
    }
  }

  TEST_CASE("mismatched expectations are IncompatibleSpec") {
    TempDir d;
    const auto p = init_model(tiny(), 1);
    save_checkpoint(d / "a.ckpt", p, AdamState{}, 0, 1);
    CHECK(code_of([&] { load_checkpoint(d / "a.ckpt", p.spec, 2); }) == ErrorCode::IncompatibleSpec);
    CHECK(code_of([&] { load_checkpoint(d / "a.ckpt", tiny(17), 1); }) == ErrorCode::IncompatibleSpec);
  }

  TEST_CASE("corrupt files are rejected") {
    TempDir d;
    const auto p = init_model(tiny(), 1);
    save_checkpoint(d / "a.ckpt", p, AdamState{}, 0, 1);
    auto bytes = text::read_file(d / "a.ckpt");
    text::write_file(d / "t.ckpt", bytes.substr(0, bytes.size() / 2));
    CHECK(code_of([&] { load_checkpoint(d / "t.ckpt"); }) == ErrorCode::TruncatedFile);
    bytes[0] = 'X';
    text::write_file(d / "m.ckpt", bytes);
    CHECK(code_of([&] { load_checkpoint(d / "m.ckpt"); }) == ErrorCode::BadMagic);
  }
}
