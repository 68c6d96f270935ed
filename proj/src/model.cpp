#include "mmh/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "json.hpp"
#include "mmh/error.hpp"

namespace mmh {

using ag::Var;

std::string_view extractor_name(ExtractorType t) { return t == ExtractorType::Identity ? "identity" : "linear"; }
std::string_view mapper_name(MapperType t) { return t == MapperType::Linear ? "linear" : "mlp"; }

ExtractorType parse_extractor(std::string_view s) {
  if (s == "identity") return ExtractorType::Identity;
  if (s == "linear") return ExtractorType::Linear;
  throw Error(ErrorCode::InvalidSpec, "unknown feature extractor type '" + std::string(s) + "'");
}

MapperType parse_mapper(std::string_view s) {
  if (s == "linear") return MapperType::Linear;
  if (s == "mlp") return MapperType::Mlp;
  throw Error(ErrorCode::InvalidSpec, "unknown multimodal mapper type '" + std::string(s) + "'");
}

void ModelSpec::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidSpec, m); };
  if (backbone_type != "tiny-transformer") fail("unknown backbone '" + backbone_type + "'");
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0 || max_positions == 0) {
    fail("dimensions must be >= 1");
  }
  if (vocab_size < 3) fail("vocab_size must cover the special tokens");
  if (d_model % n_heads != 0) {
    fail("d_model " + std::to_string(d_model) + " is not divisible by n_heads " + std::to_string(n_heads));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
}

std::string ModelSpec::to_json() const {
  nlohmann::ordered_json j;
  j["extractor_type"] = extractor_name(extractor_type);
  j["mapper_type"] = mapper_name(mapper_type);
  j["backbone_type"] = backbone_type;
  j["d_model"] = d_model;
  j["n_layers"] = n_layers;
  j["n_heads"] = n_heads;
  j["d_ff"] = d_ff;
  j["input_dim"] = input_dim;
  j["vocab_size"] = vocab_size;
  j["dropout"] = dropout;
  j["max_positions"] = max_positions;
  return j.dump();
}

ModelSpec ModelSpec::from_json(std::string_view json) {
  try {
    auto j = nlohmann::json::parse(json);
    ModelSpec s;
    s.extractor_type = parse_extractor(j.at("extractor_type").get<std::string>());
    s.mapper_type = parse_mapper(j.at("mapper_type").get<std::string>());
    s.backbone_type = j.at("backbone_type").get<std::string>();
    s.d_model = j.at("d_model").get<size_t>();
    s.n_layers = j.at("n_layers").get<size_t>();
    s.n_heads = j.at("n_heads").get<size_t>();
    s.d_ff = j.at("d_ff").get<size_t>();
    s.input_dim = j.at("input_dim").get<size_t>();
    s.vocab_size = j.at("vocab_size").get<size_t>();
    s.dropout = j.at("dropout").get<double>();
    s.max_positions = j.at("max_positions").get<size_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("model spec: ") + e.what());
  }
}

Var Parameters::get(std::string_view name) const {
  auto v = find(name);
  if (!v) throw Error(ErrorCode::ShapeMismatch, "no parameter named '" + std::string(name) + "'");
  return *v;
}

std::optional<Var> Parameters::find(std::string_view name) const {
  for (const auto& [n, v] : tensors) {
    if (n == name) return v;
  }
  return std::nullopt;
}

size_t Parameters::trainable_count() const {
  size_t n = 0;
  for (const auto& [name, v] : tensors) n += v->requires_grad ? 1 : 0;
  return n;
}

Parameters Parameters::clone() const {
  Parameters out;
  out.spec = spec;
  for (const auto& [name, v] : tensors) {
    out.tensors.emplace_back(name, ag::leaf(v->rows, v->cols, v->value, v->requires_grad));
  }
  return out;
}

namespace {

class Initializer {
 public:
  Initializer(Parameters& p, uint64_t seed) : p_(p), rng_(seed) {}

  void uniform(const std::string& name, size_t rows, size_t cols) {
    const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::vector<double> v(rows * cols);
    for (auto& x : v) {
      // Portable across standard libraries, unlike std::uniform_real_distribution.
      const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
      x = (2.0 * u - 1.0) * s;
    }
    add(name, rows, cols, std::move(v));
  }
  void fill(const std::string& name, size_t cols, double value) { add(name, 1, cols, std::vector<double>(cols, value)); }
  void linear(const std::string& prefix, size_t in, size_t out) {
    uniform(prefix + ".weight", in, out);
    fill(prefix + ".bias", out, 0.0);
  }
  void norm(const std::string& prefix, size_t d) {
    fill(prefix + ".weight", d, 1.0);
    fill(prefix + ".bias", d, 0.0);
  }

 private:
  void add(const std::string& name, size_t rows, size_t cols, std::vector<double> v) {
    p_.tensors.emplace_back(name, ag::leaf(rows, cols, std::move(v), true));
  }

  Parameters& p_;
  std::mt19937_64 rng_;
};

void init_attention(Initializer& init, const std::string& prefix, size_t d) {
  for (const char* proj : {"q", "k", "v", "o"}) init.linear(prefix + "." + proj, d, d);
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

Var linear(const Parameters& p, const std::string& prefix, const Var& x) {
  return ag::add_bias(ag::matmul(x, p.get(prefix + ".weight")), p.get(prefix + ".bias"));
}

Var norm(const Parameters& p, const std::string& prefix, const Var& x) {
  return ag::layer_norm(x, p.get(prefix + ".weight"), p.get(prefix + ".bias"));
}

uint64_t mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Dropper {
  double p = 0.0;
  uint64_t seed = 0;
  uint64_t counter = 0;

  Var operator()(const Var& x) { return p > 0.0 ? ag::dropout(x, p, mix(seed + counter++)) : x; }
};

Var attention_block(const Parameters& p, const std::string& prefix, const Var& xq, const Var& xkv,
                    const ag::AttentionShape& shape) {
  Var q = linear(p, prefix + ".q", xq);
  Var k = linear(p, prefix + ".k", xkv);
  Var v = linear(p, prefix + ".v", xkv);
  return linear(p, prefix + ".o", ag::attention(q, k, v, shape));
}

Var ffn(const Parameters& p, const std::string& prefix, const Var& x) {
  return linear(p, prefix + ".fc2", ag::gelu(linear(p, prefix + ".fc1", x)));
}

Var positions_for(size_t batch, size_t len, size_t d) {
  const auto table = sinusoidal_positions(len, d);
  std::vector<double> v(batch * len * d);
  for (size_t b = 0; b < batch; ++b) std::copy(table.begin(), table.end(), v.begin() + b * len * d);
  return ag::constant(batch * len, d, std::move(v));
}

struct Encoded {
  Var memory;
  std::vector<uint8_t> mask;
  size_t batch = 0;
  size_t length = 0;
};

Encoded encode(const Parameters& p, const Batch& b, Dropper& drop) {
  const auto& s = p.spec;
  const size_t d = s.d_model;
  if (b.encoder_length > s.max_positions) {
    throw Error(ErrorCode::SequenceTooLong, "encoder length " + std::to_string(b.encoder_length) + " exceeds " +
                                                std::to_string(s.max_positions));
  }
  const Var emb = p.get("shared_embedding");
  std::vector<Var> sources;
  sources.push_back(ag::scale(ag::embedding(emb, b.encoder_tokens), std::sqrt(static_cast<double>(d))));
  if (b.kind == EncoderKind::Features && b.max_frames > 0) {
    if (b.feature_dim != s.input_dim) {
      throw Error(ErrorCode::ShapeMismatch, "batch features have width " + std::to_string(b.feature_dim) +
                                                 ", model expects " + std::to_string(s.input_dim));
    }
    Var x = ag::constant(b.size * b.max_frames, b.feature_dim, b.features);
    sources.push_back(map_features(p, extract_features(p, x)));
  } else {
    sources.push_back(ag::constant(0, d, {}));
  }
  std::vector<ag::RowRef> refs(b.encoder_plan.size());
  for (size_t i = 0; i < refs.size(); ++i) {
    const auto& slot = b.encoder_plan[i];
    if (slot.source == EncoderSlot::Source::Token) refs[i] = {0, slot.index};
    if (slot.source == EncoderSlot::Source::Feature) refs[i] = {1, slot.index};
  }
  Var h = ag::gather_rows(sources, refs, d);
  h = drop(ag::add(h, positions_for(b.size, b.encoder_length, d)));

  ag::AttentionShape self{b.size, b.encoder_length, b.encoder_length, s.n_heads, false, b.encoder_mask};
  for (size_t l = 0; l < s.n_layers; ++l) {
    const std::string pre = "encoder.layers." + std::to_string(l);
    Var x = norm(p, pre + ".ln1", h);
    h = ag::add(h, drop(attention_block(p, pre + ".self_attn", x, x, self)));
    h = ag::add(h, drop(ffn(p, pre + ".ffn", norm(p, pre + ".ln2", h))));
  }
  return {norm(p, "encoder.final_ln", h), b.encoder_mask, b.size, b.encoder_length};
}

Var decode(const Parameters& p, const Encoded& enc, const std::vector<int>& input, const std::vector<uint8_t>& mask,
           size_t len, Dropper& drop) {
  const auto& s = p.spec;
  const size_t d = s.d_model;
  if (len > s.max_positions) {
    throw Error(ErrorCode::SequenceTooLong,
                "decoder length " + std::to_string(len) + " exceeds " + std::to_string(s.max_positions));
  }
  const Var emb = p.get("shared_embedding");
  Var h = ag::scale(ag::embedding(emb, input), std::sqrt(static_cast<double>(d)));
  h = drop(ag::add(h, positions_for(enc.batch, len, d)));

  ag::AttentionShape self{enc.batch, len, len, s.n_heads, true, mask};
  ag::AttentionShape cross{enc.batch, len, enc.length, s.n_heads, false, enc.mask};
  for (size_t l = 0; l < s.n_layers; ++l) {
    const std::string pre = "decoder.layers." + std::to_string(l);
    Var x = norm(p, pre + ".ln1", h);
    h = ag::add(h, drop(attention_block(p, pre + ".self_attn", x, x, self)));
    h = ag::add(h, drop(attention_block(p, pre + ".cross_attn", norm(p, pre + ".ln2", h), enc.memory, cross)));
    h = ag::add(h, drop(ffn(p, pre + ".ffn", norm(p, pre + ".ln3", h))));
  }
  h = norm(p, "decoder.final_ln", h);
  return ag::scale(ag::matmul_nt(h, emb), 1.0 / std::sqrt(static_cast<double>(d)));
}

std::vector<int> start_tokens(const ModelInput& input) {
  if (input.decoder_prompt_tokens.empty()) return {Vocabulary::kPadId};
  return input.decoder_prompt_tokens;
}

Batch single_batch(const ModelInput& input) {
  static const Vocabulary specials;
  ModelInput in = input;
  in.label_tokens.clear();
  in.decoder_prompt_tokens = start_tokens(input);
  return collate(std::span<const ModelInput>(&in, 1), specials);
}

std::vector<double> last_log_probs(const Var& logits) {
  const size_t V = logits->cols;
  const double* z = logits->value.data() + (logits->rows - 1) * V;
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t c = 0; c < V; ++c) mx = std::max(mx, z[c]);
  double sum = 0.0;
  for (size_t c = 0; c < V; ++c) sum += std::exp(z[c] - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(V);
  for (size_t c = 0; c < V; ++c) out[c] = z[c] - lse;
  return out;
}

// Log-probabilities for the token after `tokens`, given a cached encoding.
std::vector<double> step_log_probs(const Parameters& p, const Encoded& enc, const std::vector<int>& tokens) {
  Dropper off;
  std::vector<uint8_t> mask(tokens.size(), 1);
  return last_log_probs(decode(p, enc, tokens, mask, tokens.size(), off));
}

}  // namespace

Parameters init_model(const ModelSpec& spec, uint64_t seed) {
  spec.validate();
  Parameters p;
  p.spec = spec;
  Initializer init(p, seed);
  const size_t d = spec.d_model;
  if (spec.input_dim > 0) {
    size_t df = spec.input_dim;
    if (spec.extractor_type == ExtractorType::Linear) {
      init.linear("extractor", spec.input_dim, d);
      df = d;
    }
    if (spec.mapper_type == MapperType::Linear) {
      init.linear("mapper", df, d);
    } else {
      init.linear("mapper.fc1", df, d);
      init.linear("mapper.fc2", d, d);
    }
  }
  init.uniform("shared_embedding", spec.vocab_size, d);
  for (size_t l = 0; l < spec.n_layers; ++l) {
    const std::string pre = "encoder.layers." + std::to_string(l);
    init.norm(pre + ".ln1", d);
    init_attention(init, pre + ".self_attn", d);
    init.norm(pre + ".ln2", d);
    init.linear(pre + ".ffn.fc1", d, spec.d_ff);
    init.linear(pre + ".ffn.fc2", spec.d_ff, d);
  }
  init.norm("encoder.final_ln", d);
  for (size_t l = 0; l < spec.n_layers; ++l) {
    const std::string pre = "decoder.layers." + std::to_string(l);
    init.norm(pre + ".ln1", d);
    init_attention(init, pre + ".self_attn", d);
    init.norm(pre + ".ln2", d);
    init_attention(init, pre + ".cross_attn", d);
    init.norm(pre + ".ln3", d);
    init.linear(pre + ".ffn.fc1", d, spec.d_ff);
    init.linear(pre + ".ffn.fc2", spec.d_ff, d);
  }
  init.norm("decoder.final_ln", d);
  return p;
}

FreezePolicy parse_freeze_policy(std::string_view s) {
  if (s == "none") return FreezePolicy::None;
  if (s == "freeze_backbone_except_embedding") return FreezePolicy::FreezeBackboneExceptEmbedding;
  if (s == "freeze_all_except(mapper)" || s == "freeze_all_except_mapper") return FreezePolicy::FreezeAllExceptMapper;
  if (s == "freeze_all") return FreezePolicy::FreezeAll;
  throw Error(ErrorCode::UnknownPolicy, "unknown freeze policy '" + std::string(s) + "'");
}

std::string_view freeze_policy_name(FreezePolicy p) {
  switch (p) {
    case FreezePolicy::None: return "none";
    case FreezePolicy::FreezeBackboneExceptEmbedding: return "freeze_backbone_except_embedding";
    case FreezePolicy::FreezeAllExceptMapper: return "freeze_all_except(mapper)";
    case FreezePolicy::FreezeAll: return "freeze_all";
  }
  return "none";
}

void set_freeze_policy(Parameters& params, FreezePolicy policy) {
  for (auto& [name, v] : params.tensors) {
    const bool mapper = starts_with(name, "mapper.");
    const bool extractor = starts_with(name, "extractor.");
    const bool embedding = name == "shared_embedding";
    switch (policy) {
      case FreezePolicy::None: v->requires_grad = true; break;
      case FreezePolicy::FreezeBackboneExceptEmbedding: v->requires_grad = mapper || extractor || embedding; break;
      case FreezePolicy::FreezeAllExceptMapper: v->requires_grad = mapper; break;
      case FreezePolicy::FreezeAll: v->requires_grad = false; break;
    }
  }
}

Var extract_features(const Parameters& params, const Var& x) {
  const auto& s = params.spec;
  if (s.input_dim == 0 || x->cols != s.input_dim) {
    throw Error(ErrorCode::ShapeMismatch, "features of width " + std::to_string(x->cols) + " into an extractor for " +
                                              std::to_string(s.input_dim));
  }
  if (s.extractor_type == ExtractorType::Identity) return x;
  return linear(params, "extractor", x);
}

Var map_features(const Parameters& params, const Var& f) {
  const auto& s = params.spec;
  const size_t df = s.extractor_type == ExtractorType::Linear ? s.d_model : s.input_dim;
  if (s.input_dim == 0 || f->cols != df) {
    throw Error(ErrorCode::ShapeMismatch,
                "features of width " + std::to_string(f->cols) + " into a mapper for " + std::to_string(df));
  }
  if (s.mapper_type == MapperType::Linear) return linear(params, "mapper", f);
  return linear(params, "mapper.fc2", ag::gelu(linear(params, "mapper.fc1", f)));
}

std::vector<double> sinusoidal_positions(size_t positions, size_t d) {
  std::vector<double> pe(positions * d);
  for (size_t pos = 0; pos < positions; ++pos) {
    for (size_t i = 0; i < d; i += 2) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      pe[pos * d + i] = std::sin(angle);
      if (i + 1 < d) pe[pos * d + i + 1] = std::cos(angle);
    }
  }
  return pe;
}

ForwardOutput forward(const Parameters& params, const Batch& batch, bool train_mode, uint64_t dropout_seed) {
  Dropper drop{train_mode ? params.spec.dropout : 0.0, dropout_seed, 0};
  const Encoded enc = encode(params, batch, drop);
  ForwardOutput out;
  out.logits = decode(params, enc, batch.decoder_input, batch.decoder_mask, batch.decoder_length, drop);
  for (int t : batch.labels) out.n_tokens += t != kIgnoreIndex ? 1 : 0;
  if (out.n_tokens > 0) out.loss = ag::cross_entropy(out.logits, batch.labels, kIgnoreIndex);
  return out;
}

std::vector<int> generate_greedy(const Parameters& params, const ModelInput& input, size_t max_len) {
  if (max_len == 0) return {};
  ag::NoGradGuard no_grad;
  Dropper off;
  const Batch b = single_batch(input);
  const Encoded enc = encode(params, b, off);
  std::vector<int> tokens = start_tokens(input);
  std::vector<int> out;
  while (out.size() < max_len) {
    const auto lp = step_log_probs(params, enc, tokens);
    const int next = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    if (next == Vocabulary::kEosId) break;
    tokens.push_back(next);
    out.push_back(next);
  }
  return out;
}

std::vector<int> generate_beam(const Parameters& params, const ModelInput& input, size_t beam, size_t max_len) {
  if (max_len == 0) return {};
  beam = std::max<size_t>(beam, 1);
  ag::NoGradGuard no_grad;
  Dropper off;
  const Batch b = single_batch(input);
  const Encoded enc = encode(params, b, off);

  struct Hyp {
    std::vector<int> tokens;  // generated so far
    double score = 0.0;
  };
  struct Cand {
    double score;
    size_t origin;
    size_t rank;  // position of the token in its beam's (log-prob desc, id asc) order
    int token;
  };
  std::vector<Hyp> alive{Hyp{}};
  std::vector<Hyp> finished;
  for (size_t step = 0; step < max_len && !alive.empty(); ++step) {
    std::vector<Cand> cands;
    for (size_t h = 0; h < alive.size(); ++h) {
      std::vector<int> prefix = start_tokens(input);
      prefix.insert(prefix.end(), alive[h].tokens.begin(), alive[h].tokens.end());
      const auto lp = step_log_probs(params, enc, prefix);
      std::vector<int> ids(lp.size());
      for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
      std::stable_sort(ids.begin(), ids.end(), [&](int a, int c) { return lp[a] > lp[c]; });
      for (size_t r = 0; r < std::min(beam, ids.size()); ++r) {
        cands.push_back({alive[h].score + lp[ids[r]], h, r, ids[r]});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& c) {
      if (a.score != c.score) return a.score > c.score;
      if (a.origin != c.origin) return a.origin < c.origin;
      return a.rank < c.rank;
    });
    std::vector<Hyp> next;
    for (size_t i = 0; i < std::min(beam, cands.size()); ++i) {
      Hyp h{alive[cands[i].origin].tokens, cands[i].score};
      if (cands[i].token == Vocabulary::kEosId) {
        finished.push_back(std::move(h));
      } else {
        h.tokens.push_back(cands[i].token);
        next.push_back(std::move(h));
      }
    }
    alive = std::move(next);
    // Scores only decrease, so nothing alive can overtake the best finished hypothesis.
    double best_finished = -std::numeric_limits<double>::infinity();
    for (const auto& f : finished) best_finished = std::max(best_finished, f.score);
    if (finished.size() >= beam ||
        std::all_of(alive.begin(), alive.end(), [&](const Hyp& h) { return h.score <= best_finished; })) {
      if (!finished.empty()) break;
    }
  }
  const Hyp* best = nullptr;
  for (const auto& f : finished) {
    if (!best || f.score > best->score) best = &f;
  }
  for (const auto& a : alive) {
    if (!best || a.score > best->score) best = &a;
  }
  return best ? best->tokens : std::vector<int>{};
}

}  // namespace mmh
