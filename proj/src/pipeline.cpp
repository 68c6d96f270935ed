#include "mmh/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "json.hpp"
#include "mmh/checkpoint.hpp"
#include "mmh/error.hpp"
#include "mmh/metadata.hpp"
#include "mmh/metaproc.hpp"
#include "mmh/text.hpp"

namespace mmh {

namespace fs = std::filesystem;

namespace artifacts {
fs::path step_checkpoint(const fs::path& dir, uint64_t step) {
  char name[32];
  std::snprintf(name, sizeof name, "step-%06llu.ckpt", static_cast<unsigned long long>(step));
  return dir / kCheckpointDir / name;
}
}  // namespace artifacts

std::string SetupInfo::to_json() const {
  nlohmann::ordered_json j;
  j["modality"] = modality_name(modality);
  j["input_dim"] = spec.input_dim;
  j["spec"] = nlohmann::json::parse(spec.to_json());
  j["vocab_hash"] = text::hex64(vocab_hash);
  j["datasets"] = nlohmann::json::array();
  for (const auto& d : datasets) {
    j["datasets"].push_back({{"split", d.split}, {"path", d.path}, {"rows", d.rows}, {"content_hash", d.content_hash}});
  }
  return j.dump(2) + "\n";
}

SetupInfo SetupInfo::from_json(const std::string& json) {
  try {
    const auto j = nlohmann::json::parse(json);
    SetupInfo s;
    s.modality = parse_modality(j.at("modality").get<std::string>());
    s.spec = ModelSpec::from_json(j.at("spec").dump());
    s.vocab_hash = std::stoull(j.at("vocab_hash").get<std::string>(), nullptr, 16);
    for (const auto& d : j.at("datasets")) {
      s.datasets.push_back({d.at("split").get<std::string>(), d.at("path").get<std::string>(),
                            d.at("rows").get<size_t>(), d.at("content_hash").get<std::string>()});
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ValidationFailed, std::string("setup.json: ") + e.what());
  }
}

const std::vector<std::string>& supported_metrics() {
  static const std::vector<std::string> m = {"bleu", "chrf", "perplexity"};
  return m;
}

void check_task(std::string_view task, Modality modality) {
  if (task == "seq2seq") {
    if (modality == Modality::Mixed2Text) {
      throw Error(ErrorCode::UnknownTask, "mixed2text artifacts need task mixed-seq2seq");
    }
    return;
  }
  if (task == "mixed-seq2seq") {
    if (modality != Modality::Mixed2Text) {
      throw Error(ErrorCode::UnknownTask,
                  "task mixed-seq2seq needs modality mixed2text, not " + std::string(modality_name(modality)));
    }
    return;
  }
  throw Error(ErrorCode::UnknownTask, "unknown task '" + std::string(task) + "' (expected seq2seq or mixed-seq2seq)");
}

namespace {

uint64_t mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string fmt_double(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct RawSplit {
  Split split = Split::Train;
  std::string path;
  std::optional<SplitTable> table;
  std::optional<MixedTable> mixed;

  size_t rows() const { return table ? table->records.size() : mixed->records.size(); }
};

RawSplit read_split(Split split, const std::string& path, Modality modality) {
  RawSplit r{split, path, {}, {}};
  if (modality == Modality::Mixed2Text) {
    r.mixed = parse_mixed_tsv(path);
  } else {
    r.table = parse_metadata_tsv(path, split);
  }
  return r;
}

std::vector<Violation> validate_mixed(const MixedTable& t, Split split, const ExtensionRegistry& registry) {
  std::vector<Violation> out;
  const fs::path base = fs::path(t.source_path).parent_path();
  for (size_t i = 0; i < t.records.size(); ++i) {
    const auto& r = t.records[i];
    if (r.encoder_input.empty()) out.push_back({i, "empty encoder_input"});
    if (r.label.empty() && split != Split::Test) out.push_back({i, "empty label"});
    try {
      for (const auto& seg : detect_signals(r.encoder_input, registry)) {
        const auto* s = std::get_if<SignalSegment>(&seg);
        if (!s) continue;
        if (!s->kind) {
          out.push_back({i, "unregistered signal extension in '" + s->path + "'"});
          continue;
        }
        fs::path p(s->path);
        if (p.is_relative()) p = base / p;
        if (!fs::exists(p)) out.push_back({i, "missing signal file " + p.string()});
      }
    } catch (const Error& e) {
      out.push_back({i, e.message()});
    }
  }
  return out;
}

std::vector<std::string> vocabulary_corpus(const RawSplit& train, Modality modality) {
  std::vector<std::string> corpus;
  if (train.table) {
    for (const auto& r : train.table->records) {
      for (const auto* s : {&r.encoder_prompt, &r.decoder_prompt, &r.output}) {
        if (!s->empty()) corpus.push_back(*s);
      }
      if (modality == Modality::Text2Text && !r.signal.empty()) corpus.push_back(r.signal);
    }
    return corpus;
  }
  for (const auto& r : train.mixed->records) {
    try {
      for (const auto& seg : detect_signals(r.encoder_input)) {
        if (const auto* t = std::get_if<TextSegment>(&seg)) corpus.push_back(t->content);
      }
    } catch (const Error&) {
    }
    if (!r.decoder_input.empty()) corpus.push_back(r.decoder_input);
    if (!r.label.empty()) corpus.push_back(r.label);
  }
  return corpus;
}

std::vector<ModelInput> process_split(const RawSplit& s, Modality modality, const Vocabulary& vocab,
                                      const ProcessorConfig& pc) {
  if (s.mixed) return process_mixed_table(*s.mixed, vocab, pc);
  return process_table(*s.table, modality, vocab, pc);
}

std::vector<std::string> references_of(const RawSplit& s) {
  std::vector<std::string> refs;
  if (s.table) {
    for (const auto& r : s.table->records) refs.push_back(r.output);
  } else {
    for (const auto& r : s.mixed->records) refs.push_back(r.label);
  }
  return refs;
}

bool field_empty(const RawSplit& s, size_t row, const std::string& field) {
  if (s.table) {
    const auto& r = s.table->records[row];
    if (field == "signal") return r.signal.empty();
    if (field == "encoder_prompt") return r.encoder_prompt.empty();
    if (field == "decoder_prompt") return r.decoder_prompt.empty();
    if (field == "output") return r.output.empty();
  } else {
    const auto& r = s.mixed->records[row];
    if (field == "encoder_input") return r.encoder_input.empty();
    if (field == "decoder_input") return r.decoder_input.empty();
    if (field == "label") return r.label.empty();
  }
  throw Error(ErrorCode::UnknownKey, "data.required_fields: no column named '" + field + "'");
}

std::vector<ModelInput> apply_filters(const RawSplit& s, std::vector<ModelInput> inputs, const DataFilters& f) {
  std::vector<ModelInput> kept;
  for (auto& in : inputs) {
    bool keep = true;
    for (const auto& field : f.required_fields) keep = keep && !field_empty(s, in.source_index, field);
    if (f.max_signal_frames > 0 && in.encoder_features.rows > f.max_signal_frames) keep = false;
    const size_t out_tokens = in.label_tokens.empty() ? 0 : in.label_tokens.size() - 1;
    if (f.max_output_tokens > 0 && out_tokens > f.max_output_tokens) keep = false;
    if (keep) kept.push_back(std::move(in));
  }
  return kept;
}

// Inputs are grouped by encoder kind and feature width because a batch must be homogeneous.
using BucketKey = std::pair<int, size_t>;

BucketKey bucket_of(const ModelInput& in) {
  return {static_cast<int>(in.encoder_kind), in.encoder_kind == EncoderKind::Features ? in.encoder_features.cols : 0};
}

// Batches in the given order; each bucket is flushed when full, leftovers in
// order of first appearance.
std::vector<std::vector<size_t>> make_batches(const std::vector<ModelInput>& inputs, const std::vector<size_t>& order,
                                              size_t batch_size) {
  std::vector<std::vector<size_t>> batches;
  std::vector<BucketKey> seen;
  std::map<BucketKey, std::vector<size_t>> open;
  for (size_t idx : order) {
    const auto key = bucket_of(inputs[idx]);
    if (!open.count(key)) seen.push_back(key);
    auto& b = open[key];
    b.push_back(idx);
    if (b.size() == batch_size) {
      batches.push_back(std::move(b));
      b.clear();
    }
  }
  for (const auto& key : seen) {
    if (!open[key].empty()) batches.push_back(std::move(open[key]));
  }
  return batches;
}

Batch collate_indices(const std::vector<ModelInput>& inputs, const std::vector<size_t>& idx, const Vocabulary& v) {
  std::vector<ModelInput> sel;
  sel.reserve(idx.size());
  for (size_t i : idx) sel.push_back(inputs[i]);
  return collate(sel, v);
}

class EpochPlan {
 public:
  EpochPlan(const std::vector<ModelInput>& inputs, size_t batch_size, uint64_t seed)
      : inputs_(inputs), batch_size_(batch_size), seed_(seed) {}

  /// Batch for the 0-based global step index.
  const std::vector<size_t>& batch(uint64_t index) {
    while (true) {
      ensure(epoch_);
      if (index < first_ + batches_.size()) return batches_[index - first_];
      if (index < first_) {
        epoch_ = 0;
        first_ = 0;
        built_ = false;
        continue;
      }
      first_ += batches_.size();
      ++epoch_;
      built_ = false;
    }
  }
  uint64_t epoch() const { return epoch_; }

 private:
  void ensure(uint64_t epoch) {
    if (built_) return;
    std::vector<size_t> order(inputs_.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed_ + epoch);
    for (size_t i = order.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(rng() % i);
      std::swap(order[i - 1], order[j]);
    }
    batches_ = make_batches(inputs_, order, batch_size_);
    built_ = true;
  }

  const std::vector<ModelInput>& inputs_;
  size_t batch_size_;
  uint64_t seed_;
  uint64_t epoch_ = 0;
  uint64_t first_ = 0;
  bool built_ = false;
  std::vector<std::vector<size_t>> batches_;
};

struct EvalLoss {
  double mean_nll = 0.0;
  size_t tokens = 0;
};

EvalLoss evaluate_loss(const Parameters& params, const std::vector<ModelInput>& inputs, const Vocabulary& vocab,
                       size_t batch_size) {
  ag::NoGradGuard no_grad;
  std::vector<size_t> order;
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].label_tokens.empty()) order.push_back(i);
  }
  double total = 0.0;
  size_t tokens = 0;
  for (const auto& idx : make_batches(inputs, order, batch_size)) {
    const Batch b = collate_indices(inputs, idx, vocab);
    const ForwardOutput out = forward(params, b, false);
    if (!out.loss) continue;
    total += out.loss->value[0] * static_cast<double>(out.n_tokens);
    tokens += out.n_tokens;
  }
  if (tokens == 0) throw Error(ErrorCode::DegenerateBatch, "no labelled tokens to evaluate");
  return {total / static_cast<double>(tokens), tokens};
}

struct Loaded {
  SetupInfo info;
  RunConfig config;
  Vocabulary vocab;
  ProcessorConfig pc;
};

Loaded load_artifacts(const fs::path& dir, const std::vector<Override>& overrides) {
  if (!fs::exists(dir / artifacts::kSetup)) {
    throw Error(ErrorCode::ValidationFailed, dir.string() + " is not a setup artifacts directory");
  }
  Loaded l;
  l.info = SetupInfo::from_json(text::read_file(dir / artifacts::kSetup));
  l.config = load_config(dir / artifacts::kConfig, overrides);
  l.vocab = Vocabulary::load(dir / artifacts::kVocab);
  if (l.vocab.hash() != l.info.vocab_hash) {
    throw Error(ErrorCode::IncompatibleSpec, "vocab.txt does not match the hash recorded at setup");
  }
  l.pc = l.config.processor_config();
  return l;
}

fs::path latest_step_checkpoint(const fs::path& dir) {
  fs::path best;
  if (!fs::exists(dir / artifacts::kCheckpointDir)) return best;
  for (const auto& e : fs::directory_iterator(dir / artifacts::kCheckpointDir)) {
    const auto name = e.path().filename().string();
    if (name.starts_with("step-") && e.path().extension() == ".ckpt" && (best.empty() || e.path() > best)) {
      best = e.path();
    }
  }
  return best;
}

}  // namespace

fs::path setup(Modality modality, const RunConfig& config, std::ostream* warnings) {
  const auto& d = config.data;
  if (d.train_metadata_file.empty()) throw Error(ErrorCode::ValidationFailed, "data.train_metadata_file is not set");
  const ProcessorConfig pc = config.processor_config();

  std::vector<RawSplit> splits;
  splits.push_back(read_split(Split::Train, d.train_metadata_file, modality));
  if (!d.validation_metadata_file.empty()) {
    splits.push_back(read_split(Split::Validation, d.validation_metadata_file, modality));
  }
  if (!d.test_metadata_file.empty()) splits.push_back(read_split(Split::Test, d.test_metadata_file, modality));

  std::string report;
  for (const auto& s : splits) {
    const auto violations = s.table ? validate_records(*s.table, modality, pc.extensions)
                                    : validate_mixed(*s.mixed, s.split, pc.extensions);
    for (const auto& v : violations) {
      report += std::string(split_name(s.split)) + " row " + std::to_string(v.row) + ": " + v.message + "\n";
    }
  }
  if (!report.empty()) throw Error(ErrorCode::ValidationFailed, "\n" + report);

  Vocabulary vocab;
  const auto& tok_path = config.processor.text_tokenizer_path;
  if (!tok_path.empty() && fs::is_regular_file(tok_path)) {
    vocab = Vocabulary::load(tok_path);
  } else {
    if (!tok_path.empty() && warnings) {
      *warnings << "warning: text_tokenizer_path '" << tok_path
                << "' is not a vocabulary file; building the vocabulary from the training split\n";
    }
    vocab = Vocabulary::build(vocabulary_corpus(splits[0], modality), config.processor.min_count);
  }
  if (!config.processor.new_vocabulary.empty()) vocab = vocab.extend(config.processor.new_vocabulary);

  ModelSpec spec = config.model.spec;
  spec.vocab_size = vocab.size();
  spec.input_dim = 0;
  if (modality != Modality::Text2Text) {
    try {
      const auto& train = splits[0];
      const fs::path base = fs::path(train.path).parent_path();
      for (size_t i = 0; i < train.rows() && spec.input_dim == 0; ++i) {
        ModelInput in = train.table ? process_sample(train.table->records[i], i, modality, vocab, pc, base)
                                    : to_model_input(process_mixed(train.mixed->records[i], vocab, pc, base), i);
        spec.input_dim = in.encoder_features.cols;
      }
    } catch (const Error& e) {
      throw Error(ErrorCode::SignalProbeFailed, e.message());
    }
    if (spec.input_dim == 0) {
      throw Error(ErrorCode::SignalProbeFailed, "no training record carries a signal for " +
                                                    std::string(modality_name(modality)));
    }
  }
  spec.validate();

  Parameters params = init_model(spec, config.training.seed);
  if (!config.model.pretrained_checkpoint.empty()) {
    params = load_checkpoint(config.model.pretrained_checkpoint, spec, vocab.hash()).params;
  }

  SetupInfo info;
  info.modality = modality;
  info.spec = spec;
  info.vocab_hash = vocab.hash();
  for (const auto& s : splits) {
    info.datasets.push_back(
        {std::string(split_name(s.split)), s.path, s.rows(), text::hex64(text::fnv1a64(text::read_file(s.path)))});
  }

  const fs::path dir = config.training.output_dir;
  fs::create_directories(dir / artifacts::kCheckpointDir);
  text::write_file(dir / artifacts::kConfig, config.to_yaml());
  vocab.save(dir / artifacts::kVocab);
  text::write_file(dir / artifacts::kSetup, info.to_json());
  save_checkpoint(dir / artifacts::kInitCheckpoint, params, AdamState{}, 0, vocab.hash());
  return dir;
}

TrainResult train(const fs::path& dir, const TrainOptions& options) {
  Loaded l = load_artifacts(dir, options.overrides);
  check_task(options.task, l.info.modality);
  const auto& cfg = l.config;
  const auto& t = cfg.training;
  const FreezePolicy policy = parse_freeze_policy(t.freeze_policy);

  const auto train_raw = read_split(Split::Train, cfg.data.train_metadata_file, l.info.modality);
  const auto train_inputs =
      apply_filters(train_raw, process_split(train_raw, l.info.modality, l.vocab, l.pc), cfg.data.filters);
  if (train_inputs.empty()) throw Error(ErrorCode::ValidationFailed, "no training samples left after filtering");
  for (const auto& in : train_inputs) {
    if (in.label_tokens.empty()) {
      throw Error(ErrorCode::ValidationFailed, "train row " + std::to_string(in.source_index) + " has no output");
    }
  }
  std::vector<ModelInput> val_inputs;
  if (!cfg.data.validation_metadata_file.empty()) {
    const auto raw = read_split(Split::Validation, cfg.data.validation_metadata_file, l.info.modality);
    val_inputs = apply_filters(raw, process_split(raw, l.info.modality, l.vocab, l.pc), cfg.data.filters);
  }

  Checkpoint state = options.resume_from ? load_checkpoint(*options.resume_from, l.info.spec, l.info.vocab_hash)
                                         : load_checkpoint(dir / artifacts::kInitCheckpoint, l.info.spec,
                                                           l.info.vocab_hash);
  Parameters& params = state.params;
  set_freeze_policy(params, policy);
  if (params.trainable_count() == 0) {
    throw Error(ErrorCode::NoTrainableParameters, "freeze policy " + t.freeze_policy + " leaves nothing to train");
  }

  TrainResult result;
  result.log_path = dir / artifacts::kTrainLog;
  result.first_step = state.step + 1;
  std::ofstream log(result.log_path, options.resume_from ? std::ios::app : std::ios::trunc);
  if (!log) throw Error(ErrorCode::IoFailure, "cannot write " + result.log_path.string());

  const fs::path best_path = dir / artifacts::kBestCheckpoint;
  const fs::path best_info = dir / "best.json";
  double best_loss = std::numeric_limits<double>::infinity();
  if (options.resume_from && fs::exists(best_info)) {
    best_loss = nlohmann::json::parse(text::read_file(best_info)).at("val_loss").get<double>();
  }

  auto save_step = [&](uint64_t step) {
    const fs::path p = artifacts::step_checkpoint(dir, step);
    fs::create_directories(p.parent_path());
    save_checkpoint(p, params, state.optimizer, step, l.info.vocab_hash);
    return p;
  };
  auto run_eval = [&](uint64_t step) {
    const EvalLoss e = evaluate_loss(params, val_inputs, l.vocab, t.batch_size);
    log << "{\"step\":" << step << ",\"val_loss\":" << fmt_double(e.mean_nll)
        << ",\"ppl\":" << fmt_double(std::exp(e.mean_nll)) << ",\"val_tokens\":" << e.tokens << "}\n";
    log.flush();
    if (options.progress) *options.progress << "step " << step << " val_loss " << e.mean_nll << "\n";
    if (e.mean_nll < best_loss) {
      best_loss = e.mean_nll;
      save_checkpoint(best_path, params, state.optimizer, step, l.info.vocab_hash);
      text::write_file(best_info, "{\"step\":" + std::to_string(step) + ",\"val_loss\":" + fmt_double(e.mean_nll) + "}\n");
      result.best_checkpoint = best_path;
    }
  };

  EpochPlan plan(train_inputs, t.batch_size, t.seed);
  uint64_t last_saved = 0, last_eval = 0;
  for (uint64_t step = state.step + 1; step <= t.max_steps; ++step) {
    const auto& idx = plan.batch(step - 1);
    const Batch batch = collate_indices(train_inputs, idx, l.vocab);
    StepResult r;
    try {
      r = train_step(params, batch, state.optimizer, t.optimizer, mix(t.seed ^ mix(step)));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonFiniteLoss) save_step(step - 1);
      throw;
    }
    result.losses.push_back(r.loss);
    result.last_step = step;
    log << "{\"step\":" << step << ",\"epoch\":" << plan.epoch() << ",\"loss\":" << fmt_double(r.loss)
        << ",\"lr\":" << fmt_double(t.optimizer.lr) << ",\"grad_norm\":" << fmt_double(r.grad_norm)
        << ",\"tokens\":" << r.n_tokens << "}\n";
    log.flush();
    if (options.progress && t.log_every > 0 && step % t.log_every == 0) {
      *options.progress << "step " << step << " loss " << r.loss << "\n";
    }
    if (t.checkpoint_every > 0 && step % t.checkpoint_every == 0) {
      result.final_checkpoint = save_step(step);
      last_saved = step;
    }
    if (!val_inputs.empty() && t.eval_every > 0 && step % t.eval_every == 0) {
      run_eval(step);
      last_eval = step;
    }
  }
  const uint64_t final_step = std::max<uint64_t>(state.step, result.last_step);
  if (last_saved != final_step) result.final_checkpoint = save_step(final_step);
  if (!val_inputs.empty()) {
    if (last_eval != final_step && result.last_step > 0) run_eval(final_step);
  } else {
    save_checkpoint(best_path, params, state.optimizer, final_step, l.info.vocab_hash);
    result.best_checkpoint = best_path;
  }
  if (result.best_checkpoint.empty() && fs::exists(best_path)) result.best_checkpoint = best_path;
  return result;
}

GenerateResult generate(const fs::path& dir, const GenerateOptions& options) {
  const auto& metrics = supported_metrics();
  if (std::find(metrics.begin(), metrics.end(), options.metric_name) == metrics.end()) {
    throw Error(ErrorCode::UnknownMetric, "'" + options.metric_name + "' (supported: bleu, chrf, perplexity)");
  }
  Loaded l = load_artifacts(dir, options.overrides);
  check_task(options.task, l.info.modality);
  const auto& cfg = l.config;

  fs::path ckpt;
  if (options.checkpoint) {
    ckpt = *options.checkpoint;
  } else if (fs::exists(dir / artifacts::kBestCheckpoint)) {
    ckpt = dir / artifacts::kBestCheckpoint;
  } else {
    ckpt = latest_step_checkpoint(dir);
    if (ckpt.empty()) ckpt = dir / artifacts::kInitCheckpoint;
  }
  const Checkpoint state = load_checkpoint(ckpt, l.info.spec, l.info.vocab_hash);

  std::string path;
  Split split = Split::Test;
  if (options.split == "test") {
    path = cfg.data.test_metadata_file;
  } else if (options.split == "validation") {
    path = cfg.data.validation_metadata_file;
    split = Split::Validation;
  } else if (options.split == "train") {
    path = cfg.data.train_metadata_file;
    split = Split::Train;
  } else {
    throw Error(ErrorCode::UnknownKey, "split '" + options.split + "' (expected test, validation or train)");
  }
  if (path.empty()) throw Error(ErrorCode::ValidationFailed, "no " + options.split + " metadata file configured");

  const auto raw = read_split(split, path, l.info.modality);
  const auto inputs = process_split(raw, l.info.modality, l.vocab, l.pc);
  GenerateResult res;
  res.references = references_of(raw);
  res.predictions.resize(inputs.size());

  const size_t beam = cfg.training.beam, max_len = cfg.training.max_len;
  const auto n = static_cast<std::ptrdiff_t>(inputs.size());
  std::vector<std::exception_ptr> errors(inputs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto ids = beam > 1 ? generate_beam(state.params, inputs[i], beam, max_len)
                                : generate_greedy(state.params, inputs[i], max_len);
      res.predictions[i] = l.vocab.detokenize(ids);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  res.predictions_path = options.predictions_path.value_or(dir / artifacts::kPredictions);
  write_predictions(res.references, res.predictions, res.predictions_path);

  if (options.metric_name == "bleu") {
    res.eval = corpus_bleu(res.predictions, res.references);
  } else if (options.metric_name == "chrf") {
    res.eval = chrf(res.predictions, res.references);
  } else {
    const EvalLoss e = evaluate_loss(state.params, inputs, l.vocab, cfg.training.batch_size);
    res.eval = EvalResult{"perplexity", perplexity(e.mean_nll), inputs.size(), {{"mean_nll", e.mean_nll}}};
  }
  return res;
}

}  // namespace mmh
