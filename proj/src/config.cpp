#include "mmh/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <set>

#include "mmh/error.hpp"
#include "mmh/text.hpp"

namespace mmh {

namespace {

// Reads the keys of one section, remembering which ones were consumed so
// that leftovers can be reported as unknown.
class Section {
 public:
  Section(const YAML::Node& node, std::string name) : node_(node), name_(std::move(name)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw Error(ErrorCode::TypeError, name_ + " must be a mapping");
  }

  bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key]; }

  template <class T>
  bool read(const std::string& key, T& out) {
    if (!has(key)) return false;
    seen_.insert(key);
    const YAML::Node v = node_[key];
    try {
      convert(v, out);
    } catch (const YAML::Exception&) {
      throw Error(ErrorCode::TypeError, path(key) + " has the wrong type");
    }
    return true;
  }

  /// First present key among aliases.
  template <class T>
  bool read_any(std::initializer_list<const char*> keys, T& out) {
    bool found = false;
    for (const char* k : keys) {
      if (has(k)) {
        if (found) throw Error(ErrorCode::UnknownKey, path(k) + " duplicates an alias already given");
        read(k, out);
        found = true;
      }
    }
    return found;
  }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw Error(ErrorCode::UnknownKey, path(key));
    }
  }

  std::string path(const std::string& key) const { return name_ + "." + key; }

 private:
  template <class T>
    requires std::is_unsigned_v<T>
  void convert(const YAML::Node& v, T& out) {
    if (!v.IsScalar()) throw YAML::Exception(YAML::Mark::null_mark(), "not a scalar");
    const auto x = v.as<long long>();
    if (x < 0) throw YAML::Exception(YAML::Mark::null_mark(), "negative");
    out = static_cast<T>(x);
  }
  void convert(const YAML::Node& v, bool& out) {
    if (!v.IsScalar()) throw YAML::Exception(YAML::Mark::null_mark(), "not a scalar");
    out = v.as<bool>();
  }
  void convert(const YAML::Node& v, double& out) {
    if (!v.IsScalar()) throw YAML::Exception(YAML::Mark::null_mark(), "not a scalar");
    out = v.as<double>();
  }
  void convert(const YAML::Node& v, std::string& out) {
    if (v.IsNull()) {
      out.clear();
      return;
    }
    if (!v.IsScalar()) throw YAML::Exception(YAML::Mark::null_mark(), "not a scalar");
    out = v.as<std::string>();
  }
  void convert(const YAML::Node& v, std::vector<std::string>& out) {
    out.clear();
    if (v.IsNull()) return;
    if (v.IsScalar()) {
      for (auto& s : text::split(v.as<std::string>(), ',')) {
        if (auto t = text::trim(s); !t.empty()) out.push_back(t);
      }
      return;
    }
    if (!v.IsSequence()) throw YAML::Exception(YAML::Mark::null_mark(), "not a list");
    for (const auto& e : v) out.push_back(e.as<std::string>());
  }
  void convert(const YAML::Node& v, std::map<std::string, std::string>& out) {
    out.clear();
    if (v.IsNull()) return;
    if (!v.IsMap()) throw YAML::Exception(YAML::Mark::null_mark(), "not a mapping");
    for (const auto& kv : v) out[kv.first.as<std::string>()] = kv.second.as<std::string>();
  }

  YAML::Node node_;
  std::string name_;
  std::set<std::string> seen_;
};

std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return p;
  std::filesystem::path fp(p);
  if (fp.is_relative() && !base.empty()) fp = base / fp;
  return fp.lexically_normal().string();
}

// Tokenizer names such as "google/byt5-base" stay as written unless they resolve to a file.
std::string resolve_if_exists(const std::filesystem::path& base, const std::string& p) {
  const std::string r = resolve(base, p);
  return !r.empty() && std::filesystem::exists(r) ? r : p;
}

std::string canonical_backbone(const std::string& b) {
  static const std::set<std::string> known = {"tiny-transformer", "t5", "mt5", "byt5", "m2m100", "m2m-100"};
  if (!known.count(b)) throw Error(ErrorCode::InvalidSpec, "unknown backbone_type '" + b + "'");
  return "tiny-transformer";
}

YAML::Node apply_overrides(YAML::Node root, const std::vector<Override>& overrides) {
  static const std::set<std::string> sections = {"model", "data", "dataset", "processor", "training"};
  for (const auto& [key, value] : overrides) {
    std::string section = "training", name = key;
    if (auto dot = key.find('.'); dot != std::string::npos) {
      section = key.substr(0, dot);
      name = key.substr(dot + 1);
    }
    if (!sections.count(section) || name.empty()) throw Error(ErrorCode::UnknownKey, key);
    if (section == "data" && root["dataset"] && !root["data"]) section = "dataset";
    if (section == "dataset" && root["data"] && !root["dataset"]) section = "data";
    YAML::Node parsed;
    try {
      parsed = YAML::Load(value);
    } catch (const YAML::Exception& e) {
      throw Error(ErrorCode::TypeError, key + ": " + e.what());
    }
    root[section][name] = parsed;
  }
  return root;
}

}  // namespace

RunConfig parse_config(const std::string& yaml, const std::filesystem::path& base_dir,
                       const std::vector<Override>& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::TypeError, std::string("config is not valid YAML: ") + e.what());
  }
  if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  if (!root.IsMap()) throw Error(ErrorCode::TypeError, "config must be a mapping of sections");
  for (const auto& kv : root) {
    const auto name = kv.first.as<std::string>();
    if (name != "model" && name != "data" && name != "dataset" && name != "processor" && name != "training") {
      throw Error(ErrorCode::UnknownKey, name);
    }
  }
  if (root["data"] && root["dataset"]) throw Error(ErrorCode::UnknownKey, "dataset (both data and dataset given)");
  const bool seed_in_file = root["training"] && root["training"].IsMap() && root["training"]["seed"];
  root = apply_overrides(root, overrides);
  const char* data_name = root["dataset"] ? "dataset" : "data";
  for (const char* s : {"model", data_name, "processor", "training"}) {
    if (!root[s]) throw Error(ErrorCode::MissingSection, std::string(s) == "dataset" ? "data" : s);
  }

  RunConfig c;
  {
    Section s(root["model"], "model");
    auto& m = c.model;
    s.read("type", m.type);
    if (m.type != "default_multimodal_encoder_decoder") {
      throw Error(ErrorCode::InvalidSpec, "unknown model type '" + m.type + "'");
    }
    s.read("backbone_type", m.backbone_type);
    m.spec.backbone_type = canonical_backbone(m.backbone_type);
    s.read("pretrained_backbone", m.pretrained_backbone);
    s.read("pretrained_checkpoint", m.pretrained_checkpoint);
    m.pretrained_checkpoint = resolve(base_dir, m.pretrained_checkpoint);
    std::string kind;
    if (s.read_any({"feature_extractor_type", "extractor_type"}, kind)) m.spec.extractor_type = parse_extractor(kind);
    if (s.read_any({"multimodal_mapper_type", "mapper_type"}, kind)) m.spec.mapper_type = parse_mapper(kind);
    s.read("d_model", m.spec.d_model);
    s.read("n_layers", m.spec.n_layers);
    s.read("n_heads", m.spec.n_heads);
    s.read("d_ff", m.spec.d_ff);
    s.read("dropout", m.spec.dropout);
    s.read("max_positions", m.spec.max_positions);
    s.finish();
  }
  {
    Section s(root[data_name], data_name);
    auto& d = c.data;
    s.read("train_metadata_file", d.train_metadata_file);
    s.read("validation_metadata_file", d.validation_metadata_file);
    s.read("test_metadata_file", d.test_metadata_file);
    s.read("max_signal_frames", d.filters.max_signal_frames);
    s.read("max_output_tokens", d.filters.max_output_tokens);
    s.read("required_fields", d.filters.required_fields);
    s.finish();
    d.train_metadata_file = resolve(base_dir, d.train_metadata_file);
    d.validation_metadata_file = resolve(base_dir, d.validation_metadata_file);
    d.test_metadata_file = resolve(base_dir, d.test_metadata_file);
  }
  {
    Section s(root["processor"], "processor");
    auto& p = c.processor;
    s.read("text_tokenizer_path", p.text_tokenizer_path);
    p.text_tokenizer_path = resolve_if_exists(base_dir, p.text_tokenizer_path);
    s.read("new_vocabulary", p.new_vocabulary);
    s.read("min_count", p.min_count);
    s.read("skip_frames_stride", p.skip_frames_stride);
    s.read("fps_default", p.fps_default);
    s.read("normalize_pose", p.normalize_pose);
    s.read("image_height", p.image_height);
    s.read("image_width", p.image_width);
    s.read("image_scale", p.image_scale);
    s.read("font_path", p.font_path);
    p.font_path = resolve(base_dir, p.font_path);
    s.read("extensions", p.extensions);
    s.finish();
    if (p.skip_frames_stride == 0) throw Error(ErrorCode::TypeError, "processor.skip_frames_stride must be >= 1");
    if (!(p.fps_default > 0.0)) throw Error(ErrorCode::TypeError, "processor.fps_default must be > 0");
    if (p.min_count == 0) p.min_count = 1;
    for (const auto& [ext, kind] : p.extensions) {
      if (kind != "pose" && kind != "features" && kind != "video") {
        throw Error(ErrorCode::TypeError, "processor.extensions." + ext + " must be pose, features or video");
      }
    }
  }
  {
    Section s(root["training"], "training");
    auto& t = c.training;
    s.read("max_steps", t.max_steps);
    s.read("batch_size", t.batch_size);
    s.read_any({"lr", "learning_rate"}, t.optimizer.lr);
    s.read("beta1", t.optimizer.beta1);
    s.read("beta2", t.optimizer.beta2);
    s.read("eps", t.optimizer.eps);
    s.read_any({"clip_norm", "max_grad_norm"}, t.optimizer.clip_norm);
    const bool seed_given = s.read("seed", t.seed);
    s.read("eval_every", t.eval_every);
    s.read("checkpoint_every", t.checkpoint_every);
    s.read("log_every", t.log_every);
    s.read("max_len", t.max_len);
    s.read_any({"beam", "num_beams"}, t.beam);
    s.read("freeze_policy", t.freeze_policy);
    s.read("output_dir", t.output_dir);
    s.finish();
    if (t.max_steps == 0) throw Error(ErrorCode::TypeError, "training.max_steps must be >= 1");
    if (t.batch_size == 0) throw Error(ErrorCode::TypeError, "training.batch_size must be >= 1");
    if (t.beam == 0) throw Error(ErrorCode::TypeError, "training.beam must be >= 1");
    parse_freeze_policy(t.freeze_policy);
    t.output_dir = resolve(base_dir, t.output_dir.empty() ? std::string("output") : t.output_dir);
    if (!seed_given && !seed_in_file) {
      if (const char* env = std::getenv("MMH_SEED"); env && *env) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (*end != '\0') throw Error(ErrorCode::TypeError, "MMH_SEED must be a non-negative integer");
        t.seed = v;
      }
    }
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<Override>& overrides) {
  const std::string content = text::read_file(path);
  return parse_config(content, std::filesystem::absolute(path).parent_path(), overrides);
}

std::string RunConfig::to_yaml() const {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::BeginMap;
  e << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "type" << YAML::Value << model.type;
  e << YAML::Key << "backbone_type" << YAML::Value << model.backbone_type;
  e << YAML::Key << "pretrained_backbone" << YAML::Value << model.pretrained_backbone;
  e << YAML::Key << "pretrained_checkpoint" << YAML::Value << model.pretrained_checkpoint;
  e << YAML::Key << "feature_extractor_type" << YAML::Value << std::string(extractor_name(model.spec.extractor_type));
  e << YAML::Key << "multimodal_mapper_type" << YAML::Value << std::string(mapper_name(model.spec.mapper_type));
  e << YAML::Key << "d_model" << YAML::Value << model.spec.d_model;
  e << YAML::Key << "n_layers" << YAML::Value << model.spec.n_layers;
  e << YAML::Key << "n_heads" << YAML::Value << model.spec.n_heads;
  e << YAML::Key << "d_ff" << YAML::Value << model.spec.d_ff;
  e << YAML::Key << "dropout" << YAML::Value << model.spec.dropout;
  e << YAML::Key << "max_positions" << YAML::Value << model.spec.max_positions;
  e << YAML::EndMap;

  e << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "train_metadata_file" << YAML::Value << data.train_metadata_file;
  e << YAML::Key << "validation_metadata_file" << YAML::Value << data.validation_metadata_file;
  e << YAML::Key << "test_metadata_file" << YAML::Value << data.test_metadata_file;
  e << YAML::Key << "max_signal_frames" << YAML::Value << data.filters.max_signal_frames;
  e << YAML::Key << "max_output_tokens" << YAML::Value << data.filters.max_output_tokens;
  e << YAML::Key << "required_fields" << YAML::Value << YAML::Flow << data.filters.required_fields;
  e << YAML::EndMap;

  e << YAML::Key << "processor" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "text_tokenizer_path" << YAML::Value << processor.text_tokenizer_path;
  e << YAML::Key << "new_vocabulary" << YAML::Value << processor.new_vocabulary;
  e << YAML::Key << "min_count" << YAML::Value << processor.min_count;
  e << YAML::Key << "skip_frames_stride" << YAML::Value << processor.skip_frames_stride;
  e << YAML::Key << "fps_default" << YAML::Value << processor.fps_default;
  e << YAML::Key << "normalize_pose" << YAML::Value << processor.normalize_pose;
  e << YAML::Key << "image_height" << YAML::Value << processor.image_height;
  e << YAML::Key << "image_width" << YAML::Value << processor.image_width;
  e << YAML::Key << "image_scale" << YAML::Value << processor.image_scale;
  e << YAML::Key << "font_path" << YAML::Value << processor.font_path;
  e << YAML::Key << "extensions" << YAML::Value << YAML::BeginMap;
  for (const auto& [ext, kind] : processor.extensions) e << YAML::Key << ext << YAML::Value << kind;
  e << YAML::EndMap;
  e << YAML::EndMap;

  e << YAML::Key << "training" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "max_steps" << YAML::Value << training.max_steps;
  e << YAML::Key << "batch_size" << YAML::Value << training.batch_size;
  e << YAML::Key << "lr" << YAML::Value << training.optimizer.lr;
  e << YAML::Key << "beta1" << YAML::Value << training.optimizer.beta1;
  e << YAML::Key << "beta2" << YAML::Value << training.optimizer.beta2;
  e << YAML::Key << "eps" << YAML::Value << training.optimizer.eps;
  e << YAML::Key << "clip_norm" << YAML::Value << training.optimizer.clip_norm;
  e << YAML::Key << "seed" << YAML::Value << training.seed;
  e << YAML::Key << "eval_every" << YAML::Value << training.eval_every;
  e << YAML::Key << "checkpoint_every" << YAML::Value << training.checkpoint_every;
  e << YAML::Key << "log_every" << YAML::Value << training.log_every;
  e << YAML::Key << "max_len" << YAML::Value << training.max_len;
  e << YAML::Key << "beam" << YAML::Value << training.beam;
  e << YAML::Key << "freeze_policy" << YAML::Value << training.freeze_policy;
  e << YAML::Key << "output_dir" << YAML::Value << training.output_dir;
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

ProcessorConfig RunConfig::processor_config() const {
  ProcessorConfig pc;
  pc.skip_frames_stride = processor.skip_frames_stride;
  pc.fps_default = processor.fps_default;
  pc.normalize_pose = processor.normalize_pose;
  pc.image = RenderOptions{processor.image_height, processor.image_width, processor.image_scale};
  if (!processor.font_path.empty()) {
    pc.font = std::make_shared<GlyphTable>(GlyphTable::load_json(processor.font_path));
  }
  for (const auto& [ext, kind] : processor.extensions) {
    pc.extensions.add(ext, kind == "pose" ? SignalKind::Pose : kind == "features" ? SignalKind::Features
                                                                                    : SignalKind::Video);
  }
  return pc;
}

}  // namespace mmh
