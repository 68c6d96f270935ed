#include "mmh/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "json.hpp"
#include "mmh/error.hpp"
#include "mmh/text.hpp"

namespace mmh {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr uint8_t kDtypeF64 = 1;

class Writer {
 public:
  void bytes(const void* p, size_t n) { buf_.append(static_cast<const char*>(p), n); }
  template <class T>
  void put(T v) {
    bytes(&v, sizeof v);
  }
  void str(const std::string& s) {
    put<uint32_t>(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, bool trainable, size_t rows, size_t cols, const std::vector<double>& data) {
    str(name);
    put<uint8_t>(kDtypeF64);
    put<uint8_t>(trainable ? 1 : 0);
    put<uint32_t>(2);
    put<uint64_t>(rows);
    put<uint64_t>(cols);
    bytes(data.data(), data.size() * sizeof(double));
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  void bytes(void* out, size_t n) {
    if (n > data_.size() - pos_) throw Error(ErrorCode::TruncatedFile, path_);
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
  T get() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  size_t remaining() const { return data_.size() - pos_; }
  std::string str() {
    const auto n = get<uint32_t>();
    if (n > data_.size() - pos_) throw Error(ErrorCode::TruncatedFile, path_);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::string data_;
  std::string path_;
  size_t pos_ = 0;
};

struct RawTensor {
  std::string name;
  bool trainable = false;
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Parameters& params, const AdamState& optimizer,
                     uint64_t step, uint64_t vocab_hash) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.put<uint32_t>(kCheckpointVersion);
  size_t count = params.tensors.size();
  for (const auto& [name, v] : params.tensors) {
    count += optimizer.m.count(name) + optimizer.v.count(name);
  }
  w.put<uint32_t>(static_cast<uint32_t>(count));
  for (const auto& [name, v] : params.tensors) w.tensor(name, v->requires_grad, v->rows, v->cols, v->value);
  for (const auto& [name, v] : params.tensors) {
    if (auto it = optimizer.m.find(name); it != optimizer.m.end()) {
      w.tensor("adam.m/" + name, false, v->rows, v->cols, it->second);
    }
    if (auto it = optimizer.v.find(name); it != optimizer.v.end()) {
      w.tensor("adam.v/" + name, false, v->rows, v->cols, it->second);
    }
  }
  nlohmann::ordered_json trailer;
  trailer["spec"] = nlohmann::json::parse(params.spec.to_json());
  trailer["step"] = step;
  trailer["optimizer_step"] = optimizer.t;
  trailer["vocab_hash"] = text::hex64(vocab_hash);
  w.str(trailer.dump());
  w.put<uint64_t>(vocab_hash);
  w.put<uint64_t>(step);

  // Write-then-rename so a crash never leaves a half-written checkpoint behind.
  auto tmp = path;
  tmp += ".tmp";
  text::write_file(tmp, w.data());
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot move checkpoint into place at " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<ModelSpec>& expect_spec,
                           std::optional<uint64_t> expect_vocab_hash) {
  Reader r(text::read_file(path), path.string());
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw Error(ErrorCode::BadMagic, path.string());
  const auto version = r.get<uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::IncompatibleSpec, "checkpoint version " + std::to_string(version));
  }
  const auto count = r.get<uint32_t>();
  std::vector<RawTensor> raw(count);
  for (auto& t : raw) {
    t.name = r.str();
    if (r.get<uint8_t>() != kDtypeF64) throw Error(ErrorCode::IncompatibleSpec, "unsupported dtype for " + t.name);
    t.trainable = (r.get<uint8_t>() & 1) != 0;
    const auto ndim = r.get<uint32_t>();
    if (ndim != 2) throw Error(ErrorCode::IncompatibleSpec, "tensor " + t.name + " has rank " + std::to_string(ndim));
    t.rows = r.get<uint64_t>();
    t.cols = r.get<uint64_t>();
    if (t.cols != 0 && t.rows > r.remaining() / sizeof(double) / t.cols) {
      throw Error(ErrorCode::TruncatedFile, path.string());
    }
    t.data.resize(t.rows * t.cols);
    r.bytes(t.data.data(), t.data.size() * sizeof(double));
  }
  Checkpoint ck;
  ModelSpec spec;
  try {
    const auto trailer = nlohmann::json::parse(r.str());
    ck.optimizer.t = trailer.at("optimizer_step").get<uint64_t>();
    spec = ModelSpec::from_json(trailer.at("spec").dump());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IncompatibleSpec, path.string() + ": bad trailer: " + e.what());
  }
  ck.vocab_hash = r.get<uint64_t>();
  ck.step = r.get<uint64_t>();

  if (expect_spec && !(*expect_spec == spec)) {
    throw Error(ErrorCode::IncompatibleSpec, "checkpoint spec " + spec.to_json() + " differs from " +
                                                 expect_spec->to_json());
  }
  if (expect_vocab_hash && *expect_vocab_hash != ck.vocab_hash) {
    throw Error(ErrorCode::IncompatibleSpec, "checkpoint vocabulary hash " + text::hex64(ck.vocab_hash) +
                                                 " differs from " + text::hex64(*expect_vocab_hash));
  }

  // Validate names and shapes against a freshly built layout.
  Parameters layout = init_model(spec, 0);
  ck.params.spec = spec;
  for (const auto& [name, v] : layout.tensors) {
    const RawTensor* found = nullptr;
    for (const auto& t : raw) {
      if (t.name == name) found = &t;
    }
    if (!found || found->rows != v->rows || found->cols != v->cols) {
      throw Error(ErrorCode::IncompatibleSpec, "checkpoint tensor " + name + " missing or misshapen");
    }
    ck.params.tensors.emplace_back(name, ag::leaf(v->rows, v->cols, found->data, found->trainable));
  }
  for (auto& t : raw) {
    if (t.name.rfind("adam.m/", 0) == 0) ck.optimizer.m[t.name.substr(7)] = std::move(t.data);
    if (t.name.rfind("adam.v/", 0) == 0) ck.optimizer.v[t.name.substr(7)] = std::move(t.data);
  }
  return ck;
}

}  // namespace mmh
