#include "mmh/metaproc.hpp"

#include <charconv>
#include <exception>

#include "mmh/error.hpp"
#include "mmh/metadata.hpp"

namespace mmh {

namespace {

constexpr std::string_view kOpen = "<signal:";

[[noreturn]] void malformed(size_t offset, const std::string& why) {
  throw Error(ErrorCode::MalformedReference, "offset " + std::to_string(offset) + ": " + why);
}

// Reads a run of decimal digits at text[pos]; pos advances past them.
int64_t read_bound(std::string_view text, size_t& pos, size_t ref_offset) {
  const size_t begin = pos;
  while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
  if (pos == begin) malformed(ref_offset, "expected an integer bound");
  int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data() + begin, text.data() + pos, v);
  if (ec != std::errc() || ptr != text.data() + pos) malformed(ref_offset, "bound out of range");
  return v;
}

void push_text(std::vector<Segment>& out, std::string& buf) {
  if (buf.empty()) return;
  out.emplace_back(TextSegment{std::move(buf)});
  buf.clear();
}

}  // namespace

std::vector<Segment> detect_signals(std::string_view text, const ExtensionRegistry& registry) {
  std::vector<Segment> out;
  std::string buf;
  size_t pos = 0;
  while (pos < text.size()) {
    const char c = text[pos];
    if (c == '\\' && pos + 1 < text.size() && (text[pos + 1] == '<' || text[pos + 1] == '\\')) {
      buf.push_back(text[pos + 1]);
      pos += 2;
      continue;
    }
    if (text.substr(pos, kOpen.size()) != kOpen) {
      buf.push_back(c);
      ++pos;
      continue;
    }
    const size_t ref = pos;
    size_t p = pos + kOpen.size();
    const size_t path_begin = p;
    while (p < text.size() && text[p] != '#' && text[p] != '>') ++p;
    if (p >= text.size()) malformed(ref, "reference is not closed by '>'");
    SignalSegment sig;
    sig.path = std::string(text.substr(path_begin, p - path_begin));
    if (sig.path.empty()) malformed(ref, "empty signal path");
    if (text[p] == '#') {
      ++p;
      sig.start_ms = read_bound(text, p, ref);
      if (p >= text.size() || text[p] != '-') malformed(ref, "expected '-' between bounds");
      ++p;
      sig.end_ms = read_bound(text, p, ref);
      if (p >= text.size() || text[p] != '>') malformed(ref, "reference is not closed by '>'");
      if (sig.end_ms != 0 && sig.end_ms <= sig.start_ms) {
        malformed(ref, "end " + std::to_string(sig.end_ms) + " is not after start " + std::to_string(sig.start_ms));
      }
    }
    sig.kind = registry.lookup_path(sig.path);
    push_text(out, buf);
    out.emplace_back(std::move(sig));
    pos = p + 1;
  }
  push_text(out, buf);
  return out;
}

std::string serialize_segments(const std::vector<Segment>& segments) {
  std::string out;
  for (const auto& seg : segments) {
    if (const auto* t = std::get_if<TextSegment>(&seg)) {
      for (char c : t->content) {
        if (c == '<' || c == '\\') out.push_back('\\');
        out.push_back(c);
      }
    } else {
      const auto& s = std::get<SignalSegment>(seg);
      out += kOpen;
      out += s.path;
      if (s.start_ms != 0 || s.end_ms != 0) out += "#" + std::to_string(s.start_ms) + "-" + std::to_string(s.end_ms);
      out += '>';
    }
  }
  return out;
}

MixedTable parse_mixed_tsv(const std::filesystem::path& path) {
  const auto rows = read_tsv(path, {"encoder_input", "decoder_input", "label"});
  MixedTable t;
  t.source_path = path.string();
  for (const auto& r : rows) t.records.push_back({r[0], r[1], r[2]});
  return t;
}

void write_mixed_tsv(const MixedTable& table, const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : table.records) rows.push_back({r.encoder_input, r.decoder_input, r.label});
  write_tsv(path, {"encoder_input", "decoder_input", "label"}, rows);
}

MixedSample process_mixed(const MixedRecord& record, const Vocabulary& vocab, const ProcessorConfig& config,
                          const std::filesystem::path& base_dir) {
  MixedSample out;
  const auto segments = detect_signals(record.encoder_input, config.extensions);
  for (size_t i = 0; i < segments.size(); ++i) {
    if (const auto* t = std::get_if<TextSegment>(&segments[i])) {
      TokenBlock block{vocab.tokenize(t->content)};
      if (block.ids.empty()) continue;
      out.streams.total_length += block.ids.size();
      out.streams.blocks.emplace_back(std::move(block));
      continue;
    }
    const auto& s = std::get<SignalSegment>(segments[i]);
    if (!s.kind) {
      throw Error(ErrorCode::UnknownModality, "segment " + std::to_string(i) + ": no processor for extension '" +
                                                  std::filesystem::path(s.path).extension().string() + "'");
    }
    std::filesystem::path p{s.path};
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    FeatureBlock block;
    try {
      block.features = signal_features(p, *s.kind, s.start_ms, s.end_ms, config);
    } catch (const Error& e) {
      throw Error(e.code(), "segment " + std::to_string(i) + ": " + e.message());
    }
    out.streams.total_length += block.features.rows;
    out.streams.blocks.emplace_back(std::move(block));
  }
  out.decoder_prompt_tokens = vocab.tokenize(record.decoder_input);
  if (out.decoder_prompt_tokens.empty()) out.decoder_prompt_tokens.push_back(vocab.pad_id());
  if (!record.label.empty()) {
    out.label_tokens = vocab.tokenize(record.label);
    out.label_tokens.push_back(vocab.eos_id());
  }
  return out;
}

std::vector<Placement> assemble_encoder_embedding_plan(const AlignedStreams& streams) {
  std::vector<Placement> plan;
  plan.reserve(streams.total_length);
  for (size_t b = 0; b < streams.blocks.size(); ++b) {
    if (const auto* t = std::get_if<TokenBlock>(&streams.blocks[b])) {
      for (size_t k = 0; k < t->ids.size(); ++k) plan.push_back({Placement::Source::Token, b, k});
    } else {
      const auto& f = std::get<FeatureBlock>(streams.blocks[b]);
      for (size_t k = 0; k < f.features.rows; ++k) plan.push_back({Placement::Source::Feature, b, k});
    }
  }
  return plan;
}

ModelInput to_model_input(const MixedSample& sample, size_t source_index) {
  ModelInput in;
  in.source_index = source_index;
  for (const auto& block : sample.streams.blocks) {
    if (const auto* t = std::get_if<TokenBlock>(&block)) {
      in.layout.push_back({EncoderBlock::Source::Tokens, in.encoder_tokens.size(), t->ids.size()});
      in.encoder_tokens.insert(in.encoder_tokens.end(), t->ids.begin(), t->ids.end());
      continue;
    }
    const Matrix& f = std::get<FeatureBlock>(block).features;
    Matrix& acc = in.encoder_features;
    if (acc.rows == 0) {
      acc.cols = f.cols;
    } else if (acc.cols != f.cols) {
      throw Error(ErrorCode::ShapeMismatch, "signals of widths " + std::to_string(acc.cols) + " and " +
                                                std::to_string(f.cols) + " in one record");
    }
    in.layout.push_back({EncoderBlock::Source::Features, acc.rows, f.rows});
    acc.data.insert(acc.data.end(), f.data.begin(), f.data.end());
    acc.rows += f.rows;
  }
  in.encoder_kind = in.encoder_features.rows > 0 ? EncoderKind::Features : EncoderKind::Tokens;
  in.decoder_prompt_tokens = sample.decoder_prompt_tokens;
  in.label_tokens = sample.label_tokens;
  return in;
}

std::vector<ModelInput> process_mixed_table(const MixedTable& table, const Vocabulary& vocab,
                                            const ProcessorConfig& config) {
  const auto base = std::filesystem::path(table.source_path).parent_path();
  const auto n = static_cast<std::ptrdiff_t>(table.records.size());
  std::vector<ModelInput> out(table.records.size());
  std::vector<std::exception_ptr> errors(table.records.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = to_model_input(process_mixed(table.records[i], vocab, config, base), static_cast<size_t>(i));
    } catch (const Error& e) {
      errors[i] = std::make_exception_ptr(Error(e.code(), "row " + std::to_string(i) + ": " + e.message()));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace mmh
