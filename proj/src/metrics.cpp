#include "mmh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "mmh/error.hpp"
#include "mmh/text.hpp"

namespace mmh {

namespace {

void check_pair(const std::vector<std::string>& h, const std::vector<std::string>& r) {
  if (h.size() != r.size()) {
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(h.size()) + " hypotheses vs " + std::to_string(r.size()) + " references");
  }
  if (h.empty()) throw Error(ErrorCode::EmptyInput, "no sentence pairs");
}

template <class Seq>
std::map<Seq, size_t> ngram_counts(const std::vector<typename Seq::value_type>& items, size_t n) {
  std::map<Seq, size_t> counts;
  if (items.size() < n) return counts;
  for (size_t i = 0; i + n <= items.size(); ++i) ++counts[Seq(items.begin() + i, items.begin() + i + n)];
  return counts;
}

template <class Seq>
size_t clipped_matches(const std::map<Seq, size_t>& hyp, const std::map<Seq, size_t>& ref) {
  size_t m = 0;
  for (const auto& [g, c] : hyp) {
    auto it = ref.find(g);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

}  // namespace

EvalResult corpus_bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references) {
  check_pair(hypotheses, references);
  constexpr size_t kOrder = 4;
  size_t matches[kOrder] = {}, totals[kOrder] = {};
  size_t sys_len = 0, ref_len = 0;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    const auto h = text::pretokenize(hypotheses[i]);
    const auto r = text::pretokenize(references[i]);
    sys_len += h.size();
    ref_len += r.size();
    for (size_t n = 1; n <= kOrder; ++n) {
      const auto hc = ngram_counts<std::vector<std::string>>(h, n);
      const auto rc = ngram_counts<std::vector<std::string>>(r, n);
      matches[n - 1] += clipped_matches(hc, rc);
      totals[n - 1] += h.size() >= n ? h.size() - n + 1 : 0;
    }
  }
  EvalResult res{"bleu", 0.0, hypotheses.size(), {}};
  res.details["sys_len"] = static_cast<double>(sys_len);
  res.details["ref_len"] = static_cast<double>(ref_len);
  if (sys_len == 0) return res;

  size_t order = 0;
  for (size_t n = 0; n < kOrder; ++n) {
    if (totals[n] > 0) order = n + 1;
  }
  double smooth = 1.0, log_sum = 0.0;
  for (size_t n = 0; n < order; ++n) {
    double p;
    if (matches[n] == 0) {
      smooth *= 2.0;
      p = 1.0 / (smooth * static_cast<double>(totals[n]));
    } else {
      p = static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
    }
    res.details["precision_" + std::to_string(n + 1)] = 100.0 * p;
    log_sum += std::log(p);
  }
  const double bp =
      sys_len < ref_len ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(sys_len)) : 1.0;
  res.details["brevity_penalty"] = bp;
  res.score = 100.0 * bp * std::exp(log_sum / static_cast<double>(order));
  return res;
}

EvalResult chrf(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references, int n,
                double beta) {
  check_pair(hypotheses, references);
  if (n < 1) throw Error(ErrorCode::InvalidSpec, "chrF order must be >= 1");
  const size_t order = static_cast<size_t>(n);
  std::vector<size_t> matches(order), hyp_tot(order), ref_tot(order);
  auto chars = [](const std::string& s) {
    std::vector<char32_t> out;
    for (char32_t c : text::decode_utf8(s)) {
      if (!text::is_space(c)) out.push_back(c);
    }
    return out;
  };
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    const auto h = chars(hypotheses[i]);
    const auto r = chars(references[i]);
    for (size_t k = 1; k <= order; ++k) {
      const auto hc = ngram_counts<std::u32string>(h, k);
      const auto rc = ngram_counts<std::u32string>(r, k);
      matches[k - 1] += clipped_matches(hc, rc);
      hyp_tot[k - 1] += h.size() >= k ? h.size() - k + 1 : 0;
      ref_tot[k - 1] += r.size() >= k ? r.size() - k + 1 : 0;
    }
  }
  EvalResult res{"chrf", 0.0, hypotheses.size(), {}};
  double p_sum = 0.0, r_sum = 0.0;
  size_t used = 0;
  for (size_t k = 0; k < order; ++k) {
    if (hyp_tot[k] == 0 || ref_tot[k] == 0) continue;
    p_sum += static_cast<double>(matches[k]) / static_cast<double>(hyp_tot[k]);
    r_sum += static_cast<double>(matches[k]) / static_cast<double>(ref_tot[k]);
    ++used;
  }
  if (used == 0) return res;
  const double p = p_sum / static_cast<double>(used);
  const double r = r_sum / static_cast<double>(used);
  res.details["precision"] = 100.0 * p;
  res.details["recall"] = 100.0 * r;
  const double b2 = beta * beta;
  const double denom = b2 * p + r;
  res.score = denom > 0.0 ? 100.0 * (1.0 + b2) * p * r / denom : 0.0;
  return res;
}

double perplexity(double mean_token_nll) {
  if (!std::isfinite(mean_token_nll) || mean_token_nll < 0.0) {
    throw Error(ErrorCode::NonFinite, "mean token NLL must be finite and >= 0, got " + std::to_string(mean_token_nll));
  }
  return std::exp(mean_token_nll);
}

void write_predictions(const std::vector<std::string>& labels, const std::vector<std::string>& predictions,
                       const std::filesystem::path& path) {
  if (labels.size() != predictions.size()) {
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(labels.size()) + " labels vs " + std::to_string(predictions.size()) + " predictions");
  }
  std::string out;
  for (size_t i = 0; i < labels.size(); ++i) {
    const std::string idx = "[" + std::to_string(i) + "]\t";
    out += "L " + idx + one_line(labels[i]) + "\n";
    out += "P " + idx + one_line(predictions[i]) + "\n\n";
  }
  text::write_file(path, out);
}

PredictionDump read_predictions(const std::filesystem::path& path) {
  const std::string content = text::read_file(path);
  PredictionDump dump;
  size_t pos = 0, line_no = 0;
  auto next_line = [&](std::string& line) {
    if (pos >= content.size()) return false;
    const size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) {
      throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no + 1) + " lacks a newline");
    }
    line = content.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    return true;
  };
  auto field = [&](const std::string& line, char tag, size_t i) {
    const std::string prefix = std::string(1, tag) + " [" + std::to_string(i) + "]\t";
    if (line.compare(0, prefix.size(), prefix) != 0) {
      throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": expected '" +
                                               std::string(1, tag) + " [" + std::to_string(i) + "]'");
    }
    return line.substr(prefix.size());
  };
  std::string line;
  for (size_t i = 0; next_line(line); ++i) {
    dump.labels.push_back(field(line, 'L', i));
    if (!next_line(line)) throw Error(ErrorCode::MalformedRow, "missing prediction line");
    dump.predictions.push_back(field(line, 'P', i));
    if (!next_line(line) || !line.empty()) {
      throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": expected a blank separator");
    }
  }
  return dump;
}

}  // namespace mmh
