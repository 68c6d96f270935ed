#include "oracles.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>

namespace mmh::testing {

namespace {

struct Stats {
  std::vector<size_t> matches, hyp_total, ref_total;
};

template <class T>
size_t occurrences(const std::vector<T>& seq, size_t n, size_t at, const std::vector<T>& in) {
  size_t c = 0;
  for (size_t j = 0; j + n <= in.size(); ++j) {
    bool eq = true;
    for (size_t k = 0; k < n && eq; ++k) eq = seq[at + k] == in[j + k];
    c += eq;
  }
  return c;
}

// Clipped matches counted position by position; only the first occurrence of
// each n-gram contributes.
template <class T>
size_t clipped(const std::vector<T>& h, const std::vector<T>& r, size_t n) {
  size_t total = 0;
  for (size_t i = 0; i + n <= h.size(); ++i) {
    bool first = true;
    for (size_t j = 0; j < i && first; ++j) {
      bool eq = true;
      for (size_t k = 0; k < n && eq; ++k) eq = h[i + k] == h[j + k];
      if (eq) first = false;
    }
    if (!first) continue;
    total += std::min(occurrences(h, n, i, h), occurrences(h, n, i, r));
  }
  return total;
}

template <class T>
Stats collect(const std::vector<std::vector<T>>& hs, const std::vector<std::vector<T>>& rs, size_t order) {
  Stats s{std::vector<size_t>(order), std::vector<size_t>(order), std::vector<size_t>(order)};
  for (size_t i = 0; i < hs.size(); ++i) {
    for (size_t n = 1; n <= order; ++n) {
      s.matches[n - 1] += clipped(hs[i], rs[i], n);
      if (hs[i].size() >= n) s.hyp_total[n - 1] += hs[i].size() - n + 1;
      if (rs[i].size() >= n) s.ref_total[n - 1] += rs[i].size() - n + 1;
    }
  }
  return s;
}

}  // namespace

std::vector<std::string> oracle_words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u) || std::ispunct(u)) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
      if (std::ispunct(u)) out.emplace_back(1, c);
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

double oracle_bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  std::vector<std::vector<std::string>> h, r;
  size_t hl = 0, rl = 0;
  for (size_t i = 0; i < hyps.size(); ++i) {
    h.push_back(oracle_words(hyps[i]));
    r.push_back(oracle_words(refs[i]));
    hl += h.back().size();
    rl += r.back().size();
  }
  if (hl == 0) return 0.0;
  const Stats s = collect(h, r, 4);
  size_t order = 0;
  while (order < 4 && s.hyp_total[order] > 0) ++order;
  double log_p = 0.0;
  int zeros = 0;
  for (size_t n = 0; n < order; ++n) {
    const double total = static_cast<double>(s.hyp_total[n]);
    if (s.matches[n] == 0) {
      ++zeros;
      log_p += std::log(1.0 / (std::pow(2.0, zeros) * total));
    } else {
      log_p += std::log(static_cast<double>(s.matches[n]) / total);
    }
  }
  const double bp = hl < rl ? std::exp(1.0 - static_cast<double>(rl) / static_cast<double>(hl)) : 1.0;
  return 100.0 * bp * std::exp(log_p / static_cast<double>(order));
}

double oracle_chrf(const std::vector<std::string>& hyps, const std::vector<std::string>& refs, int n, double beta) {
  auto strip = [](const std::string& s) {
    std::vector<char> out;
    for (char c : s) {
      if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
    }
    return out;
  };
  std::vector<std::vector<char>> h, r;
  for (size_t i = 0; i < hyps.size(); ++i) {
    h.push_back(strip(hyps[i]));
    r.push_back(strip(refs[i]));
  }
  const Stats s = collect(h, r, static_cast<size_t>(n));
  double p = 0.0, rec = 0.0;
  int used = 0;
  for (int k = 0; k < n; ++k) {
    if (s.hyp_total[k] == 0 || s.ref_total[k] == 0) continue;
    p += static_cast<double>(s.matches[k]) / static_cast<double>(s.hyp_total[k]);
    rec += static_cast<double>(s.matches[k]) / static_cast<double>(s.ref_total[k]);
    ++used;
  }
  if (used == 0) return 0.0;
  p /= used;
  rec /= used;
  if (p == 0.0 && rec == 0.0) return 0.0;
  const double b2 = beta * beta;
  return 100.0 * (1.0 + b2) * p * rec / (b2 * p + rec);
}

std::vector<size_t> oracle_clip_frames(size_t frames, uint32_t fps2, int64_t start_ms, int64_t end_ms) {
  std::vector<size_t> out;
  for (size_t i = 0; i < frames; ++i) {
    // frame i spans [i * 2000 / fps2, (i + 1) * 2000 / fps2) milliseconds
    const auto begin = static_cast<int64_t>(i) * 2000;
    const auto end = static_cast<int64_t>(i + 1) * 2000;
    const bool after_start = end > start_ms * fps2;
    const bool before_end = end_ms == 0 || begin < end_ms * fps2;
    if (after_start && before_end) out.push_back(i);
  }
  return out;
}

std::optional<std::vector<OracleSegment>> oracle_parse_references(const std::string& s) {
  static const std::regex escape(R"(\\[<\\])");
  static const std::regex ref(R"(<signal:([^#>]+)(?:#([0-9]+)-([0-9]+))?>)");
  static const std::regex opener("<signal:");
  std::vector<OracleSegment> out;
  auto literal = [&](char c) {
    if (out.empty() || out.back().signal) out.push_back({});
    out.back().text.push_back(c);
  };
  auto it = s.cbegin();
  const auto flags = std::regex_constants::match_continuous;
  while (it != s.cend()) {
    std::smatch m;
    if (std::regex_search(it, s.cend(), m, escape, flags)) {
      literal(m.str(0)[1]);
    } else if (std::regex_search(it, s.cend(), m, ref, flags)) {
      OracleSegment seg{true, m.str(1), 0, 0};
      if (m[2].matched) {
        try {
          seg.start_ms = std::stoll(m.str(2));
          seg.end_ms = std::stoll(m.str(3));
        } catch (const std::out_of_range&) {
          return std::nullopt;
        }
        if (seg.end_ms != 0 && seg.end_ms <= seg.start_ms) return std::nullopt;
      }
      out.push_back(seg);
    } else if (std::regex_search(it, s.cend(), m, opener, flags)) {
      return std::nullopt;
    } else {
      literal(*it);
      ++it;
      continue;
    }
    it += m.length(0);
  }
  return out;
}

}  // namespace mmh::testing
