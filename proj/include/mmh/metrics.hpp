#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mmh {

struct EvalResult {
  std::string metric_name;
  double score = 0.0;
  size_t n_samples = 0;
  std::map<std::string, double> details;
};

/// Corpus BLEU on 0..100 over pre-tokenized text (whitespace plus punctuation
/// splits). n-grams 1..4 with clipped counts; a zero precision is replaced by
/// 1 / (2^k * total) for the k-th such order; orders with no hypothesis
/// n-grams are left out of the geometric mean. Throws LengthMismatch, EmptyInput.
EvalResult corpus_bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references);

/// Character n-gram F-score on 0..100 with whitespace removed. Statistics are
/// summed over the corpus; precision and recall are averaged over the orders
/// 1..n present in both sides, then combined as F_beta.
EvalResult chrf(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references, int n = 6,
                double beta = 2.0);

/// exp(mean_token_nll). Throws NonFinite for negative or non-finite input.
double perplexity(double mean_token_nll);

/// "L [i]\t<label>\nP [i]\t<prediction>\n\n" per sample. Newlines inside
/// strings are written as spaces. Throws LengthMismatch.
void write_predictions(const std::vector<std::string>& labels, const std::vector<std::string>& predictions,
                       const std::filesystem::path& path);

struct PredictionDump {
  std::vector<std::string> labels;
  std::vector<std::string> predictions;
};

/// Throws MalformedRow on anything write_predictions would not produce.
PredictionDump read_predictions(const std::filesystem::path& path);

}  // namespace mmh
