#include "pkground/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "pkground/error.hpp"

namespace pkground {

namespace {

constexpr std::string_view kSplitPunctuation = ".,!?;:\"'()";

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& tokens, std::size_t order) {
  std::map<Ngram, std::size_t> counts;
  if (tokens.size() < order) return counts;
  for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
    ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + order))];
  }
  return counts;
}

}  // namespace

std::vector<std::string> tokenize_eval(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (const char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (kSplitPunctuation.find(raw) != std::string_view::npos) {
      flush();
      tokens.emplace_back(1, raw);
    } else {
      current += static_cast<char>(std::tolower(c));
    }
  }
  flush();
  return tokens;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> previous(b.size() + 1, 0);
  std::vector<std::size_t> current(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      current[j] = a[i - 1] == b[j - 1] ? previous[j - 1] + 1 : std::max(previous[j], current[j - 1]);
    }
    std::swap(previous, current);
  }
  return previous[b.size()];
}

RougeScore rouge_l(std::string_view hypothesis, std::string_view reference) {
  const auto ref = tokenize_eval(reference);
  if (ref.empty()) throw DataError("ROUGE-L: empty reference");
  const auto hyp = tokenize_eval(hypothesis);
  if (hyp.empty()) return {};
  const auto lcs = static_cast<double>(lcs_length(hyp, ref));
  RougeScore score;
  score.precision = lcs / static_cast<double>(hyp.size());
  score.recall = lcs / static_cast<double>(ref.size());
  const double denominator = score.precision + score.recall;
  score.f1 = denominator > 0.0 ? 2.0 * score.precision * score.recall / denominator : 0.0;
  return score;
}

RougeScore rouge_l_corpus(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw DataError("ROUGE-L: empty corpus");
  RougeScore mean;
  for (const auto& pair : pairs) {
    const auto score = rouge_l(pair.hypothesis, pair.reference);
    mean.precision += score.precision;
    mean.recall += score.recall;
    mean.f1 += score.f1;
  }
  const auto count = static_cast<double>(pairs.size());
  mean.precision /= count;
  mean.recall /= count;
  mean.f1 /= count;
  return mean;
}

double bleu_corpus(std::span<const EvalPair> pairs, std::size_t max_order) {
  if (pairs.empty()) throw DataError("BLEU: empty corpus");
  if (max_order == 0) throw UsageError("BLEU: max order must be >= 1");

  std::vector<std::size_t> matches(max_order, 0);
  std::vector<std::size_t> totals(max_order, 0);
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;

  for (const auto& pair : pairs) {
    const auto hyp = tokenize_eval(pair.hypothesis);
    const auto ref = tokenize_eval(pair.reference);
    hypothesis_length += hyp.size();
    reference_length += ref.size();
    for (std::size_t order = 1; order <= max_order; ++order) {
      const auto hyp_counts = ngram_counts(hyp, order);
      const auto ref_counts = ngram_counts(ref, order);
      for (const auto& [ngram, count] : hyp_counts) {
        totals[order - 1] += count;
        auto it = ref_counts.find(ngram);
        if (it != ref_counts.end()) matches[order - 1] += std::min(count, it->second);
      }
    }
  }

  if (hypothesis_length == 0) return 0.0;
  double log_precision = 0.0;
  for (std::size_t n = 0; n < max_order; ++n) {
    if (matches[n] == 0 || totals[n] == 0) return 0.0;
    log_precision += std::log(static_cast<double>(matches[n]) / static_cast<double>(totals[n]));
  }
  const double c = static_cast<double>(hypothesis_length);
  const double r = static_cast<double>(reference_length);
  const double brevity = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return 100.0 * brevity * std::exp(log_precision / static_cast<double>(max_order));
}

}  // namespace pkground
