#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pkground {

struct EvalPair {
  std::string hypothesis;
  std::string reference;
};

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Lowercase, split off `.,!?;:"'()` as standalone tokens, split on whitespace.
std::vector<std::string> tokenize_eval(std::string_view text);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// ROUGE-L with the balanced F-measure. Throws DataError on an empty reference.
RougeScore rouge_l(std::string_view hypothesis, std::string_view reference);

/// Arithmetic mean of the per-pair ROUGE-L scores.
RougeScore rouge_l_corpus(std::span<const EvalPair> pairs);

/// Unsmoothed corpus BLEU in [0,100] with clipped n-gram counts and brevity penalty.
double bleu_corpus(std::span<const EvalPair> pairs, std::size_t max_order = 4);

}  // namespace pkground
