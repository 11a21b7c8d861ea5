#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace pkground {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;
/// Natural-log probabilities over the vocabulary; -inf marks impossible tokens.
using LogProbs = Eigen::VectorXd;

/// Next-token distribution contract. Finite entries exponentiate and sum to 1
/// (or to at most 1 when `truncated_distribution()` is set). Implementations must
/// tolerate concurrent queries.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual std::string identity() const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual TokenId eos_token() const = 0;
  virtual std::size_t max_context_length() const { return std::numeric_limits<std::size_t>::max(); }
  /// True when the backend only reports the head of the distribution.
  virtual bool truncated_distribution() const { return false; }

  virtual LogProbs next_logprobs(std::span<const TokenId> context,
                                 std::span<const TokenId> generated) const = 0;

  virtual TokenSequence tokenize(const std::string& text) const = 0;
  /// EOS is dropped from the rendered text.
  virtual std::string detokenize(std::span<const TokenId> tokens) const = 0;
};

enum class DecodeStrategy { beam, nucleus };

std::string to_string(DecodeStrategy strategy);
DecodeStrategy parse_decode_strategy(const std::string& text);

struct DecodeConfig {
  DecodeStrategy strategy = DecodeStrategy::beam;
  std::size_t beam_size = 10;
  std::size_t min_length = 5;
  std::size_t max_length = 80;
  double alpha = 1.0;
  double top_p = 0.9;
  std::uint64_t seed = 0;
  /// Rank expansions by normalized score instead of the raw log-probability sum.
  bool normalize_during_pruning = false;

  /// Throws UsageError on out-of-range values.
  void validate() const;

  /// beam 10, lengths [5, 80], alpha 1.0
  static DecodeConfig ours();
  /// nucleus sampling, lengths [1, 20], alpha 0.0
  static DecodeConfig baseline();
};

nlohmann::ordered_json to_json(const DecodeConfig& config);
/// Missing keys keep the values from `base`; unknown keys are rejected.
DecodeConfig decode_config_from_json(const nlohmann::json& j, DecodeConfig base = {});

struct BeamHypothesis {
  TokenSequence tokens;  ///< generated tokens, including a terminal EOS once finished
  double logprob_sum = 0.0;
  bool finished = false;
};

struct DecodeResult {
  TokenSequence tokens;
  double normalized_score = 0.0;
  double raw_logprob = 0.0;
  std::size_t steps_taken = 0;
};

/// (5 + |Y|)^alpha / (5 + 1)^alpha
template <typename Scalar>
Scalar length_norm(std::size_t length, Scalar alpha) {
  using std::pow;
  return pow((Scalar(5) + Scalar(length)) / Scalar(6), alpha);
}

template <typename Scalar>
Scalar normalized_score(Scalar logprob_sum, std::size_t length, Scalar alpha) {
  return logprob_sum / length_norm(length, alpha);
}

double normalized_score(const BeamHypothesis& hypothesis, double alpha);

/// Queries the model and verifies the distribution. Throws DataError when the
/// finite mass is not 1 within 1e-6 (at most 1 for truncated backends).
LogProbs checked_logprobs(const LanguageModel& lm, std::span<const TokenId> context,
                          std::span<const TokenId> generated);

DecodeResult beam_search(const LanguageModel& lm, std::span<const TokenId> context,
                         const DecodeConfig& config);

DecodeResult nucleus_sample(const LanguageModel& lm, std::span<const TokenId> context,
                            const DecodeConfig& config);

DecodeResult decode(const LanguageModel& lm, std::span<const TokenId> context,
                    const DecodeConfig& config);

struct NucleusEntry {
  TokenId token;
  double probability;  ///< renormalized within the nucleus
};

/// Smallest probability-sorted prefix (ties by token id) whose mass reaches `top_p`,
/// renormalized. Zero-probability tokens never enter the nucleus.
std::vector<NucleusEntry> nucleus(const Eigen::VectorXd& probabilities, double top_p);

/// Uniform double in [0,1) with 53 random bits; stable across standard libraries.
double uniform_unit(std::mt19937_64& rng);

TokenId draw_from_nucleus(std::span<const NucleusEntry> entries, std::mt19937_64& rng);

struct HttpLanguageModelOptions {
  int top_k = 50;
  /// Negative values mean "ask /healthz".
  long eos_token = -1;
  long vocab_size = -1;
  std::size_t max_context = 1024;
  int max_attempts = 3;
  double timeout_seconds = 60.0;
};

/// Client for `/v1/logits`, `/v1/tokenize` and `/v1/detokenize`. Tokens missing from a
/// top-k response are treated as impossible.
std::unique_ptr<LanguageModel> make_http_lm(const std::string& base_url,
                                            const HttpLanguageModelOptions& options = {});

/// "tabular:<path>" or "http:<url>".
std::unique_ptr<LanguageModel> make_language_model(const std::string& spec,
                                                   const HttpLanguageModelOptions& options = {});

}  // namespace pkground
