#include "pkground/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "http_util.hpp"
#include "pkground/error.hpp"
#include "pkground/tabular_lm.hpp"

namespace pkground {

namespace {

constexpr double kMassTolerance = 1e-6;
// Cumulative sums of probabilities such as 0.6 + 0.3 land a few ulps short of the
// decimal value; the nucleus cut-off allows for that.
constexpr double kNucleusSlack = 1e-12;

bool lexicographically_less(const TokenSequence& a, const TokenSequence& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

struct Ranked {
  BeamHypothesis hypothesis;
  double key;
};

bool ranks_before(const Ranked& a, const Ranked& b) {
  if (a.key != b.key) return a.key > b.key;
  return lexicographically_less(a.hypothesis.tokens, b.hypothesis.tokens);
}

void check_context(const LanguageModel& lm, std::span<const TokenId> context) {
  if (context.size() > lm.max_context_length()) {
    throw DataError(lm.identity() + ": context of " + std::to_string(context.size()) +
                    " tokens exceeds the backend limit of " + std::to_string(lm.max_context_length()));
  }
}

}  // namespace

std::string to_string(DecodeStrategy strategy) {
  return strategy == DecodeStrategy::beam ? "beam" : "nucleus";
}

DecodeStrategy parse_decode_strategy(const std::string& text) {
  if (text == "beam") return DecodeStrategy::beam;
  if (text == "nucleus") return DecodeStrategy::nucleus;
  throw UsageError("unknown decoding strategy '" + text + "' (beam, nucleus)");
}

void DecodeConfig::validate() const {
  if (beam_size < 1) throw UsageError("beam size must be >= 1");
  if (min_length < 1) throw UsageError("minimum length must be >= 1");
  if (max_length < min_length) {
    throw UsageError("maximum length " + std::to_string(max_length) + " is below minimum length " +
                     std::to_string(min_length));
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw UsageError("alpha must be a finite value >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw UsageError("top-p must be in (0,1]");
}

DecodeConfig DecodeConfig::ours() { return DecodeConfig{}; }

DecodeConfig DecodeConfig::baseline() {
  DecodeConfig config;
  config.strategy = DecodeStrategy::nucleus;
  config.min_length = 1;
  config.max_length = 20;
  config.alpha = 0.0;
  return config;
}

nlohmann::ordered_json to_json(const DecodeConfig& config) {
  return {{"strategy", to_string(config.strategy)},
          {"beam_size", config.beam_size},
          {"min_length", config.min_length},
          {"max_length", config.max_length},
          {"alpha", config.alpha},
          {"top_p", config.top_p},
          {"seed", config.seed},
          {"normalize_during_pruning", config.normalize_during_pruning}};
}

DecodeConfig decode_config_from_json(const nlohmann::json& j, DecodeConfig base) {
  if (!j.is_object()) throw UsageError("decode config must be an object");
  auto positive = [](const nlohmann::json& value, const std::string& key) -> std::size_t {
    if (!value.is_number_integer() || value.get<std::int64_t>() < 0) {
      throw UsageError("decode config '" + key + "' must be a non-negative integer");
    }
    return value.get<std::size_t>();
  };
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "strategy") {
        base.strategy = parse_decode_strategy(value.get<std::string>());
      } else if (key == "beam_size") {
        base.beam_size = positive(value, key);
      } else if (key == "min_length") {
        base.min_length = positive(value, key);
      } else if (key == "max_length") {
        base.max_length = positive(value, key);
      } else if (key == "alpha") {
        base.alpha = value.get<double>();
      } else if (key == "top_p") {
        base.top_p = value.get<double>();
      } else if (key == "seed") {
        base.seed = value.get<std::uint64_t>();
      } else if (key == "normalize_during_pruning") {
        base.normalize_during_pruning = value.get<bool>();
      } else {
        throw UsageError("unknown decode config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("decode config: ") + e.what());
  }
  base.validate();
  return base;
}

double normalized_score(const BeamHypothesis& hypothesis, double alpha) {
  return normalized_score(hypothesis.logprob_sum, hypothesis.tokens.size(), alpha);
}

LogProbs checked_logprobs(const LanguageModel& lm, std::span<const TokenId> context,
                          std::span<const TokenId> generated) {
  LogProbs logprobs = lm.next_logprobs(context, generated);
  if (static_cast<std::size_t>(logprobs.size()) != lm.vocab_size()) {
    throw DataError(lm.identity() + ": distribution has " + std::to_string(logprobs.size()) +
                    " entries for a vocabulary of " + std::to_string(lm.vocab_size()));
  }
  double mass = 0.0;
  for (Eigen::Index i = 0; i < logprobs.size(); ++i) {
    const double value = logprobs(i);
    if (std::isnan(value) || value > 0.0) {
      throw DataError(lm.identity() + ": invalid log-probability " + std::to_string(value) +
                      " for token " + std::to_string(i));
    }
    if (std::isfinite(value)) mass += std::exp(value);
  }
  const bool valid = lm.truncated_distribution()
                         ? (mass > 0.0 && mass <= 1.0 + kMassTolerance)
                         : std::abs(mass - 1.0) <= kMassTolerance;
  if (!valid) {
    throw DataError(lm.identity() + ": next-token distribution has mass " + std::to_string(mass));
  }
  return logprobs;
}

DecodeResult beam_search(const LanguageModel& lm, std::span<const TokenId> context,
                         const DecodeConfig& config) {
  config.validate();
  check_context(lm, context);
  const TokenId eos = lm.eos_token();
  const auto vocab = static_cast<TokenId>(lm.vocab_size());
  const double alpha = config.alpha;
  const double widest_norm = length_norm(config.max_length, alpha);

  auto finished_key = [&](const BeamHypothesis& h) { return normalized_score(h, alpha); };

  std::vector<BeamHypothesis> live(1);
  std::vector<Ranked> finished;
  std::vector<Ranked> candidates;
  std::size_t steps = 0;

  while (!live.empty()) {
    ++steps;
    candidates.clear();
    for (const auto& hypothesis : live) {
      const LogProbs logprobs = checked_logprobs(lm, context, hypothesis.tokens);
      const bool eos_allowed = hypothesis.tokens.size() + 1 >= config.min_length;
      for (TokenId token = 0; token < vocab; ++token) {
        const double logprob = logprobs(token);
        if (!std::isfinite(logprob)) continue;
        if (token == eos && !eos_allowed) continue;
        BeamHypothesis next{hypothesis.tokens, hypothesis.logprob_sum + logprob, false};
        next.tokens.push_back(token);
        const double key = config.normalize_during_pruning ? finished_key(next) : next.logprob_sum;
        candidates.push_back({std::move(next), key});
      }
    }

    const std::size_t keep = std::min(config.beam_size, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), ranks_before);

    live.clear();
    for (std::size_t k = 0; k < keep; ++k) {
      auto& hypothesis = candidates[k].hypothesis;
      if (hypothesis.tokens.back() == eos || hypothesis.tokens.size() >= config.max_length) {
        hypothesis.finished = true;
        const double key = finished_key(hypothesis);
        finished.push_back({std::move(hypothesis), key});
      } else {
        live.push_back(std::move(hypothesis));
      }
    }
    std::sort(finished.begin(), finished.end(), ranks_before);
    if (finished.size() > config.beam_size) finished.resize(config.beam_size);

    // Log-probabilities are <= 0, so a live hypothesis can at best keep its current sum,
    // and the largest length norm it can reach is the one at max_length.
    if (finished.size() >= config.beam_size && !live.empty()) {
      const double worst_kept = finished.back().key;
      const bool hopeless = std::all_of(live.begin(), live.end(), [&](const BeamHypothesis& h) {
        return h.logprob_sum / widest_norm < worst_kept;
      });
      if (hopeless) break;
    }
  }

  if (finished.empty()) {
    throw DataError(lm.identity() + ": no hypothesis satisfies the length constraints [" +
                    std::to_string(config.min_length) + ", " + std::to_string(config.max_length) + "]");
  }
  const auto& best = finished.front();
  return {best.hypothesis.tokens, best.key, best.hypothesis.logprob_sum, steps};
}

std::vector<NucleusEntry> nucleus(const Eigen::VectorXd& probabilities, double top_p) {
  std::vector<NucleusEntry> order;
  for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
    if (probabilities(i) > 0.0) order.push_back({static_cast<TokenId>(i), probabilities(i)});
  }
  std::sort(order.begin(), order.end(), [](const NucleusEntry& a, const NucleusEntry& b) {
    if (a.probability != b.probability) return a.probability > b.probability;
    return a.token < b.token;
  });

  double cumulative = 0.0;
  std::size_t size = order.size();
  for (std::size_t i = 0; i < order.size(); ++i) {
    cumulative += order[i].probability;
    if (cumulative + kNucleusSlack >= top_p) {
      size = i + 1;
      break;
    }
  }
  order.resize(size);

  double mass = 0.0;
  for (const auto& entry : order) mass += entry.probability;
  for (auto& entry : order) entry.probability /= mass;
  return order;
}

double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

TokenId draw_from_nucleus(std::span<const NucleusEntry> entries, std::mt19937_64& rng) {
  if (entries.empty()) throw DataError("cannot sample from an empty nucleus");
  const double u = uniform_unit(rng);
  double cumulative = 0.0;
  for (const auto& entry : entries) {
    cumulative += entry.probability;
    if (u < cumulative) return entry.token;
  }
  return entries.back().token;
}

DecodeResult nucleus_sample(const LanguageModel& lm, std::span<const TokenId> context,
                            const DecodeConfig& config) {
  config.validate();
  check_context(lm, context);
  const TokenId eos = lm.eos_token();
  std::mt19937_64 rng(config.seed);

  DecodeResult result;
  while (result.tokens.size() < config.max_length) {
    ++result.steps_taken;
    const LogProbs logprobs = checked_logprobs(lm, context, result.tokens);
    Eigen::VectorXd probabilities = logprobs.array().exp();
    if (result.tokens.size() + 1 < config.min_length) probabilities(eos) = 0.0;
    const double mass = probabilities.sum();
    if (!(mass > 0.0)) {
      throw DataError(lm.identity() + ": no admissible token at step " +
                      std::to_string(result.steps_taken));
    }
    probabilities /= mass;

    const auto entries = nucleus(probabilities, config.top_p);
    const TokenId token = draw_from_nucleus(entries, rng);
    result.raw_logprob += logprobs(token);
    result.tokens.push_back(token);
    if (token == eos) break;
  }
  result.normalized_score = normalized_score(result.raw_logprob, result.tokens.size(), config.alpha);
  return result;
}

DecodeResult decode(const LanguageModel& lm, std::span<const TokenId> context,
                    const DecodeConfig& config) {
  return config.strategy == DecodeStrategy::beam ? beam_search(lm, context, config)
                                                 : nucleus_sample(lm, context, config);
}

std::unique_ptr<LanguageModel> make_language_model(const std::string& spec,
                                                   const HttpLanguageModelOptions& options) {
  if (spec.starts_with("tabular:")) {
    auto lm = std::make_unique<TabularLanguageModel>(load_tabular_lm(spec.substr(8)));
    return lm;
  }
  if (const auto url = detail::remote_url(spec); !url.empty()) return make_http_lm(url, options);
  throw UsageError("unknown language model '" + spec + "' (expected tabular:<path> or http:<url>)");
}

}  // namespace pkground
