#include "pkground/tabular_lm.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "pkground/error.hpp"

namespace pkground {

namespace {

constexpr double kMassTolerance = 1e-6;
constexpr const char* kFallbackKey = "*";

LogProbs to_log(const Eigen::VectorXd& probabilities) {
  LogProbs out(probabilities.size());
  for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
    out(i) = probabilities(i) > 0.0 ? std::log(probabilities(i))
                                    : -std::numeric_limits<double>::infinity();
  }
  return out;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& word : words) {
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

Eigen::VectorXd random_row(std::mt19937_64& rng, std::size_t vocab, double zero_probability) {
  Eigen::VectorXd row(static_cast<Eigen::Index>(vocab));
  for (std::size_t t = 0; t < vocab; ++t) {
    const bool zeroed = t != 0 && uniform_unit(rng) < zero_probability;
    row(static_cast<Eigen::Index>(t)) = zeroed ? 0.0 : 0.05 + uniform_unit(rng);
  }
  if (row.tail(row.size() - 1).maxCoeff() <= 0.0) {
    row(1 + static_cast<Eigen::Index>(rng() % (vocab - 1))) = 0.05 + uniform_unit(rng);
  }
  return row / row.sum();
}

}  // namespace

TabularLanguageModel::TabularLanguageModel(std::vector<std::string> vocab, std::string eos,
                                           std::map<std::string, Eigen::VectorXd> transitions)
    : vocab_(std::move(vocab)) {
  if (vocab_.empty()) throw DataError("tabular LM: empty vocabulary");
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (vocab_[i].empty() || vocab_[i].find(' ') != std::string::npos) {
      throw DataError("tabular LM: vocabulary entries must be non-empty and contain no spaces");
    }
    if (!index_.emplace(vocab_[i], static_cast<TokenId>(i)).second) {
      throw DataError("tabular LM: duplicate vocabulary entry '" + vocab_[i] + "'");
    }
  }
  auto eos_it = index_.find(eos);
  if (eos_it == index_.end()) throw DataError("tabular LM: eos '" + eos + "' is not in the vocabulary");
  eos_ = eos_it->second;

  for (auto& [key, probabilities] : transitions) {
    if (static_cast<std::size_t>(probabilities.size()) != vocab_.size()) {
      throw DataError("tabular LM: entry '" + key + "' has the wrong width");
    }
    for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
      if (!(probabilities(i) >= 0.0 && probabilities(i) <= 1.0)) {
        throw DataError("tabular LM: entry '" + key + "' has an invalid probability");
      }
    }
    const double mass = probabilities.sum();
    if (std::abs(mass - 1.0) > kMassTolerance) {
      std::ostringstream message;
      message << "tabular LM: entry '" << key << "' sums to " << mass;
      throw DataError(message.str());
    }
    rows_.emplace(key, Row{probabilities, to_log(probabilities)});
  }
  auto fallback = rows_.find(kFallbackKey);
  if (fallback == rows_.end()) throw DataError("tabular LM: missing \"*\" fallback entry");
  fallback_ = &fallback->second;
}

TabularLanguageModel TabularLanguageModel::from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw DataError("tabular LM: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key != "vocab" && key != "eos" && key != "transitions") {
        throw DataError("tabular LM: unknown key '" + key + "'");
      }
    }
    auto vocab = j.at("vocab").get<std::vector<std::string>>();
    auto eos = j.at("eos").get<std::string>();
    std::map<std::string, TokenId> index;
    for (std::size_t i = 0; i < vocab.size(); ++i) index.emplace(vocab[i], static_cast<TokenId>(i));

    std::map<std::string, Eigen::VectorXd> transitions;
    for (const auto& [key, entry] : j.at("transitions").items()) {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vocab.size()));
      for (const auto& [token, probability] : entry.items()) {
        auto it = index.find(token);
        if (it == index.end()) {
          throw DataError("tabular LM: entry '" + key + "' names unknown token '" + token + "'");
        }
        if (!probability.is_number()) {
          throw DataError("tabular LM: entry '" + key + "' has a non-numeric probability");
        }
        row(it->second) = probability.get<double>();
      }
      transitions.emplace(key, std::move(row));
    }
    return TabularLanguageModel(std::move(vocab), std::move(eos), std::move(transitions));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("tabular LM: ") + e.what());
  }
}

nlohmann::ordered_json TabularLanguageModel::to_json() const {
  nlohmann::ordered_json j;
  j["vocab"] = vocab_;
  j["eos"] = vocab_[static_cast<std::size_t>(eos_)];
  nlohmann::ordered_json transitions = nlohmann::ordered_json::object();
  for (const auto& [key, row] : rows_) {
    nlohmann::ordered_json entry = nlohmann::ordered_json::object();
    for (Eigen::Index i = 0; i < row.probabilities.size(); ++i) {
      if (row.probabilities(i) > 0.0) entry[vocab_[static_cast<std::size_t>(i)]] = row.probabilities(i);
    }
    transitions[key] = std::move(entry);
  }
  j["transitions"] = std::move(transitions);
  return j;
}

std::string TabularLanguageModel::prefix_key(std::span<const TokenId> generated) const {
  std::string key;
  for (const TokenId token : generated) {
    if (token < 0 || static_cast<std::size_t>(token) >= vocab_.size()) {
      throw DataError("tabular LM: token id " + std::to_string(token) + " out of range");
    }
    if (!key.empty()) key += ' ';
    key += vocab_[static_cast<std::size_t>(token)];
  }
  return key;
}

const Eigen::VectorXd& TabularLanguageModel::probabilities_for(std::span<const TokenId> generated) const {
  auto it = rows_.find(prefix_key(generated));
  return it == rows_.end() ? fallback_->probabilities : it->second.probabilities;
}

LogProbs TabularLanguageModel::next_logprobs(std::span<const TokenId> /*context*/,
                                             std::span<const TokenId> generated) const {
  auto it = rows_.find(prefix_key(generated));
  return it == rows_.end() ? fallback_->logprobs : it->second.logprobs;
}

TokenSequence TabularLanguageModel::tokenize(const std::string& text) const {
  TokenSequence tokens;
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    auto it = index_.find(word);
    if (it != index_.end()) tokens.push_back(it->second);
  }
  return tokens;
}

std::string TabularLanguageModel::detokenize(std::span<const TokenId> tokens) const {
  std::string text;
  for (const TokenId token : tokens) {
    if (token == eos_) continue;
    if (token < 0 || static_cast<std::size_t>(token) >= vocab_.size()) {
      throw DataError("tabular LM: token id " + std::to_string(token) + " out of range");
    }
    if (!text.empty()) text += ' ';
    text += vocab_[static_cast<std::size_t>(token)];
  }
  return text;
}

TabularLanguageModel load_tabular_lm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open tabular LM '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + ": malformed JSON: " + e.what());
  }
  auto lm = TabularLanguageModel::from_json(j);
  lm.set_identity("tabular:" + path);
  return lm;
}

void write_tabular_lm(const TabularLanguageModel& lm, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << lm.to_json().dump(1) << '\n';
}

TabularLanguageModel random_tabular_lm(std::uint64_t seed, const RandomLmOptions& options) {
  if (options.vocab_size < 2) throw UsageError("random tabular LM needs EOS plus at least one token");
  std::mt19937_64 rng(seed);
  std::vector<std::string> vocab{"<eos>"};
  for (std::size_t t = 1; t < options.vocab_size; ++t) vocab.push_back("t" + std::to_string(t));

  std::map<std::string, Eigen::VectorXd> transitions;
  std::vector<std::vector<std::string>> frontier{{}};
  for (std::size_t depth = 0; depth < options.depth; ++depth) {
    std::vector<std::vector<std::string>> next;
    for (const auto& prefix : frontier) {
      transitions.emplace(join(prefix), random_row(rng, options.vocab_size, options.zero_probability));
      for (std::size_t t = 1; t < options.vocab_size; ++t) {
        auto longer = prefix;
        longer.push_back(vocab[t]);
        next.push_back(std::move(longer));
      }
    }
    frontier = std::move(next);
  }
  transitions.emplace(kFallbackKey, random_row(rng, options.vocab_size, options.zero_probability));
  TabularLanguageModel lm(std::move(vocab), "<eos>", std::move(transitions));
  lm.set_identity("tabular:random:" + std::to_string(seed));
  return lm;
}

TabularLanguageModel fit_tabular_lm(const std::vector<std::vector<std::string>>& sequences,
                                    const std::vector<std::string>& vocab, const std::string& eos,
                                    std::size_t depth, double smoothing) {
  std::map<std::string, TokenId> index;
  for (std::size_t i = 0; i < vocab.size(); ++i) index.emplace(vocab[i], static_cast<TokenId>(i));
  if (!index.contains(eos)) throw DataError("fit_tabular_lm: eos not in vocabulary");

  const auto width = static_cast<Eigen::Index>(vocab.size());
  std::map<std::string, Eigen::VectorXd> counts;
  Eigen::VectorXd unigram = Eigen::VectorXd::Zero(width);
  auto bump = [&](const std::string& key, TokenId token) {
    auto [it, inserted] = counts.try_emplace(key, Eigen::VectorXd::Zero(width));
    it->second(token) += 1.0;
  };

  for (const auto& sequence : sequences) {
    std::vector<std::string> prefix;
    for (std::size_t position = 0; position <= sequence.size(); ++position) {
      const bool at_end = position == sequence.size();
      const std::string& word = at_end ? eos : sequence[position];
      auto it = index.find(word);
      if (it == index.end()) throw DataError("fit_tabular_lm: '" + word + "' is not in the vocabulary");
      unigram(it->second) += 1.0;
      if (position < depth) bump(join(prefix), it->second);
      prefix.push_back(word);
    }
  }

  std::map<std::string, Eigen::VectorXd> transitions;
  for (auto& [key, row] : counts) {
    Eigen::VectorXd smoothed = row.array() + smoothing;
    transitions.emplace(key, smoothed / smoothed.sum());
  }
  Eigen::VectorXd fallback = unigram.array() + smoothing;
  transitions.emplace(kFallbackKey, fallback / fallback.sum());
  return TabularLanguageModel(vocab, eos, std::move(transitions));
}

}  // namespace pkground
