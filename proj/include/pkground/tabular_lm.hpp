#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pkground/decoder.hpp"

namespace pkground {

/// Language model backed by an explicit table keyed on the space-joined generated
/// prefix. The "*" entry is the fallback for prefixes without their own row; the
/// empty key covers the first step. Context tokens are ignored.
class TabularLanguageModel final : public LanguageModel {
 public:
  /// `transitions` map a prefix key to per-token probabilities (vocab order).
  TabularLanguageModel(std::vector<std::string> vocab, std::string eos,
                       std::map<std::string, Eigen::VectorXd> transitions);

  static TabularLanguageModel from_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const;

  std::string identity() const override { return identity_; }
  std::size_t vocab_size() const override { return vocab_.size(); }
  TokenId eos_token() const override { return eos_; }

  LogProbs next_logprobs(std::span<const TokenId> context,
                         std::span<const TokenId> generated) const override;

  /// Whitespace split; words outside the vocabulary are dropped.
  TokenSequence tokenize(const std::string& text) const override;
  std::string detokenize(std::span<const TokenId> tokens) const override;

  const std::vector<std::string>& vocab() const noexcept { return vocab_; }
  const Eigen::VectorXd& probabilities_for(std::span<const TokenId> generated) const;
  std::string prefix_key(std::span<const TokenId> generated) const;
  void set_identity(std::string identity) { identity_ = std::move(identity); }

 private:
  struct Row {
    Eigen::VectorXd probabilities;
    LogProbs logprobs;
  };

  std::vector<std::string> vocab_;
  std::map<std::string, TokenId, std::less<>> index_;
  TokenId eos_ = 0;
  std::map<std::string, Row, std::less<>> rows_;
  const Row* fallback_ = nullptr;
  std::string identity_ = "tabular";
};

TabularLanguageModel load_tabular_lm(const std::string& path);
void write_tabular_lm(const TabularLanguageModel& lm, const std::string& path);

struct RandomLmOptions {
  std::size_t vocab_size = 4;  ///< including EOS (token 0, named "<eos>")
  std::size_t depth = 4;       ///< explicit rows for every prefix shorter than this
  /// Chance that an individual non-EOS token gets probability zero in a row.
  double zero_probability = 0.15;
};

/// Random table with a row for every EOS-free prefix shorter than `depth`, plus a
/// random "*" row. Every row keeps at least one non-EOS token possible.
TabularLanguageModel random_tabular_lm(std::uint64_t seed, const RandomLmOptions& options = {});

/// Count-based table over tokenized sequences: rows for every observed prefix shorter
/// than `depth`, a unigram "*" row, add-`smoothing` on every vocabulary entry.
TabularLanguageModel fit_tabular_lm(const std::vector<std::vector<std::string>>& sequences,
                                    const std::vector<std::string>& vocab,
                                    const std::string& eos, std::size_t depth,
                                    double smoothing = 0.1);

}  // namespace pkground
