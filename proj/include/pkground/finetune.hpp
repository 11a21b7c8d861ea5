#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "pkground/corpus.hpp"
#include "pkground/grounding.hpp"

namespace pkground {

struct FinetunePair {
  std::string question;
  std::string answer;
  int label = 0;
  std::string instance_id;
  std::size_t persona_index = 0;

  bool operator==(const FinetunePair&) const = default;
};

/// Build the persona fine-tuning set: every persona paired with the one true knowledge
/// passage of its instance. With `predictions` empty the gold knowledge is used;
/// otherwise each instance takes the predicted knowledge for its id.
std::vector<FinetunePair> build_finetune_pairs(const Corpus& corpus,
                                               const std::vector<GroundingPrediction>& predictions,
                                               const GroundingConfig& config);

void write_finetune_pairs(const std::vector<FinetunePair>& pairs, std::ostream& out);

/// Writes the pairs as JSONL and returns how many were written.
std::size_t export_finetune_pairs(const Corpus& corpus,
                                  const std::vector<GroundingPrediction>& predictions,
                                  const GroundingConfig& config, const std::string& out_path);

}  // namespace pkground
