#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pkground/corpus.hpp"
#include "pkground/decoder.hpp"
#include "pkground/grounding.hpp"
#include "pkground/metrics.hpp"

namespace pkground {

/// A generation request or output: `{"id": str, "text": str}` on disk.
struct IdText {
  std::string id;
  std::string text;

  bool operator==(const IdText&) const = default;
};

/// "{persona} {knowledge} {last turn}", omitting absent parts.
std::string generation_prompt(const DialogueInstance& instance,
                              std::optional<std::size_t> persona_index,
                              std::optional<std::size_t> knowledge_index);

/// Prompts grounded on the predictions when given (matched by id), otherwise on the
/// gold labels; instances without either fall back to the dialogue alone.
std::vector<IdText> corpus_prompts(const Corpus& corpus,
                                   const std::vector<GroundingPrediction>& predictions = {});

/// Gold responses as references. Throws DataError when one is missing.
std::vector<IdText> corpus_references(const Corpus& corpus);

/// Decodes every prompt. Nucleus runs derive a per-prompt seed from the config seed and
/// the prompt position, so output is independent of `jobs`.
std::vector<IdText> decode_all(const LanguageModel& lm, const std::vector<IdText>& prompts,
                               const DecodeConfig& config, int jobs = 1);

struct GenerationScores {
  double bleu = 0.0;
  RougeScore rouge;
  std::size_t count = 0;
};

/// Aligns hypotheses to references by id. Both sides must cover the same ids.
GenerationScores evaluate_generation(const std::vector<IdText>& hypotheses,
                                     const std::vector<IdText>& references);

std::vector<IdText> load_id_text(const std::string& path);
void write_id_text(const std::vector<IdText>& rows, const std::string& path);

}  // namespace pkground
