#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "pkground/corpus.hpp"
#include "pkground/scorer.hpp"

namespace pkground {

/// Which texts form the question side of the knowledge search.
enum class GroundingMode {
  pd_k,  ///< persona + dialogue vs knowledge, all n*m pairs
  p_k,   ///< persona alone vs knowledge, all n*m pairs
  d_k,   ///< dialogue alone vs knowledge, m pairs
};

/// Question side when scoring personas against the selected knowledge.
enum class PersonaMode {
  p_ktrue,   ///< persona alone
  pd_ktrue,  ///< persona + dialogue
};

enum class DialogueScope { last_turn, full_history };

struct GroundingConfig {
  GroundingMode mode = GroundingMode::pd_k;
  PersonaMode persona_mode = PersonaMode::pd_ktrue;
  double threshold = 0.5;
  DialogueScope dialogue_scope = DialogueScope::last_turn;

  /// Throws UsageError when the threshold is outside [0,1].
  void validate() const;
};

std::string to_string(GroundingMode mode);
std::string to_string(PersonaMode mode);
std::string to_string(DialogueScope scope);
GroundingMode parse_grounding_mode(const std::string& text);
PersonaMode parse_persona_mode(const std::string& text);
DialogueScope parse_dialogue_scope(const std::string& text);

nlohmann::ordered_json to_json(const GroundingConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
GroundingConfig grounding_config_from_json(const nlohmann::json& j, GroundingConfig base = {});

/// Rows are personas (one row in d_k mode), columns are knowledge candidates.
using ScoreMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ScoreVector = Eigen::VectorXd;

struct QAPair {
  std::optional<std::size_t> persona_index;
  std::size_t knowledge_index;
  std::string question;
  std::string answer;
};

struct KnowledgeChoice {
  std::size_t knowledge_index;
  double best_score;
};

struct PersonaChoice {
  std::optional<std::size_t> persona_index;
  std::vector<double> persona_scores;
};

struct GroundingPrediction {
  std::string instance_id;
  std::size_t knowledge_index = 0;
  std::optional<std::size_t> persona_index;
  std::vector<double> persona_scores;
  double knowledge_best_score = 0.0;

  bool operator==(const GroundingPrediction&) const = default;
};

struct GroundingAccuracy {
  double knowledge_accuracy = 0.0;  ///< percent
  double persona_accuracy = 0.0;    ///< percent
  double grounding_average = 0.0;   ///< percent
  std::size_t count = 0;
};

std::string dialogue_text(const DialogueInstance& instance, DialogueScope scope);

/// "{persona} {dialogue}", or the dialogue alone when no persona is given.
std::string build_question(const DialogueInstance& instance,
                           std::optional<std::size_t> persona_index,
                           const GroundingConfig& config);

/// The pairs scored for the knowledge search, in row-major order.
std::vector<QAPair> knowledge_pairs(const DialogueInstance& instance, const GroundingConfig& config);

ScoreMatrix compute_score_matrix(const DialogueInstance& instance, const ScorerBackend& backend,
                                 const GroundingConfig& config);

/// Column of the global maximum. Ties go to the lowest knowledge index, then the
/// lowest persona index. Accepts any dense Eigen expression.
template <typename Derived>
KnowledgeChoice select_knowledge(const Eigen::DenseBase<Derived>& matrix) {
  eigen_assert(matrix.size() > 0);
  Eigen::Index best_col = 0;
  auto best = matrix(0, 0);
  // Column-major scan with strict improvement keeps the lowest column, then the lowest row.
  for (Eigen::Index col = 0; col < matrix.cols(); ++col) {
    for (Eigen::Index row = 0; row < matrix.rows(); ++row) {
      if (matrix(row, col) > best) {
        best = matrix(row, col);
        best_col = col;
      }
    }
  }
  return {static_cast<std::size_t>(best_col), static_cast<double>(best)};
}

/// Thresholded argmax: the lowest index reaching the maximum, if that maximum is >= threshold.
template <typename Derived>
std::optional<std::size_t> thresholded_argmax(const Eigen::DenseBase<Derived>& scores,
                                              double threshold) {
  if (scores.size() == 0) return std::nullopt;
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i) {
    if (scores(i) > scores(best)) best = i;
  }
  if (static_cast<double>(scores(best)) >= threshold) return static_cast<std::size_t>(best);
  return std::nullopt;
}

PersonaChoice select_persona(const DialogueInstance& instance, std::size_t knowledge_index,
                             const ScorerBackend& backend, const GroundingConfig& config);

GroundingPrediction ground_instance(const DialogueInstance& instance,
                                    const ScorerBackend& knowledge_backend,
                                    const ScorerBackend& persona_backend,
                                    const GroundingConfig& config);

/// Grounds every instance, preserving corpus order. `jobs` <= 0 uses the hardware concurrency.
std::vector<GroundingPrediction> ground_corpus(const Corpus& corpus,
                                               const ScorerBackend& knowledge_backend,
                                               const ScorerBackend& persona_backend,
                                               const GroundingConfig& config, int jobs = 1);

GroundingAccuracy evaluate_grounding(const std::vector<GroundingPrediction>& predictions,
                                     const Corpus& corpus);

nlohmann::ordered_json to_json(const GroundingPrediction& prediction);
GroundingPrediction prediction_from_json(const nlohmann::json& j);
void write_predictions(const std::vector<GroundingPrediction>& predictions, const std::string& path);
std::vector<GroundingPrediction> load_predictions(const std::string& path);

}  // namespace pkground
