#include "pkground/grounding.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "pkground/error.hpp"
#include "pkground/parallel.hpp"

namespace pkground {

namespace {

std::vector<TextPair> as_text_pairs(const std::vector<QAPair>& pairs) {
  std::vector<TextPair> out;
  out.reserve(pairs.size());
  for (const auto& pair : pairs) out.push_back({pair.question, pair.answer});
  return out;
}

template <typename Fn>
auto with_instance_context(const DialogueInstance& instance, Fn&& fn) {
  try {
    return fn();
  } catch (const TransportError& e) {
    throw TransportError("instance '" + instance.id + "': " + e.what(), e.attempts());
  } catch (const ProtocolError& e) {
    throw ProtocolError("instance '" + instance.id + "': " + e.what());
  } catch (const DataError& e) {
    throw DataError("instance '" + instance.id + "': " + e.what());
  }
}

}  // namespace

void GroundingConfig::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw UsageError("persona threshold must be in [0,1], got " + std::to_string(threshold));
  }
}

std::string to_string(GroundingMode mode) {
  switch (mode) {
    case GroundingMode::pd_k: return "pd_k";
    case GroundingMode::p_k: return "p_k";
    case GroundingMode::d_k: return "d_k";
  }
  return "?";
}

std::string to_string(PersonaMode mode) {
  return mode == PersonaMode::p_ktrue ? "p_ktrue" : "pd_ktrue";
}

std::string to_string(DialogueScope scope) {
  return scope == DialogueScope::last_turn ? "last_turn" : "full_history";
}

GroundingMode parse_grounding_mode(const std::string& text) {
  if (text == "pd_k") return GroundingMode::pd_k;
  if (text == "p_k") return GroundingMode::p_k;
  if (text == "d_k") return GroundingMode::d_k;
  throw UsageError("unknown grounding mode '" + text + "' (pd_k, p_k, d_k)");
}

PersonaMode parse_persona_mode(const std::string& text) {
  if (text == "p_ktrue") return PersonaMode::p_ktrue;
  if (text == "pd_ktrue") return PersonaMode::pd_ktrue;
  throw UsageError("unknown persona mode '" + text + "' (p_ktrue, pd_ktrue)");
}

DialogueScope parse_dialogue_scope(const std::string& text) {
  if (text == "last_turn") return DialogueScope::last_turn;
  if (text == "full_history") return DialogueScope::full_history;
  throw UsageError("unknown dialogue scope '" + text + "' (last_turn, full_history)");
}

nlohmann::ordered_json to_json(const GroundingConfig& config) {
  return {{"mode", to_string(config.mode)},
          {"persona_mode", to_string(config.persona_mode)},
          {"threshold", config.threshold},
          {"dialogue_scope", to_string(config.dialogue_scope)}};
}

GroundingConfig grounding_config_from_json(const nlohmann::json& j, GroundingConfig base) {
  if (!j.is_object()) throw UsageError("grounding config must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "mode") {
      base.mode = parse_grounding_mode(value.get<std::string>());
    } else if (key == "persona_mode") {
      base.persona_mode = parse_persona_mode(value.get<std::string>());
    } else if (key == "threshold") {
      if (!value.is_number()) throw UsageError("grounding threshold must be a number");
      base.threshold = value.get<double>();
    } else if (key == "dialogue_scope") {
      base.dialogue_scope = parse_dialogue_scope(value.get<std::string>());
    } else {
      throw UsageError("unknown grounding config key '" + key + "'");
    }
  }
  base.validate();
  return base;
}

std::string dialogue_text(const DialogueInstance& instance, DialogueScope scope) {
  if (instance.dialogue_turns.empty()) throw DataError("instance '" + instance.id + "' has no dialogue");
  if (scope == DialogueScope::last_turn) return instance.dialogue_turns.back();
  std::string text;
  for (const auto& turn : instance.dialogue_turns) {
    if (!text.empty()) text += ' ';
    text += turn;
  }
  return text;
}

std::string build_question(const DialogueInstance& instance,
                           std::optional<std::size_t> persona_index,
                           const GroundingConfig& config) {
  auto dialogue = dialogue_text(instance, config.dialogue_scope);
  if (!persona_index) return dialogue;
  if (*persona_index >= instance.personas.size()) {
    throw DataError("instance '" + instance.id + "': persona index " + std::to_string(*persona_index) +
                    " out of range");
  }
  return instance.personas[*persona_index] + " " + dialogue;
}

std::vector<QAPair> knowledge_pairs(const DialogueInstance& instance, const GroundingConfig& config) {
  std::vector<QAPair> pairs;
  const std::size_t n = instance.personas.size();
  const std::size_t m = instance.knowledge.size();
  if (config.mode == GroundingMode::d_k) {
    const auto question = build_question(instance, std::nullopt, config);
    for (std::size_t j = 0; j < m; ++j) pairs.push_back({std::nullopt, j, question, instance.knowledge[j]});
    return pairs;
  }
  pairs.reserve(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const auto question = config.mode == GroundingMode::pd_k ? build_question(instance, i, config)
                                                             : instance.personas[i];
    for (std::size_t j = 0; j < m; ++j) pairs.push_back({i, j, question, instance.knowledge[j]});
  }
  return pairs;
}

ScoreMatrix compute_score_matrix(const DialogueInstance& instance, const ScorerBackend& backend,
                                 const GroundingConfig& config) {
  return with_instance_context(instance, [&] {
    const auto pairs = knowledge_pairs(instance, config);
    const auto text = as_text_pairs(pairs);
    const auto scores = score_batch(backend, text);
    const Eigen::Index rows = config.mode == GroundingMode::d_k
                                  ? 1
                                  : static_cast<Eigen::Index>(instance.personas.size());
    const auto cols = static_cast<Eigen::Index>(instance.knowledge.size());
    return ScoreMatrix(Eigen::Map<const ScoreMatrix>(scores.data(), rows, cols));
  });
}

PersonaChoice select_persona(const DialogueInstance& instance, std::size_t knowledge_index,
                             const ScorerBackend& backend, const GroundingConfig& config) {
  if (knowledge_index >= instance.knowledge.size()) {
    throw DataError("instance '" + instance.id + "': knowledge index " +
                    std::to_string(knowledge_index) + " out of range");
  }
  return with_instance_context(instance, [&] {
    std::vector<TextPair> pairs;
    pairs.reserve(instance.personas.size());
    for (std::size_t i = 0; i < instance.personas.size(); ++i) {
      auto question = config.persona_mode == PersonaMode::pd_ktrue ? build_question(instance, i, config)
                                                                    : instance.personas[i];
      pairs.push_back({std::move(question), instance.knowledge[knowledge_index]});
    }
    PersonaChoice choice;
    choice.persona_scores = score_batch(backend, pairs);
    const Eigen::Map<const ScoreVector> scores(choice.persona_scores.data(),
                                              static_cast<Eigen::Index>(choice.persona_scores.size()));
    choice.persona_index = thresholded_argmax(scores, config.threshold);
    return choice;
  });
}

GroundingPrediction ground_instance(const DialogueInstance& instance,
                                    const ScorerBackend& knowledge_backend,
                                    const ScorerBackend& persona_backend,
                                    const GroundingConfig& config) {
  config.validate();
  const auto matrix = compute_score_matrix(instance, knowledge_backend, config);
  const auto knowledge = select_knowledge(matrix);
  auto persona = select_persona(instance, knowledge.knowledge_index, persona_backend, config);

  GroundingPrediction prediction;
  prediction.instance_id = instance.id;
  prediction.knowledge_index = knowledge.knowledge_index;
  prediction.knowledge_best_score = knowledge.best_score;
  prediction.persona_index = persona.persona_index;
  prediction.persona_scores = std::move(persona.persona_scores);
  return prediction;
}

std::vector<GroundingPrediction> ground_corpus(const Corpus& corpus,
                                               const ScorerBackend& knowledge_backend,
                                               const ScorerBackend& persona_backend,
                                               const GroundingConfig& config, int jobs) {
  config.validate();
  return parallel_map(corpus.instances.size(), jobs, [&](std::size_t i) {
    return ground_instance(corpus.instances[i], knowledge_backend, persona_backend, config);
  });
}

GroundingAccuracy evaluate_grounding(const std::vector<GroundingPrediction>& predictions,
                                     const Corpus& corpus) {
  if (predictions.empty()) throw DataError("no predictions to evaluate");
  std::map<std::string, const DialogueInstance*> by_id;
  for (const auto& instance : corpus.instances) by_id.emplace(instance.id, &instance);

  std::set<std::string> seen;
  std::size_t knowledge_correct = 0;
  std::size_t persona_correct = 0;
  for (const auto& prediction : predictions) {
    auto it = by_id.find(prediction.instance_id);
    if (it == by_id.end()) throw DataError("prediction for unknown id '" + prediction.instance_id + "'");
    if (!seen.insert(prediction.instance_id).second) {
      throw DataError("duplicate prediction for id '" + prediction.instance_id + "'");
    }
    const auto& instance = *it->second;
    if (!instance.gold_knowledge || !instance.gold_persona) {
      throw DataError("instance '" + instance.id + "' has no gold labels");
    }
    if (prediction.knowledge_index == *instance.gold_knowledge) ++knowledge_correct;
    const auto& gold = *instance.gold_persona;
    const bool persona_hit =
        prediction.persona_index
            ? std::find(gold.begin(), gold.end(), *prediction.persona_index) != gold.end()
            : gold.empty();
    if (persona_hit) ++persona_correct;
  }

  GroundingAccuracy accuracy;
  accuracy.count = predictions.size();
  const auto total = static_cast<double>(predictions.size());
  accuracy.knowledge_accuracy = 100.0 * static_cast<double>(knowledge_correct) / total;
  accuracy.persona_accuracy = 100.0 * static_cast<double>(persona_correct) / total;
  accuracy.grounding_average = (accuracy.knowledge_accuracy + accuracy.persona_accuracy) / 2.0;
  return accuracy;
}

nlohmann::ordered_json to_json(const GroundingPrediction& prediction) {
  nlohmann::ordered_json j;
  j["id"] = prediction.instance_id;
  j["knowledge_index"] = prediction.knowledge_index;
  j["persona_index"] = prediction.persona_index ? nlohmann::ordered_json(*prediction.persona_index)
                                                : nlohmann::ordered_json(nullptr);
  j["persona_scores"] = prediction.persona_scores;
  j["knowledge_best_score"] = prediction.knowledge_best_score;
  return j;
}

GroundingPrediction prediction_from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKeys = {"id", "knowledge_index", "persona_index",
                                              "persona_scores", "knowledge_best_score"};
  if (!j.is_object()) throw DataError("prediction must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.contains(key)) throw DataError("prediction: unknown key '" + key + "'");
  }
  try {
    GroundingPrediction prediction;
    prediction.instance_id = j.at("id").get<std::string>();
    const auto knowledge = j.at("knowledge_index").get<std::int64_t>();
    if (knowledge < 0) throw DataError("negative knowledge_index");
    prediction.knowledge_index = static_cast<std::size_t>(knowledge);
    if (j.contains("persona_index") && !j.at("persona_index").is_null()) {
      const auto persona = j.at("persona_index").get<std::int64_t>();
      if (persona < 0) throw DataError("negative persona_index");
      prediction.persona_index = static_cast<std::size_t>(persona);
    }
    if (j.contains("persona_scores")) {
      prediction.persona_scores = j.at("persona_scores").get<std::vector<double>>();
    }
    if (j.contains("knowledge_best_score")) {
      prediction.knowledge_best_score = j.at("knowledge_best_score").get<double>();
    }
    return prediction;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("prediction: ") + e.what());
  }
}

void write_predictions(const std::vector<GroundingPrediction>& predictions, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (const auto& prediction : predictions) out << to_json(prediction).dump() << '\n';
  if (!out) throw DataError("failed writing '" + path + "'");
}

std::vector<GroundingPrediction> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions '" + path + "'");
  std::vector<GroundingPrediction> predictions;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      predictions.push_back(prediction_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path + ":" + std::to_string(line_number) + ": malformed JSON: " + e.what());
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_number) + ": " + e.what());
    }
  }
  return predictions;
}

}  // namespace pkground
