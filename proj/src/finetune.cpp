#include "pkground/finetune.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "pkground/error.hpp"

namespace pkground {

std::vector<FinetunePair> build_finetune_pairs(const Corpus& corpus,
                                               const std::vector<GroundingPrediction>& predictions,
                                               const GroundingConfig& config) {
  std::map<std::string, std::size_t> predicted;
  for (const auto& prediction : predictions) {
    predicted.emplace(prediction.instance_id, prediction.knowledge_index);
  }
  const bool use_predictions = !predictions.empty();

  std::vector<FinetunePair> pairs;
  for (const auto& instance : corpus.instances) {
    if (!instance.gold_persona) {
      throw DataError("instance '" + instance.id + "' has no gold_persona labels");
    }
    std::size_t knowledge_index = 0;
    if (use_predictions) {
      auto it = predicted.find(instance.id);
      if (it == predicted.end()) throw DataError("no prediction for instance '" + instance.id + "'");
      knowledge_index = it->second;
    } else {
      if (!instance.gold_knowledge) {
        throw DataError("instance '" + instance.id + "' has no gold_knowledge label");
      }
      knowledge_index = *instance.gold_knowledge;
    }
    if (knowledge_index >= instance.knowledge.size()) {
      throw DataError("instance '" + instance.id + "': knowledge index out of range");
    }

    const auto& gold = *instance.gold_persona;
    for (std::size_t i = 0; i < instance.personas.size(); ++i) {
      FinetunePair pair;
      pair.question = build_question(instance, i, config);
      pair.answer = instance.knowledge[knowledge_index];
      pair.label = std::find(gold.begin(), gold.end(), i) != gold.end() ? 1 : 0;
      pair.instance_id = instance.id;
      pair.persona_index = i;
      pairs.push_back(std::move(pair));
    }
  }
  return pairs;
}

void write_finetune_pairs(const std::vector<FinetunePair>& pairs, std::ostream& out) {
  for (const auto& pair : pairs) {
    nlohmann::ordered_json j;
    j["question"] = pair.question;
    j["answer"] = pair.answer;
    j["label"] = pair.label;
    j["instance_id"] = pair.instance_id;
    j["persona_index"] = pair.persona_index;
    out << j.dump() << '\n';
  }
}

std::size_t export_finetune_pairs(const Corpus& corpus,
                                  const std::vector<GroundingPrediction>& predictions,
                                  const GroundingConfig& config, const std::string& out_path) {
  const auto pairs = build_finetune_pairs(corpus, predictions, config);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + out_path + "'");
  write_finetune_pairs(pairs, out);
  if (!out) throw DataError("failed writing '" + out_path + "'");
  return pairs.size();
}

}  // namespace pkground
