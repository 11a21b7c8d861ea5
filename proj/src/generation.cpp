#include "pkground/generation.hpp"

#include <fstream>
#include <map>
#include <set>

#include "pkground/error.hpp"
#include "pkground/parallel.hpp"

namespace pkground {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t position) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (position + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

std::string generation_prompt(const DialogueInstance& instance,
                              std::optional<std::size_t> persona_index,
                              std::optional<std::size_t> knowledge_index) {
  std::string prompt;
  auto append = [&](const std::string& text) {
    if (!prompt.empty()) prompt += ' ';
    prompt += text;
  };
  if (persona_index) append(instance.personas.at(*persona_index));
  if (knowledge_index) append(instance.knowledge.at(*knowledge_index));
  append(dialogue_text(instance, DialogueScope::last_turn));
  return prompt;
}

std::vector<IdText> corpus_prompts(const Corpus& corpus,
                                   const std::vector<GroundingPrediction>& predictions) {
  std::map<std::string, const GroundingPrediction*> by_id;
  for (const auto& prediction : predictions) by_id.emplace(prediction.instance_id, &prediction);

  std::vector<IdText> prompts;
  prompts.reserve(corpus.size());
  for (const auto& instance : corpus.instances) {
    std::optional<std::size_t> persona;
    std::optional<std::size_t> knowledge;
    if (!predictions.empty()) {
      auto it = by_id.find(instance.id);
      if (it == by_id.end()) throw DataError("no prediction for instance '" + instance.id + "'");
      persona = it->second->persona_index;
      knowledge = it->second->knowledge_index;
      if (*knowledge >= instance.knowledge.size() ||
          (persona && *persona >= instance.personas.size())) {
        throw DataError("prediction for instance '" + instance.id + "' is out of range");
      }
    } else {
      knowledge = instance.gold_knowledge;
      if (instance.gold_persona && !instance.gold_persona->empty()) {
        persona = instance.gold_persona->front();
      }
    }
    prompts.push_back({instance.id, generation_prompt(instance, persona, knowledge)});
  }
  return prompts;
}

std::vector<IdText> corpus_references(const Corpus& corpus) {
  std::vector<IdText> references;
  references.reserve(corpus.size());
  for (const auto& instance : corpus.instances) {
    if (!instance.gold_response) throw DataError("instance '" + instance.id + "' has no response");
    references.push_back({instance.id, *instance.gold_response});
  }
  return references;
}

std::vector<IdText> decode_all(const LanguageModel& lm, const std::vector<IdText>& prompts,
                               const DecodeConfig& config, int jobs) {
  config.validate();
  return parallel_map(prompts.size(), jobs, [&](std::size_t i) {
    DecodeConfig local = config;
    local.seed = mix_seed(config.seed, i);
    const auto context = lm.tokenize(prompts[i].text);
    try {
      const auto result = decode(lm, context, local);
      return IdText{prompts[i].id, lm.detokenize(result.tokens)};
    } catch (const DataError& e) {
      throw DataError("prompt '" + prompts[i].id + "': " + e.what());
    }
  });
}

GenerationScores evaluate_generation(const std::vector<IdText>& hypotheses,
                                     const std::vector<IdText>& references) {
  std::map<std::string, const IdText*> reference_by_id;
  for (const auto& reference : references) {
    if (!reference_by_id.emplace(reference.id, &reference).second) {
      throw DataError("duplicate reference id '" + reference.id + "'");
    }
  }
  std::set<std::string> seen;
  std::vector<EvalPair> pairs;
  pairs.reserve(hypotheses.size());
  for (const auto& hypothesis : hypotheses) {
    auto it = reference_by_id.find(hypothesis.id);
    if (it == reference_by_id.end()) throw DataError("no reference for id '" + hypothesis.id + "'");
    if (!seen.insert(hypothesis.id).second) {
      throw DataError("duplicate hypothesis id '" + hypothesis.id + "'");
    }
    pairs.push_back({hypothesis.text, it->second->text});
  }
  if (seen.size() != reference_by_id.size()) {
    for (const auto& [id, reference] : reference_by_id) {
      if (!seen.contains(id)) throw DataError("no hypothesis for id '" + id + "'");
    }
  }
  GenerationScores scores;
  scores.count = pairs.size();
  scores.bleu = bleu_corpus(pairs);
  scores.rouge = rouge_l_corpus(pairs);
  return scores;
}

std::vector<IdText> load_id_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<IdText> rows;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_number) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      for (const auto& [key, value] : j.items()) {
        if (key != "id" && key != "text") throw DataError(where + "unknown key '" + key + "'");
      }
      rows.push_back({j.at("id").get<std::string>(), j.at("text").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + e.what());
    }
  }
  return rows;
}

void write_id_text(const std::vector<IdText>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (const auto& row : rows) {
    nlohmann::ordered_json j;
    j["id"] = row.id;
    j["text"] = row.text;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("failed writing '" + path + "'");
}

}  // namespace pkground
