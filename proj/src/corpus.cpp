#include "pkground/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "pkground/error.hpp"

namespace pkground {

namespace {

const std::set<std::string, std::less<>> kKnownKeys = {
    "id", "dialogue", "personas", "knowledge", "gold_persona", "gold_knowledge", "response"};

bool blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

std::vector<std::string> string_list(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw DataError(std::string("missing key '") + key + "'");
  const auto& value = j.at(key);
  if (!value.is_array()) throw DataError(std::string("'") + key + "' must be an array of strings");
  std::vector<std::string> out;
  out.reserve(value.size());
  for (const auto& item : value) {
    if (!item.is_string()) throw DataError(std::string("'") + key + "' must be an array of strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::size_t index_value(const nlohmann::json& item, const char* key) {
  if (!item.is_number_integer()) throw DataError(std::string("'") + key + "' entries must be integers");
  const auto value = item.get<std::int64_t>();
  if (value < 0) throw DataError(std::string("'") + key + "' index out of range (negative)");
  return static_cast<std::size_t>(value);
}

void report(const LoadOptions& options, const std::string& message) {
  if (options.warn) {
    options.warn(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

/// Seeded helpers; the standard distributions are not portable across libraries.
std::size_t draw_index(std::mt19937_64& rng, std::size_t bound) {
  return static_cast<std::size_t>(rng() % bound);
}

template <typename T>
void shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[draw_index(rng, i)]);
  }
}

class WordSource {
 public:
  explicit WordSource(std::mt19937_64& rng) : rng_(rng) {}

  std::string fresh() {
    static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
    static constexpr std::string_view kVowels = "aeiou";
    for (;;) {
      std::string word;
      const std::size_t syllables = 2 + draw_index(rng_, 2);
      for (std::size_t s = 0; s < syllables; ++s) {
        word += kConsonants[draw_index(rng_, kConsonants.size())];
        word += kVowels[draw_index(rng_, kVowels.size())];
      }
      if (used_.insert(word).second) return word;
    }
  }

  std::vector<std::string> fresh(std::size_t count) {
    std::vector<std::string> words;
    for (std::size_t i = 0; i < count; ++i) words.push_back(fresh());
    return words;
  }

 private:
  std::mt19937_64& rng_;
  std::set<std::string> used_;
};

std::string sentence(std::vector<std::string> words, std::mt19937_64& rng, char terminator) {
  shuffle(words, rng);
  std::string text;
  for (const auto& word : words) {
    if (!text.empty()) text += ' ';
    text += word;
  }
  if (!text.empty()) text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
  text += terminator;
  return text;
}

std::string response_text(std::mt19937_64& rng) {
  static const std::vector<std::vector<std::string>> kTemplates = {
      {"you", "will", "love", "the", "view", "from", "the", "top"},
      {"it", "was", "built", "a", "long", "time", "ago"},
      {"you", "can", "see", "the", "old", "tower", "from", "here"},
      {"the", "tower", "was", "built", "for", "the", "king"},
      {"many", "people", "visit", "it", "every", "year"},
      {"it", "is", "one", "of", "the", "oldest", "places", "in", "the", "city"},
  };
  const auto& chosen = kTemplates[draw_index(rng, kTemplates.size())];
  std::string text;
  for (const auto& word : chosen) {
    if (!text.empty()) text += ' ';
    text += word;
  }
  text += '.';
  text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
  return text;
}

}  // namespace

const DialogueInstance& Corpus::at(const std::string& id) const {
  auto it = std::find_if(instances.begin(), instances.end(),
                         [&](const DialogueInstance& instance) { return instance.id == id; });
  if (it == instances.end()) throw DataError("unknown instance id '" + id + "'");
  return *it;
}

std::vector<std::string> check_instance(const DialogueInstance& instance) {
  std::vector<std::string> problems;
  if (instance.id.empty()) problems.emplace_back("empty id");
  if (instance.dialogue_turns.empty()) problems.emplace_back("no dialogue turns");
  if (instance.personas.empty()) problems.emplace_back("no persona candidates");
  if (instance.knowledge.empty()) problems.emplace_back("no knowledge candidates");
  for (std::size_t k = 0; k < instance.personas.size(); ++k) {
    if (blank(instance.personas[k])) problems.push_back("empty persona at index " + std::to_string(k));
  }
  for (std::size_t k = 0; k < instance.knowledge.size(); ++k) {
    if (blank(instance.knowledge[k])) problems.push_back("empty knowledge at index " + std::to_string(k));
  }
  if (instance.gold_persona) {
    std::set<std::size_t> seen;
    for (auto index : *instance.gold_persona) {
      if (index >= instance.personas.size()) {
        problems.push_back("gold_persona index out of range (" + std::to_string(index) +
                           " >= " + std::to_string(instance.personas.size()) + ")");
      }
      if (!seen.insert(index).second) {
        problems.push_back("duplicate gold_persona index " + std::to_string(index));
      }
    }
  }
  if (instance.gold_knowledge && *instance.gold_knowledge >= instance.knowledge.size()) {
    problems.push_back("gold_knowledge index out of range (" + std::to_string(*instance.gold_knowledge) +
                       " >= " + std::to_string(instance.knowledge.size()) + ")");
  }
  return problems;
}

ValidationReport validate_corpus(const Corpus& corpus) {
  ValidationReport report;
  std::map<std::string, std::size_t> first_position;
  for (std::size_t i = 0; i < corpus.instances.size(); ++i) {
    const auto& instance = corpus.instances[i];
    const std::size_t position = i + 1;
    for (auto& problem : check_instance(instance)) {
      report.violations.push_back({instance.id, position, std::move(problem)});
    }
    auto [it, inserted] = first_position.emplace(instance.id, position);
    if (!inserted) {
      report.violations.push_back({instance.id, position,
                                   "duplicate id at positions " + std::to_string(it->second) +
                                       " and " + std::to_string(position)});
    }
    if (instance.personas.size() != 5 || instance.knowledge.size() != 10) {
      report.warnings.push_back({instance.id, position,
                                 std::to_string(instance.personas.size()) + " personas and " +
                                     std::to_string(instance.knowledge.size()) +
                                     " knowledge candidates (reference shape is 5 and 10)"});
    }
  }
  return report;
}

nlohmann::ordered_json to_json(const DialogueInstance& instance) {
  nlohmann::ordered_json j;
  j["id"] = instance.id;
  j["dialogue"] = instance.dialogue_turns;
  j["personas"] = instance.personas;
  j["knowledge"] = instance.knowledge;
  j["gold_persona"] = instance.gold_persona ? nlohmann::ordered_json(*instance.gold_persona)
                                            : nlohmann::ordered_json(nullptr);
  j["gold_knowledge"] = instance.gold_knowledge ? nlohmann::ordered_json(*instance.gold_knowledge)
                                                : nlohmann::ordered_json(nullptr);
  j["response"] = instance.gold_response ? nlohmann::ordered_json(*instance.gold_response)
                                         : nlohmann::ordered_json(nullptr);
  return j;
}

DialogueInstance instance_from_json(const nlohmann::json& j, const LoadOptions& options) {
  if (!j.is_object()) throw DataError("instance must be a JSON object");
  DialogueInstance instance;
  if (!j.contains("id") || !j.at("id").is_string()) throw DataError("'id' must be a string");
  instance.id = j.at("id").get<std::string>();

  for (const auto& [key, value] : j.items()) {
    if (kKnownKeys.contains(key)) continue;
    if (!options.lenient) throw DataError("instance '" + instance.id + "': unknown key '" + key + "'");
    report(options, "instance '" + instance.id + "': unknown key '" + key + "' ignored");
  }

  try {
    instance.dialogue_turns = string_list(j, "dialogue");
    instance.personas = string_list(j, "personas");
    instance.knowledge = string_list(j, "knowledge");
    if (j.contains("gold_persona") && !j.at("gold_persona").is_null()) {
      const auto& gold = j.at("gold_persona");
      if (!gold.is_array()) throw DataError("'gold_persona' must be an array of integers or null");
      std::vector<std::size_t> indices;
      for (const auto& item : gold) indices.push_back(index_value(item, "gold_persona"));
      instance.gold_persona = std::move(indices);
    }
    if (j.contains("gold_knowledge") && !j.at("gold_knowledge").is_null()) {
      instance.gold_knowledge = index_value(j.at("gold_knowledge"), "gold_knowledge");
    }
    if (j.contains("response") && !j.at("response").is_null()) {
      if (!j.at("response").is_string()) throw DataError("'response' must be a string or null");
      instance.gold_response = j.at("response").get<std::string>();
    }
  } catch (const DataError& e) {
    throw DataError("instance '" + instance.id + "': " + e.what());
  }
  return instance;
}

Corpus parse_corpus(std::istream& in, const std::string& source, const LoadOptions& options) {
  Corpus corpus;
  corpus.source_path = source;
  std::map<std::string, std::size_t> first_line;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (blank(line)) continue;
    const std::string where = source + ":" + std::to_string(line_number) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + "malformed JSON: " + e.what());
    }
    DialogueInstance instance;
    try {
      LoadOptions located = options;
      if (options.warn || options.lenient) {
        located.warn = [&](const std::string& message) { report(options, where + message); };
      }
      instance = instance_from_json(j, located);
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    const auto problems = check_instance(instance);
    if (!problems.empty()) {
      throw DataError(where + "instance '" + instance.id + "': " + problems.front());
    }
    auto [it, inserted] = first_line.emplace(instance.id, line_number);
    if (!inserted) {
      throw DataError(where + "duplicate id '" + instance.id + "' (first seen on line " +
                      std::to_string(it->second) + ")");
    }
    corpus.instances.push_back(std::move(instance));
  }
  if (corpus.instances.empty()) throw DataError(source + ": empty corpus");
  return corpus;
}

Corpus load_corpus(const std::string& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus '" + path + "'");
  return parse_corpus(in, path, options);
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  for (const auto& instance : corpus.instances) out << to_json(instance).dump() << '\n';
}

void write_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_corpus(corpus, out);
  if (!out) throw DataError("failed writing '" + path + "'");
}

const std::vector<std::string>& synthetic_response_vocabulary() {
  static const std::vector<std::string> kVocab = {
      "a",     "ago",  "built", "can",    "city", "every", "for",    "from", "here",
      "in",    "is",   "it",    "king",   "long", "love",  "many",   "of",   "old",
      "oldest", "one", "people", "places", "see", "the",   "time",   "top",  "tower",
      "view",  "visit", "was",  "will",   "year", "you"};
  return kVocab;
}

Corpus generate_synthetic(const SyntheticOptions& options) {
  if (options.count == 0 || options.personas == 0 || options.knowledge == 0) {
    throw UsageError("synthetic corpus needs count, personas and knowledge >= 1");
  }
  if (options.no_persona_fraction < 0.0 || options.no_persona_fraction > 1.0) {
    throw UsageError("no-persona fraction must be in [0,1]");
  }

  std::mt19937_64 rng(options.seed);
  Corpus corpus;
  corpus.source_path = "synthetic:seed=" + std::to_string(options.seed);

  const auto no_persona_count = static_cast<std::size_t>(
      std::llround(options.no_persona_fraction * static_cast<double>(options.count)));
  std::vector<std::size_t> order(options.count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);
  std::vector<bool> no_persona(options.count, false);
  for (std::size_t i = 0; i < no_persona_count; ++i) no_persona[order[i]] = true;

  constexpr std::size_t kMarkers = 3;
  constexpr std::size_t kDistractorPersonaWords = 6;

  for (std::size_t index = 0; index < options.count; ++index) {
    WordSource words(rng);
    DialogueInstance instance;
    std::ostringstream id;
    id << "synth-" << options.seed << '-' << std::setw(5) << std::setfill('0') << index;
    instance.id = id.str();

    const auto markers = words.fresh(kMarkers);
    const std::size_t history = draw_index(rng, 3);
    for (std::size_t t = 0; t < history; ++t) {
      instance.dialogue_turns.push_back(sentence(words.fresh(4), rng, '.'));
    }
    auto last_turn = markers;
    last_turn.push_back(words.fresh());
    instance.dialogue_turns.push_back(sentence(last_turn, rng, '?'));

    const std::size_t gold_persona = draw_index(rng, options.personas);
    for (std::size_t p = 0; p < options.personas; ++p) {
      if (!no_persona[index] && p == gold_persona) {
        auto persona = markers;
        persona.push_back(words.fresh());
        instance.personas.push_back(sentence(persona, rng, '.'));
      } else {
        instance.personas.push_back(sentence(words.fresh(kDistractorPersonaWords), rng, '.'));
      }
    }

    const std::size_t gold_knowledge = draw_index(rng, options.knowledge);
    for (std::size_t k = 0; k < options.knowledge; ++k) {
      if (k == gold_knowledge) {
        auto passage = markers;
        passage.push_back(words.fresh());
        instance.knowledge.push_back(sentence(passage, rng, '.'));
      } else {
        instance.knowledge.push_back(sentence(words.fresh(4 + draw_index(rng, 5)), rng, '.'));
      }
    }

    instance.gold_persona = no_persona[index] ? std::vector<std::size_t>{}
                                              : std::vector<std::size_t>{gold_persona};
    instance.gold_knowledge = gold_knowledge;
    instance.gold_response = response_text(rng);
    corpus.instances.push_back(std::move(instance));
  }
  return corpus;
}

}  // namespace pkground
