#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace pkground {

/// One dialogue with its persona and knowledge candidates. Indices are 0-based.
struct DialogueInstance {
  std::string id;
  std::vector<std::string> dialogue_turns;  ///< last element is the turn to answer
  std::vector<std::string> personas;
  std::vector<std::string> knowledge;
  /// Absent for unlabeled data; present-but-empty means "no persona applies".
  std::optional<std::vector<std::size_t>> gold_persona;
  std::optional<std::size_t> gold_knowledge;
  std::optional<std::string> gold_response;

  std::size_t persona_count() const noexcept { return personas.size(); }
  std::size_t knowledge_count() const noexcept { return knowledge.size(); }

  bool operator==(const DialogueInstance&) const = default;
};

struct Corpus {
  std::vector<DialogueInstance> instances;
  std::string source_path;

  std::size_t size() const noexcept { return instances.size(); }
  /// Throws DataError when the id is not present.
  const DialogueInstance& at(const std::string& id) const;

  bool operator==(const Corpus& other) const { return instances == other.instances; }
};

struct Violation {
  std::string instance_id;
  std::size_t position;  ///< 1-based position in the corpus (line number for loaded files)
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  /// Non-fatal observations, e.g. candidate counts that differ from the 5/10 reference shape.
  std::vector<Violation> warnings;

  bool empty() const noexcept { return violations.empty(); }
};

struct LoadOptions {
  /// Downgrade unknown JSON keys from an error to a warning.
  bool lenient = false;
  std::function<void(const std::string&)> warn;
};

/// Checks the per-instance invariants. Returns the violated rules (empty when valid).
std::vector<std::string> check_instance(const DialogueInstance& instance);

ValidationReport validate_corpus(const Corpus& corpus);

Corpus load_corpus(const std::string& path, const LoadOptions& options = {});
Corpus parse_corpus(std::istream& in, const std::string& source, const LoadOptions& options = {});

void write_corpus(const Corpus& corpus, const std::string& path);
void write_corpus(const Corpus& corpus, std::ostream& out);

nlohmann::ordered_json to_json(const DialogueInstance& instance);
/// Strict conversion; unknown keys throw unless `lenient` (they are then reported via `warn`).
DialogueInstance instance_from_json(const nlohmann::json& j, const LoadOptions& options = {});

struct SyntheticOptions {
  std::size_t count = 200;
  std::size_t personas = 5;
  std::size_t knowledge = 10;
  std::uint64_t seed = 0;
  double no_persona_fraction = 0.1;
};

/// Builds a corpus where the lexical token-F1 scorer provably recovers the gold pair.
///
/// Each instance gets a set of marker words shared by the final dialogue turn, the
/// gold knowledge passage and (unless the instance is a no-persona one) the gold
/// persona. Every other candidate is built from words unique within the instance.
/// Distractor personas are long enough that their token-F1 against the gold
/// knowledge stays strictly below 0.5.
Corpus generate_synthetic(const SyntheticOptions& options);

/// Small closed vocabulary the synthetic gold responses are drawn from.
const std::vector<std::string>& synthetic_response_vocabulary();

}  // namespace pkground
