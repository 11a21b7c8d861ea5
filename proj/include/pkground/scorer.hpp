#pragma once

#include <atomic>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pkground {

struct TextPair {
  std::string question;
  std::string answer;
};

/// Relevance model contract. Scores are in [0,1] and returned in input order.
/// Implementations must tolerate concurrent calls.
class ScorerBackend {
 public:
  virtual ~ScorerBackend() = default;

  virtual std::string identity() const = 0;
  virtual std::vector<double> score(std::span<const TextPair> pairs) const = 0;
};

/// Checked entry point: rejects empty batches and empty strings, and verifies the
/// backend's answer has the right length and range (never clamps).
std::vector<double> score_batch(const ScorerBackend& backend, std::span<const TextPair> pairs);

/// Lowercase, strip `.,!?;:'"()` from token edges, split on whitespace.
std::vector<std::string> lexical_tokens(std::string_view text);

/// Token-set F1 between the two texts.
double mock_lexical_score(std::string_view question, std::string_view answer);

class MockLexicalScorer final : public ScorerBackend {
 public:
  std::string identity() const override { return "mock-lexical"; }
  std::vector<double> score(std::span<const TextPair> pairs) const override;
};

/// Forwards to another backend and counts the pairs it sees.
class CountingScorer final : public ScorerBackend {
 public:
  explicit CountingScorer(const ScorerBackend& inner) : inner_(inner) {}

  std::string identity() const override { return inner_.identity(); }
  std::vector<double> score(std::span<const TextPair> pairs) const override;

  std::size_t pairs_seen() const noexcept { return pairs_.load(); }
  std::size_t calls() const noexcept { return calls_.load(); }
  void reset() noexcept {
    pairs_ = 0;
    calls_ = 0;
  }

 private:
  const ScorerBackend& inner_;
  mutable std::atomic<std::size_t> pairs_{0};
  mutable std::atomic<std::size_t> calls_{0};
};

struct HttpScorerOptions {
  std::size_t max_batch = 64;
  std::ptrdiff_t max_in_flight = 4;
  int max_attempts = 3;
  double timeout_seconds = 30.0;
};

/// Client for `POST /v1/score`.
std::unique_ptr<ScorerBackend> make_http_scorer(const std::string& base_url,
                                                const HttpScorerOptions& options = {});

/// "mock" or "http:<url>".
std::unique_ptr<ScorerBackend> make_scorer(const std::string& spec);

}  // namespace pkground
