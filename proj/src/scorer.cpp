#include "pkground/scorer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "http_util.hpp"
#include "pkground/error.hpp"

namespace pkground {

namespace {

constexpr std::string_view kEdgePunctuation = ".,!?;:'\"()";

bool is_edge_punct(char c) { return kEdgePunctuation.find(c) != std::string_view::npos; }

std::set<std::string> token_set(std::string_view text) {
  auto tokens = lexical_tokens(text);
  return {std::make_move_iterator(tokens.begin()), std::make_move_iterator(tokens.end())};
}

}  // namespace

std::vector<std::string> lexical_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::size_t begin = i;
    std::size_t end = j;
    while (begin < end && is_edge_punct(text[begin])) ++begin;
    while (end > begin && is_edge_punct(text[end - 1])) --end;
    if (begin < end) {
      std::string token(text.substr(begin, end - begin));
      std::transform(token.begin(), token.end(), token.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      tokens.push_back(std::move(token));
    }
    i = j;
  }
  return tokens;
}

double mock_lexical_score(std::string_view question, std::string_view answer) {
  const auto q = token_set(question);
  const auto a = token_set(answer);
  if (q.empty() && a.empty()) return 1.0;
  if (q.empty() || a.empty()) return 0.0;
  std::size_t overlap = 0;
  for (const auto& token : q) overlap += a.count(token);
  return 2.0 * static_cast<double>(overlap) / static_cast<double>(q.size() + a.size());
}

std::vector<double> MockLexicalScorer::score(std::span<const TextPair> pairs) const {
  std::vector<double> scores;
  scores.reserve(pairs.size());
  for (const auto& pair : pairs) scores.push_back(mock_lexical_score(pair.question, pair.answer));
  return scores;
}

std::vector<double> CountingScorer::score(std::span<const TextPair> pairs) const {
  pairs_ += pairs.size();
  ++calls_;
  return inner_.score(pairs);
}

std::vector<double> score_batch(const ScorerBackend& backend, std::span<const TextPair> pairs) {
  if (pairs.empty()) throw UsageError("score_batch: empty batch");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].question.empty() || pairs[i].answer.empty()) {
      throw UsageError("score_batch: empty string in pair " + std::to_string(i));
    }
  }
  auto scores = backend.score(pairs);
  if (scores.size() != pairs.size()) {
    throw ProtocolError(backend.identity() + ": returned " + std::to_string(scores.size()) +
                        " scores for " + std::to_string(pairs.size()) + " pairs");
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i]) || scores[i] < 0.0 || scores[i] > 1.0) {
      throw ProtocolError(backend.identity() + ": score " + std::to_string(scores[i]) +
                          " at position " + std::to_string(i) + " is outside [0,1]");
    }
  }
  return scores;
}

std::unique_ptr<ScorerBackend> make_scorer(const std::string& spec) {
  if (spec == "mock" || spec == "mock-lexical") return std::make_unique<MockLexicalScorer>();
  if (const auto url = detail::remote_url(spec); !url.empty()) return make_http_scorer(url);
  throw UsageError("unknown scorer '" + spec + "' (expected mock or http:<url>)");
}

}  // namespace pkground
