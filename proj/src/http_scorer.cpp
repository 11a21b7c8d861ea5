#include <chrono>
#include <semaphore>
#include <thread>

#include <nlohmann/json.hpp>

#include "http_util.hpp"
#include "pkground/error.hpp"
#include "pkground/scorer.hpp"
// after Eigen: glibc's resolv.h defines a _res macro that clashes with Eigen internals
#include <httplib.h>

namespace pkground {

namespace {

class HttpScorer final : public ScorerBackend {
 public:
  HttpScorer(std::string url, const HttpScorerOptions& options)
      : url_(std::move(url)),
        endpoint_(detail::parse_endpoint(url_)),
        options_(options),
        in_flight_(std::max<std::ptrdiff_t>(1, options.max_in_flight)) {
    if (options_.max_batch == 0) throw UsageError("http scorer: max batch must be >= 1");
  }

  std::string identity() const override { return "remote:" + url_; }

  std::vector<double> score(std::span<const TextPair> pairs) const override {
    std::vector<double> scores;
    scores.reserve(pairs.size());
    for (std::size_t begin = 0; begin < pairs.size(); begin += options_.max_batch) {
      const auto chunk = pairs.subspan(begin, std::min(options_.max_batch, pairs.size() - begin));
      auto part = request(chunk);
      scores.insert(scores.end(), part.begin(), part.end());
    }
    return scores;
  }

 private:
  std::vector<double> request(std::span<const TextPair> chunk) const {
    nlohmann::json body;
    body["pairs"] = nlohmann::json::array();
    for (const auto& pair : chunk) {
      body["pairs"].push_back({{"question", pair.question}, {"answer", pair.answer}});
    }
    const auto payload = body.dump();

    std::string last_error;
    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
      in_flight_.acquire();
      httplib::Result result;
      {
        httplib::Client client(endpoint_.origin);
        const auto timeout = std::chrono::duration<double>(options_.timeout_seconds);
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        result = client.Post(endpoint_.path("/v1/score"), payload, "application/json");
      }
      in_flight_.release();

      if (!result) {
        last_error = httplib::to_string(result.error());
      } else if (result->status >= 500) {
        last_error = "HTTP " + std::to_string(result->status);
      } else {
        return parse(*result, chunk.size());
      }
      if (attempt < options_.max_attempts) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));
      }
    }
    throw TransportError(identity() + ": " + last_error, options_.max_attempts);
  }

  std::vector<double> parse(const httplib::Response& response, std::size_t expected) const {
    if (response.status != 200) {
      throw ProtocolError(identity() + ": HTTP " + std::to_string(response.status) + ": " +
                          response.body);
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(response.body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ProtocolError(identity() + ": malformed response: " + e.what());
    }
    if (!j.is_object() || !j.contains("scores") || !j.at("scores").is_array()) {
      throw ProtocolError(identity() + ": response lacks a 'scores' array");
    }
    std::vector<double> scores;
    for (const auto& value : j.at("scores")) {
      if (!value.is_number()) throw ProtocolError(identity() + ": non-numeric score");
      scores.push_back(value.get<double>());
    }
    if (scores.size() != expected) {
      throw ProtocolError(identity() + ": returned " + std::to_string(scores.size()) +
                          " scores for " + std::to_string(expected) + " pairs");
    }
    return scores;
  }

  std::string url_;
  detail::Endpoint endpoint_;
  HttpScorerOptions options_;
  mutable std::counting_semaphore<> in_flight_;
};

}  // namespace

std::unique_ptr<ScorerBackend> make_http_scorer(const std::string& base_url,
                                                const HttpScorerOptions& options) {
  return std::make_unique<HttpScorer>(base_url, options);
}

}  // namespace pkground
