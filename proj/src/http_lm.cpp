#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include <nlohmann/json.hpp>

#include "http_util.hpp"
#include "pkground/decoder.hpp"
#include "pkground/error.hpp"
// after Eigen: glibc's resolv.h defines a _res macro that clashes with Eigen internals
#include <httplib.h>

namespace pkground {

namespace {

class HttpLanguageModel final : public LanguageModel {
 public:
  HttpLanguageModel(std::string url, const HttpLanguageModelOptions& options)
      : url_(std::move(url)), endpoint_(detail::parse_endpoint(url_)), options_(options) {
    if (options_.top_k < 1) throw UsageError("http LM: top_k must be >= 1");
    if (options_.eos_token < 0 || options_.vocab_size < 0) {
      const auto health = call("GET", "/healthz", nlohmann::json());
      if (options_.eos_token < 0) options_.eos_token = field(health, "eos_token_id");
      if (options_.vocab_size < 0) options_.vocab_size = field(health, "vocab_size");
    }
    if (options_.eos_token >= options_.vocab_size) {
      throw ProtocolError(identity() + ": eos token outside the vocabulary");
    }
  }

  std::string identity() const override { return "remote:" + url_; }
  std::size_t vocab_size() const override { return static_cast<std::size_t>(options_.vocab_size); }
  TokenId eos_token() const override { return static_cast<TokenId>(options_.eos_token); }
  std::size_t max_context_length() const override { return options_.max_context; }
  bool truncated_distribution() const override { return true; }

  LogProbs next_logprobs(std::span<const TokenId> context,
                         std::span<const TokenId> generated) const override {
    std::vector<TokenId> prefix(context.begin(), context.end());
    prefix.insert(prefix.end(), generated.begin(), generated.end());
    const auto response = call("POST", "/v1/logits",
                               {{"prefix_tokens", prefix}, {"top_k", options_.top_k}});
    try {
      const auto tokens = response.at("tokens").get<std::vector<std::int64_t>>();
      const auto logprobs = response.at("logprobs").get<std::vector<double>>();
      if (tokens.size() != logprobs.size()) {
        throw ProtocolError(identity() + ": tokens and logprobs differ in length");
      }
      if (tokens.size() > static_cast<std::size_t>(options_.top_k)) {
        throw ProtocolError(identity() + ": more than top_k tokens returned");
      }
      LogProbs out = LogProbs::Constant(options_.vocab_size, -std::numeric_limits<double>::infinity());
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] < 0 || tokens[i] >= options_.vocab_size) {
          throw ProtocolError(identity() + ": token id " + std::to_string(tokens[i]) + " out of range");
        }
        if (i > 0 && logprobs[i] > logprobs[i - 1]) {
          throw ProtocolError(identity() + ": logprobs are not sorted in descending order");
        }
        out(tokens[i]) = logprobs[i];
      }
      return out;
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(identity() + ": malformed /v1/logits response: " + e.what());
    }
  }

  TokenSequence tokenize(const std::string& text) const override {
    const auto response = call("POST", "/v1/tokenize", {{"text", text}});
    try {
      return response.at("tokens").get<TokenSequence>();
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(identity() + ": malformed /v1/tokenize response: " + e.what());
    }
  }

  std::string detokenize(std::span<const TokenId> tokens) const override {
    TokenSequence kept;
    for (const TokenId token : tokens) {
      if (token != eos_token()) kept.push_back(token);
    }
    const auto response = call("POST", "/v1/detokenize", {{"tokens", kept}});
    try {
      return response.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(identity() + ": malformed /v1/detokenize response: " + e.what());
    }
  }

 private:
  long field(const nlohmann::json& j, const char* key) const {
    if (!j.contains(key) || !j.at(key).is_number_integer()) {
      throw ProtocolError(identity() + ": /healthz does not report '" + key +
                          "'; pass it explicitly");
    }
    return j.at(key).get<long>();
  }

  nlohmann::json call(const std::string& method, const std::string& route,
                      const nlohmann::json& body) const {
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(options_.timeout_seconds));
    std::string last_error;
    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
      httplib::Client client(endpoint_.origin);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      auto result = method == "GET" ? client.Get(endpoint_.path(route))
                                     : client.Post(endpoint_.path(route), body.dump(), "application/json");
      if (!result) {
        last_error = httplib::to_string(result.error());
      } else if (result->status >= 500) {
        last_error = "HTTP " + std::to_string(result->status);
      } else if (result->status != 200) {
        throw ProtocolError(identity() + route + ": HTTP " + std::to_string(result->status) + ": " +
                            result->body);
      } else {
        try {
          return nlohmann::json::parse(result->body);
        } catch (const nlohmann::json::parse_error& e) {
          throw ProtocolError(identity() + route + ": malformed response: " + e.what());
        }
      }
      if (attempt < options_.max_attempts) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));
      }
    }
    throw TransportError(identity() + route + ": " + last_error, options_.max_attempts);
  }

  std::string url_;
  detail::Endpoint endpoint_;
  HttpLanguageModelOptions options_;
};

}  // namespace

std::unique_ptr<LanguageModel> make_http_lm(const std::string& base_url,
                                            const HttpLanguageModelOptions& options) {
  return std::make_unique<HttpLanguageModel>(base_url, options);
}

}  // namespace pkground
