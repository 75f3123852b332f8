#ifndef PROGEN_HTTP_BACKEND_HPP_
#define PROGEN_HTTP_BACKEND_HPP_

// Client for an OpenAI-compatible completions endpoint.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "progen/common.hpp"
#include "progen/generator.hpp"

namespace progen {

struct HttpConfig {
  std::string base_url;  // e.g. http://127.0.0.1:8000
  std::string model_name;
  std::string auth_env_var;  // empty: no Authorization header
  double timeout_s = 60.0;
  int max_inflight = 4;
  int max_retries = 4;
  double initial_backoff_s = 0.5;
  double max_backoff_s = 30.0;

  void validate() const {
    if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0)
      throw ConfigError("base_url must start with http:// or https://");
    if (model_name.empty()) throw ConfigError("model_name is required");
    if (!(timeout_s > 0.0)) throw ConfigError("timeout must be > 0");
    if (max_inflight < 1) throw ConfigError("max_inflight must be >= 1");
    if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (!(initial_backoff_s >= 0.0) || max_backoff_s < initial_backoff_s)
      throw ConfigError("bad backoff range");
  }
};

/// The request body. Field order is fixed so identical inputs give
/// byte-identical bodies.
inline std::string completion_request_body(const std::string& model,
                                           const PromptRequest& req) {
  nlohmann::ordered_json body;
  body["model"] = model;
  body["prompt"] = req.prompt;
  body["max_tokens"] = req.sampling.max_tokens;
  body["top_p"] = req.sampling.top_p;
  body["temperature"] = req.sampling.temperature;
  body["stop"] = req.sampling.stop;
  return body.dump();
}

inline bool is_retryable_status(int status) {
  return status == 408 || status == 429 || status >= 500;
}

class HttpBackend : public GeneratorBackend {
 public:
  explicit HttpBackend(HttpConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    // Split "scheme://host[:port]/prefix" into the client origin and a path.
    const auto scheme_end = cfg_.base_url.find("://") + 3;
    const auto slash = cfg_.base_url.find('/', scheme_end);
    origin_ = cfg_.base_url.substr(0, slash);
    std::string prefix = slash == std::string::npos ? "" : cfg_.base_url.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    path_ = prefix + "/v1/completions";
  }

  const std::string& path() const { return path_; }

  std::vector<std::optional<std::string>> generate_batch(
      std::span<const PromptRequest> requests) override {
    for (const auto& r : requests) r.sampling.validate();
    std::vector<std::optional<std::string>> out(requests.size());
    std::vector<std::exception_ptr> errors(requests.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      auto client = make_client();
      for (std::size_t i = next++; i < requests.size(); i = next++) {
        try {
          out[i] = finish_completion(post_with_retry(*client, requests[i]), requests[i].sampling);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const auto n_workers =
        std::min<std::size_t>(static_cast<std::size_t>(cfg_.max_inflight), requests.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    if (n_workers > 0) worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    return out;
  }

 private:
  std::unique_ptr<httplib::Client> make_client() const {
    auto client = std::make_unique<httplib::Client>(origin_);
    const auto timeout = std::chrono::duration<double>(cfg_.timeout_s);
    const auto secs = static_cast<time_t>(cfg_.timeout_s);
    const auto usecs = static_cast<time_t>((timeout.count() - static_cast<double>(secs)) * 1e6);
    client->set_connection_timeout(secs, usecs);
    client->set_read_timeout(secs, usecs);
    client->set_write_timeout(secs, usecs);
    if (!cfg_.auth_env_var.empty()) {
      if (const char* token = std::getenv(cfg_.auth_env_var.c_str()); token && *token)
        client->set_bearer_token_auth(token);
    }
    return client;
  }

  std::string post_with_retry(httplib::Client& client, const PromptRequest& req) const {
    const auto body = completion_request_body(cfg_.model_name, req);
    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0) {
        const double wait = std::min(cfg_.max_backoff_s,
                                     cfg_.initial_backoff_s * std::pow(2.0, attempt - 1));
        std::this_thread::sleep_for(std::chrono::duration<double>(wait));
      }
      auto res = client.Post(path_, body, "application/json");
      if (!res) {
        last_error = "request failed: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 200) return parse_completion(res->body);
      last_error = "HTTP " + std::to_string(res->status);
      if (!is_retryable_status(res->status))
        throw BackendError(last_error + " from " + origin_ + path_);
    }
    throw BackendError("giving up after " + std::to_string(cfg_.max_retries + 1) +
                       " attempts: " + last_error);
  }

  static std::string parse_completion(const std::string& body) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("malformed completion response: ") + e.what());
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty() ||
        !j["choices"][0].contains("text") || !j["choices"][0]["text"].is_string())
      throw BackendError("completion response lacks choices[0].text");
    return j["choices"][0]["text"].get<std::string>();
  }

  HttpConfig cfg_;
  std::string origin_;
  std::string path_;
};

}  // namespace progen

#endif  // PROGEN_HTTP_BACKEND_HPP_
