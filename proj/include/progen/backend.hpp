#ifndef PROGEN_BACKEND_HPP_
#define PROGEN_BACKEND_HPP_

// Backend selection: exactly one of an HTTP service or the mock world.

#include <memory>
#include <optional>
#include <string_view>

#include "progen/generator.hpp"
#include "progen/http_backend.hpp"
#include "progen/mock_world.hpp"

namespace progen {

enum class BackendKind { kHttp, kMock };

struct BackendConfig {
  BackendKind kind = BackendKind::kMock;
  std::optional<HttpConfig> http;
  std::optional<MockWorldConfig> mock;

  void validate() const {
    if (http.has_value() == mock.has_value())
      throw ConfigError("backend needs exactly one of http or mock");
    if (kind == BackendKind::kHttp && !http) throw ConfigError("backend kind HTTP without http block");
    if (kind == BackendKind::kMock && !mock) throw ConfigError("backend kind MOCK without mock block");
    if (http) http->validate();
    if (mock) mock->validate();
  }
};

inline std::unique_ptr<GeneratorBackend> make_backend(const BackendConfig& cfg,
                                                      const PromptTemplate& tmpl) {
  cfg.validate();
  if (cfg.kind == BackendKind::kHttp) return std::make_unique<HttpBackend>(*cfg.http);
  return std::make_unique<MockBackend>(*cfg.mock, tmpl.label_words);
}

}  // namespace progen

#endif  // PROGEN_BACKEND_HPP_
