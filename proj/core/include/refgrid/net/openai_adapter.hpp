#pragma once

#include <optional>
#include <string>

#include "refgrid/eval.hpp"

namespace refgrid::net {

struct EndpointConfig {
  std::string base_url;  // e.g. https://api.example.com/v1
  std::string api_key;
  std::string model;
  int timeout_seconds = 120;
};

/// Reads REFGRID_API_BASE and REFGRID_API_KEY; nullopt when the base URL is unset.
std::optional<EndpointConfig> endpoint_from_env(const std::string& model);

/// Chat-completions client for OpenAI-compatible endpoints. 429 and 5xx are
/// retryable; context-length rejections surface as ContextOverflow.
class OpenAiAdapter : public ModelAdapter {
 public:
  explicit OpenAiAdapter(EndpointConfig config);
  std::string model_id() const override { return config_.model; }
  Completion complete(const AdapterRequest& request) override;

  /// Request body for `request` (exposed for tests).
  nlohmann::json request_body(const AdapterRequest& request) const;
  /// Extracts the reply; throws TransportError for error payloads.
  static Completion parse_response(int status, const std::string& body);

 private:
  EndpointConfig config_;
};

}  // namespace refgrid::net
