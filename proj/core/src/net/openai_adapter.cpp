#include "refgrid/net/openai_adapter.hpp"

#include <cstdlib>

#include <fmt/format.h>
#include <httplib.h>

namespace refgrid::net {

using nlohmann::json;

std::optional<EndpointConfig> endpoint_from_env(const std::string& model) {
  const char* base = std::getenv("REFGRID_API_BASE");
  if (!base || !*base) return std::nullopt;
  const char* key = std::getenv("REFGRID_API_KEY");
  return EndpointConfig{base, key ? key : "", model, 120};
}

OpenAiAdapter::OpenAiAdapter(EndpointConfig config) : config_(std::move(config)) {
  while (!config_.base_url.empty() && config_.base_url.back() == '/') config_.base_url.pop_back();
}

json OpenAiAdapter::request_body(const AdapterRequest& request) const {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  json body{{"model", config_.model}, {"messages", messages}, {"temperature", request.decoding.temperature}};
  if (request.decoding.reasoning_effort.empty()) {
    body["max_tokens"] = request.decoding.answer_tokens;
  } else {
    body["reasoning_effort"] = request.decoding.reasoning_effort;
    body["max_completion_tokens"] = request.decoding.answer_tokens + request.decoding.thinking_tokens;
  }
  return body;
}

Completion OpenAiAdapter::parse_response(int status, const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error&) {
    throw TransportError(fmt::format("HTTP {}: non-JSON response", status), status == 429 || status >= 500);
  }
  if (status != 200 || j.contains("error")) {
    std::string msg = j.contains("error") && j["error"].is_object() ? j["error"].value("message", "") : body;
    std::string code = j.contains("error") && j["error"].is_object() && j["error"].contains("code") &&
                               j["error"]["code"].is_string()
                           ? j["error"]["code"].get<std::string>()
                           : "";
    if (code == "context_length_exceeded" || msg.find("maximum context length") != std::string::npos) {
      throw ContextOverflow(msg);
    }
    throw TransportError(fmt::format("HTTP {}: {}", status, msg), status == 429 || status >= 500);
  }
  try {
    Completion c;
    const auto& content = j.at("choices").at(0).at("message").at("content");
    c.text = content.is_string() ? content.get<std::string>() : "";
    if (j.contains("usage")) {
      c.prompt_tokens = j["usage"].value("prompt_tokens", 0);
      c.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
    return c;
  } catch (const json::exception& e) {
    throw TransportError(std::string("unexpected response shape: ") + e.what(), false);
  }
}

Completion OpenAiAdapter::complete(const AdapterRequest& request) {
  // Split "https://host:port/prefix" into the client origin and the path prefix.
  auto scheme_end = config_.base_url.find("://");
  auto path_start = config_.base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  std::string origin = config_.base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : config_.base_url.substr(path_start);

  httplib::Client client(origin);
  client.set_connection_timeout(config_.timeout_seconds);
  client.set_read_timeout(config_.timeout_seconds);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  auto res = client.Post(prefix + "/chat/completions", headers, request_body(request).dump(), "application/json");
  if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()), true);
  return parse_response(res->status, res->body);
}

}  // namespace refgrid::net
