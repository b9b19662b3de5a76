#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "refgrid/level.hpp"
#include "refgrid/probe_registry.hpp"
#include "refgrid/trajectory.hpp"

namespace refgrid {

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;

  static ApiResponse json(int status, const nlohmann::json& body);
  static ApiResponse text(int status, std::string body, std::string content_type = "text/plain; charset=utf-8");
  nlohmann::json parsed() const { return nlohmann::json::parse(body); }
};

class ApiError : public std::runtime_error {
 public:
  ApiError(int status, const std::string& message, nlohmann::json detail = nullptr)
      : std::runtime_error(message), status_(status), detail_(std::move(detail)) {}
  int status() const { return status_; }
  const nlohmann::json& detail() const { return detail_; }

 private:
  int status_;
  nlohmann::json detail_;
};

struct EditorOptions {
  /// Root for level_file paths named in requests and in recorded segments.
  std::filesystem::path levels_root = ".";
  std::shared_ptr<const ProbeRegistry> registry;
};

/// Key -> action for the recorder (WASD, G/F, T).
const std::map<std::string, Action>& recorder_keymap();

/// Transport-free editor/recorder backend. Requests for one session run one
/// at a time; distinct sessions proceed in parallel.
class EditorService {
 public:
  explicit EditorService(EditorOptions options = {});
  ~EditorService();

  ApiResponse handle(std::string_view method, std::string_view path, std::string_view body);

 private:
  struct Session;
  std::shared_ptr<Session> session(const std::string& id);
  ApiResponse create_session(const nlohmann::json& body);
  ApiResponse dispatch(Session& s, std::string_view method, std::string_view action, const nlohmann::json& body);

  EditorOptions options_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::atomic<long> next_id_{1};
};

/// The blank room a session starts from when no level is given: walls around,
/// agent in the middle facing north.
LevelSpec blank_level(int width, int height, std::string id = "untitled");

}  // namespace refgrid
