#pragma once

#include <memory>
#include <string>

#include "refgrid/editor.hpp"

namespace refgrid::net {

/// Binds an EditorService to an HTTP listener (localhost by default).
class EditorServer {
 public:
  explicit EditorServer(std::shared_ptr<EditorService> service, std::string host = "127.0.0.1");
  ~EditorServer();
  EditorServer(const EditorServer&) = delete;
  EditorServer& operator=(const EditorServer&) = delete;

  /// Binds `port` (0 picks a free one) and returns the bound port; -1 on failure.
  int bind(int port);
  /// Blocks until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace refgrid::net
