#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "ccprobe/annotation.hpp"

namespace ccprobe::annotation {

/// HTTP front end for a Store:
///   GET  /api/patterns?status=unlabeled&limit=N
///   GET  /api/patterns/{key}/examples?n=M
///   POST /api/patterns/{key}/label   {"label": "...", "annotator": "..."}
///   GET  /api/progress
///   GET  /api/export
/// plus the UI bundle from `static_dir` at "/".
class Server {
public:
  Server(Store& store, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  int start(const std::string& host = "127.0.0.1", int port = 0);
  void listen(const std::string& host, int port);
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ccprobe::annotation
