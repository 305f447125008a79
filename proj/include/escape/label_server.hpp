#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "escape/labels.hpp"

namespace escape {

/// HTTP front end for a LabelSession:
///   GET  /api/queue/next      200 {clip_id, transcript, audio_url, queued_remaining} | 204
///   GET  /api/audio/{clip_id} audio/wav bytes | 404
///   POST /api/labels          {clip_id, label} -> 200 {accepted, auto_propagated, remaining} | 400 | 404
///   GET  /api/stats           {manual, propagated, classified, queued, total}
/// Requests run on the server's worker threads; every session call is made
/// under one mutex.
class LabelServer {
 public:
  explicit LabelServer(LabelSession& session, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~LabelServer();
  LabelServer(const LabelServer&) = delete;
  LabelServer& operator=(const LabelServer&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  /// Throws Error when the address cannot be bound.
  int bind(const std::string& host, int port);
  /// Serves on the bound socket until stop(); blocks.
  void serve();
  /// bind() + serve() on a background thread.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// "host:port" or ":port" or "port"; host defaults to 127.0.0.1.
std::pair<std::string, int> parse_bind_address(const std::string& addr);

}  // namespace escape
