#include "escape/label_server.hpp"

#include <fstream>
#include <iterator>
#include <mutex>
#include <regex>
#include <thread>

#include <httplib.h>

#include "escape/scrape.hpp"

namespace escape {

using nlohmann::json;

struct LabelServer::Impl {
  LabelSession& session;
  std::mutex mu;
  httplib::Server server;
  std::thread worker;

  explicit Impl(LabelSession& s) : session(s) {}

  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, json{{"error", message}});
  }

  void routes() {
    server.Get("/api/queue/next", [this](const httplib::Request&, httplib::Response& res) {
      std::lock_guard lock(mu);
      auto item = session.next_queued();
      if (!item) {
        res.status = 204;
        return;
      }
      json body{{"clip_id", item->clip_id},
                {"transcript", item->transcript ? json(*item->transcript) : json(nullptr)},
                {"audio_url", "/api/audio/" + url_encode(item->clip_id)},
                {"queued_remaining", item->queued_remaining}};
      send_json(res, 200, body);
    });

    server.Get(R"(/api/audio/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::optional<std::filesystem::path> path;
      {
        std::lock_guard lock(mu);
        if (const auto* rec = session.archive().find(req.matches[1].str())) path = session.archive().audio_path(*rec);
      }
      if (!path) return send_error(res, 404, "no audio for clip '" + req.matches[1].str() + "'");
      std::ifstream in(*path, std::ios::binary);
      if (!in) return send_error(res, 404, "audio file missing");
      res.status = 200;
      res.set_content(std::string{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()},
                      "audio/wav");
    });

    server.Post("/api/labels", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("clip_id") || !body.contains("label") ||
          !body["clip_id"].is_string() || !body["label"].is_string()) {
        return send_error(res, 400, "expected a JSON object {clip_id, label}");
      }
      std::lock_guard lock(mu);
      try {
        const auto r = session.submit_label(body["clip_id"].get<std::string>(), body["label"].get<std::string>());
        send_json(res, 200,
                  json{{"accepted", r.accepted}, {"auto_propagated", r.auto_propagated}, {"remaining", r.remaining}});
      } catch (const UnknownClip& e) {
        send_error(res, 404, e.what());
      } catch (const UnknownLabel& e) {
        send_error(res, 400, e.what());
      }
    });

    server.Get("/api/stats", [this](const httplib::Request&, httplib::Response& res) {
      std::lock_guard lock(mu);
      const auto s = session.stats();
      send_json(res, 200,
                json{{"manual", s.manual},
                     {"propagated", s.propagated},
                     {"classified", s.classified},
                     {"queued", s.queued},
                     {"total", s.total}});
    });

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      send_error(res, 500, what);
    });
  }
};

LabelServer::LabelServer(LabelSession& session, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(session)) {
  impl_->routes();
  if (static_dir && !impl_->server.set_mount_point("/", static_dir->string())) {
    throw ConfigError("static directory not found: " + static_dir->string());
  }
}

LabelServer::~LabelServer() { stop(); }

int LabelServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void LabelServer::serve() { impl_->server.listen_after_bind(); }

int LabelServer::start(const std::string& host, int port) {
  const int bound = bind(host, port);
  impl_->worker = std::thread([this] { serve(); });
  impl_->server.wait_until_ready();
  return bound;
}

void LabelServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

std::pair<std::string, int> parse_bind_address(const std::string& addr) {
  static const std::regex re(R"(^(?:([^:]*):)?(\d{1,5})$)");
  std::smatch m;
  if (!std::regex_match(addr, m, re)) throw ConfigError("bad bind address '" + addr + "' (want host:port)");
  const int port = std::stoi(m[2].str());
  if (port > 65535) throw ConfigError("port out of range in '" + addr + "'");
  std::string host = m[1].matched && !m[1].str().empty() ? m[1].str() : "127.0.0.1";
  return {host, port};
}

}  // namespace escape
