#include <doctest.h>

#include <thread>

#include "escape/label_server.hpp"
#include "support.hpp"

// After Eigen: <resolv.h> defines a _res macro.
#include <httplib.h>

using namespace escape;
using nlohmann::json;
using escape::testing::axis;
using escape::testing::unit_signature;

namespace {

/// Fixture archive; clips with audio get signatures in two far-apart groups
/// (rec-01, 03, 05, 07 near the origin; rec-02, 04, 06, 08 near 40 e0) so
/// nothing propagates across groups.
struct ServerFixture {
  testing::TempDir dir;
  Archive archive;
  LabelStore store;
  std::unique_ptr<LabelSession> session;
  std::unique_ptr<LabelServer> server;
  std::unique_ptr<httplib::Client> client;

  ServerFixture()
      : archive((testing::build_fixture_archive(dir.path()), open_archive(dir.path()))),
        store(archive.labels_path(), [] { return std::string("2020-01-01T00:00:00Z"); }) {
    std::vector<GaussianSignature> sigs;
    int n = 0;
    for (const auto& r : archive.records()) {
      if (!r.audio_file) continue;
      const bool near_origin = n % 2 == 0;
      sigs.push_back(unit_signature(r.id, axis(13, near_origin ? 1 : 0, near_origin ? 0.1 * n : 40.0 + 0.1 * n)));
      ++n;
    }
    session = std::make_unique<LabelSession>(archive, std::move(sigs), store);
    server = std::make_unique<LabelServer>(*session);
    const int port = server->start("127.0.0.1", 0);
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
  }

  httplib::Result post(const json& body) { return client->Post("/api/labels", body.dump(), "application/json"); }
};

}  // namespace

TEST_SUITE("label_server") {
  TEST_CASE("queue, audio, labels and stats over HTTP") {
    ServerFixture f;
    auto res = f.client->Get("/api/queue/next");
    REQUIRE(res);
    CHECK(res->status == 200);
    auto j = json::parse(res->body);
    CHECK(j["clip_id"] == "rec-01");
    CHECK(j["transcript"] == "set timer for five minutes");
    CHECK(j["audio_url"] == "/api/audio/rec-01");
    CHECK(j["queued_remaining"] == 8);

    auto audio = f.client->Get(j["audio_url"].get<std::string>());
    REQUIRE(audio);
    CHECK(audio->status == 200);
    CHECK(audio->get_header_value("Content-Type") == "audio/wav");
    CHECK(audio->body == testing::slurp(f.dir / "audio/rec-01.wav"));

    res = f.post({{"clip_id", "rec-01"}, {"label", "Male"}});
    REQUIRE(res);
    CHECK(res->status == 200);
    j = json::parse(res->body);
    CHECK(j["accepted"] == true);
    CHECK(j["auto_propagated"] == 3);
    CHECK(j["remaining"] == 4);

    res = f.client->Get("/api/stats");
    REQUIRE(res);
    j = json::parse(res->body);
    CHECK(j == json{{"manual", 1}, {"propagated", 3}, {"classified", 0}, {"queued", 4}, {"total", 8}});

    res = f.client->Get("/api/queue/next");
    CHECK(json::parse(res->body)["clip_id"] == "rec-02");
    res = f.post({{"clip_id", "rec-02"}, {"label", "Female"}});
    CHECK(json::parse(res->body)["remaining"] == 0);
    res = f.client->Get("/api/queue/next");
    REQUIRE(res);
    CHECK(res->status == 204);

    // Labels are persisted to the archive's label file.
    LabelStore reloaded(f.archive.labels_path());
    CHECK(reloaded.count(LabelSource::kManual) == 2);
    CHECK(reloaded.count(LabelSource::kPropagated) == 6);
  }

  TEST_CASE("error statuses") {
    ServerFixture f;
    auto res = f.post({{"clip_id", "rec-01"}, {"label", "Robot"}});
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(json::parse(res->body).contains("error"));
    res = f.post({{"clip_id", "nope"}, {"label", "Male"}});
    CHECK(res->status == 404);
    res = f.client->Post("/api/labels", "{not json", "application/json");
    CHECK(res->status == 400);
    res = f.post({{"clip_id", 3}, {"label", "Male"}});
    CHECK(res->status == 400);
    res = f.client->Get("/api/audio/rec-09");  // record without audio
    CHECK(res->status == 404);
    res = f.client->Get("/api/audio/unknown");
    CHECK(res->status == 404);
    CHECK(f.store.records().empty());
  }

  TEST_CASE("concurrent submissions are serialized") {
    ServerFixture f;
    const int port = f.client->port();
    std::vector<std::thread> threads;
    std::vector<int> statuses(8, 0);
    const std::vector<std::string> ids{"rec-01", "rec-02", "rec-03", "rec-04", "rec-05", "rec-06", "rec-07", "rec-08"};
    for (std::size_t i = 0; i < ids.size(); ++i) {
      threads.emplace_back([&, i] {
        httplib::Client c("127.0.0.1", port);
        auto r = c.Post("/api/labels", json{{"clip_id", ids[i]}, {"label", i % 2 ? "Female" : "Male"}}.dump(),
                        "application/json");
        statuses[i] = r ? r->status : -1;
      });
    }
    for (auto& t : threads) t.join();
    for (int s : statuses) CHECK(s == 200);
    CHECK(f.store.count(LabelSource::kManual) == 8);
    LabelStore reloaded(f.archive.labels_path());
    CHECK(reloaded.count(LabelSource::kManual) == 8);
    auto res = f.client->Get("/api/queue/next");
    CHECK(res->status == 204);
  }

  TEST_CASE("bind address parsing") {
    CHECK(parse_bind_address("0.0.0.0:8080") == std::pair<std::string, int>{"0.0.0.0", 8080});
    CHECK(parse_bind_address(":9000") == std::pair<std::string, int>{"127.0.0.1", 9000});
    CHECK(parse_bind_address("7000") == std::pair<std::string, int>{"127.0.0.1", 7000});
    CHECK_THROWS_AS(parse_bind_address("host:"), ConfigError);
    CHECK_THROWS_AS(parse_bind_address("h:99999"), ConfigError);
  }
}
