#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "escape/archive.hpp"
#include "escape/gaussian.hpp"
#include "escape/wav.hpp"

namespace httplib {
class Server;
}

namespace escape::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

enum class Voice { kMale, kFemale };

/// Voiced speech-like waveform: a harmonic source (f0 near 110 Hz for kMale,
/// 210 Hz for kFemale, jittered per clip) shaped by a fixed wake-word vowel
/// sequence with per-clip timing, formants scaled up 18% for kFemale, plus
/// low-level noise.
AudioClip synth_voice(Voice voice, std::uint64_t seed, double seconds = 1.6, int sample_rate = 16000,
                      std::string id = {});

/// The 10-record fixture: 7 SUCCESS / 3 FAULT, 6 on device A / 4 on device B,
/// 8 with audio. rec-01..rec-08 alternate Male/Female voices starting with Male.
std::vector<InteractionRecord> fixture_records();
/// rec-01 .. rec-10.
std::string fmt_id(std::size_t i);
Voice fixture_voice(const std::string& id);

/// Writes the fixture archive (records and synthetic audio) under root.
void build_fixture_archive(const std::filesystem::path& root);
/// Appends manual labels for every fixture clip with audio.
void write_fixture_labels(const std::filesystem::path& root);

/// Signature with identity covariance and the given mean (13 dims by default).
GaussianSignature unit_signature(const std::string& id, const Eigen::VectorXd& mean);
/// e_k scaled by v in `dim` dimensions.
Eigen::VectorXd axis(int dim, int k, double v);

/// Activity listing server speaking the scraper's default schema:
///   GET /api/activities?offset=&size=   {"activities":[...]}
///   GET /api/activities/{id}/audio      WAV bytes
///   GET /old/activities                 302 to /api/activities (same query)
/// Requests without the expected Cookie header get 401.
class MockActivityServer {
 public:
  struct Entry {
    nlohmann::json activity;
    std::optional<std::string> audio;  // served when present
  };

  explicit MockActivityServer(std::vector<Entry> entries, std::string cookie = "session=fixture");
  ~MockActivityServer();

  /// Three well-formed activities, all with audio.
  static std::vector<Entry> three_activities();

  std::string base_url() const;
  const std::string& cookie() const { return cookie_; }
  int port() const { return port_; }

  void set_unauthorized(bool v) { unauthorized_ = v; }
  /// The next n listing requests answer 503.
  void fail_next_listings(int n) { transient_failures_ = n; }
  int listing_requests() const { return listing_requests_; }
  int audio_requests() const { return audio_requests_; }

 private:
  std::vector<Entry> entries_;
  std::string cookie_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<bool> unauthorized_{false};
  std::atomic<int> transient_failures_{0};
  std::atomic<int> listing_requests_{0};
  std::atomic<int> audio_requests_{0};
};

/// Reads a whole file.
std::string slurp(const std::filesystem::path& p);

}  // namespace escape::testing
