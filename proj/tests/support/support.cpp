#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

#include <httplib.h>

#include "escape/random.hpp"

namespace escape::testing {

namespace fs = std::filesystem;
using nlohmann::json;

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = fs::temp_directory_path() /
          ("escape-test-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

namespace {

struct Vowel {
  double f[3];
};

constexpr Vowel kVowels[] = {
    {{730, 1090, 2440}}, {{270, 2290, 3010}}, {{300, 870, 2240}}, {{530, 1840, 2480}}, {{570, 840, 2410}}};
constexpr double kBandwidth[3] = {90, 110, 140};
constexpr double kFormantGain[3] = {1.0, 0.6, 0.3};

}  // namespace

AudioClip synth_voice(Voice voice, std::uint64_t seed, double seconds, int sample_rate, std::string id) {
  const bool female = voice == Voice::kFemale;
  Rng rng(mix_seed(seed, female ? 2 : 1));
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double f0 = (female ? 210.0 : 110.0) * (1.0 + 0.05 * gauss(rng));
  const double scale = (female ? 1.18 : 1.0) * (1.0 + 0.015 * gauss(rng));
  const double vibrato_phase = 2 * std::numbers::pi * uniform01(rng);
  // Every clip carries the same wake-word vowel sequence; only its timing varies.
  constexpr int kSegments = 4;
  constexpr int vowels[kSegments] = {0, 3, 1, 0};
  const double stretch = 1.0 + 0.08 * gauss(rng);

  const auto n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  const int max_harmonic = static_cast<int>(0.45 * sample_rate / f0);
  std::vector<double> amp(static_cast<std::size_t>(max_harmonic) + 1, 0.0);
  std::vector<double> samples(n);
  constexpr std::size_t kBlock = 80;
  double phase = 0.0;

  for (std::size_t start = 0; start < n; start += kBlock) {
    // Formants glide between consecutive vowels over each segment.
    const double pos = std::min(static_cast<double>(start) / static_cast<double>(n) * stretch, 1.0) * (kSegments - 1);
    const int seg = std::min(static_cast<int>(pos), kSegments - 2);
    const double w = std::clamp(pos - seg, 0.0, 1.0);
    const double mix = w * w * (3 - 2 * w);
    double formant[3];
    for (int f = 0; f < 3; ++f) {
      formant[f] = scale * ((1 - mix) * kVowels[vowels[seg]].f[f] + mix * kVowels[vowels[seg + 1]].f[f]);
    }
    for (int k = 1; k <= max_harmonic; ++k) {
      double a = 0.0;
      for (int f = 0; f < 3; ++f) {
        const double d = (k * f0 - formant[f]) / kBandwidth[f];
        a += kFormantGain[f] / (1.0 + d * d);
      }
      amp[static_cast<std::size_t>(k)] = a / k;
    }
    const std::size_t stop = std::min(n, start + kBlock);
    for (std::size_t i = start; i < stop; ++i) {
      const double t = static_cast<double>(i) / sample_rate;
      const double inst_f0 = f0 * (1.0 + 0.02 * std::sin(2 * std::numbers::pi * 5.0 * t + vibrato_phase));
      phase = std::fmod(phase + 2 * std::numbers::pi * inst_f0 / sample_rate, 2 * std::numbers::pi);
      double s = 0.0;
      for (int k = 1; k <= max_harmonic; ++k) s += amp[static_cast<std::size_t>(k)] * std::sin(k * phase);
      samples[i] = s;
    }
  }

  double peak = 0.0;
  for (double s : samples) peak = std::max(peak, std::abs(s));
  const double gain = (0.2 + 0.3 * uniform01(rng)) / std::max(peak, 1e-12);
  for (double& s : samples) s = std::clamp(s * gain + 0.002 * gauss(rng), -1.0, 32767.0 / 32768.0);
  return AudioClip{std::move(id), sample_rate, std::move(samples)};
}

std::vector<InteractionRecord> fixture_records() {
  const std::string a_serial = "G090LF0964750001", a_name = "Kitchen Echo";
  const std::string b_serial = "G090LF0964750002", b_name = "Living Room Echo";
  using T = std::optional<std::string>;
  struct Row {
    const char* status;
    bool device_a;
    bool audio;
    T transcript;
  };
  const Row rows[] = {
      {"SUCCESS", true, true, T("set timer for five minutes")},
      {"SUCCESS", true, true, T("play the smiths")},
      {"FAULT", true, true, T("alexa")},
      {"SUCCESS", false, true, T("how much does a tablespoon of sugar weigh")},
      {"SUCCESS", true, true, T("what is the temperature outside")},
      {"FAULT", false, true, std::nullopt},
      {"SUCCESS", true, true, T("turn the volume up")},
      {"SUCCESS", false, true, T("add milk to the shopping list")},
      {"SUCCESS", true, false, T("what was the football score")},
      {"FAULT", false, false, std::nullopt},
  };
  std::vector<InteractionRecord> out;
  for (std::size_t i = 0; i < std::size(rows); ++i) {
    const auto& r = rows[i];
    InteractionRecord rec;
    rec.id = fmt_id(i + 1);
    rec.timestamp_utc = "2017-03-0" + std::to_string(1 + i / 4) + "T0" + std::to_string(i % 4 + 6) + ":15:00Z";
    rec.device_serial = r.device_a ? a_serial : b_serial;
    rec.device_name = r.device_a ? a_name : b_name;
    rec.status = r.status;
    rec.transcript = r.transcript;
    if (r.audio) rec.audio_file = std::string(Archive::kAudioDir) + "/" + audio_file_stem(rec.id) + ".wav";
    out.push_back(std::move(rec));
  }
  return out;
}

std::string fmt_id(std::size_t i) { return (i < 10 ? "rec-0" : "rec-") + std::to_string(i); }

Voice fixture_voice(const std::string& id) {
  const int n = std::stoi(id.substr(4));
  return n % 2 == 1 ? Voice::kMale : Voice::kFemale;
}

void build_fixture_archive(const fs::path& root) {
  init_archive(root);
  const auto records = fixture_records();
  std::uint64_t seed = 100;
  for (const auto& r : records) {
    if (r.audio_file) write_wav(root / *r.audio_file, synth_voice(fixture_voice(r.id), seed++, 1.6, 16000, r.id));
  }
  write_records(root, records);
}

void write_fixture_labels(const fs::path& root) {
  std::ofstream f(root / Archive::kLabelsFile, std::ios::binary | std::ios::app);
  for (const auto& r : fixture_records()) {
    if (!r.audio_file) continue;
    const char* label = fixture_voice(r.id) == Voice::kMale ? "Male" : "Female";
    f << json{{"clip_id", r.id}, {"label", label}, {"source", "manual"}, {"labeled_at", "2017-04-01T00:00:00Z"}}
             .dump()
      << '\n';
  }
}

GaussianSignature unit_signature(const std::string& id, const Eigen::VectorXd& mean) {
  return GaussianSignature(id, mean, Eigen::MatrixXd::Identity(mean.size(), mean.size()));
}

Eigen::VectorXd axis(int dim, int k, double v) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
  e(k) = v;
  return e;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------

std::vector<MockActivityServer::Entry> MockActivityServer::three_activities() {
  std::vector<Entry> out;
  const char* transcripts[] = {"set timer for five minutes", "play the smiths", "what is the weather"};
  for (int i = 0; i < 3; ++i) {
    const std::string id = "amzn1.activity/" + std::to_string(1000 + i);
    json a{{"id", id},
           {"timestamp", "2017-05-0" + std::to_string(i + 1) + "T10:00:00Z"},
           {"device", {{"serial", "G090LF0964750001"}, {"name", "Kitchen Echo"}}},
           {"status", "SUCCESS"},
           {"transcript", transcripts[i]},
           {"audio", true}};
    out.push_back({a, encode_wav(synth_voice(i % 2 ? Voice::kFemale : Voice::kMale, 500 + i, 0.5))});
  }
  return out;
}

MockActivityServer::MockActivityServer(std::vector<Entry> entries, std::string cookie)
    : entries_(std::move(entries)), cookie_(std::move(cookie)), server_(std::make_unique<httplib::Server>()) {
  auto authorized = [this](const httplib::Request& req, httplib::Response& res) {
    if (unauthorized_ || req.get_header_value("Cookie") != cookie_) {
      res.status = 401;
      res.set_content(R"({"error":"unauthorized"})", "application/json");
      return false;
    }
    return true;
  };

  server_->Get("/api/activities", [this, authorized](const httplib::Request& req, httplib::Response& res) {
    ++listing_requests_;
    if (!authorized(req, res)) return;
    if (transient_failures_.load() > 0) {
      --transient_failures_;
      res.status = 503;
      return;
    }
    const auto offset = static_cast<std::size_t>(std::stoul(req.get_param_value("offset")));
    const auto size = static_cast<std::size_t>(std::stoul(req.get_param_value("size")));
    json page = json::array();
    for (std::size_t i = offset; i < std::min(entries_.size(), offset + size); ++i) page.push_back(entries_[i].activity);
    res.set_content(json{{"activities", page}}.dump(), "application/json");
  });

  server_->Get("/old/activities", [](const httplib::Request& req, httplib::Response& res) {
    res.set_redirect("/api/activities?offset=" + req.get_param_value("offset") +
                     "&size=" + req.get_param_value("size"));
  });

  server_->Get(R"(/api/activities/(.+)/audio)", [this, authorized](const httplib::Request& req,
                                                                   httplib::Response& res) {
    ++audio_requests_;
    if (!authorized(req, res)) return;
    const std::string id = req.matches[1].str();
    for (const auto& e : entries_) {
      const auto it = e.activity.is_object() ? e.activity.find("id") : e.activity.end();
      if (it != e.activity.end() && it->is_string() && *it == id && e.audio) {
        res.set_content(*e.audio, "audio/wav");
        return;
      }
    }
    res.status = 404;
  });

  port_ = server_->bind_to_any_port("127.0.0.1");
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

MockActivityServer::~MockActivityServer() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockActivityServer::base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

}  // namespace escape::testing
