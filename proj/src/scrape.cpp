#include "escape/scrape.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <exception>
#include <iostream>
#include <regex>
#include <thread>
#include <unordered_set>
#include <vector>

#include <httplib.h>

#include "escape/error.hpp"

using nlohmann::json;

namespace escape {

namespace {

struct BaseUrl {
  std::string scheme_host_port;
  std::string prefix;
};

BaseUrl parse_base_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[A-Za-z0-9.\-]+(:[0-9]{1,5})?)(/[^?#]*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ConfigError("malformed base_url '" + url + "'");
  BaseUrl out{m[1].str(), m[3].matched ? m[3].str() : std::string()};
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) {
    s.replace(pos, from.size(), to);
  }
}

enum class FetchStatus { kOk, kNotFound };

struct FetchResult {
  FetchStatus status;
  std::string body;
};

/// HTTP GET with the session cookie, redirects and bounded exponential backoff.
class Fetcher {
 public:
  Fetcher(const ScrapeConfig& cfg, const BaseUrl& base)
      : cfg_(cfg), base_(base), client_(base.scheme_host_port) {
    client_.set_follow_location(true);
    client_.set_connection_timeout(cfg.timeout_s, 0);
    client_.set_read_timeout(cfg.timeout_s, 0);
    client_.set_default_headers({{"Cookie", cfg.cookie}});
  }

  FetchResult get(const std::string& path) {
    const std::string full = base_.prefix + path;
    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0) {
        const long long delay = std::min<long long>(
            static_cast<long long>(cfg_.backoff_ms) << std::min(attempt - 1, 20), cfg_.backoff_cap_ms);
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      }
      auto res = client_.Get(full);
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      const int code = res->status;
      if (code == 401 || code == 403) {
        throw AuthError("HTTP " + std::to_string(code) + " from " + full +
                        ": session cookie expired or invalid; sign in again in a browser and "
                        "copy a fresh cookie");
      }
      if (code >= 200 && code < 300) return {FetchStatus::kOk, std::move(res->body)};
      if (code == 404) return {FetchStatus::kNotFound, {}};
      last_error = "HTTP " + std::to_string(code);
      if (code != 429 && code < 500) break;  // not transient
    }
    throw NetworkError("GET " + full + " failed after " + std::to_string(cfg_.max_retries + 1) +
                       " attempt(s): " + last_error);
  }

 private:
  const ScrapeConfig& cfg_;
  const BaseUrl& base_;
  httplib::Client client_;
};

std::string str_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw ArchiveError(std::string("missing or non-string '") + key + "'");
  }
  return it->get<std::string>();
}

struct Download {
  std::size_t index;  // into the page's new activities
  std::optional<std::string> bytes;
  std::exception_ptr error;
};

}  // namespace

std::string url_encode(const std::string& s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

std::string expand_template(const std::string& tmpl, std::size_t offset, std::size_t size,
                            const std::string& id) {
  std::string out = tmpl;
  replace_all(out, "{offset}", std::to_string(offset));
  replace_all(out, "{size}", std::to_string(size));
  replace_all(out, "{id}", url_encode(id));
  return out;
}

Activity parse_activity(const json& j) {
  if (!j.is_object()) throw ArchiveError("activity is not an object");
  Activity a;
  auto& r = a.record;
  r.id = str_field(j, "id");
  if (r.id.empty()) throw ArchiveError("empty id");
  r.timestamp_utc = str_field(j, "timestamp");
  if (!is_iso8601_utc(r.timestamp_utc)) throw ArchiveError("bad timestamp '" + r.timestamp_utc + "'");
  auto dev = j.find("device");
  if (dev == j.end() || !dev->is_object()) throw ArchiveError("missing 'device' object");
  r.device_serial = str_field(*dev, "serial");
  r.device_name = str_field(*dev, "name");
  r.status = str_field(j, "status");
  if (auto t = j.find("transcript"); t != j.end() && !t->is_null()) {
    if (!t->is_string()) throw ArchiveError("non-string 'transcript'");
    r.transcript = t->get<std::string>();
  }
  if (auto au = j.find("audio"); au != j.end()) {
    if (!au->is_boolean()) throw ArchiveError("non-boolean 'audio'");
    a.has_audio = au->get<bool>();
  }
  return a;
}

ScrapeResult scrape(const ScrapeConfig& config, const std::filesystem::path& archive_root) {
  if (config.cookie.empty()) throw ConfigError("scrape: cookie is empty");
  if (config.page_size == 0) throw ConfigError("scrape: page_size must be positive");
  if (config.max_retries < 0 || config.backoff_ms < 0) {
    throw ConfigError("scrape: retries and backoff must be non-negative");
  }
  const BaseUrl base = parse_base_url(config.base_url);
  const auto log = config.log ? config.log : [](const std::string& m) { std::cerr << m << '\n'; };

  ArchiveWriter writer(archive_root);
  Fetcher lister(config, base);
  ScrapeResult result;
  std::unordered_set<std::string> seen_this_run;
  std::size_t offset = 0;

  while (result.pages < config.max_pages) {
    const auto page = lister.get(expand_template(config.list_template, offset, config.page_size));
    if (page.status == FetchStatus::kNotFound) {
      throw NetworkError("listing endpoint returned 404 at offset " + std::to_string(offset));
    }
    json payload;
    try {
      payload = json::parse(page.body);
    } catch (const json::exception& e) {
      throw NetworkError("listing page at offset " + std::to_string(offset) + " is not JSON: " + e.what());
    }
    if (!payload.is_object() || !payload.contains("activities") || !payload["activities"].is_array()) {
      throw NetworkError("listing page at offset " + std::to_string(offset) +
                         " has no 'activities' array");
    }
    const auto& items = payload["activities"];
    ++result.pages;
    if (items.empty()) break;

    std::vector<Activity> fresh;
    for (std::size_t i = 0; i < items.size(); ++i) {
      try {
        Activity a = parse_activity(items[i]);
        if (writer.contains(a.record.id) || !seen_this_run.insert(a.record.id).second) continue;
        fresh.push_back(std::move(a));
      } catch (const ArchiveError& e) {
        ++result.skipped_malformed;
        log("scrape: skipping malformed activity at offset " + std::to_string(offset + i) + ": " +
            e.what());
      }
    }

    std::vector<Download> downloads;
    for (std::size_t i = 0; i < fresh.size(); ++i) {
      if (fresh[i].has_audio) downloads.push_back({i, std::nullopt, nullptr});
    }
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
      Fetcher fetcher(config, base);
      for (std::size_t k; (k = next.fetch_add(1)) < downloads.size();) {
        auto& d = downloads[k];
        try {
          const auto& id = fresh[d.index].record.id;
          auto res = fetcher.get(expand_template(config.audio_template, offset, config.page_size, id));
          if (res.status == FetchStatus::kOk) d.bytes = std::move(res.body);
        } catch (...) {
          d.error = std::current_exception();
        }
      }
    };
    {
      const auto n_workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(config.jobs, 1)),
                                                     1, std::max<std::size_t>(downloads.size(), 1));
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }

    // Single writer: records land in listing order; stop at the first failure.
    std::size_t d = 0;
    for (std::size_t i = 0; i < fresh.size(); ++i) {
      InteractionRecord rec = fresh[i].record;
      if (d < downloads.size() && downloads[d].index == i) {
        const auto& dl = downloads[d++];
        if (dl.error) std::rethrow_exception(dl.error);
        if (dl.bytes) {
          rec.audio_file = writer.store_audio(rec.id, *dl.bytes);
          ++result.audio_files;
        } else {
          ++result.audio_unavailable;
          log("scrape: audio for '" + rec.id + "' not found (404); record kept without audio");
        }
      }
      writer.append(rec);
      ++result.new_records;
    }
    offset += items.size();
  }
  return result;
}

}  // namespace escape
