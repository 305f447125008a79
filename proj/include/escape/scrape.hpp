#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "escape/archive.hpp"

namespace escape {

/// Endpoint paths are templates, not constants: `{offset}`, `{size}` and
/// `{id}` are substituted per request (id is URL-encoded).
///
/// Listing payload (our definition, matched by the bundled mock server):
///   {"activities": [{"id": "...", "timestamp": "2017-03-01T08:00:00Z",
///                    "device": {"serial": "...", "name": "..."},
///                    "status": "SUCCESS", "transcript": "..." | null,
///                    "audio": true | false}, ...]}
/// An empty "activities" array ends pagination.
struct ScrapeConfig {
  std::string base_url;  // http(s)://host[:port][/prefix]
  std::string cookie;    // sent verbatim in the Cookie header
  std::size_t page_size = 50;
  std::string list_template = "/api/activities?offset={offset}&size={size}";
  std::string audio_template = "/api/activities/{id}/audio";
  int max_retries = 3;
  int backoff_ms = 250;  // doubled per attempt
  int backoff_cap_ms = 8000;
  int jobs = 4;          // concurrent audio downloads
  int timeout_s = 30;
  std::size_t max_pages = 100000;
  std::function<void(const std::string&)> log;  // defaults to stderr
};

struct ScrapeResult {
  std::size_t new_records = 0;
  std::size_t audio_files = 0;
  std::size_t skipped_malformed = 0;
  std::size_t audio_unavailable = 0;  // listed with audio but the download 404'd
  std::size_t pages = 0;
};

/// One activity as it appears in a listing page.
struct Activity {
  InteractionRecord record;  // audio_file unset
  bool has_audio = false;
};

/// Throws ArchiveError with a reason when the entry is malformed.
Activity parse_activity(const nlohmann::json& j);

std::string expand_template(const std::string& tmpl, std::size_t offset, std::size_t size,
                            const std::string& id = {});
std::string url_encode(const std::string& s);

/// Pages through the listing until an empty page and appends every activity
/// not already in the archive, downloading audio when available. Re-running
/// against an unchanged server appends nothing.
///
/// Throws ConfigError for an empty cookie or malformed base_url, AuthError on
/// HTTP 401/403, NetworkError once retries are exhausted. Records completed
/// before a failure stay in the archive.
ScrapeResult scrape(const ScrapeConfig& config, const std::filesystem::path& archive_root);

}  // namespace escape
