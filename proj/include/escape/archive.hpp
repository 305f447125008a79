#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

namespace escape {

/// One scraped interaction with the assistant.
struct InteractionRecord {
  std::string id;
  std::string timestamp_utc;  // ISO-8601, e.g. 2017-03-01T08:15:00Z
  std::string device_serial;
  std::string device_name;
  std::string status;
  std::optional<std::string> transcript;
  std::optional<std::string> audio_file;  // relative to the archive root, under audio/

  bool operator==(const InteractionRecord&) const = default;
};

void to_json(nlohmann::json& j, const InteractionRecord& r);
void from_json(const nlohmann::json& j, InteractionRecord& r);

/// One record as a single canonical JSON line (no trailing newline).
std::string to_jsonl_line(const InteractionRecord& r);

/// True for YYYY-MM-DDTHH:MM:SS[.fff]Z.
bool is_iso8601_utc(const std::string& s);

/// Filename stem for a clip id; characters outside [A-Za-z0-9._-] are %XX-escaped.
std::string audio_file_stem(const std::string& id);

/// Archive layout on disk:
///   <root>/records.jsonl   one InteractionRecord per line
///   <root>/audio/<id>.wav  audio as downloaded
///   <root>/labels.jsonl    owned by the label store
class Archive {
 public:
  static constexpr const char* kRecordsFile = "records.jsonl";
  static constexpr const char* kLabelsFile = "labels.jsonl";
  static constexpr const char* kAudioDir = "audio";

  Archive(std::filesystem::path root, std::vector<InteractionRecord> records);

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path records_path() const { return root_ / kRecordsFile; }
  std::filesystem::path labels_path() const { return root_ / kLabelsFile; }
  std::filesystem::path audio_dir() const { return root_ / kAudioDir; }

  const std::vector<InteractionRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool contains(const std::string& id) const { return index_.contains(id); }
  const InteractionRecord* find(const std::string& id) const;

  /// Absolute path of a record's audio, if it has one.
  std::optional<std::filesystem::path> audio_path(const InteractionRecord& r) const;

 private:
  std::filesystem::path root_;
  std::vector<InteractionRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Parses <root>/records.jsonl. Throws ArchiveError on a missing records file,
/// a malformed line (message carries the line number), a duplicate id, or an
/// audio reference that does not resolve under audio/.
Archive open_archive(const std::filesystem::path& root);

/// Creates <root>, <root>/audio and an empty records file if absent.
void init_archive(const std::filesystem::path& root);

/// Writes records.jsonl from scratch (used by fixtures and round-trip checks).
void write_records(const std::filesystem::path& root, const std::vector<InteractionRecord>& records);

/// Serialized append-only writer for records.jsonl. One instance per archive;
/// callers must not write the file by any other route while it is alive.
class ArchiveWriter {
 public:
  explicit ArchiveWriter(std::filesystem::path root);

  bool contains(const std::string& id) const { return known_.contains(id); }
  std::size_t size() const noexcept { return known_.size(); }

  /// Appends one record and flushes. Throws ArchiveError on duplicate id.
  void append(const InteractionRecord& r);

  /// Writes audio bytes to audio/<stem>.wav via a temporary file + rename and
  /// returns the archive-relative path.
  std::string store_audio(const std::string& id, const std::string& bytes);

 private:
  std::filesystem::path root_;
  std::unordered_set<std::string> known_;
};

}  // namespace escape
