#include "escape/archive.hpp"

#include <cctype>
#include <fstream>
#include <regex>
#include <sstream>

#include "escape/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace escape {

void to_json(json& j, const InteractionRecord& r) {
  j = json{{"id", r.id},
           {"timestamp_utc", r.timestamp_utc},
           {"device_serial", r.device_serial},
           {"device_name", r.device_name},
           {"status", r.status}};
  if (r.transcript) j["transcript"] = *r.transcript;
  if (r.audio_file) j["audio_file"] = *r.audio_file;
}

namespace {

std::string required_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw ArchiveError(std::string("missing or non-string field '") + key + "'");
  }
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ArchiveError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

}  // namespace

void from_json(const json& j, InteractionRecord& r) {
  if (!j.is_object()) throw ArchiveError("record must be a JSON object");
  r.id = required_string(j, "id");
  r.timestamp_utc = required_string(j, "timestamp_utc");
  r.device_serial = required_string(j, "device_serial");
  r.device_name = required_string(j, "device_name");
  r.status = required_string(j, "status");
  r.transcript = optional_string(j, "transcript");
  r.audio_file = optional_string(j, "audio_file");
  if (r.id.empty()) throw ArchiveError("empty id");
  if (!is_iso8601_utc(r.timestamp_utc)) {
    throw ArchiveError("timestamp_utc '" + r.timestamp_utc + "' is not ISO-8601 UTC");
  }
}

std::string to_jsonl_line(const InteractionRecord& r) { return json(r).dump(); }

bool is_iso8601_utc(const std::string& s) {
  static const std::regex re(R"(\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?Z)");
  return std::regex_match(s, re);
}

std::string audio_file_stem(const std::string& id) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(id.size());
  for (unsigned char c : id) {
    if (std::isalnum(c) || c == '.' || c == '_' || c == '-') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  // "." and ".." would escape the audio directory.
  if (out == "." || out == "..") out = "%2E" + out.substr(1);
  return out;
}

Archive::Archive(fs::path root, std::vector<InteractionRecord> records)
    : root_(std::move(root)), records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (!index_.emplace(records_[i].id, i).second) {
      throw ArchiveError("duplicate record id '" + records_[i].id + "'");
    }
  }
}

const InteractionRecord* Archive::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &records_[it->second];
}

std::optional<fs::path> Archive::audio_path(const InteractionRecord& r) const {
  if (!r.audio_file) return std::nullopt;
  return root_ / *r.audio_file;
}

namespace {

void check_audio_ref(const fs::path& root, const std::string& rel, std::size_t line_no) {
  const fs::path p(rel);
  const auto where = "line " + std::to_string(line_no) + ": audio_file '" + rel + "' ";
  if (p.is_absolute()) throw ArchiveError(where + "must be relative");
  auto it = p.begin();
  if (it == p.end() || *it != Archive::kAudioDir) {
    throw ArchiveError(where + "must live under " + Archive::kAudioDir + "/");
  }
  for (const auto& part : p) {
    if (part == "..") throw ArchiveError(where + "must not contain '..'");
  }
  if (!fs::is_regular_file(root / p)) throw ArchiveError(where + "does not exist");
}

}  // namespace

Archive open_archive(const fs::path& root) {
  const fs::path records_path = root / Archive::kRecordsFile;
  std::ifstream in(records_path);
  if (!in) throw ArchiveError("missing records file: " + records_path.string());

  std::vector<InteractionRecord> records;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    InteractionRecord r;
    try {
      r = json::parse(line).get<InteractionRecord>();
    } catch (const json::exception& e) {
      throw ArchiveError(records_path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ArchiveError& e) {
      throw ArchiveError(records_path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(r.id).second) {
      throw ArchiveError(records_path.string() + " line " + std::to_string(line_no) +
                         ": duplicate record id '" + r.id + "'");
    }
    if (r.audio_file) check_audio_ref(root, *r.audio_file, line_no);
    records.push_back(std::move(r));
  }
  return Archive(root, std::move(records));
}

void init_archive(const fs::path& root) {
  fs::create_directories(root / Archive::kAudioDir);
  const auto records = root / Archive::kRecordsFile;
  if (!fs::exists(records)) std::ofstream(records, std::ios::binary);
}

void write_records(const fs::path& root, const std::vector<InteractionRecord>& records) {
  fs::create_directories(root);
  std::ofstream out(root / Archive::kRecordsFile, std::ios::binary | std::ios::trunc);
  if (!out) throw ArchiveError("cannot write " + (root / Archive::kRecordsFile).string());
  for (const auto& r : records) out << to_jsonl_line(r) << '\n';
}

ArchiveWriter::ArchiveWriter(fs::path root) : root_(std::move(root)) {
  init_archive(root_);
  const auto existing = open_archive(root_);
  for (const auto& r : existing.records()) known_.insert(r.id);
}

void ArchiveWriter::append(const InteractionRecord& r) {
  if (r.id.empty()) throw ArchiveError("cannot append a record with an empty id");
  if (known_.contains(r.id)) throw ArchiveError("duplicate record id '" + r.id + "'");
  std::ofstream out(root_ / Archive::kRecordsFile, std::ios::binary | std::ios::app);
  if (!out) throw ArchiveError("cannot append to " + (root_ / Archive::kRecordsFile).string());
  out << to_jsonl_line(r) << '\n';
  out.flush();
  if (!out) throw ArchiveError("write failed for " + (root_ / Archive::kRecordsFile).string());
  known_.insert(r.id);
}

std::string ArchiveWriter::store_audio(const std::string& id, const std::string& bytes) {
  const std::string rel = std::string(Archive::kAudioDir) + "/" + audio_file_stem(id) + ".wav";
  const fs::path final_path = root_ / rel;
  fs::path tmp = final_path;
  tmp += ".part";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ArchiveError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ArchiveError("write failed for " + tmp.string());
  }
  fs::rename(tmp, final_path);
  return rel;
}

}  // namespace escape
