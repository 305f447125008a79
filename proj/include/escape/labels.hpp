#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "escape/archive.hpp"
#include "escape/error.hpp"
#include "escape/gaussian.hpp"

namespace escape {

enum class LabelSource { kManual, kPropagated, kClassified };

std::string to_string(LabelSource s);
LabelSource parse_label_source(const std::string& s);

struct Provenance {
  std::string nearest_clip_id;
  double divergence = 0.0;

  bool operator==(const Provenance&) const = default;
};

struct LabelRecord {
  std::string clip_id;
  std::string label;
  LabelSource source = LabelSource::kManual;
  std::string labeled_at;  // ISO-8601 UTC
  std::optional<Provenance> provenance;

  bool operator==(const LabelRecord&) const = default;
};

void to_json(nlohmann::json& j, const LabelRecord& r);
void from_json(const nlohmann::json& j, LabelRecord& r);

/// Configured finite label set; the first label maps to classifier class +1.
class LabelSet {
 public:
  LabelSet() : LabelSet({"Male", "Female"}) {}
  /// Throws ConfigError unless exactly two distinct non-empty labels are given.
  explicit LabelSet(std::vector<std::string> labels);

  bool contains(const std::string& label) const;
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  int to_class(const std::string& label) const;  // +1 / -1
  const std::string& from_class(int cls) const;

 private:
  std::vector<std::string> labels_;
};

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_now();

/// labels.jsonl: append-only, last record per clip wins. All writes go
/// through one instance (single writer); the caller serializes access.
///
/// Precedence: manual records replace anything; propagated and classified
/// records never replace a manual one (put() returns false instead).
class LabelStore {
 public:
  using Clock = std::function<std::string()>;

  /// Loads an existing file (missing file = empty store). Throws ArchiveError
  /// on a malformed line, naming the line number.
  explicit LabelStore(std::filesystem::path path, Clock clock = utc_now);
  /// In-memory store that never touches disk.
  static LabelStore in_memory(Clock clock = utc_now);

  const LabelRecord* find(const std::string& clip_id) const;
  const std::map<std::string, LabelRecord>& records() const noexcept { return records_; }
  std::size_t count(LabelSource s) const;
  bool has_manual() const { return count(LabelSource::kManual) > 0; }

  /// Stamps labeled_at when empty. Returns false when a non-manual record
  /// would replace a manual one.
  bool put(LabelRecord record);

 private:
  LabelStore() = default;
  std::optional<std::filesystem::path> path_;
  Clock clock_;
  std::map<std::string, LabelRecord> records_;
};

struct PropagationResult {
  std::size_t newly_propagated = 0;
  std::vector<std::string> queued_ids;  // still need a human, input order
};

inline constexpr double kDefaultKlThreshold = 50.0;

/// Every clip without a label gets the label of its nearest manually labeled
/// clip (by symmetric KL) when that divergence is strictly below threshold;
/// the rest are queued. Only manual labels seed propagation.
/// Throws BootstrapRequired when the store holds no manual label.
PropagationResult propagate(const std::vector<GaussianSignature>& signatures, LabelStore& store,
                            double threshold = kDefaultKlThreshold);

/// Clip metadata shown to the annotator.
struct QueueItem {
  std::string clip_id;
  std::string timestamp_utc;
  std::optional<std::string> transcript;
  std::size_t queued_remaining = 0;
};

struct SubmitResult {
  bool accepted = false;
  std::size_t auto_propagated = 0;
  std::size_t remaining = 0;
};

struct LabelStats {
  std::size_t manual = 0;
  std::size_t propagated = 0;
  std::size_t classified = 0;
  std::size_t queued = 0;
  std::size_t total = 0;
};

class UnknownClip : public Error {
 public:
  explicit UnknownClip(const std::string& id) : Error("unknown clip '" + id + "'") {}
};

class UnknownLabel : public Error {
 public:
  explicit UnknownLabel(const std::string& l) : Error("unknown label '" + l + "'") {}
};

/// Human-in-the-loop labeling state over the clips that have a signature.
/// Not thread-safe; the HTTP layer serializes calls.
class LabelSession {
 public:
  LabelSession(const Archive& archive, std::vector<GaussianSignature> signatures, LabelStore& store,
               LabelSet label_set = {}, double threshold = kDefaultKlThreshold);

  /// One propagation pass; without manual labels every unlabeled clip is queued.
  PropagationResult refresh();

  /// Earliest queued clip (timestamp, then id), if any.
  std::optional<QueueItem> next_queued() const;

  /// Writes a manual label, re-propagates, reports what changed.
  /// Throws UnknownClip / UnknownLabel.
  SubmitResult submit_label(const std::string& clip_id, const std::string& label);

  LabelStats stats() const;
  const LabelSet& label_set() const noexcept { return labels_; }
  const Archive& archive() const noexcept { return archive_; }
  bool knows(const std::string& clip_id) const;

 private:
  const Archive& archive_;
  std::vector<GaussianSignature> signatures_;
  LabelStore& store_;
  LabelSet labels_;
  double threshold_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> queue_;  // sorted by (timestamp, id)
};

}  // namespace escape
