#include "escape/labels.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <limits>
#include <set>

namespace escape {

using nlohmann::json;

std::string to_string(LabelSource s) {
  switch (s) {
    case LabelSource::kManual:
      return "manual";
    case LabelSource::kPropagated:
      return "propagated";
    case LabelSource::kClassified:
      return "classified";
  }
  return "manual";
}

LabelSource parse_label_source(const std::string& s) {
  if (s == "manual") return LabelSource::kManual;
  if (s == "propagated") return LabelSource::kPropagated;
  if (s == "classified") return LabelSource::kClassified;
  throw ArchiveError("unknown label source '" + s + "'");
}

void to_json(json& j, const LabelRecord& r) {
  j = json{{"clip_id", r.clip_id}, {"label", r.label}, {"source", to_string(r.source)}, {"labeled_at", r.labeled_at}};
  if (r.provenance) {
    j["provenance"] = {{"nearest_clip_id", r.provenance->nearest_clip_id},
                       {"divergence", r.provenance->divergence}};
  }
}

void from_json(const json& j, LabelRecord& r) {
  if (!j.is_object()) throw ArchiveError("label record must be a JSON object");
  r.clip_id = j.at("clip_id").get<std::string>();
  r.label = j.at("label").get<std::string>();
  r.source = parse_label_source(j.at("source").get<std::string>());
  r.labeled_at = j.value("labeled_at", std::string());
  if (r.clip_id.empty()) throw ArchiveError("label record with empty clip_id");
  r.provenance.reset();
  if (auto p = j.find("provenance"); p != j.end() && !p->is_null()) {
    r.provenance = Provenance{p->at("nearest_clip_id").get<std::string>(), p->at("divergence").get<double>()};
  }
}

LabelSet::LabelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.size() != 2 || labels_[0].empty() || labels_[1].empty() || labels_[0] == labels_[1]) {
    throw ConfigError("label set must hold exactly two distinct non-empty labels");
  }
}

bool LabelSet::contains(const std::string& label) const {
  return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
}

int LabelSet::to_class(const std::string& label) const {
  if (label == labels_[0]) return 1;
  if (label == labels_[1]) return -1;
  throw UnknownLabel(label);
}

const std::string& LabelSet::from_class(int cls) const { return cls >= 0 ? labels_[0] : labels_[1]; }

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

LabelStore::LabelStore(std::filesystem::path path, Clock clock) : path_(std::move(path)), clock_(std::move(clock)) {
  std::ifstream in(*path_);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto r = json::parse(line).get<LabelRecord>();
      records_[r.clip_id] = std::move(r);
    } catch (const std::exception& e) {
      throw ArchiveError(path_->string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

LabelStore LabelStore::in_memory(Clock clock) {
  LabelStore s;
  s.clock_ = std::move(clock);
  return s;
}

const LabelRecord* LabelStore::find(const std::string& clip_id) const {
  auto it = records_.find(clip_id);
  return it == records_.end() ? nullptr : &it->second;
}

std::size_t LabelStore::count(LabelSource s) const {
  return static_cast<std::size_t>(
      std::count_if(records_.begin(), records_.end(), [s](const auto& kv) { return kv.second.source == s; }));
}

bool LabelStore::put(LabelRecord record) {
  if (record.clip_id.empty()) throw ArchiveError("label record with empty clip_id");
  if (const auto* old = find(record.clip_id);
      old && old->source == LabelSource::kManual && record.source != LabelSource::kManual) {
    return false;
  }
  if (record.labeled_at.empty()) record.labeled_at = clock_ ? clock_() : utc_now();
  if (path_) {
    std::ofstream out(*path_, std::ios::binary | std::ios::app);
    if (!out) throw ArchiveError("cannot append to " + path_->string());
    out << json(record).dump() << '\n';
    out.flush();
    if (!out) throw ArchiveError("write failed for " + path_->string());
  }
  records_[record.clip_id] = std::move(record);
  return true;
}

PropagationResult propagate(const std::vector<GaussianSignature>& signatures, LabelStore& store, double threshold) {
  std::vector<const GaussianSignature*> references;
  for (const auto& s : signatures) {
    const auto* r = store.find(s.clip_id());
    if (r && r->source == LabelSource::kManual) references.push_back(&s);
  }
  if (references.empty()) throw BootstrapRequired();

  PropagationResult result;
  for (const auto& s : signatures) {
    if (store.find(s.clip_id())) continue;
    const GaussianSignature* nearest = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (const auto* ref : references) {
      const double d = sym_kl(s, *ref);
      if (d < best) {
        best = d;
        nearest = ref;
      }
    }
    if (nearest && best < threshold) {
      LabelRecord rec{s.clip_id(), store.find(nearest->clip_id())->label, LabelSource::kPropagated, {},
                      Provenance{nearest->clip_id(), best}};
      if (store.put(std::move(rec))) ++result.newly_propagated;
    } else {
      result.queued_ids.push_back(s.clip_id());
    }
  }
  return result;
}

LabelSession::LabelSession(const Archive& archive, std::vector<GaussianSignature> signatures, LabelStore& store,
                           LabelSet label_set, double threshold)
    : archive_(archive),
      signatures_(std::move(signatures)),
      store_(store),
      labels_(std::move(label_set)),
      threshold_(threshold) {
  if (!(threshold_ > 0)) throw ConfigError("KL threshold must be positive");
  for (std::size_t i = 0; i < signatures_.size(); ++i) {
    if (!index_.emplace(signatures_[i].clip_id(), i).second) {
      throw ConfigError("duplicate signature for clip '" + signatures_[i].clip_id() + "'");
    }
  }
  refresh();
}

PropagationResult LabelSession::refresh() {
  PropagationResult r;
  try {
    r = propagate(signatures_, store_, threshold_);
  } catch (const BootstrapRequired&) {
    for (const auto& s : signatures_) {
      if (!store_.find(s.clip_id())) r.queued_ids.push_back(s.clip_id());
    }
  }
  queue_ = r.queued_ids;
  const auto stamp = [this](const std::string& id) {
    const auto* rec = archive_.find(id);
    return rec ? rec->timestamp_utc : std::string();
  };
  std::sort(queue_.begin(), queue_.end(), [&](const std::string& a, const std::string& b) {
    const auto ta = stamp(a), tb = stamp(b);
    return ta != tb ? ta < tb : a < b;
  });
  return r;
}

std::optional<QueueItem> LabelSession::next_queued() const {
  if (queue_.empty()) return std::nullopt;
  QueueItem item;
  item.clip_id = queue_.front();
  if (const auto* rec = archive_.find(item.clip_id)) {
    item.timestamp_utc = rec->timestamp_utc;
    item.transcript = rec->transcript;
  }
  item.queued_remaining = queue_.size();
  return item;
}

SubmitResult LabelSession::submit_label(const std::string& clip_id, const std::string& label) {
  if (!knows(clip_id)) throw UnknownClip(clip_id);
  if (!labels_.contains(label)) throw UnknownLabel(label);
  SubmitResult out;
  out.accepted = store_.put(LabelRecord{clip_id, label, LabelSource::kManual, {}, std::nullopt});
  out.auto_propagated = refresh().newly_propagated;
  out.remaining = queue_.size();
  return out;
}

LabelStats LabelSession::stats() const {
  LabelStats s;
  s.total = signatures_.size();
  s.queued = queue_.size();
  for (const auto& sig : signatures_) {
    const auto* r = store_.find(sig.clip_id());
    if (!r) continue;
    switch (r->source) {
      case LabelSource::kManual:
        ++s.manual;
        break;
      case LabelSource::kPropagated:
        ++s.propagated;
        break;
      case LabelSource::kClassified:
        ++s.classified;
        break;
    }
  }
  return s;
}

bool LabelSession::knows(const std::string& clip_id) const { return index_.contains(clip_id); }

}  // namespace escape
