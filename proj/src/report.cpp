#include "escape/report.hpp"

#include <fstream>
#include <regex>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace escape {

namespace {

struct Rule {
  IntentCategory category;
  std::regex pattern;
};

const std::vector<Rule>& rules() {
  constexpr auto flags = std::regex::ECMAScript | std::regex::icase;
  static const std::vector<Rule> r = {
      {IntentCategory::kTimer, std::regex("timer", flags)},
      {IntentCategory::kVolumeControl, std::regex("volume", flags)},
      {IntentCategory::kWeather, std::regex("weather|rain|temperature", flags)},
      {IntentCategory::kMusic, std::regex("play|stop|pause|track|listen|skip", flags)},
      {IntentCategory::kShopping, std::regex("shopping list", flags)},
      {IntentCategory::kCalendar, std::regex("calendar", flags)},
      {IntentCategory::kSport, std::regex("football|score", flags)},
  };
  return r;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + p.string());
  return f;
}

}  // namespace

std::string to_string(IntentCategory c) {
  switch (c) {
    case IntentCategory::kTimer:
      return "Timer";
    case IntentCategory::kVolumeControl:
      return "VolumeControl";
    case IntentCategory::kWeather:
      return "Weather";
    case IntentCategory::kMusic:
      return "Music";
    case IntentCategory::kShopping:
      return "Shopping";
    case IntentCategory::kCalendar:
      return "Calendar";
    case IntentCategory::kSport:
      return "Sport";
    case IntentCategory::kError:
      return "Error";
    case IntentCategory::kOther:
      return "Other";
  }
  return "Other";
}

IntentCategory categorize(const std::optional<std::string>& transcript) {
  static const std::regex error_re("^alexa$|^$", std::regex::ECMAScript | std::regex::icase);
  if (!transcript || std::regex_match(*transcript, error_re)) return IntentCategory::kError;
  for (const auto& rule : rules()) {
    if (std::regex_search(*transcript, rule.pattern)) return rule.category;
  }
  return IntentCategory::kOther;
}

UsageReport usage_report(const Archive& archive, const LabelStore& store, const LabelSet& labels,
                         const std::optional<std::string>& speaker) {
  if (speaker && !labels.contains(*speaker)) throw UnknownLabel(*speaker);
  UsageReport rep;
  rep.speaker_filter = speaker;
  std::map<std::string, DeviceCount> devices;
  for (const auto& r : archive.records()) {
    ++rep.total_records;
    ++rep.status_counts[r.status];
    auto [it, fresh] = devices.try_emplace(r.device_serial, DeviceCount{r.device_serial, r.device_name, 0});
    ++it->second.count;

    const bool audio = r.audio_file.has_value();
    const bool text = r.transcript.has_value() && !r.transcript->empty();
    if (audio && text) ++rep.audio_and_text;
    else if (audio) ++rep.audio_only;
    else if (text) ++rep.text_only;
    else ++rep.neither;

    if (speaker) {
      const auto* l = store.find(r.id);
      if (!l || l->label != *speaker) continue;
    }
    ++rep.intent_records;
    ++rep.intent_counts[static_cast<std::size_t>(categorize(r.transcript))];
  }
  for (auto& [serial, d] : devices) rep.devices.push_back(std::move(d));
  return rep;
}

void print_report(std::ostream& out, const UsageReport& rep) {
  fmt::print(out, "records: {}\n", rep.total_records);
  fmt::print(out, "  audio+text {}  audio only {}  text only {}  neither {}\n\n", rep.audio_and_text, rep.audio_only,
             rep.text_only, rep.neither);
  fmt::print(out, "{:<24} {:>8}\n", "status", "count");
  for (const auto& [status, n] : rep.status_counts) fmt::print(out, "{:<24} {:>8}\n", status, n);
  fmt::print(out, "\n{:<20} {:<24} {:>8}\n", "device_serial", "device_name", "count");
  for (const auto& d : rep.devices) fmt::print(out, "{:<20} {:<24} {:>8}\n", d.serial, d.name, d.count);
  fmt::print(out, "\nintents ({}, {} records)\n", rep.speaker_filter ? "speaker " + *rep.speaker_filter : "all speakers",
             rep.intent_records);
  fmt::print(out, "{:<24} {:>8}\n", "category", "count");
  for (auto c : kIntentCategories) fmt::print(out, "{:<24} {:>8}\n", to_string(c), rep.intent_count(c));
}

std::vector<std::filesystem::path> write_report_csv(const std::filesystem::path& dir, const UsageReport& rep) {
  std::filesystem::create_directories(dir);
  const auto status_path = dir / "status.csv";
  const auto device_path = dir / "device.csv";
  const auto intent_path = dir / "intent.csv";
  {
    auto f = open_out(status_path);
    f << "status,count\n";
    for (const auto& [status, n] : rep.status_counts) f << csv_field(status) << ',' << n << '\n';
  }
  {
    auto f = open_out(device_path);
    f << "device_serial,device_name,count\n";
    for (const auto& d : rep.devices) f << csv_field(d.serial) << ',' << csv_field(d.name) << ',' << d.count << '\n';
  }
  {
    auto f = open_out(intent_path);
    f << "category,count\n";
    for (auto c : kIntentCategories) f << to_string(c) << ',' << rep.intent_count(c) << '\n';
  }
  return {status_path, device_path, intent_path};
}

}  // namespace escape
