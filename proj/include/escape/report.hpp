#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "escape/archive.hpp"
#include "escape/labels.hpp"

namespace escape {

enum class IntentCategory { kTimer, kVolumeControl, kWeather, kMusic, kShopping, kCalendar, kSport, kError, kOther };

inline constexpr std::array<IntentCategory, 9> kIntentCategories = {
    IntentCategory::kTimer,    IntentCategory::kVolumeControl, IntentCategory::kWeather,
    IntentCategory::kMusic,    IntentCategory::kShopping,      IntentCategory::kCalendar,
    IntentCategory::kSport,    IntentCategory::kError,         IntentCategory::kOther};

std::string to_string(IntentCategory c);

/// Case-insensitive, first match wins:
///   Error          absent transcript, or the whole text is "alexa" or empty
///   Timer          timer
///   VolumeControl  volume
///   Weather        weather|rain|temperature
///   Music          play|stop|pause|track|listen|skip
///   Shopping       shopping list
///   Calendar       calendar
///   Sport          football|score
///   Other          anything else
IntentCategory categorize(const std::optional<std::string>& transcript);

struct DeviceCount {
  std::string serial;
  std::string name;  // first name seen for the serial
  std::size_t count = 0;
};

struct UsageReport {
  std::size_t total_records = 0;
  std::map<std::string, std::size_t> status_counts;
  std::vector<DeviceCount> devices;  // ordered by serial
  std::optional<std::string> speaker_filter;
  std::size_t intent_records = 0;  // records that passed the speaker filter
  std::array<std::size_t, kIntentCategories.size()> intent_counts{};
  std::size_t audio_and_text = 0;
  std::size_t audio_only = 0;
  std::size_t text_only = 0;
  std::size_t neither = 0;

  std::size_t intent_count(IntentCategory c) const { return intent_counts[static_cast<std::size_t>(c)]; }
};

/// Status and device counts cover every record; intent counts only the records
/// whose clip carries `speaker` (any source) when a speaker is given.
/// Throws UnknownLabel when `speaker` is not in the label set.
UsageReport usage_report(const Archive& archive, const LabelStore& store, const LabelSet& labels,
                         const std::optional<std::string>& speaker = std::nullopt);

void print_report(std::ostream& out, const UsageReport& report);

/// status.csv, device.csv and intent.csv under `dir` (created if needed).
std::vector<std::filesystem::path> write_report_csv(const std::filesystem::path& dir, const UsageReport& report);

}  // namespace escape
