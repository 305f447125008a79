#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace escape {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitPartial = 3;  // --strict and some clips failed

std::string version();

/// Writes <artifact>.meta.json: tool, version, command and the resolved config.
/// Holds nothing time-dependent, so identical runs give identical sidecars.
void write_metadata(const std::filesystem::path& artifact, const std::string& command, const nlohmann::json& config);

/// Entry point behind the `escape` executable. `args` excludes the program name.
/// Subcommands: scrape, features, label, evaluate, classify, report, validate.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace escape
