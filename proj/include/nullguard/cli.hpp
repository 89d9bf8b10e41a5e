#pragma once

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace nullguard::cli {

/// Entry point of the `nullguard` tool. Returns the process exit code; on
/// failure a single JSON line {"error": <code>, "message": <text>} goes to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Runs `command` with a fully resolved config and writes its outputs and
/// manifest. Returns the manifest.
nlohmann::json execute(const std::string& command, const nlohmann::json& config, std::ostream& out);

/// Path of the manifest written next to a command's primary output.
std::filesystem::path manifest_path(const std::string& command, const nlohmann::json& config);

}  // namespace nullguard::cli
