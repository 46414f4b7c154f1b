#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace commonsense {

inline constexpr std::string_view kToolVersion = "0.3.0";

std::string sha256_hex(std::string_view data);
/// Throws Error when the file cannot be read.
std::string sha256_file(const std::filesystem::path& path);

/// Everything needed to re-run a command and compare its outputs.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> input_hashes;   ///< path -> sha256
  std::map<std::string, std::string> output_hashes;  ///< path -> sha256
  nlohmann::ordered_json settings = nlohmann::ordered_json::object();
  std::string tool_version{kToolVersion};
  std::string started_at;
  std::string finished_at;

  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest load_manifest(const std::filesystem::path& path);

/// UTC time as 2024-05-01T12:00:00Z.
std::string utc_timestamp();

}  // namespace commonsense
