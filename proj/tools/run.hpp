#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "commonsense/manifest.hpp"

namespace cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

struct Globals {
  std::uint64_t seed = 1;
  fs::path out_dir = ".";
  std::string manifest;  ///< empty = <out-dir>/<command>.manifest.json
  unsigned threads = 0;
  bool quiet = false;
};

/// One subcommand invocation: tracks inputs and outputs, writes the manifest
/// on success and removes partial outputs on failure.
class Run {
 public:
  Run(std::string command, std::vector<std::string> argv, const Globals& globals);

  const Globals& globals() const { return globals_; }
  std::uint64_t seed() const { return globals_.seed; }
  unsigned threads() const { return globals_.threads; }

  /// Hashes an input file into the manifest. Throws ValidationError if missing.
  const fs::path& input(const fs::path& path);

  /// Registers `name` under the output directory and returns its path.
  fs::path output(const std::string& name);

  nlohmann::ordered_json& settings() { return manifest_.settings; }

  /// Hashes outputs and writes the manifest.
  void commit();
  /// Deletes every registered output.
  void rollback() noexcept;

  fs::path manifest_path() const;

 private:
  Globals globals_;
  commonsense::RunManifest manifest_;
  std::vector<fs::path> outputs_;
};

/// CSV writer that starts with the "# schema: <name>/1" banner line.
class CsvOut {
 public:
  CsvOut(Run& run, const std::string& file, const std::string& schema,
         const std::vector<std::string>& header);
  void row(const std::vector<std::string>& fields);
  void close();

 private:
  fs::path path_;
  std::ofstream out_;
};

std::string num(double value);
std::string num(const std::optional<double>& value);
/// value * 100 with one decimal.
std::string pct(double value);
std::string pct(const std::optional<double>& value);
std::string count(std::size_t value);

void note(const Run& run, const std::string& message);

}  // namespace cli
