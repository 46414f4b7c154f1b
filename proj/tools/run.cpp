#include "run.hpp"

#include <cmath>
#include <iostream>

#include "commonsense/csv.hpp"
#include "commonsense/error.hpp"

namespace cli {

using commonsense::ValidationError;

Run::Run(std::string command, std::vector<std::string> argv, const Globals& globals)
    : globals_(globals) {
  manifest_.command = std::move(command);
  manifest_.argv = std::move(argv);
  manifest_.seed = globals.seed;
  manifest_.started_at = commonsense::utc_timestamp();
}

const fs::path& Run::input(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ValidationError("missing input file '" + path.string() + "'");
  manifest_.input_hashes[path.string()] = commonsense::sha256_file(path);
  return path;
}

fs::path Run::output(const std::string& name) {
  fs::create_directories(globals_.out_dir);
  auto path = globals_.out_dir / name;
  outputs_.push_back(path);
  return path;
}

fs::path Run::manifest_path() const {
  if (!globals_.manifest.empty()) return globals_.manifest;
  return globals_.out_dir / (manifest_.command + ".manifest.json");
}

void Run::commit() {
  for (const auto& path : outputs_) {
    if (fs::exists(path)) manifest_.output_hashes[path.string()] = commonsense::sha256_file(path);
  }
  manifest_.finished_at = commonsense::utc_timestamp();
  const auto path = manifest_path();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  commonsense::write_manifest(path, manifest_);
}

void Run::rollback() noexcept {
  for (const auto& path : outputs_) {
    std::error_code ec;
    fs::remove(path, ec);
  }
}

CsvOut::CsvOut(Run& run, const std::string& file, const std::string& schema,
               const std::vector<std::string>& header)
    : path_(run.output(file)), out_(path_, std::ios::binary) {
  if (!out_) throw commonsense::Error("cannot write '" + path_.string() + "'");
  out_ << "# schema: " << schema << "/1\n";
  commonsense::csv::write_row(out_, header);
}

void CsvOut::row(const std::vector<std::string>& fields) { commonsense::csv::write_row(out_, fields); }

void CsvOut::close() {
  out_.close();
  if (!out_) throw commonsense::Error("failed writing '" + path_.string() + "'");
}

std::string num(double value) {
  return std::isfinite(value) ? commonsense::csv::format_double(value) : std::string();
}
std::string num(const std::optional<double>& value) { return value ? num(*value) : std::string(); }
std::string pct(double value) {
  return std::isfinite(value) ? commonsense::csv::format_fixed(value * 100.0, 1) : std::string();
}
std::string pct(const std::optional<double>& value) { return value ? pct(*value) : std::string(); }
std::string count(std::size_t value) { return std::to_string(value); }

void note(const Run& run, const std::string& message) {
  if (!run.globals().quiet) std::cout << message << '\n';
}

}  // namespace cli
