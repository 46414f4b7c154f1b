#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <thread>
#include <utility>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "commonsense/corpus.hpp"

namespace testsupport {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(std::string_view tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(std::string_view name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::string read_file(const fs::path& path);
void write_file(const fs::path& path, std::string_view content);
fs::path data_path(std::string_view name);

struct CliResult {
  int exit_code = -1;
  std::string output;  ///< stdout and stderr interleaved
  double seconds = 0.0;
};

/// Runs the built CLI with `args`; extra environment assignments are
/// prefixed as NAME=value.
CliResult run_cli(const std::vector<std::string>& args, const std::vector<std::string>& env = {});

/// Minimal CSV view over files written by the CLI (banner lines skipped).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(std::string_view name) const;
  double num(std::size_t row, std::string_view name) const;
  const std::string& str(std::size_t row, std::string_view name) const;
};
CsvTable read_csv(const fs::path& path);

// ------------------------------------------------------------ model table

/// One row of the published per-model score table (values in percent).
struct TableRow {
  std::string model;
  std::string family;
  std::optional<double> size_b;
  std::optional<double> elo;
  std::optional<double> openbookqa;
  double c = 0, a = 0, m = 0;     ///< human majority
  double c2 = 0, a2 = 0, m2 = 0;  ///< human-plus-model majority
};

std::vector<TableRow> load_model_table();

/// 4,407 statements (1,602 facts), four raters per statement with planted
/// 2/4 ties on every tenth statement, and one binary-answer model per table
/// row whose hit counts reproduce that row under both majority variants.
struct TableFixture {
  commonsense::Corpus corpus;
  commonsense::RatingMatrix matrix;
  commonsense::ModelRatings models;
};

TableFixture build_table_fixture(const std::vector<TableRow>& rows);
void write_fixture(const TableFixture& fixture, const fs::path& dir);

// ------------------------------------------------------------- mock server

/// Local OpenAI-compatible chat endpoint on 127.0.0.1 with an ephemeral port.
/// The handler sets the HTTP status and returns the response body.
class MockChatServer {
 public:
  using Handler = std::function<nlohmann::json(const nlohmann::json& request, int& status)>;

  explicit MockChatServer(Handler handler);
  ~MockChatServer();
  MockChatServer(const MockChatServer&) = delete;
  MockChatServer& operator=(const MockChatServer&) = delete;

  std::string base_url() const;
  std::size_t requests() const { return requests_.load(); }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<std::size_t> requests_{0};
};

/// Deterministic top-logprob fixture for one user message: a pseudo-random
/// mix of yes/no surface forms and filler tokens. About one message in
/// `invalid_every` gets no yes/no mass at all.
std::vector<std::pair<std::string, double>> fixture_logprobs(const std::string& user_message,
                                                             unsigned invalid_every = 17);

/// Chat completion body carrying `top` as the first token's top_logprobs.
nlohmann::json logprob_response(const std::vector<std::pair<std::string, double>>& top);

/// Last user message of a request body.
std::string user_message(const nlohmann::json& request);

}  // namespace testsupport
