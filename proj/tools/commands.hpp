#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "run.hpp"

namespace cli {

/// Input files shared by most subcommands.
struct DataInputs {
  std::string statements;
  std::string ratings;
  std::string models;
  bool allow_missing_features = false;
};

struct IngestOptions {
  DataInputs data;
  std::string meta;
};

struct ScoreOptions {
  DataInputs data;
  bool with_model_vote = false;
  std::string features;  ///< pole name, empty = all statements
};

struct CompareOptions {
  DataInputs data;
  std::vector<std::string> only_models;
  bool skip_incomplete = false;
};

struct SiliconOptions {
  DataInputs data;
};

struct CorrelateOptions {
  DataInputs data;
  std::size_t splits = 1000;
};

struct ContrastOptions {
  DataInputs data;
  std::size_t bootstrap_n = 1000;
};

struct RegressOptions {
  DataInputs data;
  std::string meta;
  std::string scores;
  std::size_t folds = 50;
  double lmm_tol = 1e-8;
  std::size_t min_family_models = 2;
  std::string basis = "held-out";
  std::size_t bootstrap_n = 1000;
};

struct CalibrateOptions {
  DataInputs data;
  std::size_t bins = 10;
};

struct CollectOptions {
  std::string statements;
  std::string endpoint;
  std::string model;
  std::string mode = "token";
  int samples = 23;
  int choices_per_call = 8;
  int top_logprobs = 20;
  int max_tokens = 1;
  unsigned concurrency = 4;
  double rate = 0.0;
  std::string system_prompt_file;
  bool role_clarification = false;
  bool suppress_reasoning = false;
  bool most_other_people = false;
  std::string cache;
  std::string api_key_env = "OPENAI_API_KEY";
  int retries = 5;
  int backoff_ms = 500;
  int timeout_s = 120;
  std::string output = "model_ratings.jsonl";
};

struct SynthOptions {
  std::size_t n_statements = 64;
  std::size_t n_respondents = 64;
  std::size_t ratings_per_respondent = 50;
  std::string assignment = "uniform";
  std::size_t n_models = 3;
  double noise = 0.15;
  double invalid_rate = 0.0;
};

struct ExportOptions {
  std::string from;  ///< directory holding upstream outputs; default out-dir
  std::vector<std::string> panels;
};

int run_ingest(const IngestOptions& o, Run& run);
int run_score(const ScoreOptions& o, Run& run);
int run_compare(const CompareOptions& o, Run& run);
int run_silicon(const SiliconOptions& o, Run& run);
int run_correlate(const CorrelateOptions& o, Run& run);
int run_contrast(const ContrastOptions& o, Run& run);
int run_regress(const RegressOptions& o, Run& run);
int run_calibrate(const CalibrateOptions& o, Run& run);
int run_collect(const CollectOptions& o, Run& run);
int run_synth(const SynthOptions& o, Run& run);
int run_export(const ExportOptions& o, Run& run);

/// Parses and executes one command line (without the program name).
int dispatch(const std::vector<std::string>& args);

}  // namespace cli
