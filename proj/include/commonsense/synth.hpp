#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "commonsense/corpus.hpp"
#include "commonsense/metrics.hpp"

namespace commonsense {

enum class Assignment {
  uniform,   ///< each respondent draws a uniform subset without replacement
  balanced,  ///< statements dealt from reshuffled decks so counts differ by at most ~1
};

struct PopulationSpec {
  std::size_t n_statements = 0;
  std::size_t n_respondents = 0;
  std::vector<double> q_a;  ///< true agree probability per statement
  std::vector<double> q_b;  ///< true "most people agree" probability per statement
  std::size_t ratings_per_respondent = 50;
  std::uint64_t seed = 0;
  Assignment assignment = Assignment::uniform;

  /// Throws ValidationError when the spec is inconsistent.
  void validate() const;
};

/// q_a, q_b drawn uniformly on [0, 1] per statement from `seed`.
PopulationSpec heterogeneous_spec(std::size_t n_statements, std::size_t n_respondents,
                                  std::size_t ratings_per_respondent, std::uint64_t seed);

/// Ids used by generated data: s00000..., r00000...
std::string synthetic_statement_id(std::size_t i);
std::string synthetic_respondent_id(std::size_t j);

/// Respondent j's draws come from substream j of the seed, so a population
/// can be regenerated piecewise.
RatingMatrix generate(const PopulationSpec& spec);

/// Corpus with random sources and feature poles.
Corpus synthetic_corpus(std::size_t n_statements, std::uint64_t seed);

struct SyntheticModelSpec {
  std::size_t n_models = 3;
  double noise = 0.15;         ///< sd of the normal perturbation around q
  double invalid_rate = 0.0;   ///< share of rows flagged invalid
  std::uint64_t seed = 0;
};

/// Models named m0, m1, ... whose p_yes scatter around the population's
/// true probabilities. Every model includes a few exact 0.5 answers.
ModelRatings synthetic_model_ratings(const PopulationSpec& population, const SyntheticModelSpec& spec);

// ---------------------------------------------------------------- oracle

struct OraclePairwise {
  std::vector<double> diff;  ///< per respondent with a non-empty Phi(j)
  std::vector<bool> win;
  double win_fraction = 0.0;
};

struct OracleModel {
  std::string model;
  std::optional<ScoreRecord> scores;             ///< against human majorities
  std::optional<ScoreRecord> scores_with_vote;   ///< human-plus-model majority
  std::vector<std::optional<ScoreRecord>> silicon;  ///< per statement
  std::optional<OraclePairwise> pairwise;        ///< empty when coverage is incomplete
};

struct OracleResult {
  std::vector<std::optional<ScoreRecord>> statements;
  std::vector<std::optional<bool>> majority;
  std::vector<std::optional<ScoreRecord>> persons;
  std::vector<OracleModel> models;
};

/// Brute-force evaluation over a dense statement x respondent grid. Shares no
/// code with the metrics module.
OracleResult oracle_scores(const RatingMatrix& matrix, const ModelRatings* models = nullptr);

}  // namespace commonsense
