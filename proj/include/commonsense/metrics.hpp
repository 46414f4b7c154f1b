#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "commonsense/corpus.hpp"

namespace commonsense {

/// Consensus, awareness and their geometric mean for a statement, person,
/// model or silicon population. All three lie in [0, 1].
struct ScoreRecord {
  double consensus = 0.0;
  double awareness = 0.0;
  double commonsensicality = 0.0;
  std::size_t n_items = 0;
};

/// Per-statement rating distribution: share answering yes to (a) and (b).
struct StatementAggregate {
  double d_a = 0.0;
  double d_b = 0.0;
  bool majority = false;  ///< d_a >= 0.5; an exact tie counts as agree
  std::size_t n_raters = 0;
};

/// Majority rating per statement; empty where nobody rated the statement.
using Majorities = std::vector<std::optional<bool>>;

/// Statement subset used for feature-restricted scoring.
using StatementMask = std::vector<bool>;

// ------------------------------------------------------------ primitives

/// 1 iff share >= 0.5. The single tie rule used by every population.
inline bool majority_of(double share) { return share >= 0.5; }

double statement_consensus(double d_a);
double commonsensicality(double consensus, double awareness);
inline bool model_binarize(double p_yes) { return p_yes >= 0.5; }

ScoreRecord make_score(double consensus, double awareness, std::size_t n_items);

// -------------------------------------------------------- human statements

/// Throws ComputationError when statement i has no raters.
StatementAggregate statement_aggregate(const RatingMatrix& matrix, std::size_t statement);

/// Share of raters whose (b) answer equals `majority`.
double statement_awareness(const RatingMatrix& matrix, std::size_t statement, bool majority);

/// (c, a, m) for statement i, n_items = |Omega(i)|.
ScoreRecord statement_scores(const RatingMatrix& matrix, std::size_t statement);

Majorities human_majorities(const RatingMatrix& matrix);

// ------------------------------------------------------------------ people

/// C_j, A_j, M_j over Phi(j), optionally restricted to `mask`. Returns
/// std::nullopt when the (restricted) Phi(j) is empty.
std::optional<ScoreRecord> person_scores(const RatingMatrix& matrix, std::size_t respondent,
                                         const Majorities& majorities,
                                         const StatementMask* mask = nullptr);

// ------------------------------------------------------------------ models

/// C_m, A_m, M_m over statements with both a valid model answer and a human
/// majority (optionally restricted to `mask`). Throws ComputationError when
/// that overlap is empty.
ScoreRecord model_scores(const ModelColumn& model, const Majorities& majorities,
                         const StatementMask* mask = nullptr);

/// Human-plus-model majority for every statement: the model's binarized (a)
/// answer counts as one extra vote. Statements without a valid model answer
/// keep the human-only majority.
Majorities majorities_with_model_vote(const ModelColumn& model, const RatingMatrix& matrix);

/// model_scores against majorities_with_model_vote.
ScoreRecord model_scores_with_model_vote(const ModelColumn& model, const RatingMatrix& matrix,
                                         const StatementMask* mask = nullptr);

/// Statements where the model's binarized (a) and (b) answers differ.
struct Divergence {
  std::size_t n_divergent = 0;
  std::size_t n_items = 0;
  double fraction() const { return n_items ? static_cast<double>(n_divergent) / n_items : 0.0; }
};
Divergence answer_divergence(const ModelColumn& model);

// -------------------------------------------------------- model vs. human

struct PairwiseEntry {
  std::size_t respondent = 0;
  double m_model = 0.0;
  double m_human = 0.0;
  double diff = 0.0;  ///< m_model - m_human
  bool win = false;   ///< strictly m_model > m_human
};

struct PairwiseResult {
  std::vector<PairwiseEntry> entries;  ///< one per respondent, in matrix order
  double win_fraction = 0.0;
};

/// Model restricted to each respondent's Phi(j) versus that respondent.
/// Respondents with an empty Phi(j) are skipped. Throws ComputationError if
/// the model lacks a valid answer for any statement in some Phi(j).
PairwiseResult pairwise_win_rate(const ModelColumn& model, const RatingMatrix& matrix,
                                 const Majorities& majorities);

// -------------------------------------------------------------- silicon

struct SiliconScores {
  double consensus = 0.0;
  double awareness = 0.0;
  double commonsensicality = 0.0;
  bool majority = false;
};

/// Statement scores for the population of silicon samples drawn from a model
/// with yes-probabilities (p_a, p_b).
SiliconScores silicon_statement_scores(double p_yes_a, double p_yes_b);

/// m_i^m per statement for one model; empty where the answer is invalid.
std::vector<std::optional<double>> silicon_commonsensicality(const ModelColumn& model);

/// m_i^h per statement; empty where nobody rated it.
std::vector<std::optional<double>> human_commonsensicality(const RatingMatrix& matrix);

// ------------------------------------------------------------ features

/// Statements carrying `pole`. Throws ComputationError if none does.
StatementMask feature_mask(const Corpus& corpus, Pole pole);

}  // namespace commonsense
