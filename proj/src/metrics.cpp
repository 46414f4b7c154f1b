#include "commonsense/metrics.hpp"

#include <cmath>

#include "commonsense/error.hpp"

namespace commonsense {

double statement_consensus(double d_a) { return 2.0 * std::abs(d_a - 0.5); }

double commonsensicality(double consensus, double awareness) {
  return std::sqrt(consensus * awareness);
}

ScoreRecord make_score(double consensus, double awareness, std::size_t n_items) {
  return {consensus, awareness, commonsensicality(consensus, awareness), n_items};
}

StatementAggregate statement_aggregate(const RatingMatrix& matrix, std::size_t statement) {
  const auto raters = matrix.raters_of(statement);
  if (raters.empty()) {
    throw ComputationError("statement '" + matrix.statement_id(statement) + "' has no raters");
  }
  std::size_t yes_a = 0, yes_b = 0;
  for (auto k : raters) {
    const Rating& r = matrix.rating(k);
    yes_a += r.agree;
    yes_b += r.others;
  }
  const double n = static_cast<double>(raters.size());
  StatementAggregate agg;
  agg.n_raters = raters.size();
  agg.d_a = static_cast<double>(yes_a) / n;
  agg.d_b = static_cast<double>(yes_b) / n;
  agg.majority = majority_of(agg.d_a);
  return agg;
}

double statement_awareness(const RatingMatrix& matrix, std::size_t statement, bool majority) {
  const auto raters = matrix.raters_of(statement);
  if (raters.empty()) {
    throw ComputationError("statement '" + matrix.statement_id(statement) + "' has no raters");
  }
  std::size_t hits = 0;
  for (auto k : raters) hits += matrix.rating(k).others == majority;
  return static_cast<double>(hits) / static_cast<double>(raters.size());
}

ScoreRecord statement_scores(const RatingMatrix& matrix, std::size_t statement) {
  const auto agg = statement_aggregate(matrix, statement);
  return make_score(statement_consensus(agg.d_a),
                    statement_awareness(matrix, statement, agg.majority), agg.n_raters);
}

Majorities human_majorities(const RatingMatrix& matrix) {
  Majorities out(matrix.n_statements());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!matrix.raters_of(i).empty()) out[i] = statement_aggregate(matrix, i).majority;
  }
  return out;
}

std::optional<ScoreRecord> person_scores(const RatingMatrix& matrix, std::size_t respondent,
                                         const Majorities& majorities, const StatementMask* mask) {
  if (respondent >= matrix.n_respondents()) {
    throw ComputationError("unknown respondent index " + std::to_string(respondent));
  }
  std::size_t n = 0, agree_hits = 0, others_hits = 0;
  for (auto k : matrix.rated_by(respondent)) {
    const Rating& r = matrix.rating(k);
    if (mask && !(*mask)[r.statement]) continue;
    if (!majorities[r.statement]) {
      throw ComputationError("no majority for statement '" + matrix.statement_id(r.statement) + "'");
    }
    const bool majority = *majorities[r.statement];
    ++n;
    agree_hits += r.agree == majority;
    others_hits += r.others == majority;
  }
  if (n == 0) return std::nullopt;
  const double dn = static_cast<double>(n);
  return make_score(agree_hits / dn, others_hits / dn, n);
}

ScoreRecord model_scores(const ModelColumn& model, const Majorities& majorities,
                         const StatementMask* mask) {
  std::size_t n = 0, agree_hits = 0, others_hits = 0;
  const std::size_t ns = std::min(model.answers.size(), majorities.size());
  for (std::size_t i = 0; i < ns; ++i) {
    if (mask && !(*mask)[i]) continue;
    const ModelAnswer* answer = model.valid_answer(i);
    if (!answer || !majorities[i]) continue;
    const bool majority = *majorities[i];
    ++n;
    agree_hits += model_binarize(*answer->p_yes_a) == majority;
    others_hits += model_binarize(*answer->p_yes_b) == majority;
  }
  if (n == 0) {
    throw ComputationError("model '" + model.model +
                           "' has no valid answers overlapping statements with a human majority");
  }
  const double dn = static_cast<double>(n);
  return make_score(agree_hits / dn, others_hits / dn, n);
}

Majorities majorities_with_model_vote(const ModelColumn& model, const RatingMatrix& matrix) {
  Majorities out(matrix.n_statements());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto raters = matrix.raters_of(i);
    const ModelAnswer* answer = i < model.answers.size() ? model.valid_answer(i) : nullptr;
    if (raters.empty()) continue;
    std::size_t yes = 0;
    for (auto k : raters) yes += matrix.rating(k).agree;
    std::size_t voters = raters.size();
    if (answer) {
      yes += model_binarize(*answer->p_yes_a);
      ++voters;
    }
    out[i] = majority_of(static_cast<double>(yes) / static_cast<double>(voters));
  }
  return out;
}

ScoreRecord model_scores_with_model_vote(const ModelColumn& model, const RatingMatrix& matrix,
                                         const StatementMask* mask) {
  return model_scores(model, majorities_with_model_vote(model, matrix), mask);
}

Divergence answer_divergence(const ModelColumn& model) {
  Divergence d;
  for (std::size_t i = 0; i < model.answers.size(); ++i) {
    const ModelAnswer* answer = model.valid_answer(i);
    if (!answer) continue;
    ++d.n_items;
    d.n_divergent += model_binarize(*answer->p_yes_a) != model_binarize(*answer->p_yes_b);
  }
  return d;
}

PairwiseResult pairwise_win_rate(const ModelColumn& model, const RatingMatrix& matrix,
                                 const Majorities& majorities) {
  PairwiseResult result;
  std::size_t wins = 0;
  for (std::size_t j = 0; j < matrix.n_respondents(); ++j) {
    const auto phi = matrix.rated_by(j);
    if (phi.empty()) continue;
    std::size_t model_a = 0, model_b = 0, human_a = 0, human_b = 0;
    for (auto k : phi) {
      const Rating& r = matrix.rating(k);
      const ModelAnswer* answer = r.statement < model.answers.size() ? model.valid_answer(r.statement) : nullptr;
      if (!answer) {
        throw ComputationError("model '" + model.model + "' has no valid rating for statement '" +
                               matrix.statement_id(r.statement) + "' rated by respondent '" +
                               matrix.respondent_id(j) + "'");
      }
      if (!majorities[r.statement]) {
        throw ComputationError("no majority for statement '" + matrix.statement_id(r.statement) + "'");
      }
      const bool majority = *majorities[r.statement];
      model_a += model_binarize(*answer->p_yes_a) == majority;
      model_b += model_binarize(*answer->p_yes_b) == majority;
      human_a += r.agree == majority;
      human_b += r.others == majority;
    }
    const double n = static_cast<double>(phi.size());
    PairwiseEntry e;
    e.respondent = j;
    e.m_model = commonsensicality(model_a / n, model_b / n);
    e.m_human = commonsensicality(human_a / n, human_b / n);
    e.diff = e.m_model - e.m_human;
    e.win = e.m_model > e.m_human;
    wins += e.win;
    result.entries.push_back(e);
  }
  if (!result.entries.empty()) {
    result.win_fraction = static_cast<double>(wins) / static_cast<double>(result.entries.size());
  }
  return result;
}

SiliconScores silicon_statement_scores(double p_yes_a, double p_yes_b) {
  SiliconScores s;
  s.majority = majority_of(p_yes_a);
  s.consensus = statement_consensus(p_yes_a);
  s.awareness = s.majority ? p_yes_b : 1.0 - p_yes_b;
  s.commonsensicality = commonsensicality(s.consensus, s.awareness);
  return s;
}

std::vector<std::optional<double>> silicon_commonsensicality(const ModelColumn& model) {
  std::vector<std::optional<double>> out(model.answers.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (const ModelAnswer* a = model.valid_answer(i)) {
      out[i] = silicon_statement_scores(*a->p_yes_a, *a->p_yes_b).commonsensicality;
    }
  }
  return out;
}

std::vector<std::optional<double>> human_commonsensicality(const RatingMatrix& matrix) {
  std::vector<std::optional<double>> out(matrix.n_statements());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!matrix.raters_of(i).empty()) out[i] = statement_scores(matrix, i).commonsensicality;
  }
  return out;
}

StatementMask feature_mask(const Corpus& corpus, Pole pole) {
  StatementMask mask(corpus.size(), false);
  bool any = false;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    mask[i] = corpus[i].has(pole);
    any = any || mask[i];
  }
  if (!any) {
    throw ComputationError("no statement carries the feature '" + std::string(pole_name(pole)) + "'");
  }
  return mask;
}

}  // namespace commonsense
