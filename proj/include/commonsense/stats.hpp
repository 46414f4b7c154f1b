#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "commonsense/corpus.hpp"
#include "commonsense/error.hpp"

namespace commonsense {

// ------------------------------------------------------------ distributions

/// Regularized incomplete beta I_x(a, b), continued fraction (modified Lentz)
/// with relative tolerance 1e-15.
double regularized_incomplete_beta(double a, double b, double x);

/// Student-t CDF with `df` degrees of freedom (df > 0, non-integer allowed).
double student_t_cdf(double t, double df);

/// P(|T| >= |t|) for T ~ t(df), evaluated as I_{df/(df+t^2)}(df/2, 1/2) so
/// tiny p-values keep full relative precision.
double student_t_two_sided_p(double t, double df);

double normal_cdf(double z);
double normal_two_sided_p(double z);

/// Two-sided 95% standard normal quantile.
inline constexpr double kZ975 = 1.959963984540054;

// ------------------------------------------------------------- correlation

struct CorrelationResult {
  double r = 0.0;
  double p_two_sided = 1.0;
  std::size_t n = 0;
  std::optional<double> p_adjusted;
};

/// Two-sided p-value of a sample Pearson r over n pairs (t-test, n - 2 df).
double pearson_p_value(double r, std::size_t n);

/// Sample Pearson correlation with its two-sided t-test p-value. Throws
/// ComputationError for n < 3, mismatched lengths or zero variance.
template <typename DerivedX, typename DerivedY>
CorrelationResult pearson(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedX::Scalar;
  const Eigen::Index n = x.size();
  if (y.size() != n) throw ComputationError("pearson: vectors differ in length");
  if (n < 3) throw ComputationError("pearson: need at least 3 pairs");
  if (!x.allFinite() || !y.allFinite()) throw ComputationError("pearson: non-finite input");
  const auto xc = (x.array() - x.mean()).eval();
  const auto yc = (y.array() - y.mean()).eval();
  const Scalar sxx = xc.square().sum();
  const Scalar syy = yc.square().sum();
  if (sxx == Scalar(0) || syy == Scalar(0)) {
    throw ComputationError("pearson: correlation undefined for a zero-variance vector");
  }
  const Scalar sxy = (xc * yc).sum();
  CorrelationResult out;
  out.n = static_cast<std::size_t>(n);
  out.r = std::clamp(static_cast<double>(sxy / std::sqrt(sxx * syy)), -1.0, 1.0);
  out.p_two_sided = pearson_p_value(out.r, out.n);
  return out;
}

/// Fractional ranks (1-based, ties share their average rank).
Eigen::VectorXd average_ranks(const Eigen::Ref<const Eigen::VectorXd>& values);

/// Spearman rank correlation: Pearson over average ranks.
template <typename DerivedX, typename DerivedY>
CorrelationResult spearman(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
  const Eigen::VectorXd rx = average_ranks(x.template cast<double>());
  const Eigen::VectorXd ry = average_ranks(y.template cast<double>());
  return pearson(rx, ry);
}

/// min(1, p * m) for each of the m p-values.
std::vector<double> bonferroni(std::span<const double> p_values);

// ------------------------------------------------------------ error gaps

struct ErrorGap {
  double mae = 0.0;
  double rmse = 0.0;
};

/// MAE and RMSE of model - human over paired entries.
template <typename DerivedM, typename DerivedH>
ErrorGap mae_rmse_gap(const Eigen::MatrixBase<DerivedM>& model, const Eigen::MatrixBase<DerivedH>& human) {
  if (model.size() != human.size()) throw ComputationError("mae_rmse_gap: length mismatch");
  if (model.size() == 0) throw ComputationError("mae_rmse_gap: empty input");
  const auto delta = (model.array() - human.array()).eval();
  return {static_cast<double>(delta.abs().mean()), static_cast<double>(std::sqrt(delta.square().mean()))};
}

// -------------------------------------------------------------- quantiles

/// Linear-interpolation quantile of sorted data (the "type 7" definition).
double quantile_sorted(std::span<const double> sorted, double q);

// ------------------------------------------------------ split-half reliability

struct SplitHalfResult {
  double mean_r = 0.0;
  double ci_lo = 0.0;  ///< 2.5th percentile over repeats
  double ci_hi = 0.0;  ///< 97.5th percentile over repeats
  std::vector<double> per_repeat;
};

/// Splits respondents into random halves of floor(n/2) and ceil(n/2), scores
/// every statement within each half, and correlates m_i over statements
/// rated in both halves. Repeat k draws its permutation from substream k of
/// `seed`.
SplitHalfResult split_half_reliability(const RatingMatrix& matrix, std::size_t repeats,
                                       std::uint64_t seed, unsigned threads = 0);

/// Half assignment used by repeat `repeat`: true = first half. Exposed so
/// independent re-implementations can share the sampling contract.
std::vector<bool> split_half_assignment(std::size_t n_respondents, std::uint64_t seed,
                                        std::size_t repeat);

// ------------------------------------------------------------- bootstrap

struct BootstrapContrast {
  double mean_diff = 0.0;
  std::pair<double, double> ci50{0.0, 0.0};
  std::pair<double, double> ci95{0.0, 0.0};
  std::size_t n_replicates = 0;
  /// Replicates redrawn because resampling emptied a group.
  std::size_t n_redrawn = 0;
};

/// mean(values | group A) - mean(values | group B) with percentile CIs.
/// group[i] == true marks A, false marks B, empty excludes the item. Each
/// replicate resamples all labelled items with replacement from its own
/// substream.
BootstrapContrast bootstrap_mean_difference(std::span<const double> values,
                                            std::span<const std::optional<bool>> group,
                                            std::size_t n_replicates, std::uint64_t seed,
                                            unsigned threads = 0);

// ------------------------------------------------------------ calibration

struct CalibrationBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  // Statistics of the model probabilities in the bin; NaN when empty.
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  double mean_model = 0.0;
};

struct CalibrationResult {
  std::vector<CalibrationBin> bins;
  double rmse = 0.0;
  std::optional<double> r;  ///< empty when either side has zero variance
  std::size_t n = 0;
};

/// Equal-width bins over the human frequency; the last bin is right-closed.
CalibrationResult calibration_bins(std::span<const double> human_freqs,
                                   std::span<const double> model_probs, std::size_t bins = 10);

}  // namespace commonsense
