#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace commonsense {

struct OlsFit {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd standard_errors;
  Eigen::VectorXd residuals;
  double rss = 0.0;
  double sigma2 = 0.0;  ///< rss / (n - p)
  double r2 = 0.0;      ///< about the sample mean; NaN for constant y
  std::size_t n = 0;
  std::size_t p = 0;
};

/// [1 | X].
Eigen::MatrixXd with_intercept(const Eigen::Ref<const Eigen::MatrixXd>& predictors);

/// Least squares via column-pivoted Householder QR. Requires rows > columns
/// and full column rank; throws ComputationError otherwise.
OlsFit ols_fit(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y);

// ------------------------------------------------------------ k-fold R^2

enum class SsTotBasis {
  held_out_mean,  ///< SS_tot about the held-out fold's own mean
  training_mean,  ///< SS_tot about the training-fold mean
};

struct CvR2 {
  double mean_r2 = 0.0;
  double sd_r2 = 0.0;  ///< population sd over folds
  std::size_t k = 0;
  std::vector<double> fold_r2;  ///< ordered by each fold's smallest row index
};

/// Shuffles rows with `seed`, splits them into k near-equal folds and reports
/// out-of-sample R^2 per fold. `X` is the full design (add the intercept
/// column yourself). With the held-out basis every fold needs >= 2 rows, so
/// leave-one-out requires SsTotBasis::training_mean.
CvR2 kfold_r2(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
              std::size_t k, std::uint64_t seed, SsTotBasis basis = SsTotBasis::held_out_mean,
              unsigned threads = 0);

// ------------------------------------------------------------- mixed model

struct LmmOptions {
  double tol = 1e-8;         ///< absolute tolerance on theta
  double theta_max = 1e4;    ///< upper bracket for theta
};

struct LmmFit {
  double intercept = 0.0;
  double beta_fixed = 0.0;
  double sigma2_group = 0.0;
  double sigma2_resid = 0.0;
  double theta = 0.0;  ///< sigma2_group / sigma2_resid
  double se_intercept = 0.0;
  double se_beta = 0.0;
  double z = 0.0;
  double p_two_sided = 1.0;
  std::pair<double, double> ci95{0.0, 0.0};
  double reml_criterion = 0.0;  ///< -2 restricted log-likelihood
  bool converged = true;
  std::size_t n = 0;
  std::size_t n_groups = 0;
};

/// y = b0 + b1 x + u_g + e with u_g ~ N(0, s2_g), e ~ N(0, s2_e), fitted by
/// REML. The ratio theta = s2_g / s2_e is profiled over [0, theta_max]; a
/// single group fixes theta = 0 (plain OLS). Wald standard errors, normal
/// p-value and 95% interval.
LmmFit lmm_random_intercept(std::span<const double> y, std::span<const double> x,
                            std::span<const std::string> groups, const LmmOptions& options = {});

/// -2 REML log-likelihood at a given theta, profiled over beta and s2_e.
/// Exposed for tests and diagnostics.
double lmm_reml_criterion(std::span<const double> y, std::span<const double> x,
                          std::span<const std::string> groups, double theta);

// -------------------------------------------------------------------- Elo

/// Probability that a model rated ra is preferred over one rated rb.
double elo_win_prob(double ra, double rb);

// --------------------------------------------------- bootstrapped line fit

struct LineBootstrap {
  double intercept = 0.0;
  double slope = 0.0;
  std::pair<double, double> slope_ci95{0.0, 0.0};
  std::vector<double> grid;
  std::vector<double> fit;
  std::vector<double> band_lo;  ///< 2.5th percentile of the replicate lines
  std::vector<double> band_hi;  ///< 97.5th percentile
  std::size_t n_replicates = 0;
  std::size_t n_redrawn = 0;
};

/// Simple regression y ~ x with a case-resampling bootstrap of both the
/// slope and the mean prediction on `grid`.
LineBootstrap bootstrap_line(std::span<const double> x, std::span<const double> y,
                             std::span<const double> grid, std::size_t n_replicates,
                             std::uint64_t seed, unsigned threads = 0);

}  // namespace commonsense
