#include "commonsense/regress.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "commonsense/error.hpp"
#include "commonsense/parallel.hpp"
#include "commonsense/random.hpp"
#include "commonsense/stats.hpp"

namespace commonsense {

Eigen::MatrixXd with_intercept(const Eigen::Ref<const Eigen::MatrixXd>& predictors) {
  Eigen::MatrixXd X(predictors.rows(), predictors.cols() + 1);
  X.col(0).setOnes();
  X.rightCols(predictors.cols()) = predictors;
  return X;
}

OlsFit ols_fit(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (y.size() != n) throw ComputationError("ols: design and response differ in length");
  if (p == 0) throw ComputationError("ols: empty design");
  if (n <= p) throw ComputationError("ols: need more rows than columns");
  if (!X.allFinite() || !y.allFinite()) throw ComputationError("ols: non-finite input");

  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < p) throw ComputationError("ols: design matrix is rank deficient");

  OlsFit fit;
  fit.n = static_cast<std::size_t>(n);
  fit.p = static_cast<std::size_t>(p);
  fit.coefficients = qr.solve(y);
  fit.residuals = y - X * fit.coefficients;
  fit.rss = fit.residuals.squaredNorm();
  fit.sigma2 = fit.rss / static_cast<double>(n - p);

  // (X'X)^-1 = P R^-1 R^-T P'
  const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd xtx_inv_perm = r_inv * r_inv.transpose();
  const auto& perm = qr.colsPermutation();
  const Eigen::MatrixXd xtx_inv = perm * xtx_inv_perm * perm.transpose();
  fit.standard_errors = (fit.sigma2 * xtx_inv.diagonal()).cwiseSqrt();

  const double tss = (y.array() - y.mean()).square().sum();
  fit.r2 = tss > 0.0 ? 1.0 - fit.rss / tss : std::nan("");
  return fit;
}

// ------------------------------------------------------------ k-fold R^2

CvR2 kfold_r2(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
              std::size_t k, std::uint64_t seed, SsTotBasis basis, unsigned threads) {
  const auto n = static_cast<std::size_t>(X.rows());
  if (static_cast<std::size_t>(y.size()) != n) throw ComputationError("kfold: design and response differ in length");
  if (k < 2) throw ComputationError("kfold: need at least 2 folds");
  if (n < k) throw ComputationError("kfold: more folds than rows");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(f * n / k),
                    order.begin() + static_cast<std::ptrdiff_t>((f + 1) * n / k));
    std::sort(folds[f].begin(), folds[f].end());
    if (basis == SsTotBasis::held_out_mean && folds[f].size() < 2) {
      throw ComputationError("kfold: a fold has fewer than 2 points; use fewer folds or the training-mean basis");
    }
  }
  std::sort(folds.begin(), folds.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });

  CvR2 out;
  out.k = k;
  out.fold_r2.assign(k, 0.0);
  parallel_for(
      k,
      [&](std::size_t f) {
        const auto& test = folds[f];
        std::vector<char> held(n, 0);
        for (auto i : test) held[i] = 1;
        const auto n_train = static_cast<Eigen::Index>(n - test.size());
        Eigen::MatrixXd Xt(n_train, X.cols());
        Eigen::VectorXd yt(n_train);
        Eigen::Index row = 0;
        for (std::size_t i = 0; i < n; ++i) {
          if (held[i]) continue;
          Xt.row(row) = X.row(static_cast<Eigen::Index>(i));
          yt[row] = y[static_cast<Eigen::Index>(i)];
          ++row;
        }
        const OlsFit fit = ols_fit(Xt, yt);
        double centre = 0.0;
        if (basis == SsTotBasis::held_out_mean) {
          for (auto i : test) centre += y[static_cast<Eigen::Index>(i)];
          centre /= static_cast<double>(test.size());
        } else {
          centre = yt.mean();
        }
        double ss_res = 0.0, ss_tot = 0.0;
        for (auto i : test) {
          const auto r = static_cast<Eigen::Index>(i);
          const double pred = X.row(r).dot(fit.coefficients);
          ss_res += (y[r] - pred) * (y[r] - pred);
          ss_tot += (y[r] - centre) * (y[r] - centre);
        }
        if (ss_tot == 0.0) {
          // A noiseless fit of a constant fold is still perfect.
          if (ss_res == 0.0) {
            out.fold_r2[f] = 1.0;
            return;
          }
          throw ComputationError("kfold: held-out response has zero variance");
        }
        out.fold_r2[f] = 1.0 - ss_res / ss_tot;
      },
      threads);

  double sum = 0.0;
  for (double r : out.fold_r2) sum += r;
  out.mean_r2 = sum / static_cast<double>(k);
  double ss = 0.0;
  for (double r : out.fold_r2) ss += (r - out.mean_r2) * (r - out.mean_r2);
  out.sd_r2 = std::sqrt(ss / static_cast<double>(k));
  return out;
}

// ------------------------------------------------------------- mixed model

namespace {

struct GroupSums {
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
};

struct LmmData {
  std::vector<GroupSums> groups;
  double n = 0;
  double x_mean = 0;
  double y_mean = 0;
  bool has_replicated_group = false;
};

LmmData prepare(std::span<const double> y, std::span<const double> x, std::span<const std::string> labels) {
  if (y.size() != x.size() || y.size() != labels.size()) {
    throw ComputationError("lmm: y, x and groups differ in length");
  }
  if (y.size() < 3) throw ComputationError("lmm: need at least 3 observations");
  LmmData d;
  d.n = static_cast<double>(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i]) || !std::isfinite(x[i])) throw ComputationError("lmm: non-finite input");
    d.x_mean += x[i];
    d.y_mean += y[i];
  }
  d.x_mean /= d.n;
  d.y_mean /= d.n;
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) {
    throw ComputationError("lmm: all x values are equal");
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto [it, inserted] = index.emplace(labels[i], d.groups.size());
    if (inserted) d.groups.emplace_back();
    GroupSums& g = d.groups[it->second];
    const double xc = x[i] - d.x_mean;
    const double yc = y[i] - d.y_mean;
    g.n += 1;
    g.sx += xc;
    g.sy += yc;
    g.sxx += xc * xc;
    g.sxy += xc * yc;
    g.syy += yc * yc;
  }
  for (const auto& g : d.groups) d.has_replicated_group = d.has_replicated_group || g.n >= 2;
  return d;
}

struct Profile {
  Eigen::Matrix2d a;  ///< X' V^-1 X on the centred design
  Eigen::Vector2d beta;
  double sigma2 = 0;
  double log_det_v = 0;
  double criterion = 0;
};

Profile profile(const LmmData& d, double theta) {
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  double yvy = 0.0;
  double log_det_v = 0.0;
  for (const auto& g : d.groups) {
    const double w = theta / (1.0 + g.n * theta);
    const Eigen::Vector2d u(g.n, g.sx);
    Eigen::Matrix2d xtx;
    xtx << g.n, g.sx, g.sx, g.sxx;
    a += xtx - w * u * u.transpose();
    b += Eigen::Vector2d(g.sy, g.sxy) - w * u * g.sy;
    yvy += g.syy - w * g.sy * g.sy;
    log_det_v += std::log1p(g.n * theta);
  }
  const double det = a.determinant();
  if (!(det > 1e-12 * a.cwiseAbs().maxCoeff() * a.cwiseAbs().maxCoeff())) {
    throw ComputationError("lmm: singular GLS system");
  }
  Profile p;
  p.a = a;
  p.beta = a.ldlt().solve(b);
  const double df = d.n - 2.0;
  p.sigma2 = (yvy - b.dot(p.beta)) / df;
  if (!(p.sigma2 > 0.0)) throw ComputationError("lmm: residual variance is zero");
  p.log_det_v = log_det_v;
  p.criterion = df * (1.0 + std::log(2.0 * std::numbers::pi * p.sigma2)) + log_det_v + std::log(det);
  return p;
}

// Brent's minimizer on [lo, hi] with absolute tolerance tol.
template <typename F>
double brent_minimize(F&& f, double lo, double hi, double tol) {
  constexpr double kGolden = 0.3819660112501051;
  constexpr int kMaxIter = 500;
  double a = lo, b = hi;
  double x = a + kGolden * (b - a), w = x, v = x;
  double fx = f(x), fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    const double m = 0.5 * (a + b);
    const double tol1 = tol + 1e-12 * std::abs(x);
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - m) <= tol2 - 0.5 * (b - a)) break;
    bool golden = true;
    if (std::abs(e) > tol1) {
      double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double e_prev = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * e_prev) && p > q * (a - x) && p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = x < m ? tol1 : -tol1;
        golden = false;
      }
    }
    if (golden) {
      e = (x < m ? b : a) - x;
      d = kGolden * e;
    }
    const double u = std::abs(d) >= tol1 ? x + d : x + (d > 0 ? tol1 : -tol1);
    const double fu = f(u);
    if (fu <= fx) {
      (u < x ? b : a) = x;
      v = w, fv = fw;
      w = x, fw = fx;
      x = u, fx = fu;
    } else {
      (u < x ? a : b) = u;
      if (fu <= fw || w == x) {
        v = w, fv = fw;
        w = u, fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u, fv = fu;
      }
    }
  }
  return x;
}

}  // namespace

double lmm_reml_criterion(std::span<const double> y, std::span<const double> x,
                          std::span<const std::string> groups, double theta) {
  if (!(theta >= 0.0)) throw ComputationError("lmm: theta must be non-negative");
  return profile(prepare(y, x, groups), theta).criterion;
}

LmmFit lmm_random_intercept(std::span<const double> y, std::span<const double> x,
                            std::span<const std::string> groups, const LmmOptions& options) {
  const LmmData d = prepare(y, x, groups);
  if (!(options.tol > 0.0) || !(options.theta_max > 0.0)) {
    throw ComputationError("lmm: tolerance and theta bracket must be positive");
  }

  LmmFit fit;
  fit.n = y.size();
  fit.n_groups = d.groups.size();
  double theta = 0.0;
  if (d.groups.size() >= 2) {
    if (!d.has_replicated_group) throw ComputationError("lmm: every group has a single observation");
    const auto f = [&](double t) { return profile(d, t).criterion; };
    // Coarse log-spaced scan locates the basin; Brent refines inside it.
    std::vector<double> grid{0.0};
    constexpr int kSteps = 80;
    const double lo_exp = -8.0, hi_exp = std::log10(options.theta_max);
    for (int s = 0; s <= kSteps; ++s) grid.push_back(std::pow(10.0, lo_exp + (hi_exp - lo_exp) * s / kSteps));
    grid.back() = options.theta_max;
    std::size_t best = 0;
    double f_best = f(grid[0]);
    for (std::size_t s = 1; s < grid.size(); ++s) {
      const double fs = f(grid[s]);
      if (fs < f_best) best = s, f_best = fs;
    }
    const double lo = grid[best == 0 ? 0 : best - 1];
    const double hi = grid[std::min(best + 1, grid.size() - 1)];
    theta = brent_minimize(f, lo, hi, options.tol);
    if (f(theta) > f_best) theta = grid[best];
    if (f(0.0) <= f(theta)) theta = 0.0;
    fit.converged = theta < options.theta_max - 10.0 * options.tol;
  }

  const Profile p = profile(d, theta);
  fit.theta = theta;
  fit.sigma2_resid = p.sigma2;
  fit.sigma2_group = theta * p.sigma2;
  fit.reml_criterion = p.criterion;
  const Eigen::Matrix2d cov = p.sigma2 * p.a.inverse();
  fit.beta_fixed = p.beta[1];
  fit.intercept = p.beta[0] + d.y_mean - p.beta[1] * d.x_mean;
  fit.se_beta = std::sqrt(cov(1, 1));
  fit.se_intercept = std::sqrt(cov(0, 0) - 2.0 * d.x_mean * cov(0, 1) + d.x_mean * d.x_mean * cov(1, 1));
  fit.z = fit.beta_fixed / fit.se_beta;
  fit.p_two_sided = normal_two_sided_p(fit.z);
  fit.ci95 = {fit.beta_fixed - kZ975 * fit.se_beta, fit.beta_fixed + kZ975 * fit.se_beta};
  return fit;
}

// -------------------------------------------------------------------- Elo

double elo_win_prob(double ra, double rb) {
  if (!std::isfinite(ra) || !std::isfinite(rb)) throw ComputationError("elo: ratings must be finite");
  // Evaluate the favourite's side and complement the other so that
  // p(a, b) + p(b, a) == 1 holds exactly.
  if (ra >= rb) return 1.0 / (1.0 + std::pow(10.0, (rb - ra) / 400.0));
  return 1.0 - 1.0 / (1.0 + std::pow(10.0, (ra - rb) / 400.0));
}

// --------------------------------------------------- bootstrapped line fit

namespace {

bool simple_fit(std::span<const double> x, std::span<const double> y, const std::size_t* idx,
                std::size_t n, double& intercept, double& slope) {
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = idx ? idx[k] : k;
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = idx ? idx[k] : k;
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) return false;
  slope = sxy / sxx;
  intercept = my - slope * mx;
  return true;
}

}  // namespace

LineBootstrap bootstrap_line(std::span<const double> x, std::span<const double> y,
                             std::span<const double> grid, std::size_t n_replicates,
                             std::uint64_t seed, unsigned threads) {
  const std::size_t n = x.size();
  if (y.size() != n) throw ComputationError("bootstrap line: x and y differ in length");
  if (n < 3) throw ComputationError("bootstrap line: need at least 3 points");
  if (n_replicates == 0) throw ComputationError("bootstrap line: need at least one replicate");
  LineBootstrap out;
  if (!simple_fit(x, y, nullptr, n, out.intercept, out.slope)) {
    throw ComputationError("bootstrap line: all x values are equal");
  }
  out.n_replicates = n_replicates;
  out.grid.assign(grid.begin(), grid.end());

  std::vector<double> slopes(n_replicates), intercepts(n_replicates);
  std::vector<std::size_t> redraws(n_replicates, 0);
  const CounterRng base(seed);
  parallel_for(
      n_replicates,
      [&](std::size_t rep) {
        CounterRng rng = base.substream(rep);
        std::vector<std::size_t> idx(n);
        for (;;) {
          for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_index(n));
          if (simple_fit(x, y, idx.data(), n, intercepts[rep], slopes[rep])) return;
          ++redraws[rep];
        }
      },
      threads);
  out.n_redrawn = std::accumulate(redraws.begin(), redraws.end(), std::size_t{0});

  std::vector<double> sorted = slopes;
  std::sort(sorted.begin(), sorted.end());
  out.slope_ci95 = {quantile_sorted(sorted, 0.025), quantile_sorted(sorted, 0.975)};
  for (double g : grid) {
    out.fit.push_back(out.intercept + out.slope * g);
    for (std::size_t r = 0; r < n_replicates; ++r) sorted[r] = intercepts[r] + slopes[r] * g;
    std::sort(sorted.begin(), sorted.end());
    out.band_lo.push_back(quantile_sorted(sorted, 0.025));
    out.band_hi.push_back(quantile_sorted(sorted, 0.975));
  }
  return out;
}

}  // namespace commonsense
