#include "commonsense/stats.hpp"

#include <array>
#include <limits>
#include <numeric>

#include "commonsense/metrics.hpp"
#include "commonsense/parallel.hpp"
#include "commonsense/random.hpp"

namespace commonsense {
namespace {

// Continued fraction for I_x(a, b), valid for x < (a + 1) / (a + b + 2).
double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-15;
  constexpr int kMaxIter = 10000;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) return h;
  }
  throw ComputationError("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw ComputationError("incomplete beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw ComputationError("incomplete beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw ComputationError("student t: df must be positive");
  if (std::isnan(t)) throw ComputationError("student t: NaN statistic");
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

double student_t_cdf(double t, double df) {
  const double tail = 0.5 * student_t_two_sided_p(t, df);
  return t >= 0.0 ? 1.0 - tail : tail;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

double pearson_p_value(double r, std::size_t n) {
  if (n < 3) throw ComputationError("pearson: need at least 3 pairs");
  const double df = static_cast<double>(n - 2);
  const double one_minus_r2 = 1.0 - r * r;
  if (one_minus_r2 <= 0.0) return 0.0;
  // t^2 = r^2 df / (1 - r^2), so df / (df + t^2) = 1 - r^2.
  return regularized_incomplete_beta(0.5 * df, 0.5, one_minus_r2);
}

Eigen::VectorXd average_ranks(const Eigen::Ref<const Eigen::VectorXd>& values) {
  const Eigen::Index n = values.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return values[a] < values[b]; });
  Eigen::VectorXd ranks(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::vector<double> bonferroni(std::span<const double> p_values) {
  const double m = static_cast<double>(p_values.size());
  std::vector<double> out;
  out.reserve(p_values.size());
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw ComputationError("bonferroni: p-value outside [0, 1]");
    out.push_back(std::min(1.0, p * m));
  }
  return out;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ComputationError("quantile of empty data");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// ------------------------------------------------------ split-half

std::vector<bool> split_half_assignment(std::size_t n_respondents, std::uint64_t seed,
                                        std::size_t repeat) {
  std::vector<std::uint32_t> order(n_respondents);
  std::iota(order.begin(), order.end(), 0u);
  CounterRng rng = CounterRng(seed).substream(repeat);
  rng.shuffle(std::span<std::uint32_t>(order));
  std::vector<bool> first(n_respondents, false);
  for (std::size_t k = 0; k < n_respondents / 2; ++k) first[order[k]] = true;
  return first;
}

SplitHalfResult split_half_reliability(const RatingMatrix& matrix, std::size_t repeats,
                                       std::uint64_t seed, unsigned threads) {
  if (matrix.n_respondents() < 4) throw ComputationError("split-half needs at least 4 respondents");
  if (repeats == 0) throw ComputationError("split-half needs at least one repeat");
  SplitHalfResult result;
  result.per_repeat.assign(repeats, 0.0);
  const std::size_t ns = matrix.n_statements();

  parallel_for(
      repeats,
      [&](std::size_t rep) {
        const auto first = split_half_assignment(matrix.n_respondents(), seed, rep);
        std::vector<double> m_first, m_second;
        m_first.reserve(ns);
        m_second.reserve(ns);
        for (std::size_t i = 0; i < ns; ++i) {
          std::array<std::size_t, 2> n{}, yes_a{}, yes_b{};
          for (auto k : matrix.raters_of(i)) {
            const Rating& r = matrix.rating(k);
            const std::size_t h = first[r.respondent] ? 0 : 1;
            ++n[h];
            yes_a[h] += r.agree;
            yes_b[h] += r.others;
          }
          if (n[0] == 0 || n[1] == 0) continue;
          std::array<double, 2> m{};
          for (std::size_t h = 0; h < 2; ++h) {
            const double d_a = static_cast<double>(yes_a[h]) / static_cast<double>(n[h]);
            const bool majority = majority_of(d_a);
            const double d_b = static_cast<double>(yes_b[h]) / static_cast<double>(n[h]);
            m[h] = commonsensicality(statement_consensus(d_a), majority ? d_b : 1.0 - d_b);
          }
          m_first.push_back(m[0]);
          m_second.push_back(m[1]);
        }
        if (m_first.size() < 3) {
          throw ComputationError("split-half: fewer than 3 statements rated in both halves");
        }
        const Eigen::Map<const Eigen::VectorXd> a(m_first.data(), static_cast<Eigen::Index>(m_first.size()));
        const Eigen::Map<const Eigen::VectorXd> b(m_second.data(), static_cast<Eigen::Index>(m_second.size()));
        result.per_repeat[rep] = pearson(a, b).r;
      },
      threads);

  std::vector<double> sorted = result.per_repeat;
  std::sort(sorted.begin(), sorted.end());
  result.mean_r = std::accumulate(result.per_repeat.begin(), result.per_repeat.end(), 0.0) /
                  static_cast<double>(repeats);
  result.ci_lo = quantile_sorted(sorted, 0.025);
  result.ci_hi = quantile_sorted(sorted, 0.975);
  return result;
}

// ------------------------------------------------------------- bootstrap

BootstrapContrast bootstrap_mean_difference(std::span<const double> values,
                                            std::span<const std::optional<bool>> group,
                                            std::size_t n_replicates, std::uint64_t seed,
                                            unsigned threads) {
  if (values.size() != group.size()) throw ComputationError("bootstrap: values and groups differ in length");
  std::vector<double> v;
  std::vector<char> in_a;
  double sum_a = 0.0, sum_b = 0.0;
  std::size_t n_a = 0, n_b = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!group[i]) continue;
    if (!std::isfinite(values[i])) throw ComputationError("bootstrap: non-finite value");
    v.push_back(values[i]);
    in_a.push_back(*group[i]);
    (*group[i] ? sum_a : sum_b) += values[i];
    (*group[i] ? n_a : n_b) += 1;
  }
  if (n_a == 0 || n_b == 0) throw ComputationError("bootstrap: both groups must be non-empty");
  if (n_replicates == 0) throw ComputationError("bootstrap: need at least one replicate");

  BootstrapContrast out;
  out.mean_diff = sum_a / static_cast<double>(n_a) - sum_b / static_cast<double>(n_b);
  out.n_replicates = n_replicates;

  std::vector<double> diffs(n_replicates);
  std::vector<std::size_t> redraws(n_replicates, 0);
  const std::size_t n = v.size();
  const CounterRng base(seed);
  parallel_for(
      n_replicates,
      [&](std::size_t rep) {
        CounterRng rng = base.substream(rep);
        for (;;) {
          double sa = 0.0, sb = 0.0;
          std::size_t ca = 0, cb = 0;
          for (std::size_t k = 0; k < n; ++k) {
            const auto idx = static_cast<std::size_t>(rng.uniform_index(n));
            if (in_a[idx]) {
              sa += v[idx];
              ++ca;
            } else {
              sb += v[idx];
              ++cb;
            }
          }
          if (ca > 0 && cb > 0) {
            diffs[rep] = sa / static_cast<double>(ca) - sb / static_cast<double>(cb);
            return;
          }
          ++redraws[rep];
        }
      },
      threads);

  out.n_redrawn = std::accumulate(redraws.begin(), redraws.end(), std::size_t{0});
  std::sort(diffs.begin(), diffs.end());
  out.ci50 = {quantile_sorted(diffs, 0.25), quantile_sorted(diffs, 0.75)};
  out.ci95 = {quantile_sorted(diffs, 0.025), quantile_sorted(diffs, 0.975)};
  return out;
}

// ------------------------------------------------------------ calibration

CalibrationResult calibration_bins(std::span<const double> human_freqs,
                                   std::span<const double> model_probs, std::size_t bins) {
  if (human_freqs.size() != model_probs.size()) throw ComputationError("calibration: length mismatch");
  if (human_freqs.empty()) throw ComputationError("calibration: empty input");
  if (bins == 0) throw ComputationError("calibration: need at least one bin");
  CalibrationResult out;
  out.n = human_freqs.size();
  std::vector<std::vector<double>> members(bins);
  double sq = 0.0;
  const double width = 1.0 / static_cast<double>(bins);
  for (std::size_t i = 0; i < human_freqs.size(); ++i) {
    const double h = human_freqs[i];
    const double m = model_probs[i];
    if (!(h >= 0.0 && h <= 1.0) || !(m >= 0.0 && m <= 1.0)) {
      throw ComputationError("calibration: values must lie in [0, 1]");
    }
    // The 1e-9 slack keeps shares such as 7/10 out of the bin below.
    auto b = static_cast<std::size_t>(std::floor(h * static_cast<double>(bins) + 1e-9));
    b = std::min(b, bins - 1);
    members[b].push_back(m);
    sq += (m - h) * (m - h);
  }
  out.rmse = std::sqrt(sq / static_cast<double>(out.n));
  for (std::size_t b = 0; b < bins; ++b) {
    CalibrationBin bin;
    bin.lo = static_cast<double>(b) * width;
    bin.hi = b + 1 == bins ? 1.0 : static_cast<double>(b + 1) * width;
    auto& xs = members[b];
    bin.count = xs.size();
    if (xs.empty()) {
      bin.q25 = bin.median = bin.q75 = bin.mean_model = std::numeric_limits<double>::quiet_NaN();
    } else {
      std::sort(xs.begin(), xs.end());
      bin.q25 = quantile_sorted(xs, 0.25);
      bin.median = quantile_sorted(xs, 0.5);
      bin.q75 = quantile_sorted(xs, 0.75);
      bin.mean_model = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    }
    out.bins.push_back(bin);
  }
  if (out.n >= 3) {
    const Eigen::Map<const Eigen::VectorXd> h(human_freqs.data(), static_cast<Eigen::Index>(out.n));
    const Eigen::Map<const Eigen::VectorXd> m(model_probs.data(), static_cast<Eigen::Index>(out.n));
    try {
      out.r = pearson(h, m).r;
    } catch (const ComputationError&) {
      out.r.reset();
    }
  }
  return out;
}

}  // namespace commonsense
