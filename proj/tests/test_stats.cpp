#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "commonsense/error.hpp"
#include "commonsense/metrics.hpp"
#include "commonsense/random.hpp"
#include "commonsense/stats.hpp"
#include "commonsense/synth.hpp"
#include "support.hpp"

using namespace commonsense;
using Catch::Approx;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

long double t_density(long double x, long double df) {
  const long double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * M_PIl);
  return c * std::pow(1 + x * x / df, -(df + 1) / 2);
}

long double simpson(long double a, long double b, long double fa, long double fm, long double fb, long double whole,
                    long double df, long double tol, int depth) {
  const long double m = (a + b) / 2, lm = (a + m) / 2, rm = (m + b) / 2;
  const long double flm = t_density(lm, df), frm = t_density(rm, df);
  const long double left = (m - a) / 6 * (fa + 4 * flm + fm);
  const long double right = (b - m) / 6 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::fabs(left + right - whole) <= 15 * tol) return left + right + (left + right - whole) / 15;
  return simpson(a, m, fa, flm, fm, left, df, tol / 2, depth - 1) +
         simpson(m, b, fm, frm, fb, right, df, tol / 2, depth - 1);
}

/// P(|T| >= t) = 1 - 2 * integral of the density over [0, t].
double t_two_sided_oracle(double t, double df) {
  const long double b = std::fabs(t), fa = t_density(0, df), fb = t_density(b, df), fm = t_density(b / 2, df);
  const long double whole = b / 6 * (fa + 4 * fm + fb);
  return static_cast<double>(1 - 2 * simpson(0, b, fa, fm, fb, whole, df, 1e-16L, 40));
}

}  // namespace

TEST_CASE("student-t two-sided p matches numeric integration") {
  for (int df = 3; df <= 40; ++df) {
    for (double t : {0.05, 0.5, 1.0, 1.7, 2.0, 2.6, 3.5, 5.0, 8.0}) {
      const double p = student_t_two_sided_p(t, df);
      REQUIRE(std::fabs(p - t_two_sided_oracle(t, df)) < 1e-9);
      CHECK(student_t_two_sided_p(-t, df) == p);
    }
  }
  CHECK(student_t_cdf(0.0, 7) == Approx(0.5).margin(1e-15));
  CHECK(student_t_cdf(2.0, 10) + student_t_cdf(-2.0, 10) == Approx(1.0).margin(1e-14));
}

TEST_CASE("normal tail helpers") {
  CHECK(normal_cdf(0.0) == Approx(0.5));
  CHECK(normal_two_sided_p(kZ975) == Approx(0.05).margin(1e-12));
}

TEST_CASE("pearson on exact lines and a hand dataset") {
  const auto x = vec({1, 2, 3, 4, 5, 6});
  const Eigen::VectorXd y = 2.0 * x.array() + 1.0;
  const auto r = pearson(x, y);
  CHECK(r.r == Approx(1.0).margin(1e-15));
  CHECK(r.p_two_sided < 1e-12);

  const auto a = vec({1.0, 2.0, 4.0, 7.0, 11.0});
  const auto b = vec({2.0, 1.0, 5.0, 6.0, 9.0});
  // Hand oracle: centred cross-products and sums of squares.
  const double ma = 5.0, mb = 4.6;
  double sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < 5; ++i) {
    sab += (a(i) - ma) * (b(i) - mb);
    saa += (a(i) - ma) * (a(i) - ma);
    sbb += (b(i) - mb) * (b(i) - mb);
  }
  const double r_hand = sab / std::sqrt(saa * sbb);
  const auto res = pearson(a, b);
  CHECK(res.r == Approx(r_hand).epsilon(1e-14));
  const double t = r_hand * std::sqrt(3.0 / (1.0 - r_hand * r_hand));
  CHECK(res.p_two_sided == Approx(student_t_two_sided_p(t, 3)).epsilon(1e-12));

  const auto swapped = pearson(b, a);
  CHECK(swapped.r == res.r);
  CHECK(swapped.p_two_sided == res.p_two_sided);
}

TEST_CASE("pearson errors") {
  CHECK_THROWS_AS(pearson(vec({1, 1, 1}), vec({1, 2, 3})), ComputationError);
  CHECK_THROWS_AS(pearson(vec({1, 2}), vec({1, 2})), ComputationError);
  CHECK_THROWS_AS(pearson(vec({1, 2, 3}), vec({1, 2})), ComputationError);
}

TEST_CASE("p-value falls as |r| grows") {
  double last = 1.0;
  for (double r = 0.0; r < 0.99; r += 0.01) {
    const double p = pearson_p_value(r, 24);
    CHECK(p <= last);
    CHECK(pearson_p_value(-r, 24) == p);
    last = p;
  }
}

TEST_CASE("elo correlation over the published table") {
  std::vector<double> elo, m;
  for (const auto& row : testsupport::load_model_table()) {
    if (!row.elo) continue;
    elo.push_back(*row.elo);
    m.push_back(row.m);
  }
  REQUIRE(elo.size() == 24);
  const auto r = pearson(Eigen::Map<Eigen::VectorXd>(elo.data(), 24), Eigen::Map<Eigen::VectorXd>(m.data(), 24));
  // Cross-checked offline against an independent statistics package.
  CHECK(r.r == Approx(0.21649).margin(1e-4));
  CHECK(r.p_two_sided == Approx(0.30959).margin(1e-4));
}

TEST_CASE("spearman uses average ranks") {
  const auto ranks = average_ranks(vec({10, 20, 20, 5}));
  CHECK(ranks(0) == 2.0);
  CHECK(ranks(1) == 3.5);
  CHECK(ranks(2) == 3.5);
  CHECK(ranks(3) == 1.0);
  CHECK(spearman(vec({1, 2, 3, 4}), vec({1, 4, 9, 16})).r == Approx(1.0));
}

TEST_CASE("bonferroni") {
  const std::vector<double> one = {0.01};
  CHECK(bonferroni(one)[0] == 0.01);
  std::vector<double> many(35, 0.5);
  many[0] = 0.002;
  const auto adj = bonferroni(many);
  CHECK(adj[0] == Approx(0.07));
  CHECK(adj[1] == 1.0);
  for (std::size_t i = 0; i < many.size(); ++i) CHECK(adj[i] >= many[i]);
}

TEST_CASE("error gaps") {
  const auto x = vec({0.1, 0.4, 0.9});
  const auto g0 = mae_rmse_gap(x, x);
  CHECK(g0.mae == 0.0);
  CHECK(g0.rmse == 0.0);
  const Eigen::VectorXd y = x.array() + 0.5;
  const auto g = mae_rmse_gap(y, x);
  CHECK(g.mae == Approx(0.5));
  CHECK(g.rmse == Approx(0.5));
  CHECK_THROWS_AS(mae_rmse_gap(x, vec({1, 2})), ComputationError);
  CounterRng rng(4);
  for (int k = 0; k < 200; ++k) {
    Eigen::VectorXd a(10), b(10);
    for (int i = 0; i < 10; ++i) a(i) = rng.uniform01(), b(i) = rng.uniform01();
    const auto e = mae_rmse_gap(a, b);
    CHECK(e.rmse >= e.mae - 1e-15);
  }
}

TEST_CASE("type-7 quantiles") {
  const std::vector<double> v = {1, 2, 3, 4};
  CHECK(quantile_sorted(v, 0.25) == Approx(1.75));
  CHECK(quantile_sorted(v, 0.5) == Approx(2.5));
  CHECK(quantile_sorted(v, 0.0) == 1.0);
  CHECK(quantile_sorted(v, 1.0) == 4.0);
}

TEST_CASE("bootstrap contrast basics") {
  std::vector<double> constant(20, 0.7);
  std::vector<std::optional<bool>> g(20);
  for (int i = 0; i < 20; ++i) g[i] = i % 2 == 0;
  const auto c = bootstrap_mean_difference(constant, g, 200, 1);
  CHECK(c.mean_diff == 0.0);
  CHECK(c.ci95.first == Approx(0.0).margin(1e-12));
  CHECK(c.ci95.second == Approx(0.0).margin(1e-12));

  CounterRng rng(12);
  std::vector<double> v(20);
  double sa = 0, sb = 0;
  int na = 0, nb = 0;
  for (int i = 0; i < 20; ++i) {
    v[i] = rng.uniform01();
    if (i % 3 == 0) g[i] = std::nullopt;
    else if (*g[i]) sa += v[i], ++na;
    else sb += v[i], ++nb;
  }
  const auto d = bootstrap_mean_difference(v, g, 500, 9);
  CHECK(d.mean_diff == Approx(sa / na - sb / nb).margin(1e-14));
  CHECK(d.ci50.first >= d.ci95.first);
  CHECK(d.ci50.second <= d.ci95.second);
  CHECK(d.n_replicates == 500);

  const auto again = bootstrap_mean_difference(v, g, 500, 9, 1);
  const auto threaded = bootstrap_mean_difference(v, g, 500, 9, 8);
  CHECK(again.ci95 == d.ci95);
  CHECK(threaded.ci95 == d.ci95);
  CHECK(threaded.ci50 == d.ci50);
}

TEST_CASE("bootstrap with a tiny group redraws emptied replicates") {
  std::vector<double> v = {1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<std::optional<bool>> g = {true, false, false, false, false, false, false, false};
  const auto c = bootstrap_mean_difference(v, g, 300, 2);
  CHECK(c.n_redrawn > 0);
  CHECK(c.n_replicates == 300);
  std::vector<std::optional<bool>> only_a(8, true);
  CHECK_THROWS_AS(bootstrap_mean_difference(v, only_a, 10, 1), ComputationError);
}

TEST_CASE("split-half on deterministic raters approaches 1") {
  const std::size_t ns = 30, nr = 200;
  std::vector<Rating> r;
  for (std::uint32_t i = 0; i < ns; ++i) {
    for (std::uint32_t j = 0; j < nr; ++j) {
      const bool agree = (j % 10) < (i % 11);
      r.push_back({i, j, agree, (j % 7) < (i % 8)});
    }
  }
  std::vector<std::string> sid, rid;
  for (std::size_t i = 0; i < ns; ++i) sid.push_back("s" + std::to_string(i));
  for (std::size_t j = 0; j < nr; ++j) rid.push_back("r" + std::to_string(j));
  const RatingMatrix m(sid, rid, r);
  const auto sh = split_half_reliability(m, 50, 3);
  CHECK(sh.mean_r > 0.95);
}

TEST_CASE("split-half agrees with a brute-force re-implementation") {
  const auto m = generate(heterogeneous_spec(80, 120, 30, 21));
  const std::size_t repeats = 200;
  const auto sh = split_half_reliability(m, repeats, 77);
  double sum = 0.0;
  for (std::size_t k = 0; k < repeats; ++k) {
    const auto half = split_half_assignment(m.n_respondents(), 77, k);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < m.n_statements(); ++i) {
      int n[2] = {0, 0}, ya[2] = {0, 0}, yb[2] = {0, 0};
      for (const auto& r : m.ratings()) {
        if (r.statement != i) continue;
        const int h = half[r.respondent] ? 0 : 1;
        ++n[h];
        ya[h] += r.agree;
        yb[h] += r.others;
      }
      if (!n[0] || !n[1]) continue;
      double mm[2];
      for (int h = 0; h < 2; ++h) {
        const bool maj = 2 * ya[h] >= n[h];
        const double c = std::fabs(2.0 * ya[h] - n[h]) / n[h];
        const double a = (maj ? yb[h] : n[h] - yb[h]) / double(n[h]);
        mm[h] = std::sqrt(c * a);
      }
      x.push_back(mm[0]);
      y.push_back(mm[1]);
    }
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
      syy += (y[i] - my) * (y[i] - my);
    }
    const double r = sxy / std::sqrt(sxx * syy);
    CHECK(sh.per_repeat[k] == Approx(r).margin(1e-10));
    sum += r;
  }
  CHECK(sh.mean_r == Approx(sum / repeats).margin(1e-10));
  CHECK(sh.ci_lo <= sh.mean_r);
  CHECK(sh.ci_hi >= sh.mean_r);
}

TEST_CASE("split-half halves have floor and ceil sizes") {
  const auto half = split_half_assignment(11, 5, 0);
  CHECK(std::count(half.begin(), half.end(), true) == 5);
  CHECK(split_half_assignment(11, 5, 3) == split_half_assignment(11, 5, 3));
}

TEST_CASE("calibration bins") {
  std::vector<double> h = {0.0, 0.05, 0.1, 0.2, 0.35, 0.5, 0.55, 0.7, 0.8, 0.9, 0.95, 1.0};
  const auto same = calibration_bins(h, h);
  CHECK(same.rmse == 0.0);
  REQUIRE(same.r);
  CHECK(*same.r == Approx(1.0));
  CHECK(same.bins.size() == 10);
  CHECK(same.bins[9].count == 3);  // 0.9, 0.95 and the right-closed 1.0
  CHECK(same.bins[1].count == 1);  // 0.1 belongs to [0.1, 0.2)

  std::vector<double> flipped;
  double s = 0.0;
  for (double x : h) {
    flipped.push_back(1.0 - x);
    s += (1.0 - 2.0 * x) * (1.0 - 2.0 * x);
  }
  CHECK(calibration_bins(h, flipped).rmse == Approx(std::sqrt(s / h.size())).epsilon(1e-14));

  const std::vector<double> m = {0.1, 0.1, 0.2, 0.2, 0.3, 0.5, 0.6, 0.6, 0.9, 0.8, 0.9, 0.9};
  double ss = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) ss += (m[i] - h[i]) * (m[i] - h[i]);
  const auto cal = calibration_bins(h, m);
  CHECK(cal.rmse == Approx(std::sqrt(ss / 12.0)).epsilon(1e-14));
  CHECK(cal.n == 12);
  CHECK(std::isnan(cal.bins[4].median));  // [0.4, 0.5) is empty
  CHECK(cal.bins[9].median == Approx(0.9));

  const std::vector<double> none;
  CHECK_THROWS_AS(calibration_bins(none, none), ComputationError);
}
