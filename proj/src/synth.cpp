#include "commonsense/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "commonsense/error.hpp"
#include "commonsense/random.hpp"

namespace commonsense {

void PopulationSpec::validate() const {
  if (n_statements == 0 || n_respondents == 0) throw ValidationError("population needs statements and respondents");
  if (q_a.size() != n_statements || q_b.size() != n_statements) {
    throw ValidationError("q_a and q_b need one entry per statement");
  }
  for (std::size_t i = 0; i < n_statements; ++i) {
    if (!(q_a[i] >= 0.0 && q_a[i] <= 1.0) || !(q_b[i] >= 0.0 && q_b[i] <= 1.0)) {
      throw ValidationError("probability outside [0, 1] for statement " + std::to_string(i));
    }
  }
  if (ratings_per_respondent == 0 || ratings_per_respondent > n_statements) {
    throw ValidationError("ratings per respondent must lie in [1, n_statements]");
  }
}

PopulationSpec heterogeneous_spec(std::size_t n_statements, std::size_t n_respondents,
                                  std::size_t ratings_per_respondent, std::uint64_t seed) {
  PopulationSpec spec;
  spec.n_statements = n_statements;
  spec.n_respondents = n_respondents;
  spec.ratings_per_respondent = ratings_per_respondent;
  spec.seed = seed;
  CounterRng rng(derive_seed(seed, 0x71));
  for (std::size_t i = 0; i < n_statements; ++i) {
    spec.q_a.push_back(rng.uniform01());
    spec.q_b.push_back(rng.uniform01());
  }
  return spec;
}

std::string synthetic_statement_id(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "s%05zu", i);
  return buf;
}

std::string synthetic_respondent_id(std::size_t j) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "r%05zu", j);
  return buf;
}

namespace {

std::vector<std::vector<std::uint32_t>> assign_uniform(const PopulationSpec& spec, const CounterRng& base) {
  std::vector<std::vector<std::uint32_t>> out(spec.n_respondents);
  std::vector<std::uint32_t> deck(spec.n_statements);
  for (std::size_t j = 0; j < spec.n_respondents; ++j) {
    CounterRng rng = base.substream(2 * j);
    std::iota(deck.begin(), deck.end(), 0u);
    // Partial Fisher-Yates: the first r slots become the subset.
    for (std::size_t k = 0; k < spec.ratings_per_respondent; ++k) {
      const auto pick = k + static_cast<std::size_t>(rng.uniform_index(spec.n_statements - k));
      std::swap(deck[k], deck[pick]);
    }
    out[j].assign(deck.begin(), deck.begin() + static_cast<std::ptrdiff_t>(spec.ratings_per_respondent));
    std::sort(out[j].begin(), out[j].end());
  }
  return out;
}

std::vector<std::vector<std::uint32_t>> assign_balanced(const PopulationSpec& spec, const CounterRng& base) {
  const std::size_t r = spec.ratings_per_respondent;
  const std::size_t total = spec.n_respondents * r;
  std::vector<std::uint32_t> stream;
  stream.reserve(total + spec.n_statements);
  CounterRng rng = base.substream(0xBA1A);
  std::vector<std::uint32_t> deck(spec.n_statements);
  while (stream.size() < total) {
    std::iota(deck.begin(), deck.end(), 0u);
    rng.shuffle(std::span<std::uint32_t>(deck));
    stream.insert(stream.end(), deck.begin(), deck.end());
  }
  std::vector<std::vector<std::uint32_t>> out(spec.n_respondents);
  for (std::size_t j = 0; j < spec.n_respondents; ++j) {
    std::set<std::uint32_t> seen;
    for (std::size_t k = j * r; k < (j + 1) * r; ++k) {
      if (seen.count(stream[k])) {
        // A deck boundary inside this respondent's block can repeat a
        // statement; swap in the next unseen one from further down.
        std::size_t m = k + 1;
        while (m < stream.size() && seen.count(stream[m])) ++m;
        if (m == stream.size()) throw ComputationError("balanced assignment ran out of statements");
        std::swap(stream[k], stream[m]);
      }
      seen.insert(stream[k]);
    }
    out[j].assign(seen.begin(), seen.end());
  }
  return out;
}

}  // namespace

RatingMatrix generate(const PopulationSpec& spec) {
  spec.validate();
  const CounterRng base(spec.seed);
  const auto assigned = spec.assignment == Assignment::uniform ? assign_uniform(spec, base)
                                                                : assign_balanced(spec, base);
  std::vector<Rating> ratings;
  ratings.reserve(spec.n_respondents * spec.ratings_per_respondent);
  for (std::size_t j = 0; j < spec.n_respondents; ++j) {
    CounterRng rng = base.substream(2 * j + 1);
    for (auto i : assigned[j]) {
      const bool agree = rng.bernoulli(spec.q_a[i]);
      const bool others = rng.bernoulli(spec.q_b[i]);
      ratings.push_back({i, static_cast<std::uint32_t>(j), agree, others});
    }
  }
  std::vector<std::string> sids, rids;
  for (std::size_t i = 0; i < spec.n_statements; ++i) sids.push_back(synthetic_statement_id(i));
  for (std::size_t j = 0; j < spec.n_respondents; ++j) rids.push_back(synthetic_respondent_id(j));
  return RatingMatrix(std::move(sids), std::move(rids), std::move(ratings));
}

Corpus synthetic_corpus(std::size_t n_statements, std::uint64_t seed) {
  CounterRng rng(derive_seed(seed, 0xC0));
  std::vector<Statement> statements;
  statements.reserve(n_statements);
  for (std::size_t i = 0; i < n_statements; ++i) {
    Statement s;
    s.id = synthetic_statement_id(i);
    s.text = "Synthetic statement number " + std::to_string(i) + ".";
    s.source = static_cast<Source>(rng.uniform_index(7));
    for (auto& f : s.features) f = static_cast<std::uint8_t>(rng.uniform_index(2));
    statements.push_back(std::move(s));
  }
  return Corpus(std::move(statements));
}

ModelRatings synthetic_model_ratings(const PopulationSpec& population, const SyntheticModelSpec& spec) {
  std::vector<std::string> sids;
  for (std::size_t i = 0; i < population.n_statements; ++i) sids.push_back(synthetic_statement_id(i));
  ModelRatings out(sids);
  const CounterRng base(derive_seed(spec.seed, 0x30DE));
  for (std::size_t m = 0; m < spec.n_models; ++m) {
    CounterRng rng = base.substream(m);
    ModelColumn& col = out.column("m" + std::to_string(m));
    for (std::size_t i = 0; i < population.n_statements; ++i) {
      ModelAnswer a;
      const auto draw = [&](double q) {
        // Quantize to 1/64 so exact 0.5 (and other ties) occur regularly.
        const double p = std::clamp(q + spec.noise * rng.normal(), 0.0, 1.0);
        return std::round(p * 64.0) / 64.0;
      };
      a.p_yes_a = draw(population.q_a[i]);
      a.p_yes_b = draw(population.q_b[i]);
      a.valid = !(spec.invalid_rate > 0.0 && rng.bernoulli(spec.invalid_rate));
      col.answers[i] = a;
    }
  }
  return out;
}

// ---------------------------------------------------------------- oracle

namespace {

// Dense grid: -1 = not rated, otherwise the 0/1 answer.
struct Grid {
  std::size_t rows = 0, cols = 0;
  std::vector<int> a, b;
  int& at_a(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  int& at_b(std::size_t i, std::size_t j) { return b[i * cols + j]; }
  int get_a(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
  int get_b(std::size_t i, std::size_t j) const { return b[i * cols + j]; }
};

ScoreRecord record(std::size_t hits_c, std::size_t hits_a, std::size_t n) {
  ScoreRecord s;
  s.n_items = n;
  s.consensus = static_cast<double>(hits_c) / static_cast<double>(n);
  s.awareness = static_cast<double>(hits_a) / static_cast<double>(n);
  s.commonsensicality = std::sqrt(s.consensus * s.awareness);
  return s;
}

int bit(double p) { return p >= 0.5 ? 1 : 0; }

}  // namespace

OracleResult oracle_scores(const RatingMatrix& matrix, const ModelRatings* models) {
  Grid g;
  g.rows = matrix.n_statements();
  g.cols = matrix.n_respondents();
  g.a.assign(g.rows * g.cols, -1);
  g.b.assign(g.rows * g.cols, -1);
  for (const Rating& r : matrix.ratings()) {
    g.at_a(r.statement, r.respondent) = r.agree ? 1 : 0;
    g.at_b(r.statement, r.respondent) = r.others ? 1 : 0;
  }

  OracleResult out;
  out.statements.resize(g.rows);
  out.majority.resize(g.rows);
  for (std::size_t i = 0; i < g.rows; ++i) {
    int n = 0, yes_a = 0;
    for (std::size_t j = 0; j < g.cols; ++j) {
      if (g.get_a(i, j) < 0) continue;
      ++n;
      yes_a += g.get_a(i, j);
    }
    if (n == 0) continue;
    const int maj = 2 * yes_a >= n ? 1 : 0;
    int aware = 0;
    for (std::size_t j = 0; j < g.cols; ++j) {
      if (g.get_b(i, j) >= 0 && g.get_b(i, j) == maj) ++aware;
    }
    ScoreRecord s;
    s.n_items = static_cast<std::size_t>(n);
    s.consensus = static_cast<double>(std::abs(2 * yes_a - n)) / n;
    s.awareness = static_cast<double>(aware) / n;
    s.commonsensicality = std::sqrt(s.consensus * s.awareness);
    out.statements[i] = s;
    out.majority[i] = maj == 1;
  }

  out.persons.resize(g.cols);
  for (std::size_t j = 0; j < g.cols; ++j) {
    std::size_t n = 0, hc = 0, ha = 0;
    for (std::size_t i = 0; i < g.rows; ++i) {
      if (g.get_a(i, j) < 0) continue;
      const int maj = *out.majority[i] ? 1 : 0;
      ++n;
      hc += g.get_a(i, j) == maj;
      ha += g.get_b(i, j) == maj;
    }
    if (n > 0) out.persons[j] = record(hc, ha, n);
  }

  if (!models) return out;
  for (const ModelColumn& col : models->models()) {
    OracleModel om;
    om.model = col.model;
    const auto usable = [&](std::size_t i) { return col.answers[i] && col.answers[i]->valid; };

    std::size_t n = 0, hc = 0, ha = 0;
    for (std::size_t i = 0; i < g.rows; ++i) {
      if (!usable(i) || !out.majority[i]) continue;
      const int maj = *out.majority[i] ? 1 : 0;
      ++n;
      hc += bit(*col.answers[i]->p_yes_a) == maj;
      ha += bit(*col.answers[i]->p_yes_b) == maj;
    }
    if (n > 0) om.scores = record(hc, ha, n);

    // Model vote: the model is one more rater of every statement it answered.
    n = hc = ha = 0;
    for (std::size_t i = 0; i < g.rows; ++i) {
      if (!usable(i) || !out.majority[i]) continue;
      int voters = 1, yes = bit(*col.answers[i]->p_yes_a);
      for (std::size_t j = 0; j < g.cols; ++j) {
        if (g.get_a(i, j) >= 0) ++voters, yes += g.get_a(i, j);
      }
      const int maj = 2 * yes >= voters ? 1 : 0;
      ++n;
      hc += bit(*col.answers[i]->p_yes_a) == maj;
      ha += bit(*col.answers[i]->p_yes_b) == maj;
    }
    if (n > 0) om.scores_with_vote = record(hc, ha, n);

    om.silicon.resize(g.rows);
    for (std::size_t i = 0; i < g.rows; ++i) {
      if (!usable(i)) continue;
      const double pa = *col.answers[i]->p_yes_a, pb = *col.answers[i]->p_yes_b;
      ScoreRecord s;
      s.n_items = 1;
      s.consensus = pa >= 0.5 ? 2.0 * pa - 1.0 : 1.0 - 2.0 * pa;
      s.awareness = pa >= 0.5 ? pb : 1.0 - pb;
      s.commonsensicality = std::sqrt(s.consensus * s.awareness);
      om.silicon[i] = s;
    }

    OraclePairwise pw;
    bool complete = true;
    std::size_t wins = 0;
    for (std::size_t j = 0; j < g.cols && complete; ++j) {
      std::size_t k = 0, mc = 0, ma = 0, hc2 = 0, ha2 = 0;
      for (std::size_t i = 0; i < g.rows; ++i) {
        if (g.get_a(i, j) < 0) continue;
        if (!usable(i)) {
          complete = false;
          break;
        }
        const int maj = *out.majority[i] ? 1 : 0;
        ++k;
        mc += bit(*col.answers[i]->p_yes_a) == maj;
        ma += bit(*col.answers[i]->p_yes_b) == maj;
        hc2 += g.get_a(i, j) == maj;
        ha2 += g.get_b(i, j) == maj;
      }
      if (!complete || k == 0) continue;
      const double m_model = record(mc, ma, k).commonsensicality;
      const double m_human = record(hc2, ha2, k).commonsensicality;
      pw.diff.push_back(m_model - m_human);
      pw.win.push_back(m_model > m_human);
      wins += m_model > m_human;
    }
    if (complete) {
      if (!pw.win.empty()) pw.win_fraction = static_cast<double>(wins) / static_cast<double>(pw.win.size());
      om.pairwise = std::move(pw);
    }
    out.models.push_back(std::move(om));
  }
  return out;
}

}  // namespace commonsense
