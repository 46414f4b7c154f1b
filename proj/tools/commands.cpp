#include "commands.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "commonsense/corpus.hpp"
#include "commonsense/csv.hpp"
#include "commonsense/elicit.hpp"
#include "commonsense/error.hpp"
#include "commonsense/metrics.hpp"
#include "commonsense/random.hpp"
#include "commonsense/regress.hpp"
#include "commonsense/stats.hpp"
#include "commonsense/synth.hpp"

namespace cli {

using namespace commonsense;

namespace {

const std::vector<std::string> kScoreHeader = {
    "entity_kind", "id", "consensus", "awareness", "commonsensicality", "n_items",
    "consensus_pct", "awareness_pct", "commonsensicality_pct"};

std::vector<std::string> score_row(const std::string& kind, const std::string& id, const ScoreRecord& r) {
  return {kind,         id,           num(r.consensus), num(r.awareness), num(r.commonsensicality),
          count(r.n_items), pct(r.consensus), pct(r.awareness), pct(r.commonsensicality)};
}

struct Loaded {
  Corpus corpus;
  std::optional<RatingMatrix> matrix;
  std::optional<ModelRatings> models;
};

Loaded load(const DataInputs& d, Run& run) {
  Loaded l;
  LoadOptions opts;
  opts.allow_missing_features = d.allow_missing_features;
  l.corpus = load_corpus(run.input(d.statements), opts);
  for (const auto& w : l.corpus.warnings()) std::cerr << "warning: " << w << '\n';
  if (!d.ratings.empty()) l.matrix = load_human_ratings(run.input(d.ratings), l.corpus);
  if (!d.models.empty()) {
    l.models = load_model_ratings(run.input(d.models), l.corpus);
    if (const auto bad = l.models->invalid_count()) {
      note(run, std::to_string(bad) + " invalid model rows excluded from scoring");
    }
  }
  return l;
}

/// Respondent indices ordered by id so output order does not depend on the
/// row order of the ratings file.
std::vector<std::size_t> respondents_by_id(const RatingMatrix& m) {
  std::vector<std::size_t> order(m.n_respondents());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return m.respondent_id(a) < m.respondent_id(b); });
  return order;
}

void common_settings(Run& run) {
  auto& s = run.settings();
  s["tie_rule"] = "share >= 0.5 resolves to agree";
  s["model_binarization"] = "p_yes >= 0.5";
}

std::string fmt_table_value(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(1) << std::setw(6) << v * 100.0;
  return ss.str();
}

Eigen::Map<const Eigen::VectorXd> as_vector(const std::vector<double>& v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

/// Paired (model, human) values over statements where both are present.
struct Paired {
  std::vector<double> model, human;
  std::vector<std::size_t> statements;
};

Paired pair_up(const std::vector<std::optional<double>>& model, const std::vector<std::optional<double>>& human) {
  Paired p;
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (model[i] && human[i]) {
      p.model.push_back(*model[i]);
      p.human.push_back(*human[i]);
      p.statements.push_back(i);
    }
  }
  return p;
}

}  // namespace

// ------------------------------------------------------------------ ingest

int run_ingest(const IngestOptions& o, Run& run) {
  const auto l = load(o.data, run);
  const auto summary = l.corpus.summary();

  CsvOut out(run, "ingest_summary.csv", "ingest_summary", {"item", "value"});
  out.row({"statements", count(summary.n_statements)});
  for (std::size_t s = 0; s < kSourceCount; ++s) {
    out.row({"source:" + std::string(to_string(static_cast<Source>(s))), count(summary.by_source[s])});
  }
  for (const auto axis : all_axes()) {
    for (std::uint8_t side = 0; side < 2; ++side) {
      const Pole pole{axis, side};
      out.row({std::string(to_string(axis)) + ":" + std::string(pole_name(pole)),
               count(summary.by_pole[static_cast<std::size_t>(axis)][side])});
    }
  }
  out.row({"statements_missing_features", count(summary.n_missing_features)});
  note(run, "statements: " + count(summary.n_statements));

  if (l.matrix) {
    std::size_t rated = 0;
    for (std::size_t i = 0; i < l.matrix->n_statements(); ++i) rated += !l.matrix->raters_of(i).empty();
    out.row({"ratings", count(l.matrix->size())});
    out.row({"respondents", count(l.matrix->n_respondents())});
    out.row({"statements_rated", count(rated)});
    note(run, "ratings: " + count(l.matrix->size()) + " from " + count(l.matrix->n_respondents()) +
                  " respondents");
  }
  if (l.models) {
    out.row({"models", count(l.models->models().size())});
    out.row({"model_rows_invalid", count(l.models->invalid_count())});
    for (const auto& col : l.models->models()) {
      out.row({"model_valid:" + col.model, count(col.n_valid())});
    }
    note(run, "models: " + count(l.models->models().size()));
  }
  if (!o.meta.empty()) {
    const auto meta = load_model_meta(run.input(o.meta));
    out.row({"meta_models", count(meta.size())});
    note(run, "model metadata rows: " + count(meta.size()));
  }
  out.close();
  run.settings()["allow_missing_features"] = o.data.allow_missing_features;
  return kExitOk;
}

// ------------------------------------------------------------------- score

int run_score(const ScoreOptions& o, Run& run) {
  const auto l = load(o.data, run);
  const auto& matrix = *l.matrix;
  const auto majorities = human_majorities(matrix);

  StatementMask mask;
  const StatementMask* scope = nullptr;
  if (!o.features.empty()) {
    const auto pole = parse_pole(o.features);
    if (!pole) throw ValidationError("unknown feature pole '" + o.features + "'");
    mask = feature_mask(l.corpus, *pole);
    scope = &mask;
  }

  CsvOut out(run, "scores.csv", "scores", kScoreHeader);
  for (std::size_t i = 0; i < matrix.n_statements(); ++i) {
    if (matrix.raters_of(i).empty() || (scope && !mask[i])) continue;
    out.row(score_row("statement", matrix.statement_id(i), statement_scores(matrix, i)));
  }
  for (const auto j : respondents_by_id(matrix)) {
    if (const auto rec = person_scores(matrix, j, majorities, scope)) {
      out.row(score_row("person", matrix.respondent_id(j), *rec));
    }
  }
  if (l.models) {
    if (!run.globals().quiet && !l.models->models().empty()) {
      std::cout << "model                          C      A      M      n\n";
    }
    for (const auto& col : l.models->models()) {
      const auto rec = o.with_model_vote ? model_scores_with_model_vote(col, matrix, scope)
                                         : model_scores(col, majorities, scope);
      out.row(score_row("model", col.model, rec));
      if (!run.globals().quiet) {
        std::string name = col.model;
        name.resize(std::max<std::size_t>(name.size(), 28), ' ');
        std::cout << name << ' ' << fmt_table_value(rec.consensus) << ' ' << fmt_table_value(rec.awareness)
                  << ' ' << fmt_table_value(rec.commonsensicality) << ' ' << std::setw(6) << rec.n_items
                  << '\n';
      }
    }
  }
  out.close();

  common_settings(run);
  run.settings()["majority"] = o.with_model_vote ? "human_plus_model" : "human";
  run.settings()["features"] = o.features.empty() ? "all" : o.features;
  return kExitOk;
}

// ----------------------------------------------------------------- compare

int run_compare(const CompareOptions& o, Run& run) {
  const auto l = load(o.data, run);
  const auto& matrix = *l.matrix;
  const auto majorities = human_majorities(matrix);

  for (const auto& name : o.only_models) {
    if (!l.models->find(name)) throw ValidationError("unknown model '" + name + "'");
  }

  CsvOut pairs(run, "pairwise.csv", "pairwise",
               {"model", "respondent", "m_model", "m_human", "diff", "win", "m_model_pct", "m_human_pct",
                "diff_pct"});
  CsvOut rates(run, "winrates.csv", "winrates",
               {"model", "n_respondents", "n_wins", "win_fraction", "win_pct", "mean_diff", "mean_diff_pct"});
  std::vector<std::string> skipped;
  for (const auto& col : l.models->models()) {
    if (!o.only_models.empty() &&
        std::find(o.only_models.begin(), o.only_models.end(), col.model) == o.only_models.end()) {
      continue;
    }
    PairwiseResult result;
    try {
      result = pairwise_win_rate(col, matrix, majorities);
    } catch (const ComputationError& e) {
      if (!o.skip_incomplete) throw;
      std::cerr << "warning: skipping " << col.model << ": " << e.what() << '\n';
      skipped.push_back(col.model);
      continue;
    }
    auto entries = result.entries;
    std::sort(entries.begin(), entries.end(), [&](const PairwiseEntry& a, const PairwiseEntry& b) {
      return matrix.respondent_id(a.respondent) < matrix.respondent_id(b.respondent);
    });
    std::size_t wins = 0;
    double diff_sum = 0.0;
    for (const auto& e : entries) {
      wins += e.win;
      diff_sum += e.diff;
      pairs.row({col.model, matrix.respondent_id(e.respondent), num(e.m_model), num(e.m_human), num(e.diff),
                 e.win ? "1" : "0", pct(e.m_model), pct(e.m_human), pct(e.diff)});
    }
    const double mean_diff = entries.empty() ? 0.0 : diff_sum / static_cast<double>(entries.size());
    rates.row({col.model, count(entries.size()), count(wins), num(result.win_fraction), pct(result.win_fraction),
               num(mean_diff), pct(mean_diff)});
    note(run, col.model + ": beats " + pct(result.win_fraction) + "% of respondents");
  }
  pairs.close();
  rates.close();

  common_settings(run);
  run.settings()["win_rule"] = "strict: model M > respondent M";
  run.settings()["skipped_models"] = skipped;
  return kExitOk;
}

// ----------------------------------------------------------------- silicon

int run_silicon(const SiliconOptions& o, Run& run) {
  const auto l = load(o.data, run);
  const auto human = human_commonsensicality(*l.matrix);

  CsvOut rows(run, "silicon.csv", "silicon",
              {"model", "statement_id", "p_yes_a", "p_yes_b", "consensus", "awareness", "commonsensicality",
               "majority", "m_human", "consensus_pct", "awareness_pct", "commonsensicality_pct", "m_human_pct"});
  CsvOut errors(run, "silicon_errors.csv", "silicon_errors",
                {"model", "n", "mae", "rmse", "mae_pct", "rmse_pct"});
  for (const auto& col : l.models->models()) {
    std::vector<std::optional<double>> silicon(col.answers.size());
    for (std::size_t i = 0; i < col.answers.size(); ++i) {
      const auto* ans = col.valid_answer(i);
      if (!ans) continue;
      const auto s = silicon_statement_scores(*ans->p_yes_a, *ans->p_yes_b);
      silicon[i] = s.commonsensicality;
      rows.row({col.model, l.corpus[i].id, num(*ans->p_yes_a), num(*ans->p_yes_b), num(s.consensus),
                num(s.awareness), num(s.commonsensicality), s.majority ? "1" : "0", num(human[i]),
                pct(s.consensus), pct(s.awareness), pct(s.commonsensicality), pct(human[i])});
    }
    const auto p = pair_up(silicon, human);
    if (p.model.empty()) {
      errors.row({col.model, "0", "", "", "", ""});
      continue;
    }
    const auto gap = mae_rmse_gap(as_vector(p.model), as_vector(p.human));
    errors.row({col.model, count(p.model.size()), num(gap.mae), num(gap.rmse), pct(gap.mae), pct(gap.rmse)});
    note(run, col.model + ": MAE " + pct(gap.mae) + ", RMSE " + pct(gap.rmse));
  }
  rows.close();
  errors.close();
  common_settings(run);
  return kExitOk;
}

// --------------------------------------------------------------- correlate

int run_correlate(const CorrelateOptions& o, Run& run) {
  const auto l = load(o.data, run);
  const auto& matrix = *l.matrix;

  if (l.models) {
    const auto human = human_commonsensicality(matrix);
    struct Row {
      std::string model;
      std::size_t n = 0;
      std::optional<CorrelationResult> r;
    };
    std::vector<Row> rows;
    std::vector<double> p_values;
    for (const auto& col : l.models->models()) {
      const auto p = pair_up(silicon_commonsensicality(col), human);
      Row row{col.model, p.model.size(), std::nullopt};
      try {
        row.r = pearson(as_vector(p.model), as_vector(p.human));
        p_values.push_back(row.r->p_two_sided);
      } catch (const ComputationError& e) {
        std::cerr << "warning: " << col.model << ": " << e.what() << '\n';
      }
      rows.push_back(std::move(row));
    }
    const auto adjusted = bonferroni(p_values);
    CsvOut out(run, "correlations.csv", "correlations", {"model", "n", "r", "p", "p_bonferroni"});
    std::size_t k = 0;
    for (const auto& row : rows) {
      if (!row.r) {
        out.row({row.model, count(row.n), "", "", ""});
        continue;
      }
      out.row({row.model, count(row.n), num(row.r->r), num(row.r->p_two_sided), num(adjusted[k++])});
      note(run, row.model + ": r = " + csv::format_fixed(row.r->r, 3));
    }
    out.close();
    run.settings()["multiple_testing"] = "bonferroni over models with a defined correlation";
  }

  if (o.splits > 0) {
    const auto sh = split_half_reliability(matrix, o.splits, run.seed(), run.threads());
    CsvOut out(run, "reliability.csv", "reliability", {"repeats", "mean_r", "ci_lo", "ci_hi"});
    out.row({count(o.splits), num(sh.mean_r), num(sh.ci_lo), num(sh.ci_hi)});
    out.close();
    CsvOut reps(run, "reliability_repeats.csv", "reliability_repeats", {"repeat", "r"});
    for (std::size_t k = 0; k < sh.per_repeat.size(); ++k) reps.row({count(k), num(sh.per_repeat[k])});
    reps.close();
    note(run, "split-half r = " + csv::format_fixed(sh.mean_r, 3) + " [" + csv::format_fixed(sh.ci_lo, 3) +
                  ", " + csv::format_fixed(sh.ci_hi, 3) + "]");
  }
  run.settings()["splits"] = o.splits;
  run.settings()["split_rule"] = "halves of floor(n/2) and ceil(n/2); repeat k uses substream k";
  return kExitOk;
}

// ---------------------------------------------------------------- contrast

namespace {

/// Group A per axis; the opinion axis reports fact minus opinion.
constexpr std::array<std::uint8_t, kAxisCount> kContrastSideA = {0, 0, 0, 0, 1, 0};

}  // namespace

int run_contrast(const ContrastOptions& o, Run& run) {
  const auto l = load(o.data, run);

  std::vector<std::pair<std::string, std::vector<std::optional<double>>>> populations;
  populations.emplace_back("humans", human_commonsensicality(*l.matrix));
  if (l.models) {
    for (const auto& col : l.models->models()) populations.emplace_back(col.model, silicon_commonsensicality(col));
  }

  CsvOut out(run, "contrasts.csv", "contrasts",
             {"population", "axis", "pole_a", "pole_b", "n_a", "n_b", "mean_diff", "ci50_lo", "ci50_hi",
              "ci95_lo", "ci95_hi", "n_replicates", "n_redrawn", "mean_diff_pct", "ci95_lo_pct", "ci95_hi_pct"});
  std::size_t redrawn = 0;
  for (std::size_t p = 0; p < populations.size(); ++p) {
    const auto& [name, values] = populations[p];
    for (const auto axis : all_axes()) {
      const auto a = static_cast<std::size_t>(axis);
      const Pole pole_a{axis, kContrastSideA[a]};
      const Pole pole_b = pole_a.opposite();
      std::vector<double> v(values.size(), 0.0);
      std::vector<std::optional<bool>> group(values.size());
      std::size_t n_a = 0, n_b = 0;
      for (std::size_t i = 0; i < values.size(); ++i) {
        const auto side = l.corpus[i].side(axis);
        if (!values[i] || !side) continue;
        v[i] = *values[i];
        group[i] = *side == pole_a.side;
        (*group[i] ? n_a : n_b) += 1;
      }
      std::vector<std::string> row = {name, std::string(to_string(axis)), std::string(pole_name(pole_a)),
                                      std::string(pole_name(pole_b)), count(n_a), count(n_b)};
      if (n_a == 0 || n_b == 0) {
        row.resize(16);
        out.row(row);
        continue;
      }
      const auto bc = bootstrap_mean_difference(v, group, o.bootstrap_n, derive_seed(run.seed(), p * kAxisCount + a),
                                                run.threads());
      redrawn += bc.n_redrawn;
      row.insert(row.end(), {num(bc.mean_diff), num(bc.ci50.first), num(bc.ci50.second), num(bc.ci95.first),
                             num(bc.ci95.second), count(bc.n_replicates), count(bc.n_redrawn), pct(bc.mean_diff),
                             pct(bc.ci95.first), pct(bc.ci95.second)});
      out.row(row);
      if (p == 0) {
        note(run, "humans " + std::string(pole_name(pole_a)) + " - " + std::string(pole_name(pole_b)) + ": " +
                      pct(bc.mean_diff) + " [" + pct(bc.ci95.first) + ", " + pct(bc.ci95.second) + "]");
      }
    }
  }
  out.close();
  run.settings()["bootstrap_n"] = o.bootstrap_n;
  run.settings()["bootstrap_ci"] = "percentile (type 7)";
  run.settings()["bootstrap_seeds"] = "derive_seed(seed, population * 6 + axis)";
  run.settings()["replicates_redrawn"] = redrawn;
  return kExitOk;
}

// ----------------------------------------------------------------- regress

namespace {

struct ScoredModel {
  std::string model;
  double m_pct = 0.0;
};

std::vector<ScoredModel> read_model_scores(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  csv::Reader reader(in, path.string());
  const auto kind = reader.find_column("entity_kind");
  auto name = reader.find_column("model");
  if (!name) name = reader.find_column("id");
  if (!name) throw ValidationError(path.string() + ": needs a 'model' or 'id' column");
  auto value = reader.find_column("commonsensicality");
  double scale = 100.0;
  if (!value) {
    value = reader.find_column("commonsensicality_pct");
    scale = 1.0;
  }
  if (!value) throw ValidationError(path.string() + ": needs a commonsensicality column");

  std::vector<ScoredModel> out;
  while (auto rec = reader.next()) {
    if (rec->fields.size() != reader.header().size())
      throw ValidationError(path.string(), rec->line, "wrong number of fields");
    if (kind && rec->fields[*kind] != "model") continue;
    const auto v = csv::parse_double(rec->fields[*value]);
    if (!v) throw ValidationError(path.string(), rec->line, "commonsensicality is not a number");
    out.push_back({rec->fields[*name], *v * scale});
  }
  return out;
}

}  // namespace

int run_regress(const RegressOptions& o, Run& run) {
  const bool meta_analyses = !o.meta.empty() && !o.scores.empty();
  const bool cv = !o.data.statements.empty() && !o.data.ratings.empty() && !o.data.models.empty();
  if (!meta_analyses && !cv) {
    throw ValidationError("regress needs --meta with --scores, or --statements, --ratings and --models");
  }
  if (!o.meta.empty() != !o.scores.empty()) throw ValidationError("--meta and --scores go together");
  if (o.lmm_tol <= 0.0) throw ValidationError("--lmm-tol must be positive");
  const auto basis = o.basis == "training" ? SsTotBasis::training_mean : SsTotBasis::held_out_mean;

  CsvOut out(run, "regress.csv", "regress", {"term", "estimate", "se", "p", "ci_lo", "ci_hi", "method", "n"});

  if (meta_analyses) {
    const auto meta = load_model_meta(run.input(o.meta));
    const auto scores = read_model_scores(run.input(o.scores));
    std::map<std::string, double> m_of;
    for (const auto& s : scores) m_of[s.model] = s.m_pct;

    // Size mixed model.
    std::map<std::string, std::size_t> family_size;
    for (const auto& mm : meta) {
      if (mm.size_b && m_of.count(mm.model)) ++family_size[mm.family];
    }
    std::vector<double> x, y;
    std::vector<std::string> groups;
    CsvOut pts(run, "size_points.csv", "size_points",
               {"model", "family", "size_b", "log10_size", "commonsensicality_pct"});
    for (const auto& mm : meta) {
      if (!mm.size_b || !m_of.count(mm.model) || family_size[mm.family] < o.min_family_models) continue;
      if (*mm.size_b <= 0.0) throw ValidationError("model '" + mm.model + "' has a non-positive size");
      x.push_back(std::log10(*mm.size_b));
      y.push_back(m_of[mm.model]);
      groups.push_back(mm.family);
      pts.row({mm.model, mm.family, num(*mm.size_b), num(x.back()), num(y.back())});
    }
    pts.close();
    if (x.size() >= 3) {
      LmmOptions lo;
      lo.tol = o.lmm_tol;
      const auto fit = lmm_random_intercept(y, x, groups, lo);
      const double z0 = fit.intercept / fit.se_intercept;
      out.row({"intercept", num(fit.intercept), num(fit.se_intercept), num(normal_two_sided_p(z0)),
               num(fit.intercept - kZ975 * fit.se_intercept), num(fit.intercept + kZ975 * fit.se_intercept),
               "lmm_reml_wald", count(fit.n)});
      out.row({"log10_size", num(fit.beta_fixed), num(fit.se_beta), num(fit.p_two_sided), num(fit.ci95.first),
               num(fit.ci95.second), "lmm_reml_wald", count(fit.n)});
      out.row({"sigma2_family", num(fit.sigma2_group), "", "", "", "", "lmm_reml_wald", count(fit.n_groups)});
      out.row({"sigma2_residual", num(fit.sigma2_resid), "", "", "", "", "lmm_reml_wald", count(fit.n)});
      run.settings()["lmm_converged"] = fit.converged;
      run.settings()["lmm_theta"] = fit.theta;
      note(run, "size effect: " + csv::format_fixed(fit.beta_fixed, 2) + " pp per tenfold size [" +
                    csv::format_fixed(fit.ci95.first, 2) + ", " + csv::format_fixed(fit.ci95.second, 2) + "], " +
                    count(fit.n) + " models in " + count(fit.n_groups) + " families");
    } else {
      std::cerr << "warning: fewer than 3 sized models; mixed model skipped\n";
    }

    // Elo correlation with a bootstrapped regression line.
    std::vector<double> elo, m;
    CsvOut epts(run, "elo_points.csv", "elo_points", {"model", "elo", "commonsensicality_pct"});
    for (const auto& mm : meta) {
      if (!mm.elo || !m_of.count(mm.model)) continue;
      elo.push_back(*mm.elo);
      m.push_back(m_of[mm.model]);
      epts.row({mm.model, num(*mm.elo), num(m.back())});
    }
    epts.close();
    if (elo.size() >= 3) {
      const auto r = pearson(as_vector(elo), as_vector(m));
      out.row({"elo_r", num(r.r), "", num(r.p_two_sided), "", "", "pearson", count(r.n)});
      const auto [lo_it, hi_it] = std::minmax_element(elo.begin(), elo.end());
      std::vector<double> grid(50);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        grid[g] = *lo_it + (*hi_it - *lo_it) * static_cast<double>(g) / static_cast<double>(grid.size() - 1);
      }
      const auto line = bootstrap_line(elo, m, grid, o.bootstrap_n, derive_seed(run.seed(), 2), run.threads());
      out.row({"elo_intercept", num(line.intercept), "", "", "", "", "ols", count(elo.size())});
      out.row({"elo_slope", num(line.slope), "", "", num(line.slope_ci95.first), num(line.slope_ci95.second),
               "ols_bootstrap_percentile", count(elo.size())});
      CsvOut band(run, "elo_band.csv", "elo_band", {"elo", "fit", "band_lo", "band_hi"});
      for (std::size_t g = 0; g < grid.size(); ++g) {
        band.row({num(grid[g]), num(line.fit[g]), num(line.band_lo[g]), num(line.band_hi[g])});
      }
      band.close();
      note(run, "elo: r(" + count(r.n - 2) + ") = " + csv::format_fixed(r.r, 2) +
                    ", p = " + csv::format_fixed(r.p_two_sided, 2));
    } else {
      std::cerr << "warning: fewer than 3 models with Elo ratings; Elo analysis skipped\n";
    }
  }

  if (cv) {
    DataInputs d = o.data;
    const auto l = load(d, run);
    const auto human = human_commonsensicality(*l.matrix);
    std::vector<std::vector<std::optional<double>>> silicon;
    for (const auto& col : l.models->models()) silicon.push_back(silicon_commonsensicality(col));

    CsvOut cvout(run, "cv_r2.csv", "cv_r2",
                 {"predictor", "n", "k", "mean_r2", "sd_r2", "r2_in_sample", "basis"});
    const auto emit = [&](const std::string& name, const Eigen::MatrixXd& X, const Eigen::VectorXd& yv) {
      const auto n = static_cast<std::size_t>(yv.size());
      if (n < o.folds || n <= static_cast<std::size_t>(X.cols())) {
        std::cerr << "warning: " << name << ": only " << n << " paired statements; skipped\n";
        cvout.row({name, count(n), count(o.folds), "", "", "", o.basis});
        return;
      }
      const auto fit = ols_fit(X, yv);
      const auto r2 = kfold_r2(X, yv, o.folds, run.seed(), basis, run.threads());
      cvout.row({name, count(n), count(r2.k), num(r2.mean_r2), num(r2.sd_r2), num(fit.r2), o.basis});
      note(run, name + ": cross-validated R^2 = " + csv::format_fixed(r2.mean_r2, 3));
    };
    for (std::size_t k = 0; k < silicon.size(); ++k) {
      const auto p = pair_up(silicon[k], human);
      Eigen::MatrixXd X(p.model.size(), 1);
      for (std::size_t i = 0; i < p.model.size(); ++i) X(static_cast<Eigen::Index>(i), 0) = p.model[i];
      emit(l.models->models()[k].model, with_intercept(X), as_vector(p.human));
    }
    if (silicon.size() >= 2) {
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < human.size(); ++i) {
        bool all = human[i].has_value();
        for (const auto& s : silicon) all = all && s[i].has_value();
        if (all) rows.push_back(i);
      }
      Eigen::MatrixXd X(rows.size(), silicon.size());
      Eigen::VectorXd yv(rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t k = 0; k < silicon.size(); ++k) {
          X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = *silicon[k][rows[r]];
        }
        yv(static_cast<Eigen::Index>(r)) = *human[rows[r]];
      }
      emit("ensemble", with_intercept(X), yv);
    }
    cvout.close();
  }
  out.close();

  run.settings()["folds"] = o.folds;
  run.settings()["r2_basis"] = o.basis;
  run.settings()["lmm_tol"] = o.lmm_tol;
  run.settings()["lmm_inference"] = "Wald z";
  run.settings()["min_family_models"] = o.min_family_models;
  run.settings()["size_transform"] = "log10(size in billions)";
  run.settings()["elo_bootstrap_n"] = o.bootstrap_n;
  return kExitOk;
}

// --------------------------------------------------------------- calibrate

int run_calibrate(const CalibrateOptions& o, Run& run) {
  const auto l = load(o.data, run);
  const auto& matrix = *l.matrix;
  std::vector<std::optional<StatementAggregate>> agg(matrix.n_statements());
  for (std::size_t i = 0; i < matrix.n_statements(); ++i) {
    if (!matrix.raters_of(i).empty()) agg[i] = statement_aggregate(matrix, i);
  }

  CsvOut bins(run, "calibration.csv", "calibration",
              {"model", "question", "bin", "lo", "hi", "count", "q25", "median", "q75", "mean_model"});
  CsvOut summary(run, "calibration_summary.csv", "calibration_summary",
                 {"model", "question", "n", "rmse", "r", "rmse_pct"});
  for (const auto& col : l.models->models()) {
    for (const auto q : {Question::agree, Question::others}) {
      std::vector<double> h, m;
      for (std::size_t i = 0; i < agg.size(); ++i) {
        const auto* ans = col.valid_answer(i);
        if (!ans || !agg[i]) continue;
        h.push_back(q == Question::agree ? agg[i]->d_a : agg[i]->d_b);
        m.push_back(q == Question::agree ? *ans->p_yes_a : *ans->p_yes_b);
      }
      const std::string qs(to_string(q));
      if (h.empty()) {
        summary.row({col.model, qs, "0", "", "", ""});
        continue;
      }
      const auto cal = calibration_bins(h, m, o.bins);
      for (std::size_t b = 0; b < cal.bins.size(); ++b) {
        const auto& bin = cal.bins[b];
        bins.row({col.model, qs, count(b), num(bin.lo), num(bin.hi), count(bin.count), num(bin.q25),
                  num(bin.median), num(bin.q75), num(bin.mean_model)});
      }
      summary.row({col.model, qs, count(cal.n), num(cal.rmse), num(cal.r), pct(cal.rmse)});
    }
  }
  bins.close();
  summary.close();
  run.settings()["bins"] = o.bins;
  run.settings()["binning"] = "equal width on human frequency, last bin right-closed";
  return kExitOk;
}

// ----------------------------------------------------------------- collect

int run_collect(const CollectOptions& o, Run& run) {
  LoadOptions lo;
  lo.allow_missing_features = true;
  const auto corpus = load_corpus(run.input(o.statements), lo);

  CollectSettings s;
  s.model = o.model;
  const auto mode = parse_elicit_mode(o.mode);
  if (!mode) throw ValidationError("unknown --mode '" + o.mode + "' (token or sampling)");
  s.mode = *mode;
  s.samples = o.samples;
  s.choices_per_call = o.choices_per_call;
  s.top_logprobs = o.top_logprobs;
  s.max_tokens = o.max_tokens;
  s.suppress_reasoning = o.suppress_reasoning;
  s.most_other_people = o.most_other_people;
  s.concurrency = o.concurrency;
  s.rate_per_second = o.rate;
  if (!o.system_prompt_file.empty() && o.role_clarification) {
    throw ValidationError("--system-prompt-file and --role-clarification are exclusive");
  }
  if (!o.system_prompt_file.empty()) {
    std::ifstream in(run.input(o.system_prompt_file), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    auto text = ss.str();
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    s.system_prompt = text;
  } else if (o.role_clarification) {
    s.system_prompt = std::string(kRoleClarificationPrompt);
  }

  std::string api_key;
  if (const char* v = std::getenv(o.api_key_env.c_str())) api_key = v;
  if (api_key.empty()) std::cerr << "warning: " << o.api_key_env << " is not set; sending no credentials\n";

  RetryPolicy retry;
  retry.max_attempts = o.retries;
  retry.initial_backoff = std::chrono::milliseconds(o.backoff_ms);
  HttpChatClient client(o.endpoint, api_key, retry, std::chrono::seconds(o.timeout_s));

  const std::filesystem::path cache_path =
      o.cache.empty() ? run.globals().out_dir / "responses.jsonl" : std::filesystem::path(o.cache);
  if (cache_path.has_parent_path()) std::filesystem::create_directories(cache_path.parent_path());
  ResponseCache cache(cache_path);

  const auto result = collect(s, corpus, client, cache);

  auto& st = run.settings();
  st["elicitation"] = s.to_json();
  st["endpoint"] = o.endpoint;
  st["cache"] = cache_path.string();
  st["lexicon_normalization"] =
      "strip leading whitespace, quotes and tokenizer word markers, lower-case ASCII, exact match";
  st["network_calls"] = result.network_calls;
  st["cache_hits"] = result.cache_hits;
  st["pending"] = result.pending.size();

  const auto ratings_path = run.globals().out_dir / o.output;
  const auto pending_path = run.globals().out_dir / "pending.txt";
  std::error_code ec;
  if (!result.pending.empty()) {
    std::filesystem::remove(ratings_path, ec);
    std::ofstream out(run.output("pending.txt"), std::ios::binary);
    for (const auto& id : result.pending) out << id << '\n';
    std::cerr << "error: " << result.pending.size() << " statements pending after failed requests; "
              << "rerun the same command to resume\n";
    return kExitRuntime;
  }
  std::filesystem::remove(pending_path, ec);
  {
    std::ofstream out(run.output(o.output), std::ios::binary);
    write_model_ratings(out, result.ratings);
    if (!out) throw Error("failed writing model ratings");
  }
  const auto* col = result.ratings.find(o.model);
  note(run, "collected " + count(corpus.size()) + " statements (" + count(result.network_calls) +
                " requests, " + count(result.cache_hits) + " cached, " +
                count(col ? col->n_invalid() : 0) + " invalid)");
  return kExitOk;
}

// ------------------------------------------------------------------- synth

int run_synth(const SynthOptions& o, Run& run) {
  auto spec = heterogeneous_spec(o.n_statements, o.n_respondents, o.ratings_per_respondent, run.seed());
  spec.assignment = o.assignment == "balanced" ? Assignment::balanced : Assignment::uniform;
  spec.validate();
  if (o.noise < 0.0) throw ValidationError("--noise must be non-negative");
  if (o.invalid_rate < 0.0 || o.invalid_rate > 1.0) throw ValidationError("--invalid-rate must lie in [0, 1]");

  const auto matrix = generate(spec);
  const auto corpus = synthetic_corpus(o.n_statements, derive_seed(run.seed(), 1));
  SyntheticModelSpec ms;
  ms.n_models = o.n_models;
  ms.noise = o.noise;
  ms.invalid_rate = o.invalid_rate;
  ms.seed = derive_seed(run.seed(), 2);
  const auto models = synthetic_model_ratings(spec, ms);

  {
    std::ofstream out(run.output("statements.jsonl"), std::ios::binary);
    write_corpus(out, corpus);
  }
  {
    std::ofstream out(run.output("human_ratings.csv"), std::ios::binary);
    write_human_ratings(out, matrix);
  }
  if (o.n_models > 0) {
    std::ofstream out(run.output("model_ratings.jsonl"), std::ios::binary);
    write_model_ratings(out, models);
  }
  {
    CsvOut truth(run, "population.csv", "population", {"statement_id", "q_a", "q_b"});
    for (std::size_t i = 0; i < spec.n_statements; ++i) {
      truth.row({synthetic_statement_id(i), num(spec.q_a[i]), num(spec.q_b[i])});
    }
    truth.close();
  }

  const auto oracle = oracle_scores(matrix, o.n_models > 0 ? &models : nullptr);
  CsvOut out(run, "oracle_scores.csv", "scores", kScoreHeader);
  for (std::size_t i = 0; i < oracle.statements.size(); ++i) {
    if (oracle.statements[i]) out.row(score_row("statement", matrix.statement_id(i), *oracle.statements[i]));
  }
  for (const auto j : respondents_by_id(matrix)) {
    if (oracle.persons[j]) out.row(score_row("person", matrix.respondent_id(j), *oracle.persons[j]));
  }
  for (const auto& m : oracle.models) {
    if (m.scores) out.row(score_row("model", m.model, *m.scores));
  }
  out.close();

  note(run, "synthetic population: " + count(spec.n_statements) + " statements, " + count(spec.n_respondents) +
                " respondents, " + count(matrix.size()) + " ratings");
  auto& st = run.settings();
  st["statements"] = o.n_statements;
  st["respondents"] = o.n_respondents;
  st["ratings_per_respondent"] = o.ratings_per_respondent;
  st["assignment"] = o.assignment;
  st["n_models"] = o.n_models;
  st["noise"] = o.noise;
  st["invalid_rate"] = o.invalid_rate;
  common_settings(run);
  return kExitOk;
}

}  // namespace cli
