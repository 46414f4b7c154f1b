// Figure-ready data files and minimal static SVG renderings built from the
// CSV outputs of earlier subcommands.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>

#include "commands.hpp"
#include "commonsense/csv.hpp"
#include "commonsense/error.hpp"

namespace cli {

using commonsense::ValidationError;
namespace csv = commonsense::csv;

namespace {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name, const fs::path& src) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ValidationError(src.string() + ": missing column '" + name + "'");
  }
};

Table read_table(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  csv::Reader reader(in, path.string());
  Table t;
  t.header = reader.header();
  while (auto rec = reader.next()) {
    if (rec->fields.size() != t.header.size())
      throw ValidationError(path.string(), rec->line, "wrong number of fields");
    t.rows.push_back(std::move(rec->fields));
  }
  return t;
}

double to_double(const std::string& s) {
  const auto v = csv::parse_double(s);
  return v ? *v : std::nan("");
}

// ---------------------------------------------------------------- SVG

struct Series {
  std::vector<double> x, y;
  bool line = false;
  std::string color = "#1f77b4";
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_svg(const fs::path& path, const std::string& title, const std::string& xlabel,
               const std::string& ylabel, const std::vector<Series>& series) {
  constexpr double W = 480, H = 360, L = 60, R = 20, T = 30, B = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double px = (x1 - x0) * 0.05, py = (y1 - y0) * 0.05;
  x0 -= px, x1 += px, y0 -= py, y1 += py;
  const auto sx = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  const auto sy = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };

  std::ofstream out(path, std::ios::binary);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << xml_escape(title)
      << "</text>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    out << "<text x=\"" << fmt(sx(xv)) << "\" y=\"" << H - B + 15 << "\" text-anchor=\"middle\">" << fmt(xv)
        << "</text>\n";
    out << "<text x=\"" << L - 5 << "\" y=\"" << fmt(sy(yv) + 4) << "\" text-anchor=\"end\">" << fmt(yv)
        << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
      << xml_escape(xlabel) << "</text>\n";
  out << "<text transform=\"translate(14," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << xml_escape(ylabel) << "</text>\n";
  for (const auto& s : series) {
    if (s.line) {
      out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) out << fmt(sx(s.x[i])) << ',' << fmt(sy(s.y[i])) << ' ';
      }
      out << "\"/>\n";
    } else {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        out << "<circle cx=\"" << fmt(sx(s.x[i])) << "\" cy=\"" << fmt(sy(s.y[i])) << "\" r=\"3\" fill=\""
            << s.color << "\" fill-opacity=\"0.7\"/>\n";
      }
    }
  }
  out << "</svg>\n";
  if (!out) throw commonsense::Error("failed writing '" + path.string() + "'");
}

// -------------------------------------------------------------- panels

struct Panel {
  std::string name;
  std::vector<std::string> needs;  ///< upstream files; the first is mandatory
  std::string producer;            ///< subcommand writing the first input
  std::function<void(const fs::path& from, Run& run)> build;
};

void panel_2b(const fs::path& from, Run& run) {
  const auto src = from / "scores.csv";
  const auto t = read_table(src);
  const auto kind = t.col("entity_kind", src), id = t.col("id", src), c = t.col("consensus", src),
             a = t.col("awareness", src), m = t.col("commonsensicality", src);
  CsvOut out(run, "fig2b_models.csv", "fig2b_models",
             {"model", "consensus", "awareness", "commonsensicality", "consensus_pct", "awareness_pct",
              "commonsensicality_pct"});
  Series pts;
  for (const auto& r : t.rows) {
    if (r[kind] != "model") continue;
    const double cv = to_double(r[c]), av = to_double(r[a]), mv = to_double(r[m]);
    out.row({r[id], num(cv), num(av), num(mv), pct(cv), pct(av), pct(mv)});
    pts.x.push_back(cv);
    pts.y.push_back(av);
  }
  out.close();

  CsvOut curves(run, "fig2b_level_curves.csv", "fig2b_level_curves", {"m", "consensus", "awareness"});
  std::vector<Series> series;
  for (const double level : {0.25, 0.5, 0.75}) {
    Series s;
    s.line = true;
    s.color = "#999999";
    const double lo = level * level;
    for (int k = 0; k <= 40; ++k) {
      const double cv = lo + (1.0 - lo) * k / 40.0;
      const double av = level * level / cv;
      curves.row({num(level), num(cv), num(av)});
      s.x.push_back(cv);
      s.y.push_back(av);
    }
    series.push_back(std::move(s));
  }
  curves.close();
  series.push_back(std::move(pts));
  write_svg(run.output("fig2b.svg"), "Model consensus and awareness", "consensus", "awareness", series);
}

void panel_2c(const fs::path& from, Run& run) {
  const auto src = from / "size_points.csv";
  const auto t = read_table(src);
  const auto model = t.col("model", src), fam = t.col("family", src), lx = t.col("log10_size", src),
             m = t.col("commonsensicality_pct", src);
  CsvOut out(run, "fig2c.csv", "fig2c", {"model", "family", "log10_size", "commonsensicality_pct"});
  Series s;
  for (const auto& r : t.rows) {
    out.row({r[model], r[fam], r[lx], r[m]});
    s.x.push_back(to_double(r[lx]));
    s.y.push_back(to_double(r[m]));
  }
  out.close();
  write_svg(run.output("fig2c.svg"), "Commonsensicality by model size", "log10 size (billions)",
            "commonsensicality (%)", {s});
}

void panel_2d(const fs::path& from, Run& run) {
  const auto src = from / "elo_points.csv";
  const auto t = read_table(src);
  const auto model = t.col("model", src), elo = t.col("elo", src), m = t.col("commonsensicality_pct", src);
  CsvOut out(run, "fig2d.csv", "fig2d", {"model", "elo", "commonsensicality_pct"});
  std::vector<Series> series(1);
  for (const auto& r : t.rows) {
    out.row({r[model], r[elo], r[m]});
    series[0].x.push_back(to_double(r[elo]));
    series[0].y.push_back(to_double(r[m]));
  }
  out.close();
  const auto band_src = from / "elo_band.csv";
  if (fs::exists(band_src)) {
    const auto b = read_table(band_src);
    const auto e = b.col("elo", band_src), f = b.col("fit", band_src), lo = b.col("band_lo", band_src),
               hi = b.col("band_hi", band_src);
    CsvOut band(run, "fig2d_band.csv", "fig2d_band", {"elo", "fit", "band_lo", "band_hi"});
    Series sf, sl, sh;
    sf.line = sl.line = sh.line = true;
    sl.color = sh.color = "#aec7e8";
    for (const auto& r : b.rows) {
      band.row({r[e], r[f], r[lo], r[hi]});
      const double x = to_double(r[e]);
      sf.x.push_back(x), sl.x.push_back(x), sh.x.push_back(x);
      sf.y.push_back(to_double(r[f])), sl.y.push_back(to_double(r[lo])), sh.y.push_back(to_double(r[hi]));
    }
    band.close();
    series.push_back(std::move(sl));
    series.push_back(std::move(sh));
    series.push_back(std::move(sf));
  }
  write_svg(run.output("fig2d.svg"), "Commonsensicality by Elo rating", "Elo", "commonsensicality (%)", series);
}

void panel_2e(const fs::path& from, Run& run) {
  const auto src = from / "pairwise.csv";
  const auto t = read_table(src);
  const auto model = t.col("model", src), resp = t.col("respondent", src), diff = t.col("diff", src),
             win = t.col("win", src);
  CsvOut out(run, "fig2e.csv", "fig2e", {"model", "respondent", "diff", "win", "diff_pct"});
  std::map<std::string, std::vector<double>> by_model;
  std::vector<std::string> order;
  for (const auto& r : t.rows) {
    const double d = to_double(r[diff]);
    out.row({r[model], r[resp], r[diff], r[win], pct(d)});
    if (!by_model.count(r[model])) order.push_back(r[model]);
    by_model[r[model]].push_back(d);
  }
  out.close();
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::vector<Series> series;
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto d = by_model[order[k]];
    std::sort(d.begin(), d.end());
    Series s;
    s.line = true;
    s.color = kColors[k % 10];
    for (std::size_t i = 0; i < d.size(); ++i) {
      s.x.push_back(d[i] * 100.0);
      s.y.push_back(static_cast<double>(i + 1) / static_cast<double>(d.size()));
    }
    series.push_back(std::move(s));
  }
  write_svg(run.output("fig2e.svg"), "Model minus respondent commonsensicality", "difference (pp)", "ECDF",
            series);
}

void panel_3c(const fs::path& from, Run& run) {
  const auto src = from / "contrasts.csv";
  const auto t = read_table(src);
  const std::vector<std::string> keep = {"population", "axis", "pole_a", "pole_b", "mean_diff",
                                         "ci50_lo", "ci50_hi", "ci95_lo", "ci95_hi"};
  std::vector<std::size_t> idx;
  for (const auto& k : keep) idx.push_back(t.col(k, src));
  CsvOut out(run, "fig3c.csv", "fig3c",
             {"population", "axis", "pole_a", "pole_b", "mean_diff_pct", "ci50_lo_pct", "ci50_hi_pct",
              "ci95_lo_pct", "ci95_hi_pct"});
  for (const auto& r : t.rows) {
    std::vector<std::string> row = {r[idx[0]], r[idx[1]], r[idx[2]], r[idx[3]]};
    for (std::size_t k = 4; k < idx.size(); ++k) {
      row.push_back(r[idx[k]].empty() ? std::string() : pct(to_double(r[idx[k]])));
    }
    out.row(row);
  }
  out.close();
}

void panel_4a(const fs::path& from, Run& run) {
  const auto src = from / "correlations.csv";
  const auto t = read_table(src);
  const auto model = t.col("model", src), n = t.col("n", src), r = t.col("r", src), p = t.col("p", src),
             padj = t.col("p_bonferroni", src);
  CsvOut out(run, "fig4a.csv", "fig4a", {"model", "n", "r", "p", "p_bonferroni", "significant"});
  Series s;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& row = t.rows[k];
    const bool sig = !row[padj].empty() && to_double(row[padj]) < 0.05;
    out.row({row[model], row[n], row[r], row[p], row[padj], sig ? "1" : "0"});
    s.x.push_back(static_cast<double>(k + 1));
    s.y.push_back(to_double(row[r]));
  }
  out.close();
  write_svg(run.output("fig4a.svg"), "Model-human correlation of statement commonsensicality", "model index",
            "Pearson r", {s});
}

void panel_4b(const fs::path& from, Run& run) {
  const auto src = from / "silicon.csv";
  const auto t = read_table(src);
  const auto model = t.col("model", src), sid = t.col("statement_id", src), mm = t.col("commonsensicality", src),
             mh = t.col("m_human", src);
  CsvOut out(run, "fig4b.csv", "fig4b", {"model", "statement_id", "m_model_pct", "m_human_pct"});
  for (const auto& r : t.rows) {
    if (r[mh].empty()) continue;
    out.row({r[model], r[sid], pct(to_double(r[mm])), pct(to_double(r[mh]))});
  }
  out.close();
}

void panel_4c(const fs::path& from, Run& run) {
  const auto src = from / "cv_r2.csv";
  const auto t = read_table(src);
  const auto pred = t.col("predictor", src), n = t.col("n", src), k = t.col("k", src), mean = t.col("mean_r2", src),
             sd = t.col("sd_r2", src);
  CsvOut out(run, "fig4c.csv", "fig4c", {"predictor", "n", "k", "mean_r2", "sd_r2"});
  for (const auto& r : t.rows) out.row({r[pred], r[n], r[k], r[mean], r[sd]});
  out.close();
}

const std::vector<Panel>& panels() {
  static const std::vector<Panel> all = {
      {"fig2b", {"scores.csv"}, "score", panel_2b},
      {"fig2c", {"size_points.csv"}, "regress", panel_2c},
      {"fig2d", {"elo_points.csv"}, "regress", panel_2d},
      {"fig2e", {"pairwise.csv"}, "compare", panel_2e},
      {"fig3c", {"contrasts.csv"}, "contrast", panel_3c},
      {"fig4a", {"correlations.csv"}, "correlate", panel_4a},
      {"fig4b", {"silicon.csv"}, "silicon", panel_4b},
      {"fig4c", {"cv_r2.csv"}, "regress", panel_4c},
  };
  return all;
}

}  // namespace

int run_export(const ExportOptions& o, Run& run) {
  const fs::path from = o.from.empty() ? run.globals().out_dir : fs::path(o.from);
  for (const auto& name : o.panels) {
    const auto& all = panels();
    if (std::none_of(all.begin(), all.end(), [&](const Panel& p) { return p.name == name; })) {
      throw ValidationError("unknown panel '" + name + "'");
    }
  }

  std::vector<std::string> built;
  for (const auto& p : panels()) {
    const bool requested = std::find(o.panels.begin(), o.panels.end(), p.name) != o.panels.end();
    if (!o.panels.empty() && !requested) continue;
    const auto src = from / p.needs.front();
    if (!fs::exists(src)) {
      if (requested) {
        throw ValidationError("panel " + p.name + " needs " + src.string() + " (run `" + p.producer + "` first)");
      }
      continue;
    }
    run.input(src);
    p.build(from, run);
    built.push_back(p.name);
    note(run, "exported " + p.name);
  }
  if (built.empty()) {
    throw ValidationError("no upstream outputs found in '" + from.string() + "' (expected e.g. scores.csv)");
  }
  run.settings()["panels"] = built;
  return kExitOk;
}

}  // namespace cli
