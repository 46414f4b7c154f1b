#include "commonsense/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include <json.hpp>

#include "commonsense/csv.hpp"
#include "commonsense/error.hpp"

namespace commonsense {
namespace {

using nlohmann::json;

constexpr std::array<std::string_view, kSourceCount> kSourceNames = {
    "news", "campaign", "conceptnet", "atomic", "aphorism", "situational", "categorical"};
constexpr std::array<std::string_view, kAxisCount> kAxisNames = {
    "behavior", "everyday", "speech", "judgment", "opinion", "reasoning"};
constexpr std::array<std::array<std::string_view, 2>, kAxisCount> kPoleNames = {{
    {"social", "physical"},
    {"everyday", "abstract"},
    {"literal", "figurative"},
    {"normative", "positive"},
    {"opinion", "fact"},
    {"knowledge", "reasoning"},
}};

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open input file '" + path.string() + "'");
  return in;
}

json parse_json_line(const std::string& line, const std::string& source, std::size_t line_no) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw ValidationError(source, line_no, std::string("malformed JSON: ") + e.what());
  }
}

std::string require_string(const json& row, const char* key, const std::string& source,
                           std::size_t line_no) {
  auto it = row.find(key);
  if (it == row.end() || !it->is_string()) {
    throw ValidationError(source, line_no, std::string("missing or non-string field '") + key + "'");
  }
  return it->get<std::string>();
}

bool is_missing_token(std::string_view text) {
  return text.empty() || text == "-" || text == "--" || text == "NA" || text == "na";
}

std::optional<double> optional_number(const csv::Record& record, std::optional<std::size_t> col,
                                      const std::string& source, const char* name) {
  if (!col || *col >= record.fields.size()) return std::nullopt;
  const std::string& text = record.fields[*col];
  if (is_missing_token(text)) return std::nullopt;
  auto value = csv::parse_double(text);
  if (!value) {
    throw ValidationError(source, record.line,
                          std::string("column '") + name + "' is not a finite number: '" + text + "'");
  }
  return value;
}

}  // namespace

std::string_view to_string(Source source) { return kSourceNames[static_cast<std::size_t>(source)]; }

std::optional<Source> parse_source(std::string_view text) {
  for (std::size_t i = 0; i < kSourceCount; ++i) {
    if (kSourceNames[i] == text) return static_cast<Source>(i);
  }
  return std::nullopt;
}

std::string_view to_string(Axis axis) { return kAxisNames[static_cast<std::size_t>(axis)]; }

std::optional<Axis> parse_axis(std::string_view text) {
  for (std::size_t i = 0; i < kAxisCount; ++i) {
    if (kAxisNames[i] == text) return static_cast<Axis>(i);
  }
  return std::nullopt;
}

std::string_view pole_name(Pole pole) {
  return kPoleNames[static_cast<std::size_t>(pole.axis)][pole.side];
}

std::optional<Pole> parse_pole(std::string_view text) {
  if (auto colon = text.find(':'); colon != std::string_view::npos) {
    auto axis = parse_axis(text.substr(0, colon));
    if (!axis) return std::nullopt;
    const auto name = text.substr(colon + 1);
    const auto& names = kPoleNames[static_cast<std::size_t>(*axis)];
    for (std::uint8_t side = 0; side < 2; ++side) {
      if (names[side] == name) return Pole{*axis, side};
    }
    return std::nullopt;
  }
  // Bare names: "everyday" and "opinion" double as axis names, but each pole
  // name is unique across axes so the lookup is unambiguous.
  for (std::size_t a = 0; a < kAxisCount; ++a) {
    for (std::uint8_t side = 0; side < 2; ++side) {
      if (kPoleNames[a][side] == text) return Pole{static_cast<Axis>(a), side};
    }
  }
  return std::nullopt;
}

std::array<Axis, kAxisCount> all_axes() {
  return {Axis::behavior, Axis::everyday, Axis::speech,
          Axis::judgment, Axis::opinion,  Axis::reasoning};
}

// ---------------------------------------------------------------- Corpus

Corpus::Corpus(std::vector<Statement> statements) : statements_(std::move(statements)) {
  index_.reserve(statements_.size());
  for (std::size_t i = 0; i < statements_.size(); ++i) {
    if (!index_.emplace(statements_[i].id, i).second) {
      throw ValidationError("duplicate statement id '" + statements_[i].id + "'");
    }
  }
}

std::optional<std::size_t> Corpus::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Corpus::ids() const {
  std::vector<std::string> out;
  out.reserve(statements_.size());
  for (const auto& s : statements_) out.push_back(s.id);
  return out;
}

CorpusSummary Corpus::summary() const {
  CorpusSummary summary;
  summary.n_statements = statements_.size();
  for (const auto& s : statements_) {
    ++summary.by_source[static_cast<std::size_t>(s.source)];
    bool missing = false;
    for (std::size_t a = 0; a < kAxisCount; ++a) {
      if (s.features[a]) {
        ++summary.by_pole[a][*s.features[a]];
      } else {
        missing = true;
      }
    }
    if (missing) ++summary.n_missing_features;
  }
  return summary;
}

Corpus parse_corpus(std::istream& in, const std::string& source_name, LoadOptions options) {
  std::vector<Statement> statements;
  std::unordered_map<std::string, std::size_t> first_line;
  std::vector<std::string> warnings;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const json row = parse_json_line(line, source_name, line_no);
    if (!row.is_object()) throw ValidationError(source_name, line_no, "expected a JSON object");

    Statement s;
    s.id = require_string(row, "id", source_name, line_no);
    s.text = require_string(row, "text", source_name, line_no);
    const std::string source = require_string(row, "source", source_name, line_no);
    auto parsed_source = parse_source(source);
    if (!parsed_source) {
      throw ValidationError(source_name, line_no, "unknown source '" + source + "'");
    }
    s.source = *parsed_source;

    auto features = row.find("features");
    if (features != row.end() && !features->is_object()) {
      throw ValidationError(source_name, line_no, "'features' must be an object");
    }
    if (features != row.end()) {
      for (const auto& [key, value] : features->items()) {
        auto axis = parse_axis(key);
        if (!axis) {
          throw ValidationError(source_name, line_no, "extra feature axis '" + key + "'");
        }
        if (!value.is_string()) {
          throw ValidationError(source_name, line_no, "feature '" + key + "' must be a string");
        }
        auto pole = parse_pole(key + ":" + value.get<std::string>());
        if (!pole) {
          throw ValidationError(source_name, line_no,
                                "unknown pole '" + value.get<std::string>() + "' for axis '" + key + "'");
        }
        s.features[static_cast<std::size_t>(*axis)] = pole->side;
      }
    }
    for (std::size_t a = 0; a < kAxisCount; ++a) {
      if (s.features[a]) continue;
      const std::string message =
          "statement '" + s.id + "' is missing feature axis '" + std::string(kAxisNames[a]) + "'";
      if (!options.allow_missing_features) throw ValidationError(source_name, line_no, message);
      warnings.push_back(source_name + ":" + std::to_string(line_no) + ": " + message);
    }

    auto [it, inserted] = first_line.emplace(s.id, line_no);
    if (!inserted) {
      throw ValidationError(source_name, line_no,
                            "duplicate statement id '" + s.id + "' (first seen on line " +
                                std::to_string(it->second) + ")");
    }
    statements.push_back(std::move(s));
  }
  Corpus corpus(std::move(statements));
  for (auto& w : warnings) corpus.add_warning(std::move(w));
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, LoadOptions options) {
  auto in = open_input(path);
  return parse_corpus(in, path.string(), options);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& s : corpus) {
    json features = json::object();
    for (std::size_t a = 0; a < kAxisCount; ++a) {
      if (s.features[a]) {
        features[std::string(kAxisNames[a])] = std::string(kPoleNames[a][*s.features[a]]);
      }
    }
    json row = json::object();
    row["id"] = s.id;
    row["text"] = s.text;
    row["source"] = std::string(to_string(s.source));
    row["features"] = std::move(features);
    out << row.dump() << '\n';
  }
}

// ---------------------------------------------------------- RatingMatrix

RatingMatrix::RatingMatrix(std::vector<std::string> statement_ids,
                           std::vector<std::string> respondent_ids, std::vector<Rating> ratings)
    : statement_ids_(std::move(statement_ids)),
      respondent_ids_(std::move(respondent_ids)),
      ratings_(std::move(ratings)) {
  const std::size_t ns = statement_ids_.size();
  const std::size_t nr = respondent_ids_.size();
  for (std::size_t j = 0; j < nr; ++j) {
    if (!respondent_index_.emplace(respondent_ids_[j], j).second) {
      throw ValidationError("duplicate respondent id '" + respondent_ids_[j] + "'");
    }
  }
  omega_offsets_.assign(ns + 1, 0);
  phi_offsets_.assign(nr + 1, 0);
  for (const auto& r : ratings_) {
    if (r.statement >= ns || r.respondent >= nr) {
      throw ValidationError("rating refers to an unknown statement or respondent index");
    }
    ++omega_offsets_[r.statement + 1];
    ++phi_offsets_[r.respondent + 1];
  }
  for (std::size_t i = 0; i < ns; ++i) omega_offsets_[i + 1] += omega_offsets_[i];
  for (std::size_t j = 0; j < nr; ++j) phi_offsets_[j + 1] += phi_offsets_[j];
  omega_.resize(ratings_.size());
  phi_.resize(ratings_.size());
  std::vector<std::uint32_t> omega_fill(omega_offsets_.begin(), omega_offsets_.end() - 1);
  std::vector<std::uint32_t> phi_fill(phi_offsets_.begin(), phi_offsets_.end() - 1);
  for (std::uint32_t k = 0; k < ratings_.size(); ++k) {
    omega_[omega_fill[ratings_[k].statement]++] = k;
    phi_[phi_fill[ratings_[k].respondent]++] = k;
  }
  // Duplicate (statement, respondent) pairs.
  for (std::size_t i = 0; i < ns; ++i) {
    std::vector<std::uint32_t> who;
    for (auto k : raters_of(i)) who.push_back(ratings_[k].respondent);
    std::sort(who.begin(), who.end());
    if (std::adjacent_find(who.begin(), who.end()) != who.end()) {
      throw ValidationError("duplicate rating for statement '" + statement_ids_[i] + "'");
    }
  }
}

std::span<const std::uint32_t> RatingMatrix::raters_of(std::size_t statement) const {
  return std::span<const std::uint32_t>(omega_).subspan(
      omega_offsets_[statement], omega_offsets_[statement + 1] - omega_offsets_[statement]);
}

std::span<const std::uint32_t> RatingMatrix::rated_by(std::size_t respondent) const {
  return std::span<const std::uint32_t>(phi_).subspan(
      phi_offsets_[respondent], phi_offsets_[respondent + 1] - phi_offsets_[respondent]);
}

std::optional<std::size_t> RatingMatrix::find_respondent(std::string_view id) const {
  auto it = respondent_index_.find(std::string(id));
  if (it == respondent_index_.end()) return std::nullopt;
  return it->second;
}

RatingMatrix parse_human_ratings(std::istream& in, const std::string& source_name,
                                 const Corpus& corpus) {
  csv::Reader reader(in, source_name);
  const auto c_statement = reader.require_column("statement_id");
  const auto c_respondent = reader.require_column("respondent_id");
  const auto c_agree = reader.require_column("q_agree");
  const auto c_others = reader.require_column("q_others");
  const std::size_t width = reader.header().size();

  auto parse_bit = [&](const csv::Record& rec, std::size_t col, const char* name) {
    const std::string& v = rec.fields[col];
    if (v == "0") return false;
    if (v == "1") return true;
    throw ValidationError(source_name, rec.line,
                          std::string("non-binary value '") + v + "' in column '" + name + "'");
  };

  std::vector<std::string> respondent_ids;
  std::unordered_map<std::string, std::uint32_t> respondent_index;
  std::vector<Rating> ratings;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> seen;
  while (auto rec = reader.next()) {
    if (rec->fields.size() != width) {
      throw ValidationError(source_name, rec->line,
                            "expected " + std::to_string(width) + " fields, found " +
                                std::to_string(rec->fields.size()));
    }
    const std::string& sid = rec->fields[c_statement];
    auto statement = corpus.find(sid);
    if (!statement) throw ValidationError(source_name, rec->line, "unknown statement id '" + sid + "'");
    const std::string& rid = rec->fields[c_respondent];
    if (rid.empty()) throw ValidationError(source_name, rec->line, "empty respondent id");
    auto [rit, fresh] = respondent_index.emplace(rid, static_cast<std::uint32_t>(respondent_ids.size()));
    if (fresh) respondent_ids.push_back(rid);
    Rating r{static_cast<std::uint32_t>(*statement), rit->second, parse_bit(*rec, c_agree, "q_agree"),
             parse_bit(*rec, c_others, "q_others")};
    auto [sit, unique] = seen.emplace(std::make_pair(r.statement, r.respondent), rec->line);
    if (!unique) {
      throw ValidationError(source_name, rec->line,
                            "duplicate rating of statement '" + sid + "' by respondent '" + rid +
                                "' (lines " + std::to_string(sit->second) + " and " +
                                std::to_string(rec->line) + ")");
    }
    ratings.push_back(r);
  }
  return RatingMatrix(corpus.ids(), std::move(respondent_ids), std::move(ratings));
}

RatingMatrix load_human_ratings(const std::filesystem::path& path, const Corpus& corpus) {
  auto in = open_input(path);
  return parse_human_ratings(in, path.string(), corpus);
}

void write_human_ratings(std::ostream& out, const RatingMatrix& matrix) {
  out << "# schema: human_ratings/1\n";
  out << "statement_id,respondent_id,q_agree,q_others\n";
  std::vector<std::uint32_t> order(matrix.size());
  for (std::uint32_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::uint32_t x, std::uint32_t y) {
    const auto& rx = matrix.rating(x);
    const auto& ry = matrix.rating(y);
    if (rx.statement != ry.statement) return rx.statement < ry.statement;
    return matrix.respondent_id(rx.respondent) < matrix.respondent_id(ry.respondent);
  });
  for (auto k : order) {
    const auto& r = matrix.rating(k);
    csv::write_row(out, {matrix.statement_id(r.statement), matrix.respondent_id(r.respondent),
                         r.agree ? "1" : "0", r.others ? "1" : "0"});
  }
}

// ---------------------------------------------------------- ModelRatings

std::size_t ModelColumn::n_valid() const {
  return static_cast<std::size_t>(
      std::count_if(answers.begin(), answers.end(), [](const auto& a) { return a && a->valid; }));
}

std::size_t ModelColumn::n_invalid() const {
  return static_cast<std::size_t>(
      std::count_if(answers.begin(), answers.end(), [](const auto& a) { return a && !a->valid; }));
}

const ModelColumn* ModelRatings::find(std::string_view model) const {
  for (const auto& c : columns_) {
    if (c.model == model) return &c;
  }
  return nullptr;
}

ModelColumn& ModelRatings::column(const std::string& model) {
  for (auto& c : columns_) {
    if (c.model == model) return c;
  }
  columns_.push_back(ModelColumn{model, std::vector<std::optional<ModelAnswer>>(statement_ids_.size())});
  return columns_.back();
}

std::size_t ModelRatings::invalid_count() const {
  std::size_t n = 0;
  for (const auto& c : columns_) n += c.n_invalid();
  return n;
}

ModelRatings parse_model_ratings(std::istream& in, const std::string& source_name,
                                 const Corpus& corpus) {
  ModelRatings ratings(corpus.ids());
  std::string line;
  std::size_t line_no = 0;
  std::map<std::pair<std::string, std::size_t>, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const json row = parse_json_line(line, source_name, line_no);
    if (!row.is_object()) throw ValidationError(source_name, line_no, "expected a JSON object");
    const std::string model = require_string(row, "model", source_name, line_no);
    const std::string sid = require_string(row, "statement_id", source_name, line_no);
    auto statement = corpus.find(sid);
    if (!statement) throw ValidationError(source_name, line_no, "missing statement '" + sid + "' in corpus");

    ModelAnswer answer;
    auto valid = row.find("valid");
    if (valid != row.end()) {
      if (!valid->is_boolean()) throw ValidationError(source_name, line_no, "'valid' must be a boolean");
      answer.valid = valid->get<bool>();
    }
    auto read_prob = [&](const char* key) -> std::optional<double> {
      auto it = row.find(key);
      if (it == row.end() || it->is_null()) {
        if (answer.valid) {
          throw ValidationError(source_name, line_no, std::string("missing '") + key + "' on a valid row");
        }
        return std::nullopt;
      }
      if (!it->is_number()) throw ValidationError(source_name, line_no, std::string("'") + key + "' must be a number");
      const double p = it->get<double>();
      if (!(p >= 0.0 && p <= 1.0)) {
        throw ValidationError(source_name, line_no,
                              std::string("'") + key + "' = " + csv::format_double(p) + " is outside [0, 1]");
      }
      return p;
    };
    auto read_count = [&](const char* key) -> std::optional<int> {
      auto it = row.find(key);
      if (it == row.end() || it->is_null()) return std::nullopt;
      if (!it->is_number_integer() || it->get<long long>() < 0) {
        throw ValidationError(source_name, line_no, std::string("'") + key + "' must be a non-negative integer");
      }
      return it->get<int>();
    };
    answer.p_yes_a = read_prob("p_yes_a");
    answer.p_yes_b = read_prob("p_yes_b");
    answer.n_samples_a = read_count("n_samples_a");
    answer.n_samples_b = read_count("n_samples_b");

    auto [it, unique] = seen.emplace(std::make_pair(model, *statement), line_no);
    if (!unique) {
      throw ValidationError(source_name, line_no,
                            "duplicate row for model '" + model + "' and statement '" + sid +
                                "' (first on line " + std::to_string(it->second) + ")");
    }
    ratings.column(model).answers[*statement] = answer;
  }
  return ratings;
}

ModelRatings load_model_ratings(const std::filesystem::path& path, const Corpus& corpus) {
  auto in = open_input(path);
  return parse_model_ratings(in, path.string(), corpus);
}

void write_model_ratings(std::ostream& out, const ModelRatings& ratings) {
  for (const auto& column : ratings.models()) {
    for (std::size_t i = 0; i < column.answers.size(); ++i) {
      const auto& answer = column.answers[i];
      if (!answer) continue;
      json row = json::object();
      row["model"] = column.model;
      row["statement_id"] = ratings.statement_ids()[i];
      row["p_yes_a"] = answer->p_yes_a ? json(*answer->p_yes_a) : json(nullptr);
      row["p_yes_b"] = answer->p_yes_b ? json(*answer->p_yes_b) : json(nullptr);
      if (answer->n_samples_a) row["n_samples_a"] = *answer->n_samples_a;
      if (answer->n_samples_b) row["n_samples_b"] = *answer->n_samples_b;
      row["valid"] = answer->valid;
      out << row.dump() << '\n';
    }
  }
}

// ------------------------------------------------------------- ModelMeta

std::vector<ModelMeta> parse_model_meta(std::istream& in, const std::string& source_name) {
  csv::Reader reader(in, source_name);
  const auto c_model = reader.require_column("model");
  const auto c_family = reader.require_column("family");
  const auto c_size = reader.find_column("size_b");
  const auto c_elo = reader.find_column("elo");
  const auto c_obqa = reader.find_column("openbookqa");
  std::vector<ModelMeta> out;
  std::unordered_map<std::string, std::size_t> seen;
  while (auto rec = reader.next()) {
    if (rec->fields.size() != reader.header().size()) {
      throw ValidationError(source_name, rec->line, "wrong number of fields");
    }
    ModelMeta m;
    m.model = rec->fields[c_model];
    m.family = rec->fields[c_family];
    if (m.model.empty()) throw ValidationError(source_name, rec->line, "empty model name");
    m.size_b = optional_number(*rec, c_size, source_name, "size_b");
    m.elo = optional_number(*rec, c_elo, source_name, "elo");
    m.openbookqa = optional_number(*rec, c_obqa, source_name, "openbookqa");
    if (m.size_b && *m.size_b <= 0.0) {
      throw ValidationError(source_name, rec->line, "size_b must be positive");
    }
    if (!seen.emplace(m.model, rec->line).second) {
      throw ValidationError(source_name, rec->line, "duplicate model '" + m.model + "'");
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<ModelMeta> load_model_meta(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_model_meta(in, path.string());
}

void write_model_meta(std::ostream& out, std::span<const ModelMeta> meta) {
  out << "# schema: model_meta/1\n";
  out << "model,family,size_b,elo,openbookqa\n";
  auto opt = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); };
  for (const auto& m : meta) {
    csv::write_row(out, {m.model, m.family, opt(m.size_b), opt(m.elo), opt(m.openbookqa)});
  }
}

}  // namespace commonsense
