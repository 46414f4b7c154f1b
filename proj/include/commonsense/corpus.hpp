#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace commonsense {

enum class Source : std::uint8_t {
  news,
  campaign,
  conceptnet,
  atomic,
  aphorism,
  situational,
  categorical,
};
inline constexpr std::size_t kSourceCount = 7;

/// The six epistemological dichotomies a statement is labelled with.
enum class Axis : std::uint8_t { behavior, everyday, speech, judgment, opinion, reasoning };
inline constexpr std::size_t kAxisCount = 6;

/// One side of a dichotomy. Side 0 is the first-listed pole:
///   behavior: social | physical      everyday: everyday | abstract
///   speech: literal | figurative     judgment: normative | positive
///   opinion: opinion | fact          reasoning: knowledge | reasoning
struct Pole {
  Axis axis;
  std::uint8_t side;

  Pole opposite() const { return {axis, static_cast<std::uint8_t>(1 - side)}; }
  friend bool operator==(const Pole&, const Pole&) = default;
};

std::string_view to_string(Source source);
std::optional<Source> parse_source(std::string_view text);
std::string_view to_string(Axis axis);
std::optional<Axis> parse_axis(std::string_view text);
std::string_view pole_name(Pole pole);
/// Accepts a pole name ("fact") or "axis:pole" ("opinion:fact").
std::optional<Pole> parse_pole(std::string_view text);
std::array<Axis, kAxisCount> all_axes();

struct Statement {
  std::string id;
  std::string text;
  Source source = Source::news;
  /// Side per axis; unset only when loaded with allow_missing_features.
  std::array<std::optional<std::uint8_t>, kAxisCount> features{};

  std::optional<std::uint8_t> side(Axis axis) const {
    return features[static_cast<std::size_t>(axis)];
  }
  bool has(Pole pole) const { return side(pole.axis) == pole.side; }
};

struct LoadOptions {
  /// Downgrade missing feature axes to warnings (non-dichotomy analyses).
  bool allow_missing_features = false;
};

struct CorpusSummary {
  std::size_t n_statements = 0;
  std::array<std::size_t, kSourceCount> by_source{};
  /// by_pole[axis][side]
  std::array<std::array<std::size_t, 2>, kAxisCount> by_pole{};
  std::size_t n_missing_features = 0;
};

/// Immutable, id-indexed statement collection.
class Corpus {
 public:
  Corpus() = default;
  /// Throws ValidationError on duplicate ids.
  explicit Corpus(std::vector<Statement> statements);

  std::size_t size() const { return statements_.size(); }
  bool empty() const { return statements_.empty(); }
  const Statement& operator[](std::size_t i) const { return statements_[i]; }
  auto begin() const { return statements_.begin(); }
  auto end() const { return statements_.end(); }

  std::optional<std::size_t> find(std::string_view id) const;
  std::vector<std::string> ids() const;
  CorpusSummary summary() const;

  /// Diagnostics collected while loading (missing features when allowed).
  const std::vector<std::string>& warnings() const { return warnings_; }
  void add_warning(std::string warning) { warnings_.push_back(std::move(warning)); }

 private:
  std::vector<Statement> statements_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> warnings_;
};

Corpus parse_corpus(std::istream& in, const std::string& source_name, LoadOptions options = {});
Corpus load_corpus(const std::filesystem::path& path, LoadOptions options = {});
/// Canonical JSONL form: one object per statement in corpus order.
void write_corpus(std::ostream& out, const Corpus& corpus);

/// One respondent's answers to both questions for one statement.
struct Rating {
  std::uint32_t statement;
  std::uint32_t respondent;
  bool agree;   ///< question (a): do you agree?
  bool others;  ///< question (b): would most people agree?
};

/// Sparse respondent x statement matrix. Questions (a) and (b) share one key
/// set by construction. Statement indices follow the corpus the matrix was
/// loaded against.
class RatingMatrix {
 public:
  RatingMatrix() = default;
  /// Throws ValidationError on out-of-range indices or duplicate pairs.
  RatingMatrix(std::vector<std::string> statement_ids, std::vector<std::string> respondent_ids,
               std::vector<Rating> ratings);

  std::size_t n_statements() const { return statement_ids_.size(); }
  std::size_t n_respondents() const { return respondent_ids_.size(); }
  std::size_t size() const { return ratings_.size(); }

  std::span<const Rating> ratings() const { return ratings_; }
  const Rating& rating(std::size_t k) const { return ratings_[k]; }

  /// Omega(i): positions in ratings() of everyone who rated statement i.
  std::span<const std::uint32_t> raters_of(std::size_t statement) const;
  /// Phi(j): positions in ratings() of every statement respondent j rated.
  std::span<const std::uint32_t> rated_by(std::size_t respondent) const;

  const std::string& statement_id(std::size_t i) const { return statement_ids_[i]; }
  const std::string& respondent_id(std::size_t j) const { return respondent_ids_[j]; }
  const std::vector<std::string>& statement_ids() const { return statement_ids_; }
  const std::vector<std::string>& respondent_ids() const { return respondent_ids_; }
  std::optional<std::size_t> find_respondent(std::string_view id) const;

 private:
  std::vector<std::string> statement_ids_;
  std::vector<std::string> respondent_ids_;
  std::unordered_map<std::string, std::size_t> respondent_index_;
  std::vector<Rating> ratings_;
  std::vector<std::uint32_t> omega_offsets_, omega_;
  std::vector<std::uint32_t> phi_offsets_, phi_;
};

/// CSV with columns statement_id, respondent_id, q_agree, q_others.
RatingMatrix parse_human_ratings(std::istream& in, const std::string& source_name,
                                 const Corpus& corpus);
RatingMatrix load_human_ratings(const std::filesystem::path& path, const Corpus& corpus);
/// Canonical order: statement index, then respondent id.
void write_human_ratings(std::ostream& out, const RatingMatrix& matrix);

/// A model's yes-probabilities for one statement. Probabilities may be absent
/// only on invalid rows (e.g. no yes/no mass at all during elicitation).
struct ModelAnswer {
  std::optional<double> p_yes_a;
  std::optional<double> p_yes_b;
  std::optional<int> n_samples_a;
  std::optional<int> n_samples_b;
  bool valid = true;
};

/// One model's answers, indexed by statement.
struct ModelColumn {
  std::string model;
  std::vector<std::optional<ModelAnswer>> answers;

  /// Present and valid answer, or nullptr.
  const ModelAnswer* valid_answer(std::size_t statement) const {
    const auto& slot = answers[statement];
    return slot && slot->valid ? &*slot : nullptr;
  }
  std::size_t n_valid() const;
  std::size_t n_invalid() const;
};

class ModelRatings {
 public:
  ModelRatings() = default;
  explicit ModelRatings(std::vector<std::string> statement_ids)
      : statement_ids_(std::move(statement_ids)) {}

  std::size_t n_statements() const { return statement_ids_.size(); }
  const std::vector<std::string>& statement_ids() const { return statement_ids_; }
  const std::vector<ModelColumn>& models() const { return columns_; }
  const ModelColumn* find(std::string_view model) const;

  /// Column for `model`, created empty on first use.
  ModelColumn& column(const std::string& model);
  std::size_t invalid_count() const;

 private:
  std::vector<std::string> statement_ids_;
  std::vector<ModelColumn> columns_;
};

/// JSONL rows {model, statement_id, p_yes_a, p_yes_b, n_samples_a?, n_samples_b?, valid}.
ModelRatings parse_model_ratings(std::istream& in, const std::string& source_name,
                                 const Corpus& corpus);
ModelRatings load_model_ratings(const std::filesystem::path& path, const Corpus& corpus);
/// Canonical form: models in first-seen order, statements in corpus order.
void write_model_ratings(std::ostream& out, const ModelRatings& ratings);

struct ModelMeta {
  std::string model;
  std::string family;
  std::optional<double> size_b;  ///< billions of parameters
  std::optional<double> elo;
  std::optional<double> openbookqa;  ///< accuracy in percent
};

/// CSV with columns model, family, size_b, elo, openbookqa. Empty, "-", "--"
/// and "NA" denote a missing value.
std::vector<ModelMeta> parse_model_meta(std::istream& in, const std::string& source_name);
std::vector<ModelMeta> load_model_meta(const std::filesystem::path& path);
void write_model_meta(std::ostream& out, std::span<const ModelMeta> meta);

}  // namespace commonsense
