#include "support.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <httplib.h>

#include "commonsense/csv.hpp"
#include "commonsense/manifest.hpp"
#include "commonsense/random.hpp"

namespace testsupport {

using namespace commonsense;

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  out += "'";
  return out;
}

std::optional<double> opt_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return csv::parse_double(s);
}

}  // namespace

TempDir::TempDir(std::string_view tag) {
  static std::atomic<unsigned> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = fs::temp_directory_path() /
          ("cs-" + std::string(tag) + "-" + std::to_string(::getpid()) + "-" +
           std::to_string(counter++) + "-" + std::to_string(stamp % 1000000));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

fs::path data_path(std::string_view name) { return fs::path(COMMONSENSE_TEST_DATA) / name; }

CliResult run_cli(const std::vector<std::string>& args, const std::vector<std::string>& env) {
  std::string cmd;
  for (const auto& e : env) cmd += e + " ";
  cmd += shell_quote(COMMONSENSE_CLI_PATH);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " 2>&1";

  const auto t0 = std::chrono::steady_clock::now();
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  CliResult result;
  std::array<char, 4096> buf{};
  std::size_t got = 0;
  while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) result.output.append(buf.data(), got);
  const int status = ::pclose(pipe);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::size_t CsvTable::col(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw std::runtime_error("no column " + std::string(name));
}

double CsvTable::num(std::size_t row, std::string_view name) const {
  const auto v = csv::parse_double(rows.at(row).at(col(name)));
  if (!v) throw std::runtime_error("not a number in column " + std::string(name));
  return *v;
}

const std::string& CsvTable::str(std::size_t row, std::string_view name) const {
  return rows.at(row).at(col(name));
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  csv::Reader reader(in, path.string());
  CsvTable t;
  t.header = reader.header();
  while (auto rec = reader.next()) t.rows.push_back(std::move(rec->fields));
  return t;
}

std::vector<TableRow> load_model_table() {
  const auto t = read_csv(data_path("model_table.csv"));
  std::vector<TableRow> rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    TableRow row;
    row.model = t.str(r, "model");
    row.family = t.str(r, "family");
    row.size_b = opt_number(t.str(r, "size_b"));
    row.elo = opt_number(t.str(r, "elo"));
    row.openbookqa = opt_number(t.str(r, "openbookqa"));
    row.c = t.num(r, "consensus_pct");
    row.a = t.num(r, "awareness_pct");
    row.m = t.num(r, "commonsensicality_pct");
    row.c2 = t.num(r, "consensus_vote_pct");
    row.a2 = t.num(r, "awareness_vote_pct");
    row.m2 = t.num(r, "commonsensicality_vote_pct");
    rows.push_back(std::move(row));
  }
  return rows;
}

TableFixture build_table_fixture(const std::vector<TableRow>& rows) {
  constexpr std::size_t kN = 4407;
  constexpr std::size_t kFacts = 1602;
  constexpr std::size_t kRatersPer = 4;
  constexpr std::size_t kStride = 89;  // kN / 50 rounded up

  CounterRng rng(20240611);

  std::vector<std::size_t> perm(kN);
  std::iota(perm.begin(), perm.end(), 0);
  rng.substream(1).shuffle(std::span(perm));
  std::vector<bool> is_fact(kN, false);
  for (std::size_t k = 0; k < kFacts; ++k) is_fact[perm[k]] = true;

  std::vector<Statement> statements;
  statements.reserve(kN);
  char buf[32];
  for (std::size_t i = 0; i < kN; ++i) {
    Statement s;
    std::snprintf(buf, sizeof buf, "q%04zu", i);
    s.id = buf;
    s.text = "Fixture statement number " + std::to_string(i) + ".";
    s.source = static_cast<Source>(i % kSourceCount);
    s.features[static_cast<std::size_t>(Axis::behavior)] = static_cast<std::uint8_t>(i % 2);
    s.features[static_cast<std::size_t>(Axis::everyday)] = static_cast<std::uint8_t>((i / 2) % 2);
    s.features[static_cast<std::size_t>(Axis::speech)] = static_cast<std::uint8_t>(i % 5 == 0);
    s.features[static_cast<std::size_t>(Axis::judgment)] = static_cast<std::uint8_t>((i / 3) % 2);
    s.features[static_cast<std::size_t>(Axis::opinion)] = static_cast<std::uint8_t>(is_fact[i]);
    s.features[static_cast<std::size_t>(Axis::reasoning)] = static_cast<std::uint8_t>(i % 7 < 3);
    statements.push_back(std::move(s));
  }

  // Human ratings: every tenth statement is a 2/4 tie, the rest 3/4 or 1/4.
  std::vector<bool> tie(kN), majority(kN);
  std::vector<Rating> ratings;
  ratings.reserve(kN * kRatersPer);
  const std::size_t n_respondents = kRatersPer * kStride;
  for (std::size_t i = 0; i < kN; ++i) {
    tie[i] = i % 10 == 0;
    majority[i] = tie[i] || i % 3 != 1;
    for (std::size_t k = 0; k < kRatersPer; ++k) {
      bool agree;
      if (tie[i]) agree = k < 2;
      else agree = (k == (i % 4)) ? !majority[i] : bool(majority[i]);
      const bool others = (k == ((i + 1) % 4)) ? !agree : agree;
      ratings.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(k * kStride + i / 50),
                         agree, others});
    }
  }
  std::vector<std::string> respondent_ids(n_respondents);
  for (std::size_t j = 0; j < n_respondents; ++j) {
    std::snprintf(buf, sizeof buf, "w%03zu", j);
    respondent_ids[j] = buf;
  }

  TableFixture fx;
  fx.corpus = Corpus(std::move(statements));
  fx.matrix = RatingMatrix(fx.corpus.ids(), respondent_ids, std::move(ratings));
  fx.models = ModelRatings(fx.corpus.ids());

  std::vector<std::size_t> ties, clear;
  for (std::size_t i = 0; i < kN; ++i) (tie[i] ? ties : clear).push_back(i);

  // Integer hit counts whose percentages round to the printed value. The
  // printed differences alone can be infeasible (awareness can gain at most
  // what consensus gains), so search the rounding windows jointly.
  const auto window = [&](double pct) {
    const auto lo = static_cast<long>(std::ceil((pct - 0.05) / 100.0 * kN));
    const auto hi = static_cast<long>(std::floor((pct + 0.05) / 100.0 * kN));
    return std::pair{lo, hi};
  };
  const double n = static_cast<double>(kN);

  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    long nc = -1, nc2 = -1, na = -1, na2 = -1;
    double best = 1e9;
    const auto [c_lo, c_hi] = window(row.c);
    const auto [c2_lo, c2_hi] = window(row.c2);
    const auto [a_lo, a_hi] = window(row.a);
    const auto [a2_lo, a2_hi] = window(row.a2);
    for (long x = c_lo; x <= c_hi; ++x)
      for (long x2 = c2_lo; x2 <= c2_hi; ++x2) {
        const long t = x2 - x;
        if (t < 0 || t > static_cast<long>(ties.size())) continue;
        for (long y = a_lo; y <= a_hi; ++y)
          for (long y2 = a2_lo; y2 <= a2_hi; ++y2) {
            const long d = y2 - y;
            if (std::labs(d) > t || (t + d) % 2 != 0) continue;
            const double C = 100.0 * x / n, C2 = 100.0 * x2 / n, A = 100.0 * y / n, A2 = 100.0 * y2 / n;
            const double err = std::max({std::fabs(C - row.c), std::fabs(C2 - row.c2), std::fabs(A - row.a),
                                         std::fabs(A2 - row.a2), std::fabs(std::sqrt(C * A) - row.m),
                                         std::fabs(std::sqrt(C2 * A2) - row.m2)});
            if (err < best) best = err, nc = x, nc2 = x2, na = y, na2 = y2;
          }
      }
    if (nc < 0) throw std::runtime_error("fixture cannot reproduce row " + row.model);
    const long t = nc2 - nc;
    const long u = (t + (na2 - na)) / 2;
    const long kc_clear = nc - static_cast<long>(ties.size() - t);
    if (kc_clear < 0 || kc_clear > static_cast<long>(clear.size()))
      throw std::runtime_error("fixture cannot reproduce row " + row.model);

    auto mrng = rng.substream(100 + r);
    std::vector<std::size_t> tie_order = ties, clear_order = clear;
    mrng.shuffle(std::span(tie_order));
    mrng.shuffle(std::span(clear_order));

    std::vector<int> alpha(kN, -1), beta(kN, -1);
    for (long k = 0; k < static_cast<long>(tie_order.size()); ++k) alpha[tie_order[k]] = k < t ? 0 : 1;
    for (long k = 0; k < static_cast<long>(clear_order.size()); ++k) {
      const auto i = clear_order[k];
      alpha[i] = k < kc_clear ? int(majority[i]) : int(!majority[i]);
    }

    // Flipped ties: u answer (b) with 0 (right only once the model votes).
    for (long k = 0; k < t; ++k) beta[tie_order[k]] = k < u ? 0 : 1;
    const long ka_rest = na - (t - u);
    std::vector<std::size_t> rest;
    for (std::size_t k = static_cast<std::size_t>(t); k < tie_order.size(); ++k) rest.push_back(tie_order[k]);
    rest.insert(rest.end(), clear.begin(), clear.end());
    mrng.shuffle(std::span(rest));
    if (ka_rest < 0 || ka_rest > static_cast<long>(rest.size()))
      throw std::runtime_error("fixture cannot reproduce awareness for " + row.model);
    for (long k = 0; k < static_cast<long>(rest.size()); ++k) {
      const auto i = rest[k];
      beta[i] = k < ka_rest ? int(majority[i]) : int(!majority[i]);
    }

    auto& col = fx.models.column(row.model);
    for (std::size_t i = 0; i < kN; ++i) {
      ModelAnswer ans;
      // Some positive answers sit exactly on 0.5 to exercise the tie rule.
      ans.p_yes_a = alpha[i] ? (i % 7 == 0 ? 0.5 : 0.75) : 0.25;
      ans.p_yes_b = beta[i] ? (i % 11 == 0 ? 0.5 : 0.875) : 0.125;
      col.answers[i] = ans;
    }
  }
  return fx;
}

void write_fixture(const TableFixture& fixture, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "statements.jsonl");
    write_corpus(out, fixture.corpus);
  }
  {
    std::ofstream out(dir / "human_ratings.csv");
    write_human_ratings(out, fixture.matrix);
  }
  {
    std::ofstream out(dir / "model_ratings.jsonl");
    write_model_ratings(out, fixture.models);
  }
}

// ------------------------------------------------------------- mock server

struct MockChatServer::Impl {
  httplib::Server server;
};

MockChatServer::MockChatServer(Handler handler) : impl_(std::make_unique<Impl>()) {
  impl_->server.Post(R"(/v1/chat/completions)", [this, handler](const httplib::Request& req,
                                                                  httplib::Response& res) {
    ++requests_;
    int status = 200;
    nlohmann::json body;
    try {
      body = handler(nlohmann::json::parse(req.body), status);
    } catch (const std::exception& e) {
      status = 400;
      body = {{"error", e.what()}};
    }
    res.status = status;
    res.set_content(body.dump(), "application/json");
  });
  port_ = impl_->server.bind_to_any_port("127.0.0.1");
  if (port_ <= 0) throw std::runtime_error("mock server could not bind");
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

MockChatServer::~MockChatServer() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockChatServer::base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

std::vector<std::pair<std::string, double>> fixture_logprobs(const std::string& message, unsigned invalid_every) {
  const auto digest = sha256_hex(message);
  const std::uint64_t h = std::stoull(digest.substr(0, 15), nullptr, 16);
  CounterRng rng(h);
  if (invalid_every && h % invalid_every == 0) {
    return {{"As", 0.7}, {"I", 0.2}, {"The", 0.05}};
  }
  // Weights for Yes, " yes", "No", " no", "\"Yes", filler.
  std::vector<std::pair<std::string, double>> out = {
      {"Yes", rng.uniform01()}, {" yes", 0.1 * rng.uniform01()}, {"No", rng.uniform01()},
      {" no", 0.1 * rng.uniform01()}, {"\"Yes", 0.05 * rng.uniform01()}, {"As", 0.1 * rng.uniform01()}};
  double total = 0.0;
  for (const auto& [t, p] : out) total += p;
  const double mass = 0.9 + 0.1 * rng.uniform01();  // top-k never covers everything
  for (auto& [t, p] : out) p = p / total * mass;
  return out;
}

nlohmann::json logprob_response(const std::vector<std::pair<std::string, double>>& top) {
  nlohmann::json tops = nlohmann::json::array();
  for (const auto& [token, p] : top) tops.push_back({{"token", token}, {"logprob", std::log(p)}});
  const auto best = std::max_element(top.begin(), top.end(),
                                     [](const auto& a, const auto& b) { return a.second < b.second; });
  return {{"id", "mock"},
          {"object", "chat.completion"},
          {"choices",
           {{{"index", 0},
             {"message", {{"role", "assistant"}, {"content", best->first}}},
             {"logprobs",
              {{"content", {{{"token", best->first}, {"logprob", std::log(best->second)}, {"top_logprobs", tops}}}}}},
             {"finish_reason", "length"}}}}};
}

std::string user_message(const nlohmann::json& request) {
  std::string last;
  for (const auto& m : request.at("messages")) {
    if (m.at("role") == "user") last = m.at("content").get<std::string>();
  }
  return last;
}

}  // namespace testsupport
