#include <catch_amalgamated.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "commonsense/elicit.hpp"
#include "commonsense/error.hpp"
#include "commonsense/random.hpp"
#include "commonsense/synth.hpp"
#include "support.hpp"

using namespace commonsense;
using Catch::Approx;
using nlohmann::json;
using TokenProbs = std::vector<std::pair<std::string, double>>;

namespace {

RetryPolicy fast_retry(int attempts) {
  RetryPolicy p;
  p.max_attempts = attempts;
  p.initial_backoff = std::chrono::milliseconds(1);
  p.max_backoff = std::chrono::milliseconds(4);
  return p;
}

json sampling_response(const std::vector<std::string>& texts) {
  json choices = json::array();
  for (const auto& t : texts) choices.push_back({{"message", {{"role", "assistant"}, {"content", t}}}});
  return {{"choices", choices}};
}

}  // namespace

TEST_CASE("question (a) prompt") {
  PromptSpec spec;
  spec.statement = "Water is wet.";
  CHECK(render_user_message(spec) ==
        "Consider the following statement, \"Water is wet.\" Do you agree with this statement? "
        "Start your answer with a \"yes\" or \"no\".");
  const auto msgs = build_prompt(spec);
  REQUIRE(msgs.size() == 1);
  CHECK(msgs[0].role == "user");
}

TEST_CASE("question (b) prompt and its variants") {
  PromptSpec spec;
  spec.statement = "Water is wet.";
  spec.question = Question::others;
  CHECK(render_user_message(spec) ==
        "Consider the following statement, \"Water is wet.\" Do you think most people would agree "
        "with this statement? Start your answer with a \"yes\" or \"no\".");
  spec.most_other_people = true;
  CHECK(render_user_message(spec).find("most other people would agree") != std::string::npos);
  spec.suppress_reasoning = true;
  CHECK(render_user_message(spec).ends_with(
      "\"no\". Do not include anything else, such as an explanation or reasoning."));

  spec.system_prompt = std::string(kRoleClarificationPrompt);
  const auto msgs = build_prompt(spec);
  REQUIRE(msgs.size() == 2);
  CHECK(msgs[0] == ChatMessage{"system", std::string(kRoleClarificationPrompt)});
  CHECK(msgs[1].role == "user");
}

TEST_CASE("distinct prompt specs render distinct conversations") {
  std::set<std::string> seen;
  int n = 0;
  for (const char* s : {"A.", "B."})
    for (Question q : {Question::agree, Question::others})
      for (bool suppress : {false, true})
        for (bool system : {false, true}) {
          PromptSpec spec;
          spec.statement = s;
          spec.question = q;
          spec.suppress_reasoning = suppress;
          if (system) spec.system_prompt = std::string(kRoleClarificationPrompt);
          std::string flat;
          for (const auto& m : build_prompt(spec)) flat += m.role + "\x1f" + m.content + "\x1e";
          seen.insert(flat);
          ++n;
        }
  CHECK(static_cast<int>(seen.size()) == n);
}

TEST_CASE("token normalization") {
  CHECK(normalize_token(" Yes") == "yes");
  CHECK(normalize_token("\"Yes") == "yes");
  CHECK(normalize_token("\xE2\x80\x9CNo") == "no");
  CHECK(normalize_token("\xE2\x96\x81Yes") == "yes");
  CHECK(normalize_token("\xC4\xA0no") == "no");
  CHECK(normalize_token("YES") == "yes");
  CHECK(normalize_token("As") == "as");
  CHECK(first_word("Yes, because water is wet.") == "yes");
  CHECK(first_word("  \"No.\" I think") == "no");
}

TEST_CASE("token probabilities aggregate over surface forms") {
  const TokenProbs mixed = {{"Yes", 0.6}, {" yes", 0.1}, {"No", 0.2}, {"As", 0.1}};
  const auto d = aggregate_token_probs(mixed);
  CHECK(d.p_yes == Approx(0.7));
  CHECK(d.p_no == Approx(0.2));
  CHECK(d.p_other == Approx(0.1));
  REQUIRE(d.valid());
  CHECK(*d.p_yes_rescaled == Approx(0.7778).margin(5e-5));

  const TokenProbs only_no = {{"no", 1.0}};
  CHECK(*aggregate_token_probs(only_no).p_yes_rescaled == 0.0);

  const TokenProbs filler = {{"As", 0.9}, {"I", 0.1}};
  CHECK_FALSE(aggregate_token_probs(filler).valid());

  const TokenProbs negative = {{"Yes", -0.1}};
  CHECK_THROWS_AS(aggregate_token_probs(negative), ValidationError);
  const TokenProbs nan = {{"Yes", std::nan("")}};
  CHECK_THROWS_AS(aggregate_token_probs(nan), ValidationError);

  const TokenProbs over = {{"Yes", 0.7}, {"No", 0.35}};
  const auto r = aggregate_token_probs(over);
  CHECK(r.p_yes + r.p_no + r.p_other == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("aggregated masses always sum to one") {
  CounterRng rng(12);
  const std::vector<std::string> vocab = {"Yes", " yes", "No", " no", "As", "I", "The", "\"Yes"};
  for (int t = 0; t < 500; ++t) {
    TokenProbs probs;
    double total = 0.0;
    for (const auto& v : vocab) {
      const double p = rng.uniform01();
      probs.emplace_back(v, p);
      total += p;
    }
    const double scale = 0.5 + 0.5 * rng.uniform01();
    for (auto& [tok, p] : probs) p *= scale / total;
    const auto d = aggregate_token_probs(probs);
    REQUIRE(d.p_yes + d.p_no + d.p_other == Approx(1.0).epsilon(1e-12));
    REQUIRE(d.p_yes >= 0.0);
    REQUIRE(d.p_other >= 0.0);
  }
}

TEST_CASE("repeated sampling counts first words") {
  std::vector<std::string> r(14, "Yes.");
  r.insert(r.end(), 9, "No, it is not.");
  const auto d = repeated_sampling_estimate(r);
  CHECK(*d.p_yes_rescaled == Approx(0.6087).margin(5e-5));
  CHECK(d.n_samples == 23);
  CHECK(d.method == AnswerMethod::repeated_sampling);

  const std::vector<std::string> all_yes(23, "yes");
  CHECK(*repeated_sampling_estimate(all_yes).p_yes_rescaled == 1.0);

  const std::vector<std::string> other = {"Maybe", "It depends"};
  const auto o = repeated_sampling_estimate(other);
  CHECK_FALSE(o.valid());
  CHECK(o.p_other == 1.0);
}

TEST_CASE("repeated sampling is unbiased") {
  const int n = 23;
  const int sims = 4000;
  for (double p : {0.2, 0.5, 0.85}) {
    CounterRng rng(derive_seed(77, static_cast<std::uint64_t>(p * 100)));
    double sum = 0.0;
    for (int s = 0; s < sims; ++s) {
      std::vector<std::string> responses;
      for (int k = 0; k < n; ++k) responses.push_back(rng.uniform01() < p ? "Yes" : "No");
      sum += *repeated_sampling_estimate(responses).p_yes_rescaled;
    }
    const double se = std::sqrt(p * (1.0 - p) / (static_cast<double>(n) * sims));
    CHECK(std::fabs(sum / sims - p) < 3.0 * se);
  }
}

TEST_CASE("chat request bodies") {
  const std::vector<ChatMessage> msgs = {{"user", "hi"}};
  const auto t = make_chat_request("m", msgs, ElicitMode::token_probs, 20, 1, 1);
  CHECK(t["model"] == "m");
  CHECK(t["temperature"] == 1.0);
  CHECK(t["logprobs"] == true);
  CHECK(t["top_logprobs"] == 20);
  CHECK(t["max_tokens"] == 1);
  CHECK_FALSE(t.contains("n"));
  CHECK(t["messages"][0]["content"] == "hi");

  const auto s = make_chat_request("m", msgs, ElicitMode::sampling, 20, 8, 0);
  CHECK(s["n"] == 8);
  CHECK_FALSE(s.contains("logprobs"));
  CHECK_FALSE(s.contains("max_tokens"));

  CollectSettings cs;
  cs.model = "m";
  cs.mode = ElicitMode::sampling;
  cs.samples = 23;
  cs.choices_per_call = 8;
  const auto reqs = question_requests(cs, "S.", Question::agree);
  REQUIRE(reqs.size() == 3);
  CHECK(reqs[0]["n"].get<int>() + reqs[1]["n"].get<int>() + reqs[2]["n"].get<int>() == 23);
  cs.samples = 0;
  CHECK_THROWS_AS(question_requests(cs, "S.", Question::agree), ValidationError);

  CHECK(parse_elicit_mode("token") == ElicitMode::token_probs);
  CHECK(parse_elicit_mode("bogus") == std::nullopt);
  CHECK(parse_elicit_mode("sampling") == ElicitMode::sampling);
}

TEST_CASE("backoff grows and caps") {
  RetryPolicy p;
  CHECK(backoff_delay(p, 1).count() == 500);
  CHECK(backoff_delay(p, 2).count() == 1000);
  CHECK(backoff_delay(p, 3).count() == 2000);
  CHECK(backoff_delay(p, 20).count() == 30000);
}

TEST_CASE("cache keys separate calls, questions and settings") {
  const json r1 = {{"model", "a"}}, r2 = {{"model", "b"}};
  const auto k = cache_key("s1", Question::agree, 0, r1);
  CHECK(k.size() == 64);
  CHECK(k == cache_key("s1", Question::agree, 0, r1));
  CHECK(k != cache_key("s1", Question::others, 0, r1));
  CHECK(k != cache_key("s1", Question::agree, 1, r1));
  CHECK(k != cache_key("s2", Question::agree, 0, r1));
  CHECK(k != cache_key("s1", Question::agree, 0, r2));
}

TEST_CASE("response cache survives a torn final line") {
  testsupport::TempDir dir("cache");
  const auto path = dir / "responses.jsonl";
  {
    ResponseCache c(path);
    c.append("k1", {{"q", 1}}, {{"a", 1}});
    c.append("k2", {{"q", 2}}, {{"a", 2}});
  }
  testsupport::write_file(path, testsupport::read_file(path) + R"({"key":"k3","requ)");
  {
    ResponseCache c(path);
    CHECK(c.size() == 2);
    CHECK(c.find("k2").value()["a"] == 2);
    CHECK_FALSE(c.find("k3").has_value());
    c.append("k3", {{"q", 3}}, {{"a", 3}});
  }
  ResponseCache c(path);
  CHECK(c.size() == 3);

  testsupport::write_file(dir / "bad.jsonl", "{\"key\":\"x\",\"response\":{}}\nnot json\n{}\n");
  CHECK_THROWS_AS(ResponseCache(dir / "bad.jsonl"), ValidationError);
}

TEST_CASE("http client retries 429 and 5xx") {
  std::atomic<int> seen{0};
  testsupport::MockChatServer server([&](const json&, int& status) {
    const int k = seen++;
    status = k == 0 ? 429 : (k == 1 ? 503 : 200);
    return json{{"ok", k}};
  });
  HttpChatClient client(server.base_url(), "", fast_retry(5));
  const auto r = client.complete({{"model", "x"}});
  CHECK(r["ok"] == 2);
  CHECK(client.attempts() == 3);
}

TEST_CASE("http client fails fast on 4xx and gives up after max attempts") {
  testsupport::MockChatServer bad([](const json&, int& status) {
    status = 400;
    return json{{"error", "bad request"}};
  });
  HttpChatClient c1(bad.base_url(), "", fast_retry(5));
  CHECK_THROWS_AS(c1.complete({}), NetworkError);
  CHECK(c1.attempts() == 1);

  testsupport::MockChatServer down([](const json&, int& status) {
    status = 500;
    return json::object();
  });
  HttpChatClient c2(down.base_url() + "/v1", "", fast_retry(3));
  CHECK_THROWS_AS(c2.complete({}), NetworkError);
  CHECK(c2.attempts() == 3);
  CHECK(down.requests() == 3);

  CHECK_THROWS_AS(HttpChatClient("localhost:1234", ""), ValidationError);
}

TEST_CASE("collect through a mock endpoint matches direct aggregation") {
  const auto corpus = synthetic_corpus(40, 9);
  testsupport::MockChatServer server([](const json& req, int& status) {
    status = 200;
    return testsupport::logprob_response(testsupport::fixture_logprobs(testsupport::user_message(req)));
  });
  testsupport::TempDir dir("collect");
  CollectSettings s;
  s.model = "mock";
  s.concurrency = 4;
  HttpChatClient client(server.base_url(), "", fast_retry(2));

  ModelRatings first;
  {
    ResponseCache cache(dir / "responses.jsonl");
    const auto r = collect(s, corpus, client, cache);
    CHECK(r.pending.empty());
    CHECK(r.network_calls == 80);
    first = r.ratings;
  }
  const auto* col = first.find("mock");
  REQUIRE(col);
  int invalid = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    PromptSpec pa{corpus[i].text, Question::agree, std::nullopt, false, false};
    PromptSpec pb{corpus[i].text, Question::others, std::nullopt, false, false};
    const auto top_a = testsupport::fixture_logprobs(render_user_message(pa));
    const auto top_b = testsupport::fixture_logprobs(render_user_message(pb));
    TokenProbs ta, tb;
    // The wire carries log-probabilities, so compare through the same round trip.
    for (const auto& [t, p] : top_a) ta.emplace_back(t, std::exp(std::log(p)));
    for (const auto& [t, p] : top_b) tb.emplace_back(t, std::exp(std::log(p)));
    const auto a = aggregate_token_probs(ta), b = aggregate_token_probs(tb);
    const auto& got = col->answers[i];
    REQUIRE(got.has_value());
    CHECK(got->p_yes_a == a.p_yes_rescaled);
    CHECK(got->p_yes_b == b.p_yes_rescaled);
    CHECK(got->valid == (a.valid() && b.valid()));
    invalid += !got->valid;
  }
  CHECK(invalid > 0);
  CHECK(invalid < 20);

  const std::size_t before = server.requests();
  ResponseCache cache(dir / "responses.jsonl");
  const auto again = collect(s, corpus, client, cache);
  CHECK(server.requests() == before);
  CHECK(again.network_calls == 0);
  CHECK(again.cache_hits == 80);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(again.ratings.find("mock")->answers[i]->p_yes_a == col->answers[i]->p_yes_a);
  }
}

TEST_CASE("collect in sampling mode") {
  const auto corpus = synthetic_corpus(5, 2);
  testsupport::MockChatServer server([](const json& req, int& status) {
    status = 200;
    const int n = req.at("n").get<int>();
    std::vector<std::string> texts;
    for (int k = 0; k < n; ++k) texts.push_back(k % 3 == 0 ? "No." : "Yes, of course.");
    return sampling_response(texts);
  });
  testsupport::TempDir dir("sampling");
  CollectSettings s;
  s.model = "sampler";
  s.mode = ElicitMode::sampling;
  s.samples = 23;
  s.choices_per_call = 8;
  s.max_tokens = 0;
  HttpChatClient client(server.base_url(), "", fast_retry(2));
  ResponseCache cache(dir / "responses.jsonl");
  const auto r = collect(s, corpus, client, cache);
  CHECK(r.network_calls == 5 * 2 * 3);
  // Per call of n choices, indices 0, 3, 6 say no: 3 + 3 + 3 (n=7) = 9 of 23.
  const auto& ans = *r.ratings.find("sampler")->answers[0];
  CHECK(ans.n_samples_a == 23);
  CHECK(*ans.p_yes_a == Approx(14.0 / 23.0).epsilon(1e-12));
}

TEST_CASE("failed requests leave statements pending") {
  const auto corpus = synthetic_corpus(10, 3);
  testsupport::MockChatServer server([](const json& req, int& status) {
    const auto msg = testsupport::user_message(req);
    status = msg.find(std::string("most people")) != std::string::npos && msg.size() % 2 ? 400 : 200;
    return testsupport::logprob_response({{"Yes", 0.5}, {"No", 0.5}});
  });
  testsupport::TempDir dir("pending");
  CollectSettings s;
  s.model = "m";
  HttpChatClient client(server.base_url(), "", fast_retry(1));
  ResponseCache cache(dir / "responses.jsonl");
  const auto r = collect(s, corpus, client, cache);
  CHECK_FALSE(r.pending.empty());
  for (const auto& id : r.pending) CHECK_FALSE(r.ratings.find("m")->answers[*corpus.find(id)].has_value());
  CHECK(cache.size() == 20 - r.pending.size());
}

TEST_CASE("rate limiter spaces requests") {
  RateLimiter limiter(100.0, 1.0);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 11; ++i) limiter.acquire();
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(s >= 0.09);
  RateLimiter off(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) off.acquire();
}
