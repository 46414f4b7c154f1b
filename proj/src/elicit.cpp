#include "commonsense/elicit.hpp"

#include <httplib.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <cmath>
#include <sstream>
#include <thread>

#include "commonsense/error.hpp"
#include "commonsense/manifest.hpp"
#include "commonsense/parallel.hpp"

namespace commonsense {

using nlohmann::json;

// ----------------------------------------------------------------- prompts

std::string_view to_string(Question q) { return q == Question::agree ? "a" : "b"; }

std::string render_user_message(const PromptSpec& spec) {
  std::string msg = "Consider the following statement, \"" + spec.statement + "\" ";
  if (spec.question == Question::agree) {
    msg += "Do you agree with this statement?";
  } else {
    msg += spec.most_other_people ? "Do you think most other people would agree with this statement?"
                                  : "Do you think most people would agree with this statement?";
  }
  msg += " Start your answer with a \"yes\" or \"no\".";
  if (spec.suppress_reasoning) msg += " Do not include anything else, such as an explanation or reasoning.";
  return msg;
}

std::vector<ChatMessage> build_prompt(const PromptSpec& spec) {
  std::vector<ChatMessage> messages;
  if (spec.system_prompt) messages.push_back({"system", *spec.system_prompt});
  messages.push_back({"user", render_user_message(spec)});
  return messages;
}

// -------------------------------------------------------- answer aggregation

namespace {

// Leading bytes that never carry the answer: whitespace, quotes, and the
// word-boundary markers some tokenizers prefix to tokens.
std::size_t skip_prefix(std::string_view s) {
  static constexpr std::string_view kMultiByte[] = {
      "\xE2\x80\x9C", "\xE2\x80\x9D", "\xE2\x80\x98", "\xE2\x80\x99",  // curly quotes
      "\xC2\xAB",     "\xC2\xBB",                                      // guillemets
      "\xE2\x96\x81",                                                  // sentencepiece space
      "\xC4\xA0",                                                      // byte-level BPE space
  };
  std::size_t i = 0;
  for (;;) {
    if (i < s.size() && (std::isspace(static_cast<unsigned char>(s[i])) || s[i] == '"' || s[i] == '\'' || s[i] == '`')) {
      ++i;
      continue;
    }
    bool matched = false;
    for (auto m : kMultiByte) {
      if (s.substr(i).starts_with(m)) {
        i += m.size();
        matched = true;
        break;
      }
    }
    if (!matched) return i;
  }
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

enum class Label { yes, no, other };

Label classify(const std::string& normalized, const Lexicon& lexicon) {
  const auto in = [&](const std::vector<std::string>& forms) {
    return std::any_of(forms.begin(), forms.end(),
                       [&](const std::string& f) { return normalize_token(f) == normalized; });
  };
  if (normalized.empty()) return Label::other;
  if (in(lexicon.yes)) return Label::yes;
  if (in(lexicon.no)) return Label::no;
  return Label::other;
}

void rescale(AnswerDistribution& d) {
  const double denom = d.p_yes + d.p_no;
  if (denom > 0.0) d.p_yes_rescaled = std::clamp(d.p_yes / denom, 0.0, 1.0);
}

}  // namespace

std::string normalize_token(std::string_view token) { return lower_ascii(token.substr(skip_prefix(token))); }

std::string first_word(std::string_view response) {
  const std::string_view rest = response.substr(skip_prefix(response));
  std::size_t n = 0;
  while (n < rest.size() && std::isalpha(static_cast<unsigned char>(rest[n]))) ++n;
  return lower_ascii(rest.substr(0, n));
}

AnswerDistribution aggregate_token_probs(std::span<const std::pair<std::string, double>> token_probs,
                                         const Lexicon& lexicon) {
  AnswerDistribution d;
  d.method = AnswerMethod::token_probs;
  double total = 0.0;
  for (const auto& [token, p] : token_probs) {
    if (!std::isfinite(p) || p < 0.0) throw ValidationError("token probability must be finite and >= 0");
    total += p;
    switch (classify(normalize_token(token), lexicon)) {
      case Label::yes: d.p_yes += p; break;
      case Label::no: d.p_no += p; break;
      case Label::other: break;
    }
  }
  if (total > 1.0) {
    d.p_yes /= total;
    d.p_no /= total;
  }
  d.p_other = std::max(0.0, 1.0 - d.p_yes - d.p_no);
  rescale(d);
  return d;
}

AnswerDistribution repeated_sampling_estimate(std::span<const std::string> responses,
                                              const Lexicon& lexicon) {
  AnswerDistribution d;
  d.method = AnswerMethod::repeated_sampling;
  d.n_samples = static_cast<int>(responses.size());
  if (responses.empty()) return d;
  std::size_t yes = 0, no = 0;
  for (const auto& r : responses) {
    switch (classify(first_word(r), lexicon)) {
      case Label::yes: ++yes; break;
      case Label::no: ++no; break;
      case Label::other: break;
    }
  }
  const double n = static_cast<double>(responses.size());
  d.p_yes = static_cast<double>(yes) / n;
  d.p_no = static_cast<double>(no) / n;
  d.p_other = static_cast<double>(responses.size() - yes - no) / n;
  if (yes + no > 0) d.p_yes_rescaled = static_cast<double>(yes) / static_cast<double>(yes + no);
  return d;
}

// ------------------------------------------------------------------ client

std::string_view to_string(ElicitMode mode) {
  return mode == ElicitMode::token_probs ? "token_probs" : "sampling";
}

std::optional<ElicitMode> parse_elicit_mode(std::string_view text) {
  if (text == "token" || text == "token_probs" || text == "logprobs") return ElicitMode::token_probs;
  if (text == "sampling") return ElicitMode::sampling;
  return std::nullopt;
}

json make_chat_request(const std::string& model, const std::vector<ChatMessage>& messages,
                       ElicitMode mode, int top_logprobs, int n_choices, int max_tokens) {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  json req = {{"model", model}, {"messages", std::move(msgs)}, {"temperature", 1.0}};
  if (max_tokens > 0) req["max_tokens"] = max_tokens;
  if (mode == ElicitMode::token_probs) {
    req["logprobs"] = true;
    req["top_logprobs"] = top_logprobs;
  } else {
    req["n"] = n_choices;
  }
  return req;
}

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int attempt) {
  const double ms = static_cast<double>(policy.initial_backoff.count()) *
                    std::pow(policy.multiplier, std::max(0, attempt - 1));
  return std::chrono::milliseconds(
      static_cast<long long>(std::min(ms, static_cast<double>(policy.max_backoff.count()))));
}

HttpChatClient::HttpChatClient(std::string base_url, std::string api_key, RetryPolicy retry,
                               std::chrono::seconds timeout)
    : api_key_(std::move(api_key)), retry_(retry), timeout_(timeout) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint URL needs a scheme: '" + base_url + "'");
  const auto path_start = base_url.find('/', scheme_end + 3);
  origin_ = base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  if (prefix.ends_with("/chat/completions")) {
    path_ = prefix;
  } else if (prefix.ends_with("/v1")) {
    path_ = prefix + "/chat/completions";
  } else {
    path_ = prefix + "/v1/chat/completions";
  }
  if (retry_.max_attempts < 1) retry_.max_attempts = 1;
}

json HttpChatClient::complete(const json& request) {
  const std::string body = request.dump();
  std::string last_error;
  for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
    if (attempt > 1) std::this_thread::sleep_for(backoff_delay(retry_, attempt - 1));
    {
      std::lock_guard lock(mutex_);
      ++attempts_;
    }
    httplib::Client client(origin_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    const auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) {
      try {
        return json::parse(res->body);
      } catch (const json::exception& e) {
        throw NetworkError(std::string("endpoint returned malformed JSON: ") + e.what());
      }
    }
    last_error = "HTTP " + std::to_string(res->status);
    if (res->status != 429 && res->status < 500) {
      throw NetworkError(last_error + " from " + origin_ + path_ + ": " + res->body.substr(0, 200));
    }
  }
  throw NetworkError(last_error + " after " + std::to_string(retry_.max_attempts) + " attempts");
}

RateLimiter::RateLimiter(double rate_per_second, double burst)
    : rate_(rate_per_second), burst_(std::max(1.0, burst)), tokens_(std::max(1.0, burst)),
      last_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
  if (rate_ <= 0.0) return;
  std::lock_guard lock(mutex_);
  auto now = std::chrono::steady_clock::now();
  tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
  last_ = now;
  if (tokens_ < 1.0) {
    std::this_thread::sleep_for(std::chrono::duration<double>((1.0 - tokens_) / rate_));
    now = std::chrono::steady_clock::now();
    tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
    last_ = now;
  }
  tokens_ = std::max(0.0, tokens_ - 1.0);
}

// ------------------------------------------------------------------- cache

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
  if (std::filesystem::exists(path_)) {
    std::string content;
    {
      std::ifstream in(path_, std::ios::binary);
      if (!in) throw Error("cannot read cache '" + path_.string() + "'");
      std::ostringstream ss;
      ss << in.rdbuf();
      content = ss.str();
    }
    const auto last_nl = content.rfind('\n');
    const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
    if (keep < content.size()) {
      // Torn write from an interrupted run.
      content.resize(keep);
      std::filesystem::resize_file(path_, keep);
    }
    std::size_t line_no = 0, pos = 0;
    while (pos < content.size()) {
      const auto nl = content.find('\n', pos);
      const std::string_view line(content.data() + pos, nl - pos);
      pos = nl + 1;
      ++line_no;
      if (line.empty()) continue;
      try {
        const json row = json::parse(line);
        entries_[row.at("key").get<std::string>()] = row.at("response");
      } catch (const json::exception& e) {
        throw ValidationError(path_.string(), line_no, std::string("bad cache entry: ") + e.what());
      }
    }
  } else if (path_.has_parent_path()) {
    std::filesystem::create_directories(path_.parent_path());
  }
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) throw Error("cannot open cache '" + path_.string() + "' for appending");
}

std::optional<json> ResponseCache::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::append(const std::string& key, const json& request, const json& response) {
  nlohmann::ordered_json row;
  row["key"] = key;
  row["request"] = request;
  row["response"] = response;
  row["timestamp"] = utc_timestamp();
  const std::string line = row.dump() + "\n";
  std::lock_guard lock(mutex_);
  out_ << line;
  out_.flush();
  if (!out_) throw Error("failed appending to cache '" + path_.string() + "'");
  entries_[key] = response;
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

// ---------------------------------------------------------------- collect

nlohmann::ordered_json CollectSettings::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["mode"] = std::string(to_string(mode));
  j["temperature"] = 1.0;
  if (mode == ElicitMode::token_probs) {
    j["top_logprobs"] = top_logprobs;
  } else {
    j["samples"] = samples;
    j["choices_per_call"] = choices_per_call;
  }
  j["max_tokens"] = max_tokens;
  j["system_prompt"] = system_prompt ? json(*system_prompt) : json(nullptr);
  j["suppress_reasoning"] = suppress_reasoning;
  j["most_other_people"] = most_other_people;
  j["lexicon"] = {{"yes", lexicon.yes}, {"no", lexicon.no},
                  {"normalization", "strip leading whitespace, quotes and tokenizer space markers; ASCII lower-case"}};
  j["concurrency"] = concurrency;
  j["rate_per_second"] = rate_per_second;
  return j;
}

std::string cache_key(const std::string& statement_id, Question q, int call_index, const json& request) {
  nlohmann::ordered_json k;
  k["statement_id"] = statement_id;
  k["question"] = std::string(to_string(q));
  k["call"] = call_index;
  k["request"] = request;
  return sha256_hex(k.dump());
}

std::vector<json> question_requests(const CollectSettings& settings, const std::string& statement_text,
                                    Question q) {
  PromptSpec spec;
  spec.statement = statement_text;
  spec.question = q;
  spec.system_prompt = settings.system_prompt;
  spec.suppress_reasoning = settings.suppress_reasoning;
  spec.most_other_people = settings.most_other_people;
  const auto messages = build_prompt(spec);
  std::vector<json> out;
  if (settings.mode == ElicitMode::token_probs) {
    out.push_back(make_chat_request(settings.model, messages, settings.mode, settings.top_logprobs, 1,
                                    settings.max_tokens));
    return out;
  }
  if (settings.samples < 1 || settings.choices_per_call < 1) {
    throw ValidationError("sampling mode needs samples >= 1 and choices per call >= 1");
  }
  for (int done = 0; done < settings.samples; done += settings.choices_per_call) {
    const int n = std::min(settings.choices_per_call, settings.samples - done);
    out.push_back(make_chat_request(settings.model, messages, settings.mode, settings.top_logprobs, n,
                                    settings.max_tokens));
  }
  return out;
}

AnswerDistribution answer_from_responses(const CollectSettings& settings, std::span<const json> responses) {
  if (settings.mode == ElicitMode::token_probs) {
    AnswerDistribution invalid;
    if (responses.empty()) return invalid;
    std::vector<std::pair<std::string, double>> probs;
    try {
      const json& first = responses[0].at("choices").at(0).at("logprobs").at("content").at(0);
      for (const auto& entry : first.at("top_logprobs")) {
        probs.emplace_back(entry.at("token").get<std::string>(), std::exp(entry.at("logprob").get<double>()));
      }
    } catch (const json::exception&) {
      return invalid;
    }
    return aggregate_token_probs(probs, settings.lexicon);
  }
  std::vector<std::string> texts;
  for (const auto& r : responses) {
    const auto choices = r.find("choices");
    if (choices == r.end() || !choices->is_array()) continue;
    for (const auto& c : *choices) {
      if (static_cast<int>(texts.size()) >= settings.samples) break;
      const auto msg = c.find("message");
      std::string text;
      if (msg != c.end() && msg->contains("content") && (*msg)["content"].is_string()) {
        text = (*msg)["content"].get<std::string>();
      }
      texts.push_back(std::move(text));
    }
  }
  return repeated_sampling_estimate(texts, settings.lexicon);
}

CollectResult collect(const CollectSettings& settings, const Corpus& corpus, ChatClient& client,
                      ResponseCache& cache) {
  struct Unit {
    std::size_t statement;
    Question question;
    int call;
    json request;
    std::string key;
  };
  std::vector<Unit> units;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (Question q : {Question::agree, Question::others}) {
      auto requests = question_requests(settings, corpus[i].text, q);
      for (int c = 0; c < static_cast<int>(requests.size()); ++c) {
        std::string key = cache_key(corpus[i].id, q, c, requests[c]);
        units.push_back({i, q, c, std::move(requests[c]), std::move(key)});
      }
    }
  }

  std::vector<json> responses(units.size());
  std::vector<char> failed(units.size(), 0);
  std::atomic<std::size_t> calls{0}, hits{0};
  RateLimiter limiter(settings.rate_per_second, settings.burst);
  parallel_for(
      units.size(),
      [&](std::size_t u) {
        if (auto cached = cache.find(units[u].key)) {
          responses[u] = std::move(*cached);
          ++hits;
          return;
        }
        limiter.acquire();
        ++calls;
        try {
          responses[u] = client.complete(units[u].request);
        } catch (const NetworkError&) {
          failed[u] = 1;
          return;
        }
        cache.append(units[u].key, units[u].request, responses[u]);
      },
      std::max(1u, settings.concurrency));

  CollectResult result;
  result.ratings = ModelRatings(corpus.ids());
  result.network_calls = calls.load();
  result.cache_hits = hits.load();
  ModelColumn& column = result.ratings.column(settings.model);
  std::size_t u = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::array<std::vector<json>, 2> per_question;
    bool any_failed = false;
    for (; u < units.size() && units[u].statement == i; ++u) {
      any_failed = any_failed || failed[u];
      per_question[units[u].question == Question::agree ? 0 : 1].push_back(responses[u]);
    }
    if (any_failed) {
      result.pending.push_back(corpus[i].id);
      continue;
    }
    const auto a = answer_from_responses(settings, per_question[0]);
    const auto b = answer_from_responses(settings, per_question[1]);
    ModelAnswer answer;
    answer.p_yes_a = a.p_yes_rescaled;
    answer.p_yes_b = b.p_yes_rescaled;
    answer.n_samples_a = a.n_samples;
    answer.n_samples_b = b.n_samples;
    answer.valid = a.valid() && b.valid();
    column.answers[i] = answer;
  }
  return result;
}

}  // namespace commonsense
