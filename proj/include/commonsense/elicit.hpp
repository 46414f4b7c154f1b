#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "commonsense/corpus.hpp"

namespace commonsense {

// ----------------------------------------------------------------- prompts

enum class Question { agree, others };  ///< (a) own view, (b) view of most people

std::string_view to_string(Question q);  ///< "a" / "b"

/// System message for the role-clarification variant.
inline constexpr std::string_view kRoleClarificationPrompt =
    "You are an independent participant in a survey administered by academic researchers, who "
    "study commonsense beliefs. You will be presented with a statement, and asked a question "
    "about that statement. Answer the question independently, and please do not take into "
    "account what you think the researchers might want you to say.";

struct PromptSpec {
  std::string statement;
  Question question = Question::agree;
  std::optional<std::string> system_prompt;
  bool suppress_reasoning = false;
  /// Question (b) reads "most other people" instead of "most people".
  bool most_other_people = false;
};

struct ChatMessage {
  std::string role;
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

std::string render_user_message(const PromptSpec& spec);

/// One fresh conversation: optional system message, then the user message.
std::vector<ChatMessage> build_prompt(const PromptSpec& spec);

// -------------------------------------------------------- answer aggregation

/// Surface forms counted as yes / no after normalization.
struct Lexicon {
  std::vector<std::string> yes{"yes"};
  std::vector<std::string> no{"no"};
};

/// Strips leading whitespace and quote characters (ASCII and typographic),
/// then lower-cases ASCII letters.
std::string normalize_token(std::string_view token);

enum class AnswerMethod { token_probs, repeated_sampling };

struct AnswerDistribution {
  double p_yes = 0.0;
  double p_no = 0.0;
  double p_other = 0.0;
  std::optional<double> p_yes_rescaled;  ///< empty = invalid record
  std::optional<int> n_samples;
  AnswerMethod method = AnswerMethod::token_probs;

  bool valid() const { return p_yes_rescaled.has_value(); }
};

/// Sums the probability mass of yes and no surface forms; the rest is
/// p_other. Inputs summing above 1 (rounding in returned log-probabilities)
/// are renormalized first. Throws ValidationError on a negative or
/// non-finite probability.
AnswerDistribution aggregate_token_probs(std::span<const std::pair<std::string, double>> token_probs,
                                         const Lexicon& lexicon = {});

/// Classifies each sampled response by its first word.
AnswerDistribution repeated_sampling_estimate(std::span<const std::string> responses,
                                              const Lexicon& lexicon = {});

/// Word at the start of a response, normalized like a token.
std::string first_word(std::string_view response);

// ------------------------------------------------------------------ client

enum class ElicitMode { token_probs, sampling };

std::string_view to_string(ElicitMode mode);
std::optional<ElicitMode> parse_elicit_mode(std::string_view text);

/// Body of an OpenAI-compatible chat completion request.
nlohmann::json make_chat_request(const std::string& model, const std::vector<ChatMessage>& messages,
                                 ElicitMode mode, int top_logprobs, int n_choices, int max_tokens);

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  /// Returns the parsed response body. Throws NetworkError when the request
  /// ultimately fails.
  virtual nlohmann::json complete(const nlohmann::json& request) = 0;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{30000};
};

/// Backoff before retry number `attempt` (1-based).
std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int attempt);

/// POSTs to <base_url>/v1/chat/completions. Retries transport errors, 429
/// and 5xx with exponential backoff; other statuses fail immediately.
class HttpChatClient final : public ChatClient {
 public:
  HttpChatClient(std::string base_url, std::string api_key, RetryPolicy retry = {},
                 std::chrono::seconds timeout = std::chrono::seconds(120));
  nlohmann::json complete(const nlohmann::json& request) override;

  std::size_t attempts() const { return attempts_; }

 private:
  std::string origin_;  ///< scheme://host[:port]
  std::string path_;
  std::string api_key_;
  RetryPolicy retry_;
  std::chrono::seconds timeout_;
  std::size_t attempts_ = 0;
  std::mutex mutex_;
};

/// Token bucket shared by concurrent workers. rate <= 0 disables limiting.
class RateLimiter {
 public:
  RateLimiter(double rate_per_second, double burst);
  void acquire();

 private:
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mutex_;
};

// ------------------------------------------------------------------- cache

/// Append-only JSONL of {key, request, response, timestamp}. A torn final
/// line left by an interrupted run is dropped on open.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path path);

  std::optional<nlohmann::json> find(const std::string& key) const;
  void append(const std::string& key, const nlohmann::json& request, const nlohmann::json& response);
  std::size_t size() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::unordered_map<std::string, nlohmann::json> entries_;
  std::ofstream out_;
  mutable std::mutex mutex_;
};

// ---------------------------------------------------------------- collect

struct CollectSettings {
  std::string model;
  ElicitMode mode = ElicitMode::token_probs;
  int samples = 23;           ///< sampling mode: answers per question
  int choices_per_call = 8;   ///< sampling mode: n per request
  int top_logprobs = 20;
  int max_tokens = 1;
  std::optional<std::string> system_prompt;
  bool suppress_reasoning = false;
  bool most_other_people = false;
  Lexicon lexicon;
  unsigned concurrency = 4;
  double rate_per_second = 0.0;
  double burst = 4.0;

  nlohmann::ordered_json to_json() const;
};

/// Cache key of one request: sha256 over statement id, question, call index
/// and the full request body (model, messages, sampling settings).
std::string cache_key(const std::string& statement_id, Question q, int call_index,
                      const nlohmann::json& request);

/// Request bodies for one (statement, question): one call in token mode,
/// ceil(samples / choices_per_call) calls in sampling mode.
std::vector<nlohmann::json> question_requests(const CollectSettings& settings,
                                              const std::string& statement_text, Question q);

/// Turns one question's cached responses into an answer distribution.
AnswerDistribution answer_from_responses(const CollectSettings& settings,
                                         std::span<const nlohmann::json> responses);

struct CollectResult {
  ModelRatings ratings;
  std::vector<std::string> pending;  ///< statement ids with a failed request
  std::size_t network_calls = 0;
  std::size_t cache_hits = 0;
};

/// Elicits (a) and (b) for every statement. Cached requests are never sent
/// again. Statements whose requests failed are listed as pending and left
/// out of `ratings`.
CollectResult collect(const CollectSettings& settings, const Corpus& corpus, ChatClient& client,
                      ResponseCache& cache);

}  // namespace commonsense
