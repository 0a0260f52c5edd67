#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sqlicl/error.hpp"
#include "sqlicl/prompting.hpp"

namespace sqlicl {

struct RetryPolicy {
  int max_attempts = 4;
  // Delay after failed attempt n is backoff_base * 2^(n-1), capped.
  std::chrono::milliseconds backoff_base{500};
  std::chrono::milliseconds max_backoff{30000};
};

struct ProviderConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4";
  std::string api_key_env = "OPENAI_API_KEY";
  std::size_t max_in_flight = 4;
  RetryPolicy retry;
  double temperature = 0.0;
  int timeout_seconds = 120;

  // Throws Error(kInvalidArgument) unless 1 <= max_in_flight <= 256 and
  // max_attempts >= 1.
  void validate() const;
};

// A failure worth retrying: 5xx statuses and transport errors.
class TransientError : public Error {
 public:
  explicit TransientError(const std::string& message) : Error(ErrorCode::kProviderUnavailable, message) {}
};

// One request and its reply text. Implementations throw TransientError,
// RateLimitedError (429), or Error(kProviderUnavailable) for anything that
// retrying cannot fix.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string send(const std::string& prompt) = 0;
};

// Chat-completion protocol: POST {"model", "messages": [{"role": "user",
// "content"}], "temperature"}, reply text from choices[0].message.content.
// Sends a Bearer token when the configured key variable is set.
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(ProviderConfig cfg);
  std::string send(const std::string& prompt) override;

 private:
  ProviderConfig cfg_;
  std::string api_key_;
};

// Canned replies keyed on prompt substrings; the first matching rule wins.
// Tracks call counts and peak concurrency for tests.
class ScriptedBackend : public ChatBackend {
 public:
  struct Rule {
    std::string match;
    std::string reply;
  };

  explicit ScriptedBackend(std::vector<Rule> rules, std::optional<std::string> fallback = std::nullopt,
                           std::chrono::milliseconds latency = std::chrono::milliseconds(0));
  // JSON: {"rules": [{"match": ..., "reply": ...}], "fallback": ...}.
  // Throws Error(kFormat) or Error(kIo).
  static std::shared_ptr<ScriptedBackend> from_json_file(const std::filesystem::path& file);

  // Throws Error(kProviderUnavailable) when no rule matches and there is no
  // fallback.
  std::string send(const std::string& prompt) override;

  std::size_t calls() const { return calls_.load(); }
  std::size_t peak_in_flight() const { return peak_.load(); }

 private:
  std::vector<Rule> rules_;
  std::optional<std::string> fallback_;
  std::chrono::milliseconds latency_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> peak_{0};
};

// Directory of <fingerprint>.txt files holding recorded replies.
class ReplayStore {
 public:
  explicit ReplayStore(std::filesystem::path dir);

  // sha256 over the model id, a newline, and the exact prompt bytes.
  static std::string fingerprint(std::string_view model, std::string_view prompt);

  std::optional<std::string> get(const std::string& fingerprint) const;
  void put(const std::string& fingerprint, const std::string& reply);
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
};

enum class ReplayMode {
  kOff,      // always ask the backend
  kRecord,   // serve hits, ask the backend on a miss and store the reply
  kOffline,  // serve hits, ReplayMiss otherwise; the backend is never used
};

struct Usage {
  std::size_t prompt_tokens = 0;
  std::size_t reply_tokens = 0;
};

struct Completion {
  std::string text;
  Usage usage;
  int attempts = 0;  // backend requests made; 0 for a replay hit
  bool replayed = false;
  std::string fingerprint;
};

struct CostLedger {
  std::size_t calls = 0;
  std::size_t prompt_tokens = 0;
  std::size_t reply_tokens = 0;
};

// Shareable across threads. At most cfg.max_in_flight backend requests are
// outstanding at once.
class LlmClient {
 public:
  // Throws Error(kInvalidArgument) for an invalid config, offline or record
  // mode without a store, or a live mode without a backend.
  LlmClient(ProviderConfig cfg, std::shared_ptr<ChatBackend> backend, std::shared_ptr<ReplayStore> store,
            ReplayMode mode, Tokenizer tokenizer = count_tokens);

  // Throws Error(kReplayMiss), RateLimitedError once attempts run out, or
  // Error(kProviderUnavailable).
  Completion complete(const std::string& prompt);

  CostLedger ledger() const;
  const ProviderConfig& config() const { return cfg_; }
  ReplayMode mode() const { return mode_; }

 private:
  std::string send_with_retries(const std::string& prompt, int& attempts);

  ProviderConfig cfg_;
  std::shared_ptr<ChatBackend> backend_;
  std::shared_ptr<ReplayStore> store_;
  ReplayMode mode_;
  Tokenizer tokenizer_;
  std::counting_semaphore<256> gate_;
  mutable std::mutex ledger_mu_;
  CostLedger ledger_;
};

// First statement that parses among: fenced code blocks, then text from the
// first line starting with SELECT or WITH, then the whole reply. Trailing
// prose and a final ';' are stripped. Throws Error(kNoSqlFound).
std::string extract_sql(std::string_view reply);

}  // namespace sqlicl
