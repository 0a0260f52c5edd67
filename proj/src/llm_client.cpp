#include "sqlicl/llm_client.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "http_post.hpp"
#include "json.hpp"
#include "sql_text_util.hpp"
#include "sqlicl/hashing.hpp"
#include "sqlicl/sql_ast.hpp"
#include "text_file.hpp"

namespace sqlicl {

namespace {

using nlohmann::json;

constexpr std::size_t kMaxInFlight = 256;

// Delta-seconds form only; HTTP-dates are treated as absent.
long parse_retry_after_ms(const std::string& value) {
  if (value.empty()) return -1;
  char* end = nullptr;
  const double seconds = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0' || !(seconds >= 0) || !std::isfinite(seconds)) return -1;
  return static_cast<long>(std::llround(seconds * 1000.0));
}

std::string snippet(const std::string& body) { return body.size() > 200 ? body.substr(0, 200) + "..." : body; }

bool starts_with_keyword(std::string_view line, std::string_view kw) {
  if (line.size() < kw.size() || !detail::iequals(line.substr(0, kw.size()), kw)) return false;
  return line.size() == kw.size() || !(std::isalnum(static_cast<unsigned char>(line[kw.size()])) || line[kw.size()] == '_');
}

// Text up to the first ';' outside quotes.
std::string_view first_statement(std::string_view text) {
  char quote = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quote) {
      if (c == quote) quote = 0;
    } else if (c == '\'' || c == '"' || c == '`') {
      quote = c;
    } else if (c == ';') {
      return text.substr(0, i);
    }
  }
  return text;
}

bool parses(std::string_view sql) {
  try {
    parse_sql(sql);
    return true;
  } catch (const SyntaxError&) {
    return false;
  }
}

// The longest line prefix of the candidate's first statement that parses, so
// prose after the query is dropped.
std::optional<std::string> parse_prefix(std::string_view candidate) {
  std::string_view stmt = detail::trim(first_statement(candidate));
  while (!stmt.empty()) {
    if (parses(stmt)) return std::string(stmt);
    const auto nl = stmt.rfind('\n');
    if (nl == std::string_view::npos) break;
    stmt = detail::trim(stmt.substr(0, nl));
  }
  return std::nullopt;
}

std::vector<std::string_view> fenced_blocks(std::string_view reply) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto open = reply.find("```", pos);
    if (open == std::string_view::npos) break;
    std::size_t body = open + 3;
    const auto eol = reply.find('\n', body);
    // A bare word after the fence is a language tag.
    if (eol != std::string_view::npos) {
      const std::string_view tag = detail::trim(reply.substr(body, eol - body));
      if (std::all_of(tag.begin(), tag.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-'; })) {
        body = eol + 1;
      }
    }
    const auto close = reply.find("```", body);
    out.push_back(reply.substr(body, close == std::string_view::npos ? std::string_view::npos : close - body));
    if (close == std::string_view::npos) break;
    pos = close + 3;
  }
  return out;
}

}  // namespace

void ProviderConfig::validate() const {
  if (max_in_flight < 1 || max_in_flight > kMaxInFlight) {
    throw Error(ErrorCode::kInvalidArgument, "max_in_flight must be in [1, 256], got " + std::to_string(max_in_flight));
  }
  if (retry.max_attempts < 1) throw Error(ErrorCode::kInvalidArgument, "retry.max_attempts must be at least 1");
  if (model.empty()) throw Error(ErrorCode::kInvalidArgument, "model id is empty");
}

HttpChatBackend::HttpChatBackend(ProviderConfig cfg) : cfg_(std::move(cfg)) {
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) api_key_ = key;
}

std::string HttpChatBackend::send(const std::string& prompt) {
  const json body = {{"model", cfg_.model},
                     {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
                     {"temperature", cfg_.temperature}};
  std::vector<std::pair<std::string, std::string>> headers;
  if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);

  detail::HttpResponse res;
  try {
    res = detail::http_post_json(cfg_.endpoint, body.dump(), headers, cfg_.timeout_seconds);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kProviderUnavailable) throw TransientError(e.what());
    throw;
  }
  if (res.status == 429) {
    throw RateLimitedError(cfg_.endpoint + " returned 429", parse_retry_after_ms(res.retry_after));
  }
  if (res.status >= 500) throw TransientError(cfg_.endpoint + " returned " + std::to_string(res.status));
  if (res.status != 200) {
    throw Error(ErrorCode::kProviderUnavailable,
                cfg_.endpoint + " returned " + std::to_string(res.status) + ": " + snippet(res.body));
  }
  try {
    const json reply = json::parse(res.body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProviderUnavailable, "malformed chat reply: " + std::string(e.what()));
  }
}

ScriptedBackend::ScriptedBackend(std::vector<Rule> rules, std::optional<std::string> fallback,
                                 std::chrono::milliseconds latency)
    : rules_(std::move(rules)), fallback_(std::move(fallback)), latency_(latency) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json_file(const std::filesystem::path& file) {
  const std::string text = detail::read_text_file(file);
  try {
    const json doc = json::parse(text);
    std::vector<Rule> rules;
    for (const auto& r : doc.at("rules")) rules.push_back({r.at("match").get<std::string>(), r.at("reply").get<std::string>()});
    std::optional<std::string> fallback;
    if (doc.contains("fallback") && !doc["fallback"].is_null()) fallback = doc["fallback"].get<std::string>();
    return std::make_shared<ScriptedBackend>(std::move(rules), std::move(fallback));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, file.string() + ": " + e.what());
  }
}

std::string ScriptedBackend::send(const std::string& prompt) {
  ++calls_;
  const std::size_t now = ++in_flight_;
  std::size_t peak = peak_.load();
  while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
  }
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
  --in_flight_;
  for (const Rule& r : rules_) {
    if (prompt.find(r.match) != std::string::npos) return r.reply;
  }
  if (fallback_) return *fallback_;
  throw Error(ErrorCode::kProviderUnavailable, "scripted backend has no reply for this prompt");
}

ReplayStore::ReplayStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::string ReplayStore::fingerprint(std::string_view model, std::string_view prompt) {
  std::string bytes(model);
  bytes += '\n';
  bytes += prompt;
  return sha256_hex(bytes);
}

std::optional<std::string> ReplayStore::get(const std::string& fingerprint) const {
  const auto file = dir_ / (fingerprint + ".txt");
  std::lock_guard lock(mu_);
  if (!std::filesystem::exists(file)) return std::nullopt;
  return detail::read_text_file(file);
}

void ReplayStore::put(const std::string& fingerprint, const std::string& reply) {
  std::lock_guard lock(mu_);
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create replay directory " + dir_.string());
  detail::write_file_atomic(dir_ / (fingerprint + ".txt"), reply);
}

LlmClient::LlmClient(ProviderConfig cfg, std::shared_ptr<ChatBackend> backend, std::shared_ptr<ReplayStore> store,
                     ReplayMode mode, Tokenizer tokenizer)
    : cfg_(std::move(cfg)),
      backend_(std::move(backend)),
      store_(std::move(store)),
      mode_(mode),
      tokenizer_(std::move(tokenizer)),
      gate_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(cfg_.max_in_flight, 1, kMaxInFlight))) {
  cfg_.validate();
  if (mode_ != ReplayMode::kOff && !store_) {
    throw Error(ErrorCode::kInvalidArgument, "replay and offline modes need a replay store");
  }
  if (mode_ != ReplayMode::kOffline && !backend_) {
    throw Error(ErrorCode::kInvalidArgument, "a live provider mode needs a backend");
  }
}

std::string LlmClient::send_with_retries(const std::string& prompt, int& attempts) {
  const RetryPolicy& policy = cfg_.retry;
  for (attempts = 1;; ++attempts) {
    std::chrono::milliseconds wait;
    try {
      gate_.acquire();
      struct Release {
        std::counting_semaphore<256>& g;
        ~Release() { g.release(); }
      } release{gate_};
      return backend_->send(prompt);
    } catch (const RateLimitedError& e) {
      if (attempts >= policy.max_attempts) throw;
      const auto shift = std::min(attempts - 1, 20);
      wait = e.retry_after_ms() >= 0 ? std::chrono::milliseconds(e.retry_after_ms()) : policy.backoff_base * (1L << shift);
      spdlog::warn("attempt {}/{} rate limited, retrying in {} ms", attempts, policy.max_attempts, wait.count());
    } catch (const TransientError& e) {
      if (attempts >= policy.max_attempts) {
        throw Error(ErrorCode::kProviderUnavailable,
                    "giving up after " + std::to_string(attempts) + " attempts: " + e.what());
      }
      wait = policy.backoff_base * (1L << std::min(attempts - 1, 20));
      spdlog::warn("attempt {}/{} failed ({}), retrying in {} ms", attempts, policy.max_attempts, e.what(), wait.count());
    }
    std::this_thread::sleep_for(std::min(wait, policy.max_backoff));
  }
}

Completion LlmClient::complete(const std::string& prompt) {
  Completion out;
  out.fingerprint = ReplayStore::fingerprint(cfg_.model, prompt);
  std::optional<std::string> hit;
  if (mode_ != ReplayMode::kOff) hit = store_->get(out.fingerprint);
  if (hit) {
    out.text = std::move(*hit);
    out.replayed = true;
  } else if (mode_ == ReplayMode::kOffline) {
    throw Error(ErrorCode::kReplayMiss, "no recorded reply " + out.fingerprint + " in " + store_->dir().string());
  } else {
    out.text = send_with_retries(prompt, out.attempts);
    if (out.attempts > 1) spdlog::info("reply {} received after attempts={}", out.fingerprint.substr(0, 12), out.attempts);
    if (mode_ == ReplayMode::kRecord) store_->put(out.fingerprint, out.text);
  }
  out.usage.prompt_tokens = tokenizer_(prompt);
  out.usage.reply_tokens = tokenizer_(out.text);
  std::lock_guard lock(ledger_mu_);
  ++ledger_.calls;
  ledger_.prompt_tokens += out.usage.prompt_tokens;
  ledger_.reply_tokens += out.usage.reply_tokens;
  return out;
}

CostLedger LlmClient::ledger() const {
  std::lock_guard lock(ledger_mu_);
  return ledger_;
}

std::string extract_sql(std::string_view reply) {
  for (std::string_view block : fenced_blocks(reply)) {
    if (auto sql = parse_prefix(block)) return *sql;
  }
  std::size_t line_start = 0;
  while (line_start < reply.size()) {
    const auto eol = reply.find('\n', line_start);
    const std::string_view line = detail::trim(reply.substr(line_start, eol == std::string_view::npos ? eol : eol - line_start));
    if (starts_with_keyword(line, "SELECT") || starts_with_keyword(line, "WITH")) {
      if (auto sql = parse_prefix(reply.substr(line_start))) return *sql;
    }
    if (eol == std::string_view::npos) break;
    line_start = eol + 1;
  }
  if (auto sql = parse_prefix(reply)) return *sql;
  throw Error(ErrorCode::kNoSqlFound, "no parseable SQL in reply: " + snippet(std::string(detail::trim(reply))));
}

}  // namespace sqlicl
