#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "sqlicl/demo_select.hpp"
#include "sqlicl/embedder.hpp"
#include "sqlicl/error_correct.hpp"
#include "sqlicl/gcl.hpp"
#include "sqlicl/llm_client.hpp"
#include "sqlicl/prompting.hpp"
#include "sqlicl/schema.hpp"

namespace sqlicl {

// Generation template, instruction and correction files for one layout.
struct PipelineResources {
  PromptTemplate generation{""};
  std::string instruction;
  CorrectionResources correction;

  static PipelineResources load(const std::filesystem::path& dir, PromptLayout layout);
};

struct InitialSql {
  std::optional<std::string> sql;  // the zero-shot query when a reply parsed
  bool fell_back = false;          // neither attempt parsed
  std::size_t calls = 0;
  Usage usage;
};

// Zero-shot generation used as the structural query. An unparseable reply is
// retried once with a stricter instruction; after that fell_back is set and
// callers use question similarity instead. Provider errors propagate.
InitialSql initial_sql(const std::string& question, const DatabaseSchema& schema,
                       const std::optional<std::string>& evidence, const PipelineResources& res, LlmClient& llm);

struct PipelineConfig {
  Strategy strategy = Strategy::kStructTree;
  std::size_t k = kDefaultShots;  // 0 gives the zero-shot path whatever the strategy
  std::uint64_t seed = 0;
  bool most_similar_last = true;
  bool correct = true;
};

struct AskRequest {
  std::string question;
  std::string db_id;
  std::optional<std::string> evidence;
  std::optional<Hardness> hardness;  // dataset label, when known
};

struct AskResult {
  std::optional<std::string> initial_sql;
  bool initial_fell_back = false;
  Strategy strategy_used = Strategy::kZeroShot;
  std::vector<std::uint32_t> demo_ids;  // prompt order
  std::optional<Hardness> hardness_target;
  std::string prompt;
  std::string reply;
  std::optional<std::string> extracted;  // SQL found in the reply
  std::optional<CorrectionOutcome> correction;
  std::string sql;  // final answer
  std::size_t llm_calls = 0;
  Usage usage;  // summed over every call for this question
};

// Select -> prompt -> complete -> extract -> correct for one question.
// ask() may be called from several threads at once.
class Pipeline {
 public:
  // Throws Error(kInvalidArgument) when a strategy lacks what it needs: an
  // index for any few-shot strategy, plus a checkpoint, an embedder and an
  // embedded index for struct-graph. k above kMaxShots is rejected too.
  Pipeline(PipelineConfig cfg, std::shared_ptr<const CandidateIndex> index, std::shared_ptr<const SchemaCatalog> schemas,
           std::filesystem::path db_root, std::shared_ptr<LlmClient> llm, PipelineResources res,
           std::shared_ptr<const Checkpoint> checkpoint = nullptr, std::shared_ptr<Embedder> embedder = nullptr);

  // Throws Error(kInvalidArgument) for an unknown db_id and provider errors
  // (kProviderUnavailable, kRateLimited, kReplayMiss) from any call.
  AskResult ask(const AskRequest& req) const;

  // Cached per database; throws Error(kIo) when the file is missing.
  const DbContext& db_context(const std::string& db_id) const;

  const PipelineConfig& config() const { return cfg_; }
  LlmClient& llm() const { return *llm_; }
  const SchemaCatalog& schemas() const { return *schemas_; }

 private:
  std::vector<std::uint32_t> select(const AskRequest& req, const DatabaseSchema& schema, AskResult& out) const;

  PipelineConfig cfg_;
  std::shared_ptr<const CandidateIndex> index_;
  std::shared_ptr<const SchemaCatalog> schemas_;
  std::filesystem::path db_root_;
  std::shared_ptr<LlmClient> llm_;
  PipelineResources res_;
  std::shared_ptr<const Checkpoint> checkpoint_;
  std::shared_ptr<Embedder> embedder_;
  mutable std::mutex embed_mu_;
  mutable std::mutex ctx_mu_;
  mutable std::map<std::string, std::unique_ptr<DbContext>> contexts_;
};

}  // namespace sqlicl
