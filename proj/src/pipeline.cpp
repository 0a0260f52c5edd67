#include "sqlicl/pipeline.hpp"

#include <spdlog/spdlog.h>

#include "sqlicl/dataset.hpp"
#include "sqlicl/hashing.hpp"
#include "sqlicl/sql_ast.hpp"

namespace sqlicl {

namespace {

constexpr const char* kRetryNote = " The previous answer was not a valid query. Answer with one sqlite SELECT statement.";

void add_usage(Usage& total, const Usage& u) {
  total.prompt_tokens += u.prompt_tokens;
  total.reply_tokens += u.reply_tokens;
}

std::optional<std::string> parsed_sql(const std::string& reply) {
  try {
    return extract_sql(reply);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNoSqlFound) throw;
    return std::nullopt;
  }
}

bool needs_initial_sql(Strategy s, bool hardness_known) {
  return s == Strategy::kStructTree || s == Strategy::kStructGraph || (s == Strategy::kHardness && !hardness_known);
}

}  // namespace

PipelineResources PipelineResources::load(const std::filesystem::path& dir, PromptLayout layout) {
  PipelineResources r;
  r.generation = load_prompt_template(dir, layout);
  r.instruction = load_instruction(dir);
  r.correction = CorrectionResources::load(dir);
  return r;
}

InitialSql initial_sql(const std::string& question, const DatabaseSchema& schema,
                       const std::optional<std::string>& evidence, const PipelineResources& res, LlmClient& llm) {
  InitialSql out;
  PromptBundle bundle;
  bundle.instruction = res.instruction;
  bundle.schema_ddl = render_schema_ddl(schema);
  bundle.question = question;
  if (res.generation.has("evidence")) bundle.evidence = evidence;
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (attempt == 1) bundle.instruction += kRetryNote;
    const Completion c = llm.complete(build_prompt(bundle, res.generation));
    ++out.calls;
    add_usage(out.usage, c.usage);
    if (auto sql = parsed_sql(c.text)) {
      out.sql = std::move(sql);
      return out;
    }
  }
  out.fell_back = true;
  spdlog::warn("zero-shot reply did not parse twice; falling back to question similarity");
  return out;
}

Pipeline::Pipeline(PipelineConfig cfg, std::shared_ptr<const CandidateIndex> index,
                   std::shared_ptr<const SchemaCatalog> schemas, std::filesystem::path db_root,
                   std::shared_ptr<LlmClient> llm, PipelineResources res, std::shared_ptr<const Checkpoint> checkpoint,
                   std::shared_ptr<Embedder> embedder)
    : cfg_(cfg),
      index_(std::move(index)),
      schemas_(std::move(schemas)),
      db_root_(std::move(db_root)),
      llm_(std::move(llm)),
      res_(std::move(res)),
      checkpoint_(std::move(checkpoint)),
      embedder_(std::move(embedder)) {
  if (!schemas_) throw Error(ErrorCode::kInvalidArgument, "pipeline needs a schema catalog");
  if (!llm_) throw Error(ErrorCode::kInvalidArgument, "pipeline needs an LLM client");
  if (cfg_.k > kMaxShots) {
    throw Error(ErrorCode::kInvalidArgument, "k = " + std::to_string(cfg_.k) + " exceeds " + std::to_string(kMaxShots));
  }
  if (cfg_.k == 0 || cfg_.strategy == Strategy::kZeroShot) return;
  if (!index_) {
    throw Error(ErrorCode::kInvalidArgument,
                "strategy " + std::string(strategy_name(cfg_.strategy)) + " needs a candidate index");
  }
  if (cfg_.strategy == Strategy::kStructGraph) {
    if (!checkpoint_ || !embedder_) {
      throw Error(ErrorCode::kInvalidArgument, "strategy struct-graph needs a checkpoint and an embedder");
    }
    if (!index_->has_embeddings()) {
      throw Error(ErrorCode::kMissingEmbeddings, "strategy struct-graph needs an index built with a checkpoint");
    }
    if (index_->checkpoint_id() != checkpoint_fingerprint(*checkpoint_)) {
      throw Error(ErrorCode::kCheckpointMismatch, "index was built with a different checkpoint");
    }
  }
}

const DbContext& Pipeline::db_context(const std::string& db_id) const {
  std::lock_guard lock(ctx_mu_);
  auto it = contexts_.find(db_id);
  if (it != contexts_.end()) return *it->second;
  const DatabaseSchema* schema = schemas_->find(db_id);
  if (!schema) throw Error(ErrorCode::kInvalidArgument, "unknown database '" + db_id + "'");
  const auto file = database_file(db_root_, db_id);
  if (!std::filesystem::exists(file)) throw Error(ErrorCode::kIo, "database file " + file.string() + " not found");
  auto ctx = std::make_unique<DbContext>(DbContext::load(file, *schema));
  return *contexts_.emplace(db_id, std::move(ctx)).first->second;
}

std::vector<std::uint32_t> Pipeline::select(const AskRequest& req, const DatabaseSchema& schema, AskResult& out) const {
  const std::size_t k = cfg_.k;
  Strategy s = cfg_.strategy;
  if (needs_initial_sql(s, req.hardness.has_value())) {
    const InitialSql init = initial_sql(req.question, schema, req.evidence, res_, *llm_);
    out.llm_calls += init.calls;
    add_usage(out.usage, init.usage);
    out.initial_sql = init.sql;
    out.initial_fell_back = init.fell_back;
    if (init.fell_back) s = Strategy::kJaccard;
  }
  out.strategy_used = s;
  const std::uint64_t seed = derive_seed(cfg_.seed, "demo-select:" + req.question);
  switch (s) {
    case Strategy::kRandom:
      return select_random(*index_, k, seed);
    case Strategy::kHardness: {
      const Hardness target = req.hardness ? *req.hardness : classify_hardness(parse_sql(*out.initial_sql));
      out.hardness_target = target;
      HardnessSelection sel = select_hardness(*index_, target, k, seed);
      if (sel.fell_back) spdlog::warn("hardness bucket {} too small, topped up from neighbours", hardness_name(target));
      return sel.ids;
    }
    case Strategy::kJaccard:
      return select_jaccard(*index_, req.question, k);
    case Strategy::kStructTree:
      return select_struct_tree(*index_, *out.initial_sql, k);
    case Strategy::kStructGraph: {
      Eigen::RowVectorXd query;
      {
        std::lock_guard lock(embed_mu_);
        query = embed_sql(*out.initial_sql, checkpoint_->params, *embedder_, &schema);
      }
      return select_struct_graph(*index_, query, k);
    }
    case Strategy::kZeroShot:
      break;
  }
  return {};
}

AskResult Pipeline::ask(const AskRequest& req) const {
  const DatabaseSchema* schema = schemas_->find(req.db_id);
  if (!schema) throw Error(ErrorCode::kInvalidArgument, "unknown database '" + req.db_id + "'");
  AskResult out;

  PromptBundle bundle;
  bundle.instruction = res_.instruction;
  bundle.schema_ddl = render_schema_ddl(*schema);
  bundle.question = req.question;
  if (res_.generation.has("evidence")) bundle.evidence = req.evidence;
  std::vector<std::string> demo_sqls;
  if (cfg_.k > 0 && cfg_.strategy != Strategy::kZeroShot) {
    out.demo_ids = order_for_prompt(select(req, *schema, out), cfg_.most_similar_last);
    for (std::uint32_t id : out.demo_ids) {
      const DemonstrationCandidate& c = index_->candidates()[id];
      bundle.demonstrations.push_back({c.question, c.sql});
      demo_sqls.push_back(c.sql);
    }
  }
  out.prompt = build_prompt(bundle, res_.generation);
  const Completion c = llm_->complete(out.prompt);
  ++out.llm_calls;
  add_usage(out.usage, c.usage);
  out.reply = c.text;
  out.extracted = parsed_sql(c.text);
  // An unusable reply still goes through correction, which sends it to the
  // prompt pass.
  const std::string candidate = out.extracted ? *out.extracted : c.text;
  out.sql = candidate;
  if (!cfg_.correct) return out;

  CorrectionRequest creq{req.question, req.evidence, req.hardness, demo_sqls};
  CorrectionOutcome outcome = correct(candidate, db_context(req.db_id), creq, res_.correction, llm_.get());
  if (outcome.prompt_error) {
    throw Error(*outcome.prompt_error_code, "correction prompt failed: " + *outcome.prompt_error);
  }
  if (outcome.prompt) {
    ++out.llm_calls;
    add_usage(out.usage, outcome.prompt->usage);
  }
  out.sql = outcome.corrected;
  out.correction = std::move(outcome);
  return out;
}

}  // namespace sqlicl
