#include "sqlicl/cli.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "sqlicl/dataset.hpp"
#include "sqlicl/demo_select.hpp"
#include "sqlicl/embedder.hpp"
#include "sqlicl/error_correct.hpp"
#include "sqlicl/eval_harness.hpp"
#include "sqlicl/gcl.hpp"
#include "sqlicl/hashing.hpp"
#include "sqlicl/llm_client.hpp"
#include "sqlicl/pipeline.hpp"
#include "sqlicl/prompting.hpp"
#include "sqlicl/schema.hpp"
#include "text_file.hpp"

namespace sqlicl {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct Options {
  std::uint64_t seed = 0;
  bool offline = false;
  std::string replay;
  std::string provider = "openai";
  std::string model = "gpt-4";
  std::size_t max_in_flight = 4;
  std::string log_level = "warn";

  std::string strategy = "struct-tree";
  std::size_t k = kDefaultShots;
  std::string checkpoint;
  std::string index;
  std::string dataset;
  std::string format = "spider";
  std::string tables;
  std::string db_root;
  std::string out;
  std::string embedder;
  int p = kDefaultP;
  int q = kDefaultQ;
  double tau = 0.5;
  std::size_t epochs = 100;
  std::size_t workers = 1;
  bool gold = false;
  bool no_correct = false;
  bool json = false;

  std::string question;
  std::string db_id;
  std::string sql;
  std::string evidence;
  std::string hardness;
};

Error usage(const std::string& message) { return Error(ErrorCode::kInvalidArgument, message); }

fs::path tables_path(const Options& o) {
  if (!o.tables.empty()) return o.tables;
  if (!o.dataset.empty()) return fs::path(o.dataset).parent_path() / "tables.json";
  if (!o.db_root.empty()) return fs::path(o.db_root).parent_path() / "tables.json";
  throw usage("--tables is required (or --dataset / --db-root to locate tables.json next to them)");
}

std::shared_ptr<const SchemaCatalog> load_catalog(const Options& o) {
  return std::make_shared<const SchemaCatalog>(load_tables_json(tables_path(o)));
}

fs::path require_db_root(const Options& o) {
  if (o.db_root.empty()) throw usage("--db-root is required");
  return o.db_root;
}

PromptLayout layout_of(const Options& o) {
  return parse_dataset_format(o.format) == DatasetFormat::kBird ? PromptLayout::kBird : PromptLayout::kSpider;
}

// Provider spec: openai, http:<url>, scripted:<file>.
std::shared_ptr<ChatBackend> make_backend(const Options& o, const ProviderConfig& cfg) {
  const std::string& p = o.provider;
  if (p == "openai") return std::make_shared<HttpChatBackend>(cfg);
  if (p.rfind("http:", 0) == 0 || p.rfind("https:", 0) == 0) {
    ProviderConfig c = cfg;
    c.endpoint = p.rfind("http:", 0) == 0 && p.rfind("http://", 0) != 0 ? p.substr(5) : p;
    return std::make_shared<HttpChatBackend>(c);
  }
  if (p.rfind("scripted:", 0) == 0) return ScriptedBackend::from_json_file(p.substr(9));
  throw usage("unknown provider '" + p + "' (expected openai, http:<url> or scripted:<file>)");
}

std::shared_ptr<LlmClient> make_llm(const Options& o) {
  ProviderConfig cfg;
  cfg.model = o.model;
  cfg.max_in_flight = o.max_in_flight;
  if (o.offline && o.replay.empty()) throw usage("--offline needs a replay store (--replay <dir>)");
  const ReplayMode mode = o.offline ? ReplayMode::kOffline : o.replay.empty() ? ReplayMode::kOff : ReplayMode::kRecord;
  std::shared_ptr<ReplayStore> store;
  if (!o.replay.empty()) store = std::make_shared<ReplayStore>(o.replay);
  // Offline runs never construct a network backend.
  std::shared_ptr<ChatBackend> backend = o.offline ? nullptr : make_backend(o, cfg);
  return std::make_shared<LlmClient>(cfg, backend, store, mode);
}

std::string embedder_spec_for(const std::string& provider_id) {
  const std::string prefix = "trigram-v1-d";
  if (provider_id.rfind(prefix, 0) == 0) return "trigram:" + provider_id.substr(prefix.size());
  throw usage("checkpoint uses embedding provider '" + provider_id + "'; pass --embedder with its spec");
}

std::shared_ptr<Embedder> make_embedder(const Options& o, const Checkpoint* ckpt) {
  const std::string spec = !o.embedder.empty() ? o.embedder : ckpt ? embedder_spec_for(ckpt->provider_id) : "trigram";
  return std::make_shared<Embedder>(std::shared_ptr<EmbeddingProvider>(make_embedding_provider(spec)));
}

std::unique_ptr<Pipeline> make_pipeline(const Options& o, std::shared_ptr<const SchemaCatalog> schemas) {
  PipelineConfig cfg;
  cfg.strategy = parse_strategy(o.strategy);
  cfg.k = o.k;
  cfg.seed = o.seed;
  cfg.correct = !o.no_correct;
  std::shared_ptr<const CandidateIndex> index;
  const bool few_shot = cfg.k > 0 && cfg.strategy != Strategy::kZeroShot;
  if (few_shot) {
    if (o.index.empty()) throw usage("strategy " + o.strategy + " needs --index");
    index = std::make_shared<const CandidateIndex>(CandidateIndex::load(o.index));
  }
  std::shared_ptr<const Checkpoint> ckpt;
  std::shared_ptr<Embedder> embedder;
  if (few_shot && cfg.strategy == Strategy::kStructGraph) {
    if (o.checkpoint.empty()) throw usage("strategy struct-graph needs --checkpoint");
    ckpt = std::make_shared<const Checkpoint>(load_checkpoint(o.checkpoint));
    embedder = make_embedder(o, ckpt.get());
  }
  return std::make_unique<Pipeline>(cfg, index, std::move(schemas), require_db_root(o), make_llm(o),
                  PipelineResources::load(default_template_dir(), layout_of(o)), ckpt, embedder);
}

int cmd_index(const Options& o, std::ostream& out) {
  if (o.dataset.empty()) throw usage("--dataset (training file) is required");
  const std::string target = !o.index.empty() ? o.index : o.out;
  if (target.empty()) throw usage("--index (output file) is required");
  const auto train = load_dataset(o.dataset, parse_dataset_format(o.format));
  std::shared_ptr<const SchemaCatalog> schemas;
  if (!o.tables.empty() || fs::exists(tables_path(o))) schemas = load_catalog(o);
  std::optional<Checkpoint> ckpt;
  std::shared_ptr<Embedder> embedder;
  if (!o.checkpoint.empty()) {
    ckpt = load_checkpoint(o.checkpoint);
    embedder = make_embedder(o, &*ckpt);
  }
  IndexBuildStats stats;
  const int p = ckpt ? static_cast<int>(ckpt->p) : o.p;
  const int q = ckpt ? static_cast<int>(ckpt->q) : o.q;
  const CandidateIndex index =
      CandidateIndex::build(train, p, q, ckpt ? &*ckpt : nullptr, embedder.get(), schemas.get(), &stats);
  index.save(target);
  out << "indexed " << index.size() << " candidates (" << stats.skipped << " unparseable rows skipped)"
      << (index.has_embeddings() ? ", with embeddings" : "") << " -> " << target << "\n";
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  if (!(o.tau > 0.0)) throw Error(ErrorCode::kNonPositiveTemperature, "--temperature-tau must be > 0");
  if (o.dataset.empty()) throw usage("--dataset (training file) is required");
  if (o.out.empty()) throw usage("--out (checkpoint file) is required");
  const auto train = load_dataset(o.dataset, parse_dataset_format(o.format));
  const auto donors = load_catalog(o);
  std::vector<TrainingSql> corpus;
  for (const Example& ex : train) corpus.push_back({ex.sql, ex.db_id});
  TrainConfig cfg;
  cfg.tau = o.tau;
  cfg.epochs = o.epochs;
  cfg.seed = derive_seed(o.seed, "gcl-train");
  auto embedder = make_embedder(o, nullptr);
  EncoderShape shape;
  shape.d_text = embedder->text_dim();
  const TrainResult result = train_encoder(corpus, donors.get(), shape, cfg, *embedder, [](std::size_t epoch, double loss) {
    spdlog::info("epoch {} loss {:.6f}", epoch + 1, loss);
  });
  Checkpoint ckpt{result.params, embedder->provider_id(), static_cast<std::uint32_t>(o.p), static_cast<std::uint32_t>(o.q)};
  save_checkpoint(o.out, ckpt);
  std::string curve = "epoch\tloss\n";
  for (std::size_t i = 0; i < result.epoch_loss.size(); ++i) {
    curve += std::to_string(i + 1) + "\t" + std::to_string(result.epoch_loss[i]) + "\n";
  }
  detail::write_file_atomic(o.out + ".loss.tsv", curve);
  out << "trained " << result.epoch_loss.size() << " epochs, final loss " << result.epoch_loss.back() << " -> "
      << o.out << "\n";
  return kExitOk;
}

std::optional<Hardness> hardness_flag(const Options& o) {
  if (o.hardness.empty()) return std::nullopt;
  auto h = parse_hardness(o.hardness);
  if (!h) throw usage("--hardness must be easy, medium, hard or extra");
  return h;
}

int cmd_ask(const Options& o, std::ostream& out) {
  if (o.question.empty() || o.db_id.empty()) throw usage("--question and --db-id are required");
  const auto schemas = load_catalog(o);
  const auto pipeline = make_pipeline(o, schemas);
  AskRequest req{o.question, o.db_id, std::nullopt, hardness_flag(o)};
  if (!o.evidence.empty()) req.evidence = o.evidence;
  const AskResult a = pipeline->ask(req);
  if (!o.json) {
    out << a.sql << "\n";
    return kExitOk;
  }
  ordered_json j;
  j["sql"] = a.sql;
  j["strategy"] = strategy_name(a.strategy_used);
  j["initial_sql"] = a.initial_sql ? ordered_json(*a.initial_sql) : ordered_json(nullptr);
  j["initial_fell_back"] = a.initial_fell_back;
  j["demo_ids"] = a.demo_ids;
  j["prompt"] = a.prompt;
  j["reply"] = a.reply;
  j["applied_rules"] = a.correction ? a.correction->applied_rules : std::vector<std::string>{};
  j["prompt_correction_used"] = a.correction && a.correction->prompt_correction_used;
  j["llm_calls"] = a.llm_calls;
  j["prompt_tokens"] = a.usage.prompt_tokens;
  j["reply_tokens"] = a.usage.reply_tokens;
  out << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  if (o.dataset.empty()) throw usage("--dataset is required");
  const auto schemas = load_catalog(o);
  const DatasetFormat format = parse_dataset_format(o.format);
  const auto data = load_dataset(o.dataset, format);
  EvalOptions opts;
  opts.format = format;
  opts.db_root = require_db_root(o);
  opts.workers = o.workers;
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    opts.records_file = fs::path(o.out) / "records.jsonl";
  }
  std::unique_ptr<Pipeline> pipeline;
  if (!o.gold) pipeline = make_pipeline(o, schemas);
  const EvalReport rep = evaluate(data, *schemas, pipeline.get(), opts);
  if (!o.out.empty()) {
    detail::write_file_atomic(fs::path(o.out) / "report.json", rep.to_json());
    detail::write_file_atomic(fs::path(o.out) / "summary.txt", rep.summary_table());
  }
  out << rep.summary_table();
  if (rep.failed > 0) spdlog::warn("{} instances failed in the pipeline; see the records", rep.failed);
  return kExitOk;
}

int cmd_correct(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.sql.empty() || o.db_id.empty()) throw usage("--sql and --db-id are required");
  const auto schemas = load_catalog(o);
  const DatabaseSchema* schema = schemas->find(o.db_id);
  if (!schema) throw usage("unknown database '" + o.db_id + "'");
  const DbContext ctx = DbContext::load(database_file(require_db_root(o), o.db_id), *schema);
  std::shared_ptr<LlmClient> llm;
  if (o.provider != "none") llm = make_llm(o);
  CorrectionRequest req{o.question, std::nullopt, hardness_flag(o), {}};
  if (!o.evidence.empty()) req.evidence = o.evidence;
  const CorrectionOutcome c = correct(o.sql, ctx, req, CorrectionResources::load(default_template_dir()), llm.get());
  out << c.corrected << "\n";
  for (const auto& line : c.trail) err << "correct: " << line << "\n";
  if (!c.original_parses && c.corrected == c.original) err << "correct: FLAG input does not parse; original echoed\n";
  return kExitOk;
}

void ensure_stderr_logger(const std::string& level) {
  static std::once_flag once;
  std::call_once(once, [] {
    auto logger = spdlog::stderr_color_mt("sqlicl-cli");
    spdlog::set_default_logger(logger);
  });
  spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kProviderUnavailable:
    case ErrorCode::kRateLimited:
    case ErrorCode::kReplayMiss:
      return kExitProvider;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kFormat:
    case ErrorCode::kIo:
    case ErrorCode::kCheckpointMismatch:
    case ErrorCode::kMissingEmbeddings:
    case ErrorCode::kNonPositiveTemperature:
    case ErrorCode::kPoolTooSmall:
    case ErrorCode::kParameterMismatch:
    case ErrorCode::kCorpusTooSmall:
    case ErrorCode::kSyntax:
    case ErrorCode::kShapeMismatch:
      return kExitUsage;
    default:
      return kExitInternal;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"In-context text-to-SQL: demonstration selection, prompting, correction and evaluation", "sqlicl"};
  app.set_config("--config", "", "TOML or INI file with option values; command-line flags win");
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", o.seed, "Run seed; every module derives a named sub-seed");
  app.add_flag("--offline", o.offline, "Serve LLM replies from the replay store only; no network");
  app.add_option("--replay", o.replay, "Replay store directory (records misses unless --offline)");
  app.add_option("--provider", o.provider, "openai, http:<url>, scripted:<file>, or none (correct only)");
  app.add_option("--model", o.model, "Chat model id");
  app.add_option("--max-in-flight", o.max_in_flight, "Concurrent provider requests (1-256)");
  app.add_option("--log-level", o.log_level, "trace, debug, info, warn, error, off");
  app.add_option("--strategy", o.strategy, "zero-shot, random, hardness, jaccard, struct-tree, struct-graph");
  app.add_option("--k", o.k, "Number of demonstrations (0 = zero-shot)");
  app.add_option("--checkpoint", o.checkpoint, "Encoder checkpoint");
  app.add_option("--index", o.index, "Candidate index file");
  app.add_option("--dataset", o.dataset, "Dataset JSON (training rows for index/train)");
  app.add_option("--format", o.format, "spider or bird");
  app.add_option("--tables", o.tables, "tables.json (default: next to --dataset or --db-root)");
  app.add_option("--db-root", o.db_root, "Directory holding <db_id>/<db_id>.sqlite");
  app.add_option("--out", o.out, "Output file (train, index) or directory (eval)");
  app.add_option("--embedder", o.embedder, "Embedding provider spec: trigram[:dim] or remote:<url>|<model>|<dim>");
  app.add_option("--p", o.p, "pq-gram ancestor depth");
  app.add_option("--q", o.q, "pq-gram sibling width");
  app.add_option("--temperature-tau", o.tau, "Contrastive temperature");

  auto* index = app.add_subcommand("index", "Build the candidate index from training rows");
  auto* train = app.add_subcommand("train", "Train the graph encoder and write a checkpoint");
  train->add_option("--epochs", o.epochs, "Training epochs");
  auto* ask = app.add_subcommand("ask", "Answer one question and print the SQL");
  ask->add_option("--question", o.question, "Question text");
  ask->add_option("--db-id", o.db_id, "Database id");
  ask->add_option("--evidence", o.evidence, "Extra knowledge text (BIRD layout)");
  ask->add_option("--hardness", o.hardness, "Known hardness label");
  ask->add_flag("--no-correct", o.no_correct, "Skip error correction");
  ask->add_flag("--json", o.json, "Print the full trace as JSON");
  auto* eval = app.add_subcommand("eval", "Evaluate a dataset and write a report");
  eval->add_flag("--gold", o.gold, "Score the gold SQL as the prediction (harness self-check)");
  eval->add_option("--workers", o.workers, "Instances evaluated concurrently");
  eval->add_flag("--no-correct", o.no_correct, "Skip error correction");
  auto* corr = app.add_subcommand("correct", "Run error correction on one SQL query");
  corr->add_option("--sql", o.sql, "SQL to correct");
  corr->add_option("--db-id", o.db_id, "Database id");
  corr->add_option("--question", o.question, "Question the SQL answers");
  corr->add_option("--evidence", o.evidence, "Extra knowledge text");
  corr->add_option("--hardness", o.hardness, "Hardness label gating the prompt pass");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    ensure_stderr_logger(o.log_level);
    if (*index) return cmd_index(o, out);
    if (*train) return cmd_train(o, out);
    if (*ask) return cmd_ask(o, out);
    if (*eval) return cmd_eval(o, out);
    if (*corr) return cmd_correct(o, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const spdlog::spdlog_ex& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace sqlicl
