#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sqlicl/dataset.hpp"
#include "sqlicl/pipeline.hpp"
#include "sqlicl/schema.hpp"
#include "sqlicl/sql_ast.hpp"
#include "sqlicl/sqlite_db.hpp"

namespace sqlicl {

inline constexpr double kCellTolerance = 1e-6;
// SQLite virtual-machine steps allowed per query before it counts as failed.
inline constexpr std::uint64_t kDefaultStepBudget = 200'000'000;

// Numbers compare within tol relative to max(1, |a|, |b|), integers and reals
// alike; text compares exactly; NULL equals only NULL.
bool cells_equal(const Cell& a, const Cell& b, double tol = kCellTolerance);
// Multiset comparison unless ordered. Row width must agree.
bool results_match(std::vector<Row> pred, std::vector<Row> gold, bool ordered, double tol = kCellTolerance);
// True when the top-level query ends in ORDER BY.
bool has_top_level_order(const SqlAst& ast);

// Throws Error(kGoldExecution) when the gold query fails; a failing
// prediction is a mismatch.
bool execution_match(const std::string& pred, const std::string& gold, SqliteDb& db,
                     std::uint64_t step_budget = kDefaultStepBudget);

struct ExactMatch {
  bool match = false;
  bool syntax_error = false;  // either side failed to parse
};
// Component sets per SELECT: projection (with DISTINCT), FROM tables, ON
// conjuncts, WHERE conjuncts, GROUP BY, HAVING conjuncts, ORDER BY (ordered,
// with direction), LIMIT presence, and set operators. Literals, aliases and
// component order are ignored. Columns are resolved to their table through
// aliases and, when given, the schema.
ExactMatch exact_set_match(const std::string& pred, const std::string& gold, const DatabaseSchema* schema = nullptr);

// Best-effort error categories for a wrong prediction, in this order:
// syntax, schema (table set differs), column, aggregation, structure.
std::vector<std::string> error_tags(const std::string& pred, const std::string& gold);

// easy..extra from a Spider "hardness" field or the classifier over the gold
// SQL; BIRD rows keep their difficulty tag; "unknown" otherwise.
std::string hardness_label(const Example& ex, DatasetFormat format);

// Throws Error(kFormat) naming the row and db_id when a schema entry or a
// database file is missing.
void validate_dataset(const std::vector<Example>& data, const SchemaCatalog& schemas,
                      const std::filesystem::path& db_root);

struct InstanceRecord {
  std::size_t index = 0;
  std::string db_id;
  std::string question;
  std::string gold_sql;
  std::string hardness;
  std::string strategy;
  std::vector<std::uint32_t> demo_ids;
  std::optional<std::string> initial_sql;
  bool initial_fell_back = false;
  std::string prompt;
  std::string reply;
  std::string predicted_sql;  // extracted, before correction
  std::string final_sql;
  std::vector<std::string> applied_rules;
  bool prompt_correction_used = false;
  bool em = false;
  bool ex = false;
  bool em_syntax_error = false;
  bool skipped = false;  // gold failed to execute
  std::optional<std::string> error;
  std::optional<std::string> error_code;
  std::vector<std::string> error_tags;
  std::size_t llm_calls = 0;
  std::size_t prompt_tokens = 0;
  std::size_t reply_tokens = 0;
};

struct HardnessRow {
  std::string hardness;
  std::size_t count = 0;
  std::size_t scored = 0;
  std::size_t em = 0;
  std::size_t ex = 0;
};

struct EvalReport {
  std::size_t total = 0;
  std::size_t scored = 0;   // total minus skipped
  std::size_t skipped = 0;  // gold execution failures
  std::size_t failed = 0;   // pipeline errors, scored as wrong
  std::size_t em_correct = 0;
  std::size_t ex_correct = 0;
  std::size_t em_only = 0;  // EM without EX
  std::size_t ex_only = 0;  // EX without EM
  std::vector<HardnessRow> by_hardness;
  std::size_t llm_calls = 0;
  std::size_t prompt_tokens = 0;
  std::size_t reply_tokens = 0;
  std::vector<InstanceRecord> records;  // by index

  double em_accuracy() const { return scored ? static_cast<double>(em_correct) / scored : 0.0; }
  double ex_accuracy() const { return scored ? static_cast<double>(ex_correct) / scored : 0.0; }

  std::string to_json() const;  // canonical: byte-identical for identical records
  std::string summary_table() const;
};

std::string record_to_json_line(const InstanceRecord& r);
InstanceRecord record_from_json_line(const std::string& line);

EvalReport build_report(std::vector<InstanceRecord> records);

struct EvalOptions {
  DatasetFormat format = DatasetFormat::kSpider;
  std::filesystem::path db_root;
  // Line-delimited records. Existing lines for the same dataset are reused,
  // new ones are appended as instances finish.
  std::optional<std::filesystem::path> records_file;
  std::size_t workers = 1;
  std::uint64_t step_budget = kDefaultStepBudget;
};

// Runs every instance through the pipeline, or scores the gold SQL as the
// prediction when pipeline is null. Per-instance errors are recorded, never
// thrown. Throws Error(kFormat) from validate_dataset or for a records file
// that belongs to another dataset.
EvalReport evaluate(const std::vector<Example>& data, const SchemaCatalog& schemas, const Pipeline* pipeline,
                    const EvalOptions& opts);

}  // namespace sqlicl
