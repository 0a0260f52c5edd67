#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqlicl/demo_select.hpp"
#include "sqlicl/llm_client.hpp"
#include "sqlicl/prompting.hpp"
#include "sqlicl/schema.hpp"

namespace sqlicl {

inline constexpr std::size_t kDefaultValueSample = 10000;
inline constexpr double kSchemaMatchThreshold = 0.5;

// Schema plus the distinct text values stored in each column.
class DbContext {
 public:
  DbContext() = default;
  explicit DbContext(DatabaseSchema schema) : schema_(std::move(schema)) {}

  // Reads up to per_column distinct text values per column, smallest first.
  // Throws Error(kIo) when the file cannot be opened.
  static DbContext load(const std::filesystem::path& db_file, DatabaseSchema schema,
                        std::size_t per_column = kDefaultValueSample);

  const DatabaseSchema& schema() const { return schema_; }
  // Sorted values, or nullptr for an unknown column. Lookup ignores case.
  const std::vector<std::string>* values(std::string_view table, std::string_view column) const;
  void set_values(std::string_view table, std::string_view column, std::vector<std::string> values);

 private:
  DatabaseSchema schema_;
  std::map<std::string, std::vector<std::string>, std::less<>> values_;  // "table\0column", lowercased
};

struct FixResult {
  std::string sql;  // the input verbatim unless applied
  bool applied = false;
  std::vector<std::string> notes;
};

// The four rule-based fixers. Each takes SQL text, returns its canonical
// rendering when it changed something and the input verbatim otherwise, so
// applying one twice equals applying it once. Unparseable input is returned
// unchanged with a note.

// String literals compared with a column (=, !=, <>, IN) that are absent from
// the column's values but equal one of them ignoring case and runs of
// whitespace are replaced by the stored value.
FixResult fix_string_format(const std::string& sql, const DbContext& ctx);
// Unknown tables and columns are renamed to the most similar schema name (see
// name_similarity), ties by shorter name then lexicographic. When any unknown
// name has no candidate at or above the threshold nothing is changed and the
// name is reported in the notes.
FixResult fix_schema_mismatch(const std::string& sql, const DbContext& ctx);
// MIN/MAX over a text column is unwrapped; COUNT with several arguments keeps
// the first column, or becomes COUNT(*) when that argument is not a column.
FixResult fix_invalid_aggregation(const std::string& sql, const DbContext& ctx);
// Column equalities in ON that are not a declared foreign key are replaced by
// a foreign key between the same two tables, or dropped when there is none.
// A database without any declared foreign key is left alone.
FixResult fix_join_condition(const std::string& sql, const DbContext& ctx);

// Normalized Levenshtein similarity in [0, 1]: the larger of the character
// level and the '_'/space token level score over lowercased names.
double name_similarity(std::string_view a, std::string_view b);

inline constexpr std::string_view kGuidelineJoin = "join";
inline constexpr std::string_view kGuidelineOrder = "order";
inline constexpr std::string_view kGuidelineConjunction = "conjunction";

// Tab-separated id and text per line; '#' starts a comment line.
class GuidelineCatalog {
 public:
  // Throws Error(kFormat) for a malformed line or a missing built-in id,
  // Error(kIo) when unreadable.
  static GuidelineCatalog load(const std::filesystem::path& file);
  static GuidelineCatalog parse(std::string_view text, const std::string& origin = "guidelines");

  const std::string& text(std::string_view id) const;
  bool contains(std::string_view id) const;

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

struct GuidelineInput {
  std::string question;
  std::vector<std::string> demo_sqls;
};

// Guideline ids in catalog order: join when a multi-table FROM only uses one
// source outside its ON conditions; order on ORDER BY or a superlative word
// in the question; conjunction when a demonstration uses a set operator.
std::vector<std::string> select_guidelines(const SqlAst* sql, const DatabaseSchema& schema, const GuidelineInput& in);

// True when some demonstration joins more than two tables or uses a set
// operator.
bool demos_look_complex(const std::vector<std::string>& demo_sqls);

struct CorrectionResources {
  PromptTemplate correction_template{""};
  GuidelineCatalog guidelines;

  // correction.tmpl and guidelines.tsv under dir.
  static CorrectionResources load(const std::filesystem::path& dir);
};

struct PromptCorrection {
  std::string sql;  // corrected, or the original when the reply held no SQL
  std::string prompt;
  std::string reply;
  bool reply_usable = false;
  Usage usage;
};

// One rewrite round with the LLM. Provider errors propagate.
PromptCorrection prompt_correct(const std::string& sql, const DbContext& ctx, const std::string& question,
                                const std::optional<std::string>& evidence,
                                const std::vector<std::string>& guideline_texts, const PromptTemplate& tmpl,
                                LlmClient& llm);

struct CorrectionRequest {
  std::string question;
  std::optional<std::string> evidence;
  std::optional<Hardness> hardness;  // known label or the classifier's guess
  std::vector<std::string> demo_sqls;
};

struct CorrectionOutcome {
  std::string original;
  std::string corrected;
  bool original_parses = false;
  std::vector<std::string> applied_rules;
  bool prompt_correction_used = false;
  std::vector<std::string> guidelines_used;
  std::optional<PromptCorrection> prompt;
  std::optional<std::string> prompt_error;  // provider failure during the prompt pass
  std::optional<ErrorCode> prompt_error_code;
  std::vector<std::string> trail;
};

// Rules first in the order string format, schema mismatch, invalid
// aggregation, join condition, repeated until none changes the query (at most
// four rounds); applied_rules lists each rule once, by first firing. If any fired the prompt pass is skipped.
// Otherwise it runs for hard and extra instances, or without a hardness label
// when the demonstrations look complex. Unparseable SQL goes straight to the
// prompt pass. Without an llm the prompt pass is recorded as skipped. Never
// throws for provider errors; the original is kept instead.
CorrectionOutcome correct(const std::string& sql, const DbContext& ctx, const CorrectionRequest& req,
                          const CorrectionResources& res, LlmClient* llm);

}  // namespace sqlicl
