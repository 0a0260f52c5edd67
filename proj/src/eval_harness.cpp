#include "sqlicl/eval_harness.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "sql_text_util.hpp"
#include "sqlicl/demo_select.hpp"
#include "sqlicl/error.hpp"

namespace sqlicl {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// ---- result comparison -----------------------------------------------------

int cell_rank(const Cell& c) {
  if (std::holds_alternative<std::monostate>(c)) return 0;
  if (std::holds_alternative<std::string>(c)) return 2;
  return 1;
}

double as_double(const Cell& c) {
  if (const auto* i = std::get_if<std::int64_t>(&c)) return static_cast<double>(*i);
  return std::get<double>(c);
}

// Total order used to line up rows before the tolerant comparison.
bool cell_less(const Cell& a, const Cell& b) {
  const int ra = cell_rank(a), rb = cell_rank(b);
  if (ra != rb) return ra < rb;
  if (ra == 1) return as_double(a) < as_double(b);
  if (ra == 2) return std::get<std::string>(a) < std::get<std::string>(b);
  return false;
}

bool row_less(const Row& a, const Row& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), cell_less);
}

// ---- exact set match -------------------------------------------------------

struct Scope {
  std::map<std::string, std::string> alias_to_table;  // lowercased
  std::vector<std::string> tables;                     // lowercased base tables
  std::size_t sources = 0;
  const Scope* parent = nullptr;
};

class EmCanon {
 public:
  explicit EmCanon(const DatabaseSchema* schema) : schema_(schema) {}

  std::string query(const AstNode& q, const Scope* parent) {
    if (q.kind == NodeKind::kSetOp) {
      return "(" + detail::to_lower(q.text) + " " + query(q.children[0], parent) + " | " + query(q.children[1], parent) + ")";
    }
    return select(q, parent);
  }

 private:
  std::string select(const AstNode& sel, const Scope* parent) {
    Scope scope;
    scope.parent = parent;
    std::vector<std::string> from;
    std::vector<const AstNode*> on_conds;
    for (const AstNode& clause : sel.children) {
      if (clause.kind != NodeKind::kFrom) continue;
      for (std::size_t i = 0; i < clause.children.size(); ++i) {
        const AstNode& src = i == 0 ? clause.children[0] : clause.children[i].children[0];
        ++scope.sources;
        if (i > 0 && clause.children[i].children.size() > 1) on_conds.push_back(&clause.children[i].children[1].children[0]);
        if (src.kind == NodeKind::kTableRef) {
          const std::string t = detail::to_lower(src.text);
          scope.tables.push_back(t);
          scope.alias_to_table[t] = t;
          if (!src.alias.empty()) scope.alias_to_table[detail::to_lower(src.alias)] = t;
          from.push_back(t);
        } else {
          const std::string inner = "{" + query(src.children[0], &scope) + "}";
          if (!src.alias.empty()) scope.alias_to_table[detail::to_lower(src.alias)] = inner;
          from.push_back(inner);
        }
      }
    }
    std::string out = "select{";
    std::vector<std::string> proj, where, group, having, on, order;
    bool distinct = false, limit = false;
    for (const AstNode* c : on_conds) conjuncts(*c, scope, on);
    for (const AstNode& clause : sel.children) {
      switch (clause.kind) {
        case NodeKind::kProjection:
          distinct = clause.flag;
          for (const AstNode& item : clause.children) proj.push_back(expr(item, scope));
          break;
        case NodeKind::kWhere:
          conjuncts(clause.children[0], scope, where);
          break;
        case NodeKind::kGroupBy:
          for (const AstNode& e : clause.children) group.push_back(expr(e, scope));
          break;
        case NodeKind::kHaving:
          conjuncts(clause.children[0], scope, having);
          break;
        case NodeKind::kOrderBy:
          for (const AstNode& item : clause.children) {
            order.push_back(expr(item.children[0], scope) + (item.text == "DESC" ? " desc" : " asc"));
          }
          break;
        case NodeKind::kLimit:
          limit = true;
          break;
        default:
          break;
      }
    }
    out += std::string("distinct=") + (distinct ? "1" : "0");
    out += ";select=" + joined_sorted(proj);
    out += ";from=" + joined_sorted(from);
    out += ";on=" + joined_sorted(on);
    out += ";where=" + joined_sorted(where);
    out += ";group=" + joined_sorted(group);
    out += ";having=" + joined_sorted(having);
    out += ";order=";
    for (const auto& o : order) out += o + ",";
    out += std::string(";limit=") + (limit ? "1" : "0") + "}";
    return out;
  }

  static std::string joined_sorted(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    std::string s = "[";
    for (const auto& x : v) s += x + ",";
    return s + "]";
  }

  void conjuncts(const AstNode& cond, const Scope& scope, std::vector<std::string>& out) {
    if (cond.kind == NodeKind::kLogical && cond.text == "AND") {
      for (const AstNode& c : cond.children) conjuncts(c, scope, out);
      return;
    }
    out.push_back(expr(cond, scope));
  }

  std::string expr(const AstNode& node, const Scope& scope) {
    AstNode copy = node;
    rewrite(copy, scope);
    return detail::to_lower(render_expression(copy));
  }

  std::string resolve_table(const std::string& qualifier, const Scope& scope) {
    const std::string q = detail::to_lower(qualifier);
    for (const Scope* s = &scope; s; s = s->parent) {
      if (auto it = s->alias_to_table.find(q); it != s->alias_to_table.end()) return it->second;
    }
    return q;
  }

  std::string owner_of(const std::string& column, const Scope& scope) {
    for (const Scope* s = &scope; s; s = s->parent) {
      if (s->sources == 1 && s->tables.size() == 1) {
        if (!schema_ || schema_->find_column(s->tables[0], column)) return s->tables[0];
      }
      if (!schema_) continue;
      std::vector<std::string> owners;
      for (const auto& t : s->tables) {
        if (schema_->find_column(t, column) &&
            std::find(owners.begin(), owners.end(), t) == owners.end()) {
          owners.push_back(t);
        }
      }
      if (owners.size() == 1) return owners[0];
      if (owners.size() > 1) return "";
    }
    return "";
  }

  void rewrite(AstNode& n, const Scope& scope) {
    n.alias.clear();
    switch (n.kind) {
      case NodeKind::kColumn:
        n.qualifier = n.qualifier.empty() ? owner_of(n.text, scope) : resolve_table(n.qualifier, scope);
        n.text = detail::to_lower(n.text);
        return;
      case NodeKind::kStar:
        if (!n.qualifier.empty()) n.qualifier = resolve_table(n.qualifier, scope);
        return;
      case NodeKind::kLiteral:
        n.text = "value";
        n.literal_type = LiteralType::kString;
        n.double_quoted = false;
        return;
      case NodeKind::kSubquery: {
        AstNode placeholder;
        placeholder.kind = NodeKind::kColumn;
        placeholder.text = "<" + query(n.children[0], &scope) + ">";
        n = std::move(placeholder);
        return;
      }
      default:
        break;
    }
    for (AstNode& c : n.children) rewrite(c, scope);
    if (n.kind == NodeKind::kComparison && (n.text == "=" || n.text == "!=")) {
      if (render_expression(n.children[1]) < render_expression(n.children[0])) std::swap(n.children[0], n.children[1]);
    }
  }

  const DatabaseSchema* schema_;
};

// ---- error tags ------------------------------------------------------------

void collect_names(const AstNode& n, std::set<std::string>& tables, std::set<std::string>& columns,
                   std::multiset<std::string>& aggregates) {
  if (n.kind == NodeKind::kTableRef) tables.insert(detail::to_lower(n.text));
  if (n.kind == NodeKind::kColumn) columns.insert(detail::to_lower(n.text));
  if (n.kind == NodeKind::kFunction &&
      (n.text == "COUNT" || n.text == "SUM" || n.text == "AVG" || n.text == "MIN" || n.text == "MAX")) {
    aggregates.insert(n.text);
  }
  for (const AstNode& c : n.children) collect_names(c, tables, columns, aggregates);
}

// Label tree text with every aggregate spelled COUNT, so a different
// aggregate alone is not a structural difference.
std::string shape_without_aggregates(const SqlAst& ast) {
  std::string s = normalize_ast(ast).to_string();
  for (const char* agg : {"MIN", "MAX", "SUM", "AVG"}) {
    for (std::size_t pos = 0; (pos = s.find(agg, pos)) != std::string::npos;) {
      const bool start = pos == 0 || !std::isalpha(static_cast<unsigned char>(s[pos - 1]));
      const bool end = pos + 3 == s.size() || !std::isalpha(static_cast<unsigned char>(s[pos + 3]));
      if (start && end) {
        s.replace(pos, 3, "COUNT");
        pos += 5;
      } else {
        pos += 3;
      }
    }
  }
  return s;
}

// ---- records ----------------------------------------------------------------

ordered_json record_json(const InstanceRecord& r) {
  ordered_json j;
  j["index"] = r.index;
  j["db_id"] = r.db_id;
  j["question"] = r.question;
  j["gold_sql"] = r.gold_sql;
  j["hardness"] = r.hardness;
  j["strategy"] = r.strategy;
  j["demo_ids"] = r.demo_ids;
  j["initial_sql"] = r.initial_sql ? ordered_json(*r.initial_sql) : ordered_json(nullptr);
  j["initial_fell_back"] = r.initial_fell_back;
  j["prompt"] = r.prompt;
  j["reply"] = r.reply;
  j["predicted_sql"] = r.predicted_sql;
  j["final_sql"] = r.final_sql;
  j["applied_rules"] = r.applied_rules;
  j["prompt_correction_used"] = r.prompt_correction_used;
  j["em"] = r.em;
  j["ex"] = r.ex;
  j["em_syntax_error"] = r.em_syntax_error;
  j["skipped"] = r.skipped;
  j["error"] = r.error ? ordered_json(*r.error) : ordered_json(nullptr);
  j["error_code"] = r.error_code ? ordered_json(*r.error_code) : ordered_json(nullptr);
  j["error_tags"] = r.error_tags;
  j["llm_calls"] = r.llm_calls;
  j["prompt_tokens"] = r.prompt_tokens;
  j["reply_tokens"] = r.reply_tokens;
  return j;
}

std::optional<std::string> opt_string(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<std::string>();
}

int hardness_order(const std::string& h) {
  static const std::vector<std::string> order = {"easy", "medium", "hard", "extra", "simple", "moderate", "challenging"};
  const auto it = std::find(order.begin(), order.end(), h);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

std::string percent(std::size_t num, std::size_t den) {
  if (den == 0) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * static_cast<double>(num) / static_cast<double>(den));
  return buf;
}

}  // namespace

bool cells_equal(const Cell& a, const Cell& b, double tol) {
  const int ra = cell_rank(a), rb = cell_rank(b);
  if (ra != rb) return false;
  if (ra == 0) return true;
  if (ra == 2) return std::get<std::string>(a) == std::get<std::string>(b);
  const double x = as_double(a), y = as_double(b);
  if (x == y) return true;
  return std::fabs(x - y) <= tol * std::max({1.0, std::fabs(x), std::fabs(y)});
}

bool results_match(std::vector<Row> pred, std::vector<Row> gold, bool ordered, double tol) {
  if (pred.size() != gold.size()) return false;
  if (!ordered) {
    std::sort(pred.begin(), pred.end(), row_less);
    std::sort(gold.begin(), gold.end(), row_less);
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != gold[i].size()) return false;
    for (std::size_t j = 0; j < pred[i].size(); ++j) {
      if (!cells_equal(pred[i][j], gold[i][j], tol)) return false;
    }
  }
  return true;
}

bool has_top_level_order(const SqlAst& ast) {
  const AstNode* q = &ast.root;
  while (q->kind == NodeKind::kSetOp) q = &q->children[1];
  return std::any_of(q->children.begin(), q->children.end(),
                     [](const AstNode& c) { return c.kind == NodeKind::kOrderBy; });
}

bool execution_match(const std::string& pred, const std::string& gold, SqliteDb& db, std::uint64_t step_budget) {
  std::vector<Row> gold_rows;
  bool ordered = false;
  try {
    gold_rows = db.query(gold, step_budget);
  } catch (const Error& e) {
    throw Error(ErrorCode::kGoldExecution, std::string("gold query failed: ") + e.what());
  }
  try {
    ordered = has_top_level_order(parse_sql(gold));
  } catch (const SyntaxError&) {
    // Gold outside the parser's subset still executes; compare as a multiset.
  }
  std::vector<Row> pred_rows;
  try {
    pred_rows = db.query(pred, step_budget);
  } catch (const Error&) {
    return false;
  }
  return results_match(std::move(pred_rows), std::move(gold_rows), ordered);
}

ExactMatch exact_set_match(const std::string& pred, const std::string& gold, const DatabaseSchema* schema) {
  ExactMatch out;
  SqlAst p, g;
  try {
    p = parse_sql(pred);
    g = parse_sql(gold);
  } catch (const SyntaxError&) {
    out.syntax_error = true;
    return out;
  }
  EmCanon canon(schema);
  try {
    out.match = canon.query(p.root, nullptr) == canon.query(g.root, nullptr);
  } catch (const Error&) {
    out.syntax_error = true;
  }
  return out;
}

std::vector<std::string> error_tags(const std::string& pred, const std::string& gold) {
  SqlAst p, g;
  try {
    p = parse_sql(pred);
  } catch (const SyntaxError&) {
    return {"syntax"};
  }
  try {
    g = parse_sql(gold);
  } catch (const SyntaxError&) {
    return {};
  }
  std::set<std::string> pt, pc, gt, gc;
  std::multiset<std::string> pa, ga;
  collect_names(p.root, pt, pc, pa);
  collect_names(g.root, gt, gc, ga);
  std::vector<std::string> tags;
  if (pt != gt) tags.emplace_back("schema");
  if (pc != gc) tags.emplace_back("column");
  if (pa != ga) tags.emplace_back("aggregation");
  if (shape_without_aggregates(p) != shape_without_aggregates(g)) tags.emplace_back("structure");
  return tags;
}

std::string hardness_label(const Example& ex, DatasetFormat format) {
  if (ex.difficulty && !ex.difficulty->empty()) {
    if (format == DatasetFormat::kBird) return *ex.difficulty;
    if (auto h = parse_hardness(*ex.difficulty)) return std::string(hardness_name(*h));
  }
  if (format == DatasetFormat::kSpider) {
    try {
      return std::string(hardness_name(classify_hardness(parse_sql(ex.sql))));
    } catch (const SyntaxError&) {
    }
  }
  return "unknown";
}

void validate_dataset(const std::vector<Example>& data, const SchemaCatalog& schemas,
                      const std::filesystem::path& db_root) {
  std::set<std::string> checked;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::string& db = data[i].db_id;
    if (!checked.insert(db).second) continue;
    if (!schemas.find(db)) {
      throw Error(ErrorCode::kFormat, "row " + std::to_string(i) + ": db_id '" + db + "' has no schema entry");
    }
    const auto file = database_file(db_root, db);
    if (!std::filesystem::exists(file)) {
      throw Error(ErrorCode::kFormat,
                  "row " + std::to_string(i) + ": db_id '" + db + "' has no database file " + file.string());
    }
  }
}

std::string record_to_json_line(const InstanceRecord& r) { return record_json(r).dump(); }

InstanceRecord record_from_json_line(const std::string& line) {
  try {
    const json j = json::parse(line);
    InstanceRecord r;
    r.index = j.at("index").get<std::size_t>();
    r.db_id = j.at("db_id").get<std::string>();
    r.question = j.at("question").get<std::string>();
    r.gold_sql = j.at("gold_sql").get<std::string>();
    r.hardness = j.at("hardness").get<std::string>();
    r.strategy = j.at("strategy").get<std::string>();
    r.demo_ids = j.at("demo_ids").get<std::vector<std::uint32_t>>();
    r.initial_sql = opt_string(j, "initial_sql");
    r.initial_fell_back = j.at("initial_fell_back").get<bool>();
    r.prompt = j.at("prompt").get<std::string>();
    r.reply = j.at("reply").get<std::string>();
    r.predicted_sql = j.at("predicted_sql").get<std::string>();
    r.final_sql = j.at("final_sql").get<std::string>();
    r.applied_rules = j.at("applied_rules").get<std::vector<std::string>>();
    r.prompt_correction_used = j.at("prompt_correction_used").get<bool>();
    r.em = j.at("em").get<bool>();
    r.ex = j.at("ex").get<bool>();
    r.em_syntax_error = j.at("em_syntax_error").get<bool>();
    r.skipped = j.at("skipped").get<bool>();
    r.error = opt_string(j, "error");
    r.error_code = opt_string(j, "error_code");
    r.error_tags = j.at("error_tags").get<std::vector<std::string>>();
    r.llm_calls = j.at("llm_calls").get<std::size_t>();
    r.prompt_tokens = j.at("prompt_tokens").get<std::size_t>();
    r.reply_tokens = j.at("reply_tokens").get<std::size_t>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("bad instance record: ") + e.what());
  }
}

EvalReport build_report(std::vector<InstanceRecord> records) {
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
  EvalReport rep;
  std::map<std::string, HardnessRow> rows;
  for (const InstanceRecord& r : records) {
    ++rep.total;
    HardnessRow& row = rows[r.hardness];
    row.hardness = r.hardness;
    ++row.count;
    rep.llm_calls += r.llm_calls;
    rep.prompt_tokens += r.prompt_tokens;
    rep.reply_tokens += r.reply_tokens;
    if (r.skipped) {
      ++rep.skipped;
      continue;
    }
    ++rep.scored;
    ++row.scored;
    if (r.error) ++rep.failed;
    rep.em_correct += r.em;
    rep.ex_correct += r.ex;
    row.em += r.em;
    row.ex += r.ex;
    rep.em_only += r.em && !r.ex;
    rep.ex_only += r.ex && !r.em;
  }
  for (auto& [_, row] : rows) rep.by_hardness.push_back(row);
  std::sort(rep.by_hardness.begin(), rep.by_hardness.end(), [](const HardnessRow& a, const HardnessRow& b) {
    const int x = hardness_order(a.hardness), y = hardness_order(b.hardness);
    return x != y ? x < y : a.hardness < b.hardness;
  });
  rep.records = std::move(records);
  return rep;
}

std::string EvalReport::to_json() const {
  ordered_json j;
  j["total"] = total;
  j["scored"] = scored;
  j["skipped"] = skipped;
  j["failed"] = failed;
  j["em_correct"] = em_correct;
  j["ex_correct"] = ex_correct;
  j["em_accuracy"] = em_accuracy();
  j["ex_accuracy"] = ex_accuracy();
  j["em_only"] = em_only;
  j["ex_only"] = ex_only;
  ordered_json rows = ordered_json::array();
  for (const HardnessRow& r : by_hardness) {
    rows.push_back({{"hardness", r.hardness},
                    {"count", r.count},
                    {"scored", r.scored},
                    {"em", r.em},
                    {"ex", r.ex},
                    {"em_accuracy", r.scored ? static_cast<double>(r.em) / r.scored : 0.0},
                    {"ex_accuracy", r.scored ? static_cast<double>(r.ex) / r.scored : 0.0}});
  }
  j["by_hardness"] = rows;
  j["tokens"] = {{"llm_calls", llm_calls}, {"prompt", prompt_tokens}, {"reply", reply_tokens}};
  j["error_tags_note"] = "error tags are heuristic and best-effort";
  ordered_json recs = ordered_json::array();
  for (const InstanceRecord& r : records) recs.push_back(record_json(r));
  j["records"] = recs;
  return j.dump(2) + "\n";
}

std::string EvalReport::summary_table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %7s %7s %7s\n", "hardness", "count", "EX", "EM");
  out << line;
  for (const HardnessRow& r : by_hardness) {
    std::snprintf(line, sizeof line, "%-12s %7zu %7s %7s\n", r.hardness.c_str(), r.count,
                  percent(r.ex, r.scored).c_str(), percent(r.em, r.scored).c_str());
    out << line;
  }
  std::snprintf(line, sizeof line, "%-12s %7zu %7s %7s\n", "all", total, percent(ex_correct, scored).c_str(),
                percent(em_correct, scored).c_str());
  out << line;
  out << "skipped (gold failed): " << skipped << ", pipeline errors: " << failed << ", EX-only: " << ex_only
      << ", EM-only: " << em_only << "\n";
  out << "LLM calls: " << llm_calls << ", prompt tokens: " << prompt_tokens << ", reply tokens: " << reply_tokens
      << "\n";
  return out.str();
}

EvalReport evaluate(const std::vector<Example>& data, const SchemaCatalog& schemas, const Pipeline* pipeline,
                    const EvalOptions& opts) {
  validate_dataset(data, schemas, opts.db_root);

  std::map<std::size_t, InstanceRecord> done;
  if (opts.records_file && std::filesystem::exists(*opts.records_file)) {
    std::ifstream in(*opts.records_file);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      InstanceRecord r = record_from_json_line(line);
      if (r.index >= data.size() || data[r.index].question != r.question || data[r.index].db_id != r.db_id) {
        throw Error(ErrorCode::kFormat, opts.records_file->string() + " holds records of a different dataset");
      }
      done[r.index] = std::move(r);
    }
    if (!done.empty()) spdlog::info("resuming: {} of {} instances already recorded", done.size(), data.size());
  }
  std::ofstream sink;
  if (opts.records_file) {
    if (opts.records_file->has_parent_path()) std::filesystem::create_directories(opts.records_file->parent_path());
    sink.open(*opts.records_file, std::ios::app);
    if (!sink) throw Error(ErrorCode::kIo, "cannot open " + opts.records_file->string());
  }

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!done.count(i)) todo.push_back(i);
  }
  std::vector<InstanceRecord> fresh(todo.size());
  std::mutex sink_mu;
  std::atomic<std::size_t> next{0};

  auto run_one = [&](std::size_t i, std::map<std::string, SqliteDb>& dbs) {
    const Example& ex = data[i];
    InstanceRecord r;
    r.index = i;
    r.db_id = ex.db_id;
    r.question = ex.question;
    r.gold_sql = ex.sql;
    r.hardness = hardness_label(ex, opts.format);
    std::optional<Hardness> label;
    if (ex.difficulty) label = parse_hardness(*ex.difficulty);
    try {
      if (pipeline) {
        r.strategy = std::string(strategy_name(pipeline->config().strategy));
        AskRequest req{ex.question, ex.db_id, std::nullopt, label};
        if (opts.format == DatasetFormat::kBird) req.evidence = ex.evidence;
        const AskResult a = pipeline->ask(req);
        r.strategy = std::string(strategy_name(a.strategy_used));
        r.demo_ids = a.demo_ids;
        r.initial_sql = a.initial_sql;
        r.initial_fell_back = a.initial_fell_back;
        r.prompt = a.prompt;
        r.reply = a.reply;
        r.predicted_sql = a.extracted.value_or("");
        r.final_sql = a.sql;
        if (a.correction) {
          r.applied_rules = a.correction->applied_rules;
          r.prompt_correction_used = a.correction->prompt_correction_used;
        }
        r.llm_calls = a.llm_calls;
        r.prompt_tokens = a.usage.prompt_tokens;
        r.reply_tokens = a.usage.reply_tokens;
      } else {
        r.strategy = "gold";
        r.predicted_sql = ex.sql;
        r.final_sql = ex.sql;
      }
    } catch (const Error& e) {
      r.error = e.what();
      r.error_code = std::string(error_code_name(e.code()));
    }
    auto it = dbs.find(ex.db_id);
    if (it == dbs.end()) {
      it = dbs.emplace(ex.db_id, SqliteDb::open_readonly(database_file(opts.db_root, ex.db_id))).first;
    }
    try {
      r.ex = !r.error && execution_match(r.final_sql, ex.sql, it->second, opts.step_budget);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kGoldExecution) throw;
      r.skipped = true;
      if (!r.error) {
        r.error = e.what();
        r.error_code = std::string(error_code_name(e.code()));
      }
    }
    if (!r.error) {
      const ExactMatch em = exact_set_match(r.final_sql, ex.sql, schemas.find(ex.db_id));
      r.em = em.match;
      r.em_syntax_error = em.syntax_error;
    }
    if (!r.skipped && !r.ex && !r.error) r.error_tags = error_tags(r.final_sql, ex.sql);
    return r;
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(opts.workers, todo.size()));
  std::vector<std::thread> threads;
  std::exception_ptr failure;
  std::mutex failure_mu;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      std::map<std::string, SqliteDb> dbs;
      for (std::size_t slot; (slot = next++) < todo.size();) {
        try {
          fresh[slot] = run_one(todo[slot], dbs);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
          return;
        }
        if (sink.is_open()) {
          std::lock_guard lock(sink_mu);
          sink << record_to_json_line(fresh[slot]) << "\n";
          sink.flush();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<InstanceRecord> all;
  all.reserve(data.size());
  for (auto& [_, r] : done) all.push_back(std::move(r));
  for (auto& r : fresh) all.push_back(std::move(r));
  return build_report(std::move(all));
}

}  // namespace sqlicl
