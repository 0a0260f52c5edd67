#include "sqlicl/error_correct.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <functional>
#include <set>
#include <sstream>

#include "sql_text_util.hpp"
#include "sqlicl/error.hpp"
#include "sqlicl/sql_ast.hpp"
#include "sqlicl/sql_scope.hpp"
#include "sqlicl/sqlite_db.hpp"
#include "text_file.hpp"

namespace sqlicl {

namespace {

std::string value_key(std::string_view table, std::string_view column) {
  return detail::to_lower(table) + '\0' + detail::to_lower(column);
}

std::string quote_sqlite_name(std::string_view name) {
  std::string out = "\"";
  for (char c : name) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

// Lowercase with whitespace runs collapsed to one space and trimmed.
std::string fold_value(std::string_view s) {
  std::string out;
  bool space = false;
  for (char ch : detail::trim(s)) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      space = true;
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

template <typename Seq>
std::size_t levenshtein(const Seq& a, const Seq& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<std::string> name_tokens(std::string_view name) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : name) {
    if (c == '_' || std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double normalized(std::size_t distance, std::size_t a, std::size_t b) {
  const std::size_t m = std::max(a, b);
  return m == 0 ? 1.0 : 1.0 - static_cast<double>(distance) / static_cast<double>(m);
}

// ---------------------------------------------------------------------------
// Traversal helpers. A select's local expressions are its clauses other than
// FROM plus the ON conditions of its joins; subqueries are not entered.

std::vector<AstNode*> local_roots(AstNode& select) {
  std::vector<AstNode*> roots;
  for (AstNode& clause : select.children) {
    if (clause.kind != NodeKind::kFrom) {
      roots.push_back(&clause);
      continue;
    }
    for (AstNode& child : clause.children) {
      if (child.kind == NodeKind::kJoin && child.children.size() > 1) roots.push_back(&child.children[1]);
    }
  }
  return roots;
}

void visit_local(AstNode& node, const std::function<void(AstNode&)>& fn) {
  fn(node);
  if (node.kind == NodeKind::kSubquery) return;
  for (AstNode& c : node.children) visit_local(c, fn);
}

void visit_local_select(AstNode& select, const std::function<void(AstNode&)>& fn) {
  for (AstNode* root : local_roots(select)) visit_local(*root, fn);
}

void collect_subqueries(AstNode& node, std::vector<AstNode*>& out) {
  if (node.kind == NodeKind::kSubquery) {
    out.push_back(&node.children[0]);
    return;
  }
  for (AstNode& c : node.children) collect_subqueries(c, out);
}

using SelectFn = std::function<void(AstNode& select, const SqlScope& scope)>;

// Calls fn for every SELECT core, innermost first, with its scope alive.
void for_each_select(AstNode& q, const SqlScope* outer, const DatabaseSchema& schema, const SelectFn& fn) {
  if (q.kind == NodeKind::kSetOp) {
    for_each_select(q.children[0], outer, schema, fn);
    for_each_select(q.children[1], outer, schema, fn);
    return;
  }
  const SqlScope scope(q, outer, &schema);
  for (AstNode& clause : q.children) {
    if (clause.kind != NodeKind::kFrom) continue;
    for (AstNode& child : clause.children) {
      AstNode& src = child.kind == NodeKind::kJoin ? child.children[0] : child;
      if (src.kind == NodeKind::kDerivedTable) for_each_select(src.children[0], outer, schema, fn);
    }
  }
  std::vector<AstNode*> nested;
  for (AstNode* root : local_roots(q)) collect_subqueries(*root, nested);
  for (AstNode* sub : nested) for_each_select(*sub, &scope, schema, fn);
  fn(q, scope);
}

std::optional<ResolvedColumn> try_resolve(const SqlScope& scope, const AstNode& column) {
  try {
    return scope.resolve(column);
  } catch (const Error&) {
    return std::nullopt;
  }
}

// Column of a real schema table, or nullptr.
const Column* schema_column(const DatabaseSchema& schema, const SqlScope& scope, const AstNode& col,
                            std::string* table_out = nullptr) {
  const auto r = try_resolve(scope, col);
  if (!r || r->table.empty()) return nullptr;
  const Column* c = schema.find_column(r->table, r->column);
  if (c && table_out) *table_out = schema.find_table(r->table)->name;
  return c;
}

bool source_owns(const DatabaseSchema& schema, const ScopeSource& s, std::string_view column) {
  if (s.table.empty()) {
    return std::any_of(s.derived_columns.begin(), s.derived_columns.end(),
                       [&](const std::string& n) { return detail::iequals(n, column); });
  }
  return schema.find_column(s.table, column) != nullptr;
}

bool column_known(const DatabaseSchema& schema, const SqlScope& scope, const AstNode& col) {
  if (!col.qualifier.empty()) {
    const ScopeSource* s = scope.find_source(col.qualifier);
    return s && source_owns(schema, *s, col.text);
  }
  for (const SqlScope* sc = &scope; sc; sc = sc->outer()) {
    for (const ScopeSource& s : sc->sources()) {
      if (source_owns(schema, s, col.text)) return true;
    }
  }
  // Projection aliases resolve to nullopt before any error is raised.
  try {
    return !scope.resolve(col).has_value();
  } catch (const Error&) {
    return false;
  }
}

std::string source_qualifier(const ScopeSource& s) { return s.alias.empty() ? s.table : s.alias; }

FixResult unchanged(const std::string& sql, std::string note = {}) {
  FixResult r{sql, false, {}};
  if (!note.empty()) r.notes.push_back(std::move(note));
  return r;
}

template <typename Body>
FixResult run_fixer(const std::string& sql, const char* name, Body body) {
  SqlAst ast;
  try {
    ast = parse_sql(sql);
  } catch (const SyntaxError&) {
    return unchanged(sql, std::string(name) + ": input does not parse");
  }
  FixResult r;
  try {
    r = body(ast);
  } catch (const Error& e) {
    return unchanged(sql, std::string(name) + ": skipped, " + e.what());
  }
  if (!r.applied) {
    r.sql = sql;
    return r;
  }
  r.sql = render_sql(ast);
  return r;
}

// ---------------------------------------------------------------------------
// Schema mismatch.

struct NameCandidate {
  std::string name;
  double score = 0;
  std::size_t order = 0;  // source order, for qualifying duplicates
  const ScopeSource* source = nullptr;
};

bool better(const NameCandidate& a, const NameCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.name.size() != b.name.size()) return a.name.size() < b.name.size();
  const std::string la = detail::to_lower(a.name), lb = detail::to_lower(b.name);
  if (la != lb) return la < lb;
  if (a.name != b.name) return a.name < b.name;
  return a.order < b.order;
}

// The unknown name itself and, when it starts with the table's name, the
// rest of it ("singer_name" in singer -> "name").
double column_score(std::string_view unknown, std::string_view candidate, std::string_view table) {
  double best = name_similarity(unknown, candidate);
  const std::string u = detail::to_lower(unknown);
  std::string t = detail::to_lower(table);
  for (int pass = 0; pass < 2; ++pass) {
    if (!t.empty() && u.size() > t.size() + 1 && u.compare(0, t.size(), t) == 0 && u[t.size()] == '_') {
      best = std::max(best, name_similarity(u.substr(t.size() + 1), candidate));
    }
    if (t.size() > 1 && t.back() == 's') t.pop_back();
    else break;
  }
  return best;
}

std::optional<NameCandidate> best_candidate(std::vector<NameCandidate> cands) {
  if (cands.empty()) return std::nullopt;
  const auto it = std::min_element(cands.begin(), cands.end(), better);
  if (it->score < kSchemaMatchThreshold) return std::nullopt;
  return *it;
}

// ---------------------------------------------------------------------------
// Join condition.

void split_and(AstNode& cond, std::vector<AstNode*>& out) {
  if (cond.kind == NodeKind::kLogical && cond.text == "AND") {
    for (AstNode& c : cond.children) split_and(c, out);
    return;
  }
  out.push_back(&cond);
}

bool is_fk_pair(const DatabaseSchema& schema, std::string_view t1, std::string_view c1, std::string_view t2,
                std::string_view c2) {
  for (const ForeignKey& fk : schema.foreign_keys) {
    if (detail::iequals(fk.table, t1) && detail::iequals(fk.column, c1) && detail::iequals(fk.ref_table, t2) &&
        detail::iequals(fk.ref_column, c2)) {
      return true;
    }
    if (detail::iequals(fk.table, t2) && detail::iequals(fk.column, c2) && detail::iequals(fk.ref_table, t1) &&
        detail::iequals(fk.ref_column, c1)) {
      return true;
    }
  }
  return false;
}

// Column of t1 and column of t2 forming the first declared key between them.
std::optional<std::pair<std::string, std::string>> fk_between(const DatabaseSchema& schema, std::string_view t1,
                                                              std::string_view t2) {
  for (const ForeignKey& fk : schema.foreign_keys) {
    if (detail::iequals(fk.table, t1) && detail::iequals(fk.ref_table, t2)) return std::pair{fk.column, fk.ref_column};
    if (detail::iequals(fk.table, t2) && detail::iequals(fk.ref_table, t1)) return std::pair{fk.ref_column, fk.column};
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Guidelines.

constexpr std::array<std::string_view, 26> kSuperlatives = {
    "most",     "least",    "highest",  "lowest",  "largest", "smallest", "biggest",  "oldest",   "youngest",
    "maximum",  "minimum",  "top",      "best",    "worst",   "greatest", "fewest",   "longest",  "shortest",
    "earliest", "latest",   "newest",   "heaviest", "lightest", "cheapest", "max",      "min",
};

bool has_superlative(std::string_view question) {
  for (const std::string& tok : question_tokens(question)) {
    if (std::find(kSuperlatives.begin(), kSuperlatives.end(), tok) != kSuperlatives.end()) return true;
  }
  return false;
}

bool contains_kind(const AstNode& n, NodeKind kind) {
  if (n.kind == kind) return true;
  return std::any_of(n.children.begin(), n.children.end(), [&](const AstNode& c) { return contains_kind(c, kind); });
}

std::size_t max_from_units(const AstNode& n) {
  std::size_t best = 0;
  if (n.kind == NodeKind::kFrom) best = n.children.size();
  for (const AstNode& c : n.children) best = std::max(best, max_from_units(c));
  return best;
}

// A SELECT core with several FROM sources whose columns outside ON all come
// from one of them.
bool has_unneeded_join(AstNode& root, const DatabaseSchema& schema) {
  bool found = false;
  for_each_select(root, nullptr, schema, [&](AstNode& select, const SqlScope& scope) {
    if (found || scope.sources().size() < 2) return;
    std::set<const ScopeSource*> used;
    bool unresolved = false;
    for (AstNode& clause : select.children) {
      if (clause.kind == NodeKind::kFrom) continue;
      visit_local(clause, [&](AstNode& n) {
        if (n.kind == NodeKind::kColumn) {
          // nullopt is a projection alias (or an unresolvable name) and does not count.
          const auto r = try_resolve(scope, n);
          if (r && r->source) used.insert(r->source);
          if (r && !r->source) unresolved = true;
        } else if (n.kind == NodeKind::kStar && !n.qualifier.empty()) {
          if (const ScopeSource* s = scope.find_source(n.qualifier)) used.insert(s);
        }
      });
    }
    const bool local = std::all_of(used.begin(), used.end(), [&](const ScopeSource* s) {
      return std::any_of(scope.sources().begin(), scope.sources().end(), [&](const ScopeSource& o) { return &o == s; });
    });
    found = !unresolved && local && used.size() == 1;
  });
  return found;
}

std::string bullet_list(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : "\n") + std::string("- ") + s;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

DbContext DbContext::load(const std::filesystem::path& db_file, DatabaseSchema schema, std::size_t per_column) {
  DbContext ctx(std::move(schema));
  SqliteDb db = SqliteDb::open_readonly(db_file);
  for (const Table& t : ctx.schema_.tables) {
    for (const Column& c : t.columns) {
      const std::string col = quote_sqlite_name(c.name);
      std::vector<std::string> vals;
      try {
        for (const Row& row : db.query("SELECT DISTINCT " + col + " FROM " + quote_sqlite_name(t.name) + " WHERE typeof(" +
                                       col + ") = 'text' ORDER BY 1 LIMIT " + std::to_string(per_column))) {
          vals.push_back(std::get<std::string>(row[0]));
        }
      } catch (const Error& e) {
        // Metadata naming a column the file lacks: no values for it.
        spdlog::warn("{}: no values for {}.{}: {}", ctx.schema_.db_id, t.name, c.name, e.what());
      }
      ctx.values_[value_key(t.name, c.name)] = std::move(vals);
    }
  }
  return ctx;
}

const std::vector<std::string>* DbContext::values(std::string_view table, std::string_view column) const {
  auto it = values_.find(value_key(table, column));
  return it == values_.end() ? nullptr : &it->second;
}

void DbContext::set_values(std::string_view table, std::string_view column, std::vector<std::string> values) {
  std::sort(values.begin(), values.end());
  values_[value_key(table, column)] = std::move(values);
}

double name_similarity(std::string_view a, std::string_view b) {
  const std::string la = detail::to_lower(a), lb = detail::to_lower(b);
  const double chars = normalized(levenshtein(la, lb), la.size(), lb.size());
  const auto ta = name_tokens(a), tb = name_tokens(b);
  const double tokens = normalized(levenshtein(ta, tb), ta.size(), tb.size());
  return std::max(chars, tokens);
}

FixResult fix_string_format(const std::string& sql, const DbContext& ctx) {
  return run_fixer(sql, "string_format", [&](SqlAst& ast) {
    FixResult r;
    for_each_select(ast.root, nullptr, ctx.schema(), [&](AstNode& select, const SqlScope& scope) {
      auto align = [&](const AstNode& col, AstNode& lit) {
        if (col.kind != NodeKind::kColumn || lit.kind != NodeKind::kLiteral || lit.literal_type != LiteralType::kString) {
          return;
        }
        std::string table;
        const Column* c = schema_column(ctx.schema(), scope, col, &table);
        if (!c) return;
        const std::vector<std::string>* vals = ctx.values(table, c->name);
        if (!vals || std::binary_search(vals->begin(), vals->end(), lit.text)) return;
        const std::string folded = fold_value(lit.text);
        for (const std::string& v : *vals) {
          if (fold_value(v) == folded) {
            r.notes.push_back("string_format: '" + lit.text + "' -> '" + v + "' (" + table + "." + c->name + ")");
            lit.text = v;
            r.applied = true;
            return;
          }
        }
      };
      visit_local_select(select, [&](AstNode& n) {
        if (n.kind == NodeKind::kComparison && (n.text == "=" || n.text == "!=" || n.text == "<>")) {
          align(n.children[0], n.children[1]);
          align(n.children[1], n.children[0]);
        } else if (n.kind == NodeKind::kIn) {
          for (std::size_t i = 1; i < n.children.size(); ++i) align(n.children[0], n.children[i]);
        }
      });
    });
    return r;
  });
}

FixResult fix_schema_mismatch(const std::string& sql, const DbContext& ctx) {
  const DatabaseSchema& schema = ctx.schema();
  return run_fixer(sql, "schema_mismatch", [&](SqlAst& ast) {
    FixResult r;
    std::vector<std::string> flagged;

    // Tables first, so columns resolve against the corrected names.
    std::vector<std::pair<std::string, std::string>> renamed;  // old, new (unaliased refs)
    std::function<void(AstNode&)> tables = [&](AstNode& n) {
      if (n.kind == NodeKind::kTableRef && !schema.find_table(n.text)) {
        std::vector<NameCandidate> cands;
        for (const Table& t : schema.tables) cands.push_back({t.name, name_similarity(n.text, t.name)});
        if (auto best = best_candidate(std::move(cands))) {
          r.notes.push_back("schema_mismatch: table " + n.text + " -> " + best->name);
          if (n.alias.empty()) renamed.emplace_back(n.text, best->name);
          n.text = best->name;
          r.applied = true;
        } else {
          flagged.push_back("table " + n.text);
        }
      }
      for (AstNode& c : n.children) tables(c);
    };
    tables(ast.root);
    if (!renamed.empty()) {
      std::function<void(AstNode&)> requalify = [&](AstNode& n) {
        if ((n.kind == NodeKind::kColumn || n.kind == NodeKind::kStar) && !n.qualifier.empty()) {
          for (const auto& [from, to] : renamed) {
            if (detail::iequals(n.qualifier, from)) n.qualifier = to;
          }
        }
        for (AstNode& c : n.children) requalify(c);
      };
      requalify(ast.root);
    }

    struct Rename {
      AstNode* node;
      std::string column;
      std::string qualifier;
    };
    std::vector<Rename> edits;
    for_each_select(ast.root, nullptr, schema, [&](AstNode& select, const SqlScope& scope) {
      visit_local_select(select, [&](AstNode& n) {
        if (n.kind != NodeKind::kColumn || column_known(schema, scope, n)) return;
        std::vector<NameCandidate> cands;
        auto add_source = [&](const ScopeSource& s, std::size_t order) {
          if (s.table.empty()) {
            for (const auto& name : s.derived_columns) {
              if (!name.empty()) cands.push_back({name, name_similarity(n.text, name), order, &s});
            }
          } else if (const Table* t = schema.find_table(s.table)) {
            for (const Column& c : t->columns) cands.push_back({c.name, column_score(n.text, c.name, t->name), order, &s});
          }
        };
        if (!n.qualifier.empty()) {
          const ScopeSource* s = scope.find_source(n.qualifier);
          if (!s) {
            flagged.push_back("qualifier " + n.qualifier);
            return;
          }
          add_source(*s, 0);
        } else {
          // Innermost scope with sources.
          for (const SqlScope* sc = &scope; sc && cands.empty(); sc = sc->outer()) {
            for (std::size_t i = 0; i < sc->sources().size(); ++i) add_source(sc->sources()[i], i);
          }
        }
        const auto best = best_candidate(std::move(cands));
        if (!best) {
          flagged.push_back("column " + (n.qualifier.empty() ? "" : n.qualifier + ".") + n.text);
          return;
        }
        std::string qualifier = n.qualifier;
        if (qualifier.empty()) {
          std::size_t owners = 0;
          for (const ScopeSource& s : scope.sources()) owners += source_owns(schema, s, best->name);
          if (owners > 1) qualifier = source_qualifier(*best->source);
        }
        edits.push_back({&n, best->name, qualifier});
      });
    });
    if (!flagged.empty()) {
      FixResult none;
      for (const auto& f : flagged) none.notes.push_back("schema_mismatch: no similar name for " + f);
      return none;
    }
    for (const Rename& e : edits) {
      r.notes.push_back("schema_mismatch: column " + e.node->text + " -> " + e.column);
      e.node->text = e.column;
      e.node->qualifier = e.qualifier;
      r.applied = true;
    }
    return r;
  });
}

FixResult fix_invalid_aggregation(const std::string& sql, const DbContext& ctx) {
  return run_fixer(sql, "invalid_aggregation", [&](SqlAst& ast) {
    FixResult r;
    for_each_select(ast.root, nullptr, ctx.schema(), [&](AstNode& select, const SqlScope& scope) {
      std::vector<AstNode*> unwrap;
      visit_local_select(select, [&](AstNode& n) {
        if (n.kind != NodeKind::kFunction) return;
        if ((n.text == "MIN" || n.text == "MAX") && n.children.size() == 1 && n.children[0].kind == NodeKind::kColumn) {
          const Column* c = schema_column(ctx.schema(), scope, n.children[0]);
          if (c && c->value_type() == ValueType::kText) unwrap.push_back(&n);
        } else if (n.text == "COUNT" && n.children.size() > 1) {
          const AstNode& first = n.children[0];
          const bool keep = first.kind == NodeKind::kColumn || first.kind == NodeKind::kStar;
          r.notes.push_back("invalid_aggregation: COUNT over " + std::to_string(n.children.size()) + " arguments");
          if (keep) {
            n.children.resize(1);
          } else {
            AstNode star;
            star.kind = NodeKind::kStar;
            n.children.assign(1, std::move(star));
            n.flag = false;
          }
          r.applied = true;
        }
      });
      // Unwrapped nodes never nest: their argument is a bare column.
      for (AstNode* n : unwrap) {
        r.notes.push_back("invalid_aggregation: " + n->text + " over text column " + n->children[0].text + " removed");
        AstNode arg = std::move(n->children[0]);
        arg.alias = n->alias;
        *n = std::move(arg);
        r.applied = true;
      }
    });
    return r;
  });
}

FixResult fix_join_condition(const std::string& sql, const DbContext& ctx) {
  const DatabaseSchema& schema = ctx.schema();
  if (schema.foreign_keys.empty()) return unchanged(sql, "join_condition: database declares no foreign keys");
  return run_fixer(sql, "join_condition", [&](SqlAst& ast) {
    FixResult r;
    for_each_select(ast.root, nullptr, schema, [&](AstNode& select, const SqlScope& scope) {
      for (AstNode& clause : select.children) {
        if (clause.kind != NodeKind::kFrom) continue;
        for (AstNode& join : clause.children) {
          if (join.kind != NodeKind::kJoin || join.children.size() < 2) continue;
          AstNode& on = join.children[1];
          std::vector<AstNode*> conjuncts;
          split_and(on.children[0], conjuncts);
          std::vector<const AstNode*> drop;
          // Source pairs already joined on a declared key in this ON.
          std::set<std::pair<const ScopeSource*, const ScopeSource*>> keyed;
          auto pair_of = [](const ScopeSource* x, const ScopeSource* y) { return x < y ? std::pair{x, y} : std::pair{y, x}; };
          for (AstNode* c : conjuncts) {
            if (c->kind != NodeKind::kComparison || c->text != "=" || c->children[0].kind != NodeKind::kColumn ||
                c->children[1].kind != NodeKind::kColumn) {
              continue;
            }
            const auto a = try_resolve(scope, c->children[0]);
            const auto b = try_resolve(scope, c->children[1]);
            if (a && b && a->source && b->source && is_fk_pair(schema, a->table, a->column, b->table, b->column)) {
              keyed.insert(pair_of(a->source, b->source));
            }
          }
          for (AstNode* c : conjuncts) {
            if (c->kind != NodeKind::kComparison || c->text != "=" || c->children[0].kind != NodeKind::kColumn ||
                c->children[1].kind != NodeKind::kColumn) {
              continue;
            }
            AstNode& lhs = c->children[0];
            AstNode& rhs = c->children[1];
            const auto a = try_resolve(scope, lhs);
            const auto b = try_resolve(scope, rhs);
            if (!a || !b || !a->source || !b->source || a->source == b->source) continue;
            const Table* ta = schema.find_table(a->table);
            const Table* tb = schema.find_table(b->table);
            if (!ta || !tb) continue;
            if (is_fk_pair(schema, ta->name, a->column, tb->name, b->column)) continue;
            const std::string before = render_expression(*c);
            const auto fk = keyed.count(pair_of(a->source, b->source)) ? std::nullopt : fk_between(schema, ta->name, tb->name);
            if (fk) {
              keyed.insert(pair_of(a->source, b->source));
              lhs.text = fk->first;
              lhs.qualifier = source_qualifier(*a->source);
              rhs.text = fk->second;
              rhs.qualifier = source_qualifier(*b->source);
              r.notes.push_back("join_condition: " + before + " -> " + render_expression(*c));
            } else {
              drop.push_back(c);
              r.notes.push_back("join_condition: " + before + " dropped");
            }
            r.applied = true;
          }
          if (drop.empty()) continue;
          if (drop.size() == conjuncts.size()) {
            join.children.resize(1);
            continue;
          }
          AstNode& cond = on.children[0];
          std::vector<AstNode> kept;
          for (AstNode* c : conjuncts) {
            if (std::find(drop.begin(), drop.end(), c) == drop.end()) kept.push_back(*c);
          }
          if (kept.size() == 1) {
            cond = std::move(kept[0]);
          } else {
            AstNode conj;
            conj.kind = NodeKind::kLogical;
            conj.text = "AND";
            conj.children = std::move(kept);
            cond = std::move(conj);
          }
        }
      }
    });
    return r;
  });
}

GuidelineCatalog GuidelineCatalog::parse(std::string_view text, const std::string& origin) {
  GuidelineCatalog cat;
  std::istringstream in{std::string(text)};
  std::string line;
  for (int no = 1; std::getline(in, line); ++no) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error(ErrorCode::kFormat, origin + ":" + std::to_string(no) + ": expected id<TAB>text");
    const std::string id(detail::trim(line.substr(0, tab)));
    const std::string body(detail::trim(line.substr(tab + 1)));
    if (id.empty() || body.empty()) throw Error(ErrorCode::kFormat, origin + ":" + std::to_string(no) + ": empty id or text");
    cat.entries_[id] = body;
  }
  for (std::string_view id : {kGuidelineJoin, kGuidelineOrder, kGuidelineConjunction}) {
    if (!cat.contains(id)) throw Error(ErrorCode::kFormat, origin + ": missing guideline '" + std::string(id) + "'");
  }
  return cat;
}

GuidelineCatalog GuidelineCatalog::load(const std::filesystem::path& file) {
  return parse(detail::read_text_file(file), file.string());
}

const std::string& GuidelineCatalog::text(std::string_view id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw Error(ErrorCode::kFormat, "unknown guideline '" + std::string(id) + "'");
  return it->second;
}

bool GuidelineCatalog::contains(std::string_view id) const { return entries_.find(id) != entries_.end(); }

bool demos_look_complex(const std::vector<std::string>& demo_sqls) {
  for (const std::string& s : demo_sqls) {
    try {
      const SqlAst ast = parse_sql(s);
      if (contains_kind(ast.root, NodeKind::kSetOp) || max_from_units(ast.root) > 2) return true;
    } catch (const SyntaxError&) {
    }
  }
  return false;
}

std::vector<std::string> select_guidelines(const SqlAst* sql, const DatabaseSchema& schema, const GuidelineInput& in) {
  std::vector<std::string> ids;
  if (sql) {
    AstNode root = sql->root;
    if (has_unneeded_join(root, schema)) ids.emplace_back(kGuidelineJoin);
  }
  if ((sql && contains_kind(sql->root, NodeKind::kOrderBy)) || has_superlative(in.question)) {
    ids.emplace_back(kGuidelineOrder);
  }
  for (const std::string& s : in.demo_sqls) {
    try {
      if (contains_kind(parse_sql(s).root, NodeKind::kSetOp)) {
        ids.emplace_back(kGuidelineConjunction);
        break;
      }
    } catch (const SyntaxError&) {
    }
  }
  return ids;
}

CorrectionResources CorrectionResources::load(const std::filesystem::path& dir) {
  CorrectionResources res;
  res.correction_template = PromptTemplate(detail::read_text_file(dir / "correction.tmpl"));
  for (std::string_view required : {"schema", "question", "sql"}) {
    if (!res.correction_template.has(required)) {
      throw Error(ErrorCode::kFormat, (dir / "correction.tmpl").string() + ": missing placeholder {" +
                                          std::string(required) + "}");
    }
  }
  res.guidelines = GuidelineCatalog::load(dir / "guidelines.tsv");
  return res;
}

PromptCorrection prompt_correct(const std::string& sql, const DbContext& ctx, const std::string& question,
                                const std::optional<std::string>& evidence,
                                const std::vector<std::string>& guideline_texts, const PromptTemplate& tmpl,
                                LlmClient& llm) {
  PromptCorrection out;
  std::string schema = render_schema_ddl(ctx.schema());
  while (!schema.empty() && schema.back() == '\n') schema.pop_back();
  out.prompt = tmpl.render({
      {"schema", schema},
      {"evidence", evidence ? std::string(detail::trim(*evidence)) : std::string()},
      {"guidelines", bullet_list(guideline_texts)},
      {"question", std::string(detail::trim(question))},
      {"sql", std::string(detail::trim(sql))},
  });
  const Completion c = llm.complete(out.prompt);
  out.reply = c.text;
  out.usage = c.usage;
  try {
    out.sql = extract_sql(c.text);
    out.reply_usable = true;
  } catch (const Error&) {
    out.sql = sql;
  }
  return out;
}

constexpr int kMaxRuleRounds = 4;

CorrectionOutcome correct(const std::string& sql, const DbContext& ctx, const CorrectionRequest& req,
                          const CorrectionResources& res, LlmClient* llm) {
  CorrectionOutcome out;
  out.original = sql;
  out.corrected = sql;
  std::optional<SqlAst> ast;
  try {
    ast = parse_sql(sql);
    out.original_parses = true;
  } catch (const SyntaxError& e) {
    out.trail.push_back(std::string("input does not parse: ") + e.what());
  }

  bool want_prompt = false;
  if (out.original_parses) {
    using Fixer = FixResult (*)(const std::string&, const DbContext&);
    const std::array<std::pair<const char*, Fixer>, 4> fixers = {{
        {"string_format", fix_string_format},
        {"schema_mismatch", fix_schema_mismatch},
        {"invalid_aggregation", fix_invalid_aggregation},
        {"join_condition", fix_join_condition},
    }};
    // A rename can expose a value the string rule could not resolve before,
    // so the sequence repeats until nothing changes.
    std::string current = sql;
    for (int round = 0; round < kMaxRuleRounds; ++round) {
      bool changed = false;
      for (const auto& [id, fixer] : fixers) {
        FixResult r = fixer(current, ctx);
        if (round == 0 || r.applied) {
          for (auto& note : r.notes) out.trail.push_back(std::move(note));
        }
        if (!r.applied) continue;
        try {
          parse_sql(r.sql);
        } catch (const SyntaxError&) {
          out.trail.push_back(std::string(id) + ": output does not parse, discarded");
          continue;
        }
        current = std::move(r.sql);
        changed = true;
        if (std::find(out.applied_rules.begin(), out.applied_rules.end(), id) == out.applied_rules.end()) {
          out.applied_rules.emplace_back(id);
        }
      }
      if (!changed) break;
    }
    if (!out.applied_rules.empty()) {
      out.corrected = current;
      out.trail.push_back("rules fired; prompt pass skipped");
      return out;
    }
    if (req.hardness) {
      want_prompt = *req.hardness == Hardness::kHard || *req.hardness == Hardness::kExtra;
      out.trail.push_back("gate: hardness " + std::string(hardness_name(*req.hardness)) +
                          (want_prompt ? " -> prompt pass" : " -> no prompt pass"));
    } else {
      want_prompt = demos_look_complex(req.demo_sqls);
      out.trail.push_back(want_prompt ? "gate: demonstrations join more than two tables or use a set operator"
                                      : "gate: no hardness and simple demonstrations -> no prompt pass");
    }
  } else {
    want_prompt = true;
  }
  if (!want_prompt) return out;

  const auto ids = select_guidelines(ast ? &*ast : nullptr, ctx.schema(), {req.question, req.demo_sqls});
  for (const auto& id : ids) out.guidelines_used.push_back(res.guidelines.text(id));
  if (!llm) {
    out.trail.push_back("prompt pass skipped: no provider");
    return out;
  }
  try {
    PromptCorrection pc =
        prompt_correct(sql, ctx, req.question, req.evidence, out.guidelines_used, res.correction_template, *llm);
    out.prompt_correction_used = true;
    if (pc.reply_usable) {
      out.corrected = pc.sql;
      out.trail.push_back("prompt pass rewrote the query");
    } else {
      out.trail.push_back("prompt pass reply held no SQL; original kept");
    }
    out.prompt = std::move(pc);
  } catch (const Error& e) {
    out.prompt_error = e.what();
    out.prompt_error_code = e.code();
    out.trail.push_back(std::string("prompt pass failed: ") + e.what());
  }
  return out;
}

}  // namespace sqlicl
