#include "sqlicl/graph_augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>

#include "sqlicl/error.hpp"
#include "sqlicl/hashing.hpp"
#include "sql_text_util.hpp"
#include "sql_walk.hpp"

namespace sqlicl {

std::string_view augmentation_kind_name(AugmentationKind kind) {
  switch (kind) {
    case AugmentationKind::kFeatureMasking: return "FeatureMasking";
    case AugmentationKind::kKeywordReplacement: return "KeywordReplacement";
    case AugmentationKind::kValueReplacement: return "ValueReplacement";
    case AugmentationKind::kDatabaseReplacement: return "DatabaseReplacement";
    case AugmentationKind::kPredicateModification: return "PredicateModification";
    case AugmentationKind::kJoinSimplification: return "JoinSimplification";
  }
  return "FeatureMasking";
}

bool is_essential_node(const GraphNode& node) {
  if (node.cls == GraphNodeClass::kRoot) return true;
  if (node.cls != GraphNodeClass::kKeyword) return false;
  const std::string& t = node.text;
  return t == "SELECT" || t == "WHERE" || t == "GROUP BY" || t == "ORDER BY" ||
         (t.size() >= 4 && t.compare(t.size() - 4, 4, "JOIN") == 0);
}

namespace {

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

template <typename Fn>
void for_each_node(AstNode& n, Fn&& fn) {
  fn(n);
  for (AstNode& c : n.children) for_each_node(c, fn);
}

AugmentedInstance finish(SqlAst ast, AugmentationKind kind, std::uint64_t seed, const DatabaseSchema* schema) {
  AugmentedInstance out;
  out.source_sql = render_sql(ast);
  // Re-parse so the stored AST is the canonical reading of the emitted SQL.
  out.ast = parse_sql(out.source_sql);
  out.graph = build_graph(out.ast, schema);
  out.kind = kind;
  out.seed = seed;
  return out;
}

const std::vector<std::vector<std::string>>& keyword_classes() {
  static const std::vector<std::vector<std::string>> kClasses = {
      {"=", "!="}, {"<", "<=", ">", ">="}, {"AND", "OR"}, {"+", "-", "*", "/"}, {"COUNT", "SUM", "MIN", "MAX", "AVG"},
  };
  return kClasses;
}

const std::vector<std::string>* class_of(const AstNode& n) {
  const bool eligible =
      n.kind == NodeKind::kComparison || n.kind == NodeKind::kLogical || n.kind == NodeKind::kArithmetic ||
      (n.kind == NodeKind::kFunction && !n.children.empty() && n.children[0].kind != NodeKind::kStar);
  if (!eligible) return nullptr;
  for (const auto& cls : keyword_classes()) {
    if (std::find(cls.begin(), cls.end(), n.text) != cls.end()) return &cls;
  }
  return nullptr;
}

bool replaceable_value(const AstNode& n) {
  return n.kind == NodeKind::kLiteral &&
         (n.literal_type == LiteralType::kInteger || n.literal_type == LiteralType::kFloat ||
          n.literal_type == LiteralType::kString || n.literal_type == LiteralType::kBoolean);
}

bool is_wildcard(char c) { return c == '%' || c == '_'; }

const std::vector<std::string>& fallback_words() {
  static const std::vector<std::string> kWords = {"bird",  "Canada", "orange", "river",  "Berlin",
                                                  "delta", "violet", "summit", "harbor", "maple"};
  return kWords;
}

std::string replace_number(const AstNode& lit, Rng& rng) {
  const bool negative = !lit.text.empty() && lit.text[0] == '-';
  const double magnitude = std::fabs(std::strtod(lit.text.c_str(), nullptr));
  if (lit.literal_type == LiteralType::kInteger) {
    const auto hi = static_cast<long long>(std::max(10.0, 2 * magnitude));
    long long v;
    do {
      v = std::uniform_int_distribution<long long>(0, hi)(rng);
    } while (v == static_cast<long long>(magnitude));
    return (negative && v != 0 ? "-" : "") + std::to_string(v);
  }
  const auto dot = lit.text.find('.');
  int decimals = 2;
  if (dot != std::string::npos && lit.text.find_first_of("eE") == std::string::npos) {
    decimals = std::max<int>(1, static_cast<int>(lit.text.size() - dot - 1));
  }
  std::string out;
  do {
    const double v = std::uniform_real_distribution<double>(0.0, 2 * magnitude + 1.0)(rng);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    out = (negative ? "-" : "") + std::string(buf);
  } while (out == lit.text);
  return out;
}

std::string replace_string(const std::string& text, const ValuePool* pool, Rng& rng) {
  std::size_t lo = 0, hi = text.size();
  while (lo < hi && is_wildcard(text[lo])) ++lo;
  while (hi > lo && is_wildcard(text[hi - 1])) --hi;
  const std::string core = text.substr(lo, hi - lo);
  std::vector<const std::string*> options;
  if (pool) {
    for (const auto& s : pool->strings()) {
      if (!detail::iequals(s, core)) options.push_back(&s);
    }
  }
  if (options.empty()) {
    for (const auto& s : fallback_words()) {
      if (!detail::iequals(s, core)) options.push_back(&s);
    }
  }
  return text.substr(0, lo) + *options[pick(rng, options.size())] + text.substr(hi);
}

}  // namespace

void ValuePool::harvest(const SqlAst& ast) {
  AstNode root = ast.root;
  for_each_node(root, [&](AstNode& n) {
    if (n.kind == NodeKind::kLiteral && n.literal_type == LiteralType::kString) {
      std::size_t lo = 0, hi = n.text.size();
      while (lo < hi && is_wildcard(n.text[lo])) ++lo;
      while (hi > lo && is_wildcard(n.text[hi - 1])) --hi;
      add(n.text.substr(lo, hi - lo));
    }
  });
}

void ValuePool::add(std::string value) {
  if (value.empty()) return;
  if (seen_.insert(value).second) strings_.push_back(std::move(value));
}

AugmentedInstance feature_mask(const SqlGraph& g, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(ErrorCode::kInvalidArgument, "mask rate must be in [0, 1)");
  Rng rng(seed);
  std::bernoulli_distribution coin(rate);
  AugmentedInstance out;
  out.graph = g;
  out.kind = AugmentationKind::kFeatureMasking;
  out.seed = seed;
  for (std::uint32_t v = 0; v < g.size(); ++v) {
    if (is_essential_node(g.nodes[v])) continue;
    if (coin(rng)) out.masked_node_ids.push_back(v);
  }
  return out;
}

AugmentedInstance keyword_replace(const SqlAst& ast, std::uint64_t seed, const DatabaseSchema* schema) {
  SqlAst out = ast;
  std::vector<AstNode*> sites;
  for_each_node(out.root, [&](AstNode& n) {
    if (class_of(n)) sites.push_back(&n);
  });
  if (sites.empty()) throw Error(ErrorCode::kNoReplaceableKeyword, "no replaceable keyword");
  Rng rng(seed);
  AstNode& site = *sites[pick(rng, sites.size())];
  const auto& cls = *class_of(site);
  std::vector<std::string> others;
  for (const auto& k : cls) {
    if (k != site.text) others.push_back(k);
  }
  site.text = others[pick(rng, others.size())];
  return finish(std::move(out), AugmentationKind::kKeywordReplacement, seed, schema);
}

AugmentedInstance value_replace(const SqlAst& ast, std::uint64_t seed, const ValuePool* pool,
                                const DatabaseSchema* schema) {
  SqlAst out = ast;
  std::vector<AstNode*> sites;
  for_each_node(out.root, [&](AstNode& n) {
    if (replaceable_value(n)) sites.push_back(&n);
  });
  if (sites.empty()) throw Error(ErrorCode::kNoValue, "no literal value to replace");
  Rng rng(seed);
  AstNode& lit = *sites[pick(rng, sites.size())];
  switch (lit.literal_type) {
    case LiteralType::kBoolean:
      lit.text = detail::iequals(lit.text, "TRUE") ? "FALSE" : "TRUE";
      break;
    case LiteralType::kString:
      lit.text = replace_string(lit.text, pool, rng);
      break;
    default:
      lit.text = replace_number(lit, rng);
  }
  return finish(std::move(out), AugmentationKind::kValueReplacement, seed, schema);
}

namespace {

struct TableUse {
  std::string name;
  std::vector<std::string> columns;  // first-appearance order, original spelling
};

// Tables and columns referenced by the statement, keyed by lower-case name.
std::vector<TableUse> collect_uses(const SqlAst& ast, const DatabaseSchema* schema) {
  std::vector<TableUse> uses;
  std::map<std::string, std::size_t> index;
  auto table = [&](const std::string& name) -> TableUse& {
    const auto key = detail::to_lower(name);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, uses.size()).first;
      uses.push_back({name, {}});
    }
    return uses[it->second];
  };
  AstNode root = ast.root;
  detail::NameVisitor v;
  v.on_table = [&](AstNode& t, const SqlScope&) {
    table(schema && schema->find_table(t.text) ? schema->find_table(t.text)->name : t.text);
  };
  v.on_column = [&](AstNode&, const std::optional<ResolvedColumn>& r, const SqlScope&) {
    if (!r || r->table.empty()) return;
    TableUse& use = table(r->table);
    const bool known = std::any_of(use.columns.begin(), use.columns.end(),
                                   [&](const std::string& c) { return detail::iequals(c, r->column); });
    if (!known) use.columns.push_back(r->column);
  };
  detail::walk_names(root, schema, v);
  return uses;
}

struct DonorMapping {
  const DatabaseSchema* donor = nullptr;
  std::map<std::string, std::string> tables;                              // lower source -> donor
  std::map<std::string, std::map<std::string, std::string>> columns;     // lower table -> lower column -> donor
};

ValueType source_type(const DatabaseSchema* source, const TableUse& use, const std::string& col) {
  if (source) {
    if (const Column* c = source->find_column(use.name, col)) return c->value_type();
  }
  return ValueType::kOther;
}

// With `typed`, a donor table must offer at least as many columns of each
// known value type as the statement uses.
bool table_fits(const TableUse& use, const DatabaseSchema* source, const Table& dt, bool typed) {
  if (dt.columns.size() < use.columns.size()) return false;
  if (!typed) return true;
  std::map<ValueType, std::size_t> need, have;
  for (const auto& col : use.columns) {
    const ValueType t = source_type(source, use, col);
    if (t != ValueType::kOther) ++need[t];
  }
  for (const auto& c : dt.columns) ++have[c.value_type()];
  return std::all_of(need.begin(), need.end(), [&](const auto& kv) { return have[kv.first] >= kv.second; });
}

bool try_assign(const std::vector<TableUse>& uses, const DatabaseSchema* source, const DatabaseSchema& donor, bool typed,
                Rng& rng, DonorMapping& out) {
  if (donor.tables.size() < uses.size()) return false;
  std::vector<std::size_t> order(uses.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return uses[a].columns.size() > uses[b].columns.size(); });
  std::vector<std::size_t> donor_tables(donor.tables.size());
  std::iota(donor_tables.begin(), donor_tables.end(), 0);
  std::shuffle(donor_tables.begin(), donor_tables.end(), rng);
  std::vector<bool> taken(donor.tables.size(), false);
  DonorMapping m;
  m.donor = &donor;
  for (std::size_t i : order) {
    const TableUse& use = uses[i];
    const Table* dt = nullptr;
    for (std::size_t d : donor_tables) {
      if (!taken[d] && table_fits(use, source, donor.tables[d], typed)) {
        taken[d] = true;
        dt = &donor.tables[d];
        break;
      }
    }
    if (!dt) return false;
    const auto tkey = detail::to_lower(use.name);
    m.tables[tkey] = dt->name;
    std::vector<bool> used(dt->columns.size(), false);
    // Typed columns first so untyped ones cannot take their slots.
    std::vector<std::string> cols = use.columns;
    std::stable_partition(cols.begin(), cols.end(),
                          [&](const std::string& c) { return source_type(source, use, c) != ValueType::kOther; });
    for (const std::string& col : cols) {
      const ValueType type = source_type(source, use, col);
      std::vector<std::size_t> same, any;
      for (std::size_t c = 0; c < dt->columns.size(); ++c) {
        if (used[c]) continue;
        any.push_back(c);
        if (type != ValueType::kOther && dt->columns[c].value_type() == type) same.push_back(c);
      }
      const auto& pool = same.empty() ? any : same;
      const std::size_t c = pool[pick(rng, pool.size())];
      used[c] = true;
      m.columns[tkey][detail::to_lower(col)] = dt->columns[c].name;
    }
  }
  out = std::move(m);
  return true;
}

}  // namespace

AugmentedInstance database_replace(const SqlAst& ast, const SchemaCatalog& donors, std::string_view source_db_id,
                                   std::uint64_t seed) {
  AstNode probe = ast.root;
  bool derived = false;
  for_each_node(probe, [&](AstNode& n) { derived = derived || n.kind == NodeKind::kDerivedTable; });
  if (derived) throw Error(ErrorCode::kUnsupportedConstruct, "derived tables are not renamed");

  const DatabaseSchema* source = donors.find(source_db_id);
  const std::vector<TableUse> uses = collect_uses(ast, source);
  Rng rng(seed);
  std::vector<const DatabaseSchema*> candidates;
  for (const auto& d : donors.all()) {
    if (!detail::iequals(d.db_id, source_db_id) && !d.tables.empty()) candidates.push_back(&d);
  }
  std::shuffle(candidates.begin(), candidates.end(), rng);
  DonorMapping mapping;
  bool found = false;
  for (bool typed : {true, false}) {
    for (const DatabaseSchema* d : candidates) {
      for (int attempt = 0; attempt < 4 && !found; ++attempt) found = try_assign(uses, source, *d, typed, rng, mapping);
      if (found) break;
    }
    if (found) break;
  }
  if (!found) throw Error(ErrorCode::kNoCompatibleDonor, "no donor database can host the statement");

  SqlAst out = ast;
  auto new_table = [&](const std::string& t) -> const std::string* {
    auto it = mapping.tables.find(detail::to_lower(t));
    return it == mapping.tables.end() ? nullptr : &it->second;
  };
  detail::NameVisitor v;
  v.on_table = [&](AstNode& t, const SqlScope&) {
    if (const auto* n = new_table(t.text)) t.text = *n;
  };
  v.on_column = [&](AstNode& col, const std::optional<ResolvedColumn>& r, const SqlScope& scope) {
    if (!r || r->table.empty()) return;
    const auto tkey = detail::to_lower(r->table);
    const auto* nt = new_table(r->table);
    if (!nt) return;
    col.text = mapping.columns[tkey].at(detail::to_lower(r->column));
    const std::string alias = r->source ? r->source->alias : std::string();
    if (!col.qualifier.empty()) {
      if (!detail::iequals(col.qualifier, alias)) col.qualifier = *nt;
    } else if (r->source && scope.sources().size() > 1) {
      // Donor column names may collide across tables; qualify to stay unambiguous.
      col.qualifier = alias.empty() ? *nt : alias;
    }
  };
  v.on_star = [&](AstNode& star, const SqlScope& scope) {
    if (star.qualifier.empty()) return;
    const ScopeSource* s = scope.find_source(star.qualifier);
    if (!s || s->table.empty() || detail::iequals(star.qualifier, s->alias)) return;
    if (const auto* nt = new_table(s->table)) star.qualifier = *nt;
  };
  detail::walk_names(out.root, source, v);
  return finish(std::move(out), AugmentationKind::kDatabaseReplacement, seed, mapping.donor);
}

AugmentedInstance predicate_modify(const SqlAst& ast, std::uint64_t seed, const DatabaseSchema* schema) {
  SqlAst out = ast;
  std::vector<std::pair<AstNode*, std::size_t>> sites;  // select, clause index
  for_each_node(out.root, [&](AstNode& n) {
    if (n.kind != NodeKind::kSelect) return;
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      if (n.children[i].kind == NodeKind::kWhere || n.children[i].kind == NodeKind::kHaving) sites.emplace_back(&n, i);
    }
  });
  if (sites.empty()) throw Error(ErrorCode::kNoPredicate, "no WHERE or HAVING clause");
  Rng rng(seed);
  auto [select, index] = sites[pick(rng, sites.size())];
  AstNode& cond = select->children[index].children[0];
  if (cond.kind == NodeKind::kLogical && std::bernoulli_distribution(0.5)(rng)) {
    cond.children.erase(cond.children.begin() + static_cast<std::ptrdiff_t>(pick(rng, cond.children.size())));
    if (cond.children.size() == 1) {
      AstNode only = std::move(cond.children[0]);
      cond = std::move(only);
    }
  } else {
    select->children.erase(select->children.begin() + static_cast<std::ptrdiff_t>(index));
  }
  return finish(std::move(out), AugmentationKind::kPredicateModification, seed, schema);
}

namespace {

std::size_t real_join_count(const AstNode& select) {
  for (const AstNode& clause : select.children) {
    if (clause.kind != NodeKind::kFrom) continue;
    return std::count_if(clause.children.begin(), clause.children.end(),
                         [](const AstNode& c) { return c.kind == NodeKind::kJoin && c.text != ","; });
  }
  return 0;
}

}  // namespace

AugmentedInstance join_simplify(const SqlAst& ast, std::uint64_t seed, const DatabaseSchema* schema) {
  SqlAst out = ast;
  std::vector<AstNode*> selects;
  for_each_node(out.root, [&](AstNode& n) {
    if (n.kind == NodeKind::kSelect && real_join_count(n) >= 2) selects.push_back(&n);
  });
  if (selects.empty()) throw Error(ErrorCode::kTooFewJoins, "no SELECT with two or more JOIN clauses");
  Rng rng(seed);
  AstNode* select = selects[pick(rng, selects.size())];
  AstNode* from = nullptr;
  for (AstNode& clause : select->children) {
    if (clause.kind == NodeKind::kFrom) from = &clause;
  }
  std::vector<std::size_t> joins;
  for (std::size_t i = 0; i < from->children.size(); ++i) {
    if (from->children[i].kind == NodeKind::kJoin && from->children[i].text != ",") joins.push_back(i);
  }
  const std::size_t victim = joins[pick(rng, joins.size())];
  const AstNode* source = &from->children[victim].children[0];

  // Columns inside the dropped ON condition do not count as uses.
  std::vector<const AstNode*> own;
  if (from->children[victim].children.size() > 1) {
    for_each_node(from->children[victim].children[1], [&](AstNode& n) { own.push_back(&n); });
  }
  bool referenced = false;
  detail::NameVisitor v;
  v.on_column = [&](AstNode& col, const std::optional<ResolvedColumn>& r, const SqlScope&) {
    if (r && r->source && r->source->node == source && std::find(own.begin(), own.end(), &col) == own.end()) {
      referenced = true;
    }
  };
  v.on_star = [&](AstNode& star, const SqlScope& scope) {
    if (star.qualifier.empty()) {
      for (const auto& s : scope.sources()) referenced = referenced || s.node == source;
    } else if (const ScopeSource* s = scope.find_source(star.qualifier); s && s->node == source) {
      referenced = true;
    }
  };
  detail::walk_names(out.root, schema, v);

  AstNode& join = from->children[victim];
  if (referenced) {
    join.text = ",";
    join.children.resize(1);
  } else {
    from->children.erase(from->children.begin() + static_cast<std::ptrdiff_t>(victim));
  }
  return finish(std::move(out), AugmentationKind::kJoinSimplification, seed, schema);
}

AugmentedInstance apply_augmentation(AugmentationKind kind, const SqlAst& anchor, const AugmentOptions& opts,
                                     std::uint64_t seed) {
  const DatabaseSchema* schema = opts.donors ? opts.donors->find(opts.db_id) : nullptr;
  switch (kind) {
    case AugmentationKind::kFeatureMasking: {
      AugmentedInstance out = feature_mask(build_graph(anchor, schema), opts.mask_rate, seed);
      std::vector<std::uint32_t> eligible;
      for (std::uint32_t v = 0; v < out.graph.size(); ++v) {
        if (!is_essential_node(out.graph.nodes[v])) eligible.push_back(v);
      }
      if (eligible.empty()) throw Error(ErrorCode::kNoApplicableOperator, "every node is essential");
      if (out.masked_node_ids.empty()) {
        // A positive identical to its anchor teaches nothing; mask one node.
        Rng rng(derive_seed(seed, "mask-one"));
        out.masked_node_ids.push_back(eligible[pick(rng, eligible.size())]);
      }
      out.ast = anchor;
      out.source_sql = render_sql(anchor);
      return out;
    }
    case AugmentationKind::kKeywordReplacement: return keyword_replace(anchor, seed, schema);
    case AugmentationKind::kValueReplacement: return value_replace(anchor, seed, opts.values, schema);
    case AugmentationKind::kDatabaseReplacement:
      if (!opts.donors) throw Error(ErrorCode::kNoCompatibleDonor, "no donor catalog");
      return database_replace(anchor, *opts.donors, opts.db_id, seed);
    case AugmentationKind::kPredicateModification: return predicate_modify(anchor, seed, schema);
    case AugmentationKind::kJoinSimplification: return join_simplify(anchor, seed, schema);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown augmentation kind");
}

namespace {

bool is_precondition_failure(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNoReplaceableKeyword:
    case ErrorCode::kNoValue:
    case ErrorCode::kNoCompatibleDonor:
    case ErrorCode::kNoPredicate:
    case ErrorCode::kTooFewJoins:
    case ErrorCode::kNoApplicableOperator:
    case ErrorCode::kUnsupportedConstruct:
      return true;
    default:
      return false;
  }
}

}  // namespace

std::vector<AugmentationKind> applicable_augmentations(const SqlAst& ast, const AugmentOptions& opts) {
  std::vector<AugmentationKind> out;
  for (AugmentationKind kind : kAllAugmentations) {
    try {
      apply_augmentation(kind, ast, opts, 0);
      out.push_back(kind);
    } catch (const Error& e) {
      if (!is_precondition_failure(e.code())) throw;
    }
  }
  return out;
}

AugmentedInstance sample_positive(const SqlAst& anchor, const AugmentOptions& opts, std::uint64_t seed) {
  std::vector<AugmentationKind> order(kAllAugmentations.begin(), kAllAugmentations.end());
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  for (AugmentationKind kind : order) {
    try {
      return apply_augmentation(kind, anchor, opts, derive_seed(seed, augmentation_kind_name(kind)));
    } catch (const Error& e) {
      if (!is_precondition_failure(e.code())) throw;
    }
  }
  throw Error(ErrorCode::kNoApplicableOperator, "no augmentation applies to " + render_sql(anchor));
}

std::vector<std::size_t> sample_negative_indices(std::size_t corpus_size, std::size_t anchor_index, std::size_t n,
                                                 std::uint64_t seed) {
  if (corpus_size == 0 || n > corpus_size - 1) {
    throw Error(ErrorCode::kCorpusTooSmall,
                "need " + std::to_string(n) + " negatives from a corpus of " + std::to_string(corpus_size));
  }
  std::vector<std::size_t> pool;
  pool.reserve(corpus_size - 1);
  for (std::size_t i = 0; i < corpus_size; ++i) {
    if (i != anchor_index) pool.push_back(i);
  }
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(pool[i], pool[i + pick(rng, pool.size() - i)]);
  }
  pool.resize(n);
  return pool;
}

std::vector<SqlGraph> sample_negatives(const std::vector<std::string>& corpus, std::size_t anchor_index,
                                       std::size_t n, std::uint64_t seed) {
  std::vector<SqlGraph> out;
  for (std::size_t i : sample_negative_indices(corpus.size(), anchor_index, n, seed)) {
    out.push_back(build_graph(parse_sql(corpus[i])));
  }
  return out;
}

}  // namespace sqlicl
