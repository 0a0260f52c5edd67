#include "sqlicl/synthetic.hpp"

#include <algorithm>
#include <optional>
#include <random>
#include <set>

#include "sqlicl/error.hpp"
#include "sql_text_util.hpp"

namespace sqlicl {

namespace {

using Rng = std::mt19937_64;

const std::vector<std::string>& word_pool() {
  static const std::vector<std::string> kWords = {
      "France", "cat",    "dog",   "USA",    "Europe", "Village", "Aliens",  "English", "Republic", "Asia",
      "Town",   "Berlin", "Paris", "Tokyo",  "blue",   "Smith",   "Week 1",  "Sun",     "Love",     "North America",
  };
  return kWords;
}

std::string readable(std::string_view name) {
  std::string out = detail::to_lower(name);
  std::replace(out.begin(), out.end(), '_', ' ');
  return out;
}

struct Path {
  const Table* a;
  const Table* b;
  std::string a_col, b_col;  // a.a_col = b.b_col
};

class Generator {
 public:
  Generator(const DatabaseSchema& db, Rng& rng) : db_(db), rng_(rng) {}

  std::optional<SyntheticExample> make(int kind) {
    switch (kind) {
      case 0: return count_all();
      case 1: return project_two();
      case 2: return filter_number();
      case 3: return filter_text();
      case 4: return aggregate();
      case 5: return group_count();
      case 6: return having();
      case 7: return top_k();
      case 8: return distinct_between();
      case 9: return above_average();
      case 10: return like();
      case 11: return conjunction();
      case 12: return set_operation();
      case 13: return join_one();
      case 14: return join_two();
      case 15: return not_in();
      case 16: return join_group_top();
      case 17: return except_join();
      default: return std::nullopt;
    }
  }

  static constexpr int kKinds = 18;

 private:
  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  int number(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  const std::string& word() { return word_pool()[pick(word_pool().size())]; }

  const Table& table() { return db_.tables[pick(db_.tables.size())]; }

  const Column* column_of(const Table& t, std::optional<ValueType> type, const Column* not_this = nullptr) {
    std::vector<const Column*> options;
    for (const auto& c : t.columns) {
      if (&c == not_this) continue;
      if (!type || c.value_type() == *type) options.push_back(&c);
    }
    if (options.empty()) return nullptr;
    return options[pick(options.size())];
  }

  SyntheticExample done(std::string question, std::string sql) { return {std::move(question), std::move(sql), db_.db_id}; }

  std::optional<SyntheticExample> count_all() {
    const Table& t = table();
    return done("How many " + readable(t.name) + " are there?", "SELECT count(*) FROM " + t.name);
  }

  std::optional<SyntheticExample> project_two() {
    const Table& t = table();
    const Column* a = column_of(t, std::nullopt);
    const Column* b = column_of(t, std::nullopt, a);
    if (!a || !b) return std::nullopt;
    return done("List the " + readable(a->name) + " and " + readable(b->name) + " of all " + readable(t.name) + ".",
                "SELECT " + a->name + ", " + b->name + " FROM " + t.name);
  }

  std::optional<SyntheticExample> filter_number() {
    const Table& t = table();
    const Column* n = column_of(t, ValueType::kNumber);
    const Column* a = column_of(t, std::nullopt, n);
    if (!n || !a) return std::nullopt;
    static const std::vector<std::pair<std::string, std::string>> kOps = {
        {">", "greater than"}, {"<", "less than"}, {">=", "at least"}, {"<=", "at most"}, {"=", "equal to"}};
    const auto& [op, phrase] = kOps[pick(kOps.size())];
    const int v = number(1, 100);
    return done("Which " + readable(a->name) + " of " + readable(t.name) + " have " + readable(n->name) + " " + phrase +
                    " " + std::to_string(v) + "?",
                "SELECT " + a->name + " FROM " + t.name + " WHERE " + n->name + " " + op + " " + std::to_string(v));
  }

  std::optional<SyntheticExample> filter_text() {
    const Table& t = table();
    const Column* s = column_of(t, ValueType::kText);
    const Column* a = column_of(t, std::nullopt, s);
    if (!s || !a) return std::nullopt;
    const std::string w = word();
    return done("What is the " + readable(a->name) + " of the " + readable(t.name) + " whose " + readable(s->name) +
                    " is " + w + "?",
                "SELECT " + a->name + " FROM " + t.name + " WHERE " + s->name + " = '" + w + "'");
  }

  std::optional<SyntheticExample> aggregate() {
    const Table& t = table();
    const Column* n = column_of(t, ValueType::kNumber);
    const Column* s = column_of(t, ValueType::kText);
    if (!n || !s) return std::nullopt;
    static const std::vector<std::pair<std::string, std::string>> kAgg = {
        {"avg", "average"}, {"min", "minimum"}, {"max", "maximum"}, {"sum", "total"}};
    const auto& f = kAgg[pick(kAgg.size())];
    const auto& g = kAgg[pick(kAgg.size())];
    const std::string w = word();
    std::string sql = "SELECT " + f.first + "(" + n->name + ")";
    std::string q = "What is the " + f.second;
    if (g.first != f.first) {
      sql += ", " + g.first + "(" + n->name + ")";
      q += " and " + g.second;
    }
    sql += " FROM " + t.name + " WHERE " + s->name + " = '" + w + "'";
    q += " " + readable(n->name) + " of " + readable(t.name) + " with " + readable(s->name) + " " + w + "?";
    return done(q, sql);
  }

  std::optional<SyntheticExample> group_count() {
    const Table& t = table();
    const Column* s = column_of(t, ValueType::kText);
    if (!s) return std::nullopt;
    return done("Show each " + readable(s->name) + " and the number of " + readable(t.name) + " for it.",
                "SELECT " + s->name + ", count(*) FROM " + t.name + " GROUP BY " + s->name);
  }

  std::optional<SyntheticExample> having() {
    const Table& t = table();
    const Column* s = column_of(t, std::nullopt);
    const int k = number(1, 5);
    return done("Which " + readable(s->name) + " values appear in more than " + std::to_string(k) + " " +
                    readable(t.name) + "?",
                "SELECT " + s->name + " FROM " + t.name + " GROUP BY " + s->name + " HAVING count(*) > " +
                    std::to_string(k));
  }

  std::optional<SyntheticExample> top_k() {
    const Table& t = table();
    const Column* n = column_of(t, ValueType::kNumber);
    const Column* a = column_of(t, std::nullopt, n);
    if (!n || !a) return std::nullopt;
    const bool desc = pick(2) == 0;
    const int k = number(1, 5);
    return done("Give the " + readable(a->name) + " of the " + std::to_string(k) + " " + readable(t.name) + " with the " +
                    (desc ? "highest " : "lowest ") + readable(n->name) + ".",
                "SELECT " + a->name + " FROM " + t.name + " ORDER BY " + n->name + (desc ? " DESC" : " ASC") +
                    " LIMIT " + std::to_string(k));
  }

  std::optional<SyntheticExample> distinct_between() {
    const Table& t = table();
    const Column* n = column_of(t, ValueType::kNumber);
    const Column* a = column_of(t, std::nullopt, n);
    if (!n || !a) return std::nullopt;
    const int lo = number(0, 50);
    const int hi = lo + number(1, 100);
    return done("What are the distinct " + readable(a->name) + " of " + readable(t.name) + " with " +
                    readable(n->name) + " between " + std::to_string(lo) + " and " + std::to_string(hi) + "?",
                "SELECT DISTINCT " + a->name + " FROM " + t.name + " WHERE " + n->name + " BETWEEN " +
                    std::to_string(lo) + " AND " + std::to_string(hi));
  }

  std::optional<SyntheticExample> above_average() {
    const Table& t = table();
    const Column* n = column_of(t, ValueType::kNumber);
    const Column* a = column_of(t, std::nullopt, n);
    if (!n || !a) return std::nullopt;
    return done("Find the " + readable(a->name) + " of " + readable(t.name) + " whose " + readable(n->name) +
                    " is above the average.",
                "SELECT " + a->name + " FROM " + t.name + " WHERE " + n->name + " > (SELECT avg(" + n->name +
                    ") FROM " + t.name + ")");
  }

  std::optional<SyntheticExample> like() {
    const Table& t = table();
    const Column* s = column_of(t, ValueType::kText);
    const Column* a = column_of(t, std::nullopt, s);
    if (!s || !a) return std::nullopt;
    const std::string w = word();
    return done("Which " + readable(t.name) + " have a " + readable(s->name) + " containing " + w + "? Show the " +
                    readable(a->name) + ".",
                "SELECT " + a->name + " FROM " + t.name + " WHERE " + s->name + " LIKE '%" + w + "%'");
  }

  std::optional<SyntheticExample> conjunction() {
    const Table& t = table();
    const Column* s = column_of(t, ValueType::kText);
    const Column* n = column_of(t, ValueType::kNumber);
    const Column* a = column_of(t, std::nullopt);
    if (!s || !n) return std::nullopt;
    const bool both = pick(2) == 0;
    const std::string w = word();
    const int v = number(1, 100);
    return done("List the " + readable(a->name) + " of " + readable(t.name) + " whose " + readable(s->name) + " is " +
                    w + (both ? " and " : " or ") + readable(n->name) + " exceeds " + std::to_string(v) + ".",
                "SELECT " + a->name + " FROM " + t.name + " WHERE " + s->name + " = '" + w + "'" +
                    (both ? " AND " : " OR ") + n->name + " > " + std::to_string(v));
  }

  std::optional<SyntheticExample> set_operation() {
    const Table& t = table();
    const Column* s = column_of(t, ValueType::kText);
    const Column* n = column_of(t, ValueType::kNumber);
    const Column* a = column_of(t, std::nullopt);
    if (!s || !n) return std::nullopt;
    static const std::vector<std::pair<std::string, std::string>> kOps = {
        {"INTERSECT", "and also"}, {"UNION", "or"}, {"EXCEPT", "but not"}};
    const auto& [op, phrase] = kOps[pick(kOps.size())];
    const std::string w = word();
    const int v = number(1, 100);
    return done("Show the " + readable(a->name) + " of " + readable(t.name) + " with " + readable(n->name) +
                    " above " + std::to_string(v) + " " + phrase + " with " + readable(s->name) + " " + w + ".",
                "SELECT " + a->name + " FROM " + t.name + " WHERE " + n->name + " > " + std::to_string(v) + " " + op +
                    " SELECT " + a->name + " FROM " + t.name + " WHERE " + s->name + " = '" + w + "'");
  }

  std::optional<Path> fk_path() {
    if (db_.foreign_keys.empty()) return std::nullopt;
    const ForeignKey& fk = db_.foreign_keys[pick(db_.foreign_keys.size())];
    const Table* from = db_.find_table(fk.table);
    const Table* to = db_.find_table(fk.ref_table);
    if (!from || !to || from == to) return std::nullopt;
    if (pick(2) == 0) return Path{from, to, fk.column, fk.ref_column};
    return Path{to, from, fk.ref_column, fk.column};
  }

  std::optional<SyntheticExample> join_one() {
    auto p = fk_path();
    if (!p) return std::nullopt;
    const Column* a = column_of(*p->a, std::nullopt);
    const Column* n = column_of(*p->b, ValueType::kNumber);
    if (!n) return std::nullopt;
    const int v = number(1, 100);
    return done("Show the " + readable(a->name) + " of " + readable(p->a->name) + " related to " +
                    readable(p->b->name) + " with " + readable(n->name) + " greater than " + std::to_string(v) + ".",
                "SELECT T1." + a->name + " FROM " + p->a->name + " AS T1 JOIN " + p->b->name + " AS T2 ON T1." +
                    p->a_col + " = T2." + p->b_col + " WHERE T2." + n->name + " > " + std::to_string(v));
  }

  std::optional<SyntheticExample> join_two() {
    // Two foreign keys sharing a table give a three-table chain x - m - y.
    std::vector<std::pair<const ForeignKey*, const ForeignKey*>> pairs;
    for (const auto& e1 : db_.foreign_keys) {
      for (const auto& e2 : db_.foreign_keys) {
        if (&e1 == &e2) continue;
        if (detail::iequals(e1.table, e2.table) && !detail::iequals(e1.ref_table, e2.ref_table)) pairs.emplace_back(&e1, &e2);
      }
    }
    if (pairs.empty()) return std::nullopt;
    const auto [e1, e2] = pairs[pick(pairs.size())];
    const Table* x = db_.find_table(e1->ref_table);
    const Table* m = db_.find_table(e1->table);
    const Table* y = db_.find_table(e2->ref_table);
    if (!x || !m || !y) return std::nullopt;
    const Column* a = column_of(*x, std::nullopt);
    const Column* s = column_of(*y, ValueType::kText);
    if (!s) return std::nullopt;
    const std::string w = word();
    return done("Find the " + readable(a->name) + " of " + readable(x->name) + " linked to a " + readable(y->name) +
                    " whose " + readable(s->name) + " is " + w + ".",
                "SELECT T1." + a->name + " FROM " + x->name + " AS T1 JOIN " + m->name + " AS T2 ON T1." +
                    e1->ref_column + " = T2." + e1->column + " JOIN " + y->name + " AS T3 ON T3." + e2->ref_column +
                    " = T2." + e2->column + " WHERE T3." + s->name + " = '" + w + "'");
  }

  std::optional<SyntheticExample> not_in() {
    if (db_.foreign_keys.empty()) return std::nullopt;
    const ForeignKey& fk = db_.foreign_keys[pick(db_.foreign_keys.size())];
    const Table* ref = db_.find_table(fk.ref_table);
    const Table* child = db_.find_table(fk.table);
    if (!ref || !child) return std::nullopt;
    const Column* a = column_of(*ref, std::nullopt);
    return done("Which " + readable(ref->name) + " have no " + readable(child->name) + "? Give their " +
                    readable(a->name) + ".",
                "SELECT " + a->name + " FROM " + ref->name + " WHERE " + fk.ref_column + " NOT IN (SELECT " +
                    fk.column + " FROM " + child->name + ")");
  }

  std::optional<SyntheticExample> join_group_top() {
    auto p = fk_path();
    if (!p) return std::nullopt;
    const Column* a = column_of(*p->a, std::nullopt);
    return done("Which " + readable(p->a->name) + " has the most " + readable(p->b->name) + "? Show its " +
                    readable(a->name) + " and the count.",
                "SELECT T1." + a->name + ", count(*) FROM " + p->a->name + " AS T1 JOIN " + p->b->name +
                    " AS T2 ON T1." + p->a_col + " = T2." + p->b_col + " GROUP BY T1." + p->a_col +
                    " ORDER BY count(*) DESC LIMIT 1");
  }

  std::optional<SyntheticExample> except_join() {
    auto p = fk_path();
    if (!p) return std::nullopt;
    const Column* a = column_of(*p->a, std::nullopt);
    const Column* s = column_of(*p->b, ValueType::kText);
    if (!s) return std::nullopt;
    const std::string w = word();
    return done("List the " + readable(a->name) + " of " + readable(p->a->name) + " not related to any " +
                    readable(p->b->name) + " with " + readable(s->name) + " " + w + ".",
                "SELECT " + a->name + " FROM " + p->a->name + " EXCEPT SELECT T1." + a->name + " FROM " + p->a->name +
                    " AS T1 JOIN " + p->b->name + " AS T2 ON T1." + p->a_col + " = T2." + p->b_col + " WHERE T2." +
                    s->name + " = '" + w + "'");
  }

  const DatabaseSchema& db_;
  Rng& rng_;
};

}  // namespace

std::vector<SyntheticExample> synthetic_corpus(const SchemaCatalog& schemas, std::size_t n, std::uint64_t seed) {
  if (schemas.empty()) throw Error(ErrorCode::kInvalidArgument, "synthetic corpus needs at least one schema");
  Rng rng(seed);
  std::vector<SyntheticExample> out;
  std::set<std::string> seen;
  std::size_t attempts = 0;
  while (out.size() < n) {
    if (++attempts > 200 * (n + 1)) throw Error(ErrorCode::kInvalidArgument, "schemas too small for a varied corpus");
    const auto& db = schemas.all()[std::uniform_int_distribution<std::size_t>(0, schemas.size() - 1)(rng)];
    if (db.tables.empty()) continue;
    Generator gen(db, rng);
    const int kind = std::uniform_int_distribution<int>(0, Generator::kKinds - 1)(rng);
    auto ex = gen.make(kind);
    if (!ex || !seen.insert(ex->sql).second) continue;
    out.push_back(std::move(*ex));
  }
  return out;
}

}  // namespace sqlicl
