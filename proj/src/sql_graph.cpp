#include "sqlicl/sql_graph.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "sqlicl/error.hpp"
#include "sqlicl/hashing.hpp"
#include "sqlicl/sql_scope.hpp"
#include "sql_text_util.hpp"

namespace sqlicl {

std::string_view graph_node_class_name(GraphNodeClass cls) {
  switch (cls) {
    case GraphNodeClass::kRoot: return "Root";
    case GraphNodeClass::kKeyword: return "Keyword";
    case GraphNodeClass::kTable: return "Table";
    case GraphNodeClass::kColumn: return "Column";
    case GraphNodeClass::kValue: return "Value";
  }
  return "Keyword";
}

namespace {

std::string comparison_keyword(const std::string& op) {
  if (op == "=") return "EQ";
  if (op == "!=") return "NEQ";
  if (op == ">") return "GT";
  if (op == "<") return "LT";
  if (op == ">=") return "GTE";
  if (op == "<=") return "LTE";
  return op;  // IS, IS NOT
}

std::string arithmetic_keyword(const std::string& op) {
  if (op == "+") return "ADD";
  if (op == "-") return "SUB";
  if (op == "*") return "MUL";
  if (op == "/") return "DIV";
  if (op == "%") return "MOD";
  return "CONCAT";
}

class GraphBuilder {
 public:
  explicit GraphBuilder(const DatabaseSchema* schema) : schema_(schema) {}

  SqlGraph run(const AstNode& root) {
    const auto r = add(GraphNodeClass::kRoot, "ROOT");
    query(root, r, nullptr);
    std::sort(graph_.edges.begin(), graph_.edges.end());
    return std::move(graph_);
  }

 private:
  std::uint32_t add(GraphNodeClass cls, std::string text) {
    graph_.nodes.push_back(GraphNode{cls, std::move(text)});
    return static_cast<std::uint32_t>(graph_.nodes.size() - 1);
  }

  void edge(std::uint32_t from, std::uint32_t to) {
    if (edge_set_.insert({from, to}).second) graph_.edges.emplace_back(from, to);
  }

  std::uint32_t keyword(std::uint32_t parent, std::string text) {
    const auto k = add(GraphNodeClass::kKeyword, std::move(text));
    edge(parent, k);
    return k;
  }

  std::uint32_t table_node(const std::string& name) {
    const std::string key = detail::to_lower(name);
    if (auto it = tables_.find(key); it != tables_.end()) return it->second;
    const auto id = add(GraphNodeClass::kTable, key);
    tables_.emplace(key, id);
    return id;
  }

  std::uint32_t column_node(const std::string& table, const std::string& column) {
    const std::string key = detail::to_lower(table) + ":" + detail::to_lower(column);
    if (auto it = columns_.find(key); it != columns_.end()) return it->second;
    // The owning table is created first so it precedes its columns.
    const std::uint32_t owner = table.empty() ? 0 : table_node(table);
    const auto id = add(GraphNodeClass::kColumn, key);
    columns_.emplace(key, id);
    if (!table.empty()) edge(owner, id);
    return id;
  }

  void query(const AstNode& q, std::uint32_t parent, const SqlScope* outer) {
    if (q.kind == NodeKind::kSetOp) {
      const auto op = keyword(parent, q.text);
      query(q.children[0], op, outer);
      query(q.children[1], op, outer);
      return;
    }
    const auto sel = keyword(parent, "SELECT");
    const SqlScope scope(q, outer, schema_);
    for (const AstNode& clause : q.children) {
      switch (clause.kind) {
        case NodeKind::kProjection:
          if (clause.flag) keyword(sel, "DISTINCT");
          for (const AstNode& item : clause.children) expr(item, sel, scope);
          break;
        case NodeKind::kFrom:
          for (const AstNode& child : clause.children) {
            if (child.kind != NodeKind::kJoin) {
              source(child, sel, outer);
            } else if (child.text == ",") {
              source(child.children[0], sel, outer);
            } else {
              const auto join = keyword(sel, child.text);
              source(child.children[0], join, outer);
              if (child.children.size() > 1) expr(child.children[1].children[0], join, scope);
            }
          }
          break;
        case NodeKind::kWhere:
          expr(clause.children[0], keyword(sel, "WHERE"), scope);
          break;
        case NodeKind::kGroupBy: {
          const auto group = keyword(sel, "GROUP BY");
          for (const AstNode& e : clause.children) expr(e, group, scope);
          break;
        }
        case NodeKind::kHaving:
          expr(clause.children[0], keyword(sel, "HAVING"), scope);
          break;
        case NodeKind::kOrderBy: {
          const auto order = keyword(sel, "ORDER BY");
          for (const AstNode& item : clause.children) {
            expr(item.children[0], order, scope);
            if (!item.text.empty()) keyword(order, item.text);
          }
          break;
        }
        case NodeKind::kLimit: {
          const auto limit = keyword(sel, "LIMIT");
          for (const AstNode& e : clause.children) expr(e, limit, scope);
          break;
        }
        default:
          throw Error(ErrorCode::kUnsupportedConstruct, "unexpected clause in SELECT");
      }
    }
  }

  void source(const AstNode& src, std::uint32_t parent, const SqlScope* outer) {
    if (src.kind == NodeKind::kTableRef) {
      std::string name = src.text;
      if (schema_) {
        if (const Table* t = schema_->find_table(name)) name = t->name;
      }
      edge(parent, table_node(name));
    } else {
      query(src.children[0], parent, outer);
    }
  }

  void children(const AstNode& n, std::uint32_t parent, const SqlScope& scope, std::size_t from = 0) {
    for (std::size_t i = from; i < n.children.size(); ++i) expr(n.children[i], parent, scope);
  }

  std::uint32_t negatable(const AstNode& n, std::uint32_t parent) {
    return n.flag ? keyword(parent, "NOT") : parent;
  }

  void expr(const AstNode& n, std::uint32_t parent, const SqlScope& scope) {
    switch (n.kind) {
      case NodeKind::kColumn: {
        const auto r = scope.resolve(n);
        if (r) edge(parent, column_node(r->table, r->column));
        return;
      }
      case NodeKind::kStar:
        if (!n.qualifier.empty()) {
          if (const ScopeSource* s = scope.find_source(n.qualifier); s && !s->table.empty()) {
            edge(parent, table_node(s->table));
          }
        }
        return;
      case NodeKind::kLiteral:
        edge(parent, add(GraphNodeClass::kValue, n.text));
        return;
      case NodeKind::kLogical:
        children(n, keyword(parent, n.text), scope);
        return;
      case NodeKind::kNot:
        children(n, keyword(parent, "NOT"), scope);
        return;
      case NodeKind::kComparison:
        children(n, keyword(parent, comparison_keyword(n.text)), scope);
        return;
      case NodeKind::kLike:
        children(n, keyword(negatable(n, parent), n.text), scope);
        return;
      case NodeKind::kIn:
        children(n, keyword(negatable(n, parent), "IN"), scope);
        return;
      case NodeKind::kBetween:
        children(n, keyword(negatable(n, parent), "BETWEEN"), scope);
        return;
      case NodeKind::kIsNull:
        children(n, keyword(negatable(n, parent), "IS NULL"), scope);
        return;
      case NodeKind::kExists:
        children(n, keyword(negatable(n, parent), "EXISTS"), scope);
        return;
      case NodeKind::kArithmetic:
        children(n, keyword(parent, arithmetic_keyword(n.text)), scope);
        return;
      case NodeKind::kNegate:
        children(n, keyword(parent, "NEG"), scope);
        return;
      case NodeKind::kFunction: {
        const auto fn = keyword(parent, n.text);
        if (n.flag) keyword(fn, "DISTINCT");
        children(n, fn, scope);
        return;
      }
      case NodeKind::kCast:
        children(n, keyword(parent, "CAST"), scope);
        return;
      case NodeKind::kCase:
        children(n, keyword(parent, "CASE"), scope);
        return;
      case NodeKind::kWhen:
        children(n, keyword(parent, "WHEN"), scope);
        return;
      case NodeKind::kElse:
        children(n, keyword(parent, "ELSE"), scope);
        return;
      case NodeKind::kSubquery:
        query(n.children[0], parent, &scope);
        return;
      default:
        throw Error(ErrorCode::kUnsupportedConstruct, "unexpected node in expression");
    }
  }

  const DatabaseSchema* schema_;
  SqlGraph graph_;
  std::map<std::string, std::uint32_t> tables_;
  std::map<std::string, std::uint32_t> columns_;
  std::set<GraphEdge> edge_set_;
};

}  // namespace

SqlGraph build_graph(const SqlAst& ast, const DatabaseSchema* schema) { return GraphBuilder(schema).run(ast.root); }

bool is_acyclic(const SqlGraph& g) {
  std::vector<std::size_t> indegree(g.size(), 0);
  std::vector<std::vector<std::uint32_t>> out(g.size());
  for (const auto& [a, b] : g.edges) {
    out[a].push_back(b);
    ++indegree[b];
  }
  std::vector<std::uint32_t> ready;
  for (std::uint32_t i = 0; i < g.size(); ++i) {
    if (indegree[i] == 0) ready.push_back(i);
  }
  std::size_t visited = 0;
  while (!ready.empty()) {
    const auto v = ready.back();
    ready.pop_back();
    ++visited;
    for (auto w : out[v]) {
      if (--indegree[w] == 0) ready.push_back(w);
    }
  }
  return visited == g.size();
}

SqlGraph permute_graph(const SqlGraph& g, const std::vector<std::uint32_t>& perm) {
  if (perm.size() != g.size()) throw Error(ErrorCode::kShapeMismatch, "permutation size differs from node count");
  SqlGraph out;
  out.nodes.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out.nodes[perm[i]] = g.nodes[i];
  for (const auto& [a, b] : g.edges) out.edges.emplace_back(perm[a], perm[b]);
  std::sort(out.edges.begin(), out.edges.end());
  return out;
}

std::string graph_fingerprint(const SqlGraph& g) {
  if (!is_acyclic(g)) throw Error(ErrorCode::kInvalidArgument, "graph has a cycle");
  std::vector<std::vector<std::uint32_t>> out(g.size());
  for (const auto& [a, b] : g.edges) out[a].push_back(b);
  std::vector<std::string> sig(g.size());
  std::vector<bool> done(g.size(), false);
  auto signature = [&](auto&& self, std::uint32_t v) -> const std::string& {
    if (done[v]) return sig[v];
    std::vector<std::string> kids;
    for (auto w : out[v]) kids.push_back(self(self, w));
    std::sort(kids.begin(), kids.end());
    std::string buf(graph_node_class_name(g.nodes[v].cls));
    buf += '\x1f';
    buf += g.nodes[v].text;
    for (const auto& k : kids) {
      buf += '\x1e';
      buf += k;
    }
    sig[v] = sha256_hex(buf);
    done[v] = true;
    return sig[v];
  };
  std::vector<std::string> all;
  for (std::uint32_t v = 0; v < g.size(); ++v) all.push_back(signature(signature, v));
  std::sort(all.begin(), all.end());
  std::string buf;
  for (const auto& s : all) buf += s;
  return sha256_hex(buf);
}

std::string export_graph_text(const SqlGraph& g) {
  std::ostringstream out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    out << "node " << i << ' ' << graph_node_class_name(g.nodes[i].cls) << ' '
        << nlohmann::json(g.nodes[i].text).dump() << '\n';
  }
  for (const auto& [a, b] : g.edges) out << "edge " << a << ' ' << b << '\n';
  return out.str();
}

SqlGraph import_graph_text(std::string_view text) {
  SqlGraph g;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    const auto fail = [&] { throw Error(ErrorCode::kFormat, "graph text line " + std::to_string(line_no)); };
    if (kind == "node") {
      std::size_t id;
      std::string cls;
      if (!(ls >> id >> cls) || id != g.nodes.size()) fail();
      std::string rest;
      std::getline(ls, rest);
      GraphNode node;
      bool known = false;
      for (std::size_t c = 0; c < kGraphNodeClassCount; ++c) {
        if (graph_node_class_name(static_cast<GraphNodeClass>(c)) == cls) {
          node.cls = static_cast<GraphNodeClass>(c);
          known = true;
        }
      }
      if (!known) fail();
      try {
        node.text = nlohmann::json::parse(detail::trim(rest)).get<std::string>();
      } catch (const nlohmann::json::exception&) {
        fail();
      }
      g.nodes.push_back(std::move(node));
    } else if (kind == "edge") {
      std::uint32_t a, b;
      if (!(ls >> a >> b)) fail();
      g.edges.emplace_back(a, b);
    } else {
      fail();
    }
  }
  for (const auto& [a, b] : g.edges) {
    if (a >= g.size() || b >= g.size()) throw Error(ErrorCode::kFormat, "edge references a missing node");
  }
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

}  // namespace sqlicl
