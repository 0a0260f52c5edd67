#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sqlicl/schema.hpp"
#include "sqlicl/sql_ast.hpp"

namespace sqlicl {

// Fixed order; it is also the one-hot position used for node features.
enum class GraphNodeClass : std::uint8_t { kRoot, kKeyword, kTable, kColumn, kValue };
inline constexpr std::size_t kGraphNodeClassCount = 5;

std::string_view graph_node_class_name(GraphNodeClass cls);

struct GraphNode {
  GraphNodeClass cls = GraphNodeClass::kKeyword;
  // Keyword name (SELECT, JOIN, EQ, COUNT, ...), table name, "table:column",
  // or literal value without quotes.
  std::string text;

  bool operator==(const GraphNode&) const = default;
};

using GraphEdge = std::pair<std::uint32_t, std::uint32_t>;  // parent -> child

struct SqlGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;

  std::size_t size() const { return nodes.size(); }
  bool operator==(const SqlGraph&) const = default;
};

// Node ids follow document order. Table and column nodes are shared across
// the whole statement, including subqueries; keyword and value nodes are per
// occurrence. Column text is lower-case "table:column" with aliases resolved.
// The schema is optional and only used to resolve unqualified columns when a
// SELECT reads from several tables; without it such a column is an
// Error(kUnsupportedConstruct).
SqlGraph build_graph(const SqlAst& ast, const DatabaseSchema* schema = nullptr);

bool is_acyclic(const SqlGraph& g);

// Renumbers nodes: new id of node i is perm[i]. Edges are re-sorted.
SqlGraph permute_graph(const SqlGraph& g, const std::vector<std::uint32_t>& perm);

// SHA-256 over a node-id independent canonical form: every node gets a
// Merkle-style signature from (class, text, sorted child signatures).
std::string graph_fingerprint(const SqlGraph& g);

// Line-oriented debug format:
//   node <id> <Class> <json-quoted text>
//   edge <parent> <child>
std::string export_graph_text(const SqlGraph& g);
SqlGraph import_graph_text(std::string_view text);

}  // namespace sqlicl
