#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sqlicl {

// Node kinds of the full syntax tree. Clause kinds (kProjection .. kLimit) only
// ever appear as direct children of kSelect, always in this relative order.
enum class NodeKind : std::uint8_t {
  kSetOp,         // text: UNION | UNION ALL | INTERSECT | EXCEPT; children: left, right
  kSelect,        // children: clause nodes
  kProjection,    // flag: DISTINCT; children: select items
  kFrom,          // children: first source, then kJoin nodes
  kJoin,          // text: JOIN | LEFT JOIN | INNER JOIN | CROSS JOIN | ","; children: source, [kOn]
  kOn,            // children: condition
  kWhere,         // children: condition
  kGroupBy,       // children: expressions
  kHaving,        // children: condition
  kOrderBy,       // children: kOrderItem
  kOrderItem,     // text: "" | ASC | DESC; children: expression
  kLimit,         // children: count, [offset]
  kTableRef,      // text: table name; alias
  kDerivedTable,  // alias; children: query
  kColumn,        // text: column name; qualifier: table name or alias
  kStar,          // qualifier (optional)
  kLiteral,       // text: lexeme without quotes; literal_type
  kComparison,    // text: = != < <= > >= IS "IS NOT"; children: lhs, rhs
  kLike,          // text: LIKE | GLOB; flag: NOT; children: lhs, pattern
  kIn,            // flag: NOT; children: lhs, then items or a single kSubquery
  kBetween,       // flag: NOT; children: expr, low, high
  kIsNull,        // flag: NOT; children: expr
  kLogical,       // text: AND | OR; children: two or more operands (flattened)
  kNot,           // children: operand
  kArithmetic,    // text: + - * / % ||; children: lhs, rhs
  kNegate,        // children: operand
  kFunction,      // text: upper-case name; flag: DISTINCT; children: arguments
  kCast,          // text: target type; children: expression
  kCase,          // flag: has operand (then children[0] is it); then kWhen..., [kElse]
  kWhen,          // children: condition, result
  kElse,          // children: result
  kExists,        // flag: NOT; children: kSubquery
  kSubquery,      // children: query
};

enum class LiteralType : std::uint8_t { kNone, kInteger, kFloat, kString, kBoolean, kNull };

struct AstNode {
  NodeKind kind = NodeKind::kSelect;
  std::string text;
  std::string qualifier;
  std::string alias;
  LiteralType literal_type = LiteralType::kNone;
  bool flag = false;
  // String literals written with double quotes keep that spelling on render.
  bool double_quoted = false;
  std::vector<AstNode> children;

  bool operator==(const AstNode&) const = default;
};

// Parsed statement. The root is a kSelect or kSetOp node.
struct SqlAst {
  AstNode root;

  bool operator==(const SqlAst&) const = default;
};

// Throws SyntaxError on anything outside the supported SELECT subset,
// including empty input and trailing garbage. A single trailing ';' is allowed.
SqlAst parse_sql(std::string_view text);

// Canonical rendering: upper-case keywords, single spaces, minimal parentheses.
std::string render_sql(const SqlAst& ast);
std::string render_expression(const AstNode& node);

// ---------------------------------------------------------------------------
// Label-only trees used for structural similarity.

enum class NodeLabel : std::uint8_t {
  kRoot,
  kSelect,
  kWhere,
  kTable,
  kColumn,
  kMin,
  kMax,
  kCount,
  kSum,
  kAvg,
  kGroupBy,
  kHaving,
  kOrderBy,
  kLimit,
  kIntersect,
  kExcept,
  kUnion,
  kJoin,
  kAnd,
  kOr,
  kEq,
  kNeq,
  kGt,
  kLt,
  kGte,
  kLte,
  kLike,
  kIn,
  kBetween,
  kIs,
  kNot,
  kExists,
};

inline constexpr std::size_t kNodeLabelCount = static_cast<std::size_t>(NodeLabel::kExists) + 1;

std::string_view label_name(NodeLabel label);

// Ordered labeled tree; nodes[0] is the root. Builders append nodes in
// preorder, so two trees of the same shape compare equal.
class LabeledTree {
 public:
  struct Node {
    NodeLabel label;
    std::vector<std::uint32_t> children;

    bool operator==(const Node&) const = default;
  };

  LabeledTree() = default;
  explicit LabeledTree(NodeLabel root_label);

  // Appends a child as the last child of parent and returns its index.
  std::uint32_t add_child(std::uint32_t parent, NodeLabel label);

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const Node& node(std::uint32_t index) const { return nodes_[index]; }
  const std::vector<Node>& nodes() const { return nodes_; }

  // Bracket notation, e.g. "SELECT(COUNT TABLE)".
  std::string to_string() const;

  bool operator==(const LabeledTree&) const = default;

 private:
  std::vector<Node> nodes_;
};

// Drops names, columns and values; keeps operator and clause types only.
LabeledTree normalize_ast(const SqlAst& ast);

}  // namespace sqlicl
