#include <array>

#include "sqlicl/sql_ast.hpp"

namespace sqlicl {

std::string_view label_name(NodeLabel label) {
  static constexpr std::array<std::string_view, kNodeLabelCount> kNames = {
      "ROOT",  "SELECT", "WHERE", "TABLE",    "COLUMN", "MIN",   "MAX", "COUNT", "SUM",     "AVG",    "GROUP BY",
      "HAVING", "ORDER BY", "LIMIT", "INTERSECT", "EXCEPT", "UNION", "JOIN", "AND", "OR",   "EQ",     "NEQ",
      "GT",    "LT",     "GTE",   "LTE",      "LIKE",   "IN",    "BETWEEN", "IS",  "NOT",   "EXISTS",
  };
  return kNames[static_cast<std::size_t>(label)];
}

LabeledTree::LabeledTree(NodeLabel root_label) { nodes_.push_back(Node{root_label, {}}); }

std::uint32_t LabeledTree::add_child(std::uint32_t parent, NodeLabel label) {
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{label, {}});
  nodes_[parent].children.push_back(index);
  return index;
}

std::string LabeledTree::to_string() const {
  if (nodes_.empty()) return {};
  std::string out;
  auto visit = [&](auto&& self, std::uint32_t i) -> void {
    out += label_name(nodes_[i].label);
    if (nodes_[i].children.empty()) return;
    out += '(';
    for (std::size_t c = 0; c < nodes_[i].children.size(); ++c) {
      if (c) out += ' ';
      self(self, nodes_[i].children[c]);
    }
    out += ')';
  };
  visit(visit, 0);
  return out;
}

namespace {

class Normalizer {
 public:
  LabeledTree run(const AstNode& root) {
    tree_ = LabeledTree(query_label(root));
    fill_query(root, 0);
    return std::move(tree_);
  }

 private:
  static NodeLabel query_label(const AstNode& q) {
    if (q.kind != NodeKind::kSetOp) return NodeLabel::kSelect;
    if (q.text == "INTERSECT") return NodeLabel::kIntersect;
    if (q.text == "EXCEPT") return NodeLabel::kExcept;
    return NodeLabel::kUnion;
  }

  // Fills an already-created node for query q.
  void fill_query(const AstNode& q, std::uint32_t self) {
    if (q.kind == NodeKind::kSetOp) {
      for (const AstNode& side : q.children) add_query(side, self);
      return;
    }
    for (const AstNode& clause : q.children) {
      switch (clause.kind) {
        case NodeKind::kProjection:
          for (const AstNode& item : clause.children) emit(item, self);
          break;
        case NodeKind::kFrom:
          for (const AstNode& source : clause.children) {
            if (source.kind == NodeKind::kJoin) {
              if (source.text == ",") {
                add_source(source.children[0], self);
              } else {
                const auto join = tree_.add_child(self, NodeLabel::kJoin);
                add_source(source.children[0], join);
                if (source.children.size() > 1) emit(source.children[1].children[0], join);
              }
            } else {
              add_source(source, self);
            }
          }
          break;
        case NodeKind::kWhere:
          emit(clause.children[0], tree_.add_child(self, NodeLabel::kWhere));
          break;
        case NodeKind::kGroupBy: {
          const auto group = tree_.add_child(self, NodeLabel::kGroupBy);
          for (const AstNode& e : clause.children) emit(e, group);
          break;
        }
        case NodeKind::kHaving:
          emit(clause.children[0], tree_.add_child(self, NodeLabel::kHaving));
          break;
        case NodeKind::kOrderBy: {
          const auto order = tree_.add_child(self, NodeLabel::kOrderBy);
          for (const AstNode& item : clause.children) emit(item.children[0], order);
          break;
        }
        case NodeKind::kLimit:
          tree_.add_child(self, NodeLabel::kLimit);
          break;
        default:
          break;
      }
    }
  }

  void add_query(const AstNode& q, std::uint32_t parent) { fill_query(q, tree_.add_child(parent, query_label(q))); }

  void add_source(const AstNode& source, std::uint32_t parent) {
    if (source.kind == NodeKind::kDerivedTable) {
      add_query(source.children[0], parent);
    } else {
      tree_.add_child(parent, NodeLabel::kTable);
    }
  }

  static bool aggregate_label(const std::string& name, NodeLabel& out) {
    if (name == "MIN") out = NodeLabel::kMin;
    else if (name == "MAX") out = NodeLabel::kMax;
    else if (name == "COUNT") out = NodeLabel::kCount;
    else if (name == "SUM") out = NodeLabel::kSum;
    else if (name == "AVG") out = NodeLabel::kAvg;
    else return false;
    return true;
  }

  static NodeLabel comparison_label(const std::string& op) {
    if (op == "=" || op == "IS") return NodeLabel::kEq;
    if (op == "!=" || op == "IS NOT") return NodeLabel::kNeq;
    if (op == ">") return NodeLabel::kGt;
    if (op == "<") return NodeLabel::kLt;
    if (op == ">=") return NodeLabel::kGte;
    return NodeLabel::kLte;
  }

  void emit_children(const AstNode& n, std::uint32_t parent) {
    for (const AstNode& c : n.children) emit(c, parent);
  }

  // Adds the labels contributed by an expression; names and values vanish.
  void emit(const AstNode& n, std::uint32_t parent) {
    switch (n.kind) {
      case NodeKind::kLogical:
        emit_children(n, tree_.add_child(parent, n.text == "AND" ? NodeLabel::kAnd : NodeLabel::kOr));
        return;
      case NodeKind::kNot:
        emit_children(n, tree_.add_child(parent, NodeLabel::kNot));
        return;
      case NodeKind::kComparison:
        emit_children(n, tree_.add_child(parent, comparison_label(n.text)));
        return;
      case NodeKind::kLike:
      case NodeKind::kIn:
      case NodeKind::kBetween:
      case NodeKind::kIsNull: {
        const std::uint32_t host = n.flag ? tree_.add_child(parent, NodeLabel::kNot) : parent;
        const NodeLabel label = n.kind == NodeKind::kLike      ? NodeLabel::kLike
                                : n.kind == NodeKind::kIn      ? NodeLabel::kIn
                                : n.kind == NodeKind::kBetween ? NodeLabel::kBetween
                                                               : NodeLabel::kIs;
        emit_children(n, tree_.add_child(host, label));
        return;
      }
      case NodeKind::kExists: {
        const std::uint32_t host = n.flag ? tree_.add_child(parent, NodeLabel::kNot) : parent;
        emit_children(n, tree_.add_child(host, NodeLabel::kExists));
        return;
      }
      case NodeKind::kSubquery:
        add_query(n.children[0], parent);
        return;
      case NodeKind::kFunction: {
        NodeLabel label{};
        if (aggregate_label(n.text, label)) {
          emit_children(n, tree_.add_child(parent, label));
        } else {
          emit_children(n, parent);
        }
        return;
      }
      case NodeKind::kColumn:
      case NodeKind::kStar:
      case NodeKind::kLiteral:
        return;
      default:
        emit_children(n, parent);
        return;
    }
  }

  LabeledTree tree_;
};

}  // namespace

LabeledTree normalize_ast(const SqlAst& ast) { return Normalizer().run(ast.root); }

}  // namespace sqlicl
