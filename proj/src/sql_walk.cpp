#include "sql_walk.hpp"

namespace sqlicl::detail {

namespace {

class Walker {
 public:
  Walker(const DatabaseSchema* schema, const NameVisitor& visitor) : schema_(schema), v_(visitor) {}

  void query(AstNode& q, const SqlScope* outer) {
    if (q.kind == NodeKind::kSetOp) {
      query(q.children[0], outer);
      query(q.children[1], outer);
      return;
    }
    const SqlScope scope(q, outer, schema_);
    if (v_.on_select) v_.on_select(q, scope);
    for (AstNode& clause : q.children) {
      if (clause.kind != NodeKind::kFrom) {
        expr(clause, scope);
        continue;
      }
      for (AstNode& child : clause.children) {
        AstNode& src = child.kind == NodeKind::kJoin ? child.children[0] : child;
        if (src.kind == NodeKind::kTableRef) {
          if (v_.on_table) v_.on_table(src, scope);
        } else {
          query(src.children[0], outer);
        }
        if (child.kind == NodeKind::kJoin && child.children.size() > 1) expr(child.children[1], scope);
      }
    }
  }

 private:
  void expr(AstNode& e, const SqlScope& scope) {
    switch (e.kind) {
      case NodeKind::kColumn:
        if (v_.on_column) {
          v_.on_column(e, scope.resolve(e), scope);
        } else {
          scope.resolve(e);
        }
        return;
      case NodeKind::kStar:
        if (v_.on_star) v_.on_star(e, scope);
        return;
      case NodeKind::kSubquery:
        query(e.children[0], &scope);
        return;
      default:
        for (AstNode& c : e.children) expr(c, scope);
    }
  }

  const DatabaseSchema* schema_;
  const NameVisitor& v_;
};

}  // namespace

void walk_names(AstNode& root, const DatabaseSchema* schema, const NameVisitor& visitor) {
  Walker(schema, visitor).query(root, nullptr);
}

}  // namespace sqlicl::detail
