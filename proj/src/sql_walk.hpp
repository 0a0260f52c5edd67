#pragma once

#include <functional>
#include <optional>

#include "sqlicl/schema.hpp"
#include "sqlicl/sql_ast.hpp"
#include "sqlicl/sql_scope.hpp"

namespace sqlicl::detail {

// Visits name references of a statement with resolution scopes alive.
// Callbacks may rewrite names in place (table, column, qualifier text) but
// must not change the tree shape. Scopes snapshot table names on entry, so a
// renamed table ref does not disturb resolution of later references.
struct NameVisitor {
  std::function<void(AstNode& select, const SqlScope& scope)> on_select;
  std::function<void(AstNode& table_ref, const SqlScope& scope)> on_table;
  std::function<void(AstNode& column, const std::optional<ResolvedColumn>& resolved, const SqlScope& scope)> on_column;
  std::function<void(AstNode& star, const SqlScope& scope)> on_star;
};

// Throws Error(kUnsupportedConstruct) on an ambiguous column.
void walk_names(AstNode& root, const DatabaseSchema* schema, const NameVisitor& visitor);

}  // namespace sqlicl::detail
