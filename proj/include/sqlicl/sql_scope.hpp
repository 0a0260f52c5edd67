#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqlicl/schema.hpp"
#include "sqlicl/sql_ast.hpp"

namespace sqlicl {

// A FROM-clause source as seen by name resolution.
struct ScopeSource {
  std::string table;  // real table name; empty for a derived table
  std::string alias;  // empty when not aliased
  const AstNode* node = nullptr;
  std::vector<std::string> derived_columns;  // output names of a derived table
};

struct ResolvedColumn {
  std::string table;  // real table name, or empty when the owner is a derived table
  std::string column;
  const ScopeSource* source = nullptr;
};

// Name resolution for one SELECT core, chained to the enclosing SELECT for
// correlated references. The select node must outlive the scope.
class SqlScope {
 public:
  SqlScope(const AstNode& select, const SqlScope* outer, const DatabaseSchema* schema);

  const std::vector<ScopeSource>& sources() const { return sources_; }
  const SqlScope* outer() const { return outer_; }

  // Source bound to an alias or table name, searching outward.
  const ScopeSource* find_source(std::string_view qualifier) const;

  // Resolves a kColumn node. Returns nullopt when the name is a projection
  // alias rather than a column. Throws Error(kUnsupportedConstruct) when an
  // unqualified name could belong to more than one source.
  std::optional<ResolvedColumn> resolve(const AstNode& column) const;

 private:
  std::optional<ResolvedColumn> resolve_unqualified(const std::string& name, bool innermost) const;

  std::vector<ScopeSource> sources_;
  std::vector<std::string> projection_aliases_;
  const SqlScope* outer_;
  const DatabaseSchema* schema_;
};

// Output column names of a query: aliases, else column names, else "".
std::vector<std::string> query_output_names(const AstNode& query);

}  // namespace sqlicl
