#include "sqlicl/sql_scope.hpp"

#include "sqlicl/error.hpp"
#include "sql_text_util.hpp"

namespace sqlicl {

std::vector<std::string> query_output_names(const AstNode& query) {
  const AstNode* select = &query;
  while (select->kind == NodeKind::kSetOp) select = &select->children[0];
  std::vector<std::string> names;
  for (const AstNode& item : select->children[0].children) {
    if (!item.alias.empty()) {
      names.push_back(item.alias);
    } else if (item.kind == NodeKind::kColumn) {
      names.push_back(item.text);
    } else {
      names.emplace_back();
    }
  }
  return names;
}

SqlScope::SqlScope(const AstNode& select, const SqlScope* outer, const DatabaseSchema* schema)
    : outer_(outer), schema_(schema) {
  for (const AstNode& clause : select.children) {
    if (clause.kind == NodeKind::kProjection) {
      for (const AstNode& item : clause.children) {
        if (!item.alias.empty()) projection_aliases_.push_back(item.alias);
      }
    }
    if (clause.kind != NodeKind::kFrom) continue;
    for (const AstNode& child : clause.children) {
      const AstNode& src = child.kind == NodeKind::kJoin ? child.children[0] : child;
      ScopeSource s;
      s.node = &src;
      s.alias = src.alias;
      if (src.kind == NodeKind::kTableRef) {
        s.table = src.text;
        if (schema_) {
          if (const Table* t = schema_->find_table(src.text)) s.table = t->name;
        }
      } else {
        s.derived_columns = query_output_names(src.children[0]);
      }
      sources_.push_back(std::move(s));
    }
  }
}

const ScopeSource* SqlScope::find_source(std::string_view qualifier) const {
  for (const SqlScope* scope = this; scope; scope = scope->outer_) {
    for (const ScopeSource& s : scope->sources_) {
      if (!s.alias.empty() && detail::iequals(s.alias, qualifier)) return &s;
    }
    for (const ScopeSource& s : scope->sources_) {
      if (s.alias.empty() && !s.table.empty() && detail::iequals(s.table, qualifier)) return &s;
    }
    // Lenient: a table referenced by name although it was aliased.
    for (const ScopeSource& s : scope->sources_) {
      if (!s.table.empty() && detail::iequals(s.table, qualifier)) return &s;
    }
  }
  return nullptr;
}

std::optional<ResolvedColumn> SqlScope::resolve(const AstNode& column) const {
  if (!column.qualifier.empty()) {
    ResolvedColumn r;
    r.column = column.text;
    if (const ScopeSource* s = find_source(column.qualifier)) {
      r.table = s->table;
      r.source = s;
    } else {
      r.table = column.qualifier;
    }
    if (schema_ && !r.table.empty()) {
      if (const Column* c = schema_->find_column(r.table, r.column)) r.column = c->name;
    }
    return r;
  }
  return resolve_unqualified(column.text, true);
}

std::optional<ResolvedColumn> SqlScope::resolve_unqualified(const std::string& name, bool innermost) const {
  std::vector<const ScopeSource*> owners;
  for (const ScopeSource& s : sources_) {
    if (s.table.empty()) {
      for (const std::string& out : s.derived_columns) {
        if (detail::iequals(out, name)) {
          owners.push_back(&s);
          break;
        }
      }
    } else if (schema_ && schema_->find_column(s.table, name)) {
      owners.push_back(&s);
    }
  }
  if (owners.size() > 1) {
    // A self-join of one table is still unambiguous only if all owners agree.
    bool same = true;
    for (const ScopeSource* o : owners) same = same && detail::iequals(o->table, owners[0]->table) && !o->table.empty();
    if (!same) throw Error(ErrorCode::kUnsupportedConstruct, "ambiguous column reference " + name);
  }
  if (!owners.empty()) {
    ResolvedColumn r{owners[0]->table, name, owners[0]};
    if (schema_ && !r.table.empty()) {
      if (const Column* c = schema_->find_column(r.table, name)) r.column = c->name;
    }
    return r;
  }
  for (const std::string& alias : projection_aliases_) {
    if (detail::iequals(alias, name)) return std::nullopt;
  }
  if (outer_) {
    // Without a schema an outer table only claims a name it is known to own,
    // so fall through to the local fallback below.
    if (schema_) {
      if (auto r = outer_->resolve_unqualified(name, false)) return r;
    }
  }
  if (!innermost && schema_) return std::nullopt;
  // Unknown to the schema (or no schema): attribute to the only source.
  if (sources_.size() == 1) return ResolvedColumn{sources_[0].table, name, &sources_[0]};
  if (sources_.empty() && outer_) return outer_->resolve_unqualified(name, innermost);
  throw Error(ErrorCode::kUnsupportedConstruct, "cannot resolve unqualified column " + name);
}

}  // namespace sqlicl
