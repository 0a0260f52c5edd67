#pragma once

#include "sqlicl/sql_ast.hpp"

namespace sqlicl::testing {

// Reference pair for tree edit distance: 10, from 3 deletions, 1 relabel and
// 6 insertions. The first is a grouped aggregate query with HAVING; the second
// an EXCEPT whose left branch is a two-join SELECT and whose remaining
// children match the first tree.
inline LabeledTree ted_reference_left() {
  LabeledTree t(NodeLabel::kSelect);
  t.add_child(0, NodeLabel::kCount);
  const auto where = t.add_child(0, NodeLabel::kWhere);
  t.add_child(where, NodeLabel::kEq);
  t.add_child(0, NodeLabel::kGroupBy);
  t.add_child(0, NodeLabel::kHaving);
  t.add_child(0, NodeLabel::kTable);
  return t;
}

inline LabeledTree ted_reference_right() {
  LabeledTree t(NodeLabel::kExcept);
  const auto select = t.add_child(0, NodeLabel::kSelect);
  t.add_child(select, NodeLabel::kTable);
  const auto j1 = t.add_child(select, NodeLabel::kJoin);
  t.add_child(j1, NodeLabel::kTable);
  const auto j2 = t.add_child(select, NodeLabel::kJoin);
  t.add_child(j2, NodeLabel::kTable);
  t.add_child(0, NodeLabel::kCount);
  const auto where = t.add_child(0, NodeLabel::kWhere);
  t.add_child(where, NodeLabel::kEq);
  return t;
}

}  // namespace sqlicl::testing
