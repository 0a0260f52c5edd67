#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "sqlicl/error.hpp"
#include "sqlicl/sql_graph.hpp"
#include "support/sql_corpus.hpp"

namespace sqlicl {
namespace {

std::size_t count_class(const SqlGraph& g, GraphNodeClass cls) {
  return std::count_if(g.nodes.begin(), g.nodes.end(), [&](const GraphNode& n) { return n.cls == cls; });
}

std::size_t count_keyword(const SqlGraph& g, std::string_view text) {
  return std::count_if(g.nodes.begin(), g.nodes.end(),
                       [&](const GraphNode& n) { return n.cls == GraphNodeClass::kKeyword && n.text == text; });
}

std::vector<std::uint32_t> parents_of(const SqlGraph& g, std::uint32_t v) {
  std::vector<std::uint32_t> out;
  for (const auto& [a, b] : g.edges) {
    if (b == v) out.push_back(a);
  }
  return out;
}

DatabaseSchema pets_schema() {
  DatabaseSchema s;
  s.db_id = "pets_1";
  s.tables = {
      {"Student", {{"StuID", "number"}, {"LName", "text"}, {"Fname", "text"}, {"Age", "number"}, {"Major", "number"}},
       {"StuID"}},
      {"Has_Pet", {{"StuID", "number"}, {"PetID", "number"}}, {}},
      {"Pets", {{"PetID", "number"}, {"PetType", "text"}, {"pet_age", "number"}, {"weight", "number"}}, {"PetID"}},
  };
  s.foreign_keys = {{"Has_Pet", "StuID", "Student", "StuID"}, {"Has_Pet", "PetID", "Pets", "PetID"}};
  return s;
}

TEST(SqlGraph, PetOwnerExceptStructure) {
  const SqlGraph g = build_graph(parse_sql(testing::kPetOwnerExceptSql));
  EXPECT_EQ(count_class(g, GraphNodeClass::kRoot), 1u);
  EXPECT_EQ(count_class(g, GraphNodeClass::kTable), 3u);
  EXPECT_EQ(count_keyword(g, "JOIN"), 2u);
  ASSERT_EQ(count_class(g, GraphNodeClass::kValue), 1u);
  EXPECT_TRUE(is_acyclic(g));

  std::set<std::string> tables;
  for (const auto& n : g.nodes) {
    if (n.cls == GraphNodeClass::kTable) tables.insert(n.text);
  }
  EXPECT_EQ(tables, (std::set<std::string>{"student", "has_pet", "pets"}));

  const auto value = static_cast<std::uint32_t>(
      std::find_if(g.nodes.begin(), g.nodes.end(), [](const GraphNode& n) { return n.cls == GraphNodeClass::kValue; }) -
      g.nodes.begin());
  EXPECT_EQ(g.nodes[value].text, "cat");
  const auto parents = parents_of(g, value);
  ASSERT_EQ(parents.size(), 1u);
  EXPECT_EQ(g.nodes[parents[0]].text, "EQ");

  // student:stuid is shared by both SELECTs and the first ON condition.
  const auto stuid = static_cast<std::uint32_t>(
      std::find_if(g.nodes.begin(), g.nodes.end(), [](const GraphNode& n) { return n.text == "student:stuid"; }) -
      g.nodes.begin());
  ASSERT_LT(stuid, g.size());
  EXPECT_EQ(parents_of(g, stuid).size(), 4u);  // student, SELECT, SELECT, EQ
  EXPECT_EQ(g.size(), 19u);
}

TEST(SqlGraph, CountStar) {
  const SqlGraph g = build_graph(parse_sql("SELECT count(*) FROM singer"));
  ASSERT_EQ(g.size(), 4u);
  EXPECT_EQ(g.nodes[0], (GraphNode{GraphNodeClass::kRoot, "ROOT"}));
  EXPECT_EQ(g.nodes[1], (GraphNode{GraphNodeClass::kKeyword, "SELECT"}));
  EXPECT_EQ(g.nodes[2], (GraphNode{GraphNodeClass::kKeyword, "COUNT"}));
  EXPECT_EQ(g.nodes[3], (GraphNode{GraphNodeClass::kTable, "singer"}));
  EXPECT_EQ(g.edges, (std::vector<GraphEdge>{{0, 1}, {1, 2}, {1, 3}}));
}

TEST(SqlGraph, HavingAndGroupByHangOffSelect) {
  const SqlGraph g = build_graph(parse_sql("SELECT a FROM t GROUP BY a HAVING count(*) > 1"));
  for (std::uint32_t v = 0; v < g.size(); ++v) {
    if (g.nodes[v].text == "GROUP BY" || g.nodes[v].text == "HAVING") {
      const auto p = parents_of(g, v);
      ASSERT_EQ(p.size(), 1u);
      EXPECT_EQ(g.nodes[p[0]].text, "SELECT");
    }
  }
}

TEST(SqlGraph, Deterministic) {
  for (const auto& sql : testing::handwritten_queries()) {
    SqlAst ast;
    try {
      ast = parse_sql(sql);
      const SqlGraph a = build_graph(ast);
      EXPECT_EQ(a, build_graph(parse_sql(sql))) << sql;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kUnsupportedConstruct) << sql;
    }
  }
}

TEST(SqlGraph, CorpusInvariants) {
  const DatabaseSchema schema = pets_schema();
  std::size_t built = 0;
  for (const auto& sql : testing::handwritten_queries()) {
    SqlGraph g;
    try {
      g = build_graph(parse_sql(sql), &schema);
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::kUnsupportedConstruct) << sql;
      continue;
    }
    ++built;
    ASSERT_TRUE(is_acyclic(g)) << sql;
    std::set<std::string> table_texts;
    std::size_t roots = 0;
    for (std::uint32_t v = 0; v < g.size(); ++v) {
      const auto parents = parents_of(g, v);
      if (parents.empty()) ++roots;
      const auto& n = g.nodes[v];
      if (n.cls == GraphNodeClass::kTable) EXPECT_TRUE(table_texts.insert(n.text).second) << sql;
      if (n.cls == GraphNodeClass::kColumn && n.text.front() != ':') {
        const std::string owner = n.text.substr(0, n.text.find(':'));
        EXPECT_TRUE(std::any_of(parents.begin(), parents.end(), [&](std::uint32_t p) {
          return g.nodes[p].cls == GraphNodeClass::kTable && g.nodes[p].text == owner;
        })) << sql;
      }
      if (n.cls == GraphNodeClass::kValue) {
        ASSERT_EQ(parents.size(), 1u) << sql;
        EXPECT_EQ(g.nodes[parents[0]].cls, GraphNodeClass::kKeyword) << sql;
      }
    }
    EXPECT_EQ(roots, 1u) << sql;
    EXPECT_EQ(g.nodes[0].cls, GraphNodeClass::kRoot);
  }
  EXPECT_GE(built, testing::handwritten_queries().size() - 3);
}

TEST(SqlGraph, JoinCountMatchesClauses) {
  const SqlGraph g = build_graph(parse_sql(
      "SELECT T1.a FROM x AS T1 JOIN y AS T2 ON T1.id = T2.id JOIN z AS T3 ON T3.id = T2.id JOIN x AS T4 ON T4.id = "
      "T3.id"));
  EXPECT_EQ(count_keyword(g, "JOIN"), 3u);
  EXPECT_EQ(count_class(g, GraphNodeClass::kTable), 3u);
}

TEST(SqlGraph, AmbiguousColumnNeedsSchema) {
  const auto ast = parse_sql("SELECT fname FROM student AS T1 JOIN has_pet AS T2 ON T1.stuid = T2.stuid");
  try {
    build_graph(ast);
    FAIL() << "expected UnsupportedConstruct";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnsupportedConstruct);
  }
  const DatabaseSchema schema = pets_schema();
  const SqlGraph g = build_graph(ast, &schema);
  EXPECT_EQ(count_keyword(g, "JOIN"), 1u);
  EXPECT_TRUE(std::any_of(g.nodes.begin(), g.nodes.end(), [](const GraphNode& n) { return n.text == "student:fname"; }));

  const auto both = parse_sql("SELECT stuid FROM student AS T1 JOIN has_pet AS T2 ON T1.stuid = T2.stuid");
  EXPECT_THROW(build_graph(both, &schema), Error);
}

TEST(SqlGraph, AliasesNeverAppear) {
  const SqlGraph g = build_graph(parse_sql(testing::kPetOwnerExceptSql));
  for (const auto& n : g.nodes) {
    EXPECT_EQ(n.text.find("t1"), std::string::npos);
    EXPECT_EQ(n.text.find("T1"), std::string::npos);
  }
}

TEST(SqlGraph, FingerprintPermutationInvariant) {
  std::mt19937_64 rng(7);
  for (const auto& sql : testing::handwritten_queries()) {
    SqlGraph g;
    try {
      g = build_graph(parse_sql(sql));
    } catch (const Error&) {
      continue;
    }
    const std::string fp = graph_fingerprint(g);
    EXPECT_EQ(fp.size(), 64u);
    std::vector<std::uint32_t> perm(g.size());
    std::iota(perm.begin(), perm.end(), 0u);
    std::shuffle(perm.begin(), perm.end(), rng);
    EXPECT_EQ(graph_fingerprint(permute_graph(g, perm)), fp) << sql;
  }
}

TEST(SqlGraph, FingerprintSeesValueText) {
  const auto a = graph_fingerprint(build_graph(parse_sql("SELECT a FROM t WHERE b = 'cat'")));
  const auto b = graph_fingerprint(build_graph(parse_sql("SELECT a FROM t WHERE b = 'dog'")));
  const auto c = graph_fingerprint(build_graph(parse_sql("SELECT a FROM t WHERE b > 'cat'")));
  EXPECT_NE(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(a, graph_fingerprint(build_graph(parse_sql("select a from T where b = 'cat'"))));
}

TEST(SqlGraph, TextExportRoundTrip) {
  const SqlGraph g = build_graph(parse_sql("SELECT a FROM t WHERE b = 'it''s \"odd\"\nline'"));
  const std::string text = export_graph_text(g);
  EXPECT_EQ(import_graph_text(text), g);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), static_cast<long>(g.size() + g.edges.size()));
  EXPECT_THROW(import_graph_text("node 0 Banana \"x\"\n"), Error);
  EXPECT_THROW(import_graph_text("node 0 Root \"ROOT\"\nedge 0 5\n"), Error);
}

}  // namespace
}  // namespace sqlicl
