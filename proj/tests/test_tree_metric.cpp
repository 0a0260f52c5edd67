#include <gtest/gtest.h>

#include <random>

#include "sqlicl/error.hpp"
#include "sqlicl/tree_metric.hpp"
#include "support/reference_trees.hpp"
#include "support/tree_oracles.hpp"

namespace sqlicl {
namespace {

TEST(TreeEditDistance, ReferencePairIsTen) {
  EXPECT_EQ(tree_edit_distance(testing::ted_reference_left(), testing::ted_reference_right()), 10u);
  testing::ForestDistance oracle;
  EXPECT_EQ(oracle(testing::to_forest(testing::ted_reference_left()), testing::to_forest(testing::ted_reference_right())), 10u);
}

TEST(TreeEditDistance, IdentityIsZero) {
  const LabeledTree t = testing::ted_reference_right();
  EXPECT_EQ(tree_edit_distance(t, t), 0u);
}

TEST(TreeEditDistance, EmptyTreeCostsOtherSize) {
  EXPECT_EQ(tree_edit_distance(LabeledTree{}, testing::ted_reference_left()), 7u);
  EXPECT_EQ(tree_edit_distance(testing::ted_reference_left(), LabeledTree{}), 7u);
}

TEST(TreeEditDistance, MatchesForestRecursionOnLargerTrees) {
  std::mt19937_64 rng(7);
  testing::ForestDistance oracle;
  for (int trial = 0; trial < 200; ++trial) {
    const LabeledTree a = testing::random_tree(rng, 1 + rng() % 12, 4);
    const LabeledTree b = testing::random_tree(rng, 1 + rng() % 12, 4);
    ASSERT_EQ(tree_edit_distance(a, b), oracle(testing::to_forest(a), testing::to_forest(b)))
        << a.to_string() << " vs " << b.to_string();
  }
}

TEST(TreeEditDistance, MatchesBruteForceScriptSearch) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const LabeledTree a = testing::random_tree(rng, 1 + rng() % 6, 3);
    const LabeledTree b = testing::random_tree(rng, 1 + rng() % 6, 3);
    const std::size_t brute = testing::brute_force_edit_distance(a, b, 6);
    const std::size_t dp = tree_edit_distance(a, b);
    if (brute <= 6) {
      ASSERT_EQ(dp, brute) << a.to_string() << " vs " << b.to_string();
    } else {
      ASSERT_GT(dp, 6u);
    }
  }
}

TEST(TreeEditDistance, MetricAxiomsOnSampledTriples) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const LabeledTree a = testing::random_tree(rng, 1 + rng() % 10, 4);
    const LabeledTree b = testing::random_tree(rng, 1 + rng() % 10, 4);
    const LabeledTree c = testing::random_tree(rng, 1 + rng() % 10, 4);
    const std::size_t ab = tree_edit_distance(a, b);
    EXPECT_EQ(ab, tree_edit_distance(b, a));
    EXPECT_EQ(ab == 0, a == b);
    EXPECT_LE(tree_edit_distance(a, c), ab + tree_edit_distance(b, c));
  }
}

TEST(PqGramProfile, SingleNodeGivesOneGram) {
  const PqGramProfile prof = pq_gram_profile(LabeledTree(NodeLabel::kSelect), 2, 3);
  ASSERT_EQ(prof.grams.size(), 1u);
  const std::string expected = {'\0', static_cast<char>(static_cast<int>(NodeLabel::kSelect) + 1), '\0', '\0', '\0'};
  EXPECT_EQ(prof.grams[0], expected);
}

TEST(PqGramProfile, HandEnumeratedFiveNodeTree) {
  // SELECT(COUNT, WHERE(EQ), TABLE), hand-enumerated with p=2, q=3.
  LabeledTree t(NodeLabel::kSelect);
  t.add_child(0, NodeLabel::kCount);
  const auto where = t.add_child(0, NodeLabel::kWhere);
  t.add_child(where, NodeLabel::kEq);
  t.add_child(0, NodeLabel::kTable);
  const auto c = [](NodeLabel l) { return static_cast<char>(static_cast<int>(l) + 1); };
  const char S = c(NodeLabel::kSelect), C = c(NodeLabel::kCount), W = c(NodeLabel::kWhere),
             E = c(NodeLabel::kEq), T = c(NodeLabel::kTable), _ = '\0';
  std::vector<std::string> expected = {
      {_, S, _, _, C}, {_, S, _, C, W}, {_, S, C, W, T}, {_, S, W, T, _}, {_, S, T, _, _},
      {S, C, _, _, _},  // COUNT is a leaf
      {S, W, _, _, E}, {S, W, _, E, _}, {S, W, E, _, _},
      {W, E, _, _, _},  // EQ is a leaf
      {S, T, _, _, _},  // TABLE is a leaf
  };
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(pq_gram_profile(t, 2, 3).grams, expected);
}

TEST(PqGramProfile, MatchesExtendedTreeDefinition) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const LabeledTree t = testing::random_tree(rng, 1 + rng() % 20, 5);
    const int p = 1 + static_cast<int>(rng() % 3);
    const int q = 1 + static_cast<int>(rng() % 4);
    ASSERT_EQ(pq_gram_profile(t, p, q).grams, testing::extended_tree_grams(t, p, q));
  }
}

TEST(PqGramProfile, RejectsNonPositiveParameters) {
  EXPECT_THROW(pq_gram_profile(LabeledTree(NodeLabel::kSelect), 0, 3), Error);
  EXPECT_THROW(pq_gram_profile(LabeledTree(NodeLabel::kSelect), 2, 0), Error);
}

TEST(PqGramDistance, SelfIsZeroAndDisjointIsSum) {
  const PqGramProfile a = pq_gram_profile(testing::ted_reference_left());
  EXPECT_EQ(pq_gram_distance(a, a), 0u);

  PqGramProfile x{2, 3, {"a", "b", "c", "d"}};
  PqGramProfile y{2, 3, {"e", "f", "g", "h", "i", "j"}};
  EXPECT_EQ(pq_gram_distance(x, y), 10u);
}

TEST(PqGramDistance, ParameterMismatchThrows) {
  const LabeledTree t = testing::ted_reference_left();
  try {
    pq_gram_distance(pq_gram_profile(t, 2, 3), pq_gram_profile(t, 1, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParameterMismatch);
  }
}

TEST(PqGramDistance, MatchesNaiveBagArithmetic) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    const LabeledTree a = testing::random_tree(rng, 1 + rng() % 30, 3);
    const LabeledTree b = testing::random_tree(rng, 1 + rng() % 30, 3);
    const PqGramProfile pa = pq_gram_profile(a);
    const PqGramProfile pb = pq_gram_profile(b);
    const std::size_t d = pq_gram_distance(pa, pb);
    ASSERT_EQ(d, testing::naive_bag_distance(pa.grams, pb.grams));
    ASSERT_EQ(d, pq_gram_distance(pb, pa));
  }
}

TEST(PqGramDistance, ComparisonCountIsLinearInProfileSize) {
  std::mt19937_64 rng(13);
  const LabeledTree a = testing::random_tree(rng, 1000, 6);
  const LabeledTree b = testing::random_tree(rng, 1000, 6);
  const PqGramProfile pa = pq_gram_profile(a);
  const PqGramProfile pb = pq_gram_profile(b);
  std::uint64_t count = 0;
  pq_gram_distance(pa, pb, &count);
  EXPECT_LE(count, pa.grams.size() + pb.grams.size());
}

}  // namespace
}  // namespace sqlicl
