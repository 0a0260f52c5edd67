#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sqlicl/schema.hpp"
#include "sqlicl/sql_ast.hpp"
#include "sqlicl/sql_graph.hpp"

namespace sqlicl {

enum class AugmentationKind : std::uint8_t {
  kFeatureMasking,
  kKeywordReplacement,
  kValueReplacement,
  kDatabaseReplacement,
  kPredicateModification,
  kJoinSimplification,
};
inline constexpr std::array<AugmentationKind, 6> kAllAugmentations = {
    AugmentationKind::kFeatureMasking,        AugmentationKind::kKeywordReplacement,
    AugmentationKind::kValueReplacement,      AugmentationKind::kDatabaseReplacement,
    AugmentationKind::kPredicateModification, AugmentationKind::kJoinSimplification,
};

std::string_view augmentation_kind_name(AugmentationKind kind);

struct AugmentedInstance {
  SqlGraph graph;
  std::vector<std::uint32_t> masked_node_ids;  // sorted; FeatureMasking only
  SqlAst ast;                                  // edited statement (unchanged for masking)
  std::string source_sql;                      // render_sql(ast)
  AugmentationKind kind = AugmentationKind::kFeatureMasking;
  std::uint64_t seed = 0;
};

// ROOT and the SELECT / JOIN / WHERE / GROUP BY / ORDER BY keywords.
bool is_essential_node(const GraphNode& node);

// String literals seen in a corpus, wildcards stripped. Used as the sampling
// pool for value replacement; a short built-in word list backs an empty pool.
class ValuePool {
 public:
  void harvest(const SqlAst& ast);
  void add(std::string value);
  const std::vector<std::string>& strings() const { return strings_; }

 private:
  std::vector<std::string> strings_;
  std::set<std::string> seen_;
};

// Masks each non-essential node independently with probability rate.
AugmentedInstance feature_mask(const SqlGraph& g, double rate, std::uint64_t seed);

// The AST operators below build the result graph with `schema` when given.
// Keyword classes: {=, !=}, {<, <=, >, >=}, {AND, OR}, {+, -, *, /},
// {COUNT, SUM, MIN, MAX, AVG}; COUNT(*) is left alone.
AugmentedInstance keyword_replace(const SqlAst& ast, std::uint64_t seed, const DatabaseSchema* schema = nullptr);
AugmentedInstance value_replace(const SqlAst& ast, std::uint64_t seed, const ValuePool* pool = nullptr,
                                const DatabaseSchema* schema = nullptr);
// Renames every table and column to those of one donor database other than
// source_db_id, preferring donor columns of the same value type.
AugmentedInstance database_replace(const SqlAst& ast, const SchemaCatalog& donors, std::string_view source_db_id,
                                   std::uint64_t seed);
AugmentedInstance predicate_modify(const SqlAst& ast, std::uint64_t seed, const DatabaseSchema* schema = nullptr);
AugmentedInstance join_simplify(const SqlAst& ast, std::uint64_t seed, const DatabaseSchema* schema = nullptr);

struct AugmentOptions {
  double mask_rate = 0.2;
  const SchemaCatalog* donors = nullptr;  // also supplies the anchor's schema
  std::string db_id;
  const ValuePool* values = nullptr;
};

// Operators whose preconditions hold for this statement.
std::vector<AugmentationKind> applicable_augmentations(const SqlAst& ast, const AugmentOptions& opts);

// Picks uniformly among the six operators, falling back to the others in a
// seeded order when the pick does not apply. Throws
// Error(kNoApplicableOperator) when none does.
AugmentedInstance sample_positive(const SqlAst& anchor, const AugmentOptions& opts, std::uint64_t seed);
AugmentedInstance apply_augmentation(AugmentationKind kind, const SqlAst& anchor, const AugmentOptions& opts,
                                     std::uint64_t seed);

// n distinct indices of [0, corpus_size) other than anchor_index.
// Throws Error(kCorpusTooSmall) when n > corpus_size - 1.
std::vector<std::size_t> sample_negative_indices(std::size_t corpus_size, std::size_t anchor_index, std::size_t n,
                                                 std::uint64_t seed);
std::vector<SqlGraph> sample_negatives(const std::vector<std::string>& corpus, std::size_t anchor_index,
                                       std::size_t n, std::uint64_t seed);

}  // namespace sqlicl
