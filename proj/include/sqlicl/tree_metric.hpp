#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sqlicl/sql_ast.hpp"

namespace sqlicl {

// Unit-cost ordered tree edit distance (insert, delete, relabel), computed
// with the Zhang-Shasha keyroot recursion. Empty trees are allowed and cost
// the size of the other tree.
std::size_t tree_edit_distance(const LabeledTree& a, const LabeledTree& b);

// Bag of pq-grams kept sorted, so equal trees give byte-identical profiles.
// A gram is p stem labels followed by q base labels, one byte per label;
// byte 0 is the dummy filler and byte k is NodeLabel value k-1.
struct PqGramProfile {
  int p = 2;
  int q = 3;
  std::vector<std::string> grams;

  bool operator==(const PqGramProfile&) const = default;
};

inline constexpr int kDefaultP = 2;
inline constexpr int kDefaultQ = 3;

// Throws Error(kInvalidArgument) when p or q is below 1.
PqGramProfile pq_gram_profile(const LabeledTree& tree, int p = kDefaultP, int q = kDefaultQ);

// |L1| + |L2| - 2|L1 ∩ L2| with bag intersection (per-gram minimum
// multiplicity). Both profiles are already sorted, so this is one merge pass.
// If comparisons is non-null it is incremented once per gram comparison.
// Throws Error(kParameterMismatch) when (p, q) differ.
std::size_t pq_gram_distance(const PqGramProfile& a, const PqGramProfile& b,
                             std::uint64_t* comparisons = nullptr);

}  // namespace sqlicl
