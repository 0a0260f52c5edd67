#include "sqlicl/tree_metric.hpp"

#include <algorithm>

#include "sqlicl/error.hpp"

namespace sqlicl {

namespace {

struct PostorderView {
  std::vector<NodeLabel> label;      // by postorder index, 1-based
  std::vector<std::size_t> leftmost;  // leftmost leaf descendant, 1-based
  std::vector<std::size_t> keyroots;
};

PostorderView postorder(const LabeledTree& t) {
  PostorderView v;
  const std::size_t n = t.size();
  v.label.assign(n + 1, NodeLabel::kRoot);
  v.leftmost.assign(n + 1, 0);
  if (n == 0) return v;
  std::size_t next = 1;
  auto visit = [&](auto&& self, std::uint32_t node) -> std::size_t {
    std::size_t lm = 0;
    for (std::uint32_t c : t.node(node).children) {
      const std::size_t child_lm = self(self, c);
      if (lm == 0) lm = child_lm;
    }
    const std::size_t id = next++;
    v.label[id] = t.node(node).label;
    v.leftmost[id] = lm == 0 ? id : lm;
    return v.leftmost[id];
  };
  visit(visit, 0);
  // A keyroot is the highest node for each distinct leftmost leaf.
  std::vector<bool> seen(n + 1, false);
  for (std::size_t i = n; i >= 1; --i) {
    if (!seen[v.leftmost[i]]) {
      seen[v.leftmost[i]] = true;
      v.keyroots.push_back(i);
    }
  }
  std::reverse(v.keyroots.begin(), v.keyroots.end());
  return v;
}

}  // namespace

std::size_t tree_edit_distance(const LabeledTree& a, const LabeledTree& b) {
  if (a.empty()) return b.size();
  if (b.empty()) return a.size();
  const PostorderView x = postorder(a);
  const PostorderView y = postorder(b);
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  std::vector<std::size_t> td((n + 1) * (m + 1), 0);
  std::vector<std::size_t> fd((n + 2) * (m + 2), 0);
  const auto T = [&](std::size_t i, std::size_t j) -> std::size_t& { return td[i * (m + 1) + j]; };

  for (std::size_t i : x.keyroots) {
    for (std::size_t j : y.keyroots) {
      const std::size_t li = x.leftmost[i];
      const std::size_t lj = y.leftmost[j];
      const std::size_t rows = i - li + 2;
      const std::size_t cols = j - lj + 2;
      const auto F = [&](std::size_t r, std::size_t c) -> std::size_t& { return fd[r * cols + c]; };
      F(0, 0) = 0;
      for (std::size_t r = 1; r < rows; ++r) F(r, 0) = F(r - 1, 0) + 1;
      for (std::size_t c = 1; c < cols; ++c) F(0, c) = F(0, c - 1) + 1;
      for (std::size_t r = 1; r < rows; ++r) {
        const std::size_t i1 = li + r - 1;
        for (std::size_t c = 1; c < cols; ++c) {
          const std::size_t j1 = lj + c - 1;
          const std::size_t del = F(r - 1, c) + 1;
          const std::size_t ins = F(r, c - 1) + 1;
          if (x.leftmost[i1] == li && y.leftmost[j1] == lj) {
            const std::size_t sub = F(r - 1, c - 1) + (x.label[i1] == y.label[j1] ? 0 : 1);
            F(r, c) = std::min({del, ins, sub});
            T(i1, j1) = F(r, c);
          } else {
            const std::size_t pr = x.leftmost[i1] - li;
            const std::size_t pc = y.leftmost[j1] - lj;
            F(r, c) = std::min({del, ins, F(pr, pc) + T(i1, j1)});
          }
        }
      }
    }
  }
  return T(n, m);
}

PqGramProfile pq_gram_profile(const LabeledTree& tree, int p, int q) {
  if (p < 1 || q < 1) throw Error(ErrorCode::kInvalidArgument, "pq-gram parameters must be positive");
  PqGramProfile profile;
  profile.p = p;
  profile.q = q;
  if (tree.empty()) return profile;

  const auto code = [](NodeLabel l) { return static_cast<char>(static_cast<unsigned char>(l) + 1); };
  // Shift registers: drop the oldest label, append the newest.
  const auto shift = [](std::string& reg, char label) {
    reg.erase(reg.begin());
    reg.push_back(label);
  };

  auto visit = [&](auto&& self, std::uint32_t node, std::string stem) -> void {
    shift(stem, code(tree.node(node).label));
    std::string base(static_cast<std::size_t>(q), '\0');
    const auto& children = tree.node(node).children;
    if (children.empty()) {
      profile.grams.push_back(stem + base);
      return;
    }
    for (std::uint32_t c : children) {
      shift(base, code(tree.node(c).label));
      profile.grams.push_back(stem + base);
      self(self, c, stem);
    }
    for (int k = 1; k < q; ++k) {
      shift(base, '\0');
      profile.grams.push_back(stem + base);
    }
  };
  visit(visit, 0, std::string(static_cast<std::size_t>(p), '\0'));
  std::sort(profile.grams.begin(), profile.grams.end());
  return profile;
}

std::size_t pq_gram_distance(const PqGramProfile& a, const PqGramProfile& b, std::uint64_t* comparisons) {
  if (a.p != b.p || a.q != b.q) {
    throw Error(ErrorCode::kParameterMismatch, "profiles built with different (p, q)");
  }
  std::size_t common = 0;
  std::uint64_t cmp = 0;
  auto ia = a.grams.begin();
  auto ib = b.grams.begin();
  while (ia != a.grams.end() && ib != b.grams.end()) {
    ++cmp;
    const int c = ia->compare(*ib);
    if (c == 0) {
      ++common;
      ++ia;
      ++ib;
    } else if (c < 0) {
      ++ia;
    } else {
      ++ib;
    }
  }
  if (comparisons) *comparisons += cmp;
  return a.grams.size() + b.grams.size() - 2 * common;
}

}  // namespace sqlicl
