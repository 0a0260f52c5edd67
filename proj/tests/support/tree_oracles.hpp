#pragma once

// Reference implementations used only by tests. They are deliberately naive
// and share no code with src/tree_metric.cpp.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <numeric>
#include <queue>
#include <random>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "sqlicl/sql_ast.hpp"

namespace sqlicl::testing {

struct FNode {
  int label = 0;
  std::vector<FNode> kids;
};
using Forest = std::vector<FNode>;

inline void serialize(const Forest& f, std::string& out) {
  for (const FNode& n : f) {
    out += static_cast<char>('A' + n.label);
    if (!n.kids.empty()) {
      out += '(';
      serialize(n.kids, out);
      out += ')';
    }
  }
}

inline std::string key(const Forest& f) {
  std::string s;
  serialize(f, s);
  return s;
}

inline Forest to_forest(const LabeledTree& t) {
  if (t.empty()) return {};
  auto build = [&](auto&& self, std::uint32_t i) -> FNode {
    FNode n;
    n.label = static_cast<int>(t.node(i).label);
    for (std::uint32_t c : t.node(i).children) n.kids.push_back(self(self, c));
    return n;
  };
  return {build(build, 0)};
}

inline std::size_t forest_size(const Forest& f) {
  std::size_t n = 0;
  for (const FNode& x : f) n += 1 + forest_size(x.kids);
  return n;
}

// Random tree: node i > 0 hangs under a uniformly chosen earlier node.
inline LabeledTree random_tree(std::mt19937_64& rng, std::size_t nodes, int alphabet) {
  std::uniform_int_distribution<int> pick_label(0, alphabet - 1);
  std::vector<int> labels(nodes);
  std::vector<std::vector<std::size_t>> kids(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    labels[i] = pick_label(rng);
    if (i > 0) kids[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)].push_back(i);
  }
  LabeledTree t(static_cast<NodeLabel>(labels[0]));
  auto build = [&](auto&& self, std::size_t src, std::uint32_t dst) -> void {
    for (std::size_t c : kids[src]) self(self, c, t.add_child(dst, static_cast<NodeLabel>(labels[c])));
  };
  build(build, 0, 0);
  return t;
}

// Classic forest recursion on rightmost roots, memoized on serialized forests.
class ForestDistance {
 public:
  std::size_t operator()(const Forest& f, const Forest& g) {
    if (f.empty()) return forest_size(g);
    if (g.empty()) return forest_size(f);
    const std::string k = key(f) + "|" + key(g);
    if (auto it = memo_.find(k); it != memo_.end()) return it->second;
    const FNode& v = f.back();
    const FNode& w = g.back();
    Forest f_minus_v(f.begin(), f.end() - 1);
    f_minus_v.insert(f_minus_v.end(), v.kids.begin(), v.kids.end());
    Forest g_minus_w(g.begin(), g.end() - 1);
    g_minus_w.insert(g_minus_w.end(), w.kids.begin(), w.kids.end());
    const Forest f_rest(f.begin(), f.end() - 1);
    const Forest g_rest(g.begin(), g.end() - 1);
    std::size_t best = (*this)(f_minus_v, g) + 1;
    best = std::min(best, (*this)(f, g_minus_w) + 1);
    best = std::min(best, (*this)(f_rest, g_rest) + (*this)(v.kids, w.kids) + (v.label == w.label ? 0 : 1));
    memo_[k] = best;
    return best;
  }

 private:
  std::unordered_map<std::string, std::size_t> memo_;
};

// Forest encoded in preorder, two bytes per node: label, subtree size. The
// encoding is canonical, so it doubles as the search key.
using Encoded = std::string;

inline void encode(const Forest& f, Encoded& out) {
  for (const FNode& n : f) {
    const std::size_t at = out.size();
    out += static_cast<char>(n.label);
    out += '\0';
    encode(n.kids, out);
    out[at + 1] = static_cast<char>((out.size() - at) / 2);
  }
}

inline std::size_t enc_nodes(const Encoded& e) { return e.size() / 2; }
inline int enc_label(const Encoded& e, std::size_t i) { return e[2 * i]; }
inline std::size_t enc_size(const Encoded& e, std::size_t i) { return static_cast<unsigned char>(e[2 * i + 1]); }

// Adds delta to the subtree size of every proper ancestor of node i.
inline void bump_ancestors(Encoded& e, std::size_t i, int delta) {
  for (std::size_t j = 0; j < i; ++j) {
    if (j + enc_size(e, j) > i) e[2 * j + 1] = static_cast<char>(static_cast<int>(enc_size(e, j)) + delta);
  }
}

struct EncodedStats {
  std::array<int, 64> bag{};
  std::size_t nodes = 0;
  std::size_t leaves = 0;
  std::size_t height = 0;
};

inline EncodedStats stats(const Encoded& e) {
  EncodedStats s;
  s.nodes = enc_nodes(e);
  std::vector<std::size_t> open_ends;  // end positions of open ancestors
  for (std::size_t i = 0; i < s.nodes; ++i) {
    while (!open_ends.empty() && open_ends.back() <= i) open_ends.pop_back();
    ++s.bag[static_cast<std::size_t>(enc_label(e, i))];
    if (enc_size(e, i) == 1) ++s.leaves;
    open_ends.push_back(i + enc_size(e, i));
    s.height = std::max(s.height, open_ends.size());
  }
  return s;
}

// Levenshtein distance between two label sequences.
inline std::size_t sequence_edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] != b[j - 1])});
      diag = up;
    }
  }
  return row[b.size()];
}

inline std::string preorder_labels(const Encoded& e) {
  std::string out;
  for (std::size_t i = 0; i < enc_nodes(e); ++i) out += static_cast<char>(enc_label(e, i));
  return out;
}

inline std::string postorder_labels(const Encoded& e) {
  std::string out;
  std::vector<std::size_t> open;  // open ancestors, innermost last
  for (std::size_t i = 0; i <= enc_nodes(e); ++i) {
    while (!open.empty() && (i == enc_nodes(e) || open.back() + enc_size(e, open.back()) <= i)) {
      out += static_cast<char>(enc_label(e, open.back()));
      open.pop_back();
    }
    if (i < enc_nodes(e)) open.push_back(i);
  }
  return out;
}

struct Target {
  EncodedStats stats;
  std::string pre;
  std::string post;
};

inline Target target_of(const Encoded& e) { return {stats(e), preorder_labels(e), postorder_labels(e)}; }

// Lower bound on remaining edits. Relabel, delete and insert each fix at most
// one unmatched label, move the leaf count and the height by at most one, and
// change the preorder and postorder label sequences by one string edit.
inline std::size_t edit_lower_bound(const Encoded& cur, const Target& goal) {
  const EncodedStats a = stats(cur);
  const EncodedStats& b = goal.stats;
  std::size_t common = 0;
  for (std::size_t l = 0; l < a.bag.size(); ++l) common += static_cast<std::size_t>(std::min(a.bag[l], b.bag[l]));
  const auto diff = [](std::size_t x, std::size_t y) { return x > y ? x - y : y - x; };
  std::size_t bound = std::max({std::max(a.nodes, b.nodes) - common, diff(a.leaves, b.leaves), diff(a.height, b.height)});
  bound = std::max(bound, sequence_edit_distance(preorder_labels(cur), goal.pre));
  return std::max(bound, sequence_edit_distance(postorder_labels(cur), goal.post));
}

// Every forest one unit-cost edit away; inserted and relabelled nodes take
// labels from the alphabet.
inline std::vector<Encoded> neighbours(const Encoded& e, const std::vector<int>& alphabet) {
  std::vector<Encoded> out;
  const std::size_t n = enc_nodes(e);
  for (std::size_t i = 0; i < n; ++i) {
    for (int l : alphabet) {
      if (l == enc_label(e, i)) continue;
      Encoded next = e;
      next[2 * i] = static_cast<char>(l);
      out.push_back(std::move(next));
    }
    // Deleting a node splices its children into its place; in preorder that is
    // just dropping the entry.
    Encoded next = e;
    bump_ancestors(next, i, -1);
    next.erase(2 * i, 2);
    out.push_back(std::move(next));
  }
  // Sibling lists: the top level, then the children of every node.
  std::vector<std::pair<std::size_t, std::vector<std::size_t>>> lists;  // (insert point if empty, members)
  {
    std::vector<std::size_t> roots;
    for (std::size_t i = 0; i < n; i += enc_size(e, i)) roots.push_back(i);
    lists.emplace_back(n, roots);
    for (std::size_t p = 0; p < n; ++p) {
      std::vector<std::size_t> kids;
      for (std::size_t c = p + 1; c < p + enc_size(e, p); c += enc_size(e, c)) kids.push_back(c);
      lists.emplace_back(p + 1, kids);
    }
  }
  for (std::size_t li = 0; li < lists.size(); ++li) {
    const auto& [empty_at, members] = lists[li];
    const std::size_t w = members.size();
    for (std::size_t lo = 0; lo <= w; ++lo) {
      for (std::size_t hi = lo; hi <= w; ++hi) {
        std::size_t pos;
        if (lo < w) {
          pos = members[lo];
        } else if (w > 0) {
          pos = members[w - 1] + enc_size(e, members[w - 1]);
        } else {
          pos = empty_at;
        }
        std::size_t covered = 0;
        for (std::size_t k = lo; k < hi; ++k) covered += enc_size(e, members[k]);
        for (int l : alphabet) {
          Encoded next = e;
          // Parents of the insertion point grow by one. For the top-level list
          // no node encloses pos; for a child list the parent is li - 1.
          if (li > 0) {
            const std::size_t parent = li - 1;
            for (std::size_t j = 0; j <= parent; ++j) {
              if (j == parent || j + enc_size(e, j) > parent) {
                next[2 * j + 1] = static_cast<char>(enc_size(e, j) + 1);
              }
            }
          }
          const char entry[2] = {static_cast<char>(l), static_cast<char>(covered + 1)};
          next.insert(2 * pos, entry, 2);
          out.push_back(std::move(next));
        }
      }
    }
  }
  return out;
}

// Shortest edit script by A* search, giving up past max_cost. Returns
// max_cost + 1 when no script of length <= max_cost exists.
inline std::size_t brute_force_edit_distance(const LabeledTree& a, const LabeledTree& b, std::size_t max_cost) {
  Encoded src, goal;
  encode(to_forest(a), src);
  encode(to_forest(b), goal);
  const Target target = target_of(goal);
  // Optimal scripts only ever introduce labels that occur in the target.
  std::vector<int> alphabet;
  for (std::size_t l = 0; l < target.stats.bag.size(); ++l) {
    if (target.stats.bag[l] > 0) alphabet.push_back(static_cast<int>(l));
  }
  using Item = std::tuple<std::size_t, std::size_t, Encoded>;  // f, g, state
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  std::unordered_map<Encoded, std::size_t> best_g;
  best_g[src] = 0;
  open.emplace(edit_lower_bound(src, target), 0, src);
  while (!open.empty()) {
    auto [f, g, cur] = open.top();
    open.pop();
    if (f > max_cost) break;
    if (g != best_g[cur]) continue;
    if (cur == goal) return g;
    for (Encoded& next : neighbours(cur, alphabet)) {
      const std::size_t ng = g + 1;
      auto it = best_g.find(next);
      if (it != best_g.end() && it->second <= ng) continue;
      const std::size_t nf = ng + edit_lower_bound(next, target);
      if (nf > max_cost) continue;
      best_g[next] = ng;
      open.emplace(nf, ng, std::move(next));
    }
  }
  return max_cost + 1;
}

// pq-grams read directly off the extended tree: p-1 dummy ancestors above the
// root, q-1 dummies on both sides of every child list, q dummies under leaves.
inline std::vector<std::string> extended_tree_grams(const LabeledTree& t, int p, int q) {
  std::vector<std::string> grams;
  if (t.empty()) return grams;
  const auto code = [](NodeLabel l) { return static_cast<char>(static_cast<int>(l) + 1); };
  auto visit = [&](auto&& self, std::uint32_t node, std::vector<char> ancestors) -> void {
    ancestors.push_back(code(t.node(node).label));
    const std::string stem(ancestors.end() - p, ancestors.end());
    std::vector<char> row;
    const auto& kids = t.node(node).children;
    if (kids.empty()) {
      row.assign(static_cast<std::size_t>(q), '\0');
    } else {
      row.assign(static_cast<std::size_t>(q - 1), '\0');
      for (std::uint32_t c : kids) row.push_back(code(t.node(c).label));
      row.insert(row.end(), static_cast<std::size_t>(q - 1), '\0');
    }
    for (std::size_t i = 0; i + static_cast<std::size_t>(q) <= row.size(); ++i) {
      grams.push_back(stem + std::string(row.begin() + static_cast<std::ptrdiff_t>(i),
                                         row.begin() + static_cast<std::ptrdiff_t>(i) + q));
    }
    for (std::uint32_t c : kids) self(self, c, ancestors);
  };
  visit(visit, 0, std::vector<char>(static_cast<std::size_t>(p - 1), '\0'));
  std::sort(grams.begin(), grams.end());
  return grams;
}

inline std::size_t naive_bag_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::map<std::string, long> ca, cb;
  for (const auto& g : a) ++ca[g];
  for (const auto& g : b) ++cb[g];
  long inter = 0;
  for (const auto& [g, n] : ca) {
    if (auto it = cb.find(g); it != cb.end()) inter += std::min(n, it->second);
  }
  return static_cast<std::size_t>(static_cast<long>(a.size() + b.size()) - 2 * inter);
}

}  // namespace sqlicl::testing
