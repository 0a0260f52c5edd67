#include "sqlicl/demo_select.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <random>

#include "binary_io.hpp"
#include "sqlicl/error.hpp"
#include "sqlicl/hashing.hpp"

namespace sqlicl {

namespace {

constexpr std::uint32_t kIndexVersion = 1;
const std::string kIndexMagic = "SQLICLIX";

bool is_aggregate(const AstNode& n) {
  static constexpr std::array<std::string_view, 5> kAgg = {"COUNT", "SUM", "MIN", "MAX", "AVG"};
  return n.kind == NodeKind::kFunction && std::find(kAgg.begin(), kAgg.end(), n.text) != kAgg.end();
}

const AstNode* clause(const AstNode& select, NodeKind kind) {
  for (const auto& c : select.children) {
    if (c.kind == kind) return &c;
  }
  return nullptr;
}

// A condition flattened the way the Spider parser sees it: leaf predicates
// separated by and/or connectors.
struct FlatCondition {
  std::vector<const AstNode*> leaves;
  int ands = 0;
  int ors = 0;
};

void flatten(const AstNode& cond, FlatCondition& out) {
  if (cond.kind == NodeKind::kLogical) {
    const int connectors = static_cast<int>(cond.children.size()) - 1;
    (cond.text == "OR" ? out.ors : out.ands) += connectors;
    for (const auto& c : cond.children) flatten(c, out);
    return;
  }
  out.leaves.push_back(&cond);
}

FlatCondition flatten_clause(const AstNode* c) {
  FlatCondition out;
  if (c && !c->children.empty()) flatten(c->children[0], out);
  return out;
}

// Spider's not_op: set for NOT IN / NOT LIKE / NOT BETWEEN and a leading NOT.
bool negated(const AstNode& leaf) {
  if (leaf.kind == NodeKind::kNot) return true;
  return leaf.flag && (leaf.kind == NodeKind::kIn || leaf.kind == NodeKind::kLike ||
                       leaf.kind == NodeKind::kBetween || leaf.kind == NodeKind::kExists);
}

int nested_in(const AstNode& leaf) {
  const AstNode& core = leaf.kind == NodeKind::kNot && !leaf.children.empty() ? leaf.children[0] : leaf;
  if (core.kind == NodeKind::kExists) return 1;
  int n = 0;
  for (const auto& c : core.children) n += c.kind == NodeKind::kSubquery;
  return n;
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// First k of a seeded Fisher-Yates shuffle of `pool`.
std::vector<std::uint32_t> draw(std::vector<std::uint32_t> pool, std::size_t k, std::mt19937_64& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

void check_k(const CandidateIndex& index, std::size_t k) {
  if (k > kMaxShots) {
    throw Error(ErrorCode::kInvalidArgument, "k=" + std::to_string(k) + " exceeds the cap of " + std::to_string(kMaxShots));
  }
  if (k > index.size()) {
    throw Error(ErrorCode::kPoolTooSmall,
                "k=" + std::to_string(k) + " but the pool holds " + std::to_string(index.size()) + " candidates");
  }
}

// Top k of (score, id) pairs under `better`, ties by ascending id.
template <typename Score, typename Better>
std::vector<std::uint32_t> top_k(std::vector<std::pair<Score, std::uint32_t>> scored, std::size_t k, Better better) {
  auto cmp = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return better(a.first, b.first);
    return a.second < b.second;
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), cmp);
  std::vector<std::uint32_t> ids;
  for (std::size_t i = 0; i < k; ++i) ids.push_back(scored[i].second);
  return ids;
}

}  // namespace

std::string_view hardness_name(Hardness h) {
  switch (h) {
    case Hardness::kEasy: return "easy";
    case Hardness::kMedium: return "medium";
    case Hardness::kHard: return "hard";
    case Hardness::kExtra: return "extra";
  }
  return "?";
}

std::optional<Hardness> parse_hardness(std::string_view name) {
  for (Hardness h : {Hardness::kEasy, Hardness::kMedium, Hardness::kHard, Hardness::kExtra}) {
    if (hardness_name(h) == name) return h;
  }
  return std::nullopt;
}

HardnessComponents hardness_components(const SqlAst& ast) {
  HardnessComponents out;
  const AstNode* top = &ast.root;
  if (top->kind == NodeKind::kSetOp) {
    // The Spider parser hangs everything after the first set operator off the
    // leftmost SELECT, so exactly one nested query is counted.
    out.component2 += 1;
    while (top->kind == NodeKind::kSetOp) top = &top->children[0];
  }
  const AstNode& s = *top;
  const AstNode* proj = clause(s, NodeKind::kProjection);
  const AstNode* from = clause(s, NodeKind::kFrom);
  const AstNode* where = clause(s, NodeKind::kWhere);
  const AstNode* group = clause(s, NodeKind::kGroupBy);
  const AstNode* having = clause(s, NodeKind::kHaving);
  const AstNode* order = clause(s, NodeKind::kOrderBy);
  const AstNode* limit = clause(s, NodeKind::kLimit);

  const FlatCondition w = flatten_clause(where);
  const FlatCondition h = flatten_clause(having);
  FlatCondition on;
  std::size_t from_units = 0;
  if (from) {
    for (const auto& src : from->children) {
      ++from_units;
      if (src.kind == NodeKind::kJoin && src.children.size() > 1) flatten(src.children[1].children[0], on);
    }
  }

  out.component1 += where != nullptr;
  out.component1 += group != nullptr;
  out.component1 += order != nullptr;
  out.component1 += limit != nullptr;
  out.component1 += from_units > 0 ? static_cast<int>(from_units) - 1 : 0;
  out.component1 += w.ors;
  for (const AstNode* leaf : w.leaves) {
    const AstNode& core = leaf->kind == NodeKind::kNot && !leaf->children.empty() ? leaf->children[0] : *leaf;
    out.component1 += core.kind == NodeKind::kLike && core.text == "LIKE";
  }

  for (const FlatCondition* c : std::initializer_list<const FlatCondition*>{&on, &w, &h}) {
    for (const AstNode* leaf : c->leaves) out.component2 += nested_in(*leaf);
  }

  int aggs = 0;
  if (proj) {
    for (const auto& item : proj->children) aggs += is_aggregate(item);
  }
  // The script tests the first field of each WHERE cond_unit, which is the
  // NOT flag, so negated predicates count as aggregations there.
  for (const AstNode* leaf : w.leaves) aggs += negated(*leaf);
  if (group) {
    for (const auto& key : group->children) aggs += is_aggregate(key);
  }
  if (order) {
    for (const auto& item : order->children) {
      const AstNode& e = item.children[0];
      if (e.kind == NodeKind::kArithmetic) {
        for (const auto& operand : e.children) aggs += is_aggregate(operand);
      } else {
        aggs += is_aggregate(e);
      }
    }
  }
  // Same quirk for HAVING, whose list also contains the and/or strings,
  // each of which passes the script's aggregation test.
  for (const AstNode* leaf : h.leaves) aggs += negated(*leaf);
  aggs += h.ands + h.ors;

  out.others += aggs > 1;
  out.others += proj && proj->children.size() > 1;
  out.others += w.leaves.size() > 1;
  out.others += group && group->children.size() > 1;
  return out;
}

Hardness classify_hardness(const SqlAst& ast) {
  const HardnessComponents c = hardness_components(ast);
  const int c1 = c.component1, c2 = c.component2, o = c.others;
  if (c1 <= 1 && o == 0 && c2 == 0) return Hardness::kEasy;
  if ((o <= 2 && c1 <= 1 && c2 == 0) || (c1 <= 2 && o < 2 && c2 == 0)) return Hardness::kMedium;
  if ((o > 2 && c1 <= 2 && c2 == 0) || (c1 > 2 && c1 <= 3 && o <= 2 && c2 == 0) || (c1 <= 1 && o == 0 && c2 <= 1)) {
    return Hardness::kHard;
  }
  return Hardness::kExtra;
}

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kZeroShot: return "zero-shot";
    case Strategy::kRandom: return "random";
    case Strategy::kHardness: return "hardness";
    case Strategy::kJaccard: return "jaccard";
    case Strategy::kStructTree: return "struct-tree";
    case Strategy::kStructGraph: return "struct-graph";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::kZeroShot, Strategy::kRandom, Strategy::kHardness, Strategy::kJaccard,
                     Strategy::kStructTree, Strategy::kStructGraph}) {
    if (strategy_name(s) == name) return s;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown strategy '" + std::string(name) + "'");
}

std::vector<std::string> question_tokens(std::string_view question) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : question) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::size_t common = 0;
  for (auto i = a.begin(), j = b.begin(); i != a.end() && j != b.end();) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++common, ++i, ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - common;
  return uni == 0 ? 0.0 : double(common) / double(uni);
}

CandidateIndex CandidateIndex::build(const std::vector<Example>& train, int p, int q, const Checkpoint* checkpoint,
                                     Embedder* embedder, const SchemaCatalog* schemas, IndexBuildStats* stats) {
  CandidateIndex index;
  index.p_ = p;
  index.q_ = q;
  if (checkpoint) {
    if (!embedder) throw Error(ErrorCode::kInvalidArgument, "embedding an index needs an embedder");
    if (checkpoint->provider_id != embedder->provider_id()) {
      throw Error(ErrorCode::kCheckpointMismatch, "checkpoint was trained with provider " + checkpoint->provider_id +
                                                      " but the embedder is " + embedder->provider_id());
    }
    if (checkpoint->p != static_cast<std::uint32_t>(p) || checkpoint->q != static_cast<std::uint32_t>(q)) {
      throw Error(ErrorCode::kCheckpointMismatch, "checkpoint records pq-gram (" + std::to_string(checkpoint->p) +
                                                      "," + std::to_string(checkpoint->q) + ")");
    }
    index.checkpoint_id_ = checkpoint_fingerprint(*checkpoint);
    index.provider_id_ = checkpoint->provider_id;
    index.embedding_dim_ = checkpoint->params.shape.d_z;
  }
  IndexBuildStats local;
  for (std::size_t row = 0; row < train.size(); ++row) {
    const Example& ex = train[row];
    ++local.rows;
    SqlAst ast;
    try {
      ast = parse_sql(ex.sql);
    } catch (const SyntaxError& e) {
      ++local.skipped;
      spdlog::warn("training row {} skipped: {}", row, e.what());
      continue;
    }
    DemonstrationCandidate c;
    c.id = static_cast<std::uint32_t>(index.candidates_.size());
    c.question = ex.question;
    c.sql = ex.sql;
    c.db_id = ex.db_id;
    c.hardness = classify_hardness(ast);
    c.profile = pq_gram_profile(normalize_ast(ast), p, q);
    if (checkpoint) {
      const DatabaseSchema* schema = schemas ? schemas->find(ex.db_id) : nullptr;
      SqlGraph g;
      try {
        g = build_graph(ast, schema);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kUnsupportedConstruct) throw;
        ++local.skipped;
        spdlog::warn("training row {} skipped: {}", row, e.what());
        continue;
      }
      const Eigen::RowVectorXd z = embed_graph(prepare_input(g, *embedder), checkpoint->params);
      const double norm = z.norm();
      if (norm == 0.0) throw Error(ErrorCode::kZeroNormEmbedding, "candidate " + std::to_string(row));
      for (Eigen::Index i = 0; i < z.size(); ++i) c.embedding.push_back(static_cast<float>(z(i) / norm));
    }
    index.candidates_.push_back(std::move(c));
  }
  index.rebuild_tokens();
  if (stats) *stats = local;
  return index;
}

void CandidateIndex::rebuild_tokens() {
  tokens_.clear();
  for (const auto& c : candidates_) tokens_.push_back(question_tokens(c.question));
}

void CandidateIndex::save(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + file.string());
  out.write(kIndexMagic.data(), static_cast<std::streamsize>(kIndexMagic.size()));
  detail::put_u32(out, kIndexVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(p_));
  detail::put_u32(out, static_cast<std::uint32_t>(q_));
  detail::put_str(out, provider_id_);
  detail::put_str(out, checkpoint_id_);
  detail::put_u32(out, static_cast<std::uint32_t>(embedding_dim_));
  detail::put_u32(out, static_cast<std::uint32_t>(candidates_.size()));
  for (const auto& c : candidates_) {
    detail::put_str(out, c.question);
    detail::put_str(out, c.sql);
    detail::put_str(out, c.db_id);
    detail::put_u32(out, static_cast<std::uint32_t>(c.hardness));
    detail::put_u32(out, static_cast<std::uint32_t>(c.profile.grams.size()));
    for (const auto& g : c.profile.grams) detail::put_str(out, g);
    for (float x : c.embedding) detail::put_f32(out, x);
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + file.string());
}

CandidateIndex CandidateIndex::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + file.string());
  detail::Reader r(in, file.string());
  r.expect_magic(kIndexMagic);
  if (const auto v = r.u32(); v != kIndexVersion) r.fail("unsupported version " + std::to_string(v));
  CandidateIndex index;
  index.p_ = static_cast<int>(r.u32());
  index.q_ = static_cast<int>(r.u32());
  if (index.p_ < 1 || index.q_ < 1 || index.p_ > 16 || index.q_ > 16) r.fail("implausible pq-gram parameters");
  index.provider_id_ = r.str();
  index.checkpoint_id_ = r.str();
  index.embedding_dim_ = r.u32();
  if (index.embedding_dim_ > (1u << 16)) r.fail("implausible embedding width");
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    DemonstrationCandidate c;
    c.id = i;
    c.question = r.str();
    c.sql = r.str();
    c.db_id = r.str();
    const std::uint32_t h = r.u32();
    if (h > static_cast<std::uint32_t>(Hardness::kExtra)) r.fail("bad hardness label");
    c.hardness = static_cast<Hardness>(h);
    c.profile.p = index.p_;
    c.profile.q = index.q_;
    const std::uint32_t grams = r.u32();
    for (std::uint32_t g = 0; g < grams; ++g) c.profile.grams.push_back(r.str(64));
    c.embedding.resize(index.embedding_dim_);
    for (float& x : c.embedding) x = r.f32();
    index.candidates_.push_back(std::move(c));
  }
  if (!r.at_end()) r.fail("trailing bytes");
  index.rebuild_tokens();
  return index;
}

std::vector<std::uint32_t> select_random(const CandidateIndex& index, std::size_t k, std::uint64_t seed) {
  check_k(index, k);
  std::vector<std::uint32_t> all(index.size());
  for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
  std::mt19937_64 rng(derive_seed(seed, "select-random"));
  return draw(std::move(all), k, rng);
}

HardnessSelection select_hardness(const CandidateIndex& index, Hardness target, std::size_t k, std::uint64_t seed) {
  check_k(index, k);
  std::array<std::vector<std::uint32_t>, 4> buckets;
  for (const auto& c : index.candidates()) buckets[static_cast<std::size_t>(c.hardness)].push_back(c.id);
  std::mt19937_64 rng(derive_seed(seed, "select-hardness"));
  const int t = static_cast<int>(target);
  HardnessSelection out;
  out.ids = draw(buckets[static_cast<std::size_t>(t)], k, rng);
  for (int dist = 1; out.ids.size() < k && dist < 4; ++dist) {
    for (int level : {t - dist, t + dist}) {
      if (level < 0 || level > 3 || out.ids.size() >= k) continue;
      out.fell_back = true;
      for (auto id : draw(buckets[static_cast<std::size_t>(level)], k - out.ids.size(), rng)) out.ids.push_back(id);
    }
  }
  if (out.fell_back) {
    spdlog::warn("hardness bucket '{}' holds fewer than {} candidates; topped up from adjacent levels",
                 hardness_name(target), k);
  }
  return out;
}

std::vector<std::uint32_t> select_jaccard(const CandidateIndex& index, std::string_view question, std::size_t k) {
  check_k(index, k);
  const auto q = question_tokens(question);
  std::vector<std::pair<double, std::uint32_t>> scored;
  scored.reserve(index.size());
  for (std::uint32_t i = 0; i < index.size(); ++i) scored.emplace_back(jaccard(q, index.tokens(i)), i);
  return top_k(std::move(scored), k, std::greater<double>());
}

std::vector<std::uint32_t> select_struct_tree(const CandidateIndex& index, const std::string& initial_sql,
                                              std::size_t k) {
  const PqGramProfile probe = pq_gram_profile(normalize_ast(parse_sql(initial_sql)), index.p(), index.q());
  check_k(index, k);
  std::vector<std::pair<std::size_t, std::uint32_t>> scored;
  scored.reserve(index.size());
  for (const auto& c : index.candidates()) scored.emplace_back(pq_gram_distance(probe, c.profile), c.id);
  return top_k(std::move(scored), k, std::less<std::size_t>());
}

std::vector<std::uint32_t> select_struct_graph(const CandidateIndex& index, const Eigen::RowVectorXd& query,
                                               std::size_t k) {
  if (!index.has_embeddings()) {
    throw Error(ErrorCode::kMissingEmbeddings, "index was built without an encoder checkpoint");
  }
  if (static_cast<std::size_t>(query.size()) != index.embedding_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "query embedding width differs from the index");
  }
  check_k(index, k);
  const double norm = query.norm();
  if (norm == 0.0) throw Error(ErrorCode::kZeroNormEmbedding, "query embedding has zero norm");
  const Eigen::RowVectorXd unit = query / norm;
  std::vector<std::pair<double, std::uint32_t>> scored;
  scored.reserve(index.size());
  for (const auto& c : index.candidates()) {
    double dot = 0.0;
    for (std::size_t i = 0; i < c.embedding.size(); ++i) dot += unit(static_cast<Eigen::Index>(i)) * c.embedding[i];
    scored.emplace_back(dot, c.id);
  }
  return top_k(std::move(scored), k, std::greater<double>());
}

std::vector<std::uint32_t> order_for_prompt(std::vector<std::uint32_t> ids, bool most_similar_last) {
  if (most_similar_last) std::reverse(ids.begin(), ids.end());
  return ids;
}

}  // namespace sqlicl
