#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqlicl/dataset.hpp"
#include "sqlicl/gcl.hpp"
#include "sqlicl/sql_ast.hpp"
#include "sqlicl/tree_metric.hpp"

namespace sqlicl {

enum class Hardness : std::uint8_t { kEasy, kMedium, kHard, kExtra };
std::string_view hardness_name(Hardness h);
// Accepts easy/medium/hard/extra.
std::optional<Hardness> parse_hardness(std::string_view name);

// The three counters of the Spider evaluation script, computed on the
// outermost SELECT (set-operator right-hand sides only add to component2).
struct HardnessComponents {
  int component1 = 0;  // WHERE, GROUP BY, ORDER BY, LIMIT, extra FROM units, ORs, LIKEs
  int component2 = 0;  // nested queries in conditions plus set operators
  int others = 0;      // >1 aggregate, >1 select item, >1 WHERE condition, >1 GROUP BY key
};
HardnessComponents hardness_components(const SqlAst& ast);
Hardness classify_hardness(const SqlAst& ast);

enum class Strategy : std::uint8_t { kZeroShot, kRandom, kHardness, kJaccard, kStructTree, kStructGraph };
std::string_view strategy_name(Strategy s);
// zero-shot, random, hardness, jaccard, struct-tree, struct-graph.
Strategy parse_strategy(std::string_view name);

inline constexpr std::size_t kDefaultShots = 5;
inline constexpr std::size_t kMaxShots = 10;

struct DemonstrationCandidate {
  std::uint32_t id = 0;  // position in the index
  std::string question;
  std::string sql;
  std::string db_id;
  Hardness hardness = Hardness::kEasy;
  PqGramProfile profile;
  std::vector<float> embedding;  // unit length; empty when the index has no encoder

  bool operator==(const DemonstrationCandidate&) const = default;
};

// Lowercased, split on non-alphanumerics, sorted and deduplicated.
std::vector<std::string> question_tokens(std::string_view question);
double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

struct IndexBuildStats {
  std::size_t rows = 0;
  std::size_t skipped = 0;  // unparseable SQL
};

class CandidateIndex {
 public:
  // Parses, labels and profiles every training row, skipping rows whose SQL
  // does not parse. With a checkpoint the encoder embeds every candidate;
  // the checkpoint must match the embedder's provider and (p, q), else
  // Error(kCheckpointMismatch). schemas (optional) resolves columns.
  static CandidateIndex build(const std::vector<Example>& train, int p, int q, const Checkpoint* checkpoint = nullptr,
                              Embedder* embedder = nullptr, const SchemaCatalog* schemas = nullptr,
                              IndexBuildStats* stats = nullptr);

  const std::vector<DemonstrationCandidate>& candidates() const { return candidates_; }
  std::size_t size() const { return candidates_.size(); }
  const std::vector<std::string>& tokens(std::size_t id) const { return tokens_[id]; }
  bool has_embeddings() const { return embedding_dim_ > 0; }
  std::size_t embedding_dim() const { return embedding_dim_; }
  int p() const { return p_; }
  int q() const { return q_; }
  const std::string& checkpoint_id() const { return checkpoint_id_; }
  const std::string& provider_id() const { return provider_id_; }

  // "SQLICLIX", u32 version, u32 p, q, provider id, checkpoint id, u32
  // embedding width, u32 count, then per candidate question, sql, db_id,
  // u32 hardness, u32 gram count, grams, and width LE float32 values.
  void save(const std::filesystem::path& file) const;
  static CandidateIndex load(const std::filesystem::path& file);

 private:
  void rebuild_tokens();

  std::vector<DemonstrationCandidate> candidates_;
  std::vector<std::vector<std::string>> tokens_;
  std::size_t embedding_dim_ = 0;
  int p_ = kDefaultP;
  int q_ = kDefaultQ;
  std::string checkpoint_id_;
  std::string provider_id_;
};

// Every selector returns candidate ids, most similar first. PoolTooSmall is
// raised when k exceeds the pool or kMaxShots.
std::vector<std::uint32_t> select_random(const CandidateIndex& index, std::size_t k, std::uint64_t seed);

struct HardnessSelection {
  std::vector<std::uint32_t> ids;
  bool fell_back = false;  // target bucket had fewer than k candidates
};
// Random k from the target bucket. A short bucket is topped up from the
// nearest other levels (lower level first on ties), with fell_back set.
HardnessSelection select_hardness(const CandidateIndex& index, Hardness target, std::size_t k, std::uint64_t seed);

// Top k by Jaccard over question tokens; ties by ascending id.
std::vector<std::uint32_t> select_jaccard(const CandidateIndex& index, std::string_view question, std::size_t k);
// Top k by ascending pq-gram distance to the normalized AST of initial_sql;
// ties by ascending id. Throws SyntaxError if it does not parse.
std::vector<std::uint32_t> select_struct_tree(const CandidateIndex& index, const std::string& initial_sql,
                                              std::size_t k);
// Top k by cosine to query (any norm); ties by ascending id. Throws
// Error(kMissingEmbeddings) for an index built without an encoder.
std::vector<std::uint32_t> select_struct_graph(const CandidateIndex& index, const Eigen::RowVectorXd& query,
                                               std::size_t k);

// Reverses a most-similar-first list when most_similar_last is set.
std::vector<std::uint32_t> order_for_prompt(std::vector<std::uint32_t> ids, bool most_similar_last = true);

}  // namespace sqlicl
