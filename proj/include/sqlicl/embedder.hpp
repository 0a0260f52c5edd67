#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "sqlicl/sql_graph.hpp"

namespace sqlicl {

inline constexpr std::size_t kDefaultTextDim = 128;
inline constexpr const char* kMaskToken = "<MASK>";

// A text embedding model. Implementations return vectors of exactly dim()
// entries and must be deterministic per input string.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // Stable identifier written into caches and checkpoints.
  virtual std::string id() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::vector<std::vector<float>> embed_batch(const std::vector<std::string>& texts) = 0;
};

// Offline fallback: lowercased character trigrams of "^text$", each hashed
// with a fixed seed to a signed bucket, then L2-normalized.
class TrigramHashProvider final : public EmbeddingProvider {
 public:
  explicit TrigramHashProvider(std::size_t dim = kDefaultTextDim);
  std::string id() const override;
  std::size_t dim() const override { return dim_; }
  std::vector<std::vector<float>> embed_batch(const std::vector<std::string>& texts) override;
  std::vector<float> embed_one(const std::string& text) const;

 private:
  std::size_t dim_;
};

struct RemoteEmbeddingConfig {
  std::string endpoint;                         // full URL of an OpenAI-style /embeddings route
  std::string model;
  std::string api_key_env = "SQLICL_EMBED_API_KEY";
  std::size_t dim = 0;                          // expected width; a mismatch is an error
  std::size_t batch_size = 64;
  int timeout_seconds = 60;
};

// POSTs {"model", "input": [...]} and reads data[i].embedding. Any transport
// failure, non-2xx status or malformed reply throws Error(kProviderUnavailable).
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit RemoteEmbeddingProvider(RemoteEmbeddingConfig cfg);
  std::string id() const override;
  std::size_t dim() const override { return cfg_.dim; }
  std::vector<std::vector<float>> embed_batch(const std::vector<std::string>& texts) override;

 private:
  RemoteEmbeddingConfig cfg_;
};

// Builds a provider from a spec string: "trigram" / "trigram:<dim>" or
// "remote:<endpoint>|<model>|<dim>".
std::unique_ptr<EmbeddingProvider> make_embedding_provider(const std::string& spec);

// String -> vector cache bound to one provider id and width. Concurrent
// lookups take a shared lock; insertions take an exclusive one.
class EmbeddingCache {
 public:
  EmbeddingCache(std::string provider_id, std::size_t dim) : provider_id_(std::move(provider_id)), dim_(dim) {}

  std::optional<std::vector<float>> get(const std::string& key) const;
  void put(const std::string& key, std::vector<float> value);
  std::size_t size() const;

  // File layout: "SQLICLEC", u32 version, provider id, u32 dim, u64 count,
  // then per entry a length-prefixed key and dim LE float32 values.
  void save(const std::filesystem::path& file) const;
  // Throws Error(kFormat) on a malformed file and Error(kCheckpointMismatch)
  // when the file belongs to another provider or width.
  void load(const std::filesystem::path& file);

  const std::string& provider_id() const { return provider_id_; }
  std::size_t dim() const { return dim_; }

 private:
  std::string provider_id_;
  std::size_t dim_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, std::vector<float>> map_;
};

// Provider plus cache. embed_text is deterministic per (provider, text).
class Embedder {
 public:
  explicit Embedder(std::shared_ptr<EmbeddingProvider> provider);

  std::size_t text_dim() const { return provider_->dim(); }
  std::size_t feature_dim() const { return kGraphNodeClassCount + provider_->dim(); }
  const std::string provider_id() const { return provider_->id(); }

  std::vector<float> embed_text(const std::string& text);
  // Fetches every uncached text in one provider batch.
  void prefetch(const std::vector<std::string>& texts);
  const std::vector<float>& mask_sentinel();

  // Row i = one-hot(class of node i) followed by the embedding of its text,
  // or of "<MASK>" when i is in `masked`.
  Eigen::MatrixXd assemble_features(const SqlGraph& g, const std::vector<std::uint32_t>& masked = {});

  EmbeddingCache& cache() { return cache_; }

 private:
  std::shared_ptr<EmbeddingProvider> provider_;
  EmbeddingCache cache_;
  std::once_flag mask_once_;
  std::vector<float> mask_;
};

}  // namespace sqlicl
