#include "sqlicl/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>

#include "binary_io.hpp"
#include "http_post.hpp"
#include "json.hpp"
#include "sql_text_util.hpp"
#include "sqlicl/error.hpp"
#include "sqlicl/hashing.hpp"

namespace sqlicl {

namespace {

constexpr std::uint64_t kTrigramSeed = 0x5eed7a1b5eed7a1bULL;
constexpr std::uint32_t kCacheVersion = 1;
const std::string kCacheMagic = "SQLICLEC";

void l2_normalize(std::vector<float>& v) {
  double norm = 0.0;
  for (float x : v) norm += double(x) * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) return;
  for (float& x : v) x = static_cast<float>(x / norm);
}

}  // namespace

TrigramHashProvider::TrigramHashProvider(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "embedding dimension must be positive");
}

std::string TrigramHashProvider::id() const { return "trigram-v1-d" + std::to_string(dim_); }

std::vector<float> TrigramHashProvider::embed_one(const std::string& text) const {
  const std::string padded = "^" + detail::to_lower(text) + "$";
  std::vector<double> acc(dim_, 0.0);
  auto add = [&](std::string_view gram) {
    const std::uint64_t h = fnv1a64(gram, kTrigramSeed);
    acc[h % dim_] += (h >> 63) ? -1.0 : 1.0;
  };
  if (padded.size() < 3) {
    add(padded);
  } else {
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) add(std::string_view(padded).substr(i, 3));
  }
  std::vector<float> out(dim_);
  double norm = 0.0;
  for (double x : acc) norm += x * x;
  norm = std::sqrt(norm);
  for (std::size_t i = 0; i < dim_; ++i) out[i] = norm == 0.0 ? 0.0f : static_cast<float>(acc[i] / norm);
  return out;
}

std::vector<std::vector<float>> TrigramHashProvider::embed_batch(const std::vector<std::string>& texts) {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(RemoteEmbeddingConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.endpoint.empty() || cfg_.dim == 0 || cfg_.batch_size == 0) {
    throw Error(ErrorCode::kInvalidArgument, "remote embedding provider needs endpoint, dim and batch size");
  }
}

std::string RemoteEmbeddingProvider::id() const { return "remote:" + cfg_.model + ":d" + std::to_string(cfg_.dim); }

std::vector<std::vector<float>> RemoteEmbeddingProvider::embed_batch(const std::vector<std::string>& texts) {
  std::vector<std::pair<std::string, std::string>> headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
    headers.emplace_back("Authorization", std::string("Bearer ") + key);
  }
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += cfg_.batch_size) {
    const std::size_t end = std::min(texts.size(), start + cfg_.batch_size);
    nlohmann::json req = {{"model", cfg_.model},
                          {"input", std::vector<std::string>(texts.begin() + start, texts.begin() + end)}};
    const auto res = detail::http_post_json(cfg_.endpoint, req.dump(), headers, cfg_.timeout_seconds);
    if (res.status < 200 || res.status >= 300) {
      throw Error(ErrorCode::kProviderUnavailable, "embedding endpoint returned HTTP " + std::to_string(res.status));
    }
    try {
      const auto body = nlohmann::json::parse(res.body);
      const auto& data = body.at("data");
      if (data.size() != end - start) throw Error(ErrorCode::kProviderUnavailable, "embedding count mismatch");
      std::vector<std::vector<float>> batch(end - start);
      for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& item = data[i];
        const std::size_t idx = item.contains("index") ? item.at("index").get<std::size_t>() : i;
        if (idx >= batch.size()) throw Error(ErrorCode::kProviderUnavailable, "embedding index out of range");
        auto v = item.at("embedding").get<std::vector<float>>();
        if (v.size() != cfg_.dim) {
          throw Error(ErrorCode::kProviderUnavailable, "expected width " + std::to_string(cfg_.dim) + ", got " +
                                                           std::to_string(v.size()));
        }
        for (float x : v) {
          if (!std::isfinite(x)) throw Error(ErrorCode::kProviderUnavailable, "non-finite embedding entry");
        }
        l2_normalize(v);
        batch[idx] = std::move(v);
      }
      for (auto& v : batch) out.push_back(std::move(v));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kProviderUnavailable, std::string("malformed embedding reply: ") + e.what());
    }
  }
  return out;
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const std::string& spec) {
  if (spec == "trigram") return std::make_unique<TrigramHashProvider>();
  if (spec.rfind("trigram:", 0) == 0) {
    return std::make_unique<TrigramHashProvider>(std::stoul(spec.substr(8)));
  }
  if (spec.rfind("remote:", 0) == 0) {
    const std::string rest = spec.substr(7);
    const auto a = rest.find('|');
    const auto b = a == std::string::npos ? a : rest.find('|', a + 1);
    if (b == std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "remote provider spec is remote:<endpoint>|<model>|<dim>");
    }
    RemoteEmbeddingConfig cfg;
    cfg.endpoint = rest.substr(0, a);
    cfg.model = rest.substr(a + 1, b - a - 1);
    cfg.dim = std::stoul(rest.substr(b + 1));
    return std::make_unique<RemoteEmbeddingProvider>(cfg);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown embedding provider '" + spec + "'");
}

std::optional<std::vector<float>> EmbeddingCache::get(const std::string& key) const {
  std::shared_lock lock(mu_);
  auto it = map_.find(key);
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(const std::string& key, std::vector<float> value) {
  if (value.size() != dim_) throw Error(ErrorCode::kShapeMismatch, "cache entry width differs from cache width");
  std::unique_lock lock(mu_);
  map_.insert_or_assign(key, std::move(value));
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mu_);
  return map_.size();
}

void EmbeddingCache::save(const std::filesystem::path& file) const {
  std::shared_lock lock(mu_);
  std::vector<const std::pair<const std::string, std::vector<float>>*> entries;
  for (const auto& kv : map_) entries.push_back(&kv);
  std::sort(entries.begin(), entries.end(), [](auto* a, auto* b) { return a->first < b->first; });
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + file.string());
  out.write(kCacheMagic.data(), kCacheMagic.size());
  detail::put_u32(out, kCacheVersion);
  detail::put_str(out, provider_id_);
  detail::put_u32(out, static_cast<std::uint32_t>(dim_));
  detail::put_u64(out, entries.size());
  for (const auto* kv : entries) {
    detail::put_str(out, kv->first);
    for (float x : kv->second) detail::put_f32(out, x);
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + file.string());
}

void EmbeddingCache::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + file.string());
  detail::Reader r(in, file.string());
  r.expect_magic(kCacheMagic);
  if (const auto v = r.u32(); v != kCacheVersion) r.fail("unsupported version " + std::to_string(v));
  const std::string provider = r.str();
  const std::uint32_t dim = r.u32();
  if (provider != provider_id_ || dim != dim_) {
    throw Error(ErrorCode::kCheckpointMismatch,
                "cache " + file.string() + " was written by " + provider + " (d=" + std::to_string(dim) + ")");
  }
  const std::uint64_t count = r.u64();
  std::unordered_map<std::string, std::vector<float>> loaded;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string key = r.str();
    std::vector<float> v(dim);
    for (auto& x : v) x = r.f32();
    loaded.emplace(std::move(key), std::move(v));
  }
  if (!r.at_end()) r.fail("trailing bytes");
  std::unique_lock lock(mu_);
  for (auto& kv : loaded) map_.insert_or_assign(kv.first, std::move(kv.second));
}

Embedder::Embedder(std::shared_ptr<EmbeddingProvider> provider)
    : provider_(std::move(provider)), cache_(provider_->id(), provider_->dim()) {}

std::vector<float> Embedder::embed_text(const std::string& text) {
  if (auto hit = cache_.get(text)) return *hit;
  auto v = provider_->embed_batch({text});
  if (v.size() != 1 || v[0].size() != provider_->dim()) {
    throw Error(ErrorCode::kShapeMismatch, "provider returned a vector of the wrong width");
  }
  cache_.put(text, v[0]);
  return v[0];
}

void Embedder::prefetch(const std::vector<std::string>& texts) {
  std::vector<std::string> missing;
  std::set<std::string> seen;
  for (const auto& t : texts) {
    if (seen.insert(t).second && !cache_.get(t)) missing.push_back(t);
  }
  if (missing.empty()) return;
  auto vecs = provider_->embed_batch(missing);
  if (vecs.size() != missing.size()) throw Error(ErrorCode::kShapeMismatch, "provider batch size mismatch");
  for (std::size_t i = 0; i < missing.size(); ++i) cache_.put(missing[i], std::move(vecs[i]));
}

const std::vector<float>& Embedder::mask_sentinel() {
  std::call_once(mask_once_, [&] { mask_ = embed_text(kMaskToken); });
  return mask_;
}

Eigen::MatrixXd Embedder::assemble_features(const SqlGraph& g, const std::vector<std::uint32_t>& masked) {
  const std::size_t d = provider_->dim();
  std::vector<bool> is_masked(g.size(), false);
  for (auto v : masked) {
    if (v >= g.size()) throw Error(ErrorCode::kShapeMismatch, "masked node id out of range");
    is_masked[v] = true;
  }
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!is_masked[i]) texts.push_back(g.nodes[i].text);
  }
  if (!masked.empty()) texts.push_back(kMaskToken);
  prefetch(texts);

  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g.size()),
                                            static_cast<Eigen::Index>(kGraphNodeClassCount + d));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    x(row, static_cast<Eigen::Index>(g.nodes[i].cls)) = 1.0;
    const std::vector<float> e = is_masked[i] ? mask_sentinel() : embed_text(g.nodes[i].text);
    for (std::size_t j = 0; j < d; ++j) x(row, static_cast<Eigen::Index>(kGraphNodeClassCount + j)) = e[j];
  }
  return x;
}

}  // namespace sqlicl
