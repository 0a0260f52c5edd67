#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sqlicl/embedder.hpp"
#include "sqlicl/schema.hpp"
#include "sqlicl/sql_graph.hpp"

namespace sqlicl {

struct EncoderShape {
  std::size_t d_text = kDefaultTextDim;
  std::size_t d_h = 64;    // per-head hidden width
  std::size_t heads = 4;
  std::size_t d_z = 128;   // projection output (and hidden) width

  std::size_t d_in() const { return kGraphNodeClassCount + d_text; }
  std::size_t d_node() const { return d_h * heads; }
  bool operator==(const EncoderShape&) const = default;
};

// One attention layer: shared linear map W (d_in x heads*d_h), per-head
// attention vectors for the receiving (dst) and sending (src) node, and a bias.
struct GatLayer {
  Eigen::MatrixXd w;
  Eigen::MatrixXd att_src;  // heads x d_h
  Eigen::MatrixXd att_dst;  // heads x d_h
  Eigen::MatrixXd bias;     // 1 x heads*d_h
};

// Every entry is kept float-representable so checkpoints round-trip exactly.
struct EncoderParams {
  EncoderShape shape;
  double tau = 0.5;
  GatLayer layer1, layer2;
  Eigen::MatrixXd proj_w1;  // 3*d_node x d_z
  Eigen::MatrixXd proj_b1;  // 1 x d_z
  Eigen::MatrixXd proj_w2;  // d_z x d_z
  Eigen::MatrixXd proj_b2;  // 1 x d_z

  // Glorot-uniform weights, zero biases.
  static EncoderParams init(const EncoderShape& shape, double tau, std::uint64_t seed);
  // Same shapes, all zeros.
  static EncoderParams zeros_like(const EncoderParams& p);

  // Visits every tensor in a fixed order with its checkpoint name.
  void for_each_tensor(const std::function<void(const std::string&, Eigen::MatrixXd&)>& fn);
  void for_each_tensor(const std::function<void(const std::string&, const Eigen::MatrixXd&)>& fn) const;
  std::size_t parameter_count() const;
  void round_to_float();
};

// A graph ready for the encoder: feature rows and the message-passing
// neighborhoods (self, parents and children of each node, ascending).
struct EncoderInput {
  Eigen::MatrixXd x;
  std::vector<std::vector<std::uint32_t>> neighbors;
};

EncoderInput prepare_input(const SqlGraph& g, Embedder& embedder, const std::vector<std::uint32_t>& masked = {});
std::vector<std::vector<std::uint32_t>> message_neighbors(const SqlGraph& g);

// Two attention layers with ELU in between; heads are concatenated.
// Throws Error(kShapeMismatch) when the feature width does not fit params.
Eigen::MatrixXd encode_nodes(const EncoderInput& in, const EncoderParams& params);
// [mean | sum | max] over rows. Throws Error(kEmptyGraph) for zero rows.
Eigen::RowVectorXd readout(const Eigen::MatrixXd& node_embs);
// affine -> ELU -> affine.
Eigen::RowVectorXd project(const Eigen::RowVectorXd& pooled, const EncoderParams& params);
// Full pipeline for one prepared graph; the result is not normalized.
Eigen::RowVectorXd embed_graph(const EncoderInput& in, const EncoderParams& params);
Eigen::RowVectorXd embed_sql(const std::string& sql, const EncoderParams& params, Embedder& embedder,
                             const DatabaseSchema* schema = nullptr);

double cosine_similarity(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b);

// Per-anchor NT-Xent over cosine similarities:
// -log(sum_pos exp(s/tau) / (sum_pos exp(s/tau) + sum_neg exp(s/tau))).
// Throws kZeroNormEmbedding, kNonPositiveTemperature, or kInvalidArgument when
// positives or negatives are empty.
double nt_xent_loss(const Eigen::RowVectorXd& anchor, const std::vector<Eigen::RowVectorXd>& positives,
                    const std::vector<Eigen::RowVectorXd>& negatives, double tau);

struct NtXentGradient {
  double loss = 0.0;
  Eigen::RowVectorXd d_anchor;
  std::vector<Eigen::RowVectorXd> d_positives, d_negatives;
  double d_tau = 0.0;
};
NtXentGradient nt_xent_gradient(const Eigen::RowVectorXd& anchor, const std::vector<Eigen::RowVectorXd>& positives,
                                const std::vector<Eigen::RowVectorXd>& negatives, double tau);

struct ContrastiveInstance {
  EncoderInput anchor;
  std::vector<EncoderInput> positives;
  std::vector<EncoderInput> negatives;
};

// Loss of one instance at params.tau. When grad is non-null it receives the
// gradient (accumulated, not overwritten) and *d_tau the temperature gradient.
double instance_loss(const ContrastiveInstance& inst, const EncoderParams& params, EncoderParams* grad = nullptr,
                     double* d_tau = nullptr);

// Max relative error |analytic - numeric| / (|analytic| + |numeric| + 1e-12)
// over `samples` randomly drawn parameters plus tau, using central
// differences with step eps in [1e-6, 1e-3].
double gradient_check(const EncoderParams& params, const ContrastiveInstance& inst, double eps, std::size_t samples,
                      std::uint64_t seed);

struct TrainConfig {
  double tau = 0.5;
  std::size_t n_positive = 2;
  std::size_t n_negative = 16;
  double learning_rate = 1e-3;
  std::size_t epochs = 100;
  std::size_t batch_size = 8;
  double mask_rate = 0.2;
  std::uint64_t seed = 0;
};

struct TrainingSql {
  std::string sql;
  std::string db_id;
};

struct TrainResult {
  EncoderParams params;
  std::vector<double> epoch_loss;  // mean per-anchor loss of each epoch
};

// Minibatch SGD on the mean per-anchor loss. Positives come from
// sample_positive, negatives are other corpus statements. Deterministic for a
// given seed. on_epoch (optional) sees (epoch index, mean loss).
TrainResult train_encoder(const std::vector<TrainingSql>& corpus, const SchemaCatalog* donors,
                          const EncoderShape& shape, const TrainConfig& cfg, Embedder& embedder,
                          const std::function<void(std::size_t, double)>& on_epoch = {});

struct Checkpoint {
  EncoderParams params;
  std::string provider_id;
  std::uint32_t p = 2;  // pq-gram parameters the index was built with
  std::uint32_t q = 3;
};

// "SQLICLGC", u32 version, u32 d_text, d_h, heads, d_z, f64 tau, u32 p, q,
// provider id, attention variant, then u32 tensor count and per tensor a name,
// u32 rows, u32 cols and row-major LE float32 values.
void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt);
// Throws Error(kFormat) on malformed files.
Checkpoint load_checkpoint(const std::filesystem::path& file);
// SHA-256 of the serialized checkpoint; indexes record it.
std::string checkpoint_fingerprint(const Checkpoint& ckpt);

}  // namespace sqlicl
