#include "sqlicl/gcl.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "sqlicl/error.hpp"
#include "sqlicl/graph_augment.hpp"
#include "sqlicl/hashing.hpp"

namespace sqlicl {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;

constexpr double kLeakySlope = 0.2;
constexpr std::uint32_t kCheckpointVersion = 1;
const std::string kCheckpointMagic = "SQLICLGC";
const std::string kAttentionVariant = "gat-v1-leaky0.2-elu-bidir-selfloop";

double uniform01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

MatrixXd glorot(Index rows, Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / double(rows + cols));
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = (2.0 * uniform01(rng) - 1.0) * limit;
  }
  return m;
}

struct LayerCache {
  MatrixXd z;                    // x * w
  std::vector<MatrixXd> alpha;   // per head, n x n, zero off the neighborhood
  std::vector<MatrixXd> logits;  // pre-activation attention scores
  MatrixXd out;
};

void layer_forward(const MatrixXd& x, const std::vector<std::vector<std::uint32_t>>& nbrs, const GatLayer& layer,
                   const EncoderShape& shape, LayerCache& c) {
  const Index n = x.rows();
  const Index d = static_cast<Index>(shape.d_h);
  const std::size_t heads = shape.heads;
  c.z = x * layer.w;
  c.out.resize(n, c.z.cols());
  c.alpha.assign(heads, MatrixXd::Zero(n, n));
  c.logits.assign(heads, MatrixXd::Zero(n, n));
  for (std::size_t h = 0; h < heads; ++h) {
    const auto zh = c.z.middleCols(static_cast<Index>(h) * d, d);
    const Eigen::VectorXd s_src = zh * layer.att_src.row(static_cast<Index>(h)).transpose();
    const Eigen::VectorXd s_dst = zh * layer.att_dst.row(static_cast<Index>(h)).transpose();
    MatrixXd& a = c.alpha[h];
    MatrixXd& e = c.logits[h];
    for (Index i = 0; i < n; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (auto j : nbrs[static_cast<std::size_t>(i)]) {
        const double pre = s_dst(i) + s_src(j);
        e(i, j) = pre;
        const double act = pre > 0.0 ? pre : kLeakySlope * pre;
        a(i, j) = act;
        m = std::max(m, act);
      }
      double total = 0.0;
      for (auto j : nbrs[static_cast<std::size_t>(i)]) total += (a(i, j) = std::exp(a(i, j) - m));
      for (auto j : nbrs[static_cast<std::size_t>(i)]) a(i, j) /= total;
    }
    c.out.middleCols(static_cast<Index>(h) * d, d).noalias() = a * zh;
  }
  c.out.rowwise() += layer.bias.row(0);
}

void layer_backward(const MatrixXd& x, const std::vector<std::vector<std::uint32_t>>& nbrs, const GatLayer& layer,
                    const EncoderShape& shape, const LayerCache& c, const MatrixXd& d_out, GatLayer& g,
                    MatrixXd* d_x) {
  const Index n = x.rows();
  const Index d = static_cast<Index>(shape.d_h);
  g.bias += d_out.colwise().sum();
  MatrixXd d_z = MatrixXd::Zero(n, c.z.cols());
  for (std::size_t h = 0; h < shape.heads; ++h) {
    const Index hi = static_cast<Index>(h);
    const auto zh = c.z.middleCols(hi * d, d);
    const auto d_oh = d_out.middleCols(hi * d, d);
    const MatrixXd& a = c.alpha[h];
    d_z.middleCols(hi * d, d).noalias() += a.transpose() * d_oh;
    const MatrixXd d_a = d_oh * zh.transpose();
    Eigen::VectorXd ds_src = Eigen::VectorXd::Zero(n), ds_dst = Eigen::VectorXd::Zero(n);
    for (Index i = 0; i < n; ++i) {
      const auto& nb = nbrs[static_cast<std::size_t>(i)];
      double weighted = 0.0;
      for (auto j : nb) weighted += a(i, j) * d_a(i, j);
      for (auto j : nb) {
        const double d_act = a(i, j) * (d_a(i, j) - weighted);
        const double d_pre = d_act * (c.logits[h](i, j) > 0.0 ? 1.0 : kLeakySlope);
        ds_dst(i) += d_pre;
        ds_src(j) += d_pre;
      }
    }
    g.att_dst.row(hi).noalias() += ds_dst.transpose() * zh;
    g.att_src.row(hi).noalias() += ds_src.transpose() * zh;
    d_z.middleCols(hi * d, d).noalias() += ds_dst * layer.att_dst.row(hi) + ds_src * layer.att_src.row(hi);
  }
  g.w.noalias() += x.transpose() * d_z;
  if (d_x) d_x->noalias() = d_z * layer.w.transpose();
}

struct ForwardCache {
  LayerCache l1, l2;
  MatrixXd h1;  // ELU(l1.out)
  RowVectorXd pooled;
  std::vector<Index> argmax;
  RowVectorXd u, v, z;
};

void check_input(const EncoderInput& in, const EncoderParams& p) {
  if (in.x.rows() == 0) throw Error(ErrorCode::kEmptyGraph, "graph has no nodes");
  if (static_cast<std::size_t>(in.x.cols()) != p.shape.d_in()) {
    throw Error(ErrorCode::kShapeMismatch, "feature width " + std::to_string(in.x.cols()) + " but encoder expects " +
                                               std::to_string(p.shape.d_in()));
  }
  if (in.neighbors.size() != static_cast<std::size_t>(in.x.rows())) {
    throw Error(ErrorCode::kShapeMismatch, "neighbor lists do not match feature rows");
  }
}

RowVectorXd forward(const EncoderInput& in, const EncoderParams& p, ForwardCache& c) {
  check_input(in, p);
  layer_forward(in.x, in.neighbors, p.layer1, p.shape, c.l1);
  c.h1 = c.l1.out.unaryExpr(&elu);
  layer_forward(c.h1, in.neighbors, p.layer2, p.shape, c.l2);
  const MatrixXd& h = c.l2.out;
  const Index w = h.cols();
  c.pooled.resize(3 * w);
  c.argmax.assign(static_cast<std::size_t>(w), 0);
  for (Index j = 0; j < w; ++j) {
    const double s = h.col(j).sum();
    Index arg = 0;
    h.col(j).maxCoeff(&arg);
    c.argmax[static_cast<std::size_t>(j)] = arg;
    c.pooled(j) = s / double(h.rows());
    c.pooled(w + j) = s;
    c.pooled(2 * w + j) = h(arg, j);
  }
  c.u = c.pooled * p.proj_w1 + p.proj_b1.row(0);
  c.v = c.u.unaryExpr(&elu);
  c.z = c.v * p.proj_w2 + p.proj_b2.row(0);
  return c.z;
}

void backward(const EncoderInput& in, const EncoderParams& p, const ForwardCache& c, const RowVectorXd& d_z,
              EncoderParams& g) {
  g.proj_b2.row(0) += d_z;
  g.proj_w2.noalias() += c.v.transpose() * d_z;
  const RowVectorXd d_v = d_z * p.proj_w2.transpose();
  const RowVectorXd d_u = d_v.cwiseProduct(c.u.unaryExpr(&elu_grad));
  g.proj_b1.row(0) += d_u;
  g.proj_w1.noalias() += c.pooled.transpose() * d_u;
  const RowVectorXd d_pooled = d_u * p.proj_w1.transpose();

  const Index n = c.l2.out.rows();
  const Index w = c.l2.out.cols();
  MatrixXd d_h(n, w);
  for (Index j = 0; j < w; ++j) {
    d_h.col(j).setConstant(d_pooled(j) / double(n) + d_pooled(w + j));
    d_h(c.argmax[static_cast<std::size_t>(j)], j) += d_pooled(2 * w + j);
  }
  MatrixXd d_h1;
  layer_backward(c.h1, in.neighbors, p.layer2, p.shape, c.l2, d_h, g.layer2, &d_h1);
  const MatrixXd d_out1 = d_h1.cwiseProduct(c.l1.out.unaryExpr(&elu_grad));
  layer_backward(in.x, in.neighbors, p.layer1, p.shape, c.l1, d_out1, g.layer1, nullptr);
}

double round_float(double x) { return static_cast<double>(static_cast<float>(x)); }

}  // namespace

EncoderParams EncoderParams::init(const EncoderShape& shape, double tau, std::uint64_t seed) {
  if (shape.d_text == 0 || shape.d_h == 0 || shape.heads == 0 || shape.d_z == 0) {
    throw Error(ErrorCode::kInvalidArgument, "encoder dimensions must be positive");
  }
  if (!(tau > 0.0)) throw Error(ErrorCode::kNonPositiveTemperature, "temperature must be positive");
  std::mt19937_64 rng(derive_seed(seed, "encoder-init"));
  const Index d_in = static_cast<Index>(shape.d_in());
  const Index d_node = static_cast<Index>(shape.d_node());
  const Index d_h = static_cast<Index>(shape.d_h);
  const Index heads = static_cast<Index>(shape.heads);
  const Index d_z = static_cast<Index>(shape.d_z);
  EncoderParams p;
  p.shape = shape;
  p.tau = tau;
  auto make_layer = [&](Index in) {
    GatLayer l;
    l.w = glorot(in, d_node, rng);
    l.att_src = glorot(heads, d_h, rng);
    l.att_dst = glorot(heads, d_h, rng);
    l.bias = MatrixXd::Zero(1, d_node);
    return l;
  };
  p.layer1 = make_layer(d_in);
  p.layer2 = make_layer(d_node);
  p.proj_w1 = glorot(3 * d_node, d_z, rng);
  p.proj_b1 = MatrixXd::Zero(1, d_z);
  p.proj_w2 = glorot(d_z, d_z, rng);
  p.proj_b2 = MatrixXd::Zero(1, d_z);
  p.round_to_float();
  return p;
}

EncoderParams EncoderParams::zeros_like(const EncoderParams& p) {
  EncoderParams z = p;
  z.for_each_tensor([](const std::string&, MatrixXd& m) { m.setZero(); });
  return z;
}

void EncoderParams::for_each_tensor(const std::function<void(const std::string&, MatrixXd&)>& fn) {
  fn("layer1.w", layer1.w);
  fn("layer1.att_src", layer1.att_src);
  fn("layer1.att_dst", layer1.att_dst);
  fn("layer1.bias", layer1.bias);
  fn("layer2.w", layer2.w);
  fn("layer2.att_src", layer2.att_src);
  fn("layer2.att_dst", layer2.att_dst);
  fn("layer2.bias", layer2.bias);
  fn("proj.w1", proj_w1);
  fn("proj.b1", proj_b1);
  fn("proj.w2", proj_w2);
  fn("proj.b2", proj_b2);
}

void EncoderParams::for_each_tensor(const std::function<void(const std::string&, const MatrixXd&)>& fn) const {
  const_cast<EncoderParams*>(this)->for_each_tensor(
      [&](const std::string& name, MatrixXd& m) { fn(name, static_cast<const MatrixXd&>(m)); });
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const std::string&, const MatrixXd& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

void EncoderParams::round_to_float() {
  for_each_tensor([](const std::string&, MatrixXd& m) { m = m.unaryExpr(&round_float); });
  tau = round_float(tau);
}

std::vector<std::vector<std::uint32_t>> message_neighbors(const SqlGraph& g) {
  std::vector<std::vector<std::uint32_t>> nbrs(g.size());
  for (std::uint32_t i = 0; i < g.size(); ++i) nbrs[i].push_back(i);
  for (const auto& [a, b] : g.edges) {
    nbrs[a].push_back(b);
    nbrs[b].push_back(a);
  }
  for (auto& nb : nbrs) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return nbrs;
}

EncoderInput prepare_input(const SqlGraph& g, Embedder& embedder, const std::vector<std::uint32_t>& masked) {
  return {embedder.assemble_features(g, masked), message_neighbors(g)};
}

MatrixXd encode_nodes(const EncoderInput& in, const EncoderParams& params) {
  check_input(in, params);
  LayerCache l1, l2;
  layer_forward(in.x, in.neighbors, params.layer1, params.shape, l1);
  layer_forward(l1.out.unaryExpr(&elu), in.neighbors, params.layer2, params.shape, l2);
  return l2.out;
}

RowVectorXd readout(const MatrixXd& h) {
  if (h.rows() == 0) throw Error(ErrorCode::kEmptyGraph, "readout of an empty graph");
  RowVectorXd out(3 * h.cols());
  out << h.colwise().mean(), h.colwise().sum(), h.colwise().maxCoeff();
  return out;
}

RowVectorXd project(const RowVectorXd& pooled, const EncoderParams& params) {
  if (pooled.size() != params.proj_w1.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "pooled width " + std::to_string(pooled.size()) + " but head expects " +
                                               std::to_string(params.proj_w1.rows()));
  }
  const RowVectorXd v = (pooled * params.proj_w1 + params.proj_b1.row(0)).unaryExpr(&elu);
  return v * params.proj_w2 + params.proj_b2.row(0);
}

RowVectorXd embed_graph(const EncoderInput& in, const EncoderParams& params) {
  ForwardCache c;
  return forward(in, params, c);
}

RowVectorXd embed_sql(const std::string& sql, const EncoderParams& params, Embedder& embedder,
                      const DatabaseSchema* schema) {
  return embed_graph(prepare_input(build_graph(parse_sql(sql), schema), embedder), params);
}

double cosine_similarity(const RowVectorXd& a, const RowVectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::kZeroNormEmbedding, "cosine of a zero vector");
  return a.dot(b) / (na * nb);
}

NtXentGradient nt_xent_gradient(const RowVectorXd& anchor, const std::vector<RowVectorXd>& positives,
                                const std::vector<RowVectorXd>& negatives, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::kNonPositiveTemperature, "temperature must be positive");
  if (positives.empty() || negatives.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "NT-Xent needs at least one positive and one negative");
  }
  auto unit = [](const RowVectorXd& v, double& norm) {
    norm = v.norm();
    if (norm == 0.0 || !std::isfinite(norm)) throw Error(ErrorCode::kZeroNormEmbedding, "embedding has zero norm");
    return RowVectorXd(v / norm);
  };
  double na = 0.0;
  const RowVectorXd ua = unit(anchor, na);
  const std::size_t np = positives.size(), total = np + negatives.size();
  std::vector<RowVectorXd> u(total);
  std::vector<double> norms(total), sims(total), scaled(total);
  for (std::size_t k = 0; k < total; ++k) {
    u[k] = unit(k < np ? positives[k] : negatives[k - np], norms[k]);
    sims[k] = ua.dot(u[k]);
    scaled[k] = sims[k] / tau;
  }
  const double m = *std::max_element(scaled.begin(), scaled.end());
  double sum_pos = 0.0, sum_all = 0.0;
  std::vector<double> ex(total);
  for (std::size_t k = 0; k < total; ++k) {
    ex[k] = std::exp(scaled[k] - m);
    sum_all += ex[k];
    if (k < np) sum_pos += ex[k];
  }
  NtXentGradient out;
  out.loss = std::log(sum_all) - std::log(sum_pos);

  // dL/d(s_k/tau) = softmax_all_k - [k positive] softmax_pos_k
  RowVectorXd d_ua = RowVectorXd::Zero(ua.size());
  std::vector<RowVectorXd> d_u(total);
  for (std::size_t k = 0; k < total; ++k) {
    const double gk = ex[k] / sum_all - (k < np ? ex[k] / sum_pos : 0.0);
    const double d_sim = gk / tau;
    out.d_tau -= gk * sims[k] / tau;
    d_ua += d_sim * u[k];
    d_u[k] = d_sim * ua;
  }
  out.d_tau /= tau;
  auto through_norm = [](const RowVectorXd& unit_v, const RowVectorXd& d_unit, double norm) {
    return RowVectorXd((d_unit - unit_v * unit_v.dot(d_unit)) / norm);
  };
  out.d_anchor = through_norm(ua, d_ua, na);
  for (std::size_t k = 0; k < total; ++k) {
    (k < np ? out.d_positives : out.d_negatives).push_back(through_norm(u[k], d_u[k], norms[k]));
  }
  return out;
}

double nt_xent_loss(const RowVectorXd& anchor, const std::vector<RowVectorXd>& positives,
                    const std::vector<RowVectorXd>& negatives, double tau) {
  return nt_xent_gradient(anchor, positives, negatives, tau).loss;
}

double instance_loss(const ContrastiveInstance& inst, const EncoderParams& params, EncoderParams* grad,
                     double* d_tau) {
  ForwardCache ca;
  const RowVectorXd za = forward(inst.anchor, params, ca);
  std::vector<ForwardCache> cp(inst.positives.size()), cn(inst.negatives.size());
  std::vector<RowVectorXd> zp, zn;
  for (std::size_t k = 0; k < inst.positives.size(); ++k) zp.push_back(forward(inst.positives[k], params, cp[k]));
  for (std::size_t k = 0; k < inst.negatives.size(); ++k) zn.push_back(forward(inst.negatives[k], params, cn[k]));
  const NtXentGradient g = nt_xent_gradient(za, zp, zn, params.tau);
  if (grad) {
    backward(inst.anchor, params, ca, g.d_anchor, *grad);
    for (std::size_t k = 0; k < zp.size(); ++k) backward(inst.positives[k], params, cp[k], g.d_positives[k], *grad);
    for (std::size_t k = 0; k < zn.size(); ++k) backward(inst.negatives[k], params, cn[k], g.d_negatives[k], *grad);
  }
  if (d_tau) *d_tau += g.d_tau;
  return g.loss;
}

double gradient_check(const EncoderParams& params, const ContrastiveInstance& inst, double eps, std::size_t samples,
                      std::uint64_t seed) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) throw Error(ErrorCode::kInvalidArgument, "eps must lie in [1e-6, 1e-3]");
  EncoderParams grad = EncoderParams::zeros_like(params);
  double d_tau = 0.0;
  instance_loss(inst, params, &grad, &d_tau);

  auto rel = [](double a, double b) { return std::abs(a - b) / (std::abs(a) + std::abs(b) + 1e-12); };
  EncoderParams probe = params;
  double worst = 0.0;
  {
    probe.tau = params.tau + eps;
    const double up = instance_loss(inst, probe);
    probe.tau = params.tau - eps;
    const double down = instance_loss(inst, probe);
    probe.tau = params.tau;
    worst = rel(d_tau, (up - down) / (2.0 * eps));
  }
  std::vector<MatrixXd*> tensors, grads;
  probe.for_each_tensor([&](const std::string&, MatrixXd& m) { tensors.push_back(&m); });
  grad.for_each_tensor([&](const std::string&, MatrixXd& m) { grads.push_back(&m); });
  const std::size_t total = params.parameter_count();
  std::mt19937_64 rng(derive_seed(seed, "gradient-check"));
  for (std::size_t s = 0; s < samples; ++s) {
    std::size_t flat = rng() % total, t = 0;
    while (flat >= static_cast<std::size_t>(tensors[t]->size())) flat -= static_cast<std::size_t>(tensors[t++]->size());
    double& slot = tensors[t]->data()[flat];
    const double orig = slot;
    slot = orig + eps;
    const double up = instance_loss(inst, probe);
    slot = orig - eps;
    const double down = instance_loss(inst, probe);
    slot = orig;
    worst = std::max(worst, rel(grads[t]->data()[flat], (up - down) / (2.0 * eps)));
  }
  return worst;
}

TrainResult train_encoder(const std::vector<TrainingSql>& corpus, const SchemaCatalog* donors,
                          const EncoderShape& shape, const TrainConfig& cfg, Embedder& embedder,
                          const std::function<void(std::size_t, double)>& on_epoch) {
  if (cfg.n_positive == 0 || cfg.n_negative == 0 || cfg.batch_size == 0) {
    throw Error(ErrorCode::kInvalidArgument, "n_positive, n_negative and batch_size must be positive");
  }
  if (!(cfg.tau > 0.0)) throw Error(ErrorCode::kNonPositiveTemperature, "temperature must be positive");
  if (embedder.text_dim() != shape.d_text) {
    throw Error(ErrorCode::kShapeMismatch, "embedding provider width differs from encoder d_text");
  }
  if (corpus.size() < cfg.n_negative + 1) {
    throw Error(ErrorCode::kCorpusTooSmall, "corpus of " + std::to_string(corpus.size()) + " cannot supply " +
                                                std::to_string(cfg.n_negative) + " negatives");
  }

  std::vector<SqlAst> asts;
  std::vector<EncoderInput> inputs;
  ValuePool pool;
  for (const auto& item : corpus) {
    asts.push_back(parse_sql(item.sql));
    pool.harvest(asts.back());
    const DatabaseSchema* schema = donors ? donors->find(item.db_id) : nullptr;
    inputs.push_back(prepare_input(build_graph(asts.back(), schema), embedder));
  }

  TrainResult result;
  result.params = EncoderParams::init(shape, cfg.tau, cfg.seed);
  EncoderParams& params = result.params;
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::string epoch_tag = "epoch/" + std::to_string(epoch);
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, epoch_tag));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t counted = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      EncoderParams grad = EncoderParams::zeros_like(params);
      std::size_t in_batch = 0;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const std::string tag = epoch_tag + "/anchor/" + std::to_string(i);
        AugmentOptions opts;
        opts.mask_rate = cfg.mask_rate;
        opts.donors = donors;
        opts.db_id = corpus[i].db_id;
        opts.values = &pool;
        ContrastiveInstance inst;
        inst.anchor = inputs[i];
        try {
          for (std::size_t k = 0; k < cfg.n_positive; ++k) {
            const auto pos = sample_positive(asts[i], opts, derive_seed(cfg.seed, tag + "/pos/" + std::to_string(k)));
            inst.positives.push_back(prepare_input(pos.graph, embedder, pos.masked_node_ids));
          }
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kNoApplicableOperator) throw;
          spdlog::warn("no augmentation applies to corpus item {}; skipped", i);
          continue;
        }
        for (std::size_t j : sample_negative_indices(corpus.size(), i, cfg.n_negative, derive_seed(cfg.seed, tag + "/neg"))) {
          inst.negatives.push_back(inputs[j]);
        }
        epoch_loss += instance_loss(inst, params, &grad);
        ++counted;
        ++in_batch;
      }
      if (in_batch == 0) continue;
      const double scale = cfg.learning_rate / double(in_batch);
      std::vector<MatrixXd*> gs;
      grad.for_each_tensor([&](const std::string&, MatrixXd& m) { gs.push_back(&m); });
      std::size_t t = 0;
      params.for_each_tensor([&](const std::string&, MatrixXd& m) { m -= scale * *gs[t++]; });
      params.round_to_float();
    }
    const double mean = counted ? epoch_loss / double(counted) : 0.0;
    result.epoch_loss.push_back(mean);
    spdlog::debug("epoch {} mean loss {:.6f}", epoch + 1, mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return result;
}

namespace {

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const EncoderParams& p = ckpt.params;
  out.write(kCheckpointMagic.data(), static_cast<std::streamsize>(kCheckpointMagic.size()));
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(p.shape.d_text));
  detail::put_u32(out, static_cast<std::uint32_t>(p.shape.d_h));
  detail::put_u32(out, static_cast<std::uint32_t>(p.shape.heads));
  detail::put_u32(out, static_cast<std::uint32_t>(p.shape.d_z));
  detail::put_f64(out, p.tau);
  detail::put_u32(out, ckpt.p);
  detail::put_u32(out, ckpt.q);
  detail::put_str(out, ckpt.provider_id);
  detail::put_str(out, kAttentionVariant);
  detail::put_u32(out, 12);
  p.for_each_tensor([&](const std::string& name, const MatrixXd& m) {
    detail::put_str(out, name);
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) detail::put_f32(out, static_cast<float>(m(i, j)));
    }
  });
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + file.string());
  write_checkpoint(out, ckpt);
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + file.string());
}

std::string checkpoint_fingerprint(const Checkpoint& ckpt) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, ckpt);
  return sha256_hex(out.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + file.string());
  detail::Reader r(in, file.string());
  r.expect_magic(kCheckpointMagic);
  if (const auto v = r.u32(); v != kCheckpointVersion) r.fail("unsupported version " + std::to_string(v));
  EncoderShape shape;
  shape.d_text = r.u32();
  shape.d_h = r.u32();
  shape.heads = r.u32();
  shape.d_z = r.u32();
  const double tau = r.f64();
  Checkpoint ckpt;
  ckpt.p = r.u32();
  ckpt.q = r.u32();
  ckpt.provider_id = r.str();
  if (const std::string variant = r.str(); variant != kAttentionVariant) r.fail("unknown encoder variant " + variant);
  if (shape.d_text == 0 || shape.d_h == 0 || shape.heads == 0 || shape.d_z == 0 || shape.d_text > (1u << 16) ||
      shape.d_h * shape.heads > (1u << 16) || shape.d_z > (1u << 16)) {
    r.fail("implausible encoder dimensions");
  }
  if (!(tau > 0.0)) r.fail("non-positive temperature");
  ckpt.params = EncoderParams::init(shape, tau, 0);
  if (r.u32() != 12) r.fail("unexpected tensor count");
  ckpt.params.for_each_tensor([&](const std::string& name, MatrixXd& m) {
    if (r.str() != name) r.fail("expected tensor " + name);
    const std::uint32_t rows = r.u32(), cols = r.u32();
    if (rows != m.rows() || cols != m.cols()) r.fail("tensor " + name + " has the wrong shape");
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<double>(r.f32());
    }
  });
  if (!r.at_end()) r.fail("trailing bytes");
  return ckpt;
}

}  // namespace sqlicl
