// SPDX-License-Identifier: Apache-2.0
#include "core/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace ccl {

MemoryBank::MemoryBank(int capacity, int dim, Rng& rng) {
  if (capacity < 1 || dim < 1) fail(Status::InvalidConfig, "bank capacity and dim must be >= 1");
  rows_ = Tensor({capacity, dim});
  for (int i = 0; i < capacity; ++i) {
    double norm = 0.0;
    double* row = rows_.data() + static_cast<int64_t>(i) * dim;
    for (int j = 0; j < dim; ++j) {
      row[j] = rng.normal();
      norm += row[j] * row[j];
    }
    norm = std::sqrt(norm);
    for (int j = 0; j < dim; ++j) row[j] /= norm;
  }
}

MemoryBank MemoryBank::from_state(Tensor rows, int cursor, int64_t enqueue_count) {
  MemoryBank b;
  if (rows.rank() != 2) fail(Status::ShapeMismatch, "bank rows must be [N,d]");
  b.rows_ = std::move(rows);
  b.cursor_ = cursor;
  b.enqueue_count_ = enqueue_count;
  return b;
}

void MemoryBank::enqueue(const Tensor& batch) {
  if (batch.rank() != 2 || batch.dim(1) != dim())
    fail(Status::ShapeMismatch, "enqueue: batch dim does not match bank dim");
  const int B = batch.dim(0), N = capacity(), d = dim();
  if (B < 1 || N % B != 0)
    fail(Status::InvalidConfig, "enqueue: batch size must divide bank capacity");
  for (int i = 0; i < B; ++i) {
    const double* src = batch.data() + static_cast<int64_t>(i) * d;
    double norm = 0.0;
    for (int j = 0; j < d; ++j) norm += src[j] * src[j];
    norm = std::sqrt(norm);
    if (norm < 1e-12) fail(Status::InvalidArgument, "enqueue: cannot unit-normalize zero vector");
    double* dst = rows_.data() + static_cast<int64_t>(cursor_ + i) * d;
    for (int j = 0; j < d; ++j) dst[j] = src[j] / norm;
  }
  cursor_ = (cursor_ + B) % N;
  ++enqueue_count_;
}

void LossConfig::validate(int batch_size) const {
  if (tau <= 0.0 || tau_spm <= 0.0) fail(Status::InvalidConfig, "temperatures must be > 0");
  if (k < 1 || k >= bank_size) fail(Status::InvalidConfig, "need 1 <= k < bank size");
  if (gamma < 0.0 || gamma > 1.0) fail(Status::InvalidConfig, "gamma must be in [0,1]");
  if (batch_size < 1 || bank_size % batch_size != 0)
    fail(Status::InvalidConfig, "bank size must be a multiple of the batch size");
}

void ema_update(ParamSet& theta_k, const ParamSet& theta_q, double gamma) {
  check_shape_parity(theta_k, theta_q);
  for (size_t i = 0; i < theta_k.items.size(); ++i) {
    Tensor& k = theta_k.items[i].second;
    const Tensor& q = theta_q.items[i].second;
    for (int64_t j = 0; j < k.size(); ++j) k[j] = gamma * k[j] + (1.0 - gamma) * q[j];
  }
}

double info_nce(const Tensor& z_q, const Tensor& z_k, const Tensor& bank_rows, double tau) {
  Graph g;
  int q = g.leaf(z_q, false);
  int pos = g.dot(q, g.leaf(z_k, false));
  int negs = bank_rows.size() ? g.matvec_const(bank_rows, q) : g.leaf(Tensor({0}), false);
  return g.scalar(g.infonce(pos, negs, tau));
}

namespace {

Tensor unit(const Tensor& v) {
  Tensor out = v;
  double norm = 0.0;
  for (double x : out.v) norm += x * x;
  norm = std::max(std::sqrt(norm), 1e-12);
  for (auto& x : out.v) x /= norm;
  return out;
}

}  // namespace

std::vector<int> top_k_indices(const Tensor& bank_rows, const Tensor& query, int k) {
  const int N = bank_rows.dim(0), d = bank_rows.dim(1);
  if (k < 1 || k >= N) fail(Status::InvalidArgument, "top-k requires 1 <= k < N");
  if (static_cast<int>(query.size()) != d) fail(Status::ShapeMismatch, "top-k query dim");
  Tensor q = unit(query);
  std::vector<std::pair<double, int>> scored(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) {
    const double* row = bank_rows.data() + static_cast<int64_t>(i) * d;
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += row[j] * q[j];
    scored[static_cast<size_t>(i)] = {s, i};
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;  // ties toward the lower bank index
  });
  std::vector<int> idx(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) idx[static_cast<size_t>(i)] = scored[static_cast<size_t>(i)].second;
  return idx;
}

std::vector<uint8_t> spm_pseudo_labels(const Tensor& g_r_q, const Tensor& g_p_q,
                                       const MemoryBank& bank_g_r, const MemoryBank& bank_g_p,
                                       int k) {
  if (bank_g_r.capacity() != bank_g_p.capacity())
    fail(Status::InvalidArgument, "pseudo-labels need banks of equal capacity");
  std::vector<uint8_t> y(static_cast<size_t>(bank_g_r.capacity()), 0);
  for (int i : top_k_indices(bank_g_r.rows(), g_r_q, k)) y[static_cast<size_t>(i)] = 1;
  for (int i : top_k_indices(bank_g_p.rows(), g_p_q, k)) y[static_cast<size_t>(i)] = 1;
  return y;
}

Tensor spm_logits(const Tensor& f_q, const MemoryBank& bank_f, double tau_spm) {
  if (tau_spm <= 0.0) fail(Status::InvalidArgument, "tau_spm must be > 0");
  const int N = bank_f.capacity(), d = bank_f.dim();
  Tensor out({N});
  for (int i = 0; i < N; ++i) {
    const double* row = bank_f.rows().data() + static_cast<int64_t>(i) * d;
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += row[j] * f_q[j];
    out[i] = 1.0 / (1.0 + std::exp(-s / tau_spm));
  }
  return out;
}

double spm_bce(const Tensor& y_hat, const std::vector<uint8_t>& y) {
  if (static_cast<size_t>(y_hat.size()) != y.size())
    fail(Status::ShapeMismatch, "bce: length mismatch");
  double acc = 0.0;
  for (int64_t i = 0; i < y_hat.size(); ++i) {
    const double p = y_hat[i];
    acc += y[static_cast<size_t>(i)] ? std::log(p) : std::log1p(-p);
  }
  return -acc / static_cast<double>(y_hat.size());
}

BranchState init_branch(Modality m, const ModelConfig& mc, int bank_size, Rng& rng) {
  BranchState st;
  if (m == Modality::Rgb) {
    st.enc_q = init_rgb_encoder(mc.rgb, rng);
    st.proj_q = init_projection(mc.rgb_proj(), rng);
  } else {
    st.enc_q = init_pose_encoder(mc.pose, rng);
    st.proj_q = init_projection(mc.pose_proj(), rng);
  }
  st.enc_k = st.enc_q;    // key twin starts as a copy
  st.proj_k = st.proj_q;
  check_shape_parity(st.enc_k, st.enc_q);
  check_shape_parity(st.proj_k, st.proj_q);
  const int d = m == Modality::Rgb ? mc.rgb.dim : mc.pose.dim();
  st.bank_g = MemoryBank(bank_size, d, rng);
  st.bank_f = MemoryBank(bank_size, mc.proj_dim, rng);
  return st;
}

BranchEmbed embed_rgb(const RgbClip& view, const ModelConfig& mc, const ParamSet& enc,
                      const ParamSet& proj) {
  Graph g;
  ParamLeaves pe = register_params(g, enc, false);
  ParamLeaves pp = register_params(g, proj, false);
  int x = g.leaf(rgb_input(view), false);
  int gi = rgb_encoder_forward(g, mc.rgb, pe, x);
  int fi = projection_forward(g, mc.rgb_proj(), pp, gi);
  return {g.val(gi), g.val(fi)};
}

BranchEmbed embed_pose(const PoseSequence& view, const ModelConfig& mc, const ParamSet& enc,
                       const ParamSet& proj) {
  Graph g;
  ParamLeaves pe = register_params(g, enc, false);
  ParamLeaves pp = register_params(g, proj, false);
  int x = g.leaf(pose_input(view), false);
  PoseForward pf = pose_encoder_forward(g, mc.pose, pe, x);
  int fi = projection_forward(g, mc.pose_proj(), pp, pf.embedding);
  return {g.val(pf.embedding), g.val(fi)};
}

Tensor rgb_feature(const RgbClip& view, const ModelConfig& mc, const ParamSet& enc) {
  Graph g;
  ParamLeaves pe = register_params(g, enc, false);
  return g.val(rgb_encoder_forward(g, mc.rgb, pe, g.leaf(rgb_input(view), false)));
}

Tensor pose_feature(const PoseSequence& view, const ModelConfig& mc, const ParamSet& enc) {
  Graph g;
  ParamLeaves pe = register_params(g, enc, false);
  return g.val(pose_encoder_forward(g, mc.pose, pe, g.leaf(pose_input(view), false)).embedding);
}

namespace {

struct SampleOut {
  double l_cl_r = 0, l_cl_p = 0, l_spm_r = 0, l_spm_p = 0, l_r2p = 0, l_p2r = 0;
  Tensor g_r_k, f_r_k, g_p_k, f_p_k;
  PretrainGrads grads;
  bool has_grads = false;
};

SampleOut run_sample(const Views& views, const ModelConfig& mc, const BranchState& rgb,
                     const BranchState& pose, const LossConfig& cfg, bool spm_active,
                     bool with_grads, int batch_size) {
  Graph g;
  // query pathway (gradients flow), key pathway (frozen twins, no gradients)
  ParamLeaves rgb_enc_q = register_params(g, rgb.enc_q, with_grads);
  ParamLeaves rgb_proj_q = register_params(g, rgb.proj_q, with_grads);
  ParamLeaves pose_enc_q = register_params(g, pose.enc_q, with_grads);
  ParamLeaves pose_proj_q = register_params(g, pose.proj_q, with_grads);
  ParamLeaves rgb_enc_k = register_params(g, rgb.enc_k, false);
  ParamLeaves rgb_proj_k = register_params(g, rgb.proj_k, false);
  ParamLeaves pose_enc_k = register_params(g, pose.enc_k, false);
  ParamLeaves pose_proj_k = register_params(g, pose.proj_k, false);

  const int g_r_q = rgb_encoder_forward(g, mc.rgb, rgb_enc_q, g.leaf(rgb_input(views.rgb_q), false));
  const int f_r_q = projection_forward(g, mc.rgb_proj(), rgb_proj_q, g_r_q);
  const int g_r_k = rgb_encoder_forward(g, mc.rgb, rgb_enc_k, g.leaf(rgb_input(views.rgb_k), false));
  const int f_r_k = projection_forward(g, mc.rgb_proj(), rgb_proj_k, g_r_k);

  PoseForward pq = pose_encoder_forward(g, mc.pose, pose_enc_q, g.leaf(pose_input(views.pose_q), false));
  const int g_p_q = pq.embedding;
  const int f_p_q = projection_forward(g, mc.pose_proj(), pose_proj_q, g_p_q);
  PoseForward pk = pose_encoder_forward(g, mc.pose, pose_enc_k, g.leaf(pose_input(views.pose_k), false));
  const int g_p_k = pk.embedding;
  const int f_p_k = projection_forward(g, mc.pose_proj(), pose_proj_k, g_p_k);

  SampleOut out;
  std::vector<int> terms;
  std::vector<double> weights;

  // intra-modal InfoNCE against each f-bank
  const int l_cl_r = g.infonce(g.dot(f_r_q, f_r_k), g.matvec_const(rgb.bank_f.rows(), f_r_q), cfg.tau);
  const int l_cl_p = g.infonce(g.dot(f_p_q, f_p_k), g.matvec_const(pose.bank_f.rows(), f_p_q), cfg.tau);
  out.l_cl_r = g.scalar(l_cl_r);
  out.l_cl_p = g.scalar(l_cl_p);
  terms.push_back(l_cl_r);
  terms.push_back(l_cl_p);
  weights.insert(weights.end(), {1.0, 1.0});

  if (cfg.use_spm) {
    std::vector<uint8_t> y(static_cast<size_t>(cfg.bank_size), 0);
    if (spm_active)
      y = spm_pseudo_labels(g.val(g_r_q), g.val(g_p_q), rgb.bank_g, pose.bank_g, cfg.k);
    Tensor yt({cfg.bank_size});
    for (int i = 0; i < cfg.bank_size; ++i) yt[i] = y[static_cast<size_t>(i)];
    const int s_r = g.scale(g.matvec_const(rgb.bank_f.rows(), f_r_q), 1.0 / cfg.tau_spm);
    const int s_p = g.scale(g.matvec_const(pose.bank_f.rows(), f_p_q), 1.0 / cfg.tau_spm);
    const int l_spm_r = g.bce_logits_mean(s_r, yt);
    const int l_spm_p = g.bce_logits_mean(s_p, yt);
    out.l_spm_r = g.scalar(l_spm_r);
    out.l_spm_p = g.scalar(l_spm_p);
    terms.push_back(l_spm_r);
    terms.push_back(l_spm_p);
    weights.insert(weights.end(), {1.0, 1.0});
  }

  if (cfg.use_cross) {
    const int l_r2p = g.infonce(g.dot(f_p_q, f_r_k), g.matvec_const(rgb.bank_f.rows(), f_p_q), cfg.tau);
    const int l_p2r = g.infonce(g.dot(f_r_q, f_p_k), g.matvec_const(pose.bank_f.rows(), f_r_q), cfg.tau);
    out.l_r2p = g.scalar(l_r2p);
    out.l_p2r = g.scalar(l_p2r);
    terms.push_back(l_r2p);
    terms.push_back(l_p2r);
    weights.insert(weights.end(), {1.0, 1.0});
  }

  out.g_r_k = g.val(g_r_k);
  out.f_r_k = g.val(f_r_k);
  out.g_p_k = g.val(g_p_k);
  out.f_p_k = g.val(f_p_k);

  if (with_grads) {
    const int total = g.sum_scalars(terms, weights);
    g.backward(total);
    const double scale = 1.0 / batch_size;
    out.grads.rgb_enc = GradSet::zeros_like(rgb.enc_q);
    out.grads.rgb_proj = GradSet::zeros_like(rgb.proj_q);
    out.grads.pose_enc = GradSet::zeros_like(pose.enc_q);
    out.grads.pose_proj = GradSet::zeros_like(pose.proj_q);
    collect_grads(g, rgb_enc_q, out.grads.rgb_enc, scale);
    collect_grads(g, rgb_proj_q, out.grads.rgb_proj, scale);
    collect_grads(g, pose_enc_q, out.grads.pose_enc, scale);
    collect_grads(g, pose_proj_q, out.grads.pose_proj, scale);
    out.has_grads = true;
  }
  return out;
}

}  // namespace

PretrainResult pretrain_losses(const std::vector<Views>& batch, const ModelConfig& mc,
                               const BranchState& rgb, const BranchState& pose,
                               const LossConfig& cfg, bool spm_active, bool with_grads,
                               int threads) {
  const int B = static_cast<int>(batch.size());
  cfg.validate(B);

  std::vector<SampleOut> outs(static_cast<size_t>(B));
  auto worker = [&](int tid, int stride) {
    for (int i = tid; i < B; i += stride)
      outs[static_cast<size_t>(i)] =
          run_sample(batch[static_cast<size_t>(i)], mc, rgb, pose, cfg, spm_active, with_grads, B);
  };
  const int nthreads = std::max(1, std::min(threads, B));
  if (nthreads == 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(nthreads));
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker, t, nthreads);
    for (auto& th : pool) th.join();
  }

  PretrainResult res;
  const int d_r = mc.rgb.dim, d_p = mc.pose.dim(), d_f = mc.proj_dim;
  res.keys.g_r = Tensor({B, d_r});
  res.keys.f_r = Tensor({B, d_f});
  res.keys.g_p = Tensor({B, d_p});
  res.keys.f_p = Tensor({B, d_f});
  if (with_grads) {
    res.grads.rgb_enc = GradSet::zeros_like(rgb.enc_q);
    res.grads.rgb_proj = GradSet::zeros_like(rgb.proj_q);
    res.grads.pose_enc = GradSet::zeros_like(pose.enc_q);
    res.grads.pose_proj = GradSet::zeros_like(pose.proj_q);
  }

  // fixed-order reduction keeps results independent of the thread count
  for (int i = 0; i < B; ++i) {
    const SampleOut& o = outs[static_cast<size_t>(i)];
    res.report.l_cl_R += o.l_cl_r / B;
    res.report.l_cl_P += o.l_cl_p / B;
    res.report.l_spm_R += o.l_spm_r / B;
    res.report.l_spm_P += o.l_spm_p / B;
    res.report.l_r2p += o.l_r2p / B;
    res.report.l_p2r += o.l_p2r / B;
    std::copy_n(o.g_r_k.data(), d_r, res.keys.g_r.data() + static_cast<int64_t>(i) * d_r);
    std::copy_n(o.f_r_k.data(), d_f, res.keys.f_r.data() + static_cast<int64_t>(i) * d_f);
    std::copy_n(o.g_p_k.data(), d_p, res.keys.g_p.data() + static_cast<int64_t>(i) * d_p);
    std::copy_n(o.f_p_k.data(), d_f, res.keys.f_p.data() + static_cast<int64_t>(i) * d_f);
    if (with_grads) {
      res.grads.rgb_enc.accumulate(o.grads.rgb_enc, 1.0);
      res.grads.rgb_proj.accumulate(o.grads.rgb_proj, 1.0);
      res.grads.pose_enc.accumulate(o.grads.pose_enc, 1.0);
      res.grads.pose_proj.accumulate(o.grads.pose_proj, 1.0);
    }
  }
  res.report.l_single =
      res.report.l_cl_R + res.report.l_spm_R + res.report.l_cl_P + res.report.l_spm_P;
  res.report.l_cross = res.report.l_r2p + res.report.l_p2r;
  res.report.total = res.report.l_single + res.report.l_cross;
  return res;
}

}  // namespace ccl
