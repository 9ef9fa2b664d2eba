// SPDX-License-Identifier: Apache-2.0
#ifndef CCL_CORE_CONTRASTIVE_HPP
#define CCL_CORE_CONTRASTIVE_HPP

#include <cstdint>
#include <vector>

#include "core/augment.hpp"
#include "core/encoders.hpp"

namespace ccl {

// Fixed-capacity FIFO queue of L2-normalized embedding rows.
class MemoryBank {
 public:
  MemoryBank() = default;
  MemoryBank(int capacity, int dim, Rng& rng);  // seeded random unit rows
  static MemoryBank from_state(Tensor rows, int cursor, int64_t enqueue_count);

  const Tensor& rows() const { return rows_; }
  int capacity() const { return rows_.rank() ? rows_.dim(0) : 0; }
  int dim() const { return rows_.rank() ? rows_.dim(1) : 0; }
  int cursor() const { return cursor_; }
  int64_t enqueue_count() const { return enqueue_count_; }

  // Normalizes and writes a [B, d] batch at the cursor; B must divide capacity.
  void enqueue(const Tensor& batch);

 private:
  Tensor rows_;
  int cursor_ = 0;
  int64_t enqueue_count_ = 0;
};

struct LossConfig {
  double tau = 0.07;
  double tau_spm = 0.02;
  int k = 10;
  double gamma = 0.999;
  int bank_size = 512;
  int spm_warmup_steps = -1;  // -1: one full queue turnover (bank_size / batch)
  bool use_spm = true;
  bool use_cross = true;

  void validate(int batch_size) const;
  int warmup_steps(int batch_size) const {
    return spm_warmup_steps >= 0 ? spm_warmup_steps : bank_size / batch_size;
  }
};

struct LossReport {
  double l_cl_R = 0, l_cl_P = 0, l_spm_R = 0, l_spm_P = 0;
  double l_r2p = 0, l_p2r = 0;
  double l_single = 0, l_cross = 0, total = 0;
};

// theta_k <- gamma*theta_k + (1-gamma)*theta_q, elementwise.
void ema_update(ParamSet& theta_k, const ParamSet& theta_q, double gamma);

// InfoNCE of Eq-3 shape on plain tensors (unit-norm vectors expected); routed
// through the same graph op the training path uses.
double info_nce(const Tensor& z_q, const Tensor& z_k, const Tensor& bank_rows, double tau);

// Indices of the k largest dot products against the bank rows; the query is
// L2-normalized first; ties break toward the lowest bank index.
std::vector<int> top_k_indices(const Tensor& bank_rows, const Tensor& query, int k);

// Union (elementwise max) of the per-modality top-k indicator vectors.
std::vector<uint8_t> spm_pseudo_labels(const Tensor& g_r_q, const Tensor& g_p_q,
                                       const MemoryBank& bank_g_r, const MemoryBank& bank_g_p,
                                       int k);

// Elementwise logistic of (f_q . rows / tau_spm).
Tensor spm_logits(const Tensor& f_q, const MemoryBank& bank_f, double tau_spm);

// Plain BCE over probabilities; the training path uses the score-level form.
double spm_bce(const Tensor& y_hat, const std::vector<uint8_t>& y);

// One modality's full state.
struct BranchState {
  ParamSet enc_q, enc_k, proj_q, proj_k;
  MemoryBank bank_g, bank_f;
  int64_t ema_count = 0;

  void ema_step(double gamma) {
    ema_update(enc_k, enc_q, gamma);
    ema_update(proj_k, proj_q, gamma);
    ++ema_count;
  }
};

struct ModelConfig {
  RgbEncoderConfig rgb;
  PoseEncoderConfig pose;
  int proj_hidden = 128;
  int proj_dim = 128;

  ProjectionConfig rgb_proj() const { return {rgb.dim, proj_hidden, proj_dim}; }
  ProjectionConfig pose_proj() const { return {pose.dim(), proj_hidden, proj_dim}; }
};

enum class Modality { Rgb, Pose };

BranchState init_branch(Modality m, const ModelConfig& mc, int bank_size, Rng& rng);

// Eval-mode embeddings (no gradients).
struct BranchEmbed {
  Tensor g, f;
};
BranchEmbed embed_rgb(const RgbClip& view, const ModelConfig& mc, const ParamSet& enc,
                      const ParamSet& proj);
BranchEmbed embed_pose(const PoseSequence& view, const ModelConfig& mc, const ParamSet& enc,
                       const ParamSet& proj);

// Pre-projection features only (classifier inputs).
Tensor rgb_feature(const RgbClip& view, const ModelConfig& mc, const ParamSet& enc);
Tensor pose_feature(const PoseSequence& view, const ModelConfig& mc, const ParamSet& enc);

struct PretrainGrads {
  GradSet rgb_enc, rgb_proj, pose_enc, pose_proj;
};

struct KeyEmbeddings {
  Tensor g_r, f_r, g_p, f_p;  // [B, d] each, pre-normalization
};

struct PretrainResult {
  LossReport report;
  KeyEmbeddings keys;
  PretrainGrads grads;
};

// All six loss terms of one batch, averaged, plus query-pathway gradients and
// the key embeddings to enqueue. Key pathways carry no gradients by
// construction. Per-sample work is independent; `threads` > 1 parallelizes
// across the batch with an order-fixed reduction, so results are bitwise
// identical for any thread count.
PretrainResult pretrain_losses(const std::vector<Views>& batch, const ModelConfig& mc,
                               const BranchState& rgb, const BranchState& pose,
                               const LossConfig& cfg, bool spm_active, bool with_grads,
                               int threads);

}  // namespace ccl

#endif
