// SPDX-License-Identifier: Apache-2.0
#ifndef CCL_CORE_TRAINING_HPP
#define CCL_CORE_TRAINING_HPP

#include <optional>
#include <string>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/contrastive.hpp"

namespace ccl {

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

// SGD with momentum and weight decay:
//   v <- momentum*v + (grad + weight_decay*theta);  theta <- theta - lr*v
class SgdOptimizer {
 public:
  SgdOptimizer() = default;
  explicit SgdOptimizer(const ParamSet& params);

  void step(ParamSet& params, const GradSet& grads, double lr, const SgdConfig& cfg);

  std::vector<Tensor>& velocities() { return vel_; }
  const std::vector<Tensor>& velocities() const { return vel_; }

 private:
  std::vector<Tensor> vel_;
};

enum class TrainPhase { Pretrain, Finetune };

struct TrainConfig {
  TrainPhase phase = TrainPhase::Pretrain;
  int epochs = 6;
  double base_lr = 0.05;
  int batch_size = 16;
  std::vector<int> lr_drop_epochs;
  double lr_drop_factor = 0.1;
  SgdConfig sgd;
  uint64_t seed = 1;
  int threads = 1;
  int save_interval_epochs = 0;  // 0: only the final checkpoint
  bool freeze_encoder = false;   // fine-tune as a linear probe

  LossConfig loss;
  AugmentConfig augment;
  ModelConfig model;

  std::string train_manifest;
  std::string out_dir;

  void validate() const;
};

// base_lr * factor^(number of drop epochs <= epoch)
double lr_at(int epoch, const TrainConfig& cfg);

ArchDescriptor make_descriptor(const ModelConfig& mc, int t_model, int num_classes);

// Momentum-contrast pre-training over the paired corpus. Writes a per-step
// loss log (pretrain_log.tsv) and checkpoints under cfg.out_dir; returns the
// final checkpoint path. `resume_from` restores a previous run's state and
// continues from its epoch boundary.
std::string pretrain(const TrainConfig& cfg, const std::string& resume_from = "");

// Supervised fine-tuning: query encoders as feature extractors plus one
// classifier head per branch, cross-entropy summed over branches. An empty
// `pretrained_path` trains from random initialization (the baseline path).
// With freeze_encoder the encoders stay fixed, inference views are
// deterministic, and features are computed once and cached.
std::string finetune(const TrainConfig& cfg, const std::string& pretrained_path);

// Checkpoint (de)serialization shared with the evaluator.
struct PretrainedModels {
  ArchDescriptor arch;
  ParamSet rgb_enc, pose_enc;      // query encoders
  ParamSet rgb_head, pose_head;    // classifier heads (finetune checkpoints)
  bool has_heads = false;
};
PretrainedModels load_models(const std::string& checkpoint_path);

}  // namespace ccl

#endif
