// SPDX-License-Identifier: Apache-2.0
#ifndef CCL_CORE_EVAL_HPP
#define CCL_CORE_EVAL_HPP

#include <map>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace ccl {

enum class AccuracyMode { PerInstance, PerClass };

struct MetricsReport {
  std::map<std::string, double> values;  // {branch}_{mode}_top{k} -> fraction

  std::string to_text() const;
  double at(const std::string& key) const;
};

// Elementwise sum of the two branch logit arrays.
Tensor fuse_logits(const Tensor& logits_rgb, const Tensor& logits_pose);

// Top-k accuracy over logits [M, C]. Ties rank toward the lower class index.
// Per-class averages the per-class accuracies with equal weight over the
// classes present in `labels`.
double topk_accuracy(const Tensor& logits, const std::vector<int>& labels, int k,
                     AccuracyMode mode);

// Deterministic evaluation of a fine-tuned checkpoint over a corpus split:
// uniform full-length frame sampling, no augmentation, no MPM. Reports
// per-instance and per-class top-1/top-5 for each branch and the fusion.
MetricsReport evaluate(const std::string& checkpoint_path, const std::string& manifest_path,
                       int threads);

// Writes per-sample pre-projection embeddings for both branches plus labels:
// emb_rgb.bin, emb_pose.bin, labels.bin (corpus array format) and a manifest.
void export_embeddings(const std::string& checkpoint_path, const std::string& manifest_path,
                       const std::string& out_dir, int threads);

}  // namespace ccl

#endif
