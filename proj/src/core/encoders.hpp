// SPDX-License-Identifier: Apache-2.0
#ifndef CCL_CORE_ENCODERS_HPP
#define CCL_CORE_ENCODERS_HPP

#include <array>
#include <string>
#include <vector>

#include "core/augment.hpp"
#include "core/corpus.hpp"
#include "core/graph.hpp"

namespace ccl {

// Ordered collection of named parameter tensors. Order is the contract used by
// leaf registration, gradient accumulation, the optimizer, and checkpoints.
struct ParamSet {
  std::vector<std::pair<std::string, Tensor>> items;

  void add(std::string name, Tensor t) { items.emplace_back(std::move(name), std::move(t)); }
  Tensor* find(const std::string& name);
  const Tensor* find(const std::string& name) const;
  int64_t total_size() const;
  size_t count() const { return items.size(); }
};

// Gradients aligned index-for-index with a ParamSet.
struct GradSet {
  std::vector<Tensor> g;

  static GradSet zeros_like(const ParamSet& p);
  void accumulate(const GradSet& other, double scale);
};

// Parameter leaves registered on a graph, parallel to ParamSet order.
struct ParamLeaves {
  std::vector<int> ids;
  const ParamSet* set = nullptr;

  int operator[](const std::string& name) const;
};

ParamLeaves register_params(Graph& g, const ParamSet& params, bool requires_grad);
void collect_grads(Graph& g, const ParamLeaves& leaves, GradSet& out, double scale);

// Raises when the two sets differ in names, order, or shapes.
void check_shape_parity(const ParamSet& a, const ParamSet& b);

// ---------------------------------------------------------------------------

struct RgbEncoderConfig {
  int c1 = 8, c2 = 16, c3 = 32;
  int dim = 128;
};

struct PoseEncoderConfig {
  PoseGroups groups = PoseGroups::toy25();
  int group_dim = 32;
  int graph_blocks = 1;
  int stream_dim = 64;          // per-stream transformer width
  int transformer_blocks = 1;
  int heads = 2;

  int dim() const { return 2 * stream_dim; }  // manual + non-manual
  void validate() const;
};

struct ProjectionConfig {
  int in_dim = 128;
  int hidden = 128;
  int out_dim = 128;
};

struct ClassifierConfig {
  int in_dim = 128;
  int num_classes = 10;
};

ParamSet init_rgb_encoder(const RgbEncoderConfig& cfg, Rng& rng);
ParamSet init_pose_encoder(const PoseEncoderConfig& cfg, Rng& rng);
ParamSet init_projection(const ProjectionConfig& cfg, Rng& rng);
ParamSet init_classifier(const ClassifierConfig& cfg, Rng& rng);

// View-to-input conversion. RGB becomes [3,T,H,W]; pose becomes [T,J,3] with
// per-joint features (x*conf, y*conf, conf) so zero confidence erases x,y.
Tensor rgb_input(const RgbClip& view);
Tensor pose_input(const PoseSequence& view);

int rgb_encoder_forward(Graph& g, const RgbEncoderConfig& cfg, const ParamLeaves& p, int input);

struct PoseForward {
  int embedding = -1;                 // [2*stream_dim]
  std::array<int, 5> group_features;  // v_LH, v_RH, v_F, v_M, v_B, each [T, group_dim]
};
PoseForward pose_encoder_forward(Graph& g, const PoseEncoderConfig& cfg, const ParamLeaves& p,
                                 int input);

// Two affine layers with a ReLU between, output L2-normalized to unit length.
int projection_forward(Graph& g, const ProjectionConfig& cfg, const ParamLeaves& p, int input);

// Single affine layer producing raw logits.
int classifier_forward(Graph& g, const ClassifierConfig& cfg, const ParamLeaves& p, int input);

// ---------------------------------------------------------------------------

// Everything needed to rebuild the networks; stored in checkpoints and
// compared field-by-field when loading.
struct ArchDescriptor {
  RgbEncoderConfig rgb;
  PoseEncoderConfig pose;
  ProjectionConfig proj;   // in_dim fixed to the encoder dims per branch
  int num_classes = 0;     // 0 during pre-training
  int t_model = 8;

  std::string to_text() const;
  static ArchDescriptor from_text(const std::string& text);
  // Raises ArchMismatch naming the first differing field.
  void check_compatible(const ArchDescriptor& other) const;
};

}  // namespace ccl

#endif
