// SPDX-License-Identifier: Apache-2.0
#ifndef CCL_CORE_AUGMENT_HPP
#define CCL_CORE_AUGMENT_HPP

#include <optional>
#include <vector>

#include "core/corpus.hpp"
#include "core/mpm.hpp"

namespace ccl {

struct RgbAugmentConfig {
  double crop_scale_min = 0.7;
  double crop_scale_max = 1.0;
  double flip_prob = 0.5;
  double jitter_strength = 0.3;
};

struct PoseAugmentConfig {
  double rotation_range_deg = 15.0;
  double scale_min = 0.9;
  double scale_max = 1.1;
  double joint_mask_prob = 0.05;
  double flip_prob = 0.5;
};

enum class MpmViews { None, Query, Key, Both };

struct AugmentConfig {
  double l = 0.1;    // temporal-crop lower fraction
  int k = 16;        // frames sampled after the crop
  int t_model = 8;   // frames consumed by the encoders
  RgbAugmentConfig rgb;
  PoseAugmentConfig pose;
  double mpm_alpha = 0.2;
  double mpm_p = 0.01;
  bool mpm_invert_indicator = false;
  bool mpm_p_quantile = false;
  MpmViews mpm_views = MpmViews::Both;
  int mpm_codec_block = 3;
  uint64_t mpm_codec_seed = 7;

  void validate() const;
  MpmOptions mpm_options() const { return {mpm_p, mpm_invert_indicator, mpm_p_quantile}; }

  static AugmentConfig all_off();
};

// Crop length drawn uniformly from [ceil(l*T), T], start uniform over valid
// positions, then K non-decreasing indices uniformly spaced over the crop
// (repeating when the crop is shorter than K).
std::vector<int> temporal_crop_indices(int t_raw, double l, int k, Rng& rng);

// Deterministic uniform subsample of k source frames down to t_model.
std::vector<int> uniform_subsample_indices(int k, int t_model);

RgbClip gather_frames(const RgbClip& clip, const std::vector<int>& idx);
PoseSequence gather_frames(const PoseSequence& pose, const std::vector<int>& idx);
MaskSequence gather_frames(const MaskSequence& mask, const std::vector<int>& idx);

// Random resized crop, horizontal flip, per-clip color jitter, then MPM with
// probability mpm_alpha. When `raw_mask` is given it must cover the same frames
// as `clip`; it is passed through the view's crop/flip so it stays aligned.
// Otherwise the mask is derived from the augmented clip itself.
RgbClip augment_rgb(const RgbClip& clip, const AugmentConfig& cfg, const LatentCodec& codec,
                    Rng& rng, const MaskSequence* raw_mask = nullptr,
                    double alpha_override = -1.0);

// Rotation and scaling about the sequence centroid, horizontal mirror, then
// per-joint masking that zeroes (x, y, confidence) for the whole sequence.
PoseSequence augment_pose(const PoseSequence& pose, const AugmentConfig& cfg, Rng& rng);

// Exposed for tests.
PoseSequence rotate_pose(const PoseSequence& pose, double degrees);
PoseSequence scale_pose(const PoseSequence& pose, double factor);

struct Views {
  RgbClip rgb_q, rgb_k;
  PoseSequence pose_q, pose_k;
};

// Query and key views with independent temporal crops and independent spatial
// augmentations; within one view the RGB and pose streams share the same
// temporal indices. Both streams end up with t_model frames.
Views make_views(const Sample& sample, const AugmentConfig& cfg, const LatentCodec& codec,
                 Rng& rng, const MaskSequence* raw_mask = nullptr);

// Deterministic inference views: uniform t_model sampling over the full
// sequence, no spatial augmentation, no MPM.
Views make_eval_views(const Sample& sample, const AugmentConfig& cfg);

}  // namespace ccl

#endif
