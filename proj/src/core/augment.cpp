// SPDX-License-Identifier: Apache-2.0
#include "core/augment.hpp"

#include <algorithm>
#include <cmath>

namespace ccl {

void AugmentConfig::validate() const {
  if (l <= 0.0 || l > 1.0) fail(Status::InvalidConfig, "augment_l must be in (0, 1]");
  if (k < 1 || t_model < 1 || k < t_model)
    fail(Status::InvalidConfig, "need augment_k >= augment_t_model >= 1");
  for (double p : {rgb.flip_prob, pose.joint_mask_prob, pose.flip_prob, mpm_alpha})
    if (p < 0.0 || p > 1.0) fail(Status::InvalidConfig, "probabilities must be in [0, 1]");
  if (rgb.crop_scale_min <= 0.0 || rgb.crop_scale_min > rgb.crop_scale_max ||
      rgb.crop_scale_max > 1.0)
    fail(Status::InvalidConfig, "rgb crop scale range must satisfy 0 < min <= max <= 1");
  if (pose.scale_min <= 0.0 || pose.scale_min > pose.scale_max)
    fail(Status::InvalidConfig, "pose scale range must satisfy 0 < min <= max");
  if (mpm_p < 0.0) fail(Status::InvalidConfig, "mpm_p must be >= 0");
  if (mpm_codec_block < 1) fail(Status::InvalidConfig, "mpm_codec_block must be >= 1");
}

AugmentConfig AugmentConfig::all_off() {
  AugmentConfig cfg;
  cfg.l = 1.0;
  cfg.rgb = {1.0, 1.0, 0.0, 0.0};
  cfg.pose = {0.0, 1.0, 1.0, 0.0, 0.0};
  cfg.mpm_alpha = 0.0;
  return cfg;
}

std::vector<int> temporal_crop_indices(int t_raw, double l, int k, Rng& rng) {
  if (t_raw < 1) fail(Status::InvalidArgument, "t_raw must be >= 1");
  const int min_len = std::min(t_raw, std::max(1, static_cast<int>(std::ceil(l * t_raw))));
  const int len = static_cast<int>(rng.uniform_int(min_len, t_raw));
  const int start = static_cast<int>(rng.uniform_int(0, t_raw - len));
  std::vector<int> idx(static_cast<size_t>(k));
  for (int j = 0; j < k; ++j)
    idx[static_cast<size_t>(j)] =
        start + static_cast<int>((static_cast<int64_t>(j) * len) / k);
  return idx;
}

std::vector<int> uniform_subsample_indices(int k, int t_model) {
  std::vector<int> idx(static_cast<size_t>(t_model));
  for (int i = 0; i < t_model; ++i)
    idx[static_cast<size_t>(i)] = static_cast<int>((static_cast<int64_t>(i) * k) / t_model);
  return idx;
}

RgbClip gather_frames(const RgbClip& clip, const std::vector<int>& idx) {
  const int H = clip.height(), W = clip.width();
  const int64_t fsz = static_cast<int64_t>(H) * W * 3;
  RgbClip out;
  out.frames = FloatArray({static_cast<int>(idx.size()), H, W, 3});
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy_n(clip.frames.v.begin() + idx[i] * fsz, fsz,
                out.frames.v.begin() + static_cast<int64_t>(i) * fsz);
  return out;
}

PoseSequence gather_frames(const PoseSequence& pose, const std::vector<int>& idx) {
  const int J = pose.num_joints();
  const int64_t fsz = static_cast<int64_t>(J) * 3;
  PoseSequence out;
  out.joints = FloatArray({static_cast<int>(idx.size()), J, 3});
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy_n(pose.joints.v.begin() + idx[i] * fsz, fsz,
                out.joints.v.begin() + static_cast<int64_t>(i) * fsz);
  return out;
}

MaskSequence gather_frames(const MaskSequence& mask, const std::vector<int>& idx) {
  const int64_t fsz = static_cast<int64_t>(mask.height) * mask.width;
  MaskSequence out;
  out.t = static_cast<int>(idx.size());
  out.height = mask.height;
  out.width = mask.width;
  out.zeta.resize(static_cast<size_t>(out.t) * fsz);
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy_n(mask.zeta.begin() + idx[i] * fsz, fsz,
                out.zeta.begin() + static_cast<int64_t>(i) * fsz);
  return out;
}

namespace {

struct CropParams {
  int ch, cw, oy, ox;
  bool flip;
};

RgbClip crop_resize(const RgbClip& clip, const CropParams& cp) {
  const int T = clip.num_frames(), H = clip.height(), W = clip.width();
  if (cp.ch == H && cp.cw == W && cp.oy == 0 && cp.ox == 0 && !cp.flip) return clip;
  RgbClip out;
  out.frames = FloatArray({T, H, W, 3});
  for (int t = 0; t < T; ++t) {
    const float* src = &clip.frames[static_cast<int64_t>(t) * H * W * 3];
    float* dst = &out.frames[static_cast<int64_t>(t) * H * W * 3];
    for (int y = 0; y < H; ++y) {
      double sy = cp.oy + (y + 0.5) * cp.ch / H - 0.5;
      sy = std::clamp(sy, 0.0, static_cast<double>(H - 1));
      int y0 = static_cast<int>(sy);
      int y1 = std::min(H - 1, y0 + 1);
      double fy = sy - y0;
      for (int x = 0; x < W; ++x) {
        int xe = cp.flip ? (W - 1 - x) : x;
        double sx = cp.ox + (xe + 0.5) * cp.cw / W - 0.5;
        sx = std::clamp(sx, 0.0, static_cast<double>(W - 1));
        int x0 = static_cast<int>(sx);
        int x1 = std::min(W - 1, x0 + 1);
        double fx = sx - x0;
        for (int c = 0; c < 3; ++c) {
          double v00 = src[(y0 * W + x0) * 3 + c], v01 = src[(y0 * W + x1) * 3 + c];
          double v10 = src[(y1 * W + x0) * 3 + c], v11 = src[(y1 * W + x1) * 3 + c];
          double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
          dst[(y * W + x) * 3 + c] = static_cast<float>(v);
        }
      }
    }
  }
  return out;
}

// Nearest-neighbor version of the same geometry, so a cached raw-clip mask
// stays aligned with the augmented pixels and stays binary.
MaskSequence crop_resize_mask(const MaskSequence& mask, const CropParams& cp) {
  const int T = mask.t, H = mask.height, W = mask.width;
  if (cp.ch == H && cp.cw == W && cp.oy == 0 && cp.ox == 0 && !cp.flip) return mask;
  MaskSequence out;
  out.t = T;
  out.height = H;
  out.width = W;
  out.zeta.resize(mask.zeta.size());
  for (int t = 0; t < T; ++t)
    for (int y = 0; y < H; ++y) {
      int sy = std::clamp(static_cast<int>(std::lround(cp.oy + (y + 0.5) * cp.ch / H - 0.5)), 0,
                          H - 1);
      for (int x = 0; x < W; ++x) {
        int xe = cp.flip ? (W - 1 - x) : x;
        int sx = std::clamp(static_cast<int>(std::lround(cp.ox + (xe + 0.5) * cp.cw / W - 0.5)),
                            0, W - 1);
        out.zeta[(static_cast<size_t>(t) * H + y) * W + x] = mask.at(t, sy, sx);
      }
    }
  return out;
}

}  // namespace

RgbClip augment_rgb(const RgbClip& clip, const AugmentConfig& cfg, const LatentCodec& codec,
                    Rng& rng, const MaskSequence* raw_mask, double alpha_override) {
  const int H = clip.height(), W = clip.width();

  CropParams cp;
  double scale = rng.uniform(cfg.rgb.crop_scale_min, cfg.rgb.crop_scale_max);
  cp.ch = std::clamp(static_cast<int>(std::lround(scale * H)), 1, H);
  cp.cw = std::clamp(static_cast<int>(std::lround(scale * W)), 1, W);
  cp.oy = static_cast<int>(rng.uniform_int(0, H - cp.ch));
  cp.ox = static_cast<int>(rng.uniform_int(0, W - cp.cw));
  cp.flip = rng.uniform() < cfg.rgb.flip_prob;
  const double brightness = rng.uniform(-cfg.rgb.jitter_strength, cfg.rgb.jitter_strength);
  const double contrast = 1.0 + rng.uniform(-cfg.rgb.jitter_strength, cfg.rgb.jitter_strength);

  RgbClip out = crop_resize(clip, cp);

  if (brightness != 0.0 || contrast != 1.0) {
    for (auto& x : out.frames.v) {
      double v = (static_cast<double>(x) - 0.5) * contrast + 0.5 + brightness;
      x = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }

  const double alpha = alpha_override >= 0.0 ? alpha_override : cfg.mpm_alpha;
  const bool gate = rng.uniform() < alpha;
  if (gate) {
    MaskSequence mask =
        raw_mask ? crop_resize_mask(*raw_mask, cp) : derive_mask(out, codec, cfg.mpm_options());
    for (int64_t i = 0; i < static_cast<int64_t>(mask.zeta.size()); ++i) {
      if (!mask.zeta[static_cast<size_t>(i)]) {
        out.frames[i * 3] = 0.0f;
        out.frames[i * 3 + 1] = 0.0f;
        out.frames[i * 3 + 2] = 0.0f;
      }
    }
  }
  return out;
}

PoseSequence rotate_pose(const PoseSequence& pose, double degrees) {
  const int T = pose.frames(), J = pose.num_joints();
  double cx = 0.0, cy = 0.0;
  for (int i = 0; i < T * J; ++i) {
    cx += pose.joints[static_cast<int64_t>(i) * 3];
    cy += pose.joints[static_cast<int64_t>(i) * 3 + 1];
  }
  cx /= T * J;
  cy /= T * J;
  const double a = degrees * M_PI / 180.0, c = std::cos(a), s = std::sin(a);
  PoseSequence out = pose;
  for (int i = 0; i < T * J; ++i) {
    double x = pose.joints[static_cast<int64_t>(i) * 3] - cx;
    double y = pose.joints[static_cast<int64_t>(i) * 3 + 1] - cy;
    out.joints[static_cast<int64_t>(i) * 3] = static_cast<float>(cx + x * c - y * s);
    out.joints[static_cast<int64_t>(i) * 3 + 1] = static_cast<float>(cy + x * s + y * c);
  }
  return out;
}

PoseSequence scale_pose(const PoseSequence& pose, double factor) {
  const int T = pose.frames(), J = pose.num_joints();
  double cx = 0.0, cy = 0.0;
  for (int i = 0; i < T * J; ++i) {
    cx += pose.joints[static_cast<int64_t>(i) * 3];
    cy += pose.joints[static_cast<int64_t>(i) * 3 + 1];
  }
  cx /= T * J;
  cy /= T * J;
  PoseSequence out = pose;
  for (int i = 0; i < T * J; ++i) {
    double x = pose.joints[static_cast<int64_t>(i) * 3];
    double y = pose.joints[static_cast<int64_t>(i) * 3 + 1];
    out.joints[static_cast<int64_t>(i) * 3] = static_cast<float>(cx + (x - cx) * factor);
    out.joints[static_cast<int64_t>(i) * 3 + 1] = static_cast<float>(cy + (y - cy) * factor);
  }
  return out;
}

PoseSequence augment_pose(const PoseSequence& pose, const AugmentConfig& cfg, Rng& rng) {
  const int T = pose.frames(), J = pose.num_joints();
  const double angle = rng.uniform(-cfg.pose.rotation_range_deg, cfg.pose.rotation_range_deg);
  const double factor = rng.uniform(cfg.pose.scale_min, cfg.pose.scale_max);
  const bool flip = rng.uniform() < cfg.pose.flip_prob;

  PoseSequence out = pose;
  if (angle != 0.0) out = rotate_pose(out, angle);
  if (factor != 1.0) out = scale_pose(out, factor);
  if (flip)
    for (int i = 0; i < T * J; ++i)
      out.joints[static_cast<int64_t>(i) * 3] =
          1.0f - out.joints[static_cast<int64_t>(i) * 3];

  // joint masking last so masked joints end as exact zeros
  for (int j = 0; j < J; ++j) {
    bool mask = rng.uniform() < cfg.pose.joint_mask_prob;
    if (!mask) continue;
    for (int t = 0; t < T; ++t) {
      float* p = &out.joints[(static_cast<int64_t>(t) * J + j) * 3];
      p[0] = p[1] = p[2] = 0.0f;
    }
  }
  return out;
}

namespace {

void make_one_view(const Sample& sample, const AugmentConfig& cfg, const LatentCodec& codec,
                   Rng& rng, const MaskSequence* raw_mask, bool mpm_eligible, RgbClip& rgb_out,
                   PoseSequence& pose_out) {
  std::vector<int> idx = temporal_crop_indices(sample.clip.num_frames(), cfg.l, cfg.k, rng);
  RgbClip rgb_k = gather_frames(sample.clip, idx);
  PoseSequence pose_k = gather_frames(sample.pose, idx);

  MaskSequence mask_k;
  const MaskSequence* mask_ptr = nullptr;
  if (raw_mask) {
    mask_k = gather_frames(*raw_mask, idx);
    mask_ptr = &mask_k;
  }
  const double alpha = mpm_eligible ? cfg.mpm_alpha : 0.0;
  RgbClip rgb_aug = augment_rgb(rgb_k, cfg, codec, rng, mask_ptr, alpha);
  PoseSequence pose_aug = augment_pose(pose_k, cfg, rng);

  std::vector<int> sub = uniform_subsample_indices(cfg.k, cfg.t_model);
  rgb_out = gather_frames(rgb_aug, sub);
  pose_out = gather_frames(pose_aug, sub);
}

}  // namespace

Views make_views(const Sample& sample, const AugmentConfig& cfg, const LatentCodec& codec,
                 Rng& rng, const MaskSequence* raw_mask) {
  Views v;
  const bool q_eligible =
      cfg.mpm_views == MpmViews::Both || cfg.mpm_views == MpmViews::Query;
  const bool k_eligible = cfg.mpm_views == MpmViews::Both || cfg.mpm_views == MpmViews::Key;
  make_one_view(sample, cfg, codec, rng, raw_mask, q_eligible, v.rgb_q, v.pose_q);
  make_one_view(sample, cfg, codec, rng, raw_mask, k_eligible, v.rgb_k, v.pose_k);
  return v;
}

Views make_eval_views(const Sample& sample, const AugmentConfig& cfg) {
  std::vector<int> idx(static_cast<size_t>(cfg.t_model));
  const int t_raw = sample.clip.num_frames();
  for (int i = 0; i < cfg.t_model; ++i)
    idx[static_cast<size_t>(i)] = static_cast<int>((static_cast<int64_t>(i) * t_raw) / cfg.t_model);
  Views v;
  v.rgb_q = gather_frames(sample.clip, idx);
  v.pose_q = gather_frames(sample.pose, idx);
  v.rgb_k = v.rgb_q;
  v.pose_k = v.pose_q;
  return v;
}

}  // namespace ccl
