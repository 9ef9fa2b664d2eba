// SPDX-License-Identifier: Apache-2.0
#include "core/mpm.hpp"

#include <algorithm>
#include <cmath>

namespace ccl {

namespace {

// Gram-Schmidt on seeded Gaussian rows; rerolls on (vanishingly unlikely)
// near-dependence so the block is always orthonormal.
void random_orthogonal(int n, Rng& rng, double* out) {
  for (int attempts = 0; attempts < 64; ++attempts) {
    for (int i = 0; i < n * n; ++i) out[i] = rng.normal();
    bool ok = true;
    for (int r = 0; r < n && ok; ++r) {
      double* row = out + r * n;
      for (int p = 0; p < r; ++p) {
        const double* prev = out + p * n;
        double dot = 0.0;
        for (int c = 0; c < n; ++c) dot += row[c] * prev[c];
        for (int c = 0; c < n; ++c) row[c] -= dot * prev[c];
      }
      double norm = 0.0;
      for (int c = 0; c < n; ++c) norm += row[c] * row[c];
      norm = std::sqrt(norm);
      if (norm < 1e-8) {
        ok = false;
        break;
      }
      for (int c = 0; c < n; ++c) row[c] /= norm;
    }
    if (ok) return;
  }
  fail(Status::Internal, "failed to generate an orthogonal block");
}

void check_dims(const RgbClip& clip, const LatentCodec& codec) {
  if (clip.height() != codec.height || clip.width() != codec.width)
    fail(Status::ShapeMismatch, "clip frame size does not match codec dimensions");
}

}  // namespace

LatentCodec make_codec(int height, int width, int block, uint64_t seed) {
  if (height < 1 || width < 1) fail(Status::InvalidArgument, "codec frame size must be positive");
  if (block < 1) fail(Status::InvalidArgument, "codec block size must be >= 1");
  LatentCodec codec;
  codec.height = height;
  codec.width = width;
  codec.block = block;
  const int d = codec.d_z();
  Rng rng(mix64(seed, 0xC0DEC));
  for (int start = 0; start < d; start += block) {
    const int b = std::min(block, d - start);
    std::vector<double> q(static_cast<size_t>(b) * b);
    random_orthogonal(b, rng, q.data());
    codec.blocks.insert(codec.blocks.end(), q.begin(), q.end());
  }
  return codec;
}

Tensor encode_latent(const RgbClip& clip, const LatentCodec& codec) {
  check_dims(clip, codec);
  const int T = clip.num_frames(), d = codec.d_z();
  Tensor z({T, d});
  std::vector<double> frame(static_cast<size_t>(d));
  for (int t = 0; t < T; ++t) {
    const float* src = &clip.frames[static_cast<int64_t>(t) * d];
    for (int i = 0; i < d; ++i) frame[static_cast<size_t>(i)] = src[i];
    double* dst = z.data() + static_cast<int64_t>(t) * d;
    const double* q = codec.blocks.data();
    for (int start = 0; start < d; start += codec.block) {
      const int b = std::min(codec.block, d - start);
      for (int r = 0; r < b; ++r) {
        double acc = 0.0;
        for (int c = 0; c < b; ++c) acc += q[r * b + c] * frame[static_cast<size_t>(start + c)];
        dst[start + r] = acc;
      }
      q += b * b;
    }
  }
  return z;
}

RgbClip decode_latent(const Tensor& z, const LatentCodec& codec) {
  if (z.rank() != 2 || z.dim(1) != codec.d_z())
    fail(Status::ShapeMismatch, "latent width does not match codec dimensions");
  const int T = z.dim(0), d = codec.d_z();
  RgbClip clip;
  clip.frames = FloatArray({T, codec.height, codec.width, 3});
  for (int t = 0; t < T; ++t) {
    const double* src = z.data() + static_cast<int64_t>(t) * d;
    float* dst = &clip.frames[static_cast<int64_t>(t) * d];
    const double* q = codec.blocks.data();
    for (int start = 0; start < d; start += codec.block) {
      const int b = std::min(codec.block, d - start);
      for (int c = 0; c < b; ++c) {
        double acc = 0.0;
        for (int r = 0; r < b; ++r) acc += q[r * b + c] * src[start + r];  // transpose
        dst[start + c] = static_cast<float>(acc);
      }
      q += b * b;
    }
  }
  return clip;
}

std::vector<double> temporal_std(const Tensor& z) {
  if (z.rank() != 2) fail(Status::ShapeMismatch, "latent must be (T, d_z)");
  const int T = z.dim(0), d = z.dim(1);
  std::vector<double> mean(static_cast<size_t>(d), 0.0), var(static_cast<size_t>(d), 0.0);
  for (int t = 0; t < T; ++t) {
    const double* row = z.data() + static_cast<int64_t>(t) * d;
    for (int c = 0; c < d; ++c) mean[static_cast<size_t>(c)] += row[c];
  }
  for (int c = 0; c < d; ++c) mean[static_cast<size_t>(c)] /= T;
  for (int t = 0; t < T; ++t) {
    const double* row = z.data() + static_cast<int64_t>(t) * d;
    for (int c = 0; c < d; ++c) {
      double dd = row[c] - mean[static_cast<size_t>(c)];
      var[static_cast<size_t>(c)] += dd * dd;
    }
  }
  for (int c = 0; c < d; ++c) var[static_cast<size_t>(c)] = std::sqrt(var[static_cast<size_t>(c)] / T);
  return var;
}

Tensor mask_latent(const Tensor& z, const MpmOptions& opts, int* survivors) {
  if (opts.p < 0.0) fail(Status::InvalidArgument, "mask intensity p must be >= 0");
  const std::vector<double> sigma = temporal_std(z);
  const int d = z.dim(1), T = z.dim(0);

  double threshold = opts.p;
  if (opts.p_quantile) {
    std::vector<double> sorted = sigma;
    std::sort(sorted.begin(), sorted.end());
    double pos = std::clamp(opts.p, 0.0, 1.0) * (d - 1);
    threshold = sorted[static_cast<size_t>(std::llround(pos))];
  }

  std::vector<uint8_t> keep(static_cast<size_t>(d));
  int nkeep = 0;
  for (int c = 0; c < d; ++c) {
    bool k = opts.invert_indicator ? (sigma[static_cast<size_t>(c)] < threshold)
                                   : (sigma[static_cast<size_t>(c)] >= threshold);
    keep[static_cast<size_t>(c)] = k ? 1 : 0;
    nkeep += k ? 1 : 0;
  }
  if (survivors) *survivors = nkeep;

  Tensor out({T, d});
  for (int t = 0; t < T; ++t) {
    const double* src = z.data() + static_cast<int64_t>(t) * d;
    double* dst = out.data() + static_cast<int64_t>(t) * d;
    for (int c = 0; c < d; ++c) dst[c] = keep[static_cast<size_t>(c)] ? src[c] : 0.0;
  }
  return out;
}

MaskSequence derive_mask(const RgbClip& clip, const LatentCodec& codec, const MpmOptions& opts) {
  check_dims(clip, codec);
  const int T = clip.num_frames(), H = codec.height, W = codec.width;
  MaskSequence m;
  m.t = T;
  m.height = H;
  m.width = W;
  m.zeta.assign(static_cast<size_t>(T) * H * W, 0);

  int survivors = 0;
  Tensor z = encode_latent(clip, codec);
  Tensor zhat = mask_latent(z, opts, &survivors);
  if (survivors == codec.d_z()) {
    std::fill(m.zeta.begin(), m.zeta.end(), 1);
    return m;
  }

  RgbClip decoded = decode_latent(zhat, codec);
  for (int t = 0; t < T; ++t) {
    const float* frame = &decoded.frames[static_cast<int64_t>(t) * H * W * 3];
    double mean = 0.0;
    std::vector<double> gray(static_cast<size_t>(H) * W);
    for (int i = 0; i < H * W; ++i) {
      double g = 0.299 * std::fabs(frame[i * 3]) + 0.587 * std::fabs(frame[i * 3 + 1]) +
                 0.114 * std::fabs(frame[i * 3 + 2]);
      gray[static_cast<size_t>(i)] = g;
      mean += g;
    }
    mean /= (H * W);
    uint8_t* dst = &m.zeta[static_cast<size_t>(t) * H * W];
    for (int i = 0; i < H * W; ++i) dst[i] = gray[static_cast<size_t>(i)] > mean ? 1 : 0;
  }
  return m;
}

RgbClip apply_mask(const RgbClip& clip, const MaskSequence& zeta, double alpha, Rng& rng) {
  if (clip.num_frames() != zeta.t || clip.height() != zeta.height || clip.width() != zeta.width)
    fail(Status::ShapeMismatch, "mask and clip shapes disagree");
  const bool gate = rng.uniform() < alpha;
  if (!gate) return clip;
  RgbClip out = clip;
  const int64_t n = static_cast<int64_t>(zeta.zeta.size());
  for (int64_t i = 0; i < n; ++i) {
    if (!zeta.zeta[static_cast<size_t>(i)]) {
      out.frames[i * 3] = 0.0f;
      out.frames[i * 3 + 1] = 0.0f;
      out.frames[i * 3 + 2] = 0.0f;
    }
  }
  return out;
}

}  // namespace ccl
