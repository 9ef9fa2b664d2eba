// SPDX-License-Identifier: Apache-2.0
#ifndef CCL_CORE_MPM_HPP
#define CCL_CORE_MPM_HPP

#include <cstdint>
#include <vector>

#include "core/corpus.hpp"
#include "core/tensor.hpp"

namespace ccl {

// Motion-preserving masking: encode frames into a per-frame latent, zero the
// channels whose temporal standard deviation marks them as static, decode, and
// binarize the decoded frames into a pixel mask.

// Exactly invertible per-frame linear map: a seed-generated block-diagonal
// orthogonal matrix over the flattened H*W*3 frame (inverse = transpose).
// Blocks cover consecutive flattened indices, so they stay spatially local and
// the latent temporal variance tracks local motion.
struct LatentCodec {
  int height = 0;
  int width = 0;
  int block = 3;
  std::vector<double> blocks;  // concatenated row-major b x b orthogonal blocks

  int d_z() const { return height * width * 3; }
};

LatentCodec make_codec(int height, int width, int block, uint64_t seed);

struct MpmOptions {
  double p = 0.5;
  bool invert_indicator = false;  // keep sigma < p instead of sigma >= p
  bool p_quantile = false;        // interpret p as a quantile of sigma
};

struct MaskSequence {
  int t = 0, height = 0, width = 0;
  std::vector<uint8_t> zeta;  // T*H*W entries, strictly 0 or 1

  uint8_t at(int tt, int y, int x) const {
    return zeta[(static_cast<size_t>(tt) * height + y) * width + x];
  }
};

Tensor encode_latent(const RgbClip& clip, const LatentCodec& codec);
RgbClip decode_latent(const Tensor& z, const LatentCodec& codec);

// Population standard deviation of each latent channel across the T rows.
std::vector<double> temporal_std(const Tensor& z);

// Zeroes non-surviving channels; surviving channels are copied bit-identically.
// Returns the survivor count through `survivors` when non-null.
Tensor mask_latent(const Tensor& z, const MpmOptions& opts, int* survivors = nullptr);

// Decodes the masked latent, gray-scales (luma on absolute values), and
// binarizes each frame against its own mean gray value (strictly greater).
// When every channel survives the mask is the identity (all ones); a
// mean-threshold binarization cannot represent an all-pass mask otherwise.
MaskSequence derive_mask(const RgbClip& clip, const LatentCodec& codec, const MpmOptions& opts);

// With probability alpha (one draw per call) multiplies the clip by the mask
// broadcast over color channels; otherwise returns the clip unchanged.
RgbClip apply_mask(const RgbClip& clip, const MaskSequence& zeta, double alpha, Rng& rng);

}  // namespace ccl

#endif
