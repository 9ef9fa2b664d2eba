// SPDX-License-Identifier: Apache-2.0
#ifndef CCL_CORE_CORPUS_HPP
#define CCL_CORE_CORPUS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace ccl {

// Named index lists over the J joints of a pose layout.
struct PoseGroups {
  std::vector<int> left_hand;
  std::vector<int> right_hand;
  std::vector<int> face;
  std::vector<int> mouth;
  std::vector<int> body;

  // 25-joint layout emitted by the synthetic generator:
  // 0-4 left hand, 5-9 right hand, 10-14 face, 15-18 mouth, 19-24 body.
  static PoseGroups toy25();

  int joint_count() const;
  void validate(int num_joints) const;
};

// (T, J, 3) keypoints: x, y in normalized [0,1] image coordinates, channel 3 = confidence.
struct PoseSequence {
  FloatArray joints;

  int frames() const { return joints.dim(0); }
  int num_joints() const { return joints.dim(1); }
  void validate() const;
};

// (T, H, W, 3) video, values in [0,1].
struct RgbClip {
  FloatArray frames;

  int num_frames() const { return frames.dim(0); }
  int height() const { return frames.dim(1); }
  int width() const { return frames.dim(2); }
  void validate() const;
};

struct Sample {
  int64_t id = 0;
  RgbClip clip;
  PoseSequence pose;
  int label = 0;
  int signer = 0;
};

struct CorpusSpec {
  int num_classes = 4;
  int samples_per_class = 8;
  int t_raw = 80;
  int height = 32;
  int width = 32;
  int joints = 25;
  int num_signers = 2;
  uint64_t seed = 1;

  void validate() const;
};

// Deterministic paired generator. Class identity lives in the joint-trajectory
// family; signer identity controls background color, body scale, and disk tint
// and is independent of class. The RGB clip is rendered from the same
// trajectory that produces the pose stream.
std::vector<Sample> generate_corpus(const CorpusSpec& spec);

// Signer appearance, exposed for tests and for rendering single trajectories.
struct SignerStyle {
  float background[3];
  float tint[3];
  double body_scale;
};
SignerStyle signer_style(uint64_t seed, int signer, int num_signers);

// Rasterizes one hard-edged disk into a (H, W, 3) frame.
void draw_disk(FloatArray& frame, double cx, double cy, double radius, const float rgb[3]);

// On-disk corpus format: manifest.tsv + one CCLARR01 array file per stream.
std::string write_corpus(const std::vector<Sample>& samples, const std::string& dir_path);
std::vector<Sample> read_corpus(const std::string& manifest_path);

}  // namespace ccl

#endif
