// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "core/encoders.hpp"
#include "test_util.hpp"

using namespace ccl;
using testutil::fd_worst_rel_error;

namespace {

RgbEncoderConfig micro_rgb() { return {2, 3, 4, 8}; }

PoseEncoderConfig micro_pose() {
  PoseEncoderConfig cfg;
  cfg.group_dim = 4;
  cfg.stream_dim = 4;
  cfg.heads = 2;
  return cfg;
}

RgbClip micro_clip(uint64_t seed, int T = 2, int H = 8, int W = 8) {
  RgbClip clip;
  clip.frames = FloatArray({T, H, W, 3});
  Rng rng(seed);
  for (auto& v : clip.frames.v) v = static_cast<float>(rng.uniform());
  return clip;
}

PoseSequence micro_poseseq(uint64_t seed, int T = 2, int J = 25) {
  PoseSequence p;
  p.joints = FloatArray({T, J, 3});
  Rng rng(seed);
  for (int i = 0; i < T * J; ++i) {
    p.joints[static_cast<int64_t>(i) * 3] = static_cast<float>(rng.uniform());
    p.joints[static_cast<int64_t>(i) * 3 + 1] = static_cast<float>(rng.uniform());
    p.joints[static_cast<int64_t>(i) * 3 + 2] = 1.0f;
  }
  return p;
}

// FD-checks every element of every parameter tensor of a network whose forward
// is given by `loss(params)`.
void check_network_grads(const ParamSet& params,
                         const std::function<double(const ParamSet&)>& loss,
                         const std::function<GradSet(const ParamSet&)>& analytic, double tol) {
  GradSet g = analytic(params);
  for (size_t pi = 0; pi < params.items.size(); ++pi) {
    ParamSet work = params;
    Tensor& target = work.items[pi].second;
    auto f = [&](const Tensor& t) {
      target = t;
      return loss(work);
    };
    double err = fd_worst_rel_error(f, params.items[pi].second, g.g[pi], 1e-4);
    INFO("parameter ", params.items[pi].first);
    CHECK(err <= 1e-3);
  }
}

}  // namespace

TEST_CASE("rgb encoder output shape and determinism") {
  Rng rng(1);
  auto cfg = micro_rgb();
  ParamSet params = init_rgb_encoder(cfg, rng);
  RgbClip clip = micro_clip(2);
  Graph g;
  ParamLeaves p = register_params(g, params, false);
  int out = rgb_encoder_forward(g, cfg, p, g.leaf(rgb_input(clip), false));
  CHECK(g.val(out).shape == std::vector<int>{8});
  for (double v : g.val(out).v) CHECK(std::isfinite(v));

  Graph g2;
  ParamLeaves p2 = register_params(g2, params, false);
  int out2 = rgb_encoder_forward(g2, cfg, p2, g2.leaf(rgb_input(clip), false));
  CHECK(g.val(out).v == g2.val(out2).v);
}

TEST_CASE("rgb encoder gradients match finite differences") {
  Rng rng(3);
  auto cfg = micro_rgb();
  ParamSet params = init_rgb_encoder(cfg, rng);
  Tensor input = rgb_input(micro_clip(4));
  Rng wrng(5);
  Tensor proj = testutil::random_tensor({8}, wrng);

  auto loss = [&](const ParamSet& ps) {
    Graph g;
    ParamLeaves p = register_params(g, ps, false);
    int out = rgb_encoder_forward(g, cfg, p, g.leaf(input, false));
    return g.scalar(g.dot(out, g.leaf(proj, false)));
  };
  auto analytic = [&](const ParamSet& ps) {
    Graph g;
    ParamLeaves p = register_params(g, ps, true);
    int out = rgb_encoder_forward(g, cfg, p, g.leaf(input, false));
    g.backward(g.dot(out, g.leaf(proj, false)));
    GradSet gs = GradSet::zeros_like(ps);
    collect_grads(g, p, gs, 1.0);
    return gs;
  };
  check_network_grads(params, loss, analytic, 1e-3);
}

TEST_CASE("pose encoder output shape, determinism, and confidence weighting") {
  Rng rng(6);
  auto cfg = micro_pose();
  ParamSet params = init_pose_encoder(cfg, rng);
  PoseSequence pose = micro_poseseq(7);

  Graph g;
  ParamLeaves p = register_params(g, params, false);
  PoseForward out = pose_encoder_forward(g, cfg, p, g.leaf(pose_input(pose), false));
  CHECK(g.val(out.embedding).shape == std::vector<int>{8});

  // zero-confidence pose == all-zero pose
  PoseSequence zero_conf = pose;
  for (int i = 0; i < zero_conf.joints.size() / 3; ++i)
    zero_conf.joints[static_cast<int64_t>(i) * 3 + 2] = 0.0f;
  PoseSequence all_zero = pose;
  std::fill(all_zero.joints.v.begin(), all_zero.joints.v.end(), 0.0f);
  Graph g1, g2;
  ParamLeaves p1 = register_params(g1, params, false);
  ParamLeaves p2 = register_params(g2, params, false);
  auto e1 = pose_encoder_forward(g1, cfg, p1, g1.leaf(pose_input(zero_conf), false));
  auto e2 = pose_encoder_forward(g2, cfg, p2, g2.leaf(pose_input(all_zero), false));
  CHECK(g1.val(e1.embedding).v == g2.val(e2.embedding).v);

  // a joint with zero confidence makes its coordinates irrelevant
  PoseSequence masked = pose;
  masked.joints[2] = 0.0f;  // joint 0, frame 0 confidence
  PoseSequence moved = masked;
  moved.joints[0] = 0.99f;
  moved.joints[1] = 0.01f;
  Graph g3, g4;
  ParamLeaves p3 = register_params(g3, params, false);
  ParamLeaves p4 = register_params(g4, params, false);
  auto e3 = pose_encoder_forward(g3, cfg, p3, g3.leaf(pose_input(masked), false));
  auto e4 = pose_encoder_forward(g4, cfg, p4, g4.leaf(pose_input(moved), false));
  CHECK(g3.val(e3.embedding).v == g4.val(e4.embedding).v);
}

TEST_CASE("swapping hand inputs swaps the hand group features") {
  Rng rng(8);
  auto cfg = micro_pose();
  ParamSet params = init_pose_encoder(cfg, rng);

  // pose A: arbitrary left hand, right hand mirrored from it
  PoseSequence a = micro_poseseq(9);
  const int J = 25;
  for (int t = 0; t < a.frames(); ++t)
    for (int k = 0; k < 5; ++k) {
      const float* lh = &a.joints[(static_cast<int64_t>(t) * J + k) * 3];
      float* rh = &a.joints[(static_cast<int64_t>(t) * J + 5 + k) * 3];
      rh[0] = 1.0f - lh[0];
      rh[1] = lh[1];
      rh[2] = lh[2];
    }
  // pose B swaps the hand slots
  PoseSequence b = a;
  for (int t = 0; t < a.frames(); ++t)
    for (int k = 0; k < 5; ++k)
      for (int c = 0; c < 3; ++c) {
        b.joints[(static_cast<int64_t>(t) * J + k) * 3 + c] =
            a.joints[(static_cast<int64_t>(t) * J + 5 + k) * 3 + c];
        b.joints[(static_cast<int64_t>(t) * J + 5 + k) * 3 + c] =
            a.joints[(static_cast<int64_t>(t) * J + k) * 3 + c];
      }

  Graph ga, gb;
  ParamLeaves pa = register_params(ga, params, false);
  ParamLeaves pb = register_params(gb, params, false);
  auto fa = pose_encoder_forward(ga, cfg, pa, ga.leaf(pose_input(a), false));
  auto fb = pose_encoder_forward(gb, cfg, pb, gb.leaf(pose_input(b), false));
  CHECK(ga.val(fa.group_features[0]).v == gb.val(fb.group_features[1]).v);
  CHECK(ga.val(fa.group_features[1]).v == gb.val(fb.group_features[0]).v);
}

TEST_CASE("pose encoder gradients match finite differences") {
  Rng rng(10);
  auto cfg = micro_pose();
  ParamSet params = init_pose_encoder(cfg, rng);
  Tensor input = pose_input(micro_poseseq(11));
  Rng wrng(12);
  Tensor proj = testutil::random_tensor({8}, wrng);

  auto loss = [&](const ParamSet& ps) {
    Graph g;
    ParamLeaves p = register_params(g, ps, false);
    auto out = pose_encoder_forward(g, cfg, p, g.leaf(input, false));
    return g.scalar(g.dot(out.embedding, g.leaf(proj, false)));
  };
  auto analytic = [&](const ParamSet& ps) {
    Graph g;
    ParamLeaves p = register_params(g, ps, true);
    auto out = pose_encoder_forward(g, cfg, p, g.leaf(input, false));
    g.backward(g.dot(out.embedding, g.leaf(proj, false)));
    GradSet gs = GradSet::zeros_like(ps);
    collect_grads(g, p, gs, 1.0);
    return gs;
  };
  check_network_grads(params, loss, analytic, 1e-3);
}

TEST_CASE("projection head normalizes and grad-checks") {
  Rng rng(13);
  ProjectionConfig cfg{8, 8, 8};
  ParamSet params = init_projection(cfg, rng);
  Rng xr(14);
  Tensor x = testutil::random_tensor({8}, xr, 2.0);

  Graph g;
  ParamLeaves p = register_params(g, params, false);
  int f = projection_forward(g, cfg, p, g.leaf(x, false));
  double norm = 0.0;
  for (double v : g.val(f).v) norm += v * v;
  CHECK(std::fabs(std::sqrt(norm) - 1.0) < 1e-6);

  Rng wrng(15);
  Tensor proj = testutil::random_tensor({8}, wrng);
  auto loss = [&](const ParamSet& ps) {
    Graph gg;
    ParamLeaves pp = register_params(gg, ps, false);
    int out = projection_forward(gg, cfg, pp, gg.leaf(x, false));
    return gg.scalar(gg.dot(out, gg.leaf(proj, false)));
  };
  auto analytic = [&](const ParamSet& ps) {
    Graph gg;
    ParamLeaves pp = register_params(gg, ps, true);
    int out = projection_forward(gg, cfg, pp, gg.leaf(x, false));
    gg.backward(gg.dot(out, gg.leaf(proj, false)));
    GradSet gs = GradSet::zeros_like(ps);
    collect_grads(gg, pp, gs, 1.0);
    return gs;
  };
  check_network_grads(params, loss, analytic, 1e-3);
}

TEST_CASE("classifier head basics and grad-check") {
  Rng rng(16);
  ClassifierConfig cfg{8, 5};
  ParamSet params = init_classifier(cfg, rng);
  Rng xr(17);
  Tensor x = testutil::random_tensor({8}, xr);

  ParamSet zero = params;
  for (auto& [_, t] : zero.items) t.fill(0.0);
  Graph g;
  ParamLeaves p = register_params(g, zero, false);
  int out = classifier_forward(g, cfg, p, g.leaf(x, false));
  CHECK(g.val(out).shape == std::vector<int>{5});
  for (double v : g.val(out).v) CHECK(v == 0.0);

  auto loss = [&](const ParamSet& ps) {
    Graph gg;
    ParamLeaves pp = register_params(gg, ps, false);
    int o = classifier_forward(gg, cfg, pp, gg.leaf(x, false));
    return gg.scalar(gg.cross_entropy(o, 3));
  };
  auto analytic = [&](const ParamSet& ps) {
    Graph gg;
    ParamLeaves pp = register_params(gg, ps, true);
    int o = classifier_forward(gg, cfg, pp, gg.leaf(x, false));
    gg.backward(gg.cross_entropy(o, 3));
    GradSet gs = GradSet::zeros_like(ps);
    collect_grads(gg, pp, gs, 1.0);
    return gs;
  };
  check_network_grads(params, loss, analytic, 1e-3);
}

TEST_CASE("shape parity detects tampering") {
  Rng rng(18);
  ParamSet a = init_projection({8, 8, 8}, rng);
  ParamSet b = a;
  check_shape_parity(a, b);
  b.items[0].second = Tensor({3, 3});
  CHECK_THROWS_AS(check_shape_parity(a, b), Error);
}

TEST_CASE("architecture descriptor round-trip and mismatch naming") {
  ArchDescriptor d;
  d.rgb = {8, 16, 32, 128};
  d.pose = micro_pose();
  d.proj = {128, 128, 128};
  d.num_classes = 10;
  d.t_model = 8;
  ArchDescriptor back = ArchDescriptor::from_text(d.to_text());
  back.check_compatible(d);

  ArchDescriptor other = d;
  other.pose.stream_dim = 16;
  try {
    d.check_compatible(other);
    FAIL("expected mismatch");
  } catch (const Error& e) {
    CHECK(e.status() == Status::ArchMismatch);
    CHECK(std::string(e.what()).find("pose_stream_dim") != std::string::npos);
  }
}
