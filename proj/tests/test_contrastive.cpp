// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "core/contrastive.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace ccl;

namespace {

Tensor unit_vec(std::initializer_list<double> vals) {
  Tensor t({static_cast<int>(vals.size())});
  int i = 0;
  for (double v : vals) t[i++] = v;
  double n = 0.0;
  for (double v : t.v) n += v * v;
  n = std::sqrt(n);
  for (auto& v : t.v) v /= n;
  return t;
}

Tensor basis(int n, int i) {
  Tensor t({n});
  t[i] = 1.0;
  return t;
}

Tensor rows_from(std::vector<Tensor> rows) {
  const int N = static_cast<int>(rows.size()), d = static_cast<int>(rows[0].size());
  Tensor out({N, d});
  for (int i = 0; i < N; ++i) std::copy_n(rows[static_cast<size_t>(i)].data(), d,
                                          out.data() + static_cast<int64_t>(i) * d);
  return out;
}

ModelConfig micro_model() {
  ModelConfig mc;
  mc.rgb = {2, 3, 4, 8};
  mc.pose.group_dim = 4;
  mc.pose.stream_dim = 4;
  mc.pose.heads = 2;
  mc.proj_hidden = 8;
  mc.proj_dim = 8;
  return mc;
}

Views random_views(uint64_t seed, int T = 2, int H = 8, int W = 8, int J = 25) {
  Rng rng(seed);
  auto clip = [&]() {
    RgbClip c;
    c.frames = FloatArray({T, H, W, 3});
    for (auto& v : c.frames.v) v = static_cast<float>(rng.uniform());
    return c;
  };
  auto pose = [&]() {
    PoseSequence p;
    p.joints = FloatArray({T, J, 3});
    for (int i = 0; i < T * J; ++i) {
      p.joints[static_cast<int64_t>(i) * 3] = static_cast<float>(rng.uniform());
      p.joints[static_cast<int64_t>(i) * 3 + 1] = static_cast<float>(rng.uniform());
      p.joints[static_cast<int64_t>(i) * 3 + 2] = 1.0f;
    }
    return p;
  };
  Views v;
  v.rgb_q = clip();
  v.rgb_k = clip();
  v.pose_q = pose();
  v.pose_k = pose();
  return v;
}

}  // namespace

TEST_CASE("memory bank FIFO replacement") {
  Rng rng(1);
  MemoryBank bank(4, 3, rng);
  auto batch = [](std::initializer_list<std::initializer_list<double>> rows) {
    Tensor t({static_cast<int>(rows.size()), 3});
    int i = 0;
    for (auto& r : rows) {
      int j = 0;
      for (double v : r) t[static_cast<int64_t>(i) * 3 + j++] = v;
      ++i;
    }
    return t;
  };
  bank.enqueue(batch({{1, 0, 0}, {0, 1, 0}}));   // A
  bank.enqueue(batch({{0, 0, 2}, {2, 0, 0}}));   // B
  bank.enqueue(batch({{0, 3, 0}, {0, 0, 3}}));   // C overwrites A
  CHECK(bank.enqueue_count() == 3);
  CHECK(bank.cursor() == 2);
  // bank rows: C0, C1, B0, B1 (normalized)
  CHECK(bank.rows()[0 * 3 + 1] == doctest::Approx(1.0));
  CHECK(bank.rows()[1 * 3 + 2] == doctest::Approx(1.0));
  CHECK(bank.rows()[2 * 3 + 2] == doctest::Approx(1.0));
  CHECK(bank.rows()[3 * 3 + 0] == doctest::Approx(1.0));

  for (int i = 0; i < 4; ++i) {
    double n = 0.0;
    for (int j = 0; j < 3; ++j) n += bank.rows()[static_cast<int64_t>(i) * 3 + j] *
                                     bank.rows()[static_cast<int64_t>(i) * 3 + j];
    CHECK(std::fabs(std::sqrt(n) - 1.0) < 1e-5);
  }
}

TEST_CASE("memory bank rejects zero vectors and bad batch sizes") {
  Rng rng(2);
  MemoryBank bank(4, 3, rng);
  Tensor zero({2, 3});
  CHECK_THROWS_WITH_AS(bank.enqueue(zero), doctest::Contains("normalize"), Error);
  Tensor odd({3, 3}, 1.0);
  CHECK_THROWS_AS(bank.enqueue(odd), Error);
}

TEST_CASE("seeded bank rows are unit norm") {
  Rng rng(3);
  MemoryBank bank(16, 5, rng);
  for (int i = 0; i < 16; ++i) {
    double n = 0.0;
    for (int j = 0; j < 5; ++j) n += bank.rows()[static_cast<int64_t>(i) * 5 + j] *
                                     bank.rows()[static_cast<int64_t>(i) * 5 + j];
    CHECK(std::fabs(std::sqrt(n) - 1.0) < 1e-5);
  }
}

TEST_CASE("ema update") {
  ParamSet q, k;
  q.add("w", Tensor({2, 2}, 1.0));
  k.add("w", Tensor({2, 2}, 0.5));

  SUBCASE("gamma=1 leaves keys unchanged") {
    ParamSet k2 = k;
    ema_update(k2, q, 1.0);
    CHECK(k2.items[0].second.v == k.items[0].second.v);
  }
  SUBCASE("gamma=0 copies the query") {
    ParamSet k2 = k;
    ema_update(k2, q, 0.0);
    CHECK(k2.items[0].second.v == q.items[0].second.v);
  }
  SUBCASE("hand-computed value") {
    ParamSet k2 = k;
    ema_update(k2, q, 0.9);
    for (double v : k2.items[0].second.v) CHECK(v == doctest::Approx(0.55).epsilon(1e-12));
  }
  SUBCASE("geometric convergence of the difference") {
    Rng rng(5);
    ParamSet qq, kk;
    qq.add("w", testutil::random_tensor({6}, rng));
    kk.add("w", testutil::random_tensor({6}, rng));
    auto norm_diff = [&]() {
      double n = 0.0;
      for (int i = 0; i < 6; ++i) {
        double d = kk.items[0].second[i] - qq.items[0].second[i];
        n += d * d;
      }
      return std::sqrt(n);
    };
    const double d0 = norm_diff();
    const double gamma = 0.999;
    for (int u = 1; u <= 50; ++u) {
      ema_update(kk, qq, gamma);
      CHECK(std::fabs(norm_diff() - std::pow(gamma, u) * d0) < 1e-6);
    }
  }
  SUBCASE("shape mismatch rejected") {
    ParamSet bad;
    bad.add("w", Tensor({3}, 0.0));
    CHECK_THROWS_AS(ema_update(bad, q, 0.5), Error);
  }
}

TEST_CASE("info_nce hand values") {
  Tensor e1 = basis(2, 0), e2 = basis(2, 1);
  Tensor empty({0, 2});
  CHECK(info_nce(e1, e1, Tensor({0}), 1.0) == 0.0);
  CHECK(info_nce(e1, e1, rows_from({e2}), 1.0) ==
        doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
  CHECK(info_nce(e1, e1, rows_from({e2}), 0.07) ==
        doctest::Approx(std::log(1.0 + std::exp(-1.0 / 0.07))).epsilon(1e-6));
}

TEST_CASE("info_nce equals direct-summation oracle on random draws") {
  for (int rep = 0; rep < 100; ++rep) {
    Rng rng(mix64(100, static_cast<uint64_t>(rep)));
    const int d = 2 + static_cast<int>(rng.uniform_int(6));
    const int n = static_cast<int>(rng.uniform_int(9));  // |S| <= 8
    auto rand_unit = [&]() {
      Tensor t({d});
      for (auto& v : t.v) v = rng.normal();
      double nn = 0.0;
      for (double v : t.v) nn += v * v;
      nn = std::sqrt(nn);
      for (auto& v : t.v) v /= nn;
      return t;
    };
    Tensor zq = rand_unit(), zk = rand_unit();
    Tensor bank({n, d});
    for (int i = 0; i < n; ++i) {
      Tensor r = rand_unit();
      std::copy_n(r.data(), d, bank.data() + static_cast<int64_t>(i) * d);
    }
    double tau = 0.05 + rng.uniform() * 0.95;
    double impl = info_nce(zq, zk, bank, tau);
    double want = oracle::infonce(zq, zk, bank, tau);
    CHECK(impl == doctest::Approx(want).epsilon(1e-9));
    CHECK(impl >= 0.0);
    if (n == 0) CHECK(impl == 0.0);
  }
}

TEST_CASE("spm pseudo-labels: hand case and brute force") {
  Rng rng(6);
  std::vector<Tensor> basis_rows = {basis(4, 0), basis(4, 1), basis(4, 2), basis(4, 3)};
  MemoryBank bank_r = MemoryBank::from_state(rows_from(basis_rows), 0, 0);
  MemoryBank bank_p = MemoryBank::from_state(rows_from(basis_rows), 0, 0);

  auto y = spm_pseudo_labels(basis(4, 0), basis(4, 2), bank_r, bank_p, 1);
  CHECK(y == std::vector<uint8_t>{1, 0, 1, 0});

  // identical banks and queries: union of equal singletons has one element
  auto y2 = spm_pseudo_labels(basis(4, 1), basis(4, 1), bank_r, bank_p, 1);
  int pop = 0;
  for (auto b : y2) pop += b;
  CHECK(pop == 1);

  for (int rep = 0; rep < 100; ++rep) {
    Rng r2(mix64(200, static_cast<uint64_t>(rep)));
    const int n = 8 + static_cast<int>(r2.uniform_int(25));  // N <= 32
    const int d = 3 + static_cast<int>(r2.uniform_int(5));
    const int k = 1 + static_cast<int>(r2.uniform_int(std::min(8, n - 1)));
    Tensor rows({n, d});
    for (auto& v : rows.v) v = r2.normal();
    for (int i = 0; i < n; ++i) {
      double nn = 0.0;
      for (int j = 0; j < d; ++j) nn += rows[static_cast<int64_t>(i) * d + j] *
                                        rows[static_cast<int64_t>(i) * d + j];
      nn = std::sqrt(nn);
      for (int j = 0; j < d; ++j) rows[static_cast<int64_t>(i) * d + j] /= nn;
    }
    Tensor q({d});
    for (auto& v : q.v) v = r2.normal();
    auto impl = top_k_indices(rows, q, k);
    auto want = oracle::top_k(rows, q, k);
    CHECK(impl == want);
  }
}

TEST_CASE("spm logits values") {
  Rng rng(7);
  std::vector<Tensor> rows = {basis(3, 0), basis(3, 1)};
  MemoryBank bank = MemoryBank::from_state(rows_from(rows), 0, 0);
  Tensor f = basis(3, 2);  // orthogonal to every row
  Tensor yh = spm_logits(f, bank, 1.0);
  CHECK(yh[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(yh[1] == doctest::Approx(0.5).epsilon(1e-12));

  Tensor f2 = basis(3, 0);
  Tensor yh2 = spm_logits(f2, bank, 1.0);
  CHECK(yh2[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));

  // logistic(50) = 1 - 2e-22, which rounds to 1.0 in double
  Tensor yh3 = spm_logits(f2, bank, 0.02);
  CHECK(std::fabs(yh3[0] - (1.0 - 2e-22)) < 1e-15);
}

TEST_CASE("spm bce values") {
  Tensor yh({2});
  yh[0] = 0.5;
  yh[1] = 0.5;
  CHECK(spm_bce(yh, {1, 0}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(spm_bce(yh, {0, 0}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // perfect prediction drives the loss to zero
  double prev = 1e9;
  for (double eps : {1e-2, 1e-4, 1e-6}) {
    Tensor p({2});
    p[0] = 1.0 - eps;
    p[1] = eps;
    double loss = spm_bce(p, {1, 0});
    CHECK(loss < prev);
    prev = loss;
  }
  CHECK(prev < 1e-5);
}

TEST_CASE("pretrain_losses: report structure and micro-oracle") {
  ModelConfig mc = micro_model();
  Rng rng(11);
  BranchState rgb = init_branch(Modality::Rgb, mc, 4, rng);
  BranchState pose = init_branch(Modality::Pose, mc, 4, rng);
  LossConfig cfg;
  cfg.bank_size = 4;
  cfg.k = 2;
  std::vector<Views> batch = {random_views(21), random_views(22)};

  PretrainResult res = pretrain_losses(batch, mc, rgb, pose, cfg, true, false, 1);
  CHECK(res.report.l_single == doctest::Approx(res.report.l_cl_R + res.report.l_spm_R +
                                               res.report.l_cl_P + res.report.l_spm_P)
                                   .epsilon(1e-9));
  CHECK(res.report.total ==
        doctest::Approx(res.report.l_single + res.report.l_cross).epsilon(1e-9));

  // independent straight-line recomputation of every term
  oracle::Losses mean{};
  for (const Views& v : batch) {
    oracle::SampleEmbeddings e;
    auto rq = embed_rgb(v.rgb_q, mc, rgb.enc_q, rgb.proj_q);
    auto rk = embed_rgb(v.rgb_k, mc, rgb.enc_k, rgb.proj_k);
    auto pq = embed_pose(v.pose_q, mc, pose.enc_q, pose.proj_q);
    auto pk = embed_pose(v.pose_k, mc, pose.enc_k, pose.proj_k);
    e.g_r_q = rq.g;
    e.f_r_q = rq.f;
    e.f_r_k = rk.f;
    e.g_p_q = pq.g;
    e.f_p_q = pq.f;
    e.f_p_k = pk.f;
    auto l = oracle::sample_losses(e, rgb.bank_g.rows(), pose.bank_g.rows(), rgb.bank_f.rows(),
                                   pose.bank_f.rows(), cfg.k, cfg.tau, cfg.tau_spm, true, true,
                                   true);
    mean.cl_r += l.cl_r / 2;
    mean.cl_p += l.cl_p / 2;
    mean.spm_r += l.spm_r / 2;
    mean.spm_p += l.spm_p / 2;
    mean.r2p += l.r2p / 2;
    mean.p2r += l.p2r / 2;
    mean.total += l.total / 2;
  }
  CHECK(res.report.l_cl_R == doctest::Approx(mean.cl_r).epsilon(1e-9));
  CHECK(res.report.l_cl_P == doctest::Approx(mean.cl_p).epsilon(1e-9));
  CHECK(res.report.l_spm_R == doctest::Approx(mean.spm_r).epsilon(1e-9));
  CHECK(res.report.l_spm_P == doctest::Approx(mean.spm_p).epsilon(1e-9));
  CHECK(res.report.l_r2p == doctest::Approx(mean.r2p).epsilon(1e-9));
  CHECK(res.report.l_p2r == doctest::Approx(mean.p2r).epsilon(1e-9));
  CHECK(res.report.total == doctest::Approx(mean.total).epsilon(1e-9));
}

TEST_CASE("disabling SPM and cross terms reduces the total to the two CL terms") {
  ModelConfig mc = micro_model();
  Rng rng(12);
  BranchState rgb = init_branch(Modality::Rgb, mc, 4, rng);
  BranchState pose = init_branch(Modality::Pose, mc, 4, rng);
  LossConfig cfg;
  cfg.bank_size = 4;
  cfg.k = 2;
  cfg.use_spm = false;
  cfg.use_cross = false;
  std::vector<Views> batch = {random_views(31), random_views(32)};
  PretrainResult res = pretrain_losses(batch, mc, rgb, pose, cfg, false, false, 1);
  CHECK(res.report.l_spm_R == 0.0);
  CHECK(res.report.l_spm_P == 0.0);
  CHECK(res.report.l_cross == 0.0);
  CHECK(res.report.total ==
        doctest::Approx(res.report.l_cl_R + res.report.l_cl_P).epsilon(1e-12));
}

TEST_CASE("pretrain_losses is thread-count invariant") {
  ModelConfig mc = micro_model();
  Rng rng(13);
  BranchState rgb = init_branch(Modality::Rgb, mc, 4, rng);
  BranchState pose = init_branch(Modality::Pose, mc, 4, rng);
  LossConfig cfg;
  cfg.bank_size = 4;
  cfg.k = 2;
  std::vector<Views> batch = {random_views(41), random_views(42), random_views(43),
                              random_views(44)};
  PretrainResult a = pretrain_losses(batch, mc, rgb, pose, cfg, true, true, 1);
  PretrainResult b = pretrain_losses(batch, mc, rgb, pose, cfg, true, true, 4);
  CHECK(a.report.total == b.report.total);
  for (size_t i = 0; i < a.grads.rgb_enc.g.size(); ++i)
    CHECK(a.grads.rgb_enc.g[i].v == b.grads.rgb_enc.g[i].v);
  for (size_t i = 0; i < a.grads.pose_enc.g.size(); ++i)
    CHECK(a.grads.pose_enc.g[i].v == b.grads.pose_enc.g[i].v);
}

TEST_CASE("key-pathway parameters receive exactly zero gradient") {
  // keys enter the graph as no-grad leaves; verify end to end that perturbing
  // the loss graph never touches them by checking grads of a run twice
  ModelConfig mc = micro_model();
  Rng rng(14);
  BranchState rgb = init_branch(Modality::Rgb, mc, 4, rng);
  BranchState pose = init_branch(Modality::Pose, mc, 4, rng);
  LossConfig cfg;
  cfg.bank_size = 4;
  cfg.k = 2;
  std::vector<Views> batch = {random_views(51)};
  ParamSet rgb_k_before = rgb.enc_k;
  PretrainResult res = pretrain_losses(batch, mc, rgb, pose, cfg, true, true, 1);
  // state untouched and gradients exist only for query-side sets
  for (size_t i = 0; i < rgb.enc_k.items.size(); ++i)
    CHECK(rgb.enc_k.items[i].second.v == rgb_k_before.items[i].second.v);
  double qmag = 0.0;
  for (const auto& t : res.grads.rgb_enc.g)
    for (double v : t.v) qmag += std::fabs(v);
  CHECK(qmag > 0.0);
}
