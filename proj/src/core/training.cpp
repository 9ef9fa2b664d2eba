// SPDX-License-Identifier: Apache-2.0
#include "core/training.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "core/corpus.hpp"

namespace fs = std::filesystem;

namespace ccl {

SgdOptimizer::SgdOptimizer(const ParamSet& params) {
  vel_.reserve(params.items.size());
  for (const auto& [_, t] : params.items) vel_.emplace_back(t.shape);
}

void SgdOptimizer::step(ParamSet& params, const GradSet& grads, double lr, const SgdConfig& cfg) {
  if (vel_.size() != params.items.size() || grads.g.size() != params.items.size())
    fail(Status::Internal, "optimizer state misaligned with parameters");
  for (size_t i = 0; i < vel_.size(); ++i) {
    Tensor& theta = params.items[i].second;
    Tensor& v = vel_[i];
    const Tensor& g = grads.g[i];
    for (int64_t j = 0; j < theta.size(); ++j) {
      v[j] = cfg.momentum * v[j] + (g[j] + cfg.weight_decay * theta[j]);
      theta[j] -= lr * v[j];
    }
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) fail(Status::InvalidConfig, "train_epochs must be >= 1");
  if (base_lr <= 0.0) fail(Status::InvalidConfig, "train_base_lr must be > 0");
  if (batch_size < 1) fail(Status::InvalidConfig, "train_batch_size must be >= 1");
  for (size_t i = 0; i < lr_drop_epochs.size(); ++i) {
    if (lr_drop_epochs[i] < 0 || lr_drop_epochs[i] >= epochs)
      fail(Status::InvalidConfig, "lr drop epochs must lie in [0, epochs)");
    if (i > 0 && lr_drop_epochs[i] <= lr_drop_epochs[i - 1])
      fail(Status::InvalidConfig, "lr drop epochs must be strictly increasing");
  }
  if (threads < 1) fail(Status::InvalidConfig, "train_threads must be >= 1");
  augment.validate();
  if (phase == TrainPhase::Pretrain) loss.validate(batch_size);
}

double lr_at(int epoch, const TrainConfig& cfg) {
  int drops = 0;
  for (int e : cfg.lr_drop_epochs)
    if (e <= epoch) ++drops;
  return cfg.base_lr * std::pow(cfg.lr_drop_factor, drops);
}

ArchDescriptor make_descriptor(const ModelConfig& mc, int t_model, int num_classes) {
  ArchDescriptor d;
  d.rgb = mc.rgb;
  d.pose = mc.pose;
  d.proj = {0, mc.proj_hidden, mc.proj_dim};
  d.num_classes = num_classes;
  d.t_model = t_model;
  return d;
}

namespace {

std::vector<int> shuffled_order(int n, uint64_t seed) {
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(i + 1)));
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  return order;
}

void put_params(Checkpoint& ck, const std::string& prefix, const ParamSet& p) {
  for (const auto& [name, t] : p.items) ck.add_array(prefix + "/" + name, t);
}

ParamSet get_params(const Checkpoint& ck, const std::string& prefix, ParamSet reference) {
  for (auto& [name, t] : reference.items) {
    const Tensor& stored = ck.array(prefix + "/" + name);
    if (stored.shape != t.shape)
      fail(Status::ArchMismatch, "checkpoint array shape differs for " + prefix + "/" + name);
    t = stored;
  }
  return reference;
}

void put_velocities(Checkpoint& ck, const std::string& prefix, const ParamSet& p,
                    const SgdOptimizer& opt) {
  for (size_t i = 0; i < p.items.size(); ++i)
    ck.add_array(prefix + "/" + p.items[i].first, opt.velocities()[i]);
}

SgdOptimizer get_velocities(const Checkpoint& ck, const std::string& prefix, const ParamSet& p) {
  SgdOptimizer opt(p);
  for (size_t i = 0; i < p.items.size(); ++i)
    opt.velocities()[i] = ck.array(prefix + "/" + p.items[i].first);
  return opt;
}

std::string arch_to_meta(const ArchDescriptor& d) {
  std::string text = d.to_text();
  for (auto& c : text)
    if (c == '\n') c = '|';
  return text;
}

ArchDescriptor arch_from_meta(const std::string& m) {
  std::string text = m;
  for (auto& c : text)
    if (c == '|') c = '\n';
  return ArchDescriptor::from_text(text);
}

void put_bank(Checkpoint& ck, const std::string& prefix, const MemoryBank& bank) {
  ck.add_array(prefix + ".rows", bank.rows());
  ck.meta[prefix + ".cursor"] = std::to_string(bank.cursor());
  ck.meta[prefix + ".enqueues"] = std::to_string(bank.enqueue_count());
}

MemoryBank get_bank(const Checkpoint& ck, const std::string& prefix) {
  return MemoryBank::from_state(ck.array(prefix + ".rows"),
                                static_cast<int>(ck.meta_int(prefix + ".cursor")),
                                ck.meta_int(prefix + ".enqueues"));
}

struct PretrainRun {
  BranchState rgb, pose;
  SgdOptimizer opt_rgb_enc, opt_rgb_proj, opt_pose_enc, opt_pose_proj;
  int64_t step = 0;
  int epoch = 0;
};

void save_pretrain_checkpoint(const std::string& path, const TrainConfig& cfg,
                              const PretrainRun& run) {
  Checkpoint ck;
  ck.meta["kind"] = "pretrain";
  ck.meta["arch"] = arch_to_meta(make_descriptor(cfg.model, cfg.augment.t_model, 0));
  ck.meta["epoch"] = std::to_string(run.epoch);
  ck.meta["step"] = std::to_string(run.step);
  ck.meta["rgb.ema_count"] = std::to_string(run.rgb.ema_count);
  ck.meta["pose.ema_count"] = std::to_string(run.pose.ema_count);
  put_params(ck, "rgb.enc_q", run.rgb.enc_q);
  put_params(ck, "rgb.enc_k", run.rgb.enc_k);
  put_params(ck, "rgb.proj_q", run.rgb.proj_q);
  put_params(ck, "rgb.proj_k", run.rgb.proj_k);
  put_params(ck, "pose.enc_q", run.pose.enc_q);
  put_params(ck, "pose.enc_k", run.pose.enc_k);
  put_params(ck, "pose.proj_q", run.pose.proj_q);
  put_params(ck, "pose.proj_k", run.pose.proj_k);
  put_bank(ck, "rgb.bank_g", run.rgb.bank_g);
  put_bank(ck, "rgb.bank_f", run.rgb.bank_f);
  put_bank(ck, "pose.bank_g", run.pose.bank_g);
  put_bank(ck, "pose.bank_f", run.pose.bank_f);
  put_velocities(ck, "vel.rgb_enc", run.rgb.enc_q, run.opt_rgb_enc);
  put_velocities(ck, "vel.rgb_proj", run.rgb.proj_q, run.opt_rgb_proj);
  put_velocities(ck, "vel.pose_enc", run.pose.enc_q, run.opt_pose_enc);
  put_velocities(ck, "vel.pose_proj", run.pose.proj_q, run.opt_pose_proj);
  ck.save(path);
}

PretrainRun init_pretrain_run(const TrainConfig& cfg) {
  PretrainRun run;
  Rng rgb_rng(mix64(cfg.seed, 0xB1));
  Rng pose_rng(mix64(cfg.seed, 0xB2));
  run.rgb = init_branch(Modality::Rgb, cfg.model, cfg.loss.bank_size, rgb_rng);
  run.pose = init_branch(Modality::Pose, cfg.model, cfg.loss.bank_size, pose_rng);
  run.opt_rgb_enc = SgdOptimizer(run.rgb.enc_q);
  run.opt_rgb_proj = SgdOptimizer(run.rgb.proj_q);
  run.opt_pose_enc = SgdOptimizer(run.pose.enc_q);
  run.opt_pose_proj = SgdOptimizer(run.pose.proj_q);
  return run;
}

PretrainRun restore_pretrain_run(const TrainConfig& cfg, const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  if (ck.meta_at("kind") != "pretrain")
    fail(Status::Schema, "expected a pretrain checkpoint: " + path);
  const ArchDescriptor want = make_descriptor(cfg.model, cfg.augment.t_model, 0);
  arch_from_meta(ck.meta_at("arch")).check_compatible(want);

  PretrainRun run = init_pretrain_run(cfg);
  run.epoch = static_cast<int>(ck.meta_int("epoch"));
  run.step = ck.meta_int("step");
  run.rgb.enc_q = get_params(ck, "rgb.enc_q", std::move(run.rgb.enc_q));
  run.rgb.enc_k = get_params(ck, "rgb.enc_k", std::move(run.rgb.enc_k));
  run.rgb.proj_q = get_params(ck, "rgb.proj_q", std::move(run.rgb.proj_q));
  run.rgb.proj_k = get_params(ck, "rgb.proj_k", std::move(run.rgb.proj_k));
  run.pose.enc_q = get_params(ck, "pose.enc_q", std::move(run.pose.enc_q));
  run.pose.enc_k = get_params(ck, "pose.enc_k", std::move(run.pose.enc_k));
  run.pose.proj_q = get_params(ck, "pose.proj_q", std::move(run.pose.proj_q));
  run.pose.proj_k = get_params(ck, "pose.proj_k", std::move(run.pose.proj_k));
  run.rgb.bank_g = get_bank(ck, "rgb.bank_g");
  run.rgb.bank_f = get_bank(ck, "rgb.bank_f");
  run.pose.bank_g = get_bank(ck, "pose.bank_g");
  run.pose.bank_f = get_bank(ck, "pose.bank_f");
  run.rgb.ema_count = ck.meta_int("rgb.ema_count");
  run.pose.ema_count = ck.meta_int("pose.ema_count");
  run.opt_rgb_enc = get_velocities(ck, "vel.rgb_enc", run.rgb.enc_q);
  run.opt_rgb_proj = get_velocities(ck, "vel.rgb_proj", run.rgb.proj_q);
  run.opt_pose_enc = get_velocities(ck, "vel.pose_enc", run.pose.enc_q);
  run.opt_pose_proj = get_velocities(ck, "vel.pose_proj", run.pose.proj_q);
  return run;
}

// Per-sample deterministic augmentation stream.
Rng view_rng(uint64_t seed, int epoch, int64_t sample_id) {
  return Rng(mix64(seed, 0x77, static_cast<uint64_t>(epoch), static_cast<uint64_t>(sample_id)));
}

std::vector<Views> build_views(const std::vector<Sample>& samples, const std::vector<int>& order,
                               int batch_start, int batch_size, const TrainConfig& cfg, int epoch,
                               const LatentCodec& codec,
                               const std::vector<MaskSequence>* masks) {
  std::vector<Views> views(static_cast<size_t>(batch_size));
  auto worker = [&](int tid, int stride) {
    for (int i = tid; i < batch_size; i += stride) {
      const int si = order[static_cast<size_t>(batch_start + i)];
      const Sample& s = samples[static_cast<size_t>(si)];
      Rng rng = view_rng(cfg.seed, epoch, s.id);
      const MaskSequence* mask = masks ? &(*masks)[static_cast<size_t>(si)] : nullptr;
      views[static_cast<size_t>(i)] = make_views(s, cfg.augment, codec, rng, mask);
    }
  };
  const int nthreads = std::max(1, std::min(cfg.threads, batch_size));
  if (nthreads == 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker, t, nthreads);
    for (auto& th : pool) th.join();
  }
  return views;
}

void check_corpus_geometry(const std::vector<Sample>& samples, const TrainConfig& cfg) {
  if (samples.empty()) fail(Status::InvalidConfig, "corpus is empty");
  const int H = samples[0].clip.height(), W = samples[0].clip.width();
  const int J = samples[0].pose.num_joints();
  for (const Sample& s : samples) {
    if (s.clip.height() != H || s.clip.width() != W || s.pose.num_joints() != J)
      fail(Status::ShapeMismatch, "corpus samples disagree on frame geometry");
    if (s.clip.num_frames() != s.pose.frames())
      fail(Status::ShapeMismatch, "rgb/pose frame counts differ for sample " +
                                      std::to_string(s.id));
  }
  if (J != cfg.model.pose.groups.joint_count())
    fail(Status::InvalidConfig, "corpus joint count does not match the pose group layout");
}

}  // namespace

std::string pretrain(const TrainConfig& cfg, const std::string& resume_from) {
  TrainConfig c = cfg;
  c.phase = TrainPhase::Pretrain;
  c.validate();
  std::error_code ec;
  fs::create_directories(c.out_dir, ec);

  const std::vector<Sample> samples = read_corpus(c.train_manifest);
  check_corpus_geometry(samples, c);
  const int H = samples[0].clip.height(), W = samples[0].clip.width();
  const LatentCodec codec = make_codec(W, H, c.augment.mpm_codec_block, c.augment.mpm_codec_seed);

  // MPM masks are a pure function of the raw clip; derive once per sample.
  std::vector<MaskSequence> masks;
  const bool use_mpm = c.augment.mpm_alpha > 0.0 && c.augment.mpm_views != MpmViews::None;
  if (use_mpm) {
    masks.resize(samples.size());
    auto worker = [&](size_t tid, size_t stride) {
      for (size_t i = tid; i < samples.size(); i += stride)
        masks[i] = derive_mask(samples[i].clip, codec, c.augment.mpm_options());
    };
    const size_t nthreads = static_cast<size_t>(std::max(1, c.threads));
    std::vector<std::thread> pool;
    for (size_t t = 1; t < nthreads; ++t) pool.emplace_back(worker, t, nthreads);
    worker(0, nthreads);
    for (auto& th : pool) th.join();
  }

  PretrainRun run = resume_from.empty() ? init_pretrain_run(c) : restore_pretrain_run(c, resume_from);

  const std::string log_path = (fs::path(c.out_dir) / "pretrain_log.tsv").string();
  std::ofstream log(log_path, run.step == 0 ? std::ios::trunc : std::ios::app);
  if (!log) fail(Status::Io, "cannot open for writing: " + log_path);

  const int B = c.batch_size;
  const int nbatches = static_cast<int>(samples.size()) / B;  // last partial batch dropped
  if (nbatches < 1) fail(Status::InvalidConfig, "corpus smaller than one batch");
  const int warmup = c.loss.warmup_steps(B);

  char line[512];
  for (int epoch = run.epoch; epoch < c.epochs; ++epoch) {
    const double lr = lr_at(epoch, c);
    const std::vector<int> order =
        shuffled_order(static_cast<int>(samples.size()), mix64(c.seed, 0x51, epoch));
    for (int b = 0; b < nbatches; ++b) {
      std::vector<Views> views =
          build_views(samples, order, b * B, B, c, epoch, codec, use_mpm ? &masks : nullptr);
      const bool spm_active = c.loss.use_spm && run.step >= warmup;
      PretrainResult res = pretrain_losses(views, c.model, run.rgb, run.pose, c.loss, spm_active,
                                           true, c.threads);
      run.opt_rgb_enc.step(run.rgb.enc_q, res.grads.rgb_enc, lr, c.sgd);
      run.opt_rgb_proj.step(run.rgb.proj_q, res.grads.rgb_proj, lr, c.sgd);
      run.opt_pose_enc.step(run.pose.enc_q, res.grads.pose_enc, lr, c.sgd);
      run.opt_pose_proj.step(run.pose.proj_q, res.grads.pose_proj, lr, c.sgd);
      run.rgb.ema_step(c.loss.gamma);
      run.pose.ema_step(c.loss.gamma);
      run.rgb.bank_g.enqueue(res.keys.g_r);
      run.rgb.bank_f.enqueue(res.keys.f_r);
      run.pose.bank_g.enqueue(res.keys.g_p);
      run.pose.bank_f.enqueue(res.keys.f_p);

      std::snprintf(line, sizeof(line),
                    "%" PRId64 "\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n",
                    run.step, res.report.l_cl_R, res.report.l_cl_P, res.report.l_spm_R,
                    res.report.l_spm_P, res.report.l_r2p, res.report.l_p2r, res.report.total, lr);
      log << line;
      ++run.step;
    }
    run.epoch = epoch + 1;
    if (c.save_interval_epochs > 0 && run.epoch % c.save_interval_epochs == 0 &&
        run.epoch < c.epochs) {
      save_pretrain_checkpoint(
          (fs::path(c.out_dir) / ("checkpoint_epoch" + std::to_string(run.epoch) + ".ccl"))
              .string(),
          c, run);
    }
  }
  log.flush();
  const std::string final_path = (fs::path(c.out_dir) / "checkpoint.ccl").string();
  save_pretrain_checkpoint(final_path, c, run);
  return final_path;
}

namespace {

struct FtSample {
  Tensor rgb_in;   // [3,T,H,W] (joint mode)
  Tensor pose_in;  // [T,J,3]   (joint mode)
  Tensor g_rgb, g_pose;  // cached features (frozen mode)
  int label = 0;
};

struct FtStepOut {
  double ce_r = 0, ce_p = 0;
  GradSet g_rgb_enc, g_rgb_head, g_pose_enc, g_pose_head;
};

}  // namespace

std::string finetune(const TrainConfig& cfg, const std::string& pretrained_path) {
  TrainConfig c = cfg;
  c.phase = TrainPhase::Finetune;
  c.validate();
  std::error_code ec;
  fs::create_directories(c.out_dir, ec);

  const std::vector<Sample> samples = read_corpus(c.train_manifest);
  check_corpus_geometry(samples, c);
  int num_classes = 0;
  for (const Sample& s : samples) num_classes = std::max(num_classes, s.label + 1);

  // encoders: pretrained or random-init baseline
  ParamSet rgb_enc, pose_enc;
  if (!pretrained_path.empty()) {
    PretrainedModels m = load_models(pretrained_path);
    m.arch.check_compatible(make_descriptor(c.model, c.augment.t_model, num_classes));
    rgb_enc = std::move(m.rgb_enc);
    pose_enc = std::move(m.pose_enc);
  } else {
    Rng rgb_rng(mix64(c.seed, 0xB1));
    Rng pose_rng(mix64(c.seed, 0xB2));
    rgb_enc = init_rgb_encoder(c.model.rgb, rgb_rng);
    pose_enc = init_pose_encoder(c.model.pose, pose_rng);
  }
  Rng head_rng(mix64(c.seed, 0x4EAD));
  ClassifierConfig rgb_head_cfg{c.model.rgb.dim, num_classes};
  ClassifierConfig pose_head_cfg{c.model.pose.dim(), num_classes};
  ParamSet rgb_head = init_classifier(rgb_head_cfg, head_rng);
  ParamSet pose_head = init_classifier(pose_head_cfg, head_rng);

  const LatentCodec codec =
      make_codec(samples[0].clip.width(), samples[0].clip.height(), c.augment.mpm_codec_block,
                 c.augment.mpm_codec_seed);

  // frozen mode: deterministic views, features computed once
  std::vector<Tensor> cached_rgb, cached_pose;
  if (c.freeze_encoder) {
    cached_rgb.resize(samples.size());
    cached_pose.resize(samples.size());
    auto worker = [&](size_t tid, size_t stride) {
      for (size_t i = tid; i < samples.size(); i += stride) {
        Views v = make_eval_views(samples[i], c.augment);
        cached_rgb[i] = rgb_feature(v.rgb_q, c.model, rgb_enc);
        cached_pose[i] = pose_feature(v.pose_q, c.model, pose_enc);
      }
    };
    const size_t nthreads = static_cast<size_t>(std::max(1, c.threads));
    std::vector<std::thread> pool;
    for (size_t t = 1; t < nthreads; ++t) pool.emplace_back(worker, t, nthreads);
    worker(0, nthreads);
    for (auto& th : pool) th.join();
  }

  SgdOptimizer opt_rgb_enc(rgb_enc), opt_pose_enc(pose_enc);
  SgdOptimizer opt_rgb_head(rgb_head), opt_pose_head(pose_head);

  const std::string log_path = (fs::path(c.out_dir) / "finetune_log.tsv").string();
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) fail(Status::Io, "cannot open for writing: " + log_path);

  const int n = static_cast<int>(samples.size());
  const int B = c.batch_size;
  int64_t step = 0;
  char line[256];

  for (int epoch = 0; epoch < c.epochs; ++epoch) {
    const double lr = lr_at(epoch, c);
    const std::vector<int> order = shuffled_order(n, mix64(c.seed, 0x52, epoch));
    for (int start = 0; start < n; start += B) {  // last partial batch kept
      const int bsize = std::min(B, n - start);
      std::vector<FtStepOut> outs(static_cast<size_t>(bsize));

      auto worker = [&](int tid, int stride) {
        for (int i = tid; i < bsize; i += stride) {
          const Sample& s = samples[static_cast<size_t>(order[static_cast<size_t>(start + i)])];
          FtStepOut o;
          Graph g;
          int g_rgb_node, g_pose_node;
          ParamLeaves pl_rgb_enc, pl_pose_enc;
          if (c.freeze_encoder) {
            const size_t si = static_cast<size_t>(order[static_cast<size_t>(start + i)]);
            g_rgb_node = g.leaf(cached_rgb[si], false);
            g_pose_node = g.leaf(cached_pose[si], false);
          } else {
            Rng rng = view_rng(c.seed, epoch, s.id);
            Views v = make_views(s, c.augment, codec, rng, nullptr);
            pl_rgb_enc = register_params(g, rgb_enc, true);
            pl_pose_enc = register_params(g, pose_enc, true);
            g_rgb_node =
                rgb_encoder_forward(g, c.model.rgb, pl_rgb_enc, g.leaf(rgb_input(v.rgb_q), false));
            g_pose_node =
                pose_encoder_forward(g, c.model.pose, pl_pose_enc, g.leaf(pose_input(v.pose_q), false))
                    .embedding;
          }
          ParamLeaves pl_rgb_head = register_params(g, rgb_head, true);
          ParamLeaves pl_pose_head = register_params(g, pose_head, true);
          const int ce_r =
              g.cross_entropy(classifier_forward(g, rgb_head_cfg, pl_rgb_head, g_rgb_node), s.label);
          const int ce_p = g.cross_entropy(
              classifier_forward(g, pose_head_cfg, pl_pose_head, g_pose_node), s.label);
          o.ce_r = g.scalar(ce_r);
          o.ce_p = g.scalar(ce_p);
          g.backward(g.sum_scalars({ce_r, ce_p}, {1.0, 1.0}));
          const double scale = 1.0 / bsize;
          o.g_rgb_head = GradSet::zeros_like(rgb_head);
          o.g_pose_head = GradSet::zeros_like(pose_head);
          collect_grads(g, pl_rgb_head, o.g_rgb_head, scale);
          collect_grads(g, pl_pose_head, o.g_pose_head, scale);
          if (!c.freeze_encoder) {
            o.g_rgb_enc = GradSet::zeros_like(rgb_enc);
            o.g_pose_enc = GradSet::zeros_like(pose_enc);
            collect_grads(g, pl_rgb_enc, o.g_rgb_enc, scale);
            collect_grads(g, pl_pose_enc, o.g_pose_enc, scale);
          }
          outs[static_cast<size_t>(i)] = std::move(o);
        }
      };
      const int nthreads = std::max(1, std::min(c.threads, bsize));
      if (nthreads == 1) {
        worker(0, 1);
      } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker, t, nthreads);
        for (auto& th : pool) th.join();
      }

      double ce_r = 0, ce_p = 0;
      GradSet acc_rgb_head = GradSet::zeros_like(rgb_head);
      GradSet acc_pose_head = GradSet::zeros_like(pose_head);
      GradSet acc_rgb_enc, acc_pose_enc;
      if (!c.freeze_encoder) {
        acc_rgb_enc = GradSet::zeros_like(rgb_enc);
        acc_pose_enc = GradSet::zeros_like(pose_enc);
      }
      for (int i = 0; i < bsize; ++i) {
        ce_r += outs[static_cast<size_t>(i)].ce_r / bsize;
        ce_p += outs[static_cast<size_t>(i)].ce_p / bsize;
        acc_rgb_head.accumulate(outs[static_cast<size_t>(i)].g_rgb_head, 1.0);
        acc_pose_head.accumulate(outs[static_cast<size_t>(i)].g_pose_head, 1.0);
        if (!c.freeze_encoder) {
          acc_rgb_enc.accumulate(outs[static_cast<size_t>(i)].g_rgb_enc, 1.0);
          acc_pose_enc.accumulate(outs[static_cast<size_t>(i)].g_pose_enc, 1.0);
        }
      }
      opt_rgb_head.step(rgb_head, acc_rgb_head, lr, c.sgd);
      opt_pose_head.step(pose_head, acc_pose_head, lr, c.sgd);
      if (!c.freeze_encoder) {
        opt_rgb_enc.step(rgb_enc, acc_rgb_enc, lr, c.sgd);
        opt_pose_enc.step(pose_enc, acc_pose_enc, lr, c.sgd);
      }
      std::snprintf(line, sizeof(line), "%" PRId64 "\t%.17g\t%.17g\t%.17g\t%.17g\n", step, ce_r,
                    ce_p, ce_r + ce_p, lr);
      log << line;
      ++step;
    }
  }
  log.flush();

  Checkpoint ck;
  ck.meta["kind"] = "finetune";
  ck.meta["arch"] = arch_to_meta(make_descriptor(c.model, c.augment.t_model, num_classes));
  ck.meta["epoch"] = std::to_string(c.epochs);
  ck.meta["step"] = std::to_string(step);
  ck.meta["freeze_encoder"] = c.freeze_encoder ? "1" : "0";
  put_params(ck, "rgb.enc", rgb_enc);
  put_params(ck, "pose.enc", pose_enc);
  put_params(ck, "rgb.head", rgb_head);
  put_params(ck, "pose.head", pose_head);
  const std::string final_path = (fs::path(c.out_dir) / "checkpoint.ccl").string();
  ck.save(final_path);
  return final_path;
}

PretrainedModels load_models(const std::string& checkpoint_path) {
  Checkpoint ck = Checkpoint::load(checkpoint_path);
  PretrainedModels m;
  m.arch = arch_from_meta(ck.meta_at("arch"));
  Rng dummy(0);
  const std::string kind = ck.meta_at("kind");
  ModelConfig mc;
  mc.rgb = m.arch.rgb;
  mc.pose = m.arch.pose;
  if (kind == "pretrain") {
    m.rgb_enc = get_params(ck, "rgb.enc_q", init_rgb_encoder(mc.rgb, dummy));
    m.pose_enc = get_params(ck, "pose.enc_q", init_pose_encoder(mc.pose, dummy));
    m.has_heads = false;
  } else if (kind == "finetune") {
    m.rgb_enc = get_params(ck, "rgb.enc", init_rgb_encoder(mc.rgb, dummy));
    m.pose_enc = get_params(ck, "pose.enc", init_pose_encoder(mc.pose, dummy));
    ClassifierConfig rc{mc.rgb.dim, m.arch.num_classes}, pc{mc.pose.dim(), m.arch.num_classes};
    m.rgb_head = get_params(ck, "rgb.head", init_classifier(rc, dummy));
    m.pose_head = get_params(ck, "pose.head", init_classifier(pc, dummy));
    m.has_heads = true;
  } else {
    fail(Status::Schema, "unknown checkpoint kind: " + kind);
  }
  return m;
}

}  // namespace ccl
