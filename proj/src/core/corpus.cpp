// SPDX-License-Identifier: Apache-2.0
#include "core/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/array_io.hpp"

namespace fs = std::filesystem;

namespace ccl {

PoseGroups PoseGroups::toy25() {
  PoseGroups g;
  g.left_hand = {0, 1, 2, 3, 4};
  g.right_hand = {5, 6, 7, 8, 9};
  g.face = {10, 11, 12, 13, 14};
  g.mouth = {15, 16, 17, 18};
  g.body = {19, 20, 21, 22, 23, 24};
  return g;
}

int PoseGroups::joint_count() const {
  int n = 0;
  for (const auto* g : {&left_hand, &right_hand, &face, &mouth, &body})
    for (int j : *g) n = std::max(n, j + 1);
  return n;
}

void PoseGroups::validate(int num_joints) const {
  for (const auto* g : {&left_hand, &right_hand, &face, &mouth, &body}) {
    if (g->empty()) fail(Status::InvalidConfig, "pose group must be non-empty");
    for (int j : *g)
      if (j < 0 || j >= num_joints)
        fail(Status::InvalidConfig, "pose group index " + std::to_string(j) + " out of range");
  }
}

void PoseSequence::validate() const {
  if (joints.shape.size() != 3 || joints.dim(2) != 3)
    fail(Status::ShapeMismatch, "pose sequence must have shape (T, J, 3)");
  for (int64_t i = 0; i < joints.size(); ++i)
    if (!std::isfinite(joints[i])) fail(Status::InvalidArgument, "pose contains non-finite value");
  const int T = frames(), J = num_joints();
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < J; ++j) {
      float c = joints[(static_cast<int64_t>(t) * J + j) * 3 + 2];
      if (c < 0.0f || c > 1.0f) fail(Status::InvalidArgument, "pose confidence outside [0,1]");
    }
}

void RgbClip::validate() const {
  if (frames.shape.size() != 4 || frames.dim(3) != 3)
    fail(Status::ShapeMismatch, "rgb clip must have shape (T, H, W, 3)");
  for (int64_t i = 0; i < frames.size(); ++i) {
    float x = frames[i];
    if (!std::isfinite(x) || x < 0.0f || x > 1.0f)
      fail(Status::InvalidArgument, "rgb value outside [0,1]");
  }
}

void CorpusSpec::validate() const {
  if (num_classes < 1) fail(Status::InvalidConfig, "corpus_num_classes must be >= 1");
  if (samples_per_class < 1) fail(Status::InvalidConfig, "corpus_samples_per_class must be >= 1");
  if (t_raw < 2) fail(Status::InvalidConfig, "corpus_t_raw must be >= 2");
  if (height < 8 || width < 8) fail(Status::InvalidConfig, "corpus frame size must be >= 8");
  if (joints != 25) fail(Status::InvalidConfig, "generator defines trajectories for joints=25 only");
  if (num_signers < 1) fail(Status::InvalidConfig, "corpus_num_signers must be >= 1");
}

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

// Each class is a distinct Lissajous family for the hands plus its own
// face/mouth oscillation rates. Pure function of the label so that corpora
// generated from different seeds share the same class structure.
struct ClassFamily {
  double ax, bx;      // hand path frequency multipliers
  double xy_phase;    // phase between the x and y oscillators
  double dir;         // right-hand rotation direction
  double face_freq;
  double mouth_freq;
  double finger_freq;
};

ClassFamily class_family(int label) {
  static const int pairs[][2] = {{1, 1}, {1, 2}, {2, 1}, {2, 3}, {3, 2},
                                 {1, 3}, {3, 1}, {3, 4}, {4, 3}, {2, 5}};
  const int npairs = static_cast<int>(sizeof(pairs) / sizeof(pairs[0]));
  ClassFamily f;
  f.ax = pairs[label % npairs][0];
  f.bx = pairs[label % npairs][1];
  f.xy_phase = (label % 4) * (kTau / 8.0);
  f.dir = (label % 2 == 0) ? 1.0 : -1.0;
  f.face_freq = 1.0 + (label % 3);
  f.mouth_freq = 1.5 + (label % 4);
  f.finger_freq = 2.0 + (label % 3);
  return f;
}

void hsv_to_rgb(double h, double s, double v, float out[3]) {
  h = h - std::floor(h);
  double r = std::fabs(h * 6.0 - 3.0) - 1.0;
  double g = 2.0 - std::fabs(h * 6.0 - 2.0);
  double b = 2.0 - std::fabs(h * 6.0 - 4.0);
  auto clamp01 = [](double x) { return std::min(1.0, std::max(0.0, x)); };
  out[0] = static_cast<float>(v * (1.0 - s + s * clamp01(r)));
  out[1] = static_cast<float>(v * (1.0 - s + s * clamp01(g)));
  out[2] = static_cast<float>(v * (1.0 - s + s * clamp01(b)));
}

struct Pt {
  double x, y;
};

// Skeleton joint positions for one frame, before signer/sample transforms.
void base_pose(const ClassFamily& f, double theta, double tfrac, double phase, Pt p[25]) {
  // hands: wrist + 4 fingertips
  const double amp = 0.13;
  Pt wl{0.34 + amp * std::cos(f.ax * theta), 0.52 + amp * std::sin(f.bx * theta + f.xy_phase)};
  Pt wr{0.66 + amp * std::cos(f.ax * f.dir * theta + kTau / 2.0),
        0.52 + amp * std::sin(f.bx * f.dir * theta + f.xy_phase)};
  p[0] = wl;
  p[5] = wr;
  for (int k = 0; k < 4; ++k) {
    double wig = 0.35 * std::sin(f.finger_freq * theta + k);
    double a = kTau * (k + 0.5) / 4.0 + wig;
    p[1 + k] = {wl.x + 0.045 * std::cos(a), wl.y + 0.045 * std::sin(a)};
    p[6 + k] = {wr.x + 0.045 * std::cos(a + kTau / 2.0), wr.y + 0.045 * std::sin(a + kTau / 2.0)};
  }
  // face: eyes, brows, nose around the head
  double bob = 0.008 * std::sin(kTau * f.face_freq * tfrac + phase);
  p[10] = {0.46, 0.18 + bob};
  p[11] = {0.54, 0.18 + bob};
  p[12] = {0.455, 0.15 + bob};
  p[13] = {0.545, 0.15 + bob};
  p[14] = {0.50, 0.22 + 0.5 * bob};
  // mouth: corners plus an opening/closing vertical pair
  double open = 0.008 + 0.010 * (0.5 + 0.5 * std::sin(kTau * f.mouth_freq * tfrac + phase));
  p[15] = {0.465, 0.27};
  p[16] = {0.535, 0.27};
  p[17] = {0.50, 0.27 - open};
  p[18] = {0.50, 0.27 + open};
  // body: head, neck, shoulders, hips
  p[19] = {0.50, 0.20};
  p[20] = {0.50, 0.33};
  p[21] = {0.38, 0.38};
  p[22] = {0.62, 0.38};
  p[23] = {0.43, 0.72};
  p[24] = {0.57, 0.72};
}

void draw_segment(FloatArray& frame, Pt a, Pt b, double radius, const float rgb[3]) {
  double len = std::hypot(b.x - a.x, b.y - a.y);
  int steps = std::max(2, static_cast<int>(len / std::max(radius * 0.5, 0.5)) + 1);
  for (int i = 0; i <= steps; ++i) {
    double u = static_cast<double>(i) / steps;
    draw_disk(frame, a.x + u * (b.x - a.x), a.y + u * (b.y - a.y), radius, rgb);
  }
}

}  // namespace

SignerStyle signer_style(uint64_t seed, int signer, int num_signers) {
  SignerStyle st;
  Rng rng(mix64(seed, 0xB6, static_cast<uint64_t>(signer)));
  // hues evenly spaced so backgrounds stay distinct for any signer count
  double hue = (signer + 0.35 + 0.3 * rng.uniform()) / std::max(1, num_signers);
  hsv_to_rgb(hue, 0.55, 0.18 + 0.14 * rng.uniform(), st.background);
  for (int c = 0; c < 3; ++c) st.tint[c] = static_cast<float>(0.82 + 0.18 * rng.uniform());
  st.body_scale = 0.78 + 0.42 * rng.uniform();
  return st;
}

void draw_disk(FloatArray& frame, double cx, double cy, double radius, const float rgb[3]) {
  const int H = frame.dim(0), W = frame.dim(1);
  int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  int y1 = std::min(H - 1, static_cast<int>(std::ceil(cy + radius)));
  int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  int x1 = std::min(W - 1, static_cast<int>(std::ceil(cx + radius)));
  const double r2 = radius * radius;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= r2) {
        float* px = &frame[(static_cast<int64_t>(y) * W + x) * 3];
        px[0] = rgb[0];
        px[1] = rgb[1];
        px[2] = rgb[2];
      }
    }
}

std::vector<Sample> generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  const int total = spec.num_classes * spec.samples_per_class;
  const int T = spec.t_raw, H = spec.height, W = spec.width, J = spec.joints;
  const double render_scale = std::min(H, W) / 32.0;

  std::vector<Sample> samples;
  samples.reserve(static_cast<size_t>(total));

  for (int idx = 0; idx < total; ++idx) {
    Sample s;
    s.id = idx;
    s.label = idx / spec.samples_per_class;
    s.signer = idx % spec.num_signers;  // round-robin: every signer appears
    const SignerStyle style = signer_style(spec.seed, s.signer, spec.num_signers);
    const ClassFamily fam = class_family(s.label);

    Rng rng(mix64(spec.seed, 0x5A, static_cast<uint64_t>(idx)));
    const double phase = rng.uniform(0.0, kTau);
    const double cycles = 1.5 * rng.uniform(0.9, 1.1);
    const double rot = rng.uniform(-0.35, 0.35);
    const double jscale = rng.uniform(0.9, 1.1);
    const double offx = rng.uniform(-0.05, 0.05);
    const double offy = rng.uniform(-0.05, 0.05);
    const double cr = std::cos(rot), sr = std::sin(rot);

    s.pose.joints = FloatArray({T, J, 3});
    s.clip.frames = FloatArray({T, H, W, 3});

    std::vector<Pt> pix(static_cast<size_t>(J));
    for (int t = 0; t < T; ++t) {
      const double tfrac = static_cast<double>(t) / T;
      const double theta = kTau * cycles * tfrac + phase;
      Pt p[25];
      base_pose(fam, theta, tfrac, phase, p);

      for (int j = 0; j < J; ++j) {
        // signer body scale, then per-sample rotation/scale/offset, all about frame center
        double x = 0.5 + (p[j].x - 0.5) * style.body_scale;
        double y = 0.5 + (p[j].y - 0.5) * style.body_scale;
        double rx = 0.5 + ((x - 0.5) * cr - (y - 0.5) * sr) * jscale + offx;
        double ry = 0.5 + ((x - 0.5) * sr + (y - 0.5) * cr) * jscale + offy;
        double conf = 1.0;
        if (rng.bernoulli(0.05)) {
          conf = rng.uniform(0.3, 0.9);
          rx += rng.uniform(-0.02, 0.02);
          ry += rng.uniform(-0.02, 0.02);
        }
        rx = std::clamp(rx, 0.03, 0.97);
        ry = std::clamp(ry, 0.03, 0.97);
        float* out = &s.pose.joints[(static_cast<int64_t>(t) * J + j) * 3];
        out[0] = static_cast<float>(rx);
        out[1] = static_cast<float>(ry);
        out[2] = static_cast<float>(conf);
        pix[static_cast<size_t>(j)] = {rx * (W - 1), ry * (H - 1)};
      }

      // render this frame from the same joint positions
      FloatArray frame({H, W, 3});
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          float* px = &frame[(static_cast<int64_t>(y) * W + x) * 3];
          px[0] = style.background[0];
          px[1] = style.background[1];
          px[2] = style.background[2];
        }
      float limb[3], body[3], facec[3], mouth[3], hand[3];
      for (int c = 0; c < 3; ++c) {
        limb[c] = style.tint[c] * 0.55f;
        body[c] = style.tint[c] * 0.80f;
        facec[c] = style.tint[c] * 0.95f;
        hand[c] = style.tint[c];
      }
      mouth[0] = style.tint[0] * 0.95f;
      mouth[1] = style.tint[1] * 0.50f;
      mouth[2] = style.tint[2] * 0.50f;

      const double rs = render_scale * style.body_scale;
      const int limb_pairs[][2] = {{19, 20}, {20, 21}, {20, 22}, {21, 23}, {22, 24}, {23, 24}};
      for (auto& lp : limb_pairs)
        draw_segment(frame, pix[static_cast<size_t>(lp[0])], pix[static_cast<size_t>(lp[1])],
                     1.1 * rs, limb);
      for (int j = 19; j < 25; ++j) draw_disk(frame, pix[j].x, pix[j].y, 1.7 * rs, body);
      for (int j = 10; j < 15; ++j) draw_disk(frame, pix[j].x, pix[j].y, 1.0 * rs, facec);
      for (int j = 15; j < 19; ++j) draw_disk(frame, pix[j].x, pix[j].y, 0.9 * rs, mouth);
      draw_disk(frame, pix[0].x, pix[0].y, 1.6 * rs, hand);
      draw_disk(frame, pix[5].x, pix[5].y, 1.6 * rs, hand);
      for (int j : {1, 2, 3, 4, 6, 7, 8, 9}) draw_disk(frame, pix[j].x, pix[j].y, 1.1 * rs, hand);

      std::copy(frame.v.begin(), frame.v.end(),
                s.clip.frames.v.begin() + static_cast<int64_t>(t) * H * W * 3);
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

std::string write_corpus(const std::vector<Sample>& samples, const std::string& dir_path) {
  std::error_code ec;
  fs::create_directories(dir_path, ec);
  if (ec) fail(Status::Io, "cannot create directory: " + dir_path);

  const std::string manifest_path = (fs::path(dir_path) / "manifest.tsv").string();
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) fail(Status::Io, "cannot open for writing: " + manifest_path);
  out << "id\tlabel\tsigner\trgb_file\tpose_file\n";

  char rgb_name[32], pose_name[32];
  for (const Sample& s : samples) {
    std::snprintf(rgb_name, sizeof(rgb_name), "rgb_%06lld.bin", static_cast<long long>(s.id));
    std::snprintf(pose_name, sizeof(pose_name), "pose_%06lld.bin", static_cast<long long>(s.id));
    write_array_file_f32((fs::path(dir_path) / rgb_name).string(), s.clip.frames);
    write_array_file_f32((fs::path(dir_path) / pose_name).string(), s.pose.joints);
    out << s.id << '\t' << s.label << '\t' << s.signer << '\t' << rgb_name << '\t' << pose_name
        << '\n';
  }
  if (!out) fail(Status::Io, "write failed: " + manifest_path);
  return manifest_path;
}

std::vector<Sample> read_corpus(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) fail(Status::MissingFile, "missing file: " + manifest_path);
  const fs::path dir = fs::path(manifest_path).parent_path();

  std::string line;
  if (!std::getline(in, line) || line != "id\tlabel\tsigner\trgb_file\tpose_file")
    fail(Status::Schema, "bad manifest header in " + manifest_path);

  std::vector<Sample> samples;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id_s, label_s, signer_s, rgb_file, pose_file;
    if (!std::getline(ss, id_s, '\t') || !std::getline(ss, label_s, '\t') ||
        !std::getline(ss, signer_s, '\t') || !std::getline(ss, rgb_file, '\t') ||
        !std::getline(ss, pose_file))
      fail(Status::Schema,
           "bad manifest record at line " + std::to_string(lineno) + " in " + manifest_path);

    Sample s;
    try {
      s.id = std::stoll(id_s);
      s.label = std::stoi(label_s);
      s.signer = std::stoi(signer_s);
    } catch (const std::exception&) {
      fail(Status::Schema, "non-numeric manifest field at line " + std::to_string(lineno));
    }
    if (s.label < 0 || s.signer < 0)
      fail(Status::Schema, "negative label or signer at line " + std::to_string(lineno));

    const std::string rgb_path = (dir / rgb_file).string();
    const std::string pose_path = (dir / pose_file).string();
    s.clip.frames = read_array_file_f32(rgb_path);
    s.pose.joints = read_array_file_f32(pose_path);
    if (s.clip.frames.shape.size() != 4 || s.clip.frames.dim(3) != 3)
      fail(Status::ShapeMismatch, "shape mismatch: expected (T,H,W,3) in " + rgb_path);
    if (s.pose.joints.shape.size() != 3 || s.pose.joints.dim(2) != 3)
      fail(Status::ShapeMismatch, "shape mismatch: expected (T,J,3) in " + pose_path);
    if (s.clip.num_frames() != s.pose.frames())
      fail(Status::ShapeMismatch,
           "shape mismatch: rgb and pose frame counts differ for sample id " + id_s);
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace ccl
