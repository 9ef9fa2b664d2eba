// SPDX-License-Identifier: Apache-2.0
#include "core/encoders.hpp"

#include <cmath>
#include <sstream>

namespace ccl {

Tensor* ParamSet::find(const std::string& name) {
  for (auto& [n, t] : items)
    if (n == name) return &t;
  return nullptr;
}

const Tensor* ParamSet::find(const std::string& name) const {
  for (const auto& [n, t] : items)
    if (n == name) return &t;
  return nullptr;
}

int64_t ParamSet::total_size() const {
  int64_t n = 0;
  for (const auto& [_, t] : items) n += t.size();
  return n;
}

GradSet GradSet::zeros_like(const ParamSet& p) {
  GradSet gs;
  gs.g.reserve(p.items.size());
  for (const auto& [_, t] : p.items) gs.g.emplace_back(t.shape);
  return gs;
}

void GradSet::accumulate(const GradSet& other, double scale) {
  for (size_t i = 0; i < g.size(); ++i)
    for (int64_t j = 0; j < g[i].size(); ++j) g[i][j] += scale * other.g[i][j];
}

int ParamLeaves::operator[](const std::string& name) const {
  for (size_t i = 0; i < set->items.size(); ++i)
    if (set->items[i].first == name) return ids[i];
  fail(Status::Internal, "unknown parameter: " + name);
}

ParamLeaves register_params(Graph& g, const ParamSet& params, bool requires_grad) {
  ParamLeaves leaves;
  leaves.set = &params;
  leaves.ids.reserve(params.items.size());
  for (const auto& [_, t] : params.items) leaves.ids.push_back(g.leaf(t, requires_grad));
  return leaves;
}

void collect_grads(Graph& g, const ParamLeaves& leaves, GradSet& out, double scale) {
  for (size_t i = 0; i < leaves.ids.size(); ++i) {
    const Tensor& grad = g.grad(leaves.ids[i]);
    for (int64_t j = 0; j < grad.size(); ++j) out.g[i][j] += scale * grad[j];
  }
}

void check_shape_parity(const ParamSet& a, const ParamSet& b) {
  if (a.items.size() != b.items.size())
    fail(Status::ArchMismatch, "parameter count differs between twins");
  for (size_t i = 0; i < a.items.size(); ++i) {
    if (a.items[i].first != b.items[i].first)
      fail(Status::ArchMismatch, "parameter name differs: " + a.items[i].first + " vs " +
                                     b.items[i].first);
    if (a.items[i].second.shape != b.items[i].second.shape)
      fail(Status::ArchMismatch, "parameter shape differs for " + a.items[i].first);
  }
}

void PoseEncoderConfig::validate() const {
  groups.validate(groups.joint_count());
  if (group_dim < 1 || stream_dim < 1 || graph_blocks < 1 || transformer_blocks < 1 || heads < 1)
    fail(Status::InvalidConfig, "pose encoder sizes must be >= 1");
  if (stream_dim % heads != 0)
    fail(Status::InvalidConfig, "pose stream_dim must be divisible by heads");
  if (groups.left_hand.size() != groups.right_hand.size())
    fail(Status::InvalidConfig, "hands share parameters and must have equal joint counts");
}

namespace {

Tensor conv_init(std::vector<int> shape, Rng& rng) {
  int64_t fan_in = 1;
  for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  return Tensor::randn(std::move(shape), rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

Tensor linear_init(int out, int in, Rng& rng) {
  return Tensor::randn({out, in}, rng, std::sqrt(1.0 / static_cast<double>(in)));
}

void add_linear(ParamSet& p, const std::string& prefix, int out, int in, Rng& rng) {
  p.add(prefix + "_w", linear_init(out, in, rng));
  p.add(prefix + "_b", Tensor({out}));
}

void add_transformer_block(ParamSet& p, const std::string& prefix, int dim, Rng& rng) {
  p.add(prefix + ".ln1_g", Tensor({dim}, 1.0));
  p.add(prefix + ".ln1_b", Tensor({dim}));
  add_linear(p, prefix + ".q", dim, dim, rng);
  add_linear(p, prefix + ".k", dim, dim, rng);
  add_linear(p, prefix + ".v", dim, dim, rng);
  add_linear(p, prefix + ".o", dim, dim, rng);
  p.add(prefix + ".ln2_g", Tensor({dim}, 1.0));
  p.add(prefix + ".ln2_b", Tensor({dim}));
  add_linear(p, prefix + ".m1", 2 * dim, dim, rng);
  add_linear(p, prefix + ".m2", dim, 2 * dim, rng);
}

int transformer_block_forward(Graph& g, const ParamLeaves& p, const std::string& prefix, int x,
                              int heads) {
  int ln1 = g.layer_norm(x, p[prefix + ".ln1_g"], p[prefix + ".ln1_b"]);
  int q = g.linear(ln1, p[prefix + ".q_w"], p[prefix + ".q_b"]);
  int k = g.linear(ln1, p[prefix + ".k_w"], p[prefix + ".k_b"]);
  int v = g.linear(ln1, p[prefix + ".v_w"], p[prefix + ".v_b"]);
  int att = g.attention_apply(g.softmax_rows(g.attention_scores(q, k, heads)), v, heads);
  int h = g.add(x, g.linear(att, p[prefix + ".o_w"], p[prefix + ".o_b"]));
  int ln2 = g.layer_norm(h, p[prefix + ".ln2_g"], p[prefix + ".ln2_b"]);
  int m = g.linear(g.relu(g.linear(ln2, p[prefix + ".m1_w"], p[prefix + ".m1_b"])),
                   p[prefix + ".m2_w"], p[prefix + ".m2_b"]);
  return g.add(h, m);
}

Tensor sinusoidal_posenc(int t, int dim) {
  Tensor pe({t, dim});
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < dim; j += 2) {
      double omega = std::pow(10000.0, -static_cast<double>(j) / dim);
      pe[static_cast<int64_t>(i) * dim + j] = std::sin(i * omega);
      if (j + 1 < dim) pe[static_cast<int64_t>(i) * dim + j + 1] = std::cos(i * omega);
    }
  return pe;
}

Tensor normalized_adjacency(int n, const std::vector<std::pair<int, int>>& edges) {
  Tensor a({n, n});
  for (int i = 0; i < n; ++i) a[static_cast<int64_t>(i) * n + i] = 1.0;
  for (auto [i, j] : edges) {
    a[static_cast<int64_t>(i) * n + j] = 1.0;
    a[static_cast<int64_t>(j) * n + i] = 1.0;
  }
  std::vector<double> deg(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) deg[static_cast<size_t>(i)] += a[static_cast<int64_t>(i) * n + j];
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      a[static_cast<int64_t>(i) * n + j] /=
          std::sqrt(deg[static_cast<size_t>(i)] * deg[static_cast<size_t>(j)]);
  return a;
}

// Fixed skeletal topologies per group; hands are stars around the wrist so the
// left and right hand can share one module.
Tensor hand_adjacency(int n) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 1; i < n; ++i) edges.emplace_back(0, i);
  return normalized_adjacency(n, edges);
}

Tensor face_adjacency(int n) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i + 1 < n; ++i) edges.emplace_back(n - 1, i);  // star on the last joint
  if (n >= 4) {
    edges.emplace_back(0, 2);
    edges.emplace_back(1, 3);
  }
  return normalized_adjacency(n, edges);
}

Tensor mouth_adjacency(int n) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);  // ring
  return normalized_adjacency(n, edges);
}

Tensor body_adjacency(int n) {
  std::vector<std::pair<int, int>> edges;
  if (n == 6)
    edges = {{0, 1}, {1, 2}, {1, 3}, {2, 4}, {3, 5}, {4, 5}};
  else
    for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);  // chain fallback
  return normalized_adjacency(n, edges);
}

}  // namespace

ParamSet init_rgb_encoder(const RgbEncoderConfig& cfg, Rng& rng) {
  ParamSet p;
  auto add_conv = [&](const std::string& name, int co, int ci) {
    p.add(name + "_w", conv_init({co, ci, 3, 3, 3}, rng));
    p.add(name + "_b", Tensor({co}));
  };
  add_conv("stem", cfg.c1, 3);
  add_conv("s1a", cfg.c1, cfg.c1);
  add_conv("s1b", cfg.c1, cfg.c1);
  add_conv("t1", cfg.c2, cfg.c1);
  add_conv("s2a", cfg.c2, cfg.c2);
  add_conv("s2b", cfg.c2, cfg.c2);
  add_conv("t2", cfg.c3, cfg.c2);
  add_conv("s3a", cfg.c3, cfg.c3);
  add_conv("s3b", cfg.c3, cfg.c3);
  add_linear(p, "head", cfg.dim, cfg.c3, rng);
  return p;
}

int rgb_encoder_forward(Graph& g, const RgbEncoderConfig& cfg, const ParamLeaves& p, int input) {
  (void)cfg;
  auto res_block = [&](int x, const std::string& a, const std::string& b) {
    int h = g.relu(g.conv3d(x, p[a + "_w"], p[a + "_b"], 1, 1, 1));
    int h2 = g.conv3d(h, p[b + "_w"], p[b + "_b"], 1, 1, 1);
    return g.relu(g.add(x, h2));
  };
  int h = g.relu(g.conv3d(input, p["stem_w"], p["stem_b"], 1, 2, 2));
  h = res_block(h, "s1a", "s1b");
  h = g.relu(g.conv3d(h, p["t1_w"], p["t1_b"], 2, 2, 2));
  h = res_block(h, "s2a", "s2b");
  h = g.relu(g.conv3d(h, p["t2_w"], p["t2_b"], 2, 2, 2));
  h = res_block(h, "s3a", "s3b");
  return g.linear(g.global_mean_pool(h), p["head_w"], p["head_b"]);
}

ParamSet init_pose_encoder(const PoseEncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamSet p;
  for (const std::string& module : {"hand", "face", "mouth", "body"}) {
    int cin = 3;
    for (int b = 0; b < cfg.graph_blocks; ++b) {
      const std::string prefix = module + ".b" + std::to_string(b);
      p.add(prefix + "_w",
            Tensor::randn({cfg.group_dim, cin, 3}, rng, std::sqrt(2.0 / (3.0 * cin))));
      p.add(prefix + "_b", Tensor({cfg.group_dim}));
      cin = cfg.group_dim;
    }
  }
  for (const std::string& stream : {"man", "non"}) {
    const int in_dim = (stream == "man" ? 3 : 2) * cfg.group_dim;
    add_linear(p, stream + ".in", cfg.stream_dim, in_dim, rng);
    for (int b = 0; b < cfg.transformer_blocks; ++b)
      add_transformer_block(p, stream + ".b" + std::to_string(b), cfg.stream_dim, rng);
  }
  return p;
}

PoseForward pose_encoder_forward(Graph& g, const PoseEncoderConfig& cfg, const ParamLeaves& p,
                                 int input) {
  auto group_features = [&](const std::vector<int>& joints, const std::string& module,
                            const Tensor& adj) {
    int h = g.gather_joints(input, joints);
    for (int b = 0; b < cfg.graph_blocks; ++b) {
      const std::string prefix = module + ".b" + std::to_string(b);
      h = g.joint_mix(h, adj);
      h = g.relu(g.temporal_conv(h, p[prefix + "_w"], p[prefix + "_b"]));
    }
    return g.mean_joints(h);  // [T, group_dim]
  };

  const Tensor hand_adj = hand_adjacency(static_cast<int>(cfg.groups.left_hand.size()));
  PoseForward out;
  int v_lh = group_features(cfg.groups.left_hand, "hand", hand_adj);
  int v_rh = group_features(cfg.groups.right_hand, "hand", hand_adj);
  int v_f = group_features(cfg.groups.face, "face",
                           face_adjacency(static_cast<int>(cfg.groups.face.size())));
  int v_m = group_features(cfg.groups.mouth, "mouth",
                           mouth_adjacency(static_cast<int>(cfg.groups.mouth.size())));
  int v_b = group_features(cfg.groups.body, "body",
                           body_adjacency(static_cast<int>(cfg.groups.body.size())));
  out.group_features = {v_lh, v_rh, v_f, v_m, v_b};

  const int t_model = g.val(input).dim(0);
  const Tensor pe = sinusoidal_posenc(t_model, cfg.stream_dim);

  auto stream_head = [&](const std::vector<int>& parts, const std::string& stream) {
    int x = g.concat_cols(parts);
    x = g.linear(x, p[stream + ".in_w"], p[stream + ".in_b"]);
    x = g.add_const(x, pe);
    for (int b = 0; b < cfg.transformer_blocks; ++b)
      x = transformer_block_forward(g, p, stream + ".b" + std::to_string(b), x, cfg.heads);
    return g.mean_time(x);
  };

  int man = stream_head({v_lh, v_rh, v_b}, "man");
  int non = stream_head({v_f, v_m}, "non");
  out.embedding = g.concat_vec({man, non});
  return out;
}

ParamSet init_projection(const ProjectionConfig& cfg, Rng& rng) {
  ParamSet p;
  add_linear(p, "p1", cfg.hidden, cfg.in_dim, rng);
  add_linear(p, "p2", cfg.out_dim, cfg.hidden, rng);
  return p;
}

int projection_forward(Graph& g, const ProjectionConfig& cfg, const ParamLeaves& p, int input) {
  (void)cfg;
  int h = g.relu(g.linear(input, p["p1_w"], p["p1_b"]));
  return g.l2_normalize(g.linear(h, p["p2_w"], p["p2_b"]));
}

ParamSet init_classifier(const ClassifierConfig& cfg, Rng& rng) {
  ParamSet p;
  add_linear(p, "fc", cfg.num_classes, cfg.in_dim, rng);
  return p;
}

int classifier_forward(Graph& g, const ClassifierConfig& cfg, const ParamLeaves& p, int input) {
  (void)cfg;
  return g.linear(input, p["fc_w"], p["fc_b"]);
}

Tensor rgb_input(const RgbClip& view) {
  const int T = view.num_frames(), H = view.height(), W = view.width();
  Tensor x({3, T, H, W});
  for (int t = 0; t < T; ++t)
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx) {
        const float* px = &view.frames[((static_cast<int64_t>(t) * H + y) * W + xx) * 3];
        for (int c = 0; c < 3; ++c)
          x[((static_cast<int64_t>(c) * T + t) * H + y) * W + xx] = px[c];
      }
  return x;
}

Tensor pose_input(const PoseSequence& view) {
  const int T = view.frames(), J = view.num_joints();
  Tensor x({T, J, 3});
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < J; ++j) {
      const float* p = &view.joints[(static_cast<int64_t>(t) * J + j) * 3];
      const double conf = p[2];
      x[(static_cast<int64_t>(t) * J + j) * 3] = p[0] * conf;
      x[(static_cast<int64_t>(t) * J + j) * 3 + 1] = p[1] * conf;
      x[(static_cast<int64_t>(t) * J + j) * 3 + 2] = conf;
    }
  return x;
}

namespace {

std::string groups_to_text(const PoseGroups& g) {
  std::ostringstream ss;
  auto emit = [&](const char* tag, const std::vector<int>& v) {
    ss << tag << ':';
    for (size_t i = 0; i < v.size(); ++i) ss << (i ? "," : "") << v[i];
    ss << ';';
  };
  emit("lh", g.left_hand);
  emit("rh", g.right_hand);
  emit("f", g.face);
  emit("m", g.mouth);
  emit("b", g.body);
  return ss.str();
}

PoseGroups groups_from_text(const std::string& text) {
  PoseGroups g;
  std::istringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ';')) {
    if (part.empty()) continue;
    auto colon = part.find(':');
    if (colon == std::string::npos) fail(Status::Schema, "bad pose group text");
    std::string tag = part.substr(0, colon);
    std::vector<int> idx;
    std::istringstream nums(part.substr(colon + 1));
    std::string n;
    while (std::getline(nums, n, ',')) idx.push_back(std::stoi(n));
    if (tag == "lh")
      g.left_hand = idx;
    else if (tag == "rh")
      g.right_hand = idx;
    else if (tag == "f")
      g.face = idx;
    else if (tag == "m")
      g.mouth = idx;
    else if (tag == "b")
      g.body = idx;
    else
      fail(Status::Schema, "unknown pose group tag: " + tag);
  }
  return g;
}

}  // namespace

std::string ArchDescriptor::to_text() const {
  std::ostringstream ss;
  ss << "rgb_c1=" << rgb.c1 << "\nrgb_c2=" << rgb.c2 << "\nrgb_c3=" << rgb.c3
     << "\nrgb_dim=" << rgb.dim << "\npose_group_dim=" << pose.group_dim
     << "\npose_graph_blocks=" << pose.graph_blocks << "\npose_stream_dim=" << pose.stream_dim
     << "\npose_transformer_blocks=" << pose.transformer_blocks << "\npose_heads=" << pose.heads
     << "\npose_groups=" << groups_to_text(pose.groups) << "\nproj_hidden=" << proj.hidden
     << "\nproj_out=" << proj.out_dim << "\nnum_classes=" << num_classes
     << "\nt_model=" << t_model << "\n";
  return ss.str();
}

ArchDescriptor ArchDescriptor::from_text(const std::string& text) {
  ArchDescriptor d;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) fail(Status::Schema, "bad descriptor line: " + line);
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "rgb_c1")
      d.rgb.c1 = std::stoi(value);
    else if (key == "rgb_c2")
      d.rgb.c2 = std::stoi(value);
    else if (key == "rgb_c3")
      d.rgb.c3 = std::stoi(value);
    else if (key == "rgb_dim")
      d.rgb.dim = std::stoi(value);
    else if (key == "pose_group_dim")
      d.pose.group_dim = std::stoi(value);
    else if (key == "pose_graph_blocks")
      d.pose.graph_blocks = std::stoi(value);
    else if (key == "pose_stream_dim")
      d.pose.stream_dim = std::stoi(value);
    else if (key == "pose_transformer_blocks")
      d.pose.transformer_blocks = std::stoi(value);
    else if (key == "pose_heads")
      d.pose.heads = std::stoi(value);
    else if (key == "pose_groups")
      d.pose.groups = groups_from_text(value);
    else if (key == "proj_hidden")
      d.proj.hidden = std::stoi(value);
    else if (key == "proj_out")
      d.proj.out_dim = std::stoi(value);
    else if (key == "num_classes")
      d.num_classes = std::stoi(value);
    else if (key == "t_model")
      d.t_model = std::stoi(value);
    else
      fail(Status::Schema, "unknown descriptor key: " + key);
  }
  return d;
}

void ArchDescriptor::check_compatible(const ArchDescriptor& other) const {
  auto check = [](int a, int b, const char* field) {
    if (a != b)
      fail(Status::ArchMismatch, std::string("architecture mismatch in field '") + field +
                                     "': " + std::to_string(a) + " vs " + std::to_string(b));
  };
  check(rgb.c1, other.rgb.c1, "rgb_c1");
  check(rgb.c2, other.rgb.c2, "rgb_c2");
  check(rgb.c3, other.rgb.c3, "rgb_c3");
  check(rgb.dim, other.rgb.dim, "rgb_dim");
  check(pose.group_dim, other.pose.group_dim, "pose_group_dim");
  check(pose.graph_blocks, other.pose.graph_blocks, "pose_graph_blocks");
  check(pose.stream_dim, other.pose.stream_dim, "pose_stream_dim");
  check(pose.transformer_blocks, other.pose.transformer_blocks, "pose_transformer_blocks");
  check(pose.heads, other.pose.heads, "pose_heads");
  if (groups_to_text(pose.groups) != groups_to_text(other.pose.groups))
    fail(Status::ArchMismatch, "architecture mismatch in field 'pose_groups'");
  check(proj.hidden, other.proj.hidden, "proj_hidden");
  check(proj.out_dim, other.proj.out_dim, "proj_out");
  check(t_model, other.t_model, "t_model");
}

}  // namespace ccl
