// SPDX-License-Identifier: Apache-2.0
#ifndef CCL_CORE_GRAPH_HPP
#define CCL_CORE_GRAPH_HPP

#include <functional>
#include <vector>

#include "core/tensor.hpp"

namespace ccl {

// Tape-based reverse-mode autodiff over Tensor. One Graph per forward pass;
// node creation order is topological, so backward is a reverse sweep. Nodes
// whose inputs all have requires_grad=false propagate nothing, which is how
// the key pathway stays gradient-free by construction.
class Graph {
 public:
  int leaf(Tensor value, bool requires_grad);

  const Tensor& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

  // Valid after backward(); zero tensor if the node was never reached.
  const Tensor& grad(int id);

  void backward(int root, double seed = 1.0);

  // elementwise / shape ops
  int add(int a, int b);
  int relu(int x);
  int scale(int x, double s);
  int add_const(int x, const Tensor& c);
  int concat_cols(const std::vector<int>& xs);  // [T,Ci] -> [T, sum Ci]
  int concat_vec(const std::vector<int>& xs);   // [Ci] -> [sum Ci]

  // dense layers; x may be [n] or [T,n]
  int linear(int x, int w, int b);  // w:[m,n], b:[m]

  // video stack; x:[Cin,T,H,W], w:[Cout,Cin,3,3,3], b:[Cout], padding 1
  int conv3d(int x, int w, int b, int st, int sh, int sw);
  int global_mean_pool(int x);  // [C,T,H,W] -> [C]

  // pose stack
  int gather_joints(int x, std::vector<int> indices);  // [T,J,C] -> [T,|idx|,C]
  int joint_mix(int x, Tensor adjacency);  // x:[T,J,C], adj:[J,J] constant
  int temporal_conv(int x, int w, int b);  // x:[T,J,C], w:[C2,C,3], pad 1
  int mean_joints(int x);                  // [T,J,C] -> [T,C]
  int mean_time(int x);                    // [T,C] -> [C]

  // attention
  int layer_norm(int x, int gain, int bias);       // rows of [T,C]
  int attention_scores(int q, int k, int heads);   // [T,D]x[T,D] -> [H,T,T], scaled by 1/sqrt(dh)
  int softmax_rows(int x);                         // softmax over last dim
  int attention_apply(int p, int v, int heads);    // [H,T,T],[T,D] -> [T,D]

  // embedding / loss ops
  int l2_normalize(int x);                 // [n]
  int dot(int a, int b);                   // [n],[n] -> scalar
  int matvec_const(Tensor m, int x);       // m:[N,d] constant, x:[d] -> [N]
  int sum_scalars(const std::vector<int>& xs, const std::vector<double>& weights);
  int infonce(int pos_score, int neg_scores, double tau);  // scalar
  int bce_logits_mean(int scores, Tensor targets);         // scalar
  int cross_entropy(int logits, int label);                // scalar

  double scalar(int id) const { return val(id)[0]; }

 private:
  int conv3d_unit(int x, int w, int b);  // stride-1 fast path

  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_live = false;
    std::function<void(Graph&, int)> back;
  };

  int push(Tensor value, bool requires_grad, std::function<void(Graph&, int)> back);
  Tensor* grad_sink(int id);  // allocate-on-demand; nullptr when grad not required
  const Tensor& grad_in(int id) const { return nodes_[static_cast<size_t>(id)].grad; }

  std::vector<Node> nodes_;
  Tensor zero_;
};

}  // namespace ccl

#endif
