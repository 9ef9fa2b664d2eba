// SPDX-License-Identifier: Apache-2.0
#include "core/graph.hpp"

#include <algorithm>
#include <cmath>

namespace ccl {

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

int Graph::push(Tensor value, bool requires_grad, std::function<void(Graph&, int)> back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::leaf(Tensor value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

Tensor* Graph::grad_sink(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.requires_grad) return nullptr;
  if (!n.grad_live) {
    n.grad = Tensor(n.value.shape);
    n.grad_live = true;
  }
  return &n.grad;
}

const Tensor& Graph::grad(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad_live) return n.grad;
  if (zero_.shape != n.value.shape) zero_ = Tensor(n.value.shape);
  return zero_;
}

void Graph::backward(int root, double seed) {
  Node& r = nodes_[static_cast<size_t>(root)];
  if (r.value.size() != 1) fail(Status::InvalidArgument, "backward root must be scalar");
  if (!r.requires_grad) return;
  Tensor* g = grad_sink(root);
  (*g)[0] += seed;
  for (int id = root; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad_live && n.back) n.back(*this, id);
  }
}

int Graph::add(int a, int b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (!av.same_shape(bv)) fail(Status::ShapeMismatch, "add: operand shapes differ");
  Tensor out = av;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  bool rg = needs_grad(a) || needs_grad(b);
  return push(std::move(out), rg, [a, b](Graph& g, int self) {
    const Tensor& go = g.grad_in(self);
    if (Tensor* ga = g.grad_sink(a))
      for (int64_t i = 0; i < go.size(); ++i) (*ga)[i] += go[i];
    if (Tensor* gb = g.grad_sink(b))
      for (int64_t i = 0; i < go.size(); ++i) (*gb)[i] += go[i];
  });
}

int Graph::relu(int x) {
  Tensor out = val(x);
  for (auto& v : out.v) v = v > 0.0 ? v : 0.0;
  return push(std::move(out), needs_grad(x), [x](Graph& g, int self) {
    Tensor* gx = g.grad_sink(x);
    if (!gx) return;
    const Tensor& go = g.grad_in(self);
    const Tensor& xv = g.val(x);
    for (int64_t i = 0; i < go.size(); ++i)
      if (xv[i] > 0.0) (*gx)[i] += go[i];
  });
}

int Graph::scale(int x, double s) {
  Tensor out = val(x);
  for (auto& v : out.v) v *= s;
  return push(std::move(out), needs_grad(x), [x, s](Graph& g, int self) {
    Tensor* gx = g.grad_sink(x);
    if (!gx) return;
    const Tensor& go = g.grad_in(self);
    for (int64_t i = 0; i < go.size(); ++i) (*gx)[i] += s * go[i];
  });
}

int Graph::add_const(int x, const Tensor& c) {
  const Tensor& xv = val(x);
  if (!xv.same_shape(c)) fail(Status::ShapeMismatch, "add_const: shapes differ");
  Tensor out = xv;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += c[i];
  return push(std::move(out), needs_grad(x), [x](Graph& g, int self) {
    Tensor* gx = g.grad_sink(x);
    if (!gx) return;
    const Tensor& go = g.grad_in(self);
    for (int64_t i = 0; i < go.size(); ++i) (*gx)[i] += go[i];
  });
}

int Graph::concat_cols(const std::vector<int>& xs) {
  const int T = val(xs[0]).dim(0);
  int total = 0;
  bool rg = false;
  for (int x : xs) {
    if (val(x).rank() != 2 || val(x).dim(0) != T)
      fail(Status::ShapeMismatch, "concat_cols: rows differ");
    total += val(x).dim(1);
    rg = rg || needs_grad(x);
  }
  Tensor out({T, total});
  int off = 0;
  for (int x : xs) {
    const Tensor& xv = val(x);
    const int c = xv.dim(1);
    for (int t = 0; t < T; ++t)
      std::copy_n(xv.data() + static_cast<int64_t>(t) * c, c,
                  out.data() + static_cast<int64_t>(t) * total + off);
    off += c;
  }
  std::vector<int> parents = xs;
  return push(std::move(out), rg, [parents, T, total](Graph& g, int self) {
    const Tensor& go = g.grad_in(self);
    int off = 0;
    for (int x : parents) {
      const int c = g.val(x).dim(1);
      if (Tensor* gx = g.grad_sink(x))
        for (int t = 0; t < T; ++t)
          for (int i = 0; i < c; ++i)
            (*gx)[static_cast<int64_t>(t) * c + i] += go[static_cast<int64_t>(t) * total + off + i];
      off += c;
    }
  });
}

int Graph::concat_vec(const std::vector<int>& xs) {
  int total = 0;
  bool rg = false;
  for (int x : xs) {
    total += static_cast<int>(val(x).size());
    rg = rg || needs_grad(x);
  }
  Tensor out({total});
  int off = 0;
  for (int x : xs) {
    const Tensor& xv = val(x);
    std::copy_n(xv.data(), xv.size(), out.data() + off);
    off += static_cast<int>(xv.size());
  }
  std::vector<int> parents = xs;
  return push(std::move(out), rg, [parents](Graph& g, int self) {
    const Tensor& go = g.grad_in(self);
    int off = 0;
    for (int x : parents) {
      const int n = static_cast<int>(g.val(x).size());
      if (Tensor* gx = g.grad_sink(x))
        for (int i = 0; i < n; ++i) (*gx)[i] += go[off + i];
      off += n;
    }
  });
}

int Graph::linear(int x, int w, int b) {
  const Tensor& xv = val(x);
  const Tensor& wv = val(w);
  const Tensor& bv = val(b);
  const int m = wv.dim(0), n = wv.dim(1);
  const bool rows = xv.rank() == 2;
  const int T = rows ? xv.dim(0) : 1;
  if ((rows ? xv.dim(1) : static_cast<int>(xv.size())) != n || bv.size() != m)
    fail(Status::ShapeMismatch, "linear: dimension mismatch");

  Tensor out(rows ? std::vector<int>{T, m} : std::vector<int>{m});
  for (int t = 0; t < T; ++t) {
    const double* xr = xv.data() + static_cast<int64_t>(t) * n;
    double* or_ = out.data() + static_cast<int64_t>(t) * m;
    for (int i = 0; i < m; ++i) {
      const double* wr = wv.data() + static_cast<int64_t>(i) * n;
      double acc = bv[i];
      for (int j = 0; j < n; ++j) acc += wr[j] * xr[j];
      or_[i] = acc;
    }
  }
  bool rg = needs_grad(x) || needs_grad(w) || needs_grad(b);
  return push(std::move(out), rg, [x, w, b, T, m, n](Graph& g, int self) {
    const Tensor& go = g.grad_in(self);
    const Tensor& xv = g.val(x);
    const Tensor& wv = g.val(w);
    Tensor* gx = g.grad_sink(x);
    Tensor* gw = g.grad_sink(w);
    Tensor* gb = g.grad_sink(b);
    for (int t = 0; t < T; ++t) {
      const double* gor = go.data() + static_cast<int64_t>(t) * m;
      const double* xr = xv.data() + static_cast<int64_t>(t) * n;
      if (gx) {
        double* gxr = gx->data() + static_cast<int64_t>(t) * n;
        for (int i = 0; i < m; ++i) {
          const double gi = gor[i];
          const double* wr = wv.data() + static_cast<int64_t>(i) * n;
          for (int j = 0; j < n; ++j) gxr[j] += gi * wr[j];
        }
      }
      if (gw) {
        for (int i = 0; i < m; ++i) {
          const double gi = gor[i];
          double* gwr = gw->data() + static_cast<int64_t>(i) * n;
          for (int j = 0; j < n; ++j) gwr[j] += gi * xr[j];
        }
      }
      if (gb)
        for (int i = 0; i < m; ++i) (*gb)[i] += gor[i];
    }
  });
}

namespace {

// Scratch geometry for the unit-stride conv fast path: frames padded by one on
// every side plus one slack plane at each end, so each kernel tap becomes a
// single fused multiply-add over the whole padded volume with no bounds checks
// (junk accumulates only in padding cells, which are never copied out).
struct PadGeom {
  int T, H, W, Wp, Np;
  int64_t plane_count, total;

  explicit PadGeom(int t, int h, int w)
      : T(t), H(h), W(w), Wp(w + 2), Np((h + 2) * (w + 2)),
        plane_count(t + 4), total(plane_count * Np) {}

  int64_t idx(int t, int h, int w) const {
    return (static_cast<int64_t>(t) + 2) * Np + (static_cast<int64_t>(h) + 1) * Wp + (w + 1);
  }
  int64_t lo() const { return 2 * static_cast<int64_t>(Np); }
  int64_t hi() const { return (static_cast<int64_t>(T) + 2) * Np; }
  int64_t tap_offset(int dt, int dh, int dw) const {
    return static_cast<int64_t>(dt) * Np + static_cast<int64_t>(dh) * Wp + dw;
  }
};

void pad_in(const PadGeom& g, const double* src, double* dst) {
  std::fill(dst, dst + g.total, 0.0);
  for (int t = 0; t < g.T; ++t)
    for (int h = 0; h < g.H; ++h)
      std::copy_n(src + (static_cast<int64_t>(t) * g.H + h) * g.W, g.W, dst + g.idx(t, h, 0));
}

void unpad_add(const PadGeom& g, const double* src, double* dst) {
  for (int t = 0; t < g.T; ++t)
    for (int h = 0; h < g.H; ++h) {
      const double* s = src + g.idx(t, h, 0);
      double* d = dst + (static_cast<int64_t>(t) * g.H + h) * g.W;
      for (int w = 0; w < g.W; ++w) d[w] += s[w];
    }
}

}  // namespace

int Graph::conv3d(int x, int w, int b, int st, int sh, int sw) {
  const Tensor& xv = val(x);
  const Tensor& wv = val(w);
  const Tensor& bv = val(b);
  if (xv.rank() != 4 || wv.rank() != 5 || wv.dim(2) != 3 || wv.dim(3) != 3 || wv.dim(4) != 3)
    fail(Status::ShapeMismatch, "conv3d: expects x[C,T,H,W], w[Co,Ci,3,3,3]");
  const int Ci = xv.dim(0), T = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int Co = wv.dim(0);
  if (wv.dim(1) != Ci || bv.size() != Co) fail(Status::ShapeMismatch, "conv3d: channel mismatch");
  const int To = (T - 1) / st + 1, Ho = (H - 1) / sh + 1, Wo = (W - 1) / sw + 1;

  if (st == 1 && sh == 1 && sw == 1) return conv3d_unit(x, w, b);

  Tensor out({Co, To, Ho, Wo});
  const double* X = xv.data();
  const double* Wt = wv.data();
  double* O = out.data();
  const int64_t x_t = static_cast<int64_t>(H) * W;
  const int64_t x_c = static_cast<int64_t>(T) * x_t;
  const int64_t o_h = Wo;
  const int64_t o_t = static_cast<int64_t>(Ho) * Wo;
  const int64_t o_c = static_cast<int64_t>(To) * o_t;

  for (int co = 0; co < Co; ++co) {
    double* ochan = O + co * o_c;
    const double bias = bv[co];
    for (int64_t i = 0; i < o_c; ++i) ochan[i] = bias;
    for (int ci = 0; ci < Ci; ++ci) {
      const double* xchan = X + ci * x_c;
      const double* wbase = Wt + ((static_cast<int64_t>(co) * Ci + ci) * 27);
      for (int kt = 0; kt < 3; ++kt)
        for (int kh = 0; kh < 3; ++kh)
          for (int kw = 0; kw < 3; ++kw) {
            const double wv_ = wbase[(kt * 3 + kh) * 3 + kw];
            const int dt = kt - 1, dh = kh - 1, dw = kw - 1;
            for (int to = 0; to < To; ++to) {
              const int ti = to * st + dt;
              if (ti < 0 || ti >= T) continue;
              for (int ho = 0; ho < Ho; ++ho) {
                const int hi = ho * sh + dh;
                if (hi < 0 || hi >= H) continue;
                const double* xrow = xchan + ti * x_t + static_cast<int64_t>(hi) * W;
                double* __restrict orow = ochan + to * o_t + ho * o_h;
                int wlo = 0, whi = Wo - 1;
                while (wlo * sw + dw < 0) ++wlo;
                while (whi >= 0 && whi * sw + dw >= W) --whi;
                const double* __restrict xr = xrow + dw;
                if (sw == 1) {
                  for (int wo = wlo; wo <= whi; ++wo) orow[wo] += wv_ * xr[wo];
                } else {
                  for (int wo = wlo; wo <= whi; ++wo) orow[wo] += wv_ * xr[wo * sw];
                }
              }
            }
          }
    }
  }

  bool rg = needs_grad(x) || needs_grad(w) || needs_grad(b);
  return push(std::move(out), rg, [=](Graph& g, int self) {
    const Tensor& go = g.grad_in(self);
    const Tensor& xv2 = g.val(x);
    const Tensor& wv2 = g.val(w);
    Tensor* gx = g.grad_sink(x);
    Tensor* gw = g.grad_sink(w);
    Tensor* gb = g.grad_sink(b);
    const double* GO = go.data();
    if (gb) {
      for (int co = 0; co < Co; ++co) {
        const double* ochan = GO + co * o_c;
        double acc = 0.0;
        for (int64_t i = 0; i < o_c; ++i) acc += ochan[i];
        (*gb)[co] += acc;
      }
    }
    if (!gx && !gw) return;
    for (int co = 0; co < Co; ++co) {
      const double* gochan = GO + co * o_c;
      for (int ci = 0; ci < Ci; ++ci) {
        const double* xchan = xv2.data() + ci * x_c;
        double* gxchan = gx ? gx->data() + ci * x_c : nullptr;
        const int64_t woff = (static_cast<int64_t>(co) * Ci + ci) * 27;
        for (int kt = 0; kt < 3; ++kt)
          for (int kh = 0; kh < 3; ++kh)
            for (int kw = 0; kw < 3; ++kw) {
              const double wv_ = wv2.data()[woff + (kt * 3 + kh) * 3 + kw];
              const int dt = kt - 1, dh = kh - 1, dw = kw - 1;
              double wacc = 0.0;
              for (int to = 0; to < To; ++to) {
                const int ti = to * st + dt;
                if (ti < 0 || ti >= T) continue;
                for (int ho = 0; ho < Ho; ++ho) {
                  const int hi = ho * sh + dh;
                  if (hi < 0 || hi >= H) continue;
                  const double* __restrict gorow = gochan + to * o_t + ho * o_h;
                  const int64_t xbase = ti * x_t + static_cast<int64_t>(hi) * W + dw;
                  int wlo = 0, whi = Wo - 1;
                  while (wlo * sw + dw < 0) ++wlo;
                  while (whi >= 0 && whi * sw + dw >= W) --whi;
                  if (gw) {
                    const double* __restrict xr = xchan + xbase;
                    if (sw == 1) {
                      for (int wo = wlo; wo <= whi; ++wo) wacc += gorow[wo] * xr[wo];
                    } else {
                      for (int wo = wlo; wo <= whi; ++wo) wacc += gorow[wo] * xr[wo * sw];
                    }
                  }
                  if (gxchan) {
                    double* __restrict gxr = gxchan + xbase;
                    if (sw == 1) {
                      for (int wo = wlo; wo <= whi; ++wo) gxr[wo] += wv_ * gorow[wo];
                    } else {
                      for (int wo = wlo; wo <= whi; ++wo) gxr[wo * sw] += wv_ * gorow[wo];
                    }
                  }
                }
              }
              if (gw) gw->data()[woff + (kt * 3 + kh) * 3 + kw] += wacc;
            }
      }
    }
  });
}

int Graph::conv3d_unit(int x, int w, int b) {
  const Tensor& xv = val(x);
  const Tensor& wv = val(w);
  const Tensor& bv = val(b);
  const int Ci = xv.dim(0), T = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int Co = wv.dim(0);
  const PadGeom pg(T, H, W);
  const int64_t frame = static_cast<int64_t>(T) * H * W;

  Tensor out({Co, T, H, W});
  {
    std::vector<double> xpad(static_cast<size_t>(pg.total) * Ci);
    for (int ci = 0; ci < Ci; ++ci)
      pad_in(pg, xv.data() + ci * frame, xpad.data() + static_cast<int64_t>(ci) * pg.total);
    std::vector<double> opad(static_cast<size_t>(pg.total));
    for (int co = 0; co < Co; ++co) {
      std::fill(opad.begin(), opad.end(), 0.0);
      for (int ci = 0; ci < Ci; ++ci) {
        const double* wbase = wv.data() + (static_cast<int64_t>(co) * Ci + ci) * 27;
        const double* xc = xpad.data() + static_cast<int64_t>(ci) * pg.total;
        for (int kt = 0; kt < 3; ++kt)
          for (int kh = 0; kh < 3; ++kh)
            for (int kw = 0; kw < 3; ++kw) {
              const double wv_ = wbase[(kt * 3 + kh) * 3 + kw];
              if (wv_ == 0.0) continue;
              const int64_t off = pg.tap_offset(kt - 1, kh - 1, kw - 1);
              const double* __restrict src = xc + pg.lo() + off;
              double* __restrict dst = opad.data() + pg.lo();
              const int64_t n = pg.hi() - pg.lo();
              for (int64_t i = 0; i < n; ++i) dst[i] += wv_ * src[i];
            }
      }
      double* ochan = out.data() + static_cast<int64_t>(co) * frame;
      const double bias = bv[co];
      for (int64_t i = 0; i < frame; ++i) ochan[i] = bias;
      unpad_add(pg, opad.data(), ochan);
    }
  }

  bool rg = needs_grad(x) || needs_grad(w) || needs_grad(b);
  return push(std::move(out), rg, [x, w, b, Ci, Co, T, H, W, frame](Graph& g, int self) {
    const Tensor& go = g.grad_in(self);
    const Tensor& xv2 = g.val(x);
    const Tensor& wv2 = g.val(w);
    Tensor* gx = g.grad_sink(x);
    Tensor* gw = g.grad_sink(w);
    Tensor* gb = g.grad_sink(b);
    if (gb)
      for (int co = 0; co < Co; ++co) {
        const double* gochan = go.data() + static_cast<int64_t>(co) * frame;
        double acc = 0.0;
        for (int64_t i = 0; i < frame; ++i) acc += gochan[i];
        (*gb)[co] += acc;
      }
    if (!gx && !gw) return;

    const PadGeom pg(T, H, W);
    const int64_t n = pg.hi() - pg.lo();
    std::vector<double> gopad(static_cast<size_t>(pg.total) * Co);
    for (int co = 0; co < Co; ++co)
      pad_in(pg, go.data() + static_cast<int64_t>(co) * frame,
             gopad.data() + static_cast<int64_t>(co) * pg.total);
    std::vector<double> xpad;
    if (gw) {
      xpad.resize(static_cast<size_t>(pg.total) * Ci);
      for (int ci = 0; ci < Ci; ++ci)
        pad_in(pg, xv2.data() + static_cast<int64_t>(ci) * frame,
               xpad.data() + static_cast<int64_t>(ci) * pg.total);
    }
    std::vector<double> dxpad;
    if (gx) dxpad.assign(static_cast<size_t>(pg.total) * Ci, 0.0);

    for (int co = 0; co < Co; ++co) {
      const double* gc = gopad.data() + static_cast<int64_t>(co) * pg.total + pg.lo();
      for (int ci = 0; ci < Ci; ++ci) {
        const int64_t woff = (static_cast<int64_t>(co) * Ci + ci) * 27;
        for (int kt = 0; kt < 3; ++kt)
          for (int kh = 0; kh < 3; ++kh)
            for (int kw = 0; kw < 3; ++kw) {
              const int64_t off = pg.tap_offset(kt - 1, kh - 1, kw - 1);
              if (gw) {
                const double* __restrict xc =
                    xpad.data() + static_cast<int64_t>(ci) * pg.total + pg.lo() + off;
                const double* __restrict gr = gc;
                // eight independent accumulators; the summation order is fixed
                // by the code, so results stay bitwise deterministic
                double a0 = 0, a1 = 0, a2 = 0, a3 = 0, a4 = 0, a5 = 0, a6 = 0, a7 = 0;
                int64_t i = 0;
                for (; i + 8 <= n; i += 8) {
                  a0 += gr[i] * xc[i];
                  a1 += gr[i + 1] * xc[i + 1];
                  a2 += gr[i + 2] * xc[i + 2];
                  a3 += gr[i + 3] * xc[i + 3];
                  a4 += gr[i + 4] * xc[i + 4];
                  a5 += gr[i + 5] * xc[i + 5];
                  a6 += gr[i + 6] * xc[i + 6];
                  a7 += gr[i + 7] * xc[i + 7];
                }
                for (; i < n; ++i) a0 += gr[i] * xc[i];
                gw->data()[woff + (kt * 3 + kh) * 3 + kw] +=
                    ((a0 + a1) + (a2 + a3)) + ((a4 + a5) + (a6 + a7));
              }
              if (gx) {
                const double wv_ = wv2.data()[woff + (kt * 3 + kh) * 3 + kw];
                if (wv_ == 0.0) continue;
                double* __restrict dxc =
                    dxpad.data() + static_cast<int64_t>(ci) * pg.total + pg.lo() + off;
                const double* __restrict gr = gc;
                for (int64_t i = 0; i < n; ++i) dxc[i] += wv_ * gr[i];
              }
            }
      }
    }
    if (gx)
      for (int ci = 0; ci < Ci; ++ci)
        unpad_add(pg, dxpad.data() + static_cast<int64_t>(ci) * pg.total,
                  gx->data() + static_cast<int64_t>(ci) * frame);
  });
}

int Graph::global_mean_pool(int x) {
  const Tensor& xv = val(x);
  if (xv.rank() != 4) fail(Status::ShapeMismatch, "global_mean_pool: expects [C,T,H,W]");
  const int C = xv.dim(0);
  const int64_t n = xv.size() / C;
  Tensor out({C});
  for (int c = 0; c < C; ++c) {
    const double* p = xv.data() + c * n;
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += p[i];
    out[c] = acc / static_cast<double>(n);
  }
  return push(std::move(out), needs_grad(x), [x, C, n](Graph& g, int self) {
    Tensor* gx = g.grad_sink(x);
    if (!gx) return;
    const Tensor& go = g.grad_in(self);
    for (int c = 0; c < C; ++c) {
      const double gi = go[c] / static_cast<double>(n);
      double* p = gx->data() + c * n;
      for (int64_t i = 0; i < n; ++i) p[i] += gi;
    }
  });
}

int Graph::gather_joints(int x, std::vector<int> indices) {
  const Tensor& xv = val(x);
  if (xv.rank() != 3) fail(Status::ShapeMismatch, "gather_joints: expects [T,J,C]");
  const int T = xv.dim(0), J = xv.dim(1), C = xv.dim(2);
  const int n = static_cast<int>(indices.size());
  for (int j : indices)
    if (j < 0 || j >= J) fail(Status::InvalidArgument, "gather_joints: index out of range");
  Tensor out({T, n, C});
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < n; ++i)
      std::copy_n(xv.data() + (static_cast<int64_t>(t) * J + indices[static_cast<size_t>(i)]) * C,
                  C, out.data() + (static_cast<int64_t>(t) * n + i) * C);
  return push(std::move(out), needs_grad(x),
              [x, T, J, C, n, idx = std::move(indices)](Graph& g, int self) {
                Tensor* gx = g.grad_sink(x);
                if (!gx) return;
                const Tensor& go = g.grad_in(self);
                for (int t = 0; t < T; ++t)
                  for (int i = 0; i < n; ++i) {
                    const double* src = go.data() + (static_cast<int64_t>(t) * n + i) * C;
                    double* dst =
                        gx->data() + (static_cast<int64_t>(t) * J + idx[static_cast<size_t>(i)]) * C;
                    for (int c = 0; c < C; ++c) dst[c] += src[c];
                  }
              });
}

int Graph::joint_mix(int x, Tensor adjacency) {
  const Tensor& xv = val(x);
  if (xv.rank() != 3) fail(Status::ShapeMismatch, "joint_mix: expects [T,J,C]");
  const int T = xv.dim(0), J = xv.dim(1), C = xv.dim(2);
  if (adjacency.rank() != 2 || adjacency.dim(0) != J || adjacency.dim(1) != J)
    fail(Status::ShapeMismatch, "joint_mix: adjacency must be [J,J]");
  Tensor out({T, J, C});
  for (int t = 0; t < T; ++t) {
    const double* xt = xv.data() + static_cast<int64_t>(t) * J * C;
    double* ot = out.data() + static_cast<int64_t>(t) * J * C;
    for (int i = 0; i < J; ++i) {
      const double* arow = adjacency.data() + static_cast<int64_t>(i) * J;
      double* orow = ot + static_cast<int64_t>(i) * C;
      for (int j = 0; j < J; ++j) {
        const double a = arow[j];
        if (a == 0.0) continue;
        const double* xrow = xt + static_cast<int64_t>(j) * C;
        for (int c = 0; c < C; ++c) orow[c] += a * xrow[c];
      }
    }
  }
  return push(std::move(out), needs_grad(x),
              [x, T, J, C, adj = std::move(adjacency)](Graph& g, int self) {
                Tensor* gx = g.grad_sink(x);
                if (!gx) return;
                const Tensor& go = g.grad_in(self);
                for (int t = 0; t < T; ++t) {
                  const double* gt = go.data() + static_cast<int64_t>(t) * J * C;
                  double* gxt = gx->data() + static_cast<int64_t>(t) * J * C;
                  for (int i = 0; i < J; ++i) {
                    const double* arow = adj.data() + static_cast<int64_t>(i) * J;
                    const double* grow = gt + static_cast<int64_t>(i) * C;
                    for (int j = 0; j < J; ++j) {
                      const double a = arow[j];
                      if (a == 0.0) continue;
                      double* gxrow = gxt + static_cast<int64_t>(j) * C;
                      for (int c = 0; c < C; ++c) gxrow[c] += a * grow[c];
                    }
                  }
                }
              });
}

int Graph::temporal_conv(int x, int w, int b) {
  const Tensor& xv = val(x);
  const Tensor& wv = val(w);
  const Tensor& bv = val(b);
  if (xv.rank() != 3 || wv.rank() != 3 || wv.dim(2) != 3)
    fail(Status::ShapeMismatch, "temporal_conv: expects x[T,J,C], w[C2,C,3]");
  const int T = xv.dim(0), J = xv.dim(1), C = xv.dim(2), C2 = wv.dim(0);
  if (wv.dim(1) != C || bv.size() != C2) fail(Status::ShapeMismatch, "temporal_conv: channels");
  Tensor out({T, J, C2});
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < 3; ++k) {
      const int ti = t + k - 1;
      if (ti < 0 || ti >= T) continue;
      const double* xt = xv.data() + static_cast<int64_t>(ti) * J * C;
      double* ot = out.data() + static_cast<int64_t>(t) * J * C2;
      for (int j = 0; j < J; ++j)
        for (int c2 = 0; c2 < C2; ++c2) {
          const double* wr = wv.data() + (static_cast<int64_t>(c2) * C) * 3 + k;
          double acc = 0.0;
          for (int c = 0; c < C; ++c) acc += wr[static_cast<int64_t>(c) * 3] * xt[j * C + c];
          ot[j * C2 + c2] += acc;
        }
    }
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < J; ++j)
      for (int c2 = 0; c2 < C2; ++c2) out[(static_cast<int64_t>(t) * J + j) * C2 + c2] += bv[c2];

  bool rg = needs_grad(x) || needs_grad(w) || needs_grad(b);
  return push(std::move(out), rg, [x, w, b, T, J, C, C2](Graph& g, int self) {
    const Tensor& go = g.grad_in(self);
    const Tensor& xv2 = g.val(x);
    const Tensor& wv2 = g.val(w);
    Tensor* gx = g.grad_sink(x);
    Tensor* gw = g.grad_sink(w);
    Tensor* gb = g.grad_sink(b);
    if (gb)
      for (int t = 0; t < T; ++t)
        for (int j = 0; j < J; ++j)
          for (int c2 = 0; c2 < C2; ++c2)
            (*gb)[c2] += go[(static_cast<int64_t>(t) * J + j) * C2 + c2];
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < 3; ++k) {
        const int ti = t + k - 1;
        if (ti < 0 || ti >= T) continue;
        const double* gt = go.data() + static_cast<int64_t>(t) * J * C2;
        const double* xt = xv2.data() + static_cast<int64_t>(ti) * J * C;
        for (int j = 0; j < J; ++j)
          for (int c2 = 0; c2 < C2; ++c2) {
            const double gi = gt[j * C2 + c2];
            if (gi == 0.0) continue;
            if (gx) {
              double* gxt = gx->data() + static_cast<int64_t>(ti) * J * C;
              const double* wr = wv2.data() + (static_cast<int64_t>(c2) * C) * 3 + k;
              for (int c = 0; c < C; ++c)
                gxt[j * C + c] += wr[static_cast<int64_t>(c) * 3] * gi;
            }
            if (gw) {
              double* gwr = gw->data() + (static_cast<int64_t>(c2) * C) * 3 + k;
              for (int c = 0; c < C; ++c)
                gwr[static_cast<int64_t>(c) * 3] += xt[j * C + c] * gi;
            }
          }
      }
  });
}

int Graph::mean_joints(int x) {
  const Tensor& xv = val(x);
  if (xv.rank() != 3) fail(Status::ShapeMismatch, "mean_joints: expects [T,J,C]");
  const int T = xv.dim(0), J = xv.dim(1), C = xv.dim(2);
  Tensor out({T, C});
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < J; ++j)
      for (int c = 0; c < C; ++c)
        out[static_cast<int64_t>(t) * C + c] += xv[(static_cast<int64_t>(t) * J + j) * C + c] / J;
  return push(std::move(out), needs_grad(x), [x, T, J, C](Graph& g, int self) {
    Tensor* gx = g.grad_sink(x);
    if (!gx) return;
    const Tensor& go = g.grad_in(self);
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < J; ++j)
        for (int c = 0; c < C; ++c)
          (*gx)[(static_cast<int64_t>(t) * J + j) * C + c] +=
              go[static_cast<int64_t>(t) * C + c] / J;
  });
}

int Graph::mean_time(int x) {
  const Tensor& xv = val(x);
  if (xv.rank() != 2) fail(Status::ShapeMismatch, "mean_time: expects [T,C]");
  const int T = xv.dim(0), C = xv.dim(1);
  Tensor out({C});
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < C; ++c) out[c] += xv[static_cast<int64_t>(t) * C + c] / T;
  return push(std::move(out), needs_grad(x), [x, T, C](Graph& g, int self) {
    Tensor* gx = g.grad_sink(x);
    if (!gx) return;
    const Tensor& go = g.grad_in(self);
    for (int t = 0; t < T; ++t)
      for (int c = 0; c < C; ++c) (*gx)[static_cast<int64_t>(t) * C + c] += go[c] / T;
  });
}

int Graph::layer_norm(int x, int gain, int bias) {
  const Tensor& xv = val(x);
  if (xv.rank() != 2) fail(Status::ShapeMismatch, "layer_norm: expects [T,C]");
  const int T = xv.dim(0), C = xv.dim(1);
  const Tensor& gv = val(gain);
  const Tensor& bv = val(bias);
  if (gv.size() != C || bv.size() != C) fail(Status::ShapeMismatch, "layer_norm: gain/bias size");
  constexpr double kEps = 1e-5;

  Tensor out({T, C});
  Tensor xhat({T, C});
  std::vector<double> inv_sigma(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    const double* xr = xv.data() + static_cast<int64_t>(t) * C;
    double mu = 0.0;
    for (int c = 0; c < C; ++c) mu += xr[c];
    mu /= C;
    double var = 0.0;
    for (int c = 0; c < C; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= C;
    const double is = 1.0 / std::sqrt(var + kEps);
    inv_sigma[static_cast<size_t>(t)] = is;
    for (int c = 0; c < C; ++c) {
      const double xh = (xr[c] - mu) * is;
      xhat[static_cast<int64_t>(t) * C + c] = xh;
      out[static_cast<int64_t>(t) * C + c] = gv[c] * xh + bv[c];
    }
  }
  bool rg = needs_grad(x) || needs_grad(gain) || needs_grad(bias);
  return push(std::move(out), rg,
              [x, gain, bias, T, C, xh = std::move(xhat),
               is = std::move(inv_sigma)](Graph& g, int self) {
                const Tensor& go = g.grad_in(self);
                const Tensor& gv = g.val(gain);
                Tensor* gx = g.grad_sink(x);
                Tensor* gg = g.grad_sink(gain);
                Tensor* gb = g.grad_sink(bias);
                for (int t = 0; t < T; ++t) {
                  const double* gor = go.data() + static_cast<int64_t>(t) * C;
                  const double* xhr = xh.data() + static_cast<int64_t>(t) * C;
                  if (gg)
                    for (int c = 0; c < C; ++c) (*gg)[c] += gor[c] * xhr[c];
                  if (gb)
                    for (int c = 0; c < C; ++c) (*gb)[c] += gor[c];
                  if (gx) {
                    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                    for (int c = 0; c < C; ++c) {
                      const double dxh = gor[c] * gv[c];
                      mean_dxhat += dxh;
                      mean_dxhat_xhat += dxh * xhr[c];
                    }
                    mean_dxhat /= C;
                    mean_dxhat_xhat /= C;
                    double* gxr = gx->data() + static_cast<int64_t>(t) * C;
                    for (int c = 0; c < C; ++c) {
                      const double dxh = gor[c] * gv[c];
                      gxr[c] += is[static_cast<size_t>(t)] *
                                (dxh - mean_dxhat - xhr[c] * mean_dxhat_xhat);
                    }
                  }
                }
              });
}

int Graph::attention_scores(int q, int k, int heads) {
  const Tensor& qv = val(q);
  const Tensor& kv = val(k);
  if (qv.rank() != 2 || !qv.same_shape(kv))
    fail(Status::ShapeMismatch, "attention_scores: expects matching [T,D]");
  const int T = qv.dim(0), D = qv.dim(1);
  if (D % heads != 0) fail(Status::ShapeMismatch, "attention_scores: heads must divide D");
  const int dh = D / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor out({heads, T, T});
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < T; ++i) {
      const double* qr = qv.data() + static_cast<int64_t>(i) * D + h * dh;
      for (int j = 0; j < T; ++j) {
        const double* kr = kv.data() + static_cast<int64_t>(j) * D + h * dh;
        double acc = 0.0;
        for (int d = 0; d < dh; ++d) acc += qr[d] * kr[d];
        out[(static_cast<int64_t>(h) * T + i) * T + j] = acc * inv;
      }
    }
  bool rg = needs_grad(q) || needs_grad(k);
  return push(std::move(out), rg, [q, k, heads, T, D, dh, inv](Graph& g, int self) {
    const Tensor& go = g.grad_in(self);
    const Tensor& qv = g.val(q);
    const Tensor& kv = g.val(k);
    Tensor* gq = g.grad_sink(q);
    Tensor* gk = g.grad_sink(k);
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < T; ++i)
        for (int j = 0; j < T; ++j) {
          const double gs = go[(static_cast<int64_t>(h) * T + i) * T + j] * inv;
          if (gs == 0.0) continue;
          if (gq) {
            double* gqr = gq->data() + static_cast<int64_t>(i) * D + h * dh;
            const double* kr = kv.data() + static_cast<int64_t>(j) * D + h * dh;
            for (int d = 0; d < dh; ++d) gqr[d] += gs * kr[d];
          }
          if (gk) {
            double* gkr = gk->data() + static_cast<int64_t>(j) * D + h * dh;
            const double* qr = qv.data() + static_cast<int64_t>(i) * D + h * dh;
            for (int d = 0; d < dh; ++d) gkr[d] += gs * qr[d];
          }
        }
  });
}

int Graph::softmax_rows(int x) {
  const Tensor& xv = val(x);
  const int n = xv.dim(xv.rank() - 1);
  const int64_t rows = xv.size() / n;
  Tensor out = xv;
  for (int64_t r = 0; r < rows; ++r) {
    double* p = out.data() + r * n;
    double m = p[0];
    for (int i = 1; i < n; ++i) m = std::max(m, p[i]);
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
      p[i] = std::exp(p[i] - m);
      z += p[i];
    }
    for (int i = 0; i < n; ++i) p[i] /= z;
  }
  return push(std::move(out), needs_grad(x), [x, n, rows](Graph& g, int self) {
    Tensor* gx = g.grad_sink(x);
    if (!gx) return;
    const Tensor& go = g.grad_in(self);
    const Tensor& y = g.val(self);
    for (int64_t r = 0; r < rows; ++r) {
      const double* yr = y.data() + r * n;
      const double* gr = go.data() + r * n;
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += yr[i] * gr[i];
      double* gxr = gx->data() + r * n;
      for (int i = 0; i < n; ++i) gxr[i] += yr[i] * (gr[i] - dot);
    }
  });
}

int Graph::attention_apply(int p, int v, int heads) {
  const Tensor& pv = val(p);
  const Tensor& vv = val(v);
  if (pv.rank() != 3 || vv.rank() != 2)
    fail(Status::ShapeMismatch, "attention_apply: expects [H,T,T] and [T,D]");
  const int T = vv.dim(0), D = vv.dim(1);
  const int dh = D / heads;
  Tensor out({T, D});
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < T; ++i) {
      double* orow = out.data() + static_cast<int64_t>(i) * D + h * dh;
      for (int j = 0; j < T; ++j) {
        const double pij = pv[(static_cast<int64_t>(h) * T + i) * T + j];
        if (pij == 0.0) continue;
        const double* vr = vv.data() + static_cast<int64_t>(j) * D + h * dh;
        for (int d = 0; d < dh; ++d) orow[d] += pij * vr[d];
      }
    }
  bool rg = needs_grad(p) || needs_grad(v);
  return push(std::move(out), rg, [p, v, heads, T, D, dh](Graph& g, int self) {
    const Tensor& go = g.grad_in(self);
    const Tensor& pv = g.val(p);
    const Tensor& vv = g.val(v);
    Tensor* gp = g.grad_sink(p);
    Tensor* gv = g.grad_sink(v);
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < T; ++i) {
        const double* gor = go.data() + static_cast<int64_t>(i) * D + h * dh;
        for (int j = 0; j < T; ++j) {
          const double* vr = vv.data() + static_cast<int64_t>(j) * D + h * dh;
          if (gp) {
            double acc = 0.0;
            for (int d = 0; d < dh; ++d) acc += gor[d] * vr[d];
            (*gp)[(static_cast<int64_t>(h) * T + i) * T + j] += acc;
          }
          if (gv) {
            const double pij = pv[(static_cast<int64_t>(h) * T + i) * T + j];
            if (pij == 0.0) continue;
            double* gvr = gv->data() + static_cast<int64_t>(j) * D + h * dh;
            for (int d = 0; d < dh; ++d) gvr[d] += pij * gor[d];
          }
        }
      }
  });
}

int Graph::l2_normalize(int x) {
  const Tensor& xv = val(x);
  double norm = 0.0;
  for (int64_t i = 0; i < xv.size(); ++i) norm += xv[i] * xv[i];
  norm = std::sqrt(norm);
  const double r = std::max(norm, 1e-12);
  Tensor out = xv;
  for (auto& v : out.v) v /= r;
  return push(std::move(out), needs_grad(x), [x, r](Graph& g, int self) {
    Tensor* gx = g.grad_sink(x);
    if (!gx) return;
    const Tensor& go = g.grad_in(self);
    const Tensor& y = g.val(self);
    double dot = 0.0;
    for (int64_t i = 0; i < go.size(); ++i) dot += go[i] * y[i];
    for (int64_t i = 0; i < go.size(); ++i) (*gx)[i] += (go[i] - y[i] * dot) / r;
  });
}

int Graph::dot(int a, int b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (av.size() != bv.size()) fail(Status::ShapeMismatch, "dot: size mismatch");
  double acc = 0.0;
  for (int64_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  Tensor out = Tensor::scalar_value(acc);
  bool rg = needs_grad(a) || needs_grad(b);
  return push(std::move(out), rg, [a, b](Graph& g, int self) {
    const double gi = g.grad_in(self)[0];
    const Tensor& av = g.val(a);
    const Tensor& bv = g.val(b);
    if (Tensor* ga = g.grad_sink(a))
      for (int64_t i = 0; i < av.size(); ++i) (*ga)[i] += gi * bv[i];
    if (Tensor* gb = g.grad_sink(b))
      for (int64_t i = 0; i < bv.size(); ++i) (*gb)[i] += gi * av[i];
  });
}

int Graph::matvec_const(Tensor m, int x) {
  const Tensor& xv = val(x);
  if (m.rank() != 2 || m.dim(1) != static_cast<int>(xv.size()))
    fail(Status::ShapeMismatch, "matvec_const: dimension mismatch");
  const int N = m.dim(0), d = m.dim(1);
  Tensor out({N});
  for (int i = 0; i < N; ++i) {
    const double* row = m.data() + static_cast<int64_t>(i) * d;
    double acc = 0.0;
    for (int j = 0; j < d; ++j) acc += row[j] * xv[j];
    out[i] = acc;
  }
  return push(std::move(out), needs_grad(x),
              [x, N, d, mm = std::move(m)](Graph& g, int self) {
                Tensor* gx = g.grad_sink(x);
                if (!gx) return;
                const Tensor& go = g.grad_in(self);
                for (int i = 0; i < N; ++i) {
                  const double gi = go[i];
                  if (gi == 0.0) continue;
                  const double* row = mm.data() + static_cast<int64_t>(i) * d;
                  for (int j = 0; j < d; ++j) (*gx)[j] += gi * row[j];
                }
              });
}

int Graph::sum_scalars(const std::vector<int>& xs, const std::vector<double>& weights) {
  if (xs.size() != weights.size()) fail(Status::InvalidArgument, "sum_scalars: size mismatch");
  double acc = 0.0;
  bool rg = false;
  for (size_t i = 0; i < xs.size(); ++i) {
    acc += weights[i] * val(xs[i])[0];
    rg = rg || needs_grad(xs[i]);
  }
  Tensor out = Tensor::scalar_value(acc);
  std::vector<int> parents = xs;
  std::vector<double> w = weights;
  return push(std::move(out), rg, [parents, w](Graph& g, int self) {
    const double gi = g.grad_in(self)[0];
    for (size_t i = 0; i < parents.size(); ++i)
      if (Tensor* gx = g.grad_sink(parents[i])) (*gx)[0] += gi * w[i];
  });
}

int Graph::infonce(int pos_score, int neg_scores, double tau) {
  if (tau <= 0.0) fail(Status::InvalidArgument, "infonce: temperature must be > 0");
  const double a = val(pos_score)[0] / tau;
  const Tensor& nv = val(neg_scores);
  const int N = static_cast<int>(nv.size());
  double m = a;
  for (int i = 0; i < N; ++i) m = std::max(m, nv[i] / tau);
  double z = std::exp(a - m);
  for (int i = 0; i < N; ++i) z += std::exp(nv[i] / tau - m);
  Tensor out = Tensor::scalar_value(m + std::log(z) - a);
  bool rg = needs_grad(pos_score) || needs_grad(neg_scores);
  return push(std::move(out), rg, [pos_score, neg_scores, tau, a, m, z, N](Graph& g, int self) {
    const double gi = g.grad_in(self)[0];
    const Tensor& nv = g.val(neg_scores);
    if (Tensor* gp = g.grad_sink(pos_score))
      (*gp)[0] += gi * (std::exp(a - m) / z - 1.0) / tau;
    if (Tensor* gn = g.grad_sink(neg_scores))
      for (int i = 0; i < N; ++i)
        (*gn)[i] += gi * (std::exp(nv[i] / tau - m) / z) / tau;
  });
}

int Graph::bce_logits_mean(int scores, Tensor targets) {
  const Tensor& sv = val(scores);
  if (sv.size() != targets.size()) fail(Status::ShapeMismatch, "bce: size mismatch");
  const int N = static_cast<int>(sv.size());
  double acc = 0.0;
  for (int i = 0; i < N; ++i) acc += softplus(sv[i]) - targets[i] * sv[i];
  Tensor out = Tensor::scalar_value(acc / N);
  return push(std::move(out), needs_grad(scores),
              [scores, N, y = std::move(targets)](Graph& g, int self) {
                Tensor* gs = g.grad_sink(scores);
                if (!gs) return;
                const double gi = g.grad_in(self)[0];
                const Tensor& sv = g.val(scores);
                for (int i = 0; i < N; ++i)
                  (*gs)[i] += gi * (logistic(sv[i]) - y[i]) / N;
              });
}

int Graph::cross_entropy(int logits, int label) {
  const Tensor& lv = val(logits);
  const int C = static_cast<int>(lv.size());
  if (label < 0 || label >= C) fail(Status::InvalidArgument, "cross_entropy: label out of range");
  double m = lv[0];
  for (int i = 1; i < C; ++i) m = std::max(m, lv[i]);
  double z = 0.0;
  for (int i = 0; i < C; ++i) z += std::exp(lv[i] - m);
  Tensor out = Tensor::scalar_value(m + std::log(z) - lv[label]);
  return push(std::move(out), needs_grad(logits), [logits, label, C, m, z](Graph& g, int self) {
    Tensor* gl = g.grad_sink(logits);
    if (!gl) return;
    const double gi = g.grad_in(self)[0];
    const Tensor& lv = g.val(logits);
    for (int i = 0; i < C; ++i) {
      double p = std::exp(lv[i] - m) / z;
      (*gl)[i] += gi * (p - (i == label ? 1.0 : 0.0));
    }
  });
}

}  // namespace ccl
