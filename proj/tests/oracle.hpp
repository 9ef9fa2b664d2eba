// SPDX-License-Identifier: Apache-2.0
// Straight-line reference implementations used to verify the training math.
// Everything here is written directly from the loss definitions with naive
// summation, independent of the production code paths.
#ifndef CCL_TESTS_ORACLE_HPP
#define CCL_TESTS_ORACLE_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "core/tensor.hpp"

namespace ccl::oracle {

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Tensor unit(const Tensor& v) {
  Tensor out = v;
  double n = std::sqrt(dot(v, v));
  for (auto& x : out.v) x /= n;
  return out;
}

// InfoNCE by direct exponential sums, no max-subtraction.
inline double infonce(const Tensor& zq, const Tensor& zk, const Tensor& bank, double tau) {
  double num = std::exp(dot(zq, zk) / tau);
  double den = num;
  const int N = bank.rank() ? bank.dim(0) : 0;
  for (int i = 0; i < N; ++i) {
    Tensor row({bank.dim(1)});
    std::copy_n(bank.data() + static_cast<int64_t>(i) * bank.dim(1), bank.dim(1), row.data());
    den += std::exp(dot(zq, row) / tau);
  }
  return -std::log(num / den);
}

// Brute-force top-k by full sort; ties toward the lower index.
inline std::vector<int> top_k(const Tensor& bank, const Tensor& query, int k) {
  const int N = bank.dim(0), d = bank.dim(1);
  Tensor q = unit(query);
  std::vector<int> order(static_cast<size_t>(N));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> score(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) {
    Tensor row({d});
    std::copy_n(bank.data() + static_cast<int64_t>(i) * d, d, row.data());
    score[static_cast<size_t>(i)] = dot(q, row);
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return score[static_cast<size_t>(a)] > score[static_cast<size_t>(b)];
  });
  order.resize(static_cast<size_t>(k));
  return order;
}

// BCE over sigmoid(scores), evaluated directly in log space:
// -log(sigmoid(s)) = log(1+e^{-s}),  -log(1-sigmoid(s)) = log(1+e^{s}).
inline double bce_from_scores(const std::vector<double>& scores, const std::vector<uint8_t>& y) {
  double acc = 0.0;
  for (size_t i = 0; i < scores.size(); ++i)
    acc += y[i] ? std::log(1.0 + std::exp(-scores[i])) : std::log(1.0 + std::exp(scores[i]));
  return acc / static_cast<double>(scores.size());
}

struct SampleEmbeddings {
  Tensor g_r_q, f_r_q, f_r_k;
  Tensor g_p_q, f_p_q, f_p_k;
};

struct Losses {
  double cl_r = 0, cl_p = 0, spm_r = 0, spm_p = 0, r2p = 0, p2r = 0;
  double single_sum = 0, cross_sum = 0, total = 0;
};

// The six loss terms for one sample given embeddings and bank snapshots.
inline Losses sample_losses(const SampleEmbeddings& e, const Tensor& bank_g_r,
                            const Tensor& bank_g_p, const Tensor& bank_f_r,
                            const Tensor& bank_f_p, int k, double tau, double tau_spm,
                            bool spm_active, bool use_spm, bool use_cross) {
  Losses out;
  out.cl_r = infonce(e.f_r_q, e.f_r_k, bank_f_r, tau);
  out.cl_p = infonce(e.f_p_q, e.f_p_k, bank_f_p, tau);

  const int N = bank_f_r.dim(0);
  if (use_spm) {
    std::vector<uint8_t> y(static_cast<size_t>(N), 0);
    if (spm_active) {
      for (int i : top_k(bank_g_r, e.g_r_q, k)) y[static_cast<size_t>(i)] = 1;
      for (int i : top_k(bank_g_p, e.g_p_q, k)) y[static_cast<size_t>(i)] = 1;
    }
    auto scores = [&](const Tensor& f, const Tensor& bank) {
      std::vector<double> s(static_cast<size_t>(N));
      for (int i = 0; i < N; ++i) {
        Tensor row({bank.dim(1)});
        std::copy_n(bank.data() + static_cast<int64_t>(i) * bank.dim(1), bank.dim(1), row.data());
        s[static_cast<size_t>(i)] = dot(f, row) / tau_spm;
      }
      return s;
    };
    out.spm_r = bce_from_scores(scores(e.f_r_q, bank_f_r), y);
    out.spm_p = bce_from_scores(scores(e.f_p_q, bank_f_p), y);
  }
  if (use_cross) {
    out.r2p = infonce(e.f_p_q, e.f_r_k, bank_f_r, tau);
    out.p2r = infonce(e.f_r_q, e.f_p_k, bank_f_p, tau);
  }
  out.single_sum = out.cl_r + out.spm_r + out.cl_p + out.spm_p;
  out.cross_sum = out.r2p + out.p2r;
  out.total = out.single_sum + out.cross_sum;
  return out;
}

}  // namespace ccl::oracle

#endif
