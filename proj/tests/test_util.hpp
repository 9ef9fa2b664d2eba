// SPDX-License-Identifier: Apache-2.0
#ifndef CCL_TESTS_TEST_UTIL_HPP
#define CCL_TESTS_TEST_UTIL_HPP

#include <cmath>
#include <functional>

#include "core/tensor.hpp"

namespace ccl::testutil {

// Central finite differences of f at x0 against a provided analytic gradient.
// Returns the worst relative error over all elements.
inline double fd_worst_rel_error(const std::function<double(const Tensor&)>& f, Tensor x0,
                                 const Tensor& analytic, double step = 1e-5) {
  double worst = 0.0;
  for (int64_t i = 0; i < x0.size(); ++i) {
    const double keep = x0[i];
    x0[i] = keep + step;
    const double up = f(x0);
    x0[i] = keep - step;
    const double dn = f(x0);
    x0[i] = keep;
    const double fd = (up - dn) / (2.0 * step);
    const double a = analytic[i];
    const double denom = std::max({std::fabs(fd), std::fabs(a), 1e-8});
    worst = std::max(worst, std::fabs(fd - a) / denom);
  }
  return worst;
}

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.v) v = rng.uniform(-scale, scale);
  return t;
}

}  // namespace ccl::testutil

#endif
