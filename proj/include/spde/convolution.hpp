// SPDX-License-Identifier: Apache-2.0
//
// Left-point quadrature of X_t = S_t X_0 + int_0^t S_{t-s} dZ_s, the
// quadratic variation of the forcing, and the pathwise check of
//
//   |X_t|^2 <= e^{2 alpha t}|X_0|^2 + 2 int e^{2 alpha (t-s)} <X_{s-}, dZ_s>
//                                   +   int e^{2 alpha (t-s)} d[Z]_s .
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "spde/errors.hpp"
#include "spde/path.hpp"
#include "spde/semigroup.hpp"
#include "spde/state_space.hpp"

namespace spde {

/// X_{i+1} = S_{dt_i}(X_i + dZ_i); the jump part of dZ_i is executed at t_{i+1},
/// so X(t_{i+1}-) = S_{dt_i}(X_i + continuous_i).  For a uniform grid this is
/// exactly X(t_j) = S_{t_j} X_0 + sum_{i<j} S_{t_j - t_i} dZ_i.
inline CadlagPath stochastic_convolution(const SemigroupSpec& s, const SemimartingaleIncrements& z,
                                         const SpectralVector& x0) {
  if (z.dim() != x0.dim() || s.dim() != x0.dim()) throw DimensionError("forcing, semigroup and X0 disagree in dimension");
  CadlagPath x(x0.basis(), z.grid);
  x.set(0, x0.coeffs());
  Vec cur = x0.coeffs();
  const bool uniform = z.grid.is_uniform();
  const Propagator fixed = s.propagator(z.grid.dt(0));
  for (std::size_t i = 0; i < z.cells(); ++i) {
    const Propagator step = uniform ? fixed : s.propagator(z.grid.dt(i));
    const auto col = static_cast<Eigen::Index>(i);
    Vec before = cur + z.continuous.col(col);
    if (z.jump.col(col).isZero(0.0)) {
      step.apply(before);
      cur = before;
      x.set(i + 1, cur);
    } else {
      Vec after = before + z.jump.col(col);
      step.apply(before);
      step.apply(after);
      cur = after;
      x.set(i + 1, before, after);
    }
  }
  return x;
}

/// Cumulative [Z] on the grid, starting at 0.
inline std::vector<double> quadratic_variation(const SemimartingaleIncrements& z) {
  std::vector<double> qv(z.cells() + 1, 0.0);
  for (std::size_t i = 0; i < z.cells(); ++i) qv[i + 1] = qv[i] + z.qv[static_cast<Eigen::Index>(i)];
  return qv;
}

/// Realized pathwise alternative: sum of |dZ_i|^2 over cells.
inline std::vector<double> realized_quadratic_variation(const SemimartingaleIncrements& z,
                                                        const WeightedInnerProduct& metric) {
  std::vector<double> qv(z.cells() + 1, 0.0);
  for (std::size_t i = 0; i < z.cells(); ++i) qv[i + 1] = qv[i] + metric.norm2(z.total(i));
  return qv;
}

enum class QvEstimator {
  mixed,     // the increments' own [Z] (expected Wiener part + realized jumps)
  realized,  // sum |dZ_i|^2
};

struct ItoCheckReport {
  std::vector<double> lhs;    // |X_j|^2
  std::vector<double> rhs;
  std::vector<double> slack;  // rhs - lhs
  double tolerance = 0.0;
  double min_slack = std::numeric_limits<double>::infinity();
  bool violation = false;
};

/// Tolerance is c * sqrt(max dt).
inline ItoCheckReport ito_inequality_check(const SemigroupSpec& s, double alpha, const SpectralVector& x0,
                                           const SemimartingaleIncrements& z, const WeightedInnerProduct& metric,
                                           double c = 1.0, QvEstimator estimator = QvEstimator::mixed) {
  const CadlagPath x = stochastic_convolution(s, z, x0);
  ItoCheckReport r;
  const std::size_t m = z.cells();
  r.lhs.resize(m + 1);
  r.rhs.resize(m + 1);
  r.slack.resize(m + 1);
  r.tolerance = c * std::sqrt(z.grid.max_step());
  double rhs = metric.norm2(x0.coeffs());
  r.lhs[0] = rhs;
  r.rhs[0] = rhs;
  r.slack[0] = 0.0;
  r.min_slack = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const Vec dz = z.total(i);
    const double qv = estimator == QvEstimator::mixed ? z.qv[static_cast<Eigen::Index>(i)] : metric.norm2(dz);
    rhs = std::exp(2.0 * alpha * z.grid.dt(i)) * (rhs + 2.0 * metric.dot(x.value(i), dz) + qv);
    r.rhs[i + 1] = rhs;
    r.lhs[i + 1] = metric.norm2(x.value(i + 1));
    r.slack[i + 1] = r.rhs[i + 1] - r.lhs[i + 1];
    r.min_slack = std::min(r.min_slack, r.slack[i + 1]);
  }
  r.violation = r.min_slack < -r.tolerance;
  return r;
}

}  // namespace spde
