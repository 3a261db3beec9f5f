// SPDX-License-Identifier: Apache-2.0
//
// The coefficient triple (f, g, k) with declared constants, Nemitsky lifting
// of scalar functions, and sampling checkers for the declared constants:
//
//   <f(x) - f(y), x - y>                      <= M |x - y|^2
//   |g(x) - g(y)|_HS^2 + int |k(x) - k(y)|^2  <= C |x - y|^2
//   |f(x)|^2 + |g(x)|_HS^2 + int |k(x)|^2     <= D (1 + |x|^2)
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <string>

#include "spde/errors.hpp"
#include "spde/noise.hpp"
#include "spde/rng.hpp"
#include "spde/state_space.hpp"

namespace spde {

/// Real function used pointwise, with its derivative and a declared growth
/// constant G: F(u)^2 <= G (1 + u^2).  `slope_bound` is the one-sided
/// Lipschitz constant sup (F(u) - F(w)) / (u - w).
struct ScalarFunction {
  std::string name;
  std::function<double(double)> value;
  std::function<double(double)> derivative;
  double growth = 1.0;
  double slope_bound = 0.0;
};

namespace scalar {

inline ScalarFunction neg_cbrt() {
  return {"neg_cbrt", [](double u) { return -std::cbrt(u); },
          [](double u) {
            const double a = std::abs(u);
            if (a < 1e-18) return -1e12;
            return -1.0 / (3.0 * std::cbrt(a * a));
          },
          1.0, 0.0};
}

inline ScalarFunction neg_linear() {
  return {"neg_linear", [](double u) { return -u; }, [](double) { return -1.0; }, 1.0, 0.0};
}

inline ScalarFunction identity() {
  return {"identity", [](double u) { return u; }, [](double) { return 1.0; }, 1.0, 1.0};
}

inline ScalarFunction constant(double c) {
  return {"constant", [c](double) { return c; }, [](double) { return 0.0; }, c * c, 0.0};
}

inline ScalarFunction zero() { return {"zero", [](double) { return 0.0; }, [](double) { return 0.0; }, 0.0, 0.0}; }

/// Increasing and superlinear: no finite growth or slope bound exists.
inline ScalarFunction cube() {
  return {"cube", [](double u) { return u * u * u; }, [](double u) { return 3.0 * u * u; },
          std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
}

inline ScalarFunction by_name(const std::string& name) {
  if (name == "neg_cbrt") return neg_cbrt();
  if (name == "neg_linear") return neg_linear();
  if (name == "identity") return identity();
  if (name == "zero") return zero();
  if (name == "cube") return cube();
  throw ConfigError("unknown scalar function '" + name + "'");
}

}  // namespace scalar

// ---------------------------------------------------------------------------

using DriftEval = std::function<Vec(double t, const Vec& x)>;
using DriftJacobian = std::function<Mat(double t, const Vec& x)>;

/// f(t, x).  The output vanishes outside `support`; `jacobian`, when given, is
/// d f_support / d x_support (support x support).
struct DriftSpec {
  DriftEval eval;
  DriftJacobian jacobian;
  Block support;
  double M = 0.0;
  double D = 0.0;

  static DriftSpec zero(std::size_t dim) {
    const auto n = static_cast<Eigen::Index>(dim);
    return {[n](double, const Vec&) { return Vec(Vec::Zero(n)); }, [](double, const Vec&) { return Mat(0, 0); },
            Block{"none", 0, 0}, 0.0, 0.0};
  }

  bool is_zero() const noexcept { return support.size == 0; }
};

/// g(t, x): dim x modes matrix whose columns are the images of the Wiener modes.
struct DiffusionSpec {
  std::size_t modes = 0;
  std::function<Mat(double t, const Vec& x)> eval;
  double C = 0.0;
  double D = 0.0;

  static DiffusionSpec zero() { return {}; }
  bool is_zero() const noexcept { return modes == 0; }
};

/// k(t, xi, x).  When separable, k = factor(xi) * state_map(t, x); nu-integrals
/// then reduce to scalar mark integrals.
struct JumpCoeffSpec {
  std::function<Vec(double t, double xi, const Vec& x)> eval;
  std::function<double(double)> mark_factor;
  std::function<Vec(double t, const Vec& x)> state_map;
  double C = 0.0;
  double D = 0.0;

  static JumpCoeffSpec zero() { return {}; }

  static JumpCoeffSpec separable(std::function<double(double)> factor, std::function<Vec(double, const Vec&)> map,
                                 double C, double D) {
    JumpCoeffSpec k;
    k.mark_factor = std::move(factor);
    k.state_map = std::move(map);
    k.eval = [phi = k.mark_factor, K = k.state_map](double t, double xi, const Vec& x) { return Vec(phi(xi) * K(t, x)); };
    k.C = C;
    k.D = D;
    return k;
  }

  static JumpCoeffSpec general(std::function<Vec(double, double, const Vec&)> eval, double C, double D) {
    JumpCoeffSpec k;
    k.eval = std::move(eval);
    k.C = C;
    k.D = D;
    return k;
  }

  bool is_zero() const noexcept { return !eval; }
  bool is_separable() const noexcept { return static_cast<bool>(state_map); }
};

struct CoefficientSet {
  DriftSpec f;
  DiffusionSpec g;
  JumpCoeffSpec k;

  double C() const { return g.C + k.C; }
  double D() const { return f.D + g.D + k.D; }
};

/// Squared Hilbert-Schmidt norm summed over columns.
inline double hilbert_schmidt_norm2(const Mat& g, const WeightedInnerProduct& metric) {
  double s = 0.0;
  for (Eigen::Index m = 0; m < g.cols(); ++m) s += metric.norm2(g.col(m));
  return s;
}

/// Same quantity as trace(G^T W G).
inline double hilbert_schmidt_norm2_trace(const Mat& g, const WeightedInnerProduct& metric) {
  return (g.transpose() * metric.weights().asDiagonal() * g).trace();
}

// ---------------------------------------------------------------------------
// Nemitsky operators on a Dirichlet sine block.

/// x -> P F(Phi x): synthesize the block's sine series on Q-1 interior nodes
/// i/Q, apply F pointwise, and project back with the discrete sine transform.
/// For Q > modes the projection inverts the synthesis exactly, and decreasing
/// F yields a monotone operator in the truncated L^2 inner product.
class NemitskyOperator {
 public:
  NemitskyOperator(ScalarFunction fn, std::size_t modes, std::size_t quad_points)
      : fn_(std::move(fn)), modes_(modes), quad_(quad_points) {
    if (modes == 0) throw DomainError("Nemitsky operator needs at least one mode");
    if (quad_points < 2 * modes) {
      throw AliasingError("quadrature grid of " + std::to_string(quad_points) + " points cannot resolve " +
                          std::to_string(modes) + " modes (need at least " + std::to_string(2 * modes) + ")");
    }
    const auto nodes = static_cast<Eigen::Index>(quad_points - 1);
    const auto n = static_cast<Eigen::Index>(modes);
    synth_.resize(nodes, n);
    for (Eigen::Index i = 0; i < nodes; ++i) {
      const double x = static_cast<double>(i + 1) / static_cast<double>(quad_points);
      for (Eigen::Index k = 0; k < n; ++k) {
        synth_(i, k) = std::numbers::sqrt2 * std::sin(static_cast<double>(k + 1) * std::numbers::pi * x);
      }
    }
    proj_ = synth_.transpose() / static_cast<double>(quad_points);
  }

  std::size_t modes() const noexcept { return modes_; }
  std::size_t quad_points() const noexcept { return quad_; }
  const ScalarFunction& function() const noexcept { return fn_; }

  /// Nodal values of the sine series with coefficients c.
  template <class V>
  Vec synthesize(const Eigen::MatrixBase<V>& c) const {
    return synth_ * c;
  }

  template <class V>
  Vec apply(const Eigen::MatrixBase<V>& c) const {
    Vec u = synth_ * c;
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = fn_.value(u[i]);
    return proj_ * u;
  }

  template <class V>
  Mat jacobian(const Eigen::MatrixBase<V>& c) const {
    Vec u = synth_ * c;
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = fn_.derivative(u[i]);
    return proj_ * u.asDiagonal() * synth_;
  }

 private:
  ScalarFunction fn_;
  std::size_t modes_;
  std::size_t quad_;
  Mat synth_;
  Mat proj_;
};

/// Drift x -> Nemitsky(F) acting on one sine block of the state.  M is the
/// scalar slope bound, D the scalar growth constant.
inline DriftSpec nemitsky(ScalarFunction fn, const Basis& basis, std::size_t quad_points,
                          const std::string& block = "all") {
  const Block b = basis.block(block);
  auto op = std::make_shared<const NemitskyOperator>(std::move(fn), b.size, quad_points);
  const auto dim = static_cast<Eigen::Index>(basis.dim());
  const auto off = static_cast<Eigen::Index>(b.offset);
  const auto n = static_cast<Eigen::Index>(b.size);
  DriftSpec f;
  f.eval = [op, dim, off, n](double, const Vec& x) {
    Vec out = Vec::Zero(dim);
    out.segment(off, n) = op->apply(x.segment(off, n));
    return out;
  };
  f.jacobian = [op, off, n](double, const Vec& x) { return op->jacobian(x.segment(off, n)); };
  f.support = b;
  f.M = std::max(0.0, op->function().slope_bound);
  f.D = op->function().growth;
  return f;
}

/// f + c x on the support of f (c x must not leave that support).
inline DriftSpec add_linear(DriftSpec f, double c) {
  if (c == 0.0) return f;
  const auto off = static_cast<Eigen::Index>(f.support.offset);
  const auto n = static_cast<Eigen::Index>(f.support.size);
  f.eval = [inner = f.eval, c, off, n](double t, const Vec& x) {
    Vec out = inner(t, x);
    out.segment(off, n) += c * x.segment(off, n);
    return out;
  };
  f.jacobian = [inner = f.jacobian, c](double t, const Vec& x) {
    Mat j = inner(t, x);
    j.diagonal().array() += c;
    return j;
  };
  f.M = std::max(0.0, f.M + c);
  f.D = std::pow(std::sqrt(f.D) + std::abs(c), 2);
  return f;
}

// ---------------------------------------------------------------------------
// Checkers

namespace detail {

struct PointSampler {
  PointSampler(const WeightedInnerProduct& metric, double radius, std::uint64_t seed)
      : metric_(metric), radius_(radius), rng_(make_engine(seed, 0, Channel::checker)) {}

  /// Random point with ||x||_w spread over (0, radius].
  Vec point() {
    const auto n = static_cast<Eigen::Index>(metric_.dim());
    Vec x(n);
    for (Eigen::Index k = 0; k < n; ++k) x[k] = gauss_(rng_) / std::sqrt(metric_.weights()[k]);
    const double len = std::sqrt(metric_.norm2(x));
    const double r = radius_ * unif_(rng_);
    return len > 0.0 ? Vec(x * (r / len)) : x;
  }

  /// Either an independent point or a small perturbation of x.
  Vec partner(const Vec& x) {
    if (unif_(rng_) < 0.5) return point();
    Vec d = point();
    return x + d * (std::pow(10.0, -1.0 - 5.0 * unif_(rng_)));
  }

  double time(double horizon) { return horizon * unif_(rng_); }

 private:
  const WeightedInnerProduct& metric_;
  double radius_;
  Engine rng_;
  std::normal_distribution<double> gauss_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

/// int phi^2 dnu for a separable k.
inline double mark_factor_moment2(const JumpCoeffSpec& k, const MarkSpaceSpec& marks) {
  return marks.integrate([&](double xi) {
    const double p = k.mark_factor(xi);
    return p * p;
  });
}

inline double nu_square_distance(const JumpCoeffSpec& k, const MarkSpaceSpec& marks, const WeightedInnerProduct& w,
                                 double t, const Vec& x, const Vec& y, double phi2 = -1.0) {
  if (k.is_zero()) return 0.0;
  if (k.is_separable()) {
    if (phi2 < 0.0) phi2 = mark_factor_moment2(k, marks);
    return phi2 * w.norm2(k.state_map(t, x) - k.state_map(t, y));
  }
  return marks.integrate([&](double xi) { return w.norm2(k.eval(t, xi, x) - k.eval(t, xi, y)); });
}

inline double nu_square_norm(const JumpCoeffSpec& k, const MarkSpaceSpec& marks, const WeightedInnerProduct& w,
                             double t, const Vec& x, double phi2 = -1.0) {
  if (k.is_zero()) return 0.0;
  if (k.is_separable()) {
    if (phi2 < 0.0) phi2 = mark_factor_moment2(k, marks);
    return phi2 * w.norm2(k.state_map(t, x));
  }
  return marks.integrate([&](double xi) { return w.norm2(k.eval(t, xi, x)); });
}

}  // namespace detail

struct SemimonotoneReport {
  double max_ratio = -std::numeric_limits<double>::infinity();
  double declared_M = 0.0;
  bool pass = true;
};

/// Largest sampled <f(t,x) - f(t,y), x - y>_w / |x - y|_w^2 against M + 1e-9.
inline SemimonotoneReport check_semimonotone(const DriftSpec& f, const WeightedInnerProduct& metric,
                                             std::size_t samples, double radius, double declared_M,
                                             std::uint64_t seed = 11, double horizon = 1.0) {
  if (samples == 0) throw DomainError("check_semimonotone needs at least one sample");
  if (!(radius > 0.0)) throw DomainError("check_semimonotone needs a positive radius");
  detail::PointSampler sampler(metric, radius, seed);
  SemimonotoneReport r;
  r.declared_M = declared_M;
  for (std::size_t i = 0; i < samples; ++i) {
    const double t = sampler.time(horizon);
    const Vec x = sampler.point();
    const Vec y = sampler.partner(x);
    const Vec dx = x - y;
    const double d2 = metric.norm2(dx);
    if (d2 == 0.0) continue;
    const double ratio = metric.dot(f.eval(t, x) - f.eval(t, y), dx) / d2;
    r.max_ratio = std::max(r.max_ratio, ratio);
  }
  r.pass = r.max_ratio <= declared_M + 1e-9;
  return r;
}

struct LipschitzGrowthReport {
  // Lipschitz ratios |.(x) - .(y)|^2 / |x - y|^2.
  double g_lipschitz = 0.0;
  double k_lipschitz = 0.0;
  double lipschitz = 0.0;  // max of the g + k sum
  // Growth ratios |.(x)|^2 / (1 + |x|^2).
  double f_growth = 0.0;
  double g_growth = 0.0;
  double k_growth = 0.0;
  double growth = 0.0;  // max of the f + g + k sum
  double declared_C = 0.0;
  double declared_D = 0.0;
  bool pass_lipschitz = true;
  bool pass_growth = true;
  bool pass() const { return pass_lipschitz && pass_growth; }
};

inline LipschitzGrowthReport check_lipschitz_growth(const CoefficientSet& set, const MarkSpaceSpec& marks,
                                                    const WeightedInnerProduct& metric, std::size_t samples,
                                                    double radius = 10.0, std::uint64_t seed = 13,
                                                    double horizon = 1.0) {
  if (samples == 0) throw DomainError("check_lipschitz_growth needs at least one sample");
  detail::PointSampler sampler(metric, radius, seed);
  LipschitzGrowthReport r;
  r.declared_C = set.C();
  r.declared_D = set.D();
  const double phi2 = set.k.is_separable() ? detail::mark_factor_moment2(set.k, marks) : -1.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double t = sampler.time(horizon);
    const Vec x = sampler.point();
    const Vec y = sampler.partner(x);
    const double d2 = metric.norm2(x - y);
    const double g_diff = set.g.is_zero() ? 0.0 : hilbert_schmidt_norm2(set.g.eval(t, x) - set.g.eval(t, y), metric);
    const double k_diff = detail::nu_square_distance(set.k, marks, metric, t, x, y, phi2);
    if (d2 > 0.0) {
      r.g_lipschitz = std::max(r.g_lipschitz, g_diff / d2);
      r.k_lipschitz = std::max(r.k_lipschitz, k_diff / d2);
      r.lipschitz = std::max(r.lipschitz, (g_diff + k_diff) / d2);
    }
    const double scale = 1.0 + metric.norm2(x);
    const double f2 = set.f.is_zero() ? 0.0 : metric.norm2(set.f.eval(t, x));
    const double g2 = set.g.is_zero() ? 0.0 : hilbert_schmidt_norm2(set.g.eval(t, x), metric);
    const double k2 = detail::nu_square_norm(set.k, marks, metric, t, x, phi2);
    r.f_growth = std::max(r.f_growth, f2 / scale);
    r.g_growth = std::max(r.g_growth, g2 / scale);
    r.k_growth = std::max(r.k_growth, k2 / scale);
    r.growth = std::max(r.growth, (f2 + g2 + k2) / scale);
  }
  // nu-integrals come from the mark quadrature, whose relative error is
  // about 1e-4 at the default node count.
  r.pass_lipschitz = r.lipschitz <= r.declared_C * (1.0 + 1e-3) + 1e-12;
  r.pass_growth = r.growth <= r.declared_D * (1.0 + 1e-3) + 1e-12;
  return r;
}

struct ContinuityReport {
  double coarse = 0.0;  // max |<y, f(x + d) - f(x)>| with |d| = eps
  double fine = 0.0;    // same with |d| = eps * 1e-3
  bool pass = true;
};

/// In finite dimensions demicontinuity is plain continuity; this probes it by
/// checking that weak differences shrink with the perturbation size.
inline ContinuityReport check_continuity(const DriftSpec& f, const WeightedInnerProduct& metric, std::size_t samples,
                                         double radius, double eps = 1e-3, std::uint64_t seed = 17) {
  detail::PointSampler sampler(metric, radius, seed);
  ContinuityReport r;
  for (std::size_t i = 0; i < samples; ++i) {
    const Vec x = sampler.point();
    Vec d = sampler.point();
    const double len = std::sqrt(metric.norm2(d));
    if (len == 0.0) continue;
    d /= len;
    Vec y = sampler.point();
    const double ylen = std::sqrt(metric.norm2(y));
    if (ylen > 0.0) y /= ylen;
    const Vec fx = f.eval(0.0, x);
    r.coarse = std::max(r.coarse, std::abs(metric.dot(y, f.eval(0.0, x + eps * d) - fx)));
    r.fine = std::max(r.fine, std::abs(metric.dot(y, f.eval(0.0, x + 1e-3 * eps * d) - fx)));
  }
  r.pass = r.fine <= r.coarse || r.coarse == 0.0;
  return r;
}

}  // namespace spde
