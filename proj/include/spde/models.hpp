// SPDX-License-Identifier: Apache-2.0
//
// Ready-made models: reaction-diffusion on (0,1), a damped wave equation with
// multiplicative Levy forcing, a delay equation, and a scalar linear SDE whose
// solution is known in closed form.
#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "spde/coefficients.hpp"
#include "spde/errors.hpp"
#include "spde/noise.hpp"
#include "spde/semigroup.hpp"
#include "spde/solver.hpp"
#include "spde/state_space.hpp"

namespace spde {

enum class ExampleId { reaction_diffusion, hyperbolic_wave, delay_equation, linear_scalar };

inline std::string to_string(ExampleId id) {
  switch (id) {
    case ExampleId::reaction_diffusion: return "reaction_diffusion";
    case ExampleId::hyperbolic_wave: return "hyperbolic_wave";
    case ExampleId::delay_equation: return "delay_equation";
    case ExampleId::linear_scalar: return "linear_scalar";
  }
  return "unknown";
}

inline ExampleId example_from_name(const std::string& name) {
  for (auto id : {ExampleId::reaction_diffusion, ExampleId::hyperbolic_wave, ExampleId::delay_equation,
                  ExampleId::linear_scalar}) {
    if (to_string(id) == name) return id;
  }
  throw ConfigError("unknown example '" + name + "'");
}

/// Default jump law used by the examples: lambda = 2, marks N(0.25, 0.5^2).
inline MarkSpaceSpec default_marks() { return MarkSpaceSpec(2.0, NormalMarks{0.25, 0.5}); }

// ---------------------------------------------------------------------------
// Hypothesis verification.

struct HypothesisReport {
  SemimonotoneReport semimonotone;
  LipschitzGrowthReport lipschitz_growth;
  ContinuityReport continuity;
  ContractionReport contraction;
  bool pass() const {
    return semimonotone.pass && lipschitz_growth.pass() && continuity.pass && !contraction.violation;
  }
};

inline HypothesisReport check_hypotheses(const ModelSpec& m, std::size_t samples, double radius = 10.0) {
  HypothesisReport r;
  if (m.coeffs.f.is_zero()) {
    r.semimonotone.max_ratio = 0.0;
    r.semimonotone.declared_M = m.coeffs.f.M;
  } else {
    r.semimonotone = check_semimonotone(m.coeffs.f, m.metric, samples, radius, m.coeffs.f.M, 11, m.horizon);
    r.continuity = check_continuity(m.coeffs.f, m.metric, std::min<std::size_t>(samples, 1000), radius);
  }
  r.lipschitz_growth = check_lipschitz_growth(m.coeffs, m.marks, m.metric, samples, radius, 13, m.horizon);
  r.contraction = check_contraction(m.semigroup, m.metric, std::min<std::size_t>(samples, 64), m.horizon);
  return r;
}

/// Throws HypothesisError naming the first failed condition.
inline void verify_hypotheses(const ModelSpec& m, std::size_t samples) {
  if (samples == 0) return;
  const auto r = check_hypotheses(m, samples);
  if (!r.semimonotone.pass) {
    throw HypothesisError(m.name + ": drift is not semimonotone with M = " + std::to_string(m.coeffs.f.M) +
                          " (observed ratio " + std::to_string(r.semimonotone.max_ratio) + ")");
  }
  if (!r.continuity.pass) throw HypothesisError(m.name + ": drift fails the continuity probe");
  if (!r.lipschitz_growth.pass_lipschitz) {
    throw HypothesisError(m.name + ": noise coefficients exceed Lipschitz constant C = " +
                          std::to_string(m.coeffs.C()) + " (observed " +
                          std::to_string(r.lipschitz_growth.lipschitz) + ")");
  }
  if (!r.lipschitz_growth.pass_growth) {
    throw HypothesisError(m.name + ": coefficients exceed growth constant D = " + std::to_string(m.coeffs.D()) +
                          " (observed " + std::to_string(r.lipschitz_growth.growth) + ")");
  }
  if (r.contraction.violation) {
    throw HypothesisError(m.name + ": semigroup exceeds exp(alpha t) growth (excess " +
                          std::to_string(r.contraction.max_excess) + ")");
  }
}

namespace detail {

inline InitialSampler fixed_initial(Vec x0) {
  return [x0 = std::move(x0)](Engine&) { return x0; };
}

inline DriftSpec scalar_drift(const ScalarFunction& fn, const Basis& basis, std::size_t quad_points, double eta,
                              const std::string& block) {
  DriftSpec f;
  if (fn.name == "zero") {
    if (eta == 0.0) return DriftSpec::zero(basis.dim());
    f = nemitsky(scalar::zero(), basis, quad_points, block);
  } else {
    f = nemitsky(fn, basis, quad_points, block);
  }
  return add_linear(std::move(f), eta);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Reaction-diffusion: du = u_xx dt + (F(u) + eta u) dt + sigma u dW + int xi u dN~

struct ReactionDiffusionParams {
  std::size_t dim = 8;
  std::size_t quad_points = 0;  // 0: 4 * dim
  ScalarFunction drift = scalar::neg_cbrt();
  double eta = 0.0;
  MarkSpaceSpec marks = default_marks();
  bool linear_jumps = true;
  /// Multiplicative noise sigma u driven by one Brownian motion (0 disables).
  double sigma = 0.0;
  Vec x0;  // empty: e1 + 0.5 e2
  double horizon = 1.0;
  double ito_constant = 1.0;
  std::size_t check_samples = 10000;
};

inline ModelSpec build_reaction_diffusion(const ReactionDiffusionParams& p) {
  if (p.dim == 0) throw DomainError("reaction-diffusion model needs at least one mode");
  ModelSpec m;
  m.name = "reaction_diffusion";
  m.basis = sine_basis(p.dim);
  m.metric = WeightedInnerProduct::unit(p.dim);
  Vec mu(static_cast<Eigen::Index>(p.dim));
  for (std::size_t k = 1; k <= p.dim; ++k) mu[static_cast<Eigen::Index>(k - 1)] = -std::pow(k * std::numbers::pi, 2);
  m.semigroup = SemigroupSpec(Diagonal{mu}, 0.0);
  const std::size_t q = p.quad_points ? p.quad_points : 4 * p.dim;
  m.coeffs.f = detail::scalar_drift(p.drift, *m.basis, q, p.eta, "all");
  m.marks = p.marks;
  if (p.linear_jumps && p.marks.total_mass() > 0.0) {
    const double c = p.marks.second_moment();
    m.coeffs.k = JumpCoeffSpec::separable([](double xi) { return xi; }, [](double, const Vec& x) { return x; }, c, c);
  }
  if (p.sigma != 0.0) {
    const double s = p.sigma;
    m.coeffs.g.modes = 1;
    m.coeffs.g.eval = [s](double, const Vec& x) { return Mat(s * x); };
    m.coeffs.g.C = s * s;
    m.coeffs.g.D = s * s;
  }
  Vec x0 = p.x0;
  if (x0.size() == 0) {
    x0 = Vec::Zero(static_cast<Eigen::Index>(p.dim));
    x0[0] = 1.0;
    if (p.dim > 1) x0[1] = 0.5;
  }
  if (static_cast<std::size_t>(x0.size()) != p.dim) throw DimensionError("initial state has wrong dimension");
  m.initial = detail::fixed_initial(x0);
  m.horizon = p.horizon;
  m.ito_constant = p.ito_constant;
  verify_hypotheses(m, p.check_samples);
  return m;
}

inline ModelSpec build_reaction_diffusion(std::size_t dim, const MarkSpaceSpec& marks, const ScalarFunction& f,
                                          double eta) {
  ReactionDiffusionParams p;
  p.dim = dim;
  p.marks = marks;
  p.drift = f;
  p.eta = eta;
  return build_reaction_diffusion(p);
}

// ---------------------------------------------------------------------------
// Wave: u_tt = u_xx + F(u_t) + u(t-) dZ, state (u, u_t) in H^1_0 x L^2.

struct HyperbolicParams {
  std::size_t dim = 8;  // modes per component
  std::size_t quad_points = 0;
  ScalarFunction damping = scalar::neg_cbrt();
  double ito_constant = 1.0;
  double horizon = 1.0;
  Vec x0;  // empty: u = e1 / pi (unit energy), v = 0
  std::size_t check_samples = 10000;
};

inline ModelSpec build_hyperbolic(const HyperbolicParams& p, const LevyPathSpec& z) {
  if (p.dim == 0) throw DomainError("wave model needs at least one mode");
  if (z.drift != 0.0) throw DomainError("Levy drift must be zero for the wave model");
  const auto n = static_cast<Eigen::Index>(p.dim);
  ModelSpec m;
  m.name = "hyperbolic_wave";
  m.basis = wave_basis(p.dim);
  Vec lambda(n);
  for (Eigen::Index k = 0; k < n; ++k) lambda[k] = std::pow((k + 1) * std::numbers::pi, 2);
  Vec w(2 * n);
  w << lambda, Vec::Ones(n);
  m.metric = WeightedInnerProduct(w);
  m.semigroup = SemigroupSpec(BlockWave{lambda}, 0.0);
  const std::size_t q = p.quad_points ? p.quad_points : 4 * p.dim;
  if (p.damping.name == "zero") {
    m.coeffs.f = DriftSpec::zero(2 * p.dim);
  } else {
    m.coeffs.f = nemitsky(p.damping, *m.basis, q, "velocity");
  }
  // |(0, u)|^2 = |u|_{L2}^2 <= |u|_{H1}^2 / lambda_1.
  const double inv_l1 = 1.0 / lambda[0];
  m.marks = z.jumps;
  if (z.jumps.total_mass() > 0.0) {
    const double c = z.jumps.second_moment() * inv_l1;
    m.coeffs.k = JumpCoeffSpec::separable(
        [](double xi) { return xi; },
        [n](double, const Vec& x) {
          Vec out = Vec::Zero(2 * n);
          out.tail(n) = x.head(n);
          return out;
        },
        c, c);
  }
  if (z.gaussian_variance > 0.0) {
    const double s = std::sqrt(z.gaussian_variance);
    m.coeffs.g.modes = 1;
    m.coeffs.g.eval = [s, n](double, const Vec& x) {
      Mat out = Mat::Zero(2 * n, 1);
      out.col(0).tail(n) = s * x.head(n);
      return out;
    };
    m.coeffs.g.C = z.gaussian_variance * inv_l1;
    m.coeffs.g.D = m.coeffs.g.C;
  }
  Vec x0 = p.x0;
  if (x0.size() == 0) {
    x0 = Vec::Zero(2 * n);
    x0[0] = 1.0 / std::numbers::pi;
  }
  if (x0.size() != 2 * n) throw DimensionError("initial state has wrong dimension");
  m.initial = detail::fixed_initial(x0);
  m.horizon = p.horizon;
  m.ito_constant = p.ito_constant;
  verify_hypotheses(m, p.check_samples);
  return m;
}

inline ModelSpec build_hyperbolic(std::size_t dim, const LevyPathSpec& z) {
  HyperbolicParams p;
  p.dim = dim;
  return build_hyperbolic(p, z);
}

// ---------------------------------------------------------------------------
// Delay: dx = (int_{-1}^0 x(t+s) ds + F(x) + eta x) dt + x(t-) dZ.

struct DelayParams {
  std::size_t cells = 1000;
  double eta = 0.0;
  double ito_constant = 1.0;
  double horizon = 1.0;
  /// History psi on (-1, 0]; cell averages are taken by the midpoint rule when
  /// no antiderivative is supplied.
  std::function<double(double)> history = [](double s) { return std::sin(std::numbers::pi * s); };
  std::function<double(double)> history_antiderivative = [](double s) {
    return -std::cos(std::numbers::pi * s) / std::numbers::pi;
  };
  std::size_t check_samples = 10000;
};

inline ModelSpec build_delay(const DelayParams& p, const ScalarFunction& f, const LevyPathSpec& z) {
  if (p.cells == 0) throw DomainError("delay history needs at least one cell");
  if (z.drift != 0.0) throw DomainError("Levy drift must be zero for the delay model");
  const auto dim = static_cast<Eigen::Index>(p.cells + 1);
  const double delta = 1.0 / static_cast<double>(p.cells);
  ModelSpec m;
  m.name = "delay_equation";
  m.basis = delay_basis(p.cells);
  Vec w = Vec::Constant(dim, delta);
  w[0] = 1.0;
  m.metric = WeightedInnerProduct(w);
  m.semigroup = SemigroupSpec(DelayShift{p.cells}, 1.0);

  if (f.name == "zero" && p.eta == 0.0) {
    m.coeffs.f = DriftSpec::zero(p.cells + 1);
  } else {
    const double eta = p.eta;
    DriftSpec d;
    d.eval = [fv = f.value, eta, dim](double, const Vec& x) {
      Vec out = Vec::Zero(dim);
      out[0] = fv(x[0]) + eta * x[0];
      return out;
    };
    d.jacobian = [fd = f.derivative, eta](double, const Vec& x) {
      Mat j(1, 1);
      j(0, 0) = fd(x[0]) + eta;
      return j;
    };
    d.support = m.basis->block("head");
    d.M = std::max(0.0, f.slope_bound + eta);
    d.D = std::pow(std::sqrt(f.growth) + std::abs(eta), 2);
    m.coeffs.f = std::move(d);
  }
  m.marks = z.jumps;
  if (z.jumps.total_mass() > 0.0) {
    const double c = z.jumps.second_moment();
    m.coeffs.k = JumpCoeffSpec::separable(
        [](double xi) { return xi; },
        [dim](double, const Vec& x) {
          Vec out = Vec::Zero(dim);
          out[0] = x[0];
          return out;
        },
        c, c);
  }
  if (z.gaussian_variance > 0.0) {
    const double s = std::sqrt(z.gaussian_variance);
    m.coeffs.g.modes = 1;
    m.coeffs.g.eval = [s, dim](double, const Vec& x) {
      Mat out = Mat::Zero(dim, 1);
      out(0, 0) = s * x[0];
      return out;
    };
    m.coeffs.g.C = z.gaussian_variance;
    m.coeffs.g.D = z.gaussian_variance;
  }

  Vec x0(dim);
  x0[0] = p.history(0.0);
  for (std::size_t i = 0; i < p.cells; ++i) {
    const double a = -1.0 + static_cast<double>(i) * delta;
    const double b = a + delta;
    x0[static_cast<Eigen::Index>(i + 1)] = p.history_antiderivative
                                               ? (p.history_antiderivative(b) - p.history_antiderivative(a)) / delta
                                               : p.history(0.5 * (a + b));
  }
  m.initial = detail::fixed_initial(x0);
  m.horizon = p.horizon;
  m.ito_constant = p.ito_constant;
  verify_hypotheses(m, p.check_samples);
  return m;
}

inline ModelSpec build_delay(std::size_t cells, const ScalarFunction& f, const LevyPathSpec& z) {
  DelayParams p;
  p.cells = cells;
  return build_delay(p, f, z);
}

// ---------------------------------------------------------------------------
// Scalar linear SDE dX = a X dt + sigma X dW + int xi X(t-) dN~.

struct LinearScalarParams {
  double a = -1.0;
  double sigma = 0.5;
  MarkSpaceSpec marks = default_marks();
  double x0 = 1.0;
  double horizon = 1.0;
  double ito_constant = 1.0;
  std::size_t check_samples = 10000;
};

inline ModelSpec build_linear_scalar(const LinearScalarParams& p) {
  ModelSpec m;
  m.name = "linear_scalar";
  m.basis = std::make_shared<const Basis>(std::vector<std::string>{"x"});
  m.metric = WeightedInnerProduct::unit(1);
  m.semigroup = SemigroupSpec(Diagonal{Vec::Constant(1, p.a)}, std::max(p.a, 0.0));
  m.coeffs.f = DriftSpec::zero(1);
  m.marks = p.marks;
  if (p.sigma != 0.0) {
    const double s = p.sigma;
    m.coeffs.g.modes = 1;
    m.coeffs.g.eval = [s](double, const Vec& x) { return Mat(s * x); };
    m.coeffs.g.C = s * s;
    m.coeffs.g.D = s * s;
  }
  if (p.marks.total_mass() > 0.0) {
    const double c = p.marks.second_moment();
    m.coeffs.k = JumpCoeffSpec::separable([](double xi) { return xi; }, [](double, const Vec& x) { return x; }, c, c);
  }
  m.initial = detail::fixed_initial(Vec::Constant(1, p.x0));
  m.horizon = p.horizon;
  m.ito_constant = p.ito_constant;
  verify_hypotheses(m, p.check_samples);
  return m;
}

}  // namespace spde
