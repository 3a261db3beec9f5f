// SPDX-License-Identifier: Apache-2.0
//
// Solvers for dX = AX dt + f(t,X) dt + g(t,X-) dW + int k(t,xi,X-) N~(dt,dxi)
// in mild form:
//
//   rescale_to_contraction   S~ = e^{-alpha t} S and conjugated coefficients
//   solve_deterministic_mild X = S X0 + int S f(X) ds + V for a frozen V
//   picard_path / campaign   X^n from V^n built on X^{n-1}, same noise for all n
//   direct_solve             one-pass exponential Euler on the mild form
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spde/coefficients.hpp"
#include "spde/convolution.hpp"
#include "spde/errors.hpp"
#include "spde/noise.hpp"
#include "spde/parallel.hpp"
#include "spde/path.hpp"
#include "spde/rng.hpp"
#include "spde/semigroup.hpp"
#include "spde/state_space.hpp"

namespace spde {

using InitialSampler = std::function<Vec(Engine&)>;

struct ModelSpec {
  std::string name;
  BasisPtr basis;
  WeightedInnerProduct metric = WeightedInnerProduct::unit(1);
  SemigroupSpec semigroup{Diagonal{Vec::Zero(1)}, 0.0};
  CoefficientSet coeffs;
  MarkSpaceSpec marks;
  InitialSampler initial;
  double horizon = 1.0;
  /// c in the c sqrt(dt) tolerance of the pathwise Ito-inequality check.
  double ito_constant = 1.0;

  std::size_t dim() const { return basis->dim(); }
  double alpha() const { return semigroup.alpha(); }
  std::size_t wiener_modes() const { return coeffs.g.modes; }

  /// int k(t, xi, x) nu(dxi).
  Vec compensator(double t, const Vec& x) const {
    const auto& k = coeffs.k;
    if (k.is_separable()) return mark_factor_mean() * k.state_map(t, x);
    return marks.integrate([&](double xi) { return k.eval(t, xi, x); });
  }

  /// int phi(xi) nu(dxi) for separable k, from the mark quadrature; cached.
  double mark_factor_mean() const {
    if (!factor_mean_) {
      const auto& phi = coeffs.k.mark_factor;
      factor_mean_ = std::make_shared<const double>(marks.integrate([&](double xi) { return phi(xi); }));
    }
    return *factor_mean_;
  }

  Vec initial_state(std::uint64_t seed, std::uint64_t path) const {
    Engine rng = make_engine(seed, path, Channel::initial);
    Vec x0 = initial(rng);
    if (static_cast<std::size_t>(x0.size()) != dim()) throw DimensionError("initial state has wrong dimension");
    return x0;
  }

  NoiseRealization noise(const TimeGrid& grid, std::uint64_t seed, std::uint64_t path) const {
    return realize_noise(wiener_modes(), marks, grid, seed, path);
  }

 private:
  mutable std::shared_ptr<const double> factor_mean_;
};

// ---------------------------------------------------------------------------
// Rescaling to a contraction semigroup.

/// S~_t = e^{-alpha t} S_t, f~(t,x) = e^{-alpha t} f(t, e^{alpha t} x), and the
/// same conjugation for g and k.  X solves the original equation iff
/// e^{-alpha t} X solves the transformed one.
inline ModelSpec rescale_to_contraction(const ModelSpec& model) {
  const double alpha = model.alpha();
  if (alpha == 0.0) return model;
  ModelSpec out = model;
  out.name = model.name + "/rescaled";
  out.semigroup = model.semigroup.shifted(-alpha);

  auto& f = out.coeffs.f;
  if (!f.is_zero()) {
    f.eval = [inner = model.coeffs.f.eval, alpha](double t, const Vec& x) {
      const double e = std::exp(alpha * t);
      return Vec(inner(t, e * x) / e);
    };
    if (model.coeffs.f.jacobian) {
      f.jacobian = [inner = model.coeffs.f.jacobian, alpha](double t, const Vec& x) {
        return inner(t, std::exp(alpha * t) * x);
      };
    }
  }
  auto& g = out.coeffs.g;
  if (!g.is_zero()) {
    g.eval = [inner = model.coeffs.g.eval, alpha](double t, const Vec& x) {
      const double e = std::exp(alpha * t);
      return Mat(inner(t, e * x) / e);
    };
  }
  auto& k = out.coeffs.k;
  if (!k.is_zero()) {
    if (k.is_separable()) {
      k = JumpCoeffSpec::separable(
          model.coeffs.k.mark_factor,
          [inner = model.coeffs.k.state_map, alpha](double t, const Vec& x) {
            const double e = std::exp(alpha * t);
            return Vec(inner(t, e * x) / e);
          },
          model.coeffs.k.C, model.coeffs.k.D);
    } else {
      k.eval = [inner = model.coeffs.k.eval, alpha](double t, double xi, const Vec& x) {
        const double e = std::exp(alpha * t);
        return Vec(inner(t, xi, e * x) / e);
      };
    }
  }
  // M and C are invariant; D picks up e^{2|alpha| T} only when alpha < 0.
  if (alpha < 0.0) {
    const double grow = std::exp(-2.0 * alpha * model.horizon);
    f.D *= grow;
    g.D *= grow;
    k.D *= grow;
  }
  return out;
}

/// X_t = e^{alpha t} X~_t.
inline CadlagPath unscale(const CadlagPath& rescaled, double alpha) {
  if (alpha == 0.0) return rescaled;
  CadlagPath out(rescaled.basis(), rescaled.grid());
  for (std::size_t i = 0; i < rescaled.size(); ++i) {
    const double e = std::exp(alpha * rescaled.grid().time(i));
    if (rescaled.has_jump(i)) {
      out.set(i, e * rescaled.left_limit(i), e * rescaled.value(i));
    } else {
      out.set(i, e * rescaled.value(i));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic mild solve with frozen forcing V.

struct InnerSolverOptions {
  /// First Newton step fraction; later steps use 1 - (1 - damping)^{k+1}.
  double damping = 1.0;
  double tolerance = 1e-12;
  std::size_t max_iterations = 60;
  std::size_t max_halvings = 6;
  /// Extra Newton steps once the residual target is met.
  std::size_t polish_steps = 1;
  /// Evaluate the a-priori norm bound alongside the solve.
  bool check_bound = true;
};

struct MildSolveResult {
  CadlagPath path;
  double max_residual = 0.0;
  std::size_t newton_iterations = 0;
  std::size_t halvings = 0;
  bool bound_holds = true;
  double max_bound_ratio = 0.0;  // max |X_j| / bound_j
};

namespace detail {

struct StepSolve {
  bool ok = false;
  double residual = 0.0;
  std::size_t iterations = 0;
};

/// Solves z - h f(t, z) = b for z on the drift's support (z = b elsewhere)
/// by damped Newton with backtracking on the residual.
inline StepSolve solve_resolvent(const DriftSpec& f, double t, double h, const Vec& b, Vec& z,
                                 const InnerSolverOptions& opt) {
  StepSolve out;
  const auto off = static_cast<Eigen::Index>(f.support.offset);
  const auto n = static_cast<Eigen::Index>(f.support.size);
  const double scale = 1.0 + b.segment(off, n).lpNorm<Eigen::Infinity>();
  const double target = opt.tolerance * scale;
  auto residual = [&](const Vec& zz) { return Vec(zz.segment(off, n) - h * f.eval(t, zz).segment(off, n) - b.segment(off, n)); };
  auto finish = [&](bool ok, std::size_t k, double rn) {
    out.ok = ok;
    out.iterations = k;
    out.residual = rn;
    return out;
  };

  Vec r = residual(z);
  double rn = r.lpNorm<Eigen::Infinity>();
  Mat jac(n, n);
  std::size_t polished = 0;
  for (std::size_t k = 0; k < opt.max_iterations; ++k) {
    const bool met = rn <= target;
    if (met && polished >= opt.polish_steps) return finish(true, k, rn);
    if (f.jacobian) {
      jac = -h * f.jacobian(t, z);
    } else {
      const Vec f0 = f.eval(t, z).segment(off, n);
      for (Eigen::Index c = 0; c < n; ++c) {
        Vec zp = z;
        const double eps = 1e-7 * std::max(1.0, std::abs(z[off + c]));
        zp[off + c] += eps;
        jac.col(c) = -h * (f.eval(t, zp).segment(off, n) - f0) / eps;
      }
    }
    jac.diagonal().array() += 1.0;
    const Vec delta = jac.partialPivLu().solve(r);
    // Near a root where f is singular (cube root at 0) Newton overshoots and
    // the residual lags far behind the error; a negligible full step is taken
    // as convergence.
    if (delta.lpNorm<Eigen::Infinity>() <= 1e-3 * target) return finish(true, k, rn);
    double step = 1.0 - std::pow(1.0 - opt.damping, static_cast<double>(k + 1));
    for (;;) {
      Vec trial = z;
      trial.segment(off, n) -= step * delta;
      Vec rt = residual(trial);
      const double rtn = rt.lpNorm<Eigen::Infinity>();
      if (rtn <= (1.0 - 1e-4 * step) * rn || (!met && rtn <= target)) {
        z = std::move(trial);
        r = std::move(rt);
        rn = rtn;
        break;
      }
      step *= 0.5;
      if (step < 1e-12) return finish(met, k, rn);
    }
    if (met) ++polished;
  }
  return finish(rn <= target, opt.max_iterations, rn);
}

}  // namespace detail

/// Semi-implicit left-point rule for U = X - V:
///   U_{j+1} = S_dt U_j + dt f(t_{j+1}, U_{j+1} + V_{j+1}),
/// implicit in f and explicit in V.  A stalled step is retried as two half
/// steps (V frozen at t_{j+1}), up to `max_halvings` deep.
///
/// With the free part Y = S X0 + V, the bound check is the discrete analogue of
///   |X(t)| <= e^{alpha+ t}|X0| + |V(t)| + int e^{(alpha+M)(t-s)} |f(s, Y(s))| ds,
/// accumulated as B_{j+1} = (e^{alpha dt} B_j + dt |f(Y_{j+1})|) / (1 - dt M).
inline MildSolveResult solve_deterministic_mild(const SemigroupSpec& s, const DriftSpec& f, const WeightedInnerProduct& metric,
                                                const SpectralVector& x0, const CadlagPath& v,
                                                const InnerSolverOptions& opt = {}, const CadlagPath* guess = nullptr) {
  const TimeGrid& grid = v.grid();
  if (v.dim() != x0.dim() || s.dim() != x0.dim()) throw DimensionError("semigroup, X0 and V disagree in dimension");
  if (guess && !(guess->grid() == grid)) throw DimensionError("initial guess lives on another grid");

  MildSolveResult res{CadlagPath(x0.basis(), grid)};
  CadlagPath& x = res.path;
  Vec u = x0.coeffs();
  const Vec v0 = v.value(0);
  x.set(0, u + v0);

  const double alpha = s.alpha();
  const double M = f.M;
  const double x0_norm = std::sqrt(metric.norm2(x0.coeffs()));
  Vec free = x0.coeffs();  // S_t X0
  double bound_integral = 0.0;

  std::vector<std::optional<Propagator>> props(opt.max_halvings + 1);
  auto propagator = [&](std::size_t depth, double h) -> const Propagator& {
    if (grid.is_uniform()) {
      if (!props[depth]) props[depth] = s.propagator(h);
      return *props[depth];
    }
    props[depth] = s.propagator(h);
    return *props[depth];
  };

  std::function<bool(Vec&, double, double, const Vec&, std::size_t, const Vec*)> advance =
      [&](Vec& uu, double t, double h, const Vec& v_next, std::size_t depth, const Vec* start) -> bool {
    Vec b = uu;
    try {
      propagator(depth, h).apply(b);
    } catch (const DomainError&) {
      return false;
    }
    b += v_next;
    Vec z = start ? *start : b;
    if (!f.is_zero()) {
      if (f.support.offset > 0 || f.support.size < static_cast<std::size_t>(z.size())) {
        // Off the support the solution is b itself.
        Vec tmp = b;
        tmp.segment(static_cast<Eigen::Index>(f.support.offset), static_cast<Eigen::Index>(f.support.size)) =
            z.segment(static_cast<Eigen::Index>(f.support.offset), static_cast<Eigen::Index>(f.support.size));
        z = std::move(tmp);
      }
      const auto step = detail::solve_resolvent(f, t + h, h, b, z, opt);
      res.newton_iterations += step.iterations;
      if (!step.ok) {
        if (depth >= opt.max_halvings) {
          res.max_residual = std::max(res.max_residual, step.residual);
          return false;
        }
        ++res.halvings;
        Vec half = uu;
        if (!advance(half, t, 0.5 * h, v_next, depth + 1, nullptr)) return false;
        if (!advance(half, t + 0.5 * h, 0.5 * h, v_next, depth + 1, nullptr)) return false;
        uu = std::move(half);
        return true;
      }
      res.max_residual = std::max(res.max_residual, step.residual);
    } else {
      z = b;
    }
    uu = z - v_next;
    return true;
  };

  for (std::size_t j = 0; j < grid.steps(); ++j) {
    const double t = grid.time(j);
    const double h = grid.dt(j);
    const Vec v_next = v.value(j + 1);
    const Vec guess_vec = guess ? Vec(guess->value(j + 1)) : Vec();
    if (!advance(u, t, h, v_next, 0, guess ? &guess_vec : nullptr)) {
      throw NonconvergenceError("implicit step did not converge at t = " + std::to_string(t + h) + " after " +
                                    std::to_string(opt.max_halvings) + " step halvings (residual " +
                                    std::to_string(res.max_residual) + ")",
                                t + h, res.max_residual);
    }
    const Vec xj = u + v_next;
    if (v.has_jump(j + 1)) {
      x.set(j + 1, Vec(u + v.left_limit(j + 1)), xj);
    } else {
      x.set(j + 1, xj);
    }

    if (opt.check_bound && !f.is_zero()) {
      propagator(0, h).apply(free);
      const Vec y = free + v_next;
      const double denom = 1.0 - h * M;
      if (denom <= 0.0) {
        bound_integral = std::numeric_limits<double>::infinity();
      } else {
        bound_integral = (std::exp(alpha * h) * bound_integral + h * std::sqrt(metric.norm2(f.eval(t + h, y)))) / denom;
      }
      const double t1 = grid.time(j + 1);
      const double head = std::exp(std::max(alpha, 0.0) * t1) * x0_norm + bound_integral;
      const double bound = head + std::sqrt(metric.norm2(v_next));
      const double slack = 1e-9 * (1.0 + bound) + 10.0 * opt.tolerance * (1.0 + bound);
      const double xn = std::sqrt(metric.norm2(xj));
      res.max_bound_ratio = std::max(res.max_bound_ratio, bound > 0.0 ? xn / bound : 0.0);
      if (xn > bound + slack) res.bound_holds = false;
      if (v.has_jump(j + 1)) {
        const double bl = head + std::sqrt(metric.norm2(v.left_limit(j + 1)));
        if (std::sqrt(metric.norm2(x.left_limit(j + 1))) > bl + slack) res.bound_holds = false;
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Noise-driven increments.

/// dM_i from integrands frozen at the left end of each cell:
///   continuous: g(t_i, X_i) dW_i - dt int k(t_i, ., X_i) dnu (+ dt f(t_i, X_i) if `with_drift`)
///   jump:       sum over events in cell i of k(t_i, xi, X_i)
/// The [Z] increment is the mixed estimator |g|_HS^2 dt + sum |k(xi)|^2.
inline void cell_increment(const ModelSpec& model, const NoiseRealization& noise, std::size_t i,
                           const Eigen::Ref<const Vec>& x, bool with_drift, Eigen::Ref<Vec> cont, Eigen::Ref<Vec> jump,
                           double& qv) {
  const double t = noise.grid.time(i);
  const double dt = noise.grid.dt(i);
  const auto& c = model.coeffs;
  const Vec xs = x;
  cont.setZero();
  jump.setZero();
  qv = 0.0;
  if (with_drift && !c.f.is_zero()) cont += dt * c.f.eval(t, xs);
  if (!c.g.is_zero()) {
    const Mat g = c.g.eval(t, xs);
    cont += g * noise.dW.col(static_cast<Eigen::Index>(i));
    qv += hilbert_schmidt_norm2(g, model.metric) * dt;
  }
  if (!c.k.is_zero()) {
    if (c.k.is_separable()) {
      const Vec K = c.k.state_map(t, xs);
      cont -= dt * model.mark_factor_mean() * K;
      const double kk = model.metric.norm2(K);
      for (std::size_t e = noise.cell_begin[i]; e < noise.cell_begin[i + 1]; ++e) {
        const double phi = c.k.mark_factor(noise.events[e].mark);
        jump += phi * K;
        qv += phi * phi * kk;
      }
    } else {
      cont -= dt * model.compensator(t, xs);
      for (std::size_t e = noise.cell_begin[i]; e < noise.cell_begin[i + 1]; ++e) {
        const Vec kv = c.k.eval(t, noise.events[e].mark, xs);
        jump += kv;
        qv += model.metric.norm2(kv);
      }
    }
  }
}

/// Forcing of the stochastic terms with integrands taken from `x`.
inline SemimartingaleIncrements noise_increments(const ModelSpec& model, const NoiseRealization& noise,
                                                 const CadlagPath& x, bool with_drift) {
  SemimartingaleIncrements z(noise.grid, model.dim());
  for (std::size_t i = 0; i < noise.grid.steps(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    cell_increment(model, noise, i, x.value(i), with_drift, z.continuous.col(col), z.jump.col(col), z.qv[col]);
  }
  return z;
}

// ---------------------------------------------------------------------------
// Direct exponential Euler.

struct DirectResult {
  CadlagPath path;
  std::optional<SemimartingaleIncrements> increments;
};

/// X_{j+1} = S_dt (X_j + dt f(t_j, X_j) + g(t_j, X_j) dW_j + jumps - dt comp(X_j)).
inline DirectResult direct_solve(const ModelSpec& model, const NoiseRealization& noise, const Vec& x0,
                                 bool keep_increments = false) {
  const TimeGrid& grid = noise.grid;
  DirectResult res{CadlagPath(model.basis, grid), std::nullopt};
  if (keep_increments) res.increments.emplace(grid, model.dim());
  CadlagPath& x = res.path;
  Vec cur = x0;
  x.set(0, cur);
  const Propagator fixed = model.semigroup.propagator(grid.dt(0));
  Vec cont(cur.size()), jump(cur.size());
  for (std::size_t i = 0; i < grid.steps(); ++i) {
    const Propagator step = grid.is_uniform() ? fixed : model.semigroup.propagator(grid.dt(i));
    double qv = 0.0;
    cell_increment(model, noise, i, cur, true, cont, jump, qv);
    if (res.increments) {
      const auto col = static_cast<Eigen::Index>(i);
      res.increments->continuous.col(col) = cont;
      res.increments->jump.col(col) = jump;
      res.increments->qv[col] = qv;
    }
    Vec before = cur + cont;
    if (noise.events_in(i) == 0) {
      step.apply(before);
      cur = std::move(before);
      x.set(i + 1, cur);
    } else {
      Vec after = before + jump;
      step.apply(before);
      step.apply(after);
      cur = std::move(after);
      x.set(i + 1, before, cur);
    }
  }
  return res;
}

inline CadlagPath direct_solve(const ModelSpec& model, std::uint64_t seed, const TimeGrid& grid, std::uint64_t path = 0) {
  return direct_solve(model, model.noise(grid, seed, path), model.initial_state(seed, path)).path;
}

// ---------------------------------------------------------------------------
// Picard iteration.

struct PicardOptions {
  /// Differences e_0..e_{n_max} are computed (iterates X^0..X^{n_max+1}).
  std::size_t n_max = 9;
  /// Stop once e_n < tol.
  double tol = 0.0;
  /// Burkholder-Davis-Gundy constant for p = 1; enters predicted bounds only.
  double bdg_constant = 3.0;
  InnerSolverOptions inner;
  /// When false the trace is returned with `diverged` set instead.
  bool throw_on_divergence = true;
};

/// Pathwise record of one Picard run, in the rescaled (alpha = 0) frame.
struct PicardPathResult {
  CadlagPath path;                 // last iterate, original frame
  std::vector<double> sup_diff;    // sup_t |X^{n+1} - X^n|^2, n = 0..
  std::vector<double> sup_norm;    // sup_t |X^n|^2, n = 0..
  std::vector<double> sup_forcing; // sup_t |V^n|^2, n = 0..
  double x0_norm2 = 0.0;
  bool bound_holds = true;
  std::size_t halvings = 0;
};

namespace detail {

inline double sup_norm2(const CadlagPath& p, const WeightedInnerProduct& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    s = std::max(s, w.norm2(p.value(i)));
    if (p.has_jump(i)) s = std::max(s, w.norm2(p.left_limit(i)));
  }
  return s;
}

inline double sup_dist2(const CadlagPath& a, const CadlagPath& b, const WeightedInnerProduct& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s = std::max(s, w.norm2(a.value(i) - b.value(i)));
    if (a.has_jump(i) || b.has_jump(i)) s = std::max(s, w.norm2(a.left_limit(i) - b.left_limit(i)));
  }
  return s;
}

inline CadlagPath free_evolution(const SemigroupSpec& s, const SpectralVector& x0, const TimeGrid& grid) {
  CadlagPath p(x0.basis(), grid);
  Vec cur = x0.coeffs();
  p.set(0, cur);
  for (std::size_t j = 0; j < grid.steps(); ++j) {
    s.propagator(grid.dt(j)).apply(cur);
    p.set(j + 1, cur);
  }
  return p;
}

}  // namespace detail

/// One path of the Picard scheme on an already-rescaled model (alpha = 0 is
/// not required, but the constants of the trace assume it).  `alpha` maps the
/// returned path back to the original frame.
inline PicardPathResult picard_path(const ModelSpec& rescaled, const NoiseRealization& noise, const Vec& x0,
                                    const PicardOptions& opt, double alpha = 0.0) {
  const TimeGrid& grid = noise.grid;
  const SpectralVector x0v(rescaled.basis, x0);
  const auto& w = rescaled.metric;

  PicardPathResult res{detail::free_evolution(rescaled.semigroup, x0v, grid), {}, {}, {}};
  res.x0_norm2 = w.norm2(x0);
  CadlagPath prev = res.path;
  res.sup_norm.push_back(detail::sup_norm2(prev, w));
  res.sup_forcing.push_back(0.0);
  const SpectralVector zero(rescaled.basis);

  for (std::size_t n = 1; n <= opt.n_max + 1; ++n) {
    const SemimartingaleIncrements dm = noise_increments(rescaled, noise, prev, false);
    const CadlagPath vn = stochastic_convolution(rescaled.semigroup, dm, zero);
    MildSolveResult next =
        solve_deterministic_mild(rescaled.semigroup, rescaled.coeffs.f, w, x0v, vn, opt.inner, n > 1 ? &prev : nullptr);
    res.bound_holds = res.bound_holds && next.bound_holds;
    res.halvings += next.halvings;
    const double diff = detail::sup_dist2(next.path, prev, w);
    res.sup_diff.push_back(diff);
    res.sup_norm.push_back(detail::sup_norm2(next.path, w));
    res.sup_forcing.push_back(detail::sup_norm2(vn, w));
    prev = std::move(next.path);
    if (diff == 0.0) {
      // Fixed point reached exactly; later iterates repeat it.
      while (res.sup_diff.size() < opt.n_max + 1) {
        res.sup_diff.push_back(0.0);
        res.sup_norm.push_back(res.sup_norm.back());
        res.sup_forcing.push_back(res.sup_forcing.back());
      }
      break;
    }
  }
  res.path = unscale(prev, alpha);
  return res;
}

struct PicardTrace {
  std::size_t iterations = 0;      // number of e_n entries kept
  std::vector<SampleStats> e;      // E sup |X^{n+1} - X^n|^2
  std::vector<double> predicted;   // C0 C1^n T^n / n!
  std::vector<SampleStats> x_moment;   // E sup |X^n|^2
  std::vector<SampleStats> v_moment;   // E sup |V^n|^2
  std::vector<SampleStats> moment_gap; // paired E[sup|X^n|^2 - bound_n]
  std::vector<double> moment_bound;    // bound evaluated at the means
  SampleStats x0_moment;
  double C0 = 0.0, C1 = 0.0, M = 0.0, C = 0.0, D = 0.0, T = 0.0;
  double bdg_constant = 3.0;
  bool bound_holds = true;
  bool converged = false;
  bool diverged = false;
  std::size_t divergence_index = 0;
  std::size_t halvings = 0;
};

struct PicardCampaignResult {
  PicardTrace trace;
  std::vector<CadlagPath> paths;  // last iterates of the first `keep_paths` paths
};

/// Builds the trace from per-path records and applies the divergence rule
/// (three consecutive non-decreasing nonzero e_n).
inline PicardTrace reduce_picard(const std::vector<PicardPathResult>& runs, const ModelSpec& rescaled,
                                 const PicardOptions& opt) {
  PicardTrace tr;
  tr.M = rescaled.coeffs.f.M;
  tr.C = rescaled.coeffs.C();
  tr.D = rescaled.coeffs.D();
  tr.T = rescaled.horizon;
  tr.bdg_constant = opt.bdg_constant;
  const double T = tr.T;
  tr.C1 = 2.0 * tr.C * (1.0 + 2.0 * opt.bdg_constant * opt.bdg_constant) * std::exp(4.0 * tr.M * T);
  const double a = 3.0 * tr.D * T * T * std::exp(2.0 * tr.M * T);
  const double kfac = 3.0 + 6.0 * tr.D * T * T * std::exp(2.0 * tr.M * T);

  const std::size_t paths = runs.size();
  std::vector<double> col(paths);
  for (std::size_t p = 0; p < paths; ++p) col[p] = runs[p].x0_norm2;
  tr.x0_moment = sample_stats(col);
  for (const auto& r : runs) {
    tr.bound_holds = tr.bound_holds && r.bound_holds;
    tr.halvings += r.halvings;
  }

  const std::size_t diffs = runs.empty() ? 0 : runs.front().sup_diff.size();
  for (std::size_t n = 0; n < diffs; ++n) {
    for (std::size_t p = 0; p < paths; ++p) col[p] = runs[p].sup_diff[n];
    tr.e.push_back(sample_stats(col));
  }
  const std::size_t iterates = runs.empty() ? 0 : runs.front().sup_norm.size();
  for (std::size_t n = 0; n < iterates; ++n) {
    for (std::size_t p = 0; p < paths; ++p) col[p] = runs[p].sup_norm[n];
    tr.x_moment.push_back(sample_stats(col));
    for (std::size_t p = 0; p < paths; ++p) col[p] = runs[p].sup_forcing[n];
    tr.v_moment.push_back(sample_stats(col));
    for (std::size_t p = 0; p < paths; ++p) {
      col[p] = runs[p].sup_norm[n] - (a + kfac * (runs[p].x0_norm2 + runs[p].sup_forcing[n]));
    }
    tr.moment_gap.push_back(sample_stats(col));
    tr.moment_bound.push_back(a + kfac * (tr.x0_moment.mean + tr.v_moment.back().mean));
  }

  tr.C0 = tr.e.empty() ? 0.0 : tr.e.front().mean;
  double term = tr.C0;
  for (std::size_t n = 0; n < tr.e.size(); ++n) {
    if (n > 0) term *= tr.C1 * T / static_cast<double>(n);
    tr.predicted.push_back(term);
  }

  // Stop at the first e_n below tolerance.
  tr.iterations = tr.e.size();
  for (std::size_t n = 0; n < tr.e.size(); ++n) {
    if (tr.e[n].mean < opt.tol || tr.e[n].mean == 0.0) {
      tr.iterations = n + 1;
      tr.converged = true;
      break;
    }
  }
  std::size_t rising = 0;
  for (std::size_t n = 1; n < tr.iterations; ++n) {
    rising = (tr.e[n].mean > 0.0 && tr.e[n].mean >= tr.e[n - 1].mean) ? rising + 1 : 0;
    if (rising >= 3) {
      tr.diverged = true;
      tr.divergence_index = n;
      break;
    }
  }
  if (tr.diverged && opt.throw_on_divergence) {
    throw DivergenceError("Picard differences did not decrease for three consecutive iterations (n = " +
                          std::to_string(tr.divergence_index) + ", e_n = " +
                          std::to_string(tr.e[tr.divergence_index].mean) + ")");
  }
  return tr;
}

/// Monte Carlo Picard run over `paths` independent noise realizations with
/// common random numbers across iterations.
inline PicardCampaignResult picard_campaign(const ModelSpec& model, const TimeGrid& grid, std::uint64_t seed,
                                            std::size_t paths, const PicardOptions& opt, unsigned threads = 1,
                                            std::size_t keep_paths = 1) {
  if (paths == 0) throw DomainError("Picard campaign needs at least one path");
  const ModelSpec rescaled = rescale_to_contraction(model);
  std::vector<PicardPathResult> runs;
  runs.reserve(paths);
  std::vector<std::optional<PicardPathResult>> slots(paths);
  parallel_for(paths, threads, [&](std::size_t p) {
    const NoiseRealization noise = model.noise(grid, seed, p);
    slots[p] = picard_path(rescaled, noise, model.initial_state(seed, p), opt, model.alpha());
  });
  PicardCampaignResult out;
  for (std::size_t p = 0; p < paths; ++p) {
    if (p < keep_paths) out.paths.push_back(slots[p]->path);
    runs.push_back(std::move(*slots[p]));
  }
  out.trace = reduce_picard(runs, rescaled, opt);
  return out;
}

/// Single-path Picard solve (path index 0 of `seed`).
inline std::pair<CadlagPath, PicardTrace> picard_solve(const ModelSpec& model, std::uint64_t seed, const TimeGrid& grid,
                                                       std::size_t n_max, double tol, InnerSolverOptions inner = {}) {
  PicardOptions opt;
  opt.n_max = n_max;
  opt.tol = tol;
  opt.inner = inner;
  auto r = picard_campaign(model, grid, seed, 1, opt);
  return {std::move(r.paths.front()), std::move(r.trace)};
}

}  // namespace spde
