// SPDX-License-Identifier: Apache-2.0
//
// Samplers for truncated cylindrical Wiener increments and Poisson random
// measures with intensity dt nu(dxi), plus the compensated jump integral.
// Marks live in E = R.  Every sampler is a pure function of (spec, seed).
#pragma once

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "spde/errors.hpp"
#include "spde/path.hpp"
#include "spde/rng.hpp"
#include "spde/state_space.hpp"

namespace spde {

// ---------------------------------------------------------------------------
// Mark laws (the normalized measure nu / lambda_nu)

struct NormalMarks {
  double mean = 0.0;
  double sd = 1.0;
};

struct UniformMarks {
  double lo = 0.0;
  double hi = 1.0;
};

struct FixedMark {
  double value = 1.0;
};

/// Symmetric |xi|^{-1-beta} law restricted to eps <= |xi| <= cutoff.
struct PowerLawMarks {
  double beta = 0.5;
  double eps = 1e-2;
  double cutoff = 1.0;
};

using MarkLaw = std::variant<NormalMarks, UniformMarks, FixedMark, PowerLawMarks>;

namespace detail {

// |xi| for the power law from a uniform u in (0,1) by inverting its CDF.
inline double power_law_magnitude(const PowerLawMarks& p, double u) {
  const double a = std::pow(p.eps, -p.beta);
  const double b = std::pow(p.cutoff, -p.beta);
  return std::pow(a - u * (a - b), -1.0 / p.beta);
}

}  // namespace detail

inline double mark_quantile(const MarkLaw& law, double u) {
  return std::visit(
      [u](const auto& m) -> double {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, NormalMarks>) {
          if (m.sd == 0.0) return m.mean;
          return boost::math::quantile(boost::math::normal(m.mean, m.sd), u);
        } else if constexpr (std::is_same_v<M, UniformMarks>) {
          return m.lo + u * (m.hi - m.lo);
        } else if constexpr (std::is_same_v<M, FixedMark>) {
          return m.value;
        } else {
          // Lower half of (0,1) -> negative marks, upper half -> positive.
          if (u < 0.5) return -detail::power_law_magnitude(m, 1.0 - 2.0 * u);
          return detail::power_law_magnitude(m, 2.0 * u - 1.0);
        }
      },
      law);
}

inline double sample_mark(const MarkLaw& law, Engine& rng) {
  if (const auto* n = std::get_if<NormalMarks>(&law)) {
    return std::normal_distribution<double>(n->mean, n->sd)(rng);
  }
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u <= 0.0) u = 0x1p-60;
  return mark_quantile(law, u);
}

/// Exact E[xi] and E[xi^2] under the mark law.
inline double mark_mean(const MarkLaw& law) {
  return std::visit(
      [](const auto& m) -> double {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, NormalMarks>) return m.mean;
        else if constexpr (std::is_same_v<M, UniformMarks>) return 0.5 * (m.lo + m.hi);
        else if constexpr (std::is_same_v<M, FixedMark>) return m.value;
        else return 0.0;
      },
      law);
}

inline double mark_second_moment(const MarkLaw& law) {
  return std::visit(
      [](const auto& m) -> double {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, NormalMarks>) return m.mean * m.mean + m.sd * m.sd;
        else if constexpr (std::is_same_v<M, UniformMarks>) return (m.lo * m.lo + m.lo * m.hi + m.hi * m.hi) / 3.0;
        else if constexpr (std::is_same_v<M, FixedMark>) return m.value * m.value;
        else {
          // E xi^2 = int x^{1-beta} / int x^{-1-beta} over [eps, cutoff].
          const double num = (std::pow(m.cutoff, 2.0 - m.beta) - std::pow(m.eps, 2.0 - m.beta)) / (2.0 - m.beta);
          const double den = (std::pow(m.eps, -m.beta) - std::pow(m.cutoff, -m.beta)) / m.beta;
          return num / den;
        }
      },
      law);
}

// ---------------------------------------------------------------------------
// Mark space E with finite intensity measure nu = lambda_nu * law.

class MarkSpaceSpec {
 public:
  static constexpr std::size_t default_quadrature_nodes = 10000;

  MarkSpaceSpec() : MarkSpaceSpec(0.0, FixedMark{0.0}) {}

  /// nu-integrals are evaluated by stratified Monte Carlo quadrature on
  /// `nodes` marks drawn once per spec from a fixed stream and cached.
  MarkSpaceSpec(double total_mass, MarkLaw law, std::size_t nodes = default_quadrature_nodes,
                std::uint64_t quadrature_seed = 0x5EEDULL)
      : total_mass_(total_mass), law_(std::move(law)) {
    if (!(total_mass_ >= 0.0) || !std::isfinite(total_mass_)) {
      throw DomainError("intensity total mass must be finite and nonnegative");
    }
    if (nodes == 0) throw DomainError("mark quadrature needs at least one node");
    auto cache = std::make_shared<std::vector<double>>(nodes);
    Engine rng = make_engine(quadrature_seed, 0, Channel::quadrature);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t i = 0; i < nodes; ++i) {
      double u = (static_cast<double>(i) + unif(rng)) / static_cast<double>(nodes);
      u = std::clamp(u, 1e-300, 1.0 - 1e-16);
      (*cache)[i] = mark_quantile(law_, u);
    }
    nodes_ = std::move(cache);
  }

  /// Symmetric power-law Levy density c |xi|^{-1-beta} with the jumps below
  /// eps removed; the removed part's variance is kept for reporting.
  static MarkSpaceSpec truncated_power_law(double c, double beta, double eps, double cutoff,
                                           std::size_t nodes = default_quadrature_nodes) {
    if (!(beta > 0.0 && beta < 2.0) || !(eps > 0.0) || !(cutoff > eps) || !(c > 0.0)) {
      throw DomainError("invalid power-law Levy measure parameters");
    }
    const double mass = 2.0 * c * (std::pow(eps, -beta) - std::pow(cutoff, -beta)) / beta;
    MarkSpaceSpec spec(mass, PowerLawMarks{beta, eps, cutoff}, nodes);
    spec.discarded_variance_ = 2.0 * c * std::pow(eps, 2.0 - beta) / (2.0 - beta);
    return spec;
  }

  double total_mass() const noexcept { return total_mass_; }
  const MarkLaw& law() const noexcept { return law_; }
  double discarded_variance() const noexcept { return discarded_variance_; }
  std::size_t quadrature_nodes() const noexcept { return nodes_->size(); }

  /// int xi^2 nu(dxi), exact from the law.
  double second_moment() const { return total_mass_ * mark_second_moment(law_); }
  double first_moment() const { return total_mass_ * mark_mean(law_); }

  /// int h(xi) nu(dxi) by the cached quadrature rule.
  template <class H>
  auto integrate(H&& h) const {
    const double w = total_mass_ / static_cast<double>(nodes_->size());
    using R = std::decay_t<decltype(h((*nodes_)[0]))>;
    if constexpr (std::is_arithmetic_v<R>) {
      double s = 0.0;
      for (double xi : *nodes_) s += h(xi);
      return w * s;
    } else {
      Vec s = h((*nodes_)[0]);
      for (std::size_t i = 1; i < nodes_->size(); ++i) s += h((*nodes_)[i]);
      return Vec(w * s);
    }
  }

 private:
  double total_mass_ = 0.0;
  MarkLaw law_;
  std::shared_ptr<const std::vector<double>> nodes_;
  double discarded_variance_ = 0.0;
};

struct JumpEvent {
  double time = 0.0;
  double mark = 0.0;
};

/// Truncated cylindrical Wiener process: `modes` independent Brownian motions.
struct WienerSpec {
  std::size_t modes = 1;
  TimeGrid grid;
};

/// Real square-integrable Levy process Z_t = drift t + sqrt(var) B_t + compensated jumps.
struct LevyPathSpec {
  double drift = 0.0;
  double gaussian_variance = 0.0;
  MarkSpaceSpec jumps;

  double second_moment() const { return drift * drift + gaussian_variance + jumps.second_moment(); }
};

/// modes x steps table of N(0, dt_i) increments.
inline Mat sample_wiener_increments(const WienerSpec& spec, std::uint64_t seed) {
  if (spec.grid.steps() == 0) throw DomainError("Wiener increments need a grid with at least one step");
  if (spec.modes == 0) throw DomainError("Wiener process needs at least one mode");
  Engine rng(splitmix64(seed ^ static_cast<std::uint64_t>(Channel::wiener)));
  std::normal_distribution<double> gauss;
  Mat table(static_cast<Eigen::Index>(spec.modes), static_cast<Eigen::Index>(spec.grid.steps()));
  for (Eigen::Index i = 0; i < table.cols(); ++i) {
    const double sd = std::sqrt(spec.grid.dt(static_cast<std::size_t>(i)));
    for (Eigen::Index m = 0; m < table.rows(); ++m) table(m, i) = sd * gauss(rng);
  }
  return table;
}

/// Realization of N on [0, T]: Poisson(lambda T) events, uniform sorted times,
/// i.i.d. marks.
inline std::vector<JumpEvent> sample_prm(const MarkSpaceSpec& spec, double horizon, std::uint64_t seed) {
  if (!(horizon > 0.0)) throw DomainError("Poisson random measure needs a positive horizon");
  std::vector<JumpEvent> events;
  if (spec.total_mass() == 0.0) return events;
  Engine rng(splitmix64(seed ^ static_cast<std::uint64_t>(Channel::jumps)));
  const auto count = std::poisson_distribution<long>(spec.total_mass() * horizon)(rng);
  std::uniform_real_distribution<double> unif(0.0, horizon);
  events.resize(static_cast<std::size_t>(count));
  for (auto& e : events) e.time = unif(rng);
  std::sort(events.begin(), events.end(), [](const JumpEvent& a, const JumpEvent& b) { return a.time < b.time; });
  for (auto& e : events) e.mark = sample_mark(spec.law(), rng);
  return events;
}

/// Start index of each cell's events (size steps+1) for time-sorted events.
inline std::vector<std::size_t> bin_events(const std::vector<JumpEvent>& events, const TimeGrid& grid) {
  std::vector<std::size_t> begin(grid.steps() + 1, events.size());
  std::size_t e = 0;
  for (std::size_t i = 0; i < grid.steps(); ++i) {
    while (e < events.size() && grid.cell_of(events[e].time) < i) ++e;
    begin[i] = e;
  }
  return begin;
}

/// Per-cell increments of int int h dN~: realized jumps at the cell's right
/// endpoint and -dt * int h dnu as the continuous part.  [Z] collects the
/// squared size of each realized jump.
template <class H>
SemimartingaleIncrements compensate(const std::vector<JumpEvent>& events, H&& h, const MarkSpaceSpec& spec,
                                    const TimeGrid& grid, const WeightedInnerProduct* metric = nullptr) {
  const Vec mean = spec.integrate(h);
  SemimartingaleIncrements z(grid, static_cast<std::size_t>(mean.size()));
  for (std::size_t i = 0; i < grid.steps(); ++i) z.continuous.col(static_cast<Eigen::Index>(i)) = -grid.dt(i) * mean;
  for (const auto& e : events) {
    const auto i = static_cast<Eigen::Index>(grid.cell_of(e.time));
    const Vec hv = h(e.mark);
    z.jump.col(i) += hv;
    z.qv[i] += metric ? metric->norm2(hv) : hv.squaredNorm();
  }
  return z;
}

/// One path's frozen noise: Wiener table plus binned jump events.
struct NoiseRealization {
  TimeGrid grid;
  Mat dW;  // modes x steps (0 rows when there is no Wiener channel)
  std::vector<JumpEvent> events;
  std::vector<std::size_t> cell_begin;

  std::size_t events_in(std::size_t cell) const { return cell_begin[cell + 1] - cell_begin[cell]; }

  /// Same realization on a grid `factor` times coarser.
  NoiseRealization coarsen(std::size_t factor) const {
    NoiseRealization out;
    out.grid = grid.coarsen(factor);
    out.dW = Mat::Zero(dW.rows(), static_cast<Eigen::Index>(out.grid.steps()));
    for (Eigen::Index i = 0; i < out.dW.cols(); ++i) {
      out.dW.col(i) = dW.middleCols(i * static_cast<Eigen::Index>(factor), static_cast<Eigen::Index>(factor)).rowwise().sum();
    }
    out.events = events;
    out.cell_begin = bin_events(out.events, out.grid);
    return out;
  }
};

/// Noise of path `path` under master seed `seed`; identical for every solver.
inline NoiseRealization realize_noise(std::size_t wiener_modes, const MarkSpaceSpec& marks, const TimeGrid& grid,
                                      std::uint64_t seed, std::uint64_t path) {
  NoiseRealization n;
  n.grid = grid;
  if (wiener_modes > 0) {
    n.dW = sample_wiener_increments({wiener_modes, grid}, stream_seed(seed, path, Channel::wiener));
  } else {
    n.dW = Mat(0, static_cast<Eigen::Index>(grid.steps()));
  }
  n.events = sample_prm(marks, grid.horizon(), stream_seed(seed, path, Channel::jumps));
  n.cell_begin = bin_events(n.events, grid);
  return n;
}

}  // namespace spde
