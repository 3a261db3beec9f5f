// SPDX-License-Identifier: Apache-2.0
//
// Closed-form C0 semigroups on the truncated space.
//
//   Diagonal    S_t = diag(exp(mu_k t))                (heat-type generators)
//   BlockWave   per mode the harmonic-oscillator rotation of u'' = -lambda u
//   DelayShift  R x L^2((-1,0]) delay semigroup of x' = int_{-1}^0 x(t+s) ds
//
// Every family may carry an exponential rate shift, S_t -> exp(shift t) S_t,
// which is how the rescaling to a contraction is represented.
#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <variant>

#include "spde/errors.hpp"
#include "spde/rng.hpp"
#include "spde/state_space.hpp"

namespace spde {

struct Diagonal {
  Vec eigenvalues;
};

/// Coefficient layout [u_1..u_n, v_1..v_n]; lambda_k > 0 are -Laplacian eigenvalues.
struct BlockWave {
  Vec laplacian_eigenvalues;
};

/// History held as `cells` piecewise-constant averages on (-1,0]; the semigroup
/// is only defined at multiples of the cell width 1/cells.
struct DelayShift {
  std::size_t cells = 0;
  double cell_width() const { return 1.0 / static_cast<double>(cells); }
};

using SemigroupKind = std::variant<Diagonal, BlockWave, DelayShift>;

/// Precomputed action of S_t for one fixed t.
class Propagator {
 public:
  void apply(Vec& x) const {
    switch (family_) {
      case Family::diagonal: x.array() *= factors_.array(); break;
      case Family::wave: apply_wave(x); break;
      case Family::delay: apply_delay(x); break;
    }
    if (scale_ != 1.0) x *= scale_;
  }

  Vec operator()(Vec x) const {
    apply(x);
    return x;
  }

 private:
  friend class SemigroupSpec;

  enum class Family { diagonal, wave, delay };

  void apply_wave(Vec& x) const {
    const Eigen::Index n = factors_.size();
    for (Eigen::Index k = 0; k < n; ++k) {
      const double u = x[k];
      const double v = x[n + k];
      x[k] = cos_[k] * u + sinc_[k] * v;
      x[n + k] = -msin_[k] * u + cos_[k] * v;
    }
  }

  void apply_delay(Vec& x) const {
    const double width = 1.0 / static_cast<double>(cells_);
    const Eigen::Index cells = cells_;
    for (std::size_t step = 0; step < shifts_; ++step) {
      // Within one cell the oldest history value v0 is constant, so
      // (u - v0)'' = u - v0 with u' = int of the window: closed form.
      const double v0 = x[1];
      const double a = x[0] - v0;
      const double b = width * x.segment(1, cells).sum();
      const double head = v0 + a * cosh_ + b * sinh_;
      const double average = v0 + (a * sinh_ + b * (cosh_ - 1.0)) / width;
      for (Eigen::Index i = 1; i < cells; ++i) x[i] = x[i + 1];
      x[cells] = average;
      x[0] = head;
    }
  }

  Family family_ = Family::diagonal;
  Eigen::Index cells_ = 0;
  double scale_ = 1.0;
  Vec factors_, cos_, sinc_, msin_;
  std::size_t shifts_ = 0;
  double cosh_ = 1.0, sinh_ = 0.0;
};

class SemigroupSpec {
 public:
  SemigroupSpec(SemigroupKind kind, double alpha, double rate_shift = 0.0)
      : kind_(std::move(kind)), alpha_(alpha), rate_shift_(rate_shift) {
    if (const auto* w = std::get_if<BlockWave>(&kind_)) {
      for (Eigen::Index k = 0; k < w->laplacian_eigenvalues.size(); ++k) {
        if (!(w->laplacian_eigenvalues[k] > 0.0)) throw DomainError("wave eigenvalues must be positive");
      }
    }
    if (const auto* d = std::get_if<DelayShift>(&kind_); d && d->cells == 0) {
      throw DomainError("delay history needs at least one cell");
    }
  }

  const SemigroupKind& kind() const noexcept { return kind_; }
  double alpha() const noexcept { return alpha_; }
  double rate_shift() const noexcept { return rate_shift_; }

  std::size_t dim() const {
    return std::visit(
        [](const auto& k) -> std::size_t {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Diagonal>) return static_cast<std::size_t>(k.eigenvalues.size());
          else if constexpr (std::is_same_v<K, BlockWave>) return 2 * static_cast<std::size_t>(k.laplacian_eigenvalues.size());
          else return k.cells + 1;
        },
        kind_);
  }

  /// exp(shift t) S_t with alpha moved by the same amount.
  SemigroupSpec shifted(double shift) const { return SemigroupSpec(kind_, alpha_ + shift, rate_shift_ + shift); }

  /// Smallest time step the family supports (0 when any t is allowed).
  double time_quantum() const {
    if (const auto* d = std::get_if<DelayShift>(&kind_)) return d->cell_width();
    return 0.0;
  }

  Propagator propagator(double t) const {
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("semigroup time must be nonnegative");
    Propagator p;
    p.scale_ = std::exp(rate_shift_ * t);
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Diagonal>) {
            p.family_ = Propagator::Family::diagonal;
            p.factors_ = (k.eigenvalues.array() * t).exp().matrix();
          } else if constexpr (std::is_same_v<K, BlockWave>) {
            p.family_ = Propagator::Family::wave;
            const Vec omega = k.laplacian_eigenvalues.array().sqrt().matrix();
            p.factors_ = omega;
            p.cos_ = (omega.array() * t).cos().matrix();
            p.sinc_ = ((omega.array() * t).sin() / omega.array()).matrix();
            p.msin_ = ((omega.array() * t).sin() * omega.array()).matrix();
          } else {
            const double width = k.cell_width();
            const double m = std::round(t / width);
            if (std::abs(t - m * width) > 1e-9 * std::max(1.0, t)) {
              throw DomainError("delay semigroup time " + std::to_string(t) +
                                " is not a multiple of the history cell width");
            }
            p.family_ = Propagator::Family::delay;
            p.cells_ = static_cast<Eigen::Index>(k.cells);
            p.shifts_ = static_cast<std::size_t>(m);
            p.cosh_ = std::cosh(width);
            p.sinh_ = std::sinh(width);
          }
        },
        kind_);
    return p;
  }

  Vec act(double t, Vec x) const {
    check_dim(x.size());
    propagator(t).apply(x);
    return x;
  }

  SpectralVector act(double t, const SpectralVector& x) const {
    return SpectralVector(x.basis(), act(t, x.coeffs()));
  }

  /// Generator A on (truncated) domain vectors.  For the delay family this is
  /// the upwind difference of the history with the head as boundary value.
  Vec generator(const Vec& x) const {
    check_dim(x.size());
    Vec out(x.size());
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Diagonal>) {
            out = (k.eigenvalues.array() * x.array()).matrix();
          } else if constexpr (std::is_same_v<K, BlockWave>) {
            const Eigen::Index n = k.laplacian_eigenvalues.size();
            out.head(n) = x.tail(n);
            out.tail(n) = -(k.laplacian_eigenvalues.array() * x.head(n).array()).matrix();
          } else {
            const double width = k.cell_width();
            const Eigen::Index cells = static_cast<Eigen::Index>(k.cells);
            out[0] = width * x.segment(1, cells).sum();
            for (Eigen::Index i = 1; i <= cells; ++i) {
              const double next = (i == cells) ? x[0] : x[i + 1];
              out[i] = (next - x[i]) / width;
            }
          }
        },
        kind_);
    out += rate_shift_ * x;
    return out;
  }

 private:
  void check_dim(Eigen::Index n) const {
    if (static_cast<std::size_t>(n) != dim()) {
      throw DimensionError("vector of size " + std::to_string(n) + " passed to semigroup of dimension " +
                           std::to_string(dim()));
    }
  }

  SemigroupKind kind_;
  double alpha_;
  double rate_shift_;
};

struct ContractionReport {
  double max_amplification = 0.0;  // max ||S_t x|| / ||x||
  double max_excess = 0.0;         // max ||S_t x|| / (exp(alpha t) ||x||)
  bool violation = false;
};

/// Samples random (t, x) and compares ||S_t x|| against exp(alpha t) ||x||.
/// Coordinate directions are always included among the samples.
inline ContractionReport check_contraction(const SemigroupSpec& s, const WeightedInnerProduct& metric,
                                           std::size_t samples, double t_max, std::uint64_t seed = 7) {
  if (samples == 0) throw DomainError("check_contraction needs at least one sample");
  if (metric.dim() != s.dim()) throw DimensionError("metric does not match semigroup dimension");
  Engine rng(splitmix64(seed));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss;
  const double quantum = s.time_quantum();
  const auto n = static_cast<Eigen::Index>(s.dim());
  ContractionReport report;
  for (std::size_t i = 0; i < samples; ++i) {
    double t = unif(rng) * t_max;
    if (quantum > 0.0) t = std::floor(t / quantum) * quantum;
    Vec x(n);
    if (i < static_cast<std::size_t>(n)) {
      x.setZero();
      x[static_cast<Eigen::Index>(i)] = 1.0;
    } else {
      for (Eigen::Index k = 0; k < n; ++k) x[k] = gauss(rng);
    }
    const double before = std::sqrt(metric.norm2(x));
    if (before == 0.0) continue;
    const double after = std::sqrt(metric.norm2(s.act(t, x)));
    const double amp = after / before;
    const double excess = amp / std::exp(s.alpha() * t);
    report.max_amplification = std::max(report.max_amplification, amp);
    report.max_excess = std::max(report.max_excess, excess);
    if (excess > 1.0 + 1e-9) report.violation = true;
  }
  return report;
}

}  // namespace spde
