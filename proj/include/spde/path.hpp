// SPDX-License-Identifier: Apache-2.0
//
// Time grids, right-continuous paths with left limits, and per-cell
// semimartingale increments.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "spde/errors.hpp"
#include "spde/state_space.hpp"

namespace spde {

/// Strictly increasing times 0 = t_0 < ... < t_m = T.
class TimeGrid {
 public:
  TimeGrid() = default;
  explicit TimeGrid(std::vector<double> times) : times_(std::move(times)) {
    if (times_.size() < 2) throw DomainError("time grid needs at least one step");
    if (times_.front() != 0.0) throw DomainError("time grid must start at 0");
    for (std::size_t i = 1; i < times_.size(); ++i) {
      if (!(times_[i] > times_[i - 1])) throw DomainError("time grid must be strictly increasing");
    }
    uniform_ = false;
  }

  static TimeGrid uniform(double horizon, std::size_t steps) {
    if (!(horizon > 0.0)) throw DomainError("horizon must be positive");
    if (steps == 0) throw DomainError("time grid needs at least one step");
    TimeGrid g;
    g.times_.resize(steps + 1);
    const double dt = horizon / static_cast<double>(steps);
    for (std::size_t i = 0; i <= steps; ++i) g.times_[i] = dt * static_cast<double>(i);
    g.times_.back() = horizon;
    g.uniform_ = true;
    return g;
  }

  /// Uniform grid with step as close to `dt` as divides the horizon.
  static TimeGrid with_step(double horizon, double dt) {
    if (!(dt > 0.0)) throw DomainError("time step must be positive");
    const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
    return uniform(horizon, std::max<std::size_t>(steps, 1));
  }

  std::size_t steps() const noexcept { return times_.empty() ? 0 : times_.size() - 1; }
  double time(std::size_t i) const { return times_.at(i); }
  double dt(std::size_t i) const { return times_.at(i + 1) - times_.at(i); }
  double horizon() const { return times_.back(); }
  double max_step() const {
    double m = 0.0;
    for (std::size_t i = 0; i + 1 < times_.size(); ++i) m = std::max(m, dt(i));
    return m;
  }
  bool is_uniform() const noexcept { return uniform_; }
  const std::vector<double>& times() const noexcept { return times_; }

  /// Cell i with t_i < tau <= t_{i+1}; tau = 0 maps to cell 0.
  std::size_t cell_of(double tau) const {
    if (tau < 0.0 || tau > horizon() * (1.0 + 1e-15)) throw DomainError("time outside the grid");
    auto it = std::lower_bound(times_.begin() + 1, times_.end(), tau);
    if (it == times_.end()) return steps() - 1;
    return static_cast<std::size_t>(it - times_.begin()) - 1;
  }

  /// Every `factor`-th point; requires steps() divisible by factor.
  TimeGrid coarsen(std::size_t factor) const {
    if (factor == 0 || steps() % factor != 0) throw DomainError("grid cannot be coarsened by this factor");
    std::vector<double> t;
    for (std::size_t i = 0; i < times_.size(); i += factor) t.push_back(times_[i]);
    TimeGrid g;
    g.times_ = std::move(t);
    g.uniform_ = uniform_;
    return g;
  }

  bool operator==(const TimeGrid& o) const { return times_ == o.times_; }

 private:
  std::vector<double> times_;
  bool uniform_ = false;
};

/// Values X(t_i) (right limits) on a grid, with stored pre-jump values where
/// the path jumps.  Between grid points the path is read as a right-continuous
/// step function.
class CadlagPath {
 public:
  CadlagPath(BasisPtr basis, TimeGrid grid)
      : basis_(std::move(basis)),
        grid_(std::move(grid)),
        values_(Mat::Zero(static_cast<Eigen::Index>(basis_->dim()), static_cast<Eigen::Index>(grid_.times().size()))),
        left_(values_),
        jumps_(grid_.times().size(), false) {}

  const BasisPtr& basis() const noexcept { return basis_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return jumps_.size(); }
  std::size_t dim() const noexcept { return basis_->dim(); }

  auto value(std::size_t i) const { return values_.col(static_cast<Eigen::Index>(i)); }
  auto left_limit(std::size_t i) const {
    return jumps_[i] ? left_.col(static_cast<Eigen::Index>(i)) : values_.col(static_cast<Eigen::Index>(i));
  }
  bool has_jump(std::size_t i) const { return jumps_.at(i); }

  /// Sets a continuity point.
  template <class V>
  void set(std::size_t i, const Eigen::MatrixBase<V>& v) {
    values_.col(static_cast<Eigen::Index>(i)) = v;
    jumps_[i] = false;
  }
  /// Sets a point where the path jumps from `before` to `after`.
  template <class A, class B>
  void set(std::size_t i, const Eigen::MatrixBase<A>& before, const Eigen::MatrixBase<B>& after) {
    values_.col(static_cast<Eigen::Index>(i)) = after;
    left_.col(static_cast<Eigen::Index>(i)) = before;
    jumps_[i] = true;
  }

  SpectralVector value_vector(std::size_t i) const { return SpectralVector(basis_, Vec(value(i))); }

  /// Right-continuous step-function value at arbitrary t in [0, T].
  SpectralVector at(double t) const { return value_vector(index_at(t)); }

  /// Left limit X(t-): the stored pre-jump value at a jump point, otherwise the
  /// value at the previous grid point carried forward.
  SpectralVector left_limit_at(double t) const {
    if (t <= 0.0) return value_vector(0);
    const std::size_t i = index_at(t);
    if (grid_.time(i) == t) {
      if (jumps_[i]) return SpectralVector(basis_, Vec(left_.col(static_cast<Eigen::Index>(i))));
      return value_vector(i - 1);
    }
    return value_vector(i);
  }

  const Mat& values() const noexcept { return values_; }

 private:
  std::size_t index_at(double t) const {
    const auto& ts = grid_.times();
    if (t < 0.0 || t > ts.back()) throw DomainError("time outside path grid");
    auto it = std::upper_bound(ts.begin(), ts.end(), t);
    return static_cast<std::size_t>(it - ts.begin()) - 1;
  }

  BasisPtr basis_;
  TimeGrid grid_;
  Mat values_;
  Mat left_;
  std::vector<bool> jumps_;
};

/// Per-cell decomposition dZ = (drift dt + Wiener part - compensator) + jumps,
/// with the quadratic-variation increment of each cell.
struct SemimartingaleIncrements {
  SemimartingaleIncrements(TimeGrid g, std::size_t dim)
      : grid(std::move(g)),
        continuous(Mat::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(grid.steps()))),
        jump(continuous),
        qv(Vec::Zero(static_cast<Eigen::Index>(grid.steps()))) {}

  std::size_t dim() const noexcept { return static_cast<std::size_t>(continuous.rows()); }
  std::size_t cells() const noexcept { return static_cast<std::size_t>(continuous.cols()); }
  Vec total(std::size_t i) const { return continuous.col(static_cast<Eigen::Index>(i)) + jump.col(static_cast<Eigen::Index>(i)); }

  TimeGrid grid;
  Mat continuous;  // dim x cells
  Mat jump;        // dim x cells, executed at the cell's right endpoint
  Vec qv;          // [Z] increment per cell
};

}  // namespace spde
