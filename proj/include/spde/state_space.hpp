// SPDX-License-Identifier: Apache-2.0
//
// Finite truncation of the state space H: mode bookkeeping, coefficient
// vectors and (weighted) inner products.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "spde/errors.hpp"

namespace spde {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Contiguous run of coefficients belonging to one factor of a product space.
struct Block {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Retained modes of the truncated space.  Product spaces are flattened into
/// one coefficient sequence and described by labeled blocks.
class Basis {
 public:
  Basis(std::vector<std::string> labels, std::vector<Block> blocks = {})
      : labels_(std::move(labels)), blocks_(std::move(blocks)) {
    if (labels_.empty()) throw DomainError("basis must retain at least one mode");
    std::unordered_set<std::string> seen;
    for (const auto& l : labels_) {
      if (!seen.insert(l).second) throw DomainError("duplicate basis label '" + l + "'");
    }
    if (blocks_.empty()) blocks_.push_back({"all", 0, labels_.size()});
    for (const auto& b : blocks_) {
      if (b.offset + b.size > labels_.size()) {
        throw DimensionError("block '" + b.name + "' exceeds basis dimension");
      }
    }
  }

  std::size_t dim() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }

  const Block& block(const std::string& name) const {
    for (const auto& b : blocks_) {
      if (b.name == name) return b;
    }
    throw DomainError("basis has no block named '" + name + "'");
  }

  bool operator==(const Basis& o) const { return labels_ == o.labels_; }

 private:
  std::vector<std::string> labels_;
  std::vector<Block> blocks_;
};

using BasisPtr = std::shared_ptr<const Basis>;

/// Dirichlet sine modes sqrt(2) sin(k pi x) on (0,1), k = 1..n.
inline BasisPtr sine_basis(std::size_t n) {
  std::vector<std::string> labels;
  labels.reserve(n);
  for (std::size_t k = 1; k <= n; ++k) labels.push_back("sin" + std::to_string(k));
  return std::make_shared<const Basis>(std::move(labels));
}

/// H^1_0 x L^2 with n sine modes per factor: [u_1..u_n, v_1..v_n].
inline BasisPtr wave_basis(std::size_t n) {
  std::vector<std::string> labels;
  labels.reserve(2 * n);
  for (std::size_t k = 1; k <= n; ++k) labels.push_back("u" + std::to_string(k));
  for (std::size_t k = 1; k <= n; ++k) labels.push_back("v" + std::to_string(k));
  return std::make_shared<const Basis>(std::move(labels),
                                       std::vector<Block>{{"position", 0, n}, {"velocity", n, n}});
}

/// R x L^2((-1,0]) with the history held as r cell averages, oldest first.
inline BasisPtr delay_basis(std::size_t cells) {
  std::vector<std::string> labels;
  labels.reserve(cells + 1);
  labels.emplace_back("head");
  for (std::size_t i = 0; i < cells; ++i) labels.push_back("hist" + std::to_string(i));
  return std::make_shared<const Basis>(std::move(labels),
                                       std::vector<Block>{{"head", 0, 1}, {"history", 1, cells}});
}

inline void require_same_basis(const BasisPtr& a, const BasisPtr& b) {
  if (a == b) return;
  if (!a || !b || !(*a == *b)) throw DimensionError("vectors live in different bases");
}

/// Element of the truncated space.
class SpectralVector {
 public:
  explicit SpectralVector(BasisPtr basis) : coeffs_(Vec::Zero(basis->dim())), basis_(std::move(basis)) {}
  SpectralVector(BasisPtr basis, Vec coeffs) : coeffs_(std::move(coeffs)), basis_(std::move(basis)) {
    if (static_cast<std::size_t>(coeffs_.size()) != basis_->dim()) {
      throw DimensionError("coefficient count " + std::to_string(coeffs_.size()) +
                           " does not match basis dimension " + std::to_string(basis_->dim()));
    }
  }

  static SpectralVector unit(BasisPtr basis, std::size_t k) {
    SpectralVector e(std::move(basis));
    if (k >= e.dim()) throw DimensionError("unit vector index out of range");
    e.coeffs_[static_cast<Eigen::Index>(k)] = 1.0;
    return e;
  }

  std::size_t dim() const noexcept { return basis_->dim(); }
  const BasisPtr& basis() const noexcept { return basis_; }
  const Vec& coeffs() const noexcept { return coeffs_; }
  Vec& coeffs() noexcept { return coeffs_; }
  double operator[](std::size_t i) const { return coeffs_[static_cast<Eigen::Index>(i)]; }

  SpectralVector& operator+=(const SpectralVector& o) {
    require_same_basis(basis_, o.basis_);
    coeffs_ += o.coeffs_;
    return *this;
  }
  SpectralVector& operator-=(const SpectralVector& o) {
    require_same_basis(basis_, o.basis_);
    coeffs_ -= o.coeffs_;
    return *this;
  }
  SpectralVector& operator*=(double s) {
    coeffs_ *= s;
    return *this;
  }
  friend SpectralVector operator+(SpectralVector a, const SpectralVector& b) { return a += b; }
  friend SpectralVector operator-(SpectralVector a, const SpectralVector& b) { return a -= b; }
  friend SpectralVector operator*(double s, SpectralVector a) { return a *= s; }

 private:
  Vec coeffs_;
  BasisPtr basis_;
};

/// Per-mode metric weights: <x,y>_w = sum_k w_k x_k y_k.
class WeightedInnerProduct {
 public:
  explicit WeightedInnerProduct(Vec weights) : weights_(std::move(weights)) {
    if (weights_.size() == 0) throw DomainError("empty weight vector");
    for (Eigen::Index k = 0; k < weights_.size(); ++k) {
      if (!(weights_[k] > 0.0) || !std::isfinite(weights_[k])) {
        throw DomainError("metric weights must be positive and finite");
      }
    }
  }
  static WeightedInnerProduct unit(std::size_t dim) {
    return WeightedInnerProduct(Vec::Ones(static_cast<Eigen::Index>(dim)));
  }

  std::size_t dim() const noexcept { return static_cast<std::size_t>(weights_.size()); }
  const Vec& weights() const noexcept { return weights_; }

  // Unchecked kernels for the hot loops; callers guarantee matching sizes.
  template <class A, class B>
  double dot(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) const {
    return (weights_.array() * x.derived().array() * y.derived().array()).sum();
  }
  template <class A>
  double norm2(const Eigen::MatrixBase<A>& x) const {
    return (weights_.array() * x.derived().array().square()).sum();
  }

 private:
  Vec weights_;
};

inline double inner(const SpectralVector& x, const SpectralVector& y, const WeightedInnerProduct& w) {
  require_same_basis(x.basis(), y.basis());
  if (w.dim() != x.dim()) throw DimensionError("metric weights do not match basis dimension");
  return w.dot(x.coeffs(), y.coeffs());
}

inline double norm(const SpectralVector& x, const WeightedInnerProduct& w) {
  if (w.dim() != x.dim()) throw DimensionError("metric weights do not match basis dimension");
  return std::sqrt(w.norm2(x.coeffs()));
}

}  // namespace spde
