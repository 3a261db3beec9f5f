// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "spde/coefficients.hpp"

using namespace spde;

namespace {

Vec random_vec(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vec v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = nd(rng);
  return v;
}

}  // namespace

TEST(Scalar, ByNameAndDerivatives) {
  EXPECT_THROW(scalar::by_name("sqrt"), ConfigError);
  for (const char* name : {"neg_cbrt", "neg_linear", "identity", "zero", "cube"}) {
    const auto f = scalar::by_name(name);
    EXPECT_EQ(f.name, name);
    for (double u : {-2.0, -0.3, 0.7, 1.9}) {
      const double h = 1e-6;
      const double fd = (f.value(u + h) - f.value(u - h)) / (2 * h);
      EXPECT_NEAR(f.derivative(u), fd, 1e-6 * (1 + std::abs(fd))) << name << " at " << u;
    }
  }
  EXPECT_DOUBLE_EQ(scalar::neg_cbrt().value(-8.0), 2.0);
}

TEST(Nemitsky, RejectsAliasingGrid) {
  EXPECT_THROW(NemitskyOperator(scalar::identity(), 8, 15), AliasingError);
  EXPECT_NO_THROW(NemitskyOperator(scalar::identity(), 8, 16));
  EXPECT_THROW(NemitskyOperator(scalar::identity(), 0, 16), DomainError);
}

TEST(Nemitsky, ProjectionInvertsSynthesis) {
  const NemitskyOperator op(scalar::identity(), 8, 32);
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    const Vec c = random_vec(8, rng);
    EXPECT_LT((op.apply(c) - c).lpNorm<Eigen::Infinity>(), 1e-13);
  }
}

TEST(Nemitsky, ConstantFunctionMatchesDiscreteSineSum) {
  // sum_{i=1}^{Q-1} sin(k pi i / Q) = cot(k pi / 2Q) for odd k, 0 for even k.
  const std::size_t Q = 40;
  const NemitskyOperator op(scalar::constant(1.0), 6, Q);
  const Vec out = op.apply(Vec::Zero(6));
  for (int k = 1; k <= 6; ++k) {
    const double expected =
        (k % 2 == 1) ? std::numbers::sqrt2 / std::tan(k * std::numbers::pi / (2.0 * Q)) / static_cast<double>(Q) : 0.0;
    EXPECT_NEAR(out[k - 1], expected, 1e-13) << k;
  }
}

TEST(Nemitsky, JacobianMatchesFiniteDifferences) {
  const NemitskyOperator op(scalar::cube(), 5, 20);
  std::mt19937_64 rng(5);
  const Vec c = random_vec(5, rng);
  const Mat J = op.jacobian(c);
  const double h = 1e-6;
  for (Eigen::Index j = 0; j < 5; ++j) {
    Vec e = Vec::Zero(5);
    e[j] = h;
    const Vec col = (op.apply(c + e) - op.apply(c - e)) / (2 * h);
    EXPECT_LT((J.col(j) - col).lpNorm<Eigen::Infinity>(), 1e-6);
  }
}

TEST(Nemitsky, DecreasingFunctionIsMonotone) {
  const auto basis = sine_basis(8);
  const auto f = nemitsky(scalar::neg_cbrt(), *basis, 32);
  EXPECT_EQ(f.M, 0.0);
  const auto metric = WeightedInnerProduct::unit(8);
  const auto r = check_semimonotone(f, metric, 2000, 10.0, 0.0);
  EXPECT_TRUE(r.pass) << r.max_ratio;
  EXPECT_LE(r.max_ratio, 0.0);
}

TEST(Nemitsky, CubeIsNotSemimonotoneWithZeroConstant) {
  const auto basis = sine_basis(8);
  const auto f = nemitsky(scalar::cube(), *basis, 32);
  const auto r = check_semimonotone(f, WeightedInnerProduct::unit(8), 500, 10.0, 0.0);
  EXPECT_FALSE(r.pass);
  EXPECT_GT(r.max_ratio, 1.0);
}

TEST(Nemitsky, ActsOnlyOnItsBlock) {
  const auto basis = wave_basis(4);
  const auto f = nemitsky(scalar::neg_linear(), *basis, 16, "velocity");
  std::mt19937_64 rng(2);
  const Vec x = random_vec(8, rng);
  const Vec y = f.eval(0.0, x);
  EXPECT_TRUE(y.head(4).isZero(0.0));
  EXPECT_LT((y.tail(4) + x.tail(4)).lpNorm<Eigen::Infinity>(), 1e-13);
}

TEST(Drift, AddLinearShiftsConstant) {
  const auto basis = sine_basis(6);
  const auto f = add_linear(nemitsky(scalar::neg_cbrt(), *basis, 24), 0.5);
  EXPECT_DOUBLE_EQ(f.M, 0.5);
  const auto metric = WeightedInnerProduct::unit(6);
  const auto r = check_semimonotone(f, metric, 2000, 10.0, f.M);
  EXPECT_TRUE(r.pass);
  EXPECT_GT(r.max_ratio, 0.4);
  EXPECT_FALSE(check_semimonotone(f, metric, 2000, 10.0, 0.25).pass);
}

TEST(Drift, ZeroDrift) {
  const auto f = DriftSpec::zero(3);
  EXPECT_TRUE(f.is_zero());
  EXPECT_TRUE(f.eval(0.0, Vec::Ones(3)).isZero(0.0));
}

TEST(Continuity, NemitskyPasses) {
  const auto basis = sine_basis(6);
  const auto f = nemitsky(scalar::neg_cbrt(), *basis, 24);
  const auto r = check_continuity(f, WeightedInnerProduct::unit(6), 200, 5.0);
  EXPECT_TRUE(r.pass);
  EXPECT_LT(r.fine, r.coarse);
}

TEST(HilbertSchmidt, TwoFormsAgree) {
  std::mt19937_64 rng(8);
  Mat g(4, 3);
  for (Eigen::Index j = 0; j < 3; ++j) g.col(j) = random_vec(4, rng);
  const WeightedInnerProduct w(Vec{{1.0, 2.0, 0.5, 3.0}});
  EXPECT_NEAR(hilbert_schmidt_norm2(g, w), hilbert_schmidt_norm2_trace(g, w), 1e-12);
  double direct = 0.0;
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) direct += w.weights()[i] * g(i, j) * g(i, j);
  EXPECT_NEAR(hilbert_schmidt_norm2(g, w), direct, 1e-12);
}

TEST(Jumps, LinearSeparableLipschitzRatio) {
  const MarkSpaceSpec marks(2.0, NormalMarks{0.25, 0.5});
  const double C = marks.second_moment();
  CoefficientSet set;
  set.f = DriftSpec::zero(4);
  set.k = JumpCoeffSpec::separable([](double xi) { return xi; }, [](double, const Vec& x) { return x; }, C, C);
  const auto r = check_lipschitz_growth(set, marks, WeightedInnerProduct::unit(4), 300);
  EXPECT_TRUE(r.pass());
  EXPECT_NEAR(r.k_lipschitz, C, 1e-3 * C);
  // |x|^2/(1+|x|^2) < 1, close to 1 for large samples
  EXPECT_LE(r.growth, C * (1 + 1e-3));
  EXPECT_GT(r.growth, 0.9 * C);
}

TEST(Jumps, GeneralAndSeparableAgree) {
  const MarkSpaceSpec marks(1.5, UniformMarks{-1.0, 2.0});
  const auto sep =
      JumpCoeffSpec::separable([](double xi) { return xi; }, [](double, const Vec& x) { return Vec(2.0 * x); }, 0, 0);
  const auto gen = JumpCoeffSpec::general([](double, double xi, const Vec& x) { return Vec(2.0 * xi * x); }, 0, 0);
  const auto w = WeightedInnerProduct::unit(3);
  const Vec x{{1.0, -2.0, 0.5}}, y{{0.0, 1.0, 1.0}};
  EXPECT_NEAR(detail::nu_square_distance(sep, marks, w, 0.0, x, y), detail::nu_square_distance(gen, marks, w, 0.0, x, y),
              1e-3);
  EXPECT_NEAR(detail::nu_square_norm(sep, marks, w, 0.0, x), 4.0 * marks.second_moment() * w.norm2(x), 1e-3);
}

TEST(Jumps, UnderstatedConstantIsCaught) {
  const MarkSpaceSpec marks(2.0, FixedMark{1.0});
  CoefficientSet set;
  set.f = DriftSpec::zero(2);
  set.k = JumpCoeffSpec::separable([](double xi) { return xi; }, [](double, const Vec& x) { return x; }, 1.0, 2.0);
  const auto r = check_lipschitz_growth(set, marks, WeightedInnerProduct::unit(2), 100);
  EXPECT_FALSE(r.pass_lipschitz);
  EXPECT_TRUE(r.pass_growth);
}

TEST(Diffusion, LinearMultiplicativeNoise) {
  CoefficientSet set;
  set.f = DriftSpec::zero(3);
  set.g.modes = 1;
  set.g.C = 0.25;
  set.g.D = 0.25;
  set.g.eval = [](double, const Vec& x) { return Mat(0.5 * x); };
  const auto r = check_lipschitz_growth(set, MarkSpaceSpec(), WeightedInnerProduct::unit(3), 200);
  EXPECT_TRUE(r.pass());
  EXPECT_NEAR(r.g_lipschitz, 0.25, 1e-12);
}

TEST(Checkers, RejectBadArguments) {
  const auto f = DriftSpec::zero(2);
  const auto w = WeightedInnerProduct::unit(2);
  EXPECT_THROW(check_semimonotone(f, w, 0, 1.0, 0.0), DomainError);
  EXPECT_THROW(check_semimonotone(f, w, 10, 0.0, 0.0), DomainError);
  CoefficientSet set;
  set.f = f;
  EXPECT_THROW(check_lipschitz_growth(set, MarkSpaceSpec(), w, 0), DomainError);
}
