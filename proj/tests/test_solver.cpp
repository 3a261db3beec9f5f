// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spde/models.hpp"
#include "spde/solver.hpp"

using namespace spde;

namespace {

CadlagPath random_forcing(const BasisPtr& basis, const TimeGrid& grid, std::uint64_t seed, double scale) {
  CadlagPath v(basis, grid);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Vec cur = Vec::Zero(static_cast<Eigen::Index>(basis->dim()));
  v.set(0, cur);
  for (std::size_t j = 1; j <= grid.steps(); ++j) {
    for (auto& c : cur) c += nd(rng) * std::sqrt(grid.dt(j - 1));
    v.set(j, cur);
  }
  return v;
}

// One-mode Nemitsky with Q = 2 reduces to c -> F(sqrt2 c) / sqrt2.
DriftSpec one_mode(ScalarFunction fn) { return nemitsky(std::move(fn), *sine_basis(1), 2); }

ModelSpec drift_free_linear(double a, double sigma) {
  LinearScalarParams p;
  p.a = a;
  p.sigma = sigma;
  p.check_samples = 200;
  return build_linear_scalar(p);
}

}  // namespace

TEST(MildSolve, ZeroDriftIsFreeEvolutionPlusForcing) {
  const auto basis = sine_basis(3);
  const SemigroupSpec s(Diagonal{Vec{{-1.0, -4.0, -9.0}}}, 0.0);
  const auto grid = TimeGrid::uniform(1.0, 50);
  const auto v = random_forcing(basis, grid, 1, 0.3);
  const SpectralVector x0(basis, Vec{{1.0, 0.5, -0.25}});
  const auto r = solve_deterministic_mild(s, DriftSpec::zero(3), WeightedInnerProduct::unit(3), x0, v);
  for (std::size_t j = 0; j <= 50; ++j) {
    const Vec expected = s.act(grid.time(j), x0.coeffs()) + Vec(v.value(j));
    EXPECT_LT((r.path.value(j) - expected).lpNorm<Eigen::Infinity>(), 1e-13);
  }
  EXPECT_TRUE(r.bound_holds);
  EXPECT_EQ(r.halvings, 0u);
}

TEST(MildSolve, LinearDecayIsImplicitEuler) {
  // x' = -x: each step solves z + h z = x_j, so x_j = (1 + h)^{-j}.
  const auto basis = sine_basis(1);
  const SemigroupSpec s(Diagonal{Vec::Zero(1)}, 0.0);
  const auto f = one_mode(scalar::neg_linear());
  const SpectralVector x0(basis, Vec::Ones(1));
  double prev_err = 0.0;
  for (std::size_t steps : {50u, 100u, 200u}) {
    const auto grid = TimeGrid::uniform(1.0, steps);
    const auto r = solve_deterministic_mild(s, f, WeightedInnerProduct::unit(1), x0, CadlagPath(basis, grid));
    const double h = 1.0 / static_cast<double>(steps);
    EXPECT_NEAR(r.path.value(steps)[0], std::pow(1.0 + h, -static_cast<double>(steps)), 1e-13);
    const double err = std::abs(r.path.value(steps)[0] - std::exp(-1.0));
    if (prev_err > 0.0) {
      EXPECT_NEAR(prev_err / err, 2.0, 0.1);
    }
    prev_err = err;
    EXPECT_TRUE(r.bound_holds);
  }
}

TEST(MildSolve, CubeRootDriftReachesZeroAndStays) {
  // x' = -cbrt(x) from 1 extinguishes at t = 1.5 * 1^{2/3}.
  const auto basis = sine_basis(1);
  const SemigroupSpec s(Diagonal{Vec::Zero(1)}, 0.0);
  const auto f = one_mode(scalar::neg_cbrt());
  const auto grid = TimeGrid::uniform(2.0, 2000);
  const SpectralVector x0(basis, Vec::Ones(1));
  const auto r = solve_deterministic_mild(s, f, WeightedInnerProduct::unit(1), x0, CadlagPath(basis, grid));
  EXPECT_LT(std::abs(r.path.value(2000)[0]), 1e-6);
  // Exact solution for the scalar law c' = -cbrt(sqrt2 c)/sqrt2 = -2^{-1/3} c^{1/3}.
  const double k = std::pow(2.0, -1.0 / 3.0);
  const double t = 0.5;
  const double exact = std::pow(1.0 - 2.0 / 3.0 * k * t, 1.5);
  EXPECT_NEAR(r.path.value(500)[0], exact, 5e-3);
  EXPECT_TRUE(r.bound_holds);
}

TEST(MildSolve, BoundHoldsForReactionDiffusionDrift) {
  ReactionDiffusionParams p;
  p.check_samples = 100;
  const auto m = build_reaction_diffusion(p);
  const auto grid = TimeGrid::uniform(1.0, 200);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto v = random_forcing(m.basis, grid, seed, 1.0);
    const auto r = solve_deterministic_mild(m.semigroup, m.coeffs.f, m.metric, SpectralVector(m.basis, Vec(m.initial_state(1, 0))), v);
    EXPECT_TRUE(r.bound_holds) << r.max_bound_ratio;
    EXPECT_LE(r.max_bound_ratio, 1.0 + 1e-9);
  }
}

TEST(MildSolve, UnsolvableResolventThrows) {
  // z - h sqrt2 z^2 = b has no real root once b > 1 / (4 sqrt2 h).
  ScalarFunction sq{"square", [](double u) { return u * u; }, [](double u) { return 2.0 * u; }, 0.0, 0.0};
  const auto basis = sine_basis(1);
  const SemigroupSpec s(Diagonal{Vec::Zero(1)}, 0.0);
  auto f = one_mode(sq);
  const auto grid = TimeGrid::uniform(1.0, 10);
  InnerSolverOptions opt;
  opt.check_bound = false;
  EXPECT_THROW(solve_deterministic_mild(s, f, WeightedInnerProduct::unit(1), SpectralVector(basis, Vec::Constant(1, 1e3)),
                                        CadlagPath(basis, grid), opt),
               NonconvergenceError);
}

TEST(MildSolve, RejectsMismatchedInputs) {
  const auto grid = TimeGrid::uniform(1.0, 4);
  const SemigroupSpec s(Diagonal{Vec::Zero(2)}, 0.0);
  EXPECT_THROW(solve_deterministic_mild(s, DriftSpec::zero(2), WeightedInnerProduct::unit(2),
                                        SpectralVector(sine_basis(2)), CadlagPath(sine_basis(3), grid)),
               DimensionError);
}

TEST(Rescale, ShiftsGrowthAway) {
  const auto m = drift_free_linear(0.5, 0.3);
  EXPECT_DOUBLE_EQ(m.alpha(), 0.5);
  const auto r = rescale_to_contraction(m);
  EXPECT_DOUBLE_EQ(r.alpha(), 0.0);
  for (double t : {0.1, 0.7}) {
    EXPECT_NEAR(r.semigroup.act(t, Vec::Ones(1))[0], 1.0, 1e-14);
    const Vec y = Vec::Constant(1, 2.0);
    EXPECT_NEAR(r.coeffs.g.eval(t, y)(0, 0), 0.6, 1e-14);
  }
  EXPECT_EQ(rescale_to_contraction(drift_free_linear(-1.0, 0.3)).name, "linear_scalar");
}

TEST(Rescale, UnscaleMultipliesByExponential) {
  const auto grid = TimeGrid::uniform(1.0, 4);
  CadlagPath p(sine_basis(1), grid);
  for (std::size_t j = 0; j <= 4; ++j) p.set(j, Vec::Ones(1));
  const auto q = unscale(p, 0.8);
  for (std::size_t j = 0; j <= 4; ++j) EXPECT_NEAR(q.value(j)[0], std::exp(0.8 * grid.time(j)), 1e-14);
}

TEST(Direct, NoCoefficientsGivesSemigroupOrbit) {
  ReactionDiffusionParams p;
  p.drift = scalar::zero();
  p.linear_jumps = false;
  p.check_samples = 10;
  const auto m = build_reaction_diffusion(p);
  const auto grid = TimeGrid::uniform(1.0, 100);
  const auto x = direct_solve(m, 3, grid);
  const Vec x0 = m.initial_state(3, 0);
  for (std::size_t j = 0; j <= 100; j += 10) {
    EXPECT_LT((x.value(j) - m.semigroup.act(grid.time(j), x0)).lpNorm<Eigen::Infinity>(), 1e-14);
  }
}

TEST(Direct, LinearScalarIsStochasticExponentialStep) {
  const auto m = drift_free_linear(-1.0, 0.5);
  const auto grid = TimeGrid::uniform(1.0, 8);
  const auto noise = m.noise(grid, 4, 0);
  const auto r = direct_solve(m, noise, Vec::Ones(1), true);
  ASSERT_TRUE(r.increments.has_value());
  const double comp = m.mark_factor_mean();
  EXPECT_NEAR(comp, 0.5, 1e-3);
  double x = 1.0;
  for (std::size_t i = 0; i < 8; ++i) {
    double jumps = 0.0;
    for (std::size_t e = noise.cell_begin[i]; e < noise.cell_begin[i + 1]; ++e) jumps += noise.events[e].mark;
    x = std::exp(-grid.dt(i)) * x * (1.0 + 0.5 * noise.dW(0, static_cast<Eigen::Index>(i)) - comp * grid.dt(i) + jumps);
    EXPECT_NEAR(r.path.value(i + 1)[0], x, 1e-12 * (1 + std::abs(x)));
  }
}

TEST(Picard, DeterministicModelSettlesAfterOneIteration) {
  ReactionDiffusionParams p;
  p.marks = MarkSpaceSpec();
  p.linear_jumps = false;
  p.check_samples = 10;
  const auto m = build_reaction_diffusion(p);
  PicardOptions opt;
  opt.n_max = 3;
  const auto r = picard_campaign(m, TimeGrid::uniform(1.0, 100), 1, 2, opt);
  ASSERT_GE(r.trace.e.size(), 2u);
  EXPECT_GT(r.trace.e[0].mean, 0.0);
  EXPECT_LT(r.trace.e[1].mean, 1e-24);
  EXPECT_TRUE(r.trace.converged || r.trace.e[1].mean < 1e-24);
}

TEST(Picard, FixedPointMatchesDirectSolveForLinearModels) {
  for (double a : {-1.0, 0.5}) {
    const auto m = drift_free_linear(a, 0.5);
    const auto grid = TimeGrid::uniform(1.0, 100);
    PicardOptions opt;
    opt.n_max = 25;
    const auto r = picard_campaign(m, grid, 9, 3, opt, 1, 3);
    for (std::size_t p = 0; p < 3; ++p) {
      const auto d = direct_solve(m, 9, grid, p);
      for (std::size_t j = 0; j <= 100; ++j) {
        EXPECT_NEAR(r.paths[p].value(j)[0], d.value(j)[0], 1e-10 * (1 + std::abs(d.value(j)[0]))) << a << " " << p << " " << j;
      }
    }
    EXPECT_LT(r.trace.e.back().mean, 1e-20);
  }
}

TEST(Picard, LimitDoesNotDependOnInnerDamping) {
  ReactionDiffusionParams p;
  p.check_samples = 100;
  const auto m = build_reaction_diffusion(p);
  const auto grid = TimeGrid::uniform(0.5, 100);
  PicardOptions a, b;
  a.n_max = b.n_max = 12;
  b.inner.damping = 0.5;
  b.inner.max_iterations = 200;
  const auto ra = picard_campaign(m, grid, 2, 4, a, 1, 4);
  const auto rb = picard_campaign(m, grid, 2, 4, b, 1, 4);
  for (std::size_t q = 0; q < 4; ++q) {
    EXPECT_LT(detail::sup_dist2(ra.paths[q], rb.paths[q], m.metric), 1e-16);
  }
}

TEST(Picard, TraceIndependentOfThreadCount) {
  ReactionDiffusionParams p;
  p.check_samples = 100;
  const auto m = build_reaction_diffusion(p);
  const auto grid = TimeGrid::uniform(0.25, 50);
  PicardOptions opt;
  opt.n_max = 5;
  const auto r1 = picard_campaign(m, grid, 3, 6, opt, 1);
  const auto r3 = picard_campaign(m, grid, 3, 6, opt, 3);
  ASSERT_EQ(r1.trace.e.size(), r3.trace.e.size());
  for (std::size_t n = 0; n < r1.trace.e.size(); ++n) EXPECT_EQ(r1.trace.e[n].mean, r3.trace.e[n].mean);
}

TEST(Picard, PredictedBoundFormula) {
  const auto m = drift_free_linear(-1.0, 0.5);
  std::vector<PicardPathResult> runs;
  const auto grid = TimeGrid::uniform(1.0, 2);
  for (int p = 0; p < 2; ++p) {
    PicardPathResult r{CadlagPath(m.basis, grid), {0.5, 0.25, 0.1}, {1, 1, 1, 1}, {0, 0, 0, 0}, 1.0, true, 0};
    runs.push_back(r);
  }
  PicardOptions opt;
  const auto tr = reduce_picard(runs, m, opt);
  const double C = 0.25 + m.coeffs.k.C;
  EXPECT_DOUBLE_EQ(tr.C, C);
  EXPECT_NEAR(tr.C1, 2.0 * C * 19.0, 1e-12);
  EXPECT_DOUBLE_EQ(tr.predicted[0], 0.5);
  EXPECT_NEAR(tr.predicted[2], 0.5 * tr.C1 * tr.C1 / 2.0, 1e-12);
  EXPECT_FALSE(tr.diverged);
}

TEST(Picard, DivergenceRule) {
  const auto m = drift_free_linear(-1.0, 0.5);
  const auto grid = TimeGrid::uniform(1.0, 2);
  std::vector<PicardPathResult> runs{
      PicardPathResult{CadlagPath(m.basis, grid), {1.0, 0.5, 0.6, 0.7, 0.8}, {1, 1, 1, 1, 1, 1}, {0, 0, 0, 0, 0, 0}, 1.0,
                       true, 0}};
  PicardOptions opt;
  EXPECT_THROW(reduce_picard(runs, m, opt), DivergenceError);
  opt.throw_on_divergence = false;
  const auto tr = reduce_picard(runs, m, opt);
  EXPECT_TRUE(tr.diverged);
  EXPECT_EQ(tr.divergence_index, 4u);
  runs[0].sup_diff = {1.0, 0.5, 0.6, 0.7, 0.1};
  EXPECT_FALSE(reduce_picard(runs, m, opt).diverged);
}

TEST(Picard, ToleranceStopsEarly) {
  const auto m = drift_free_linear(-1.0, 0.5);
  const auto grid = TimeGrid::uniform(1.0, 2);
  std::vector<PicardPathResult> runs{
      PicardPathResult{CadlagPath(m.basis, grid), {1.0, 1e-3, 1e-7, 1e-9}, {1, 1, 1, 1, 1}, {0, 0, 0, 0, 0}, 1.0, true, 0}};
  PicardOptions opt;
  opt.tol = 1e-6;
  const auto tr = reduce_picard(runs, m, opt);
  EXPECT_TRUE(tr.converged);
  EXPECT_EQ(tr.iterations, 3u);
}

TEST(Picard, RejectsEmptyCampaign) {
  const auto m = drift_free_linear(-1.0, 0.5);
  EXPECT_THROW(picard_campaign(m, TimeGrid::uniform(1.0, 4), 1, 0, PicardOptions{}), DomainError);
}
