// SPDX-License-Identifier: Apache-2.0
//
// acceptance [--criterion N]
//
// Prints one "criterion N <name>: PASS|FAIL (details)" line per criterion and
// exits nonzero if any of the selected criteria fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include "spde/spde.hpp"

using namespace spde;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string details;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

unsigned worker_threads() { return std::max(1u, std::min(8u, std::thread::hardware_concurrency())); }

ModelSpec reaction_diffusion(std::size_t check_samples = 1000) {
  ReactionDiffusionParams p;
  p.check_samples = check_samples;
  return build_reaction_diffusion(p);
}

const TimeGrid& unit_grid() {
  static const TimeGrid g = TimeGrid::with_step(1.0, 1e-3);
  return g;
}

// ---------------------------------------------------------------------------

Verdict picard_rate() {
  const auto m = reaction_diffusion();
  PicardOptions opt;
  opt.n_max = 9;
  opt.throw_on_divergence = false;
  const auto tr = picard_campaign(m, unit_grid(), 101, 500, opt, worker_threads()).trace;
  const auto d = diagnose_picard(tr, 2, 8);
  std::string ratios;
  for (std::size_t n = 2; n + 1 < tr.e.size() && n <= 8; ++n) {
    ratios += fmt(" %.3g", tr.e[n + 1].mean / tr.e[n].mean);
  }
  return {d.rate && d.monotone && tr.iterations >= 10,
          fmt("C1=%.4g, e_2=%.3g, e_9=%.3g, ratios n=2..8:", tr.C1, tr.e.size() > 2 ? tr.e[2].mean : 0.0,
              tr.e.size() > 9 ? tr.e[9].mean : 0.0) +
              ratios + fmt(", limit at n=8 %.3g, monotone=%s", 2.0 * tr.C1 * tr.T / 9.0, d.monotone ? "yes" : "no")};
}

Verdict uniqueness() {
  const auto m = reaction_diffusion();
  const std::size_t paths = 100;
  PicardOptions a, b;
  b.inner.damping = 0.5;
  b.inner.max_iterations = 200;
  const auto ra = picard_campaign(m, unit_grid(), 202, paths, a, worker_threads(), paths);
  const auto rb = picard_campaign(m, unit_grid(), 202, paths, b, worker_threads(), paths);
  std::vector<double> diff(paths), norm(paths);
  for (std::size_t p = 0; p < paths; ++p) {
    diff[p] = detail::sup_dist2(ra.paths[p], rb.paths[p], m.metric);
    norm[p] = detail::sup_norm2(ra.paths[p], m.metric);
  }
  const double rel = sample_stats(diff).mean / sample_stats(norm).mean;
  return {rel <= 1e-6, fmt("E sup|X-Y|^2 / E sup|X|^2 = %.3g over %zu paths (damping 1 vs 0.5)", rel, paths)};
}

Verdict ito_inequality() {
  const std::size_t paths = 1000;
  bool ok = true;
  std::string details;
  for (const char* example : {"reaction_diffusion", "hyperbolic_wave", "delay_equation"}) {
    RunConfig c;
    c.example = example;
    c.gaussian_variance = 0.25;  // used by the wave and delay examples
    c.check_samples = 1000;
    double rates[2];
    for (int l = 0; l < 2; ++l) {
      const double dt = l == 0 ? 1e-3 : 5e-4;
      const ModelSpec m = build_model(c, dt);
      rates[l] = ito_campaign(m, TimeGrid::with_step(1.0, dt), 303, paths, worker_threads()).violation_rate;
    }
    const bool good = rates[0] <= 0.01 && rates[1] <= 0.01 && rates[1] <= rates[0];
    ok = ok && good;
    details += fmt("%s%s %.4f -> %.4f", details.empty() ? "" : "; ", example, rates[0], rates[1]);
  }
  return {ok, "violation rate at dt 1e-3 -> 5e-4: " + details};
}

Verdict closed_form() {
  LinearScalarParams p;  // a = -1, sigma = 0.5, lambda = 2, X0 = 1
  p.check_samples = 1000;
  const auto m = build_linear_scalar(p);
  const auto r = benchmark_linear(m, p.a, p.sigma, p.x0, 6, 12, 10, 404, 2000, worker_threads());
  std::string levels;
  for (const auto& l : r.levels) levels += fmt(" %.3g", l.rms);
  return {r.order >= 0.45 && r.error_at_reference < 1e-2,
          fmt("order %.3f, rms at 2^-10 %.3g; rms by level:", r.order, r.error_at_reference) + levels};
}

Verdict moment_bound() {
  const auto m = reaction_diffusion();
  PicardOptions opt;
  opt.n_max = 8;
  opt.throw_on_divergence = false;
  const auto tr = picard_campaign(m, unit_grid(), 505, 300, opt, worker_threads()).trace;
  bool ok = true;
  double worst = -std::numeric_limits<double>::infinity();
  std::size_t checked = 0;
  for (std::size_t n = 0; n < tr.moment_gap.size() && n <= 8; ++n) {
    const auto& g = tr.moment_gap[n];
    ++checked;
    worst = std::max(worst, g.std_error > 0 ? g.mean / g.std_error : (g.mean > 0 ? INFINITY : -INFINITY));
    if (g.mean > 2.0 * g.std_error) ok = false;
  }
  return {ok && checked == 9, fmt("iterates checked %zu, E sup|X^8|^2 = %.4g vs bound %.4g, worst gap %.3g SE", checked,
                                  tr.x_moment[std::min<std::size_t>(8, tr.x_moment.size() - 1)].mean,
                                  tr.moment_bound[std::min<std::size_t>(8, tr.moment_bound.size() - 1)], worst)};
}

Verdict rescaling() {
  DelayParams p;  // alpha = 1, 1000 history cells
  p.check_samples = 1000;
  LevyPathSpec z{0.0, 0.25, default_marks()};
  const auto m = build_delay(p, scalar::neg_cbrt(), z);
  const auto r = rescale_to_contraction(m);
  const double alpha = m.alpha();
  const auto& fine = unit_grid();
  const std::size_t shared = 200, stat_paths = 1000;

  // Pathwise: same noise through both frames; the quadrature error is
  // estimated by the dt vs 2 dt gap of the original-frame solution.
  std::vector<double> frame_gap(shared), quad_gap(shared);
  parallel_for(shared, worker_threads(), [&](std::size_t q) {
    const auto noise = m.noise(fine, 606, q);
    const Vec x0 = m.initial_state(606, q);
    const auto x = direct_solve(m, noise, x0).path;
    const auto y = unscale(direct_solve(r, noise, x0).path, alpha);
    const auto x2 = direct_solve(m, noise.coarsen(2), x0).path;
    frame_gap[q] = detail::sup_dist2(x, y, m.metric);
    double g = 0.0;
    for (std::size_t j = 0; j < x2.size(); ++j) g = std::max(g, m.metric.norm2(Vec(x.value(2 * j) - x2.value(j))));
    quad_gap[q] = g;
  });
  const double pathwise = std::sqrt(*std::max_element(frame_gap.begin(), frame_gap.end()));
  const double quad = std::sqrt(sample_stats(quad_gap).mean);

  // Statistics: independent seeds per frame, terminal head and squared norm.
  std::vector<double> hx(stat_paths), hy(stat_paths), nx(stat_paths), ny(stat_paths);
  parallel_for(stat_paths, worker_threads(), [&](std::size_t q) {
    const auto x = direct_solve(m, 707, fine, q);
    const auto y = unscale(direct_solve(r, 808, fine, q), alpha);
    hx[q] = x.value(x.size() - 1)[0];
    hy[q] = y.value(y.size() - 1)[0];
    nx[q] = m.metric.norm2(x.value(x.size() - 1));
    ny[q] = m.metric.norm2(y.value(y.size() - 1));
  });
  auto zscore = [](const std::vector<double>& a, const std::vector<double>& b) {
    const auto sa = sample_stats(a), sb = sample_stats(b);
    return std::abs(sa.mean - sb.mean) / std::hypot(sa.std_error, sb.std_error);
  };
  const double zh = zscore(hx, hy), zn = zscore(nx, ny);
  return {pathwise <= 10.0 * quad && zh <= 3.0 && zn <= 3.0,
          fmt("pathwise sup gap %.3g vs quadrature error %.3g; z(head)=%.2f, z(|X_T|^2)=%.2f", pathwise, quad, zh, zn)};
}

Verdict hypothesis_checkers() {
  const auto basis = sine_basis(8);
  const auto w = WeightedInnerProduct::unit(8);
  const auto cbrt = check_semimonotone(nemitsky(scalar::neg_cbrt(), *basis, 32), w, 10000, 10.0, 0.0);
  const auto cube = check_semimonotone(nemitsky(scalar::cube(), *basis, 32), w, 10000, 10.0, 0.0);
  const auto marks = default_marks();
  CoefficientSet set;
  set.f = DriftSpec::zero(8);
  const double declared = marks.second_moment();
  set.k = JumpCoeffSpec::separable([](double xi) { return xi; }, [](double, const Vec& x) { return x; }, declared,
                                   declared);
  const auto lg = check_lipschitz_growth(set, marks, w, 10000);
  const double rel = std::abs(lg.k_lipschitz - declared) / declared;
  return {cbrt.pass && !cube.pass && rel <= 0.05,
          fmt("neg_cbrt max ratio %.3g (M=0) %s; cube max ratio %.3g %s; jump Lipschitz %.5g vs int xi^2 dnu %.5g (rel %.2g)",
              cbrt.max_ratio, cbrt.pass ? "passes" : "fails", cube.max_ratio, cube.pass ? "passes" : "fails",
              lg.k_lipschitz, declared, rel)};
}

Verdict noise_layer() {
  const std::size_t paths = 10000;
  const MarkSpaceSpec marks = default_marks();
  const auto grid = TimeGrid::uniform(1.0, 100);
  const double dt = 0.01;
  // Integrand h(t) = cos(pi t) on the left grid points.
  double h2 = 0.0;
  for (std::size_t i = 0; i < grid.steps(); ++i) h2 += std::pow(std::cos(std::numbers::pi * grid.time(i)), 2) * dt;
  std::vector<double> wi(paths), wi2(paths), ci(paths), ci2(paths), counts(paths);
  for (std::size_t p = 0; p < paths; ++p) {
    const auto n = realize_noise(1, marks, grid, 909, p);
    double w = 0.0;
    for (std::size_t i = 0; i < grid.steps(); ++i) w += std::cos(std::numbers::pi * grid.time(i)) * n.dW(0, static_cast<Eigen::Index>(i));
    const auto z = compensate(n.events, [](double xi) { return Vec{{xi}}; }, marks, grid);
    double c = 0.0;
    for (std::size_t i = 0; i < z.cells(); ++i) c += std::cos(std::numbers::pi * grid.time(i)) * z.total(i)[0];
    wi[p] = w;
    wi2[p] = w * w;
    ci[p] = c;
    ci2[p] = c * c;
    counts[p] = static_cast<double>(n.events.size());
  }
  // Jump times are continuous, so the compensated left-point sum has
  // second moment sum h(t_i)^2 dt * int xi^2 dnu.
  const double jump_iso = h2 * marks.second_moment();
  auto z = [](const SampleStats& s, double target) { return std::abs(s.mean - target) / s.std_error; };
  const double z_wiso = z(sample_stats(wi2), h2), z_wmean = z(sample_stats(wi), 0.0);
  const double z_jiso = z(sample_stats(ci2), jump_iso), z_jmean = z(sample_stats(ci), 0.0);
  const double z_count = z(sample_stats(counts), marks.total_mass() * 1.0);
  return {z_wiso <= 4 && z_wmean <= 4 && z_jiso <= 4 && z_jmean <= 4 && z_count <= 3,
          fmt("z-scores: Wiener isometry %.2f, Wiener mean %.2f, jump isometry %.2f, compensated mean %.2f, PRM count %.2f",
              z_wiso, z_wmean, z_jiso, z_jmean, z_count)};
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "spde_acceptance_determinism";
  fs::remove_all(root);
  using Runner = std::function<CampaignOutcome(const RunConfig&, const fs::path&)>;
  struct Job {
    const char* name;
    Runner run;
    RunConfig cfg;
  };
  RunConfig base;
  base.dim = 8;
  base.dt = 1e-3;
  base.paths = 16;
  base.check_samples = 500;
  base.keep_paths = 2;
  RunConfig bench = base;
  bench.paths = 200;
  RunConfig delay = base;
  delay.example = "delay_equation";
  delay.gaussian_variance = 0.25;
  std::vector<Job> jobs{{"picard", run_picard_campaign, base},
                        {"ito-check", run_ito_check, delay},
                        {"benchmark", run_benchmark_oracle, bench},
                        {"hypothesis-check", run_hypothesis_check, base},
                        {"simulate", run_simulate, base}};
  std::size_t files = 0, mismatches = 0, thread_mismatches = 0;
  for (const auto& job : jobs) {
    std::vector<fs::path> dirs;
    for (int rep = 0; rep < 3; ++rep) {
      RunConfig c = job.cfg;
      c.threads = rep == 2 ? 4 : 1;
      const fs::path d = root / (std::string(job.name) + std::to_string(rep));
      job.run(c, d).summary.write(d / "summary.txt");
      dirs.push_back(d);
    }
    for (const auto& entry : fs::directory_iterator(dirs[0])) {
      const auto name = entry.path().filename();
      const auto a = read_all(dirs[0] / name);
      ++files;
      if (a.empty() || a != read_all(dirs[1] / name)) ++mismatches;
      if (name.extension() == ".csv" && a != read_all(dirs[2] / name)) ++thread_mismatches;
    }
  }
  fs::remove_all(root);
  return {files >= 10 && mismatches == 0 && thread_mismatches == 0,
          fmt("%zu output files over 5 subcommands; %zu differ between identical runs, %zu CSVs differ at 4 threads",
              files, mismatches, thread_mismatches)};
}

struct Criterion {
  const char* name;
  Verdict (*run)();
};

const Criterion criteria[] = {
    {"picard_rate", picard_rate},
    {"uniqueness", uniqueness},
    {"ito_inequality", ito_inequality},
    {"closed_form_oracle", closed_form},
    {"moment_bound", moment_bound},
    {"rescaling", rescaling},
    {"hypothesis_checkers", hypothesis_checkers},
    {"noise_layer", noise_layer},
    {"determinism", determinism},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      selected.push_back(std::atoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--criterion N]...\n";
      return 3;
    }
  }
  if (selected.empty()) {
    for (int k = 1; k <= 9; ++k) selected.push_back(k);
  }
  bool all = true;
  for (int k : selected) {
    if (k < 1 || k > 9) {
      std::cerr << "no criterion " << k << "\n";
      return 3;
    }
    const auto& c = criteria[k - 1];
    Verdict v;
    const auto start = std::chrono::steady_clock::now();
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << k << " " << c.name << ": " << (v.pass ? "PASS" : "FAIL") << " (" << v.details
              << fmt("; %.1f s", secs) << ")" << std::endl;
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
