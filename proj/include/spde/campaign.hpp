// SPDX-License-Identifier: Apache-2.0
//
// Batch runs behind the command-line driver: configuration, model assembly,
// the five campaign types, and their CSV / key=value outputs.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "spde/convolution.hpp"
#include "spde/errors.hpp"
#include "spde/models.hpp"
#include "spde/parallel.hpp"
#include "spde/solver.hpp"

namespace spde {

inline constexpr int config_schema_version = 1;
inline constexpr int csv_schema_version = 1;

// ---------------------------------------------------------------------------
// Configuration.

struct MarksConfig {
  std::string law = "normal";  // normal | uniform | fixed | power_law
  double intensity = 2.0;
  double mean = 0.25;
  double sd = 0.5;
  double lo = -0.5;
  double hi = 0.5;
  double value = 0.5;
  double c = 1.0;  // power_law: density c |xi|^{-1-beta} on eps <= |xi| <= cutoff
  double beta = 1.0;
  double eps = 0.1;
  double cutoff = 10.0;
  std::size_t nodes = MarkSpaceSpec::default_quadrature_nodes;

  bool operator==(const MarksConfig&) const = default;
};

struct RunConfig {
  int schema = config_schema_version;
  std::string example = "reaction_diffusion";
  std::size_t dim = 8;
  std::size_t quad_points = 0;
  std::size_t delay_cells = 0;  // 0: one cell per time step
  std::string drift = "neg_cbrt";
  double eta = 0.0;
  double sigma = 0.0;
  double gaussian_variance = 0.0;
  bool jumps = true;
  MarksConfig marks;
  double a = -1.0;   // linear_scalar drift rate
  double x0 = 1.0;   // linear_scalar initial value

  double dt = 1e-3;
  double horizon = 1.0;
  std::size_t paths = 500;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  std::size_t n_max = 9;
  double tol = 0.0;
  double bdg_constant = 3.0;
  double inner_damping = 1.0;
  double inner_tolerance = 1e-12;
  std::size_t inner_max_iterations = 60;
  std::size_t inner_max_halvings = 6;

  double ito_constant = 1.0;
  double ito_max_violation_rate = 0.01;

  std::size_t bench_fine_exponent = 12;
  std::size_t bench_coarse_exponent = 6;
  std::size_t bench_reference_exponent = 10;
  double bench_min_order = 0.45;
  double bench_max_error = 1e-2;

  std::size_t check_samples = 10000;
  std::size_t keep_paths = 1;
  std::string output_dir = "out";

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

class JsonReader {
 public:
  JsonReader(const nlohmann::json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError("config" + (prefix_.empty() ? "" : " field '" + prefix_ + "'") + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (it->is_number_integer() && !it->is_number_unsigned()) throw ConfigError("");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      } else {
        if (!it->is_string()) throw ConfigError("");
      }
      out = it->template get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config field '" + name(key) + "' has the wrong type");
    }
  }

  const nlohmann::json& child(const char* key) {
    seen_.insert(key);
    static const nlohmann::json empty = nlohmann::json::object();
    auto it = j_.find(key);
    return it == j_.end() ? empty : *it;
  }

  void reject_unknown() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config field '" + name(it.key()) + "'");
    }
  }

 private:
  std::string name(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }
  const nlohmann::json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  const auto& m = c.marks;
  nlohmann::ordered_json marks = {{"law", m.law}, {"intensity", m.intensity}, {"mean", m.mean}, {"sd", m.sd},
                                  {"lo", m.lo},   {"hi", m.hi},               {"value", m.value}, {"c", m.c},
                                  {"beta", m.beta}, {"eps", m.eps},           {"cutoff", m.cutoff}, {"nodes", m.nodes}};
  nlohmann::ordered_json j = {
      {"schema", c.schema},
      {"example", c.example},
      {"dim", c.dim},
      {"quad_points", c.quad_points},
      {"delay_cells", c.delay_cells},
      {"drift", c.drift},
      {"eta", c.eta},
      {"sigma", c.sigma},
      {"gaussian_variance", c.gaussian_variance},
      {"jumps", c.jumps},
      {"marks", marks},
      {"a", c.a},
      {"x0", c.x0},
      {"dt", c.dt},
      {"horizon", c.horizon},
      {"paths", c.paths},
      {"seed", c.seed},
      {"threads", c.threads},
      {"n_max", c.n_max},
      {"tol", c.tol},
      {"bdg_constant", c.bdg_constant},
      {"inner_damping", c.inner_damping},
      {"inner_tolerance", c.inner_tolerance},
      {"inner_max_iterations", c.inner_max_iterations},
      {"inner_max_halvings", c.inner_max_halvings},
      {"ito_constant", c.ito_constant},
      {"ito_max_violation_rate", c.ito_max_violation_rate},
      {"bench_fine_exponent", c.bench_fine_exponent},
      {"bench_coarse_exponent", c.bench_coarse_exponent},
      {"bench_reference_exponent", c.bench_reference_exponent},
      {"bench_min_order", c.bench_min_order},
      {"bench_max_error", c.bench_max_error},
      {"check_samples", c.check_samples},
      {"keep_paths", c.keep_paths},
      {"output_dir", c.output_dir},
  };
  return nlohmann::json::parse(j.dump());
}

inline void validate(const RunConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError("config field '" + field + "': " + why); };
  if (c.schema != config_schema_version) fail("schema", "unsupported version " + std::to_string(c.schema));
  example_from_name(c.example);
  scalar::by_name(c.drift);
  if (!(c.dt > 0.0) || !std::isfinite(c.dt)) fail("dt", "must be positive");
  if (!(c.horizon > 0.0) || !std::isfinite(c.horizon)) fail("horizon", "must be positive");
  if (c.dt > c.horizon) fail("dt", "must not exceed the horizon");
  if (c.paths == 0) fail("paths", "must be at least 1");
  if (c.threads == 0) fail("threads", "must be at least 1");
  if (c.dim == 0) fail("dim", "must be at least 1");
  if (c.quad_points != 0 && c.quad_points < 2 * c.dim) fail("quad_points", "must be 0 or at least 2 * dim");
  if (!(c.inner_damping > 0.0 && c.inner_damping <= 1.0)) fail("inner_damping", "must lie in (0, 1]");
  if (!(c.inner_tolerance > 0.0)) fail("inner_tolerance", "must be positive");
  if (c.inner_max_iterations == 0) fail("inner_max_iterations", "must be at least 1");
  if (c.tol < 0.0) fail("tol", "must be nonnegative");
  if (c.bdg_constant <= 0.0) fail("bdg_constant", "must be positive");
  if (c.ito_constant <= 0.0) fail("ito_constant", "must be positive");
  if (c.gaussian_variance < 0.0) fail("gaussian_variance", "must be nonnegative");
  if (c.bench_coarse_exponent > c.bench_fine_exponent) fail("bench_coarse_exponent", "must not exceed bench_fine_exponent");
  if (c.bench_reference_exponent < c.bench_coarse_exponent || c.bench_reference_exponent > c.bench_fine_exponent) {
    fail("bench_reference_exponent", "must lie between the coarse and fine exponents");
  }
  if (c.bench_fine_exponent > 24) fail("bench_fine_exponent", "at most 24");
  const auto& m = c.marks;
  if (m.law != "normal" && m.law != "uniform" && m.law != "fixed" && m.law != "power_law") {
    fail("marks.law", "unknown law '" + m.law + "'");
  }
  if (!(m.intensity >= 0.0)) fail("marks.intensity", "must be nonnegative");
  if (m.law == "normal" && !(m.sd >= 0.0)) fail("marks.sd", "must be nonnegative");
  if (m.law == "uniform" && !(m.hi > m.lo)) fail("marks.hi", "must exceed marks.lo");
  if (m.nodes == 0) fail("marks.nodes", "must be at least 1");
  if (c.example == "delay_equation") {
    const std::size_t cells = c.delay_cells ? c.delay_cells : static_cast<std::size_t>(std::llround(1.0 / c.dt));
    const double ratio = c.dt * static_cast<double>(cells);
    if (cells == 0 || std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1.0) {
      fail("delay_cells", "time step must be a multiple of the history cell width");
    }
  }
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  detail::JsonReader r(j, "");
  r.get("schema", c.schema);
  r.get("example", c.example);
  r.get("dim", c.dim);
  r.get("quad_points", c.quad_points);
  r.get("delay_cells", c.delay_cells);
  r.get("drift", c.drift);
  r.get("eta", c.eta);
  r.get("sigma", c.sigma);
  r.get("gaussian_variance", c.gaussian_variance);
  r.get("jumps", c.jumps);
  {
    detail::JsonReader m(r.child("marks"), "marks");
    m.get("law", c.marks.law);
    m.get("intensity", c.marks.intensity);
    m.get("mean", c.marks.mean);
    m.get("sd", c.marks.sd);
    m.get("lo", c.marks.lo);
    m.get("hi", c.marks.hi);
    m.get("value", c.marks.value);
    m.get("c", c.marks.c);
    m.get("beta", c.marks.beta);
    m.get("eps", c.marks.eps);
    m.get("cutoff", c.marks.cutoff);
    m.get("nodes", c.marks.nodes);
    m.reject_unknown();
  }
  r.get("a", c.a);
  r.get("x0", c.x0);
  r.get("dt", c.dt);
  r.get("horizon", c.horizon);
  r.get("paths", c.paths);
  r.get("seed", c.seed);
  r.get("threads", c.threads);
  r.get("n_max", c.n_max);
  r.get("tol", c.tol);
  r.get("bdg_constant", c.bdg_constant);
  r.get("inner_damping", c.inner_damping);
  r.get("inner_tolerance", c.inner_tolerance);
  r.get("inner_max_iterations", c.inner_max_iterations);
  r.get("inner_max_halvings", c.inner_max_halvings);
  r.get("ito_constant", c.ito_constant);
  r.get("ito_max_violation_rate", c.ito_max_violation_rate);
  r.get("bench_fine_exponent", c.bench_fine_exponent);
  r.get("bench_coarse_exponent", c.bench_coarse_exponent);
  r.get("bench_reference_exponent", c.bench_reference_exponent);
  r.get("bench_min_order", c.bench_min_order);
  r.get("bench_max_error", c.bench_max_error);
  r.get("check_samples", c.check_samples);
  r.get("keep_paths", c.keep_paths);
  r.get("output_dir", c.output_dir);
  r.reject_unknown();
  validate(c);
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Byte offset to line / column.
    const std::size_t pos = std::min<std::size_t>(e.byte, text.size());
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < pos; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("config parse error at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                      e.what());
  }
  return config_from_json(j);
}

inline RunConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config file '" + file.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Model assembly.

inline MarkSpaceSpec marks_from_config(const RunConfig& c) {
  const auto& m = c.marks;
  if (!c.jumps || m.intensity == 0.0) return MarkSpaceSpec(0.0, FixedMark{0.0}, 1);
  if (m.law == "normal") return MarkSpaceSpec(m.intensity, NormalMarks{m.mean, m.sd}, m.nodes);
  if (m.law == "uniform") return MarkSpaceSpec(m.intensity, UniformMarks{m.lo, m.hi}, m.nodes);
  if (m.law == "fixed") return MarkSpaceSpec(m.intensity, FixedMark{m.value}, m.nodes);
  try {
    return MarkSpaceSpec::truncated_power_law(m.c, m.beta, m.eps, m.cutoff, m.nodes);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("config field 'marks': ") + e.what());
  }
}

inline std::size_t delay_cells_for(const RunConfig& c, double dt) {
  return c.delay_cells ? c.delay_cells : static_cast<std::size_t>(std::llround(1.0 / dt));
}

/// Model described by the config, with hypothesis checks at `check_samples`.
/// `dt` overrides the config step (the delay history resolution follows it).
inline ModelSpec build_model(const RunConfig& c, double dt = 0.0) {
  if (dt <= 0.0) dt = c.dt;
  const MarkSpaceSpec marks = marks_from_config(c);
  switch (example_from_name(c.example)) {
    case ExampleId::reaction_diffusion: {
      ReactionDiffusionParams p;
      p.dim = c.dim;
      p.quad_points = c.quad_points;
      p.drift = scalar::by_name(c.drift);
      p.eta = c.eta;
      p.marks = marks;
      p.sigma = c.sigma;
      p.horizon = c.horizon;
      p.ito_constant = c.ito_constant;
      p.check_samples = c.check_samples;
      return build_reaction_diffusion(p);
    }
    case ExampleId::hyperbolic_wave: {
      HyperbolicParams p;
      p.dim = c.dim;
      p.quad_points = c.quad_points;
      p.damping = scalar::by_name(c.drift);
      p.horizon = c.horizon;
      p.ito_constant = c.ito_constant;
      p.check_samples = c.check_samples;
      return build_hyperbolic(p, LevyPathSpec{0.0, c.gaussian_variance, marks});
    }
    case ExampleId::delay_equation: {
      DelayParams p;
      p.cells = delay_cells_for(c, dt);
      p.eta = c.eta;
      p.horizon = c.horizon;
      p.ito_constant = c.ito_constant;
      p.check_samples = c.check_samples;
      return build_delay(p, scalar::by_name(c.drift), LevyPathSpec{0.0, c.gaussian_variance, marks});
    }
    case ExampleId::linear_scalar: {
      LinearScalarParams p;
      p.a = c.a;
      p.sigma = c.sigma;
      p.marks = marks;
      p.x0 = c.x0;
      p.horizon = c.horizon;
      p.ito_constant = c.ito_constant;
      p.check_samples = c.check_samples;
      return build_linear_scalar(p);
    }
  }
  throw ConfigError("unknown example");
}

inline InnerSolverOptions inner_options(const RunConfig& c) {
  InnerSolverOptions o;
  o.damping = c.inner_damping;
  o.tolerance = c.inner_tolerance;
  o.max_iterations = c.inner_max_iterations;
  o.max_halvings = c.inner_max_halvings;
  return o;
}

// ---------------------------------------------------------------------------
// Output.

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// key=value summary; insertion order is kept.
class RunSummary {
 public:
  void set(const std::string& key, const std::string& value) {
    for (auto& kv : entries_) {
      if (kv.first == key) {
        kv.second = value;
        return;
      }
    }
    entries_.emplace_back(key, value);
  }
  void set(const std::string& key, double value) { set(key, format_double(value)); }
  void set(const std::string& key, std::size_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }

  /// Records one named diagnostic; `pass()` is the conjunction.
  void diagnostic(const std::string& name, bool ok) {
    set("diagnostic." + name, std::string(ok ? "pass" : "fail"));
    pass_ = pass_ && ok;
  }

  /// Run-specific values (timings, output location) kept out of summary.txt
  /// so that the summary stays byte-reproducible; see write_run_info.
  void set_run_info(const std::string& key, const std::string& value) { info_.emplace_back(key, value); }
  const std::vector<std::pair<std::string, std::string>>& run_info() const { return info_; }

  bool pass() const { return pass_; }
  const std::string& get(const std::string& key) const {
    for (const auto& kv : entries_) {
      if (kv.first == key) return kv.second;
    }
    throw std::out_of_range("summary has no key '" + key + "'");
  }
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  void write(const std::filesystem::path& file) const {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out << "schema=spde-summary/" << csv_schema_version << "\n";
    for (const auto& [k, v] : entries_) out << k << "=" << v << "\n";
    out << "pass=" << (pass_ ? "true" : "false") << "\n";
  }

  void write_run_info(const std::filesystem::path& file) const {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    for (const auto& [k, v] : info_) out << k << "=" << v << "\n";
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::vector<std::pair<std::string, std::string>> info_;
  bool pass_ = true;
};

/// CSV with a leading "# schema=<name>/<version>" line.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& file, const std::string& schema, const std::vector<std::string>& columns)
      : out_(file, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write '" + file.string() + "'");
    out_ << "# schema=" << schema << "/" << csv_schema_version << "\n";
    row(columns);
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

inline void record_config(RunSummary& s, const RunConfig& c) {
  const nlohmann::json j = to_json(c);
  std::function<void(const std::string&, const nlohmann::json&)> walk = [&](const std::string& prefix,
                                                                            const nlohmann::json& v) {
    if (v.is_object()) {
      for (auto it = v.begin(); it != v.end(); ++it) walk(prefix + "." + it.key(), it.value());
    } else if (v.is_string()) {
      s.set(prefix, v.get<std::string>());
    } else if (v.is_number_float()) {
      s.set(prefix, v.get<double>());
    } else {
      s.set(prefix, v.dump());
    }
  };
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "output_dir") s.set_run_info("config.output_dir", it.value().get<std::string>());
    else walk("config." + it.key(), it.value());
  }
}

// ---------------------------------------------------------------------------
// Picard campaign.

struct PicardDiagnostics {
  bool rate = true;      // e_{n+1}/e_n <= 2 C1 T/(n+1) for 2 <= n <= 8
  bool monotone = true;  // e_n decreasing from n = 2
  bool moment = true;    // sup-moment bound within 2 standard errors
  bool a_priori = true;  // deterministic-solve norm bound on every run
  std::size_t worst_rate_n = 0;
  double worst_rate_excess = 0.0;
};

inline PicardDiagnostics diagnose_picard(const PicardTrace& tr, std::size_t first_n = 2, std::size_t last_n = 8) {
  PicardDiagnostics d;
  const std::size_t kept = tr.iterations;
  for (std::size_t n = first_n; n + 1 < kept && n <= last_n; ++n) {
    const double limit = 2.0 * tr.C1 * tr.T / static_cast<double>(n + 1);
    const double ratio = tr.e[n + 1].mean / tr.e[n].mean;
    if (!(ratio <= limit)) {
      d.rate = false;
      if (ratio / limit > d.worst_rate_excess) {
        d.worst_rate_excess = ratio / limit;
        d.worst_rate_n = n;
      }
    }
    if (!(tr.e[n + 1].mean < tr.e[n].mean)) d.monotone = false;
  }
  for (std::size_t n = 0; n < tr.moment_gap.size(); ++n) {
    if (tr.moment_gap[n].mean > 2.0 * tr.moment_gap[n].std_error) d.moment = false;
  }
  d.a_priori = tr.bound_holds;
  return d;
}

inline PicardCampaignResult picard_from_config(const RunConfig& c, const ModelSpec& model) {
  PicardOptions opt;
  opt.n_max = c.n_max;
  opt.tol = c.tol;
  opt.bdg_constant = c.bdg_constant;
  opt.inner = inner_options(c);
  opt.throw_on_divergence = false;
  const TimeGrid grid = TimeGrid::with_step(c.horizon, c.dt);
  return picard_campaign(model, grid, c.seed, c.paths, opt, c.threads, c.keep_paths);
}

inline void write_paths_csv(const std::filesystem::path& file, const std::string& schema,
                            const std::vector<CadlagPath>& paths) {
  if (paths.empty()) {
    CsvWriter w(file, schema, {"path", "t", "left_limit"});
    return;
  }
  std::vector<std::string> cols{"path", "t", "left_limit"};
  for (const auto& l : paths.front().basis()->labels()) cols.push_back(l);
  CsvWriter w(file, schema, cols);
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const auto& path = paths[p];
    for (std::size_t i = 0; i < path.size(); ++i) {
      auto emit = [&](const auto& v, bool left) {
        std::vector<std::string> row{std::to_string(p), format_double(path.grid().time(i)), left ? "1" : "0"};
        for (Eigen::Index k = 0; k < v.size(); ++k) row.push_back(format_double(v[k]));
        w.row(row);
      };
      if (path.has_jump(i)) emit(path.left_limit(i), true);
      emit(path.value(i), false);
    }
  }
}

/// Result of a campaign: summary plus a flag for solver divergence.
struct CampaignOutcome {
  RunSummary summary;
  bool diverged = false;
};

inline CampaignOutcome run_picard_campaign(const RunConfig& c, const std::filesystem::path& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  std::filesystem::create_directories(out_dir);
  CampaignOutcome out;
  RunSummary& s = out.summary;
  s.set("command", "picard");
  record_config(s, c);
  const ModelSpec model = build_model(c);
  const auto res = picard_from_config(c, model);
  const PicardTrace& tr = res.trace;

  {
    CsvWriter w(out_dir / "picard_trace.csv", "spde-picard-trace",
                {"n", "e_n", "std_error", "predicted_bound", "ratio", "step_ratio", "step_ratio_limit", "x_moment",
                 "v_moment", "moment_bound", "moment_gap", "moment_gap_se"});
    for (std::size_t n = 0; n < tr.iterations; ++n) {
      const double step = n ? tr.e[n].mean / tr.e[n - 1].mean : std::nan("");
      const double limit = n ? 2.0 * tr.C1 * tr.T / static_cast<double>(n) : std::nan("");
      w.row({std::to_string(n), format_double(tr.e[n].mean), format_double(tr.e[n].std_error),
             format_double(tr.predicted[n]), format_double(tr.e[n].mean / tr.predicted[n]), format_double(step),
             format_double(limit), format_double(tr.x_moment[n + 1].mean), format_double(tr.v_moment[n + 1].mean),
             format_double(tr.moment_bound[n + 1]), format_double(tr.moment_gap[n + 1].mean),
             format_double(tr.moment_gap[n + 1].std_error)});
    }
  }
  write_paths_csv(out_dir / "picard_paths.csv", "spde-paths", res.paths);

  const auto d = diagnose_picard(tr);
  s.set("model", model.name);
  s.set("C0", tr.C0);
  s.set("C1", tr.C1);
  s.set("M", tr.M);
  s.set("C", tr.C);
  s.set("D", tr.D);
  s.set("iterations", tr.iterations);
  s.set("converged", tr.converged);
  s.set("step_halvings", tr.halvings);
  for (std::size_t n = 0; n < tr.iterations; ++n) s.set("e_" + std::to_string(n), tr.e[n].mean);
  s.diagnostic("picard_rate", d.rate);
  s.diagnostic("picard_monotone", d.monotone);
  s.diagnostic("moment_bound", d.moment);
  s.diagnostic("a_priori_bound", d.a_priori);
  s.diagnostic("divergence", !tr.diverged);
  out.diverged = tr.diverged;
  s.set_run_info("wall_clock_seconds",
                 format_double(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()));
  return out;
}

// ---------------------------------------------------------------------------
// Pathwise Ito-inequality campaign.

struct ItoLevelResult {
  double dt = 0.0;
  std::size_t paths = 0;
  std::size_t violations = 0;
  double violation_rate = 0.0;
  double tolerance = 0.0;
  SampleStats min_slack;
  std::vector<double> times;
  std::vector<double> slack_min, slack_q01, slack_q50;  // over paths, per grid time
};

/// Runs the direct solver, takes its own forcing increments as Z, and checks
/// the inequality path by path.
inline ItoLevelResult ito_campaign(const ModelSpec& model, const TimeGrid& grid, std::uint64_t seed, std::size_t paths,
                                   unsigned threads, QvEstimator estimator = QvEstimator::mixed) {
  ItoLevelResult r;
  r.dt = grid.max_step();
  r.paths = paths;
  r.tolerance = model.ito_constant * std::sqrt(r.dt);
  const std::size_t m = grid.steps() + 1;
  std::vector<std::vector<double>> slack(paths);
  std::vector<double> mins(paths);
  std::vector<char> viol(paths);
  parallel_for(paths, threads, [&](std::size_t p) {
    const auto noise = model.noise(grid, seed, p);
    const Vec x0 = model.initial_state(seed, p);
    const auto sol = direct_solve(model, noise, x0, true);
    const auto rep = ito_inequality_check(model.semigroup, model.alpha(), SpectralVector(model.basis, x0),
                                          *sol.increments, model.metric, model.ito_constant, estimator);
    slack[p] = rep.slack;
    mins[p] = rep.min_slack;
    viol[p] = rep.violation ? 1 : 0;
  });
  r.violations = static_cast<std::size_t>(std::count(viol.begin(), viol.end(), 1));
  r.violation_rate = static_cast<double>(r.violations) / static_cast<double>(paths);
  r.min_slack = sample_stats(mins);
  r.times = grid.times();
  r.slack_min.resize(m);
  r.slack_q01.resize(m);
  r.slack_q50.resize(m);
  std::vector<double> col(paths);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < paths; ++p) col[p] = slack[p][i];
    std::sort(col.begin(), col.end());
    auto q = [&](double level) { return col[static_cast<std::size_t>(std::floor(level * static_cast<double>(paths - 1)))]; };
    r.slack_min[i] = col.front();
    r.slack_q01[i] = q(0.01);
    r.slack_q50[i] = q(0.5);
  }
  return r;
}

inline CampaignOutcome run_ito_check(const RunConfig& c, const std::filesystem::path& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  std::filesystem::create_directories(out_dir);
  CampaignOutcome out;
  RunSummary& s = out.summary;
  s.set("command", "ito-check");
  record_config(s, c);

  std::vector<ItoLevelResult> levels;
  for (double dt : {c.dt, 0.5 * c.dt}) {
    const ModelSpec model = build_model(c, dt);
    s.set("model", model.name);
    levels.push_back(ito_campaign(model, TimeGrid::with_step(c.horizon, dt), c.seed, c.paths, c.threads));
  }
  {
    CsvWriter w(out_dir / "ito_rates.csv", "spde-ito-rates",
                {"level", "dt", "paths", "violations", "violation_rate", "tolerance", "min_slack_mean", "min_slack_se"});
    for (std::size_t l = 0; l < levels.size(); ++l) {
      const auto& v = levels[l];
      w.row({std::to_string(l), format_double(v.dt), std::to_string(v.paths), std::to_string(v.violations),
             format_double(v.violation_rate), format_double(v.tolerance), format_double(v.min_slack.mean),
             format_double(v.min_slack.std_error)});
    }
  }
  {
    CsvWriter w(out_dir / "ito_slack.csv", "spde-ito-slack", {"level", "t", "slack_min", "slack_q01", "slack_q50"});
    for (std::size_t l = 0; l < levels.size(); ++l) {
      const auto& v = levels[l];
      for (std::size_t i = 0; i < v.times.size(); ++i) {
        w.row({std::to_string(l), format_double(v.times[i]), format_double(v.slack_min[i]),
               format_double(v.slack_q01[i]), format_double(v.slack_q50[i])});
      }
    }
  }
  s.set("violation_rate_dt", levels[0].violation_rate);
  s.set("violation_rate_dt_half", levels[1].violation_rate);
  s.diagnostic("violation_rate", levels[0].violation_rate <= c.ito_max_violation_rate &&
                                     levels[1].violation_rate <= c.ito_max_violation_rate);
  s.diagnostic("refinement_monotone", levels[1].violation_rate <= levels[0].violation_rate);
  s.set_run_info("wall_clock_seconds",
                 format_double(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()));
  return out;
}

// ---------------------------------------------------------------------------
// Strong-error benchmark against the stochastic exponential.

/// X_T = X0 exp((a - sigma^2/2) T + sigma W_T - T int xi dnu) prod (1 + xi_i).
inline double stochastic_exponential(double x0, double a, double sigma, const MarkSpaceSpec& marks,
                                     const NoiseRealization& noise) {
  const double T = noise.grid.horizon();
  const double w = noise.dW.rows() > 0 ? noise.dW.row(0).sum() : 0.0;
  double prod = 1.0;
  for (const auto& e : noise.events) prod *= 1.0 + e.mark;
  return x0 * std::exp((a - 0.5 * sigma * sigma) * T + sigma * w - T * marks.first_moment()) * prod;
}

struct BenchmarkLevel {
  std::size_t exponent = 0;
  double dt = 0.0;
  SampleStats squared_error;
  double rms = 0.0;
};

struct BenchmarkResult {
  std::vector<BenchmarkLevel> levels;
  double order = 0.0;  // least-squares slope of log rms vs log dt
  double error_at_reference = 0.0;
};

/// Terminal strong error of the direct solver on grids 2^-coarse .. 2^-fine
/// (horizon 1), each driven by the fine-grid noise of the same path.
inline BenchmarkResult benchmark_linear(const ModelSpec& model, double a, double sigma, double x0,
                                        std::size_t coarse_exp, std::size_t fine_exp, std::size_t reference_exp,
                                        std::uint64_t seed, std::size_t paths, unsigned threads) {
  const TimeGrid fine = TimeGrid::uniform(model.horizon, std::size_t{1} << fine_exp);
  const std::size_t levels = fine_exp - coarse_exp + 1;
  std::vector<std::vector<double>> err(levels, std::vector<double>(paths));
  parallel_for(paths, threads, [&](std::size_t p) {
    const auto noise = model.noise(fine, seed, p);
    const double exact = stochastic_exponential(x0, a, sigma, model.marks, noise);
    const Vec start = Vec::Constant(1, x0);
    for (std::size_t l = 0; l < levels; ++l) {
      const std::size_t e = coarse_exp + l;
      const auto coarse = noise.coarsen(std::size_t{1} << (fine_exp - e));
      const auto sol = direct_solve(model, coarse, start);
      const double d = sol.path.value(sol.path.size() - 1)[0] - exact;
      err[l][p] = d * d;
    }
  });
  BenchmarkResult r;
  std::vector<double> lx, ly;
  for (std::size_t l = 0; l < levels; ++l) {
    BenchmarkLevel lv;
    lv.exponent = coarse_exp + l;
    lv.dt = model.horizon / static_cast<double>(std::size_t{1} << lv.exponent);
    lv.squared_error = sample_stats(err[l]);
    lv.rms = std::sqrt(lv.squared_error.mean);
    if (lv.exponent == reference_exp) r.error_at_reference = lv.rms;
    lx.push_back(std::log(lv.dt));
    ly.push_back(std::log(lv.rms));
    r.levels.push_back(lv);
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(lx.size());
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(ly.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  r.order = sxx > 0.0 ? sxy / sxx : 0.0;
  return r;
}

inline CampaignOutcome run_benchmark_oracle(const RunConfig& c, const std::filesystem::path& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  std::filesystem::create_directories(out_dir);
  CampaignOutcome out;
  RunSummary& s = out.summary;
  s.set("command", "benchmark");
  RunConfig lin = c;
  lin.example = "linear_scalar";
  record_config(s, lin);
  const ModelSpec model = build_model(lin);
  const auto r = benchmark_linear(model, lin.a, lin.sigma, lin.x0, lin.bench_coarse_exponent, lin.bench_fine_exponent,
                                  lin.bench_reference_exponent, lin.seed, lin.paths, lin.threads);
  {
    CsvWriter w(out_dir / "benchmark.csv", "spde-benchmark", {"exponent", "dt", "rms_error", "mean_sq_error", "sq_error_se"});
    for (const auto& l : r.levels) {
      w.row({std::to_string(l.exponent), format_double(l.dt), format_double(l.rms),
             format_double(l.squared_error.mean), format_double(l.squared_error.std_error)});
    }
  }
  s.set("model", model.name);
  s.set("fitted_order", r.order);
  s.set("error_at_reference", r.error_at_reference);
  s.diagnostic("strong_order", r.order >= lin.bench_min_order);
  s.diagnostic("reference_error", r.error_at_reference < lin.bench_max_error);
  s.set_run_info("wall_clock_seconds",
                 format_double(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()));
  return out;
}

// ---------------------------------------------------------------------------
// Hypothesis checks.

inline CampaignOutcome run_hypothesis_check(const RunConfig& c, const std::filesystem::path& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  std::filesystem::create_directories(out_dir);
  CampaignOutcome out;
  RunSummary& s = out.summary;
  s.set("command", "hypothesis-check");
  record_config(s, c);
  const std::size_t samples = std::max<std::size_t>(c.check_samples, 1);

  CsvWriter w(out_dir / "hypotheses.csv", "spde-hypotheses",
              {"model", "check", "observed", "declared", "expected", "result"});
  auto emit = [&](const std::string& model, const std::string& check, double observed, double declared, bool expect,
                  bool ok) {
    w.row({model, check, format_double(observed), format_double(declared), expect ? "pass" : "fail",
           ok ? "pass" : "fail"});
    s.diagnostic(model + "." + check, ok == expect);
  };

  RunConfig unchecked = c;
  unchecked.check_samples = 0;
  const ModelSpec model = build_model(unchecked);
  const auto r = check_hypotheses(model, samples);
  emit(model.name, "semimonotone", r.semimonotone.max_ratio, model.coeffs.f.M, true, r.semimonotone.pass);
  emit(model.name, "lipschitz", r.lipschitz_growth.lipschitz, model.coeffs.C(), true, r.lipschitz_growth.pass_lipschitz);
  emit(model.name, "growth", r.lipschitz_growth.growth, model.coeffs.D(), true, r.lipschitz_growth.pass_growth);
  emit(model.name, "continuity", r.continuity.fine, r.continuity.coarse, true, r.continuity.pass);
  emit(model.name, "contraction", r.contraction.max_excess, 1.0, true, !r.contraction.violation);

  // Negative control: the cube is not semimonotone for any finite M.
  const auto basis = sine_basis(c.dim);
  const DriftSpec cube = nemitsky(scalar::cube(), *basis, c.quad_points ? c.quad_points : 4 * c.dim);
  const auto cr = check_semimonotone(cube, WeightedInnerProduct::unit(c.dim), samples, 10.0, 0.0);
  emit("cube_control", "semimonotone", cr.max_ratio, 0.0, false, cr.pass);
  s.set_run_info("wall_clock_seconds",
                 format_double(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()));
  return out;
}

// ---------------------------------------------------------------------------
// Direct simulation.

inline CampaignOutcome run_simulate(const RunConfig& c, const std::filesystem::path& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  std::filesystem::create_directories(out_dir);
  CampaignOutcome out;
  RunSummary& s = out.summary;
  s.set("command", "simulate");
  record_config(s, c);
  const ModelSpec model = build_model(c);
  const TimeGrid grid = TimeGrid::with_step(c.horizon, c.dt);
  std::vector<double> terminal(c.paths), sup(c.paths);
  std::vector<std::optional<CadlagPath>> kept(std::min(c.keep_paths, c.paths));
  parallel_for(c.paths, c.threads, [&](std::size_t p) {
    auto sol = direct_solve(model, model.noise(grid, c.seed, p), model.initial_state(c.seed, p));
    terminal[p] = model.metric.norm2(sol.path.value(sol.path.size() - 1));
    sup[p] = detail::sup_norm2(sol.path, model.metric);
    if (p < kept.size()) kept[p] = std::move(sol.path);
  });
  std::vector<CadlagPath> paths;
  for (auto& k : kept) paths.push_back(std::move(*k));
  write_paths_csv(out_dir / "paths.csv", "spde-paths", paths);
  const auto ts = sample_stats(terminal);
  const auto ss = sample_stats(sup);
  {
    CsvWriter w(out_dir / "moments.csv", "spde-moments", {"statistic", "mean", "std_error"});
    w.row({"terminal_norm2", format_double(ts.mean), format_double(ts.std_error)});
    w.row({"sup_norm2", format_double(ss.mean), format_double(ss.std_error)});
  }
  s.set("model", model.name);
  s.set("terminal_norm2_mean", ts.mean);
  s.set("sup_norm2_mean", ss.mean);
  s.diagnostic("finite", std::isfinite(ts.mean) && std::isfinite(ss.mean));
  s.set_run_info("wall_clock_seconds",
                 format_double(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()));
  return out;
}

}  // namespace spde
