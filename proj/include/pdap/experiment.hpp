#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include "pdap/diagnostics.hpp"
#include "pdap/helmholtz.hpp"
#include "pdap/rng.hpp"
#include "pdap/solver.hpp"

namespace pdap {

/// Full description of a synthetic source-localization experiment: kernel,
/// ground-truth source, noise level, cost, and solver settings.
struct ExperimentConfig {
  // kernel
  std::vector<double> kappas;
  double depth = 0.5;
  std::vector<double> obs_points;  // empty selects M uniform points
  int num_obs = 7;
  Domain domain = Domain::interval(-1.0, 1.0);

  // ground truth (declared defaults; interleaved re/im per complex channel)
  std::vector<double> truth_positions = {-0.6, 0.1, 0.55};
  std::vector<Vec> truth_coefficients;

  double noise_rel = 0.1;
  std::uint64_t seed = 7101;

  Cost cost = Cost::linear(1.0);
  double m0_bound = 0.0;  // 0: derived from the cost

  SolverConfig solver;                       // shared settings
  nlohmann::json per_method_overrides;       // optional "solvers" block
  std::string output_dir = "out";

  ExperimentConfig() {
    const double pi = 3.14159265358979323846;
    kappas = {4.0 * pi, 6.0 * pi};
    truth_coefficients = {
        (Vec(4) << 1.0, 0.0, 0.5, 0.5).finished(),
        (Vec(4) << 0.8, -0.4, -0.9, 0.1).finished(),
        (Vec(4) << -0.6, 0.7, 0.7, -0.3).finished(),
    };
  }

  std::vector<double> observation_points() const {
    if (!obs_points.empty()) return obs_points;
    std::vector<double> pts(num_obs);
    for (int m = 0; m < num_obs; ++m)
      pts[m] = domain.lower[0] +
               (domain.upper[0] - domain.lower[0]) * m / double(num_obs - 1);
    return pts;
  }

  HelmholtzKernel make_kernel() const {
    return HelmholtzKernel(kappas, depth, observation_points(), domain);
  }

  DiscreteMeasure truth() const {
    DiscreteMeasure u;
    for (std::size_t n = 0; n < truth_positions.size(); ++n) {
      Vec x(1);
      x[0] = truth_positions[n];
      u.add_atom(std::move(x), truth_coefficients[n]);
    }
    return u;
  }
};

namespace detail {

inline void parse_solver(const nlohmann::json& j, SolverConfig& cfg) {
  if (j.contains("tol")) cfg.tol = j["tol"].get<double>();
  if (j.contains("max_iter")) cfg.max_iter = j["max_iter"].get<int>();
  if (j.contains("spinat_steps")) cfg.spinat_steps = j["spinat_steps"].get<int>();
  if (j.contains("armijo_gamma")) cfg.armijo_gamma = j["armijo_gamma"].get<double>();
  if (j.contains("armijo_max_halvings"))
    cfg.armijo_max_halvings = j["armijo_max_halvings"].get<int>();
  if (j.contains("sub_tol")) cfg.sub_tol = j["sub_tol"].get<double>();
  if (j.contains("maximizer")) {
    const auto& m = j["maximizer"];
    if (m.contains("n_starts")) cfg.maximizer.n_starts = m["n_starts"].get<int>();
    if (m.contains("newton_tol"))
      cfg.maximizer.newton_tol = m["newton_tol"].get<double>();
    if (m.contains("max_newton_iters"))
      cfg.maximizer.max_newton_iters = m["max_newton_iters"].get<int>();
  }
}

}  // namespace detail

inline Cost cost_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "linear") return Cost::linear(j.at("beta").get<double>());
  if (type == "ball") return Cost::norm_ball(j.at("M").get<double>());
  throw std::invalid_argument("cost type must be 'linear' or 'ball'");
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (j.contains("kernel")) {
    const auto& k = j["kernel"];
    if (k.contains("type") && k["type"].get<std::string>() != "helmholtz")
      throw std::invalid_argument("kernel type must be 'helmholtz'");
    if (k.contains("kappas")) cfg.kappas = k["kappas"].get<std::vector<double>>();
    if (k.contains("depth")) cfg.depth = k["depth"].get<double>();
    if (k.contains("obs_points"))
      cfg.obs_points = k["obs_points"].get<std::vector<double>>();
    if (k.contains("num_obs")) cfg.num_obs = k["num_obs"].get<int>();
  }
  if (j.contains("domain")) {
    const auto& d = j["domain"];
    const auto lo = d.at("lower").get<std::vector<double>>();
    const auto up = d.at("upper").get<std::vector<double>>();
    Vec l(lo.size()), u(up.size());
    for (std::size_t i = 0; i < lo.size(); ++i) l[i] = lo[i];
    for (std::size_t i = 0; i < up.size(); ++i) u[i] = up[i];
    cfg.domain = Domain(std::move(l), std::move(u));
  }
  if (j.contains("truth")) {
    const auto& t = j["truth"];
    cfg.truth_positions = t.at("positions").get<std::vector<double>>();
    cfg.truth_coefficients.clear();
    for (const auto& row : t.at("coefficients")) {
      Vec c(row.size());
      for (std::size_t i = 0; i < row.size(); ++i) c[i] = row[i].get<double>();
      cfg.truth_coefficients.push_back(std::move(c));
    }
    if (cfg.truth_positions.size() != cfg.truth_coefficients.size())
      throw std::invalid_argument("truth: positions/coefficients size mismatch");
  }
  if (j.contains("noise_rel")) cfg.noise_rel = j["noise_rel"].get<double>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("cost")) cfg.cost = cost_from_json(j["cost"]);
  if (j.contains("m0_bound")) cfg.m0_bound = j["m0_bound"].get<double>();
  if (j.contains("solver")) detail::parse_solver(j["solver"], cfg.solver);
  if (j.contains("solvers")) cfg.per_method_overrides = j["solvers"];
  if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j;
  in >> j;
  return config_from_json(j);
}

inline SolverConfig solver_config_for(const ExperimentConfig& cfg, Method method) {
  SolverConfig sc = cfg.solver;
  sc.method = method;
  if (cfg.per_method_overrides.is_object()) {
    const std::string key = method_name(method);
    if (cfg.per_method_overrides.contains(key))
      detail::parse_solver(cfg.per_method_overrides[key], sc);
  }
  return sc;
}

struct SyntheticData {
  DiscreteMeasure u_star;
  Vec y_d;
};

/// y_d = K u_star + w where w is a seeded Gaussian vector scaled so that
/// ||w|| = noise_rel * ||K u_star||.
inline SyntheticData synth_data(const ExperimentConfig& cfg) {
  const HelmholtzKernel kernel = cfg.make_kernel();
  SyntheticData out;
  out.u_star = cfg.truth();
  const Vec y0 = apply_K(kernel, out.u_star);
  Vec w = Vec::Zero(y0.size());
  if (cfg.noise_rel > 0.0) {
    Rng rng(cfg.seed);
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.normal();
    const double nw = w.norm();
    if (nw > 0.0) w *= cfg.noise_rel * y0.norm() / nw;
  }
  out.y_d = y0 + w;
  return out;
}

inline Problem<HelmholtzKernel> make_helmholtz_problem(
    const ExperimentConfig& cfg, const Vec& y_d) {
  return make_problem(cfg.make_kernel(), y_d, cfg.cost, cfg.m0_bound);
}

// --- file emission ----------------------------------------------------------
// All numeric output is printed with "%.17g", the decimal point, and no
// locale, so files reproduce byte-for-byte for a fixed config and seed.  The
// wall_ms column is pinned to 0 in files for the same reason; measured
// timings stay in RunResult and on the console.

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_point(const Vec& x) {
  std::string s;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (i) s += ';';
    s += fmt(x[i]);
  }
  return s;
}

}  // namespace detail

inline std::string history_csv_header() {
  return "k,j,gap,lambda,pnorm,support_size,xhat,step_size,inner_iters,wall_ms";
}

inline std::string history_csv_row(const IterateRecord& r) {
  std::string s = std::to_string(r.k);
  s += ',' + detail::fmt(r.j_val);
  s += ',' + detail::fmt(r.gap);
  s += ',' + detail::fmt(r.lambda_k);
  s += ',' + detail::fmt(r.pnorm_c);
  s += ',' + std::to_string(r.support_size);
  s += ',' + detail::fmt_point(r.xhat);
  s += ',' + detail::fmt(r.step_size);
  s += ',' + std::to_string(r.inner_iters);
  s += ",0";
  return s;
}

inline std::string history_csv(const std::vector<IterateRecord>& records) {
  std::string s = history_csv_header();
  s += '\n';
  for (const auto& r : records) {
    s += history_csv_row(r);
    s += '\n';
  }
  return s;
}

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string s = "k,r_j,gap,support_error,coeff_error,dual_bound\n";
  for (const auto& r : rows) {
    s += std::to_string(r.k);
    s += ',' + detail::fmt(r.r_j);
    s += ',' + detail::fmt(r.gap);
    s += ',' + detail::fmt(r.support_error);
    s += ',' + detail::fmt(r.coeff_error);
    s += ',' + detail::fmt(r.dual_bound);
    s += '\n';
  }
  return s;
}

inline std::string summary_json(const Summary& s) {
  auto num = [](double v) {
    return std::isfinite(v) ? detail::fmt(v) : std::string("null");
  };
  std::string j = "{";
  j += "\"zeta_residual\":" + num(s.zeta_residual);
  j += ",\"zeta_support\":" + num(s.zeta_support);
  j += ",\"zeta_coeff\":" + num(s.zeta_coeff);
  j += ",\"r2_residual\":" + num(s.r2_residual);
  j += ",\"r2_support\":" + num(s.r2_support);
  j += ",\"r2_coeff\":" + num(s.r2_coeff);
  j += ",\"cond_kbar\":" + num(s.cond_kbar);
  j += ",\"theta0\":" + num(s.theta0);
  j += ",\"iters_to_tol\":" + std::to_string(s.iters_to_tol);
  j += ",\"final_support\":" + std::to_string(s.final_support);
  j += "}";
  return j;
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

}  // namespace pdap
