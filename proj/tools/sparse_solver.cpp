// Command-line driver for the sparse source-localization experiments:
//   solve      run one method, write history.csv and measure_final.json
//   compare    run pdap/gcg/spinat on shared data against one reference
//   reference  compute and store the high-accuracy reference solution
//   check      run the built-in property suite
//
// Exit codes for solve: 0 tolerance reached, 2 iteration cap, 1 error.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <thread>

#include "pdap/experiment.hpp"

namespace {

using namespace pdap;

struct CliOverrides {
  std::string config_path;
  std::string method = "pdap";
  std::string out;
  double tol = -1.0;
  int max_iter = -1;
  int spinat_steps = -1;
  std::int64_t seed = -1;
};

ExperimentConfig load_with_overrides(const CliOverrides& ov) {
  ExperimentConfig cfg =
      ov.config_path.empty() ? ExperimentConfig{} : load_config(ov.config_path);
  if (ov.seed >= 0) cfg.seed = static_cast<std::uint64_t>(ov.seed);
  if (ov.tol > 0.0) cfg.solver.tol = ov.tol;
  if (ov.max_iter > 0) cfg.solver.max_iter = ov.max_iter;
  if (ov.spinat_steps > 0) cfg.solver.spinat_steps = ov.spinat_steps;
  if (!ov.out.empty()) cfg.output_dir = ov.out;
  return cfg;
}

Method parse_method(const std::string& name) {
  if (name == "pdap") return Method::Pdap;
  if (name == "gcg") return Method::Gcg;
  if (name == "spinat") return Method::Spinat;
  throw CLI::ValidationError("--method must be pdap, gcg or spinat");
}

int thread_cap() {
  int cap = static_cast<int>(std::thread::hardware_concurrency());
  if (cap < 1) cap = 1;
  if (const char* env = std::getenv("SPARSE_SOLVER_THREADS")) {
    const int requested = std::atoi(env);
    if (requested >= 1) cap = std::min(cap, requested);
  }
  return cap;
}

double total_wall_ms(const RunResult& rr) {
  double t = 0.0;
  for (const auto& rec : rr.records) t += rec.wall_ms;
  return t;
}

int cmd_solve(const CliOverrides& ov) {
  const ExperimentConfig cfg = load_with_overrides(ov);
  const Method method = parse_method(ov.method);
  const SyntheticData data = synth_data(cfg);
  const auto prob = make_helmholtz_problem(cfg, data.y_d);
  SolverConfig sc = solver_config_for(cfg, method);
  if (ov.tol > 0.0) sc.tol = ov.tol;
  if (ov.max_iter > 0) sc.max_iter = ov.max_iter;
  if (ov.spinat_steps > 0) sc.spinat_steps = ov.spinat_steps;

  const RunResult rr = run(prob, sc);

  const std::filesystem::path out(cfg.output_dir);
  write_text_file(out / "history.csv", history_csv(rr.records));
  write_text_file(out / "measure_final.json", measure_to_json(rr.final_measure));

  std::cerr << "method=" << method_name(method) << " rows=" << rr.records.size()
            << " support=" << rr.final_measure.size()
            << " wall_ms=" << total_wall_ms(rr) << "\n";
  if (rr.status == RunStatus::StepError) {
    std::cerr << "error: " << rr.error << "\n";
    return 1;
  }
  if (!rr.records.empty()) {
    const auto& last = rr.records.back();
    std::cerr << "final j=" << last.j_val << " pnorm-lambda="
              << last.pnorm_c - last.lambda_k << "\n";
  }
  return rr.status == RunStatus::Converged ? 0 : 2;
}

int cmd_reference(const CliOverrides& ov) {
  const ExperimentConfig cfg = load_with_overrides(ov);
  const SyntheticData data = synth_data(cfg);
  const auto prob = make_helmholtz_problem(cfg, data.y_d);
  ReferenceConfig rc;
  rc.maximizer = cfg.solver.maximizer;
  const Reference ref = build_reference(prob, rc);
  const auto kb = kbar_condition(ref, prob.kernel);

  const std::filesystem::path out(cfg.output_dir);
  write_text_file(out / "reference.json", measure_to_json(ref.u_bar));
  std::cout << "support=" << ref.u_bar.size() << " j_bar=" << ref.j_bar
            << " lambda_bar=" << ref.lambda_bar << " R=" << ref.R
            << " separation_ok=" << (ref.separation_ok ? "yes" : "no")
            << " cond_kbar=" << kb.cond << " min_sv=" << kb.min_sv << "\n";
  return 0;
}

int cmd_compare(const CliOverrides& ov) {
  const ExperimentConfig cfg = load_with_overrides(ov);
  const SyntheticData data = synth_data(cfg);
  const auto prob = make_helmholtz_problem(cfg, data.y_d);

  ReferenceConfig rc;
  rc.maximizer = cfg.solver.maximizer;
  const Reference ref = build_reference(prob, rc);
  const std::filesystem::path out(cfg.output_dir);
  write_text_file(out / "reference.json", measure_to_json(ref.u_bar));

  const Method methods[] = {Method::Pdap, Method::Gcg, Method::Spinat};
  RunResult results[3];
  std::string errors[3];

  auto run_one = [&](int idx) {
    try {
      results[idx] = run(prob, solver_config_for(cfg, methods[idx]));
    } catch (const std::exception& e) {
      errors[idx] = e.what();
    }
  };

  if (thread_cap() > 1) {
    std::vector<std::thread> workers;
    for (int i = 0; i < 3; ++i) workers.emplace_back(run_one, i);
    for (auto& w : workers) w.join();
  } else {
    for (int i = 0; i < 3; ++i) run_one(i);
  }

  int rc_all = 0;
  for (int i = 0; i < 3; ++i) {
    const std::string name = method_name(methods[i]);
    if (!errors[i].empty()) {
      std::cerr << name << ": error: " << errors[i] << "\n";
      rc_all = 1;
      continue;
    }
    const RunResult& rr = results[i];
    const auto metrics = compute_metrics(ref, prob, rr);
    const Summary summary = make_summary(ref, prob, rr, metrics);
    write_text_file(out / name / "history.csv", history_csv(rr.records));
    write_text_file(out / name / "metrics.csv", metrics_csv(metrics));
    write_text_file(out / name / "summary.json", summary_json(summary));
    write_text_file(out / name / "measure_final.json",
                    measure_to_json(rr.final_measure));
    std::cerr << name << ": rows=" << rr.records.size()
              << " final_support=" << rr.final_measure.size()
              << " r_j_final=" << (metrics.empty() ? 0.0 : metrics.back().r_j)
              << " wall_ms=" << total_wall_ms(rr) << "\n";
    if (rr.status == RunStatus::StepError) {
      std::cerr << name << ": error: " << rr.error << "\n";
      rc_all = 1;
    }
  }
  return rc_all;
}

// ---------------------------------------------------------------------------
// check: property suite over the default experiment

struct CheckRow {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double limit = 0.0;
};

void report(std::vector<CheckRow>& rows, const std::string& name, double value,
            double limit) {
  rows.push_back({name, value <= limit, value, limit});
}

int cmd_check() {
  std::vector<CheckRow> rows;
  ExperimentConfig cfg;
  const HelmholtzKernel kernel = cfg.make_kernel();
  const int h = kernel.dim_h();
  const int dy = kernel.dim_y();

  {  // adjointness over 100 seeds
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      Rng rng(1000 + trial);
      DiscreteMeasure m;
      for (int n = 0; n < 3; ++n) {
        Vec x(1);
        x[0] = -1.0 + 2.0 * rng.uniform();
        Vec u(h);
        for (int i = 0; i < h; ++i) u[i] = rng.normal();
        m.add_atom(std::move(x), std::move(u));
      }
      Vec y(dy);
      for (int i = 0; i < dy; ++i) y[i] = rng.normal();
      const double lhs = apply_K(kernel, m).dot(y);
      double rhs = 0.0;
      for (std::size_t n = 0; n < m.size(); ++n)
        rhs += apply_Kstar_at(kernel, y, m.points[n], 0).p.dot(m.coeffs[n]);
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    }
    report(rows, "adjointness (100 seeds)", worst, 1e-12);
  }

  {  // kernel derivative FD checks
    double worst_dp = 0.0, worst_d2p = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      Rng rng(2000 + trial);
      Vec x(1);
      x[0] = -0.9 + 1.8 * rng.uniform();
      Vec y(dy);
      for (int i = 0; i < dy; ++i) y[i] = rng.normal();
      const FdReport rep = fd_check(kernel, x, y);
      worst_dp = std::max(worst_dp, rep.max_err_dp);
      worst_d2p = std::max(worst_d2p, rep.max_err_d2p);
    }
    report(rows, "kernel dp vs FD", worst_dp, 1e-5);
    report(rows, "kernel d2p vs FD", worst_d2p, 1e-4);
  }

  {  // certificate derivative FD checks
    const SyntheticData data = synth_data(cfg);
    const auto prob = make_helmholtz_problem(cfg, data.y_d);
    const Vec gradF = prob.loss.grad(Vec::Zero(dy));
    double worst_g = 0.0, worst_hs = 0.0;
    const double step = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
      Rng rng(3000 + trial);
      Vec x(1);
      x[0] = -0.9 + 1.8 * rng.uniform();
      const CertificateEval ev = eval_P(kernel, gradF, x, 2);
      Vec xp = x, xm = x;
      xp[0] += step;
      xm[0] -= step;
      const CertificateEval evp = eval_P(kernel, gradF, xp, 1);
      const CertificateEval evm = eval_P(kernel, gradF, xm, 1);
      const double fd_g = (evp.P - evm.P) / (2 * step);
      const double fd_h = (evp.grad[0] - evm.grad[0]) / (2 * step);
      worst_g = std::max(worst_g,
                         std::abs(fd_g - ev.grad[0]) / std::max(1.0, std::abs(ev.grad[0])));
      worst_hs = std::max(worst_hs, std::abs(fd_h - ev.hess(0, 0)) /
                                        std::max(1.0, std::abs(ev.hess(0, 0))));
    }
    report(rows, "certificate gradP vs FD", worst_g, 1e-5);
    report(rows, "certificate hessP vs FD", worst_hs, 1e-4);
  }

  {  // prox properties
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      Rng rng(4000 + trial);
      Vec v(h), w(h);
      for (int i = 0; i < h; ++i) {
        v[i] = rng.normal();
        w[i] = rng.normal();
      }
      const double tb = rng.uniform();
      const double lhs = (prox_group(v, tb) - prox_group(w, tb)).norm();
      worst = std::max(worst, lhs - (v - w).norm());
    }
    report(rows, "prox nonexpansive (200 pairs)", worst, 1e-14);
    Vec v(2);
    v << 2.0, 0.0;
    report(rows, "prox closed form", (prox_group(v, 0.5) - (Vec(2) << 1.5, 0.0).finished()).norm(), 1e-15);
  }

  {  // subproblem versus an independent proximal-gradient oracle
    const SyntheticData data = synth_data(cfg);
    const auto prob = make_helmholtz_problem(cfg, data.y_d);
    double worst = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
      Rng rng(5000 + trial);
      std::vector<Vec> pts;
      for (int n = 0; n < 3; ++n) {
        Vec x(1);
        x[0] = -1.0 + 2.0 * rng.uniform();
        pts.push_back(std::move(x));
      }
      const ActiveSet as = build_active_set(kernel, pts);
      const SubproblemResult res = solve_coefficients(prob, as, {}, 0.0);
      // plain ISTA with the exact Lipschitz step
      const Mat& B = as.assembled;
      Eigen::JacobiSVD<Mat> svd(B);
      const double L = svd.singularValues().maxCoeff();
      const double tau = 1.0 / (L * L);
      Vec u = Vec::Zero(B.cols());
      for (int it = 0; it < 200000; ++it) {
        const Vec g = B.transpose() * (B * u - data.y_d);
        const Vec v = u - tau * g;
        for (int blk = 0; blk < 3; ++blk)
          u.segment(blk * h, h) = prox_group(v.segment(blk * h, h), tau * prob.cost.beta);
      }
      auto objective = [&](const std::vector<Vec>& coeffs) {
        DiscreteMeasure m;
        for (int n = 0; n < 3; ++n) m.add_atom(pts[n], coeffs[n]);
        return prob.eval_j(m).value;
      };
      std::vector<Vec> oracle_coeffs;
      for (int blk = 0; blk < 3; ++blk) oracle_coeffs.push_back(u.segment(blk * h, h));
      worst = std::max(worst, std::abs(objective(res.coeffs) - objective(oracle_coeffs)));
    }
    report(rows, "subproblem vs prox oracle", worst, 1e-8);
  }

  {  // gap sandwich along a short PDAP run
    const SyntheticData data = synth_data(cfg);
    const auto prob = make_helmholtz_problem(cfg, data.y_d);
    ReferenceConfig rc;
    rc.tol = 1e-11;
    const Reference ref = build_reference(prob, rc);
    SolverConfig sc = solver_config_for(cfg, Method::Pdap);
    sc.tol = 1e-9;
    sc.max_iter = 40;
    const RunResult rr = run(prob, sc);
    double worst = 0.0;
    for (std::size_t i = 0; i < rr.records.size(); ++i) {
      const auto& rec = rr.records[i];
      const double scale = 1.0 + std::abs(rec.j_val);
      const double r_j = rec.j_val - ref.j_bar;
      worst = std::max(worst, (r_j - rec.gap) / scale);
      worst = std::max(worst,
                       (rec.gap - prob.m0_bound * (rec.pnorm_c - rec.lambda_k)) / scale);
    }
    report(rows, "gap sandwich on PDAP run", worst, 1e-10);
  }

  bool all_pass = true;
  std::printf("%-34s %-6s %13s %13s\n", "property", "status", "value", "limit");
  for (const auto& row : rows) {
    all_pass = all_pass && row.pass;
    std::printf("%-34s %-6s %13.3e %13.3e\n", row.name.c_str(),
                row.pass ? "pass" : "FAIL", row.value, row.limit);
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse source localization via conditional gradient methods"};
  app.require_subcommand(1);

  CliOverrides ov;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", ov.config_path, "JSON experiment config");
    cmd->add_option("--seed", ov.seed, "PRNG seed override");
    cmd->add_option("--tol", ov.tol, "termination tolerance on ||p||_C - lambda");
    cmd->add_option("--max-iter", ov.max_iter, "iteration cap");
    cmd->add_option("--out", ov.out, "output directory");
  };

  CLI::App* solve = app.add_subcommand("solve", "run one method");
  add_common(solve);
  solve->add_option("--method", ov.method, "pdap | gcg | spinat");
  solve->add_option("--spinat-steps", ov.spinat_steps, "proximal passes per step");

  CLI::App* compare = app.add_subcommand("compare", "run all methods on shared data");
  add_common(compare);
  compare->add_option("--spinat-steps", ov.spinat_steps, "proximal passes per step");

  CLI::App* reference = app.add_subcommand("reference", "compute the reference solution");
  add_common(reference);

  app.add_subcommand("check", "run the property suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) return cmd_solve(ov);
    if (compare->parsed()) return cmd_compare(ov);
    if (reference->parsed()) return cmd_reference(ov);
    return cmd_check();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
