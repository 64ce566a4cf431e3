#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "pdap/certificate.hpp"
#include "pdap/subproblem.hpp"

namespace pdap {

enum class Method { Pdap, Gcg, Spinat };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::Pdap: return "pdap";
    case Method::Gcg: return "gcg";
    default: return "spinat";
  }
}

struct SolverConfig {
  Method method = Method::Pdap;
  int spinat_steps = 100;          // l in SPINAT(l)
  double tol = 1e-12;              // on ||p||_C - lambda
  int max_iter = 100;
  double armijo_gamma = 0.1;
  int armijo_max_halvings = 50;
  double sub_tol = 0.0;            // <= 0 selects 1e-13 * (1 + ||y_d||)
  MaximizerConfig maximizer;
};

struct IterateRecord {
  int k = 0;
  double j_val = 0.0;
  double gap = 0.0;
  double lambda_k = 0.0;
  double pnorm_c = 0.0;
  int support_size = 0;
  Vec xhat;
  double step_size = 0.0;
  double wall_ms = 0.0;
  int inner_iters = 0;
};

enum class RunStatus { Converged, MaxIterations, StepError };

struct RunResult {
  std::vector<IterateRecord> records;
  std::vector<DiscreteMeasure> iterates;  // state u^k matching records[k]
  DiscreteMeasure final_measure;
  RunStatus status = RunStatus::MaxIterations;
  std::string error;
};

struct StepInfo {
  double step_size = 0.0;
  int inner_iters = 0;
  bool stalled = false;
};

namespace detail {

template <class Kernel>
DiscreteMeasure trial_point(const Problem<Kernel>& prob, const DualState& dual) {
  DiscreteMeasure vhat;
  if (dual.p_max <= 0.0) return vhat;
  const double mhat = g_trial_mass(prob.cost, dual.p_max, prob.m0_bound);
  if (mhat == 0.0) return vhat;
  const Vec p_at =
      apply_Kstar_at(prob.kernel, Vec(-dual.gradF), dual.xhat, 0).p;
  vhat.add_atom(dual.xhat, (mhat / dual.p_max) * p_at);
  return vhat;
}

}  // namespace detail

/// One conditional-gradient step: convex combination of the iterate with the
/// analytic trial point, step size by the Armijo-Goldstein halving rule
///   j(m + s(vhat - m)) <= j(m) - gamma * s * Phi(m).
/// When sufficient decrease is unreachable the smallest step is taken if it
/// still descends, otherwise the iterate is kept (stall).
template <class Kernel>
std::pair<DiscreteMeasure, StepInfo> gcg_step(const Problem<Kernel>& prob,
                                              const DiscreteMeasure& m,
                                              const DualState& dual,
                                              const SolverConfig& cfg) {
  StepInfo info;
  const double phi = gap(prob, m, dual);
  if (phi <= 0.0) return {m, info};  // stationary

  const DiscreteMeasure vhat = detail::trial_point(prob, dual);
  const DiscreteMeasure delta = subtract(vhat, m);
  const ObjectiveValue j_m = prob.eval_j(m);

  double s = 1.0;
  for (int halve = 0; halve <= cfg.armijo_max_halvings; ++halve, s *= 0.5) {
    DiscreteMeasure cand = axpy(m, s, delta);
    const ObjectiveValue j_c = prob.eval_j(cand);
    if (j_c.finite && j_c.value <= j_m.value - cfg.armijo_gamma * s * phi) {
      info.step_size = s;
      return {prune(cand, 0.0), info};
    }
  }
  // line search exhausted: accept the smallest step only if it descends
  const double s_min = std::pow(0.5, cfg.armijo_max_halvings);
  DiscreteMeasure cand = axpy(m, s_min, delta);
  const ObjectiveValue j_c = prob.eval_j(cand);
  if (j_c.finite && j_c.value <= j_m.value) {
    info.step_size = s_min;
    return {prune(cand, 0.0), info};
  }
  info.stalled = true;
  return {m, info};
}

/// GCG step followed by l proximal-gradient passes on the coefficients over
/// the intermediate support, then pruning of exact zeros.
template <class Kernel>
std::pair<DiscreteMeasure, StepInfo> spinat_step(const Problem<Kernel>& prob,
                                                 const DiscreteMeasure& m,
                                                 const DualState& dual,
                                                 const SolverConfig& cfg) {
  if (prob.cost.kind != Cost::Kind::Linear) throw UnsupportedCost{};
  auto [half, info] = gcg_step(prob, m, dual, cfg);
  if (half.empty()) return {half, info};

  const int h = prob.kernel.dim_h();
  const ActiveSet active = build_active_set(prob.kernel, half.points);
  GroupSparseSolver solver(active.assembled, prob.loss.y_d, prob.cost.beta, h);
  Vec u(static_cast<Eigen::Index>(half.size()) * h);
  for (std::size_t i = 0; i < half.size(); ++i)
    u.segment(static_cast<Eigen::Index>(i) * h, h) = half.coeffs[i];

  const double tau0 = solver.tau();
  for (int pass = 0; pass < cfg.spinat_steps; ++pass)
    u = solver.prox_gradient_pass(u, tau0);

  DiscreteMeasure next;
  for (std::size_t i = 0; i < half.size(); ++i)
    next.add_atom(half.points[i], u.segment(static_cast<Eigen::Index>(i) * h, h));
  info.inner_iters = cfg.spinat_steps;
  return {prune(next, 0.0), info};
}

/// One active-point step: insert the global maximizer of P into the support,
/// resolve the coefficient subproblem to tolerance, prune zero coefficients.
template <class Kernel>
std::pair<DiscreteMeasure, StepInfo> pdap_step(const Problem<Kernel>& prob,
                                               const DiscreteMeasure& m,
                                               const DualState& dual,
                                               const SolverConfig& cfg) {
  if (prob.cost.kind != Cost::Kind::Linear) throw UnsupportedCost{};
  std::vector<Vec> points = m.points;
  std::vector<Vec> warm = m.coeffs;
  bool already_there = false;
  for (const auto& x : points)
    if (x == dual.xhat) {
      already_there = true;
      break;
    }
  if (!already_there) {
    points.push_back(dual.xhat);
    warm.push_back(Vec::Zero(prob.kernel.dim_h()));
  }

  const ActiveSet active = build_active_set(prob.kernel, std::move(points));
  const double sub_tol =
      cfg.sub_tol > 0.0 ? cfg.sub_tol : default_subproblem_tol(prob.loss.y_d);
  const SubproblemResult res = solve_coefficients(prob, active, warm, sub_tol);
  if (!res.converged()) {
    char msg[96];
    std::snprintf(msg, sizeof(msg),
                  "subproblem hit the inner iteration cap (residual %.3e)",
                  res.kkt_residual);
    throw std::runtime_error(msg);
  }

  DiscreteMeasure next;
  for (std::size_t i = 0; i < active.points.size(); ++i)
    next.add_atom(active.points[i], res.coeffs[i]);
  StepInfo info;
  info.step_size = 1.0;
  info.inner_iters = res.inner_iters;
  return {prune(next, 0.0), info};
}

/// Outer loop shared by all three methods.  Row k of the history carries the
/// state of u^k together with the step taken from it; the terminal row of a
/// converged run carries no step.  Stops when ||p^k||_C - lambda^k <= tol or
/// after max_iter steps.  The per-row callback fires as soon as a row is
/// complete so that interrupted runs keep a usable prefix.
template <class Kernel>
RunResult run(const Problem<Kernel>& prob, const SolverConfig& cfg,
              DiscreteMeasure u0 = {},
              const std::function<void(const IterateRecord&)>& on_record = {}) {
  using clock = std::chrono::steady_clock;
  RunResult out;
  DiscreteMeasure u = std::move(u0);
  try {
    for (int k = 0;; ++k) {
      const auto t0 = clock::now();
      const DualState dual = make_dual_state(prob, u, cfg.maximizer);
      const ObjectiveValue jv = prob.eval_j(u);
      if (!jv.finite) throw std::runtime_error("objective infeasible at iterate");
      if (tv_norm(u) > prob.m0_bound * (1.0 + 1e-9) + 1e-12)
        throw std::logic_error("iterate norm exceeds the configured M0 bound");

      IterateRecord rec;
      rec.k = k;
      rec.j_val = jv.value;
      rec.gap = gap(prob, u, dual);
      rec.lambda_k = dual.lambda_k;
      rec.pnorm_c = dual.p_max;
      rec.support_size = static_cast<int>(u.size());
      rec.xhat = dual.xhat;

      if (dual.p_max - dual.lambda_k <= cfg.tol) {
        rec.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        out.records.push_back(rec);
        out.iterates.push_back(u);
        if (on_record) on_record(rec);
        out.final_measure = std::move(u);
        out.status = RunStatus::Converged;
        return out;
      }
      if (k == cfg.max_iter) {
        out.final_measure = std::move(u);
        out.status = RunStatus::MaxIterations;
        return out;
      }

      std::pair<DiscreteMeasure, StepInfo> step;
      switch (cfg.method) {
        case Method::Pdap: step = pdap_step(prob, u, dual, cfg); break;
        case Method::Gcg: step = gcg_step(prob, u, dual, cfg); break;
        case Method::Spinat: step = spinat_step(prob, u, dual, cfg); break;
      }
      rec.step_size = step.second.step_size;
      rec.inner_iters = step.second.inner_iters;
      rec.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
      out.records.push_back(rec);
      out.iterates.push_back(u);
      if (on_record) on_record(rec);
      u = std::move(step.first);
    }
  } catch (const std::exception& e) {
    out.final_measure = std::move(u);
    out.status = RunStatus::StepError;
    out.error = e.what();
    return out;
  }
}

}  // namespace pdap
