#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

#include "pdap/objective.hpp"

namespace pdap {

/// Raised when derivatives of P(x) = ||p(x)|| are requested at a point where
/// the certificate is numerically zero; the norm is nonsmooth there.
struct NearZeroCertificate : std::runtime_error {
  NearZeroCertificate() : std::runtime_error("certificate vanishes: P not differentiable") {}
};

/// P(x) = ||p(x)||_H with p = -K* gradF, plus spatial derivatives:
///   dP_i    = (p, d_i p) / P
///   d2P_ij  = [ (d_ij p, p) + (d_i p, d_j p) ] / P - dP_i dP_j / P.
struct CertificateEval {
  double P = 0.0;
  Vec p;
  Vec grad;  // when order >= 1
  Mat hess;  // when order == 2
  bool derivatives_valid = false;
};

namespace detail {

template <class Kernel>
CertificateEval try_eval_P(const Kernel& kernel, const Vec& gradF, const Vec& x,
                           int order, double tol_p) {
  const KstarEval ks = apply_Kstar_at(kernel, -gradF, x, order);
  CertificateEval out;
  out.p = ks.p;
  out.P = ks.p.norm();
  if (order == 0) return out;
  if (out.P <= tol_p) return out;  // derivatives_valid stays false
  const int d = kernel.domain().dim();
  out.grad = Vec(d);
  for (int i = 0; i < d; ++i) out.grad[i] = out.p.dot(ks.dp[i]) / out.P;
  if (order >= 2) {
    out.hess = Mat(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        out.hess(i, j) = (ks.d2p[i][j].dot(out.p) + ks.dp[i].dot(ks.dp[j]) -
                          out.grad[i] * out.grad[j]) /
                         out.P;
  }
  out.derivatives_valid = true;
  return out;
}

}  // namespace detail

inline double default_tol_p(const Vec& gradF) { return 1e-12 * gradF.norm(); }

template <class Kernel>
CertificateEval eval_P(const Kernel& kernel, const Vec& gradF, const Vec& x,
                       int order, double tol_p = -1.0) {
  if (tol_p < 0.0) tol_p = default_tol_p(gradF);
  CertificateEval ev = detail::try_eval_P(kernel, gradF, x, order, tol_p);
  if (order >= 1 && !ev.derivatives_valid) throw NearZeroCertificate{};
  return ev;
}

struct MaximizerConfig {
  int n_starts = 30;
  double newton_tol = 1e-12;
  int max_newton_iters = 100;
};

namespace detail {

inline bool lex_less(const Vec& a, const Vec& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return false;
}

/// Uniform start grid over the box: n_starts points for d = 1, a tensor grid
/// of ceil(n_starts^(1/d)) points per axis otherwise.
inline std::vector<Vec> start_grid(const Domain& dom, int n_starts) {
  const int d = dom.dim();
  int per_axis = n_starts;
  if (d > 1)
    per_axis = static_cast<int>(
        std::ceil(std::pow(static_cast<double>(n_starts), 1.0 / d)));
  per_axis = std::max(per_axis, 2);
  std::vector<Vec> grid;
  std::vector<int> idx(d, 0);
  while (true) {
    Vec x(d);
    for (int i = 0; i < d; ++i)
      x[i] = dom.lower[i] +
             (dom.upper[i] - dom.lower[i]) * idx[i] / double(per_axis - 1);
    grid.push_back(std::move(x));
    int axis = 0;
    while (axis < d && ++idx[axis] == per_axis) idx[axis++] = 0;
    if (axis == d) break;
  }
  return grid;
}

/// Damped Newton ascent on P from one start, clamped to the box.  Falls back
/// to a scaled gradient step when the Hessian is not negative definite.
template <class Kernel>
bool ascend(const Kernel& kernel, const Vec& gradF, const Domain& dom,
            const MaximizerConfig& cfg, double tol_p, Vec& x, double& value) {
  x = dom.clamp(x);
  CertificateEval ev = try_eval_P(kernel, gradF, x, 2, tol_p);
  if (!ev.derivatives_valid) return false;  // start skipped
  for (int it = 0; it < cfg.max_newton_iters; ++it) {
    if (ev.grad.template lpNorm<Eigen::Infinity>() <=
        cfg.newton_tol * (1.0 + ev.P))
      break;
    Vec dir;
    bool neg_def = false;
    if (x.size() == 1) {
      neg_def = ev.hess(0, 0) < 0.0;
      if (neg_def) dir = -ev.grad / ev.hess(0, 0);
    } else {
      Eigen::LDLT<Mat> ldlt(Mat(-ev.hess));
      neg_def = ldlt.info() == Eigen::Success && ldlt.isPositive();
      if (neg_def) dir = ldlt.solve(ev.grad);
    }
    if (!neg_def)
      dir = ev.grad / std::max(ev.hess.template lpNorm<Eigen::Infinity>(), 1.0);

    // backtracking halving on P-ascent
    double t = 1.0;
    Vec x_next;
    bool accepted = false;
    for (int halve = 0; halve <= 40; ++halve, t *= 0.5) {
      Vec cand = dom.clamp(x + t * dir);
      if (cand == x) continue;
      const CertificateEval trial = try_eval_P(kernel, gradF, cand, 0, tol_p);
      if (trial.P > ev.P) {
        x_next = std::move(cand);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    x = std::move(x_next);
    ev = try_eval_P(kernel, gradF, x, 2, tol_p);
    if (!ev.derivatives_valid) break;
  }
  value = ev.P;
  return true;
}

}  // namespace detail

struct GlobalMax {
  Vec xhat;
  double p_max = 0.0;
};

/// Multi-start damped Newton ascent on P over the domain.  Starts at a
/// uniform grid plus the current support points; the winner is picked by
/// value, ties by lexicographically smallest coordinate.  Starts where the
/// certificate is numerically zero are skipped; if every start is skipped
/// the plain grid argmax of P is returned.
template <class Kernel>
GlobalMax find_global_max(const Kernel& kernel, const Vec& gradF,
                          const std::vector<Vec>& current_support,
                          const MaximizerConfig& cfg = {}) {
  const Domain& dom = kernel.domain();
  const double tol_p = default_tol_p(gradF);
  std::vector<Vec> starts = detail::start_grid(dom, cfg.n_starts);
  for (const auto& s : current_support) starts.push_back(s);

  bool have_best = false;
  GlobalMax best;
  for (const auto& s : starts) {
    Vec x = s;
    double value = 0.0;
    if (!detail::ascend(kernel, gradF, dom, cfg, tol_p, x, value)) continue;
    if (!have_best || value > best.p_max ||
        (value == best.p_max && detail::lex_less(x, best.xhat))) {
      best.xhat = x;
      best.p_max = value;
      have_best = true;
    }
  }
  if (have_best) return best;

  // degenerate certificate everywhere: order-0 argmax over the start grid
  for (const auto& s : starts) {
    const double v = detail::try_eval_P(kernel, gradF, s, 0, tol_p).P;
    if (best.xhat.size() == 0 || v > best.p_max ||
        (v == best.p_max && detail::lex_less(s, best.xhat))) {
      best.xhat = s;
      best.p_max = v;
    }
  }
  return best;
}

/// Dual quantities attached to one iterate: y = Ku, gradF(y), the support
/// maximum lambda_k of P, and the global maximizer of P.  For an empty
/// support, lambda_k is min(||p||_C, sup dG(0)), which makes
/// ||p||_C - lambda_k the exact optimality error of the zero measure.
struct DualState {
  Vec y;
  Vec gradF;
  double lambda_k = 0.0;
  Vec xhat;
  double p_max = 0.0;
};

template <class Kernel>
DualState make_dual_state(const Problem<Kernel>& prob, const DiscreteMeasure& m,
                          const MaximizerConfig& cfg = {}) {
  DualState ds;
  ds.y = apply_K(prob.kernel, m);
  ds.gradF = prob.loss.grad(ds.y);
  const GlobalMax gm = find_global_max(prob.kernel, ds.gradF, m.points, cfg);
  ds.xhat = gm.xhat;
  ds.p_max = gm.p_max;
  if (m.empty()) {
    ds.lambda_k = std::min(ds.p_max, prob.cost.sup_subdiff(0.0));
  } else {
    double lam = 0.0;
    for (const auto& x : m.points)
      lam = std::max(lam,
                     detail::try_eval_P(prob.kernel, ds.gradF, x, 0, 0.0).P);
    ds.lambda_k = lam;
  }
  return ds;
}

/// Primal-dual gap of the norm-constrained surrogate problem,
///   Phi(u) = <p, vhat - u> + G(||u||) - G(||vhat||),
/// evaluated with the analytic maximizer vhat.  Uses <p,u> = -(gradF, Ku),
/// so the value is exact for any finitely supported u.
template <class Kernel>
double gap(const Problem<Kernel>& prob, const DiscreteMeasure& m,
           const DualState& dual) {
  const double pair_p_u = -dual.gradF.dot(dual.y);
  const double mhat = g_trial_mass(prob.cost, dual.p_max, prob.m0_bound);
  return mhat * dual.p_max - prob.cost.value(mhat) - pair_p_u +
         prob.cost.value(tv_norm(m));
}

}  // namespace pdap
