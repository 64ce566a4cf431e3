#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

#include "pdap/objective.hpp"

namespace pdap {

struct UnsupportedCost : std::runtime_error {
  UnsupportedCost() : std::runtime_error("subproblem requires the linear cost") {}
};

struct NonfiniteObjective : std::runtime_error {
  NonfiniteObjective() : std::runtime_error("subproblem objective became nonfinite") {}
};

/// Fixed support A with the stacked kernel matrix [A(x_1) ... A(x_N)].
struct ActiveSet {
  std::vector<Vec> points;
  Mat assembled;  // dim_y x (N * dim_h)
};

template <class Kernel>
ActiveSet build_active_set(const Kernel& kernel, std::vector<Vec> points) {
  ActiveSet as;
  as.points = std::move(points);
  const int h = kernel.dim_h();
  as.assembled = Mat::Zero(kernel.dim_y(), static_cast<Eigen::Index>(as.points.size()) * h);
  for (std::size_t i = 0; i < as.points.size(); ++i)
    as.assembled.middleCols(static_cast<Eigen::Index>(i) * h, h) =
        kernel.eval(as.points[i], 0).A;
  return as;
}

enum class SubproblemStatus { Converged, MaxInnerIterations };
enum class SolverPath { Newton, Fista, Mixed };

struct SubproblemResult {
  std::vector<Vec> coeffs;
  double kkt_residual = 0.0;
  int inner_iters = 0;
  SolverPath solver_path = SolverPath::Newton;
  SubproblemStatus status = SubproblemStatus::Converged;

  bool converged() const { return status == SubproblemStatus::Converged; }
};

namespace detail {

// lambda_max of the symmetric PSD matrix H by 50 power-iteration steps
inline double power_lambda_max(const Mat& H) {
  if (H.rows() == 0) return 0.0;
  Vec v = Vec::Ones(H.rows()).normalized();
  double lam = 0.0;
  for (int it = 0; it < 50; ++it) {
    Vec w = H * v;
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    v = w / nw;
    lam = v.dot(H * v);
  }
  return lam;
}

inline void prox_blocks(const Vec& v, double tau_beta, int h, Vec& out) {
  const Eigen::Index blocks = v.size() / h;
  out.resize(v.size());
  for (Eigen::Index i = 0; i < blocks; ++i)
    out.segment(i * h, h) = prox_group(v.segment(i * h, h), tau_beta);
}

}  // namespace detail

/// Solves the group-sparse coefficient problem on a fixed support,
///
///   min_u  0.5 ||B u - y_d||^2 + beta * sum_i ||u_i||,
///
/// to the requested tolerance on the natural residual
///   Theta(u) = u - prox_{tau beta}(u - tau grad f(u)),  tau = 1/sigma_max(B)^2.
///
/// A semismooth Newton method on Theta does the heavy lifting: per block the
/// generalized Jacobian of the prox is I - (tau beta/||v||)(I - v v^T/||v||^2)
/// on active blocks and 0 on inactive ones (the kink uses the inactive
/// branch).  Steps are globalized by an Armijo line search on ||Theta||;
/// iterations where the line search fails fall back to a FISTA step with
/// momentum, restarted whenever Newton takes over again.
class GroupSparseSolver {
 public:
  GroupSparseSolver(Mat B, Vec y_d, double beta, int dim_h)
      : B_(std::move(B)), y_d_(std::move(y_d)), beta_(beta), h_(dim_h) {
    H_ = B_.transpose() * B_;
    b_ = B_.transpose() * y_d_;
    const double lam = detail::power_lambda_max(H_);
    tau_ = 1.0 / std::max(lam, 1e-300);
  }

  double tau() const { return tau_; }

  double smooth(const Vec& u) const { return 0.5 * (B_ * u - y_d_).squaredNorm(); }
  Vec smooth_grad(const Vec& u) const { return H_ * u - b_; }

  /// One proximal-gradient pass with backtracking: tau halves from tau0
  /// until the usual quadratic upper-bound condition holds (at tau0 it holds
  /// already whenever sigma_max was not underestimated).
  Vec prox_gradient_pass(const Vec& u, double tau0) const {
    const double f_u = smooth(u);
    const Vec g = smooth_grad(u);
    double t = tau0;
    Vec u_next;
    for (int halve = 0; halve <= 40; ++halve, t *= 0.5) {
      detail::prox_blocks(u - t * g, t * beta_, h_, u_next);
      const Vec d = u_next - u;
      if (smooth(u_next) <= f_u + g.dot(d) + d.squaredNorm() / (2.0 * t)) break;
    }
    return u_next;
  }

  Vec theta(const Vec& u) const {
    Vec v = u - tau_ * (H_ * u - b_);
    Vec pv;
    detail::prox_blocks(v, tau_ * beta_, h_, pv);
    return u - pv;
  }

  /// Candidate generator for kink-degenerate instances: freeze the partition
  /// induced by u, zero the inactive blocks, and run a damped Newton
  /// iteration on the smooth stationarity system of the active blocks,
  ///   H_AA u_A - b_A + beta u_i/||u_i|| = 0,
  /// whose Jacobian H_AA + beta (I - w w^T)/||u_i|| is positive definite.
  /// Blocks whose norm collapses are dropped to exact zero on the fly.
  Vec partition_polish(const Vec& u, int max_newton = 25) const {
    const Eigen::Index blocks = u.size() / h_;
    Vec v = u - tau_ * (H_ * u - b_);
    std::vector<Eigen::Index> act;
    for (Eigen::Index i = 0; i < blocks; ++i)
      if (v.segment(i * h_, h_).norm() > tau_ * beta_) act.push_back(i);
    Vec out = Vec::Zero(u.size());
    if (act.empty()) return out;

    auto gather = [&](const Vec& full) {
      Vec g(static_cast<Eigen::Index>(act.size()) * h_);
      for (std::size_t a = 0; a < act.size(); ++a)
        g.segment(static_cast<Eigen::Index>(a) * h_, h_) =
            full.segment(act[a] * h_, h_);
      return g;
    };

    Mat Ha(static_cast<Eigen::Index>(act.size()) * h_,
           static_cast<Eigen::Index>(act.size()) * h_);
    for (std::size_t a = 0; a < act.size(); ++a)
      for (std::size_t c = 0; c < act.size(); ++c)
        Ha.block(static_cast<Eigen::Index>(a) * h_,
                 static_cast<Eigen::Index>(c) * h_, h_, h_) =
            H_.block(act[a] * h_, act[c] * h_, h_, h_);
    Vec ba = gather(b_);
    Vec ua = gather(u);
    // seed zero blocks from the prox image so the direction term is defined
    for (std::size_t a = 0; a < act.size(); ++a) {
      auto seg = ua.segment(static_cast<Eigen::Index>(a) * h_, h_);
      if (seg.norm() == 0.0)
        seg = prox_group(v.segment(act[a] * h_, h_), tau_ * beta_);
    }

    auto jA = [&](const Vec& w) {
      double r = 0.5 * w.dot(Ha * w) - ba.dot(w);
      for (std::size_t a = 0; a < act.size(); ++a)
        r += beta_ * w.segment(static_cast<Eigen::Index>(a) * h_, h_).norm();
      return r;
    };

    for (int it = 0; it < max_newton && !act.empty(); ++it) {
      Vec grad = Ha * ua - ba;
      Mat Jg = Ha;
      bool degenerate = false;
      for (std::size_t a = 0; a < act.size(); ++a) {
        const Vec ui = ua.segment(static_cast<Eigen::Index>(a) * h_, h_);
        const double nu = ui.norm();
        if (nu <= 0.0) {
          degenerate = true;
          break;
        }
        const Vec w = ui / nu;
        grad.segment(static_cast<Eigen::Index>(a) * h_, h_) += beta_ * w;
        Jg.block(static_cast<Eigen::Index>(a) * h_,
                 static_cast<Eigen::Index>(a) * h_, h_, h_) +=
            (beta_ / nu) * (Mat::Identity(h_, h_) - w * w.transpose());
      }
      if (degenerate) break;
      if (grad.template lpNorm<Eigen::Infinity>() <= 1e-16 * (1.0 + ba.norm()))
        break;
      Eigen::LDLT<Mat> ldlt(Jg);
      if (ldlt.info() != Eigen::Success) break;
      const Vec delta = ldlt.solve(-grad);
      const double slope = grad.dot(delta);
      const double j0 = jA(ua);
      double s = 1.0;
      bool accepted = false;
      for (int halve = 0; halve <= 40; ++halve, s *= 0.5) {
        Vec cand = ua + s * delta;
        if (jA(cand) <= j0 + 1e-4 * s * slope) {
          ua = std::move(cand);
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
      // hard-zero collapsing blocks and shrink the active set; the threshold
      // sits at roundoff scale because exiting atoms can carry genuine
      // masses many orders below the solver tolerance
      std::vector<Eigen::Index> keep;
      const double drop_tol = 1e-15 * (1.0 + ua.norm());
      for (std::size_t a = 0; a < act.size(); ++a)
        if (ua.segment(static_cast<Eigen::Index>(a) * h_, h_).norm() > drop_tol)
          keep.push_back(static_cast<Eigen::Index>(a));
      if (keep.size() != act.size()) {
        std::vector<Eigen::Index> act_new;
        Vec ua_new(static_cast<Eigen::Index>(keep.size()) * h_);
        Mat Ha_new(ua_new.size(), ua_new.size());
        Vec ba_new(ua_new.size());
        for (std::size_t a = 0; a < keep.size(); ++a) {
          act_new.push_back(act[keep[a]]);
          ua_new.segment(static_cast<Eigen::Index>(a) * h_, h_) =
              ua.segment(keep[a] * h_, h_);
          ba_new.segment(static_cast<Eigen::Index>(a) * h_, h_) =
              ba.segment(keep[a] * h_, h_);
          for (std::size_t c = 0; c < keep.size(); ++c)
            Ha_new.block(static_cast<Eigen::Index>(a) * h_,
                         static_cast<Eigen::Index>(c) * h_, h_, h_) =
                Ha.block(keep[a] * h_, keep[c] * h_, h_, h_);
        }
        act = std::move(act_new);
        ua = std::move(ua_new);
        Ha = std::move(Ha_new);
        ba = std::move(ba_new);
      }
    }

    for (std::size_t a = 0; a < act.size(); ++a)
      out.segment(act[a] * h_, h_) =
          ua.segment(static_cast<Eigen::Index>(a) * h_, h_);
    return out;
  }

  SubproblemResult solve(Vec u, double tol, int max_iters = 500) const {
    if (u.size() != H_.rows()) throw std::invalid_argument("warm start size");
    const Eigen::Index n = u.size();
    const Eigen::Index blocks = n / h_;

    SubproblemResult res;
    bool used_newton = false, used_fista = false;

    // FISTA companion state, restarted after accepted Newton steps
    Vec accel = u;
    double t_momentum = 1.0;

    Vec best_u = u;
    double best_res = theta(u).template lpNorm<Eigen::Infinity>();

    for (int it = 0; it <= max_iters; ++it) {
      if (!u.allFinite()) throw NonfiniteObjective{};
      const Vec th = theta(u);
      const double res_inf = th.template lpNorm<Eigen::Infinity>();
      if (res_inf < best_res) {
        best_res = res_inf;
        best_u = u;
      }
      if (res_inf <= tol) {
        // Snap to the prox image when it stays within tolerance: inactive
        // blocks become exact zeros, which is what the pruning step after
        // the solve relies on.
        Vec v = u - tau_ * (H_ * u - b_);
        Vec snapped;
        detail::prox_blocks(v, tau_ * beta_, h_, snapped);
        const double snapped_res =
            theta(snapped).template lpNorm<Eigen::Infinity>();
        if (snapped_res <= tol) {
          u = std::move(snapped);
          res.kkt_residual = snapped_res;
        } else {
          res.kkt_residual = res_inf;
        }
        res.inner_iters = it;
        res.status = SubproblemStatus::Converged;
        unpack(u, blocks, res);
        res.solver_path = path(used_newton, used_fista);
        return res;
      }
      if (it == max_iters) break;

      const double theta_norm = th.norm();
      bool newton_ok = false;
      Vec u_newton;
      double newton_norm = 0.0;

      {  // assemble J = I - M (I - tau H) and try the Newton step
        Vec v = u - tau_ * (H_ * u - b_);
        Mat M = Mat::Zero(n, n);
        for (Eigen::Index i = 0; i < blocks; ++i) {
          const Vec vi = v.segment(i * h_, h_);
          const double nv = vi.norm();
          if (nv > tau_ * beta_) {
            const double kappa = tau_ * beta_ / nv;
            Mat Mi = (1.0 - kappa) * Mat::Identity(h_, h_);
            Mi.noalias() += (kappa / (nv * nv)) * (vi * vi.transpose());
            M.block(i * h_, i * h_, h_, h_) = Mi;
          }
        }
        Mat J = Mat::Identity(n, n) - M * (Mat::Identity(n, n) - tau_ * H_);
        // Levenberg-style shift: clustered support points make J nearly
        // singular along mass-transfer directions and the raw Newton step
        // overshoots across prox kinks; the shift vanishes with the residual
        // so local superlinear convergence is kept.
        const double shift = std::min(theta_norm, 1.0);
        J.diagonal().array() += shift;
        Eigen::PartialPivLU<Mat> lu(J);
        Vec delta = lu.solve(-th);
        if (delta.allFinite() &&
            (J * delta + th).norm() <= 1e-8 * std::max(1.0, theta_norm)) {
          // Armijo halving on ||Theta||
          double s = 1.0;
          for (int halve = 0; halve <= 30; ++halve, s *= 0.5) {
            Vec cand = u + s * delta;
            const double cn = theta(cand).norm();
            if (cn <= (1.0 - 1e-4 * s) * theta_norm) {
              u_newton = std::move(cand);
              newton_norm = cn;
              newton_ok = true;
              break;
            }
          }
        }
      }

      if (!newton_ok || newton_norm > 0.9 * theta_norm) {
        // Poor progress usually means the iterate straddles prox kinks of
        // nearly duplicate support points; the frozen-partition polish
        // resolves exactly that regime.
        const Vec polished = partition_polish(u);
        const double polished_norm = theta(polished).norm();
        if (polished_norm < (newton_ok ? newton_norm : theta_norm)) {
          u_newton = polished;
          newton_norm = polished_norm;
          newton_ok = polished_norm <= (1.0 - 1e-4) * theta_norm;
        }
      }

      if (newton_ok) {
        u = std::move(u_newton);
        accel = u;
        t_momentum = 1.0;
        used_newton = true;
      } else {
        // FISTA fallback step from the extrapolation point.  Interleaving it
        // with accepted Newton steps stalls on kink-degenerate instances, so
        // it only runs when neither second-order candidate makes progress.
        Vec v = accel - tau_ * (H_ * accel - b_);
        Vec u_next;
        detail::prox_blocks(v, tau_ * beta_, h_, u_next);
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_momentum * t_momentum));
        accel = u_next + ((t_momentum - 1.0) / t_next) * (u_next - u);
        t_momentum = t_next;
        u = std::move(u_next);
        used_fista = true;
      }
    }

    res.inner_iters = max_iters;
    res.kkt_residual = best_res;
    res.status = SubproblemStatus::MaxInnerIterations;
    unpack(best_u, blocks, res);
    res.solver_path = path(used_newton, used_fista);
    return res;
  }

 private:
  static SolverPath path(bool newton, bool fista) {
    if (newton && fista) return SolverPath::Mixed;
    if (fista) return SolverPath::Fista;
    return SolverPath::Newton;
  }

  void unpack(const Vec& u, Eigen::Index blocks, SubproblemResult& res) const {
    res.coeffs.clear();
    for (Eigen::Index i = 0; i < blocks; ++i)
      res.coeffs.push_back(u.segment(i * h_, h_));
  }

  Mat B_;
  Vec y_d_;
  double beta_;
  int h_;
  Mat H_;
  Vec b_;
  double tau_ = 0.0;
};

inline double default_subproblem_tol(const Vec& y_d) {
  return 1e-13 * (1.0 + y_d.norm());
}

/// Spec-level entry point on a problem and active set.  The warm start is
/// given per support point; missing entries are zero-filled.
template <class Kernel>
SubproblemResult solve_coefficients(const Problem<Kernel>& prob,
                                    const ActiveSet& active,
                                    const std::vector<Vec>& warm, double tol) {
  if (prob.cost.kind != Cost::Kind::Linear) throw UnsupportedCost{};
  if (tol <= 0.0) tol = default_subproblem_tol(prob.loss.y_d);
  const int h = prob.kernel.dim_h();
  Vec u0 = Vec::Zero(static_cast<Eigen::Index>(active.points.size()) * h);
  for (std::size_t i = 0; i < warm.size() && i < active.points.size(); ++i)
    u0.segment(static_cast<Eigen::Index>(i) * h, h) = warm[i];
  GroupSparseSolver solver(active.assembled, prob.loss.y_d, prob.cost.beta, h);
  return solver.solve(std::move(u0), tol);
}

struct KktReport {
  double lambda = 0.0;
  double max_norm_dev = 0.0;
  double max_align_dev = 0.0;
};

/// Optimality diagnostics for coefficients on an active set: lambda is the
/// largest certificate value over nonzero blocks, with the deviations of
/// ||p(x_i)|| from lambda and of u_i/||u_i|| from p(x_i)/lambda.
template <class Kernel>
KktReport kkt_report(const Problem<Kernel>& prob, const ActiveSet& active,
                     const std::vector<Vec>& coeffs) {
  const int h = prob.kernel.dim_h();
  Vec y = Vec::Zero(prob.kernel.dim_y());
  for (std::size_t i = 0; i < active.points.size(); ++i)
    y.noalias() +=
        active.assembled.middleCols(static_cast<Eigen::Index>(i) * h, h) * coeffs[i];
  const Vec neg_gradF = -(prob.loss.grad(y));

  std::vector<Vec> p(active.points.size());
  std::vector<bool> nonzero(active.points.size());
  bool any_nonzero = false;
  for (std::size_t i = 0; i < active.points.size(); ++i) {
    p[i] = active.assembled.middleCols(static_cast<Eigen::Index>(i) * h, h)
               .transpose() *
           neg_gradF;
    nonzero[i] = coeffs[i].norm() > 0.0;
    any_nonzero = any_nonzero || nonzero[i];
  }

  KktReport rep;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (nonzero[i] || !any_nonzero) rep.lambda = std::max(rep.lambda, p[i].norm());
  if (!any_nonzero) return rep;  // deviations vacuously zero
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!nonzero[i]) continue;
    rep.max_norm_dev = std::max(rep.max_norm_dev, std::abs(p[i].norm() - rep.lambda));
    if (rep.lambda > 0.0)
      rep.max_align_dev =
          std::max(rep.max_align_dev,
                   (coeffs[i] / coeffs[i].norm() - p[i] / rep.lambda).norm());
  }
  return rep;
}

}  // namespace pdap
