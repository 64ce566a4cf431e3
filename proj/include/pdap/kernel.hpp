#pragma once

#include <stdexcept>
#include <vector>

#include "pdap/domain.hpp"
#include "pdap/measure.hpp"

namespace pdap {

/// Evaluation of the kernel at a point x: the linear map u -> k(x,u) as a
/// (dim_y x dim_h) matrix, optionally with first and second spatial
/// derivatives.  d2A is stored as the full (symmetric) d x d array.
struct KernelEvaluation {
  Mat A;
  std::vector<Mat> dA;                // size d when order >= 1
  std::vector<std::vector<Mat>> d2A;  // d x d when order == 2
  int order = 0;
};

// A kernel type K provides:
//   int dim_h() const; int dim_y() const;
//   const Domain& domain() const;
//   KernelEvaluation eval(const Vec& x, int order) const;
// eval must be pure so that concurrent calls are safe.

/// Ku = sum_n A(x_n) u_n.  The empty measure maps to the zero vector.
template <class Kernel>
Vec apply_K(const Kernel& kernel, const DiscreteMeasure& m) {
  Vec y = Vec::Zero(kernel.dim_y());
  for (std::size_t n = 0; n < m.size(); ++n) {
    if (m.coeffs[n].size() != kernel.dim_h())
      throw std::invalid_argument("apply_K: coefficient dimension mismatch");
    y.noalias() += kernel.eval(m.points[n], 0).A * m.coeffs[n];
  }
  return y;
}

/// Pointwise pre-adjoint: p(x) = A(x)^T y with spatial derivatives.
struct KstarEval {
  Vec p;
  std::vector<Vec> dp;                // size d when order >= 1
  std::vector<std::vector<Vec>> d2p;  // d x d when order == 2
};

template <class Kernel>
KstarEval apply_Kstar_at(const Kernel& kernel, const Vec& y, const Vec& x,
                         int order) {
  const KernelEvaluation ke = kernel.eval(x, order);
  KstarEval out;
  out.p = ke.A.transpose() * y;
  if (order >= 1) {
    out.dp.resize(ke.dA.size());
    for (std::size_t i = 0; i < ke.dA.size(); ++i)
      out.dp[i] = ke.dA[i].transpose() * y;
  }
  if (order >= 2) {
    out.d2p.resize(ke.d2A.size());
    for (std::size_t i = 0; i < ke.d2A.size(); ++i) {
      out.d2p[i].resize(ke.d2A[i].size());
      for (std::size_t j = 0; j < ke.d2A[i].size(); ++j)
        out.d2p[i][j] = ke.d2A[i][j].transpose() * y;
    }
  }
  return out;
}

/// Central finite-difference validation of the analytic kernel derivatives.
/// Reported errors are relative to max(1, norm of the analytic value).
struct FdReport {
  double max_err_dp = 0.0;   // dp versus FD of p
  double max_err_d2p = 0.0;  // d2p versus FD of dp
  double step = 0.0;
};

template <class Kernel>
FdReport fd_check(const Kernel& kernel, const Vec& x, const Vec& y,
                  double step = 1e-6) {
  const int d = kernel.domain().dim();
  const KstarEval at = apply_Kstar_at(kernel, y, x, 2);
  FdReport rep;
  rep.step = step;
  for (int i = 0; i < d; ++i) {
    Vec xp = x, xm = x;
    xp[i] += step;
    xm[i] -= step;
    const KstarEval ep = apply_Kstar_at(kernel, y, xp, 1);
    const KstarEval em = apply_Kstar_at(kernel, y, xm, 1);
    const Vec fd_p = (ep.p - em.p) / (2.0 * step);
    rep.max_err_dp = std::max(
        rep.max_err_dp, (fd_p - at.dp[i]).norm() / std::max(1.0, at.dp[i].norm()));
    for (int j = 0; j < d; ++j) {
      const Vec fd_dp = (ep.dp[j] - em.dp[j]) / (2.0 * step);
      rep.max_err_d2p =
          std::max(rep.max_err_d2p, (fd_dp - at.d2p[i][j]).norm() /
                                        std::max(1.0, at.d2p[i][j].norm()));
    }
  }
  return rep;
}

}  // namespace pdap
