#pragma once

#include <Eigen/SVD>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pdap/solver.hpp"

namespace pdap {

struct NonPositiveSeries : std::runtime_error {
  NonPositiveSeries() : std::runtime_error("rate fit requires a positive series") {}
};

struct ZeroLambda : std::runtime_error {
  ZeroLambda() : std::runtime_error("reference certificate maximum is zero") {}
};

/// High-accuracy solution used as the yardstick for error metrics: a tight
/// PDAP run lumped at a small radius, its objective value, the certificate
/// maximum, and the separation radius R actually used for ball-based metrics.
struct Reference {
  DiscreteMeasure u_bar;
  double j_bar = 0.0;
  double lambda_bar = 0.0;
  double R = 0.0;
  Vec gradF_bar;
  bool separation_ok = false;  // balls disjoint and inside the domain
};

struct ReferenceConfig {
  double tol = 1e-13;
  int max_iter = 200;
  double lump_radius = 1e-5;
  double r_cap = 0.1;
  MaximizerConfig maximizer;
};

template <class Kernel>
Reference build_reference(const Problem<Kernel>& prob,
                          const ReferenceConfig& rc = {}) {
  SolverConfig cfg;
  cfg.method = Method::Pdap;
  cfg.tol = rc.tol;
  cfg.max_iter = rc.max_iter;
  cfg.maximizer = rc.maximizer;
  const RunResult rr = run(prob, cfg);
  if (rr.status == RunStatus::StepError)
    throw std::runtime_error("reference run failed: " + rr.error);

  Reference ref;
  ref.u_bar = lump(rr.final_measure, rc.lump_radius);
  ref.j_bar = prob.eval_j(ref.u_bar).value;
  const DualState ds = make_dual_state(prob, ref.u_bar, rc.maximizer);
  ref.lambda_bar = ds.lambda_k;
  ref.gradF_bar = ds.gradF;

  ref.R = rc.r_cap;
  if (ref.u_bar.size() >= 2)
    ref.R = std::min(rc.r_cap, 0.5 * min_pairwise_distance(ref.u_bar));

  ref.separation_ok = true;
  for (std::size_t i = 0; i < ref.u_bar.size(); ++i) {
    for (Eigen::Index c = 0; c < ref.u_bar.points[i].size(); ++c) {
      const double x = ref.u_bar.points[i][c];
      if (x - ref.R < prob.domain().lower[c] || x + ref.R > prob.domain().upper[c])
        ref.separation_ok = false;
    }
    for (std::size_t j = i + 1; j < ref.u_bar.size(); ++j)
      if ((ref.u_bar.points[i] - ref.u_bar.points[j]).norm() <= 2.0 * ref.R)
        ref.separation_ok = false;
  }
  return ref;
}

/// r_j(u) = j(u) - j(u_bar); slightly negative values are possible when the
/// probe numerically beats the lumped reference.
template <class Kernel>
double residual(const Reference& ref, const Problem<Kernel>& prob,
                const DiscreteMeasure& m) {
  const ObjectiveValue jv = prob.eval_j(m);
  if (!jv.finite) return std::numeric_limits<double>::infinity();
  return jv.value - ref.j_bar;
}

struct SupportCoeffError {
  double support_error = 0.0;  // max distance of in-ball points to the center
  double coeff_error = 0.0;    // max norm error of the lumped coefficients
  int outliers = 0;            // atoms of m outside every ball
  int empty_balls = 0;         // reference atoms with no approximant nearby
};

inline SupportCoeffError support_coeff_error(const Reference& ref,
                                             const DiscreteMeasure& m) {
  SupportCoeffError out;
  const std::size_t N = ref.u_bar.size();
  std::vector<Vec> lumped(N);
  std::vector<bool> hit(N, false);
  for (std::size_t n = 0; n < N; ++n)
    lumped[n] = Vec::Zero(ref.u_bar.coeffs[n].size());

  for (std::size_t i = 0; i < m.size(); ++i) {
    bool assigned = false;
    for (std::size_t n = 0; n < N; ++n) {
      const double dist = (m.points[i] - ref.u_bar.points[n]).norm();
      if (dist <= ref.R) {
        out.support_error = std::max(out.support_error, dist);
        lumped[n] += m.coeffs[i];
        hit[n] = true;
        assigned = true;
        break;  // balls are disjoint
      }
    }
    if (!assigned) ++out.outliers;
  }
  for (std::size_t n = 0; n < N; ++n) {
    out.coeff_error =
        std::max(out.coeff_error, (ref.u_bar.coeffs[n] - lumped[n]).norm());
    if (!hit[n]) ++out.empty_balls;
  }
  return out;
}

inline double support_error(const Reference& ref, const DiscreteMeasure& m) {
  return support_coeff_error(ref, m).support_error;
}
inline double coeff_error(const Reference& ref, const DiscreteMeasure& m) {
  return support_coeff_error(ref, m).coeff_error;
}

/// Computable upper bound on ||m - u_bar|| in the dual of the Lipschitz
/// functions: per ball the lumped-coefficient error plus the transport term
/// sum |x - x_bar| ||m(x)||, plus all mass outside the balls.
inline double dual_norm_bound(const Reference& ref, const DiscreteMeasure& m) {
  const std::size_t N = ref.u_bar.size();
  std::vector<Vec> lumped(N);
  for (std::size_t n = 0; n < N; ++n)
    lumped[n] = Vec::Zero(ref.u_bar.coeffs[n].size());
  double transport = 0.0;
  double outside_mass = 0.0;

  for (std::size_t i = 0; i < m.size(); ++i) {
    bool assigned = false;
    for (std::size_t n = 0; n < N; ++n) {
      const double dist = (m.points[i] - ref.u_bar.points[n]).norm();
      if (dist <= ref.R) {
        lumped[n] += m.coeffs[i];
        transport += dist * m.coeffs[i].norm();
        assigned = true;
        break;
      }
    }
    if (!assigned) outside_mass += m.coeffs[i].norm();
  }
  double bound = transport + outside_mass;
  for (std::size_t n = 0; n < N; ++n)
    bound += (ref.u_bar.coeffs[n] - lumped[n]).norm();
  return bound;
}

struct RateFit {
  double zeta = 0.0;
  double r2 = 0.0;
};

/// Least-squares fit of log(series) against the index over the last `tail`
/// entries; zeta = exp(slope).
inline RateFit fit_rate(const std::vector<double>& series, int tail) {
  if (tail < 3 || static_cast<std::size_t>(tail) > series.size())
    throw std::invalid_argument("fit_rate: need 3 <= tail <= series length");
  const std::size_t begin = series.size() - static_cast<std::size_t>(tail);
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < tail; ++i) {
    const double v = series[begin + i];
    if (!(v > 0.0)) throw NonPositiveSeries{};
    const double x = static_cast<double>(i);
    const double y = std::log(v);
    sx += x; sy += y; sxx += x * x; sxy += x * y; syy += y * y;
  }
  const double n = static_cast<double>(tail);
  const double var_x = sxx - sx * sx / n;
  const double var_y = syy - sy * sy / n;
  const double cov = sxy - sx * sy / n;
  RateFit fit;
  fit.zeta = std::exp(cov / var_x);
  fit.r2 = (var_y > 0.0) ? (cov * cov) / (var_x * var_y) : 1.0;
  return fit;
}

struct KbarReport {
  double cond = 0.0;
  double min_sv = 0.0;
  Mat kbar;
};

/// Matrix with columns k(x_bar_n, p_bar(x_bar_n)/lambda_bar); its smallest
/// singular value being positive is the numerical form of the linear
/// independence assumption on the optimal kernel columns.
template <class Kernel>
KbarReport kbar_condition(const Reference& ref, const Kernel& kernel) {
  if (!(ref.lambda_bar > 0.0)) throw ZeroLambda{};
  const std::size_t N = ref.u_bar.size();
  Mat K(kernel.dim_y(), static_cast<Eigen::Index>(N));
  for (std::size_t n = 0; n < N; ++n) {
    const Vec p_at =
        apply_Kstar_at(kernel, Vec(-ref.gradF_bar), ref.u_bar.points[n], 0).p;
    K.col(static_cast<Eigen::Index>(n)) =
        kernel.eval(ref.u_bar.points[n], 0).A * (p_at / ref.lambda_bar);
  }
  Eigen::JacobiSVD<Mat> svd(K);
  KbarReport rep;
  rep.kbar = std::move(K);
  rep.min_sv = svd.singularValues().minCoeff();
  rep.cond = svd.singularValues().maxCoeff() / std::max(rep.min_sv, 1e-300);
  return rep;
}

/// Smallest curvature of P_bar across the reference support, estimated as
/// min_n of -lambda_max(hess P_bar(x_bar_n)).  Informational only.
template <class Kernel>
double theta0_estimate(const Reference& ref, const Kernel& kernel) {
  double theta0 = std::numeric_limits<double>::infinity();
  for (const auto& x : ref.u_bar.points) {
    const CertificateEval ev = eval_P(kernel, ref.gradF_bar, x, 2);
    Eigen::SelfAdjointEigenSolver<Mat> es(ev.hess);
    theta0 = std::min(theta0, -es.eigenvalues().maxCoeff());
  }
  return std::isfinite(theta0) ? theta0 : 0.0;
}

struct MetricsRow {
  int k = 0;
  double r_j = 0.0;
  double gap = 0.0;
  double support_error = 0.0;
  double coeff_error = 0.0;
  double dual_bound = 0.0;
};

template <class Kernel>
std::vector<MetricsRow> compute_metrics(const Reference& ref,
                                        const Problem<Kernel>& prob,
                                        const RunResult& rr) {
  std::vector<MetricsRow> rows;
  rows.reserve(rr.records.size());
  for (std::size_t i = 0; i < rr.records.size(); ++i) {
    const auto err = support_coeff_error(ref, rr.iterates[i]);
    MetricsRow row;
    row.k = rr.records[i].k;
    row.r_j = rr.records[i].j_val - ref.j_bar;
    row.gap = rr.records[i].gap;
    row.support_error = err.support_error;
    row.coeff_error = err.coeff_error;
    row.dual_bound = dual_norm_bound(ref, rr.iterates[i]);
    rows.push_back(row);
  }
  return rows;
}

struct Summary {
  double zeta_residual = std::numeric_limits<double>::quiet_NaN();
  double zeta_support = std::numeric_limits<double>::quiet_NaN();
  double zeta_coeff = std::numeric_limits<double>::quiet_NaN();
  double r2_residual = std::numeric_limits<double>::quiet_NaN();
  double r2_support = std::numeric_limits<double>::quiet_NaN();
  double r2_coeff = std::numeric_limits<double>::quiet_NaN();
  double cond_kbar = std::numeric_limits<double>::quiet_NaN();
  double theta0 = std::numeric_limits<double>::quiet_NaN();
  int iters_to_tol = -1;
  int final_support = 0;
};

namespace detail {

constexpr int kRateBurnIn = 3;

/// Tail for the rate fit: the last 60% of the post-burn-in range, shrunk to
/// its longest all-positive suffix.  Returns nullopt when fewer than three
/// usable points remain.
inline std::optional<RateFit> tail_fit(const std::vector<double>& series) {
  const int n = static_cast<int>(series.size());
  if (n <= kRateBurnIn + 2) return std::nullopt;
  int tail = static_cast<int>(std::ceil(0.6 * (n - kRateBurnIn)));
  tail = std::min(tail, n);
  while (tail >= 3) {
    bool positive = true;
    for (int i = n - tail; i < n; ++i)
      if (!(series[i] > 0.0)) {
        tail = n - i - 1;  // retry with the suffix after the bad entry
        positive = false;
        break;
      }
    if (positive) return fit_rate(series, tail);
  }
  return std::nullopt;
}

}  // namespace detail

template <class Kernel>
Summary make_summary(const Reference& ref, const Problem<Kernel>& prob,
                     const RunResult& rr,
                     const std::vector<MetricsRow>& metrics) {
  Summary s;
  std::vector<double> res, sup, coef;
  for (const auto& row : metrics) {
    res.push_back(row.r_j);
    sup.push_back(row.support_error);
    coef.push_back(row.coeff_error);
  }
  if (auto fit = detail::tail_fit(res)) {
    s.zeta_residual = fit->zeta;
    s.r2_residual = fit->r2;
  }
  if (auto fit = detail::tail_fit(sup)) {
    s.zeta_support = fit->zeta;
    s.r2_support = fit->r2;
  }
  if (auto fit = detail::tail_fit(coef)) {
    s.zeta_coeff = fit->zeta;
    s.r2_coeff = fit->r2;
  }
  try {
    s.cond_kbar = kbar_condition(ref, prob.kernel).cond;
  } catch (const ZeroLambda&) {
  }
  s.theta0 = theta0_estimate(ref, prob.kernel);
  s.iters_to_tol =
      rr.status == RunStatus::Converged ? rr.records.back().k : -1;
  s.final_support = static_cast<int>(rr.final_measure.size());
  return s;
}

}  // namespace pdap
