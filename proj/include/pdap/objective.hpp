#pragma once

#include <limits>
#include <stdexcept>

#include "pdap/kernel.hpp"
#include "pdap/measure.hpp"

namespace pdap {

/// Quadratic data misfit F(y) = 0.5 ||y - y_d||^2.
struct QuadraticLoss {
  Vec y_d;

  double eval(const Vec& y) const { return 0.5 * (y - y_d).squaredNorm(); }
  Vec grad(const Vec& y) const { return y - y_d; }
};

/// Cost term G acting on the total variation norm.  Either a linear cost
/// beta*m or the indicator of the norm ball {m <= M}.
struct Cost {
  enum class Kind { Linear, Ball };
  Kind kind = Kind::Linear;
  double beta = 1.0;  // Linear
  double M = 1.0;     // Ball

  static Cost linear(double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("Cost: beta > 0");
    Cost c;
    c.kind = Kind::Linear;
    c.beta = beta;
    return c;
  }
  static Cost norm_ball(double M) {
    if (!(M > 0.0)) throw std::invalid_argument("Cost: M > 0");
    Cost c;
    c.kind = Kind::Ball;
    c.M = M;
    return c;
  }

  bool feasible(double m_val) const {
    return kind == Kind::Linear || m_val <= M;
  }

  /// G(m); only valid on feasible m (callers gate on feasible()).
  double value(double m_val) const {
    return kind == Kind::Linear ? beta * m_val : 0.0;
  }

  /// sup of the subdifferential of G at m >= 0 (may be +infinity for the
  /// ball boundary; used in comparisons only).
  double sup_subdiff(double m_val) const {
    if (kind == Kind::Linear) return beta;
    return (m_val < M) ? 0.0 : std::numeric_limits<double>::infinity();
  }
};

/// Trial mass for the linearized problem: M0 when pnorm exceeds the largest
/// slope of G at M0, otherwise a selection from the inverse subdifferential.
/// Ties resolve to 0 so the trial atom vanishes at optimality.
inline double g_trial_mass(const Cost& cost, double pnorm, double m0) {
  if (pnorm > cost.sup_subdiff(m0)) return m0;
  if (cost.kind == Cost::Kind::Linear) return pnorm > cost.beta ? m0 : 0.0;
  return pnorm > 0.0 ? m0 : 0.0;
}

/// Extended-real objective value; +infinity is carried as a tag, never as a
/// floating-point Inf inside arithmetic.
struct ObjectiveValue {
  double value = 0.0;
  bool finite = true;

  static ObjectiveValue infinite() { return {0.0, false}; }

  // ordering that treats +inf as larger than any finite value
  bool operator<(const ObjectiveValue& o) const {
    if (!finite) return false;
    if (!o.finite) return true;
    return value < o.value;
  }
  bool operator<=(const ObjectiveValue& o) const {
    if (!o.finite) return true;
    if (!finite) return false;
    return value <= o.value;
  }
};

/// Group soft-thresholding: prox of tau_beta * ||.||_H.
inline Vec prox_group(const Vec& v, double tau_beta) {
  const double nv = v.norm();
  if (nv <= tau_beta) return Vec::Zero(v.size());
  return (1.0 - tau_beta / nv) * v;
}

/// Problem data: kernel, quadratic loss, cost, and the norm bound M0 used by
/// the gap functional.  m0_bound must dominate the norm of every iterate the
/// solvers encounter (checked at runtime).
template <class Kernel>
struct Problem {
  Kernel kernel;
  QuadraticLoss loss;
  Cost cost;
  double m0_bound = 0.0;

  const Domain& domain() const { return kernel.domain(); }

  ObjectiveValue eval_j(const DiscreteMeasure& m) const {
    const double tv = tv_norm(m);
    if (!cost.feasible(tv)) return ObjectiveValue::infinite();
    return {loss.eval(apply_K(kernel, m)) + cost.value(tv), true};
  }

  /// Default M0: j(empty)/beta for the linear cost, M for the ball.
  double default_m0() const {
    if (cost.kind == Cost::Kind::Ball) return cost.M;
    return loss.eval(Vec::Zero(kernel.dim_y())) / cost.beta;
  }
};

template <class Kernel>
Problem<Kernel> make_problem(Kernel kernel, Vec y_d, Cost cost,
                             double m0_bound = 0.0) {
  Problem<Kernel> p{std::move(kernel), QuadraticLoss{std::move(y_d)}, cost, 0.0};
  p.m0_bound = (m0_bound > 0.0) ? m0_bound : p.default_m0();
  return p;
}

}  // namespace pdap
