#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

#include "pdap/kernel.hpp"

namespace pdap {

/// Convolution kernel built from fundamental solutions of the 3-d free-space
/// Helmholtz equation, restricted to a 1-d source interval:
///
///   g_kappa(xi) = exp(i kappa r(xi)) / r(xi),   r(xi) = sqrt(xi^2 + D^2).
///
/// Each complex channel c carries its own wave number kappa_c and is observed
/// at M points y_m, so k(x,u) stacks g_{kappa_c}(x - y_m) u_c over m and c.
/// Complex values are laid out as interleaved (re, im) pairs and complex
/// multiplication appears as 2x2 rotation-scaling blocks, which keeps all
/// linear algebra real.  Since D > 0, r >= D and g is smooth on all of R.
class HelmholtzKernel {
 public:
  HelmholtzKernel(std::vector<double> kappas, double depth,
                  std::vector<double> obs_points, Domain domain)
      : kappas_(std::move(kappas)),
        depth_(depth),
        obs_(std::move(obs_points)),
        domain_(std::move(domain)) {
    if (obs_.empty()) throw std::invalid_argument("HelmholtzKernel: M >= 1");
    if (!(depth_ > 0.0)) throw std::invalid_argument("HelmholtzKernel: depth > 0");
    if (domain_.dim() != 1)
      throw std::invalid_argument("HelmholtzKernel: 1-d domain expected");
    if (kappas_.empty()) throw std::invalid_argument("HelmholtzKernel: channels");
  }

  int dim_h() const { return 2 * static_cast<int>(kappas_.size()); }
  int dim_y() const {
    return 2 * static_cast<int>(kappas_.size()) * static_cast<int>(obs_.size());
  }
  const Domain& domain() const { return domain_; }
  CoeffSpace coeff_space() const {
    return CoeffSpace::complex_channels(static_cast<int>(kappas_.size()));
  }
  const std::vector<double>& obs_points() const { return obs_; }
  const std::vector<double>& kappas() const { return kappas_; }
  double depth() const { return depth_; }

  KernelEvaluation eval(const Vec& x, int order) const {
    const int nc = static_cast<int>(kappas_.size());
    const int M = static_cast<int>(obs_.size());
    KernelEvaluation ke;
    ke.order = order;
    ke.A = Mat::Zero(dim_y(), dim_h());
    if (order >= 1) ke.dA.assign(1, Mat::Zero(dim_y(), dim_h()));
    if (order >= 2)
      ke.d2A.assign(1, std::vector<Mat>(1, Mat::Zero(dim_y(), dim_h())));

    for (int m = 0; m < M; ++m) {
      const double xi = x[0] - obs_[m];
      for (int c = 0; c < nc; ++c) {
        const auto g = green(kappas_[c], xi, order);
        // observation block m, channel c occupies rows (2*(m*nc + c), +1)
        const int r0 = 2 * (m * nc + c);
        const int c0 = 2 * c;
        write_block(ke.A, r0, c0, g.value);
        if (order >= 1) write_block(ke.dA[0], r0, c0, g.d1);
        if (order >= 2) write_block(ke.d2A[0][0], r0, c0, g.d2);
      }
    }
    return ke;
  }

 private:
  struct GreenEval {
    std::complex<double> value{0.0, 0.0};
    std::complex<double> d1{0.0, 0.0};
    std::complex<double> d2{0.0, 0.0};
  };

  // g = exp(i k r)/r with r = sqrt(xi^2 + D^2); then
  //   g'  = g * h,            h = (i k - 1/r) * xi / r,
  //   g'' = g * (h^2 + h'),   h' = i k D^2/r^3 - (1/r^2 - 2 xi^2/r^4).
  GreenEval green(double kappa, double xi, int order) const {
    using cd = std::complex<double>;
    GreenEval out;
    const double r2 = xi * xi + depth_ * depth_;
    const double r = std::sqrt(r2);
    const cd ik(0.0, kappa);
    out.value = std::exp(ik * r) / r;
    if (order >= 1) {
      const cd h = (ik - 1.0 / r) * (xi / r);
      out.d1 = out.value * h;
      if (order >= 2) {
        const cd hp = ik * (depth_ * depth_) / (r2 * r) -
                      cd(1.0 / r2 - 2.0 * xi * xi / (r2 * r2), 0.0);
        out.d2 = out.value * (h * h + hp);
      }
    }
    return out;
  }

  static void write_block(Mat& target, int r0, int c0,
                          const std::complex<double>& g) {
    target(r0, c0) = g.real();
    target(r0, c0 + 1) = -g.imag();
    target(r0 + 1, c0) = g.imag();
    target(r0 + 1, c0 + 1) = g.real();
  }

  std::vector<double> kappas_;
  double depth_;
  std::vector<double> obs_;
  Domain domain_;
};

}  // namespace pdap
