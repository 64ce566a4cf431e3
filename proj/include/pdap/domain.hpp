#pragma once

#include <Eigen/Core>

#include <cassert>
#include <stdexcept>
#include <vector>

namespace pdap {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Axis-aligned box in R^d over which measures live.
struct Domain {
  Vec lower;
  Vec upper;

  Domain() = default;
  Domain(Vec lo, Vec up) : lower(std::move(lo)), upper(std::move(up)) {
    if (lower.size() != upper.size() || lower.size() < 1)
      throw std::invalid_argument("Domain: bounds must agree and d >= 1");
    for (Eigen::Index i = 0; i < lower.size(); ++i)
      if (!(lower[i] < upper[i]))
        throw std::invalid_argument("Domain: lower[i] < upper[i] required");
  }

  /// Convenience for the 1-d interval [lo, up].
  static Domain interval(double lo, double up) {
    Vec l(1), u(1);
    l[0] = lo;
    u[0] = up;
    return Domain(std::move(l), std::move(u));
  }

  int dim() const { return static_cast<int>(lower.size()); }

  bool contains(const Vec& x, double tol = 0.0) const {
    if (x.size() != lower.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (x[i] < lower[i] - tol || x[i] > upper[i] + tol) return false;
    return true;
  }

  Vec clamp(Vec x) const {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x[i] < lower[i]) x[i] = lower[i];
      if (x[i] > upper[i]) x[i] = upper[i];
    }
    return x;
  }
};

enum class ChannelKind { Real, Complex };

/// Real layout of the coefficient space H.  Complex channels occupy two
/// interleaved real slots (re, im); real channels one.
struct CoeffSpace {
  std::vector<ChannelKind> channels;

  CoeffSpace() = default;
  explicit CoeffSpace(std::vector<ChannelKind> ch) : channels(std::move(ch)) {
    if (dim_h() < 1) throw std::invalid_argument("CoeffSpace: dim_h >= 1");
  }

  static CoeffSpace complex_channels(int n) {
    return CoeffSpace(std::vector<ChannelKind>(n, ChannelKind::Complex));
  }
  static CoeffSpace real_channels(int n) {
    return CoeffSpace(std::vector<ChannelKind>(n, ChannelKind::Real));
  }

  int dim_h() const {
    int d = 0;
    for (auto c : channels) d += (c == ChannelKind::Complex) ? 2 : 1;
    return d;
  }
};

}  // namespace pdap
