#pragma once

#include <nlohmann/json.hpp>

#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "pdap/domain.hpp"

namespace pdap {

/// Finitely supported vector measure: sum of Dirac deltas at `points` with
/// H-valued `coeffs`.  Insertion order of atoms is preserved by every
/// operation so that serialized output is reproducible.
struct DiscreteMeasure {
  std::vector<Vec> points;
  std::vector<Vec> coeffs;

  DiscreteMeasure() = default;
  DiscreteMeasure(std::vector<Vec> pts, std::vector<Vec> cfs)
      : points(std::move(pts)), coeffs(std::move(cfs)) {
    if (points.size() != coeffs.size())
      throw std::invalid_argument("DiscreteMeasure: points/coeffs size mismatch");
  }

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void add_atom(Vec x, Vec u) {
    points.push_back(std::move(x));
    coeffs.push_back(std::move(u));
  }
};

/// Total variation norm: sum of H-norms of the coefficients.
inline double tv_norm(const DiscreteMeasure& m) {
  double s = 0.0;
  for (const auto& u : m.coeffs) s += u.norm();
  return s;
}

/// Drops atoms with coefficient norm <= eps, keeping survivor order.
inline DiscreteMeasure prune(const DiscreteMeasure& m, double eps) {
  DiscreteMeasure out;
  for (std::size_t n = 0; n < m.size(); ++n)
    if (m.coeffs[n].norm() > eps) out.add_atom(m.points[n], m.coeffs[n]);
  return out;
}

inline DiscreteMeasure scale(const DiscreteMeasure& m, double a) {
  DiscreteMeasure out = m;
  for (auto& u : out.coeffs) u *= a;
  return out;
}

/// m + s*delta.  Atoms of delta landing exactly on an existing point (all
/// coordinates equal) merge into that coefficient; nothing is pruned.
inline DiscreteMeasure axpy(const DiscreteMeasure& m, double s,
                            const DiscreteMeasure& delta) {
  DiscreteMeasure out = m;
  for (std::size_t n = 0; n < delta.size(); ++n) {
    bool merged = false;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out.points[i] == delta.points[n]) {
        out.coeffs[i] += s * delta.coeffs[n];
        merged = true;
        break;
      }
    }
    if (!merged) out.add_atom(delta.points[n], s * delta.coeffs[n]);
  }
  return out;
}

/// delta = a - b with coincident points merged, suitable for axpy.
inline DiscreteMeasure subtract(const DiscreteMeasure& a,
                                const DiscreteMeasure& b) {
  return axpy(a, -1.0, b);
}

/// Single-linkage clustering of the support at the given radius.  Each
/// cluster becomes one atom whose coefficient is the member sum (taken
/// left-to-right over input index) and whose position is the
/// coefficient-norm-weighted mean of the member positions.
inline DiscreteMeasure lump(const DiscreteMeasure& m, double radius) {
  const std::size_t n = m.size();
  if (n == 0) return m;

  // union-find over atoms linked at distance <= radius
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if ((m.points[i] - m.points[j]).norm() <= radius) {
        auto ri = find(i), rj = find(j);
        if (ri != rj) parent[rj] = ri;
      }

  // clusters ordered by first member index
  std::vector<std::size_t> root_order;
  std::vector<int> cluster_of(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = find(i);
    if (cluster_of[r] < 0) {
      cluster_of[r] = static_cast<int>(root_order.size());
      root_order.push_back(r);
    }
  }

  DiscreteMeasure out;
  for (std::size_t c = 0; c < root_order.size(); ++c) {
    Vec coeff_sum = Vec::Zero(m.coeffs[0].size());
    Vec weighted_pos = Vec::Zero(m.points[0].size());
    Vec plain_pos = Vec::Zero(m.points[0].size());
    double weight = 0.0;
    std::size_t members = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (static_cast<std::size_t>(cluster_of[find(i)]) != c) continue;
      coeff_sum += m.coeffs[i];
      const double w = m.coeffs[i].norm();
      weighted_pos += w * m.points[i];
      plain_pos += m.points[i];
      weight += w;
      ++members;
    }
    // all-zero cluster falls back to the unweighted mean
    Vec pos = (weight > 0.0) ? Vec(weighted_pos / weight)
                             : Vec(plain_pos / static_cast<double>(members));
    out.add_atom(std::move(pos), std::move(coeff_sum));
  }
  return out;
}

inline double min_pairwise_distance(const DiscreteMeasure& m) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = i + 1; j < m.size(); ++j)
      best = std::min(best, (m.points[i] - m.points[j]).norm());
  return best;
}

// --- JSON wire format -------------------------------------------------------
// {"points": [[x...]...], "coeffs": [[h...]...]} with doubles printed at 17
// significant digits so that parse(serialize(m)) reproduces m exactly.

namespace detail {
inline void append_number(std::string& s, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  s += buf;
}
inline void append_vector_list(std::string& s, const std::vector<Vec>& vs) {
  s += '[';
  for (std::size_t n = 0; n < vs.size(); ++n) {
    if (n) s += ',';
    s += '[';
    for (Eigen::Index i = 0; i < vs[n].size(); ++i) {
      if (i) s += ',';
      append_number(s, vs[n][i]);
    }
    s += ']';
  }
  s += ']';
}
}  // namespace detail

inline std::string measure_to_json(const DiscreteMeasure& m) {
  std::string s = "{\"points\":";
  detail::append_vector_list(s, m.points);
  s += ",\"coeffs\":";
  detail::append_vector_list(s, m.coeffs);
  s += '}';
  return s;
}

inline DiscreteMeasure measure_from_json(const nlohmann::json& j) {
  DiscreteMeasure m;
  const auto& pts = j.at("points");
  const auto& cfs = j.at("coeffs");
  if (pts.size() != cfs.size())
    throw std::invalid_argument("measure JSON: points/coeffs size mismatch");
  for (std::size_t n = 0; n < pts.size(); ++n) {
    Vec x(pts[n].size()), u(cfs[n].size());
    for (std::size_t i = 0; i < pts[n].size(); ++i) x[i] = pts[n][i].get<double>();
    for (std::size_t i = 0; i < cfs[n].size(); ++i) u[i] = cfs[n][i].get<double>();
    m.add_atom(std::move(x), std::move(u));
  }
  return m;
}

inline DiscreteMeasure measure_from_json_text(const std::string& text) {
  return measure_from_json(nlohmann::json::parse(text));
}

}  // namespace pdap
