#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace sweepctl {

/// D_ij(x) = ||x^i - x^j|| - (R_i + R_j) and its gradient in R^{2n}, for a
/// configuration x = (x^1, ..., x^n) of planar disk centers (0-based i, j).
struct PairDistance
{
  double value = 0.0;
  Eigen::VectorXd gradient;
};

inline PairDistance pair_distance(const Eigen::VectorXd& x, Eigen::Index i, Eigen::Index j,
                                  const std::vector<double>& radii)
{
  const auto n = static_cast<Eigen::Index>(radii.size());
  if (x.size() != 2 * n) { throw DimensionError("configuration must have 2n entries"); }
  if (i < 0 || j < 0 || i >= n || j >= n || i == j) { throw GeometryError("invalid disk pair"); }
  const Eigen::Vector2d d = x.segment<2>(2 * i) - x.segment<2>(2 * j);
  const double dist = d.norm();
  if (!(dist > 0.0)) {
    throw GeometryError("coincident centers for disks " + std::to_string(i) + " and " + std::to_string(j));
  }
  PairDistance out;
  out.value = dist - (radii[static_cast<std::size_t>(i)] + radii[static_cast<std::size_t>(j)]);
  out.gradient = Eigen::VectorXd::Zero(x.size());
  out.gradient.segment<2>(2 * i) = d / dist;
  out.gradient.segment<2>(2 * j) = -d / dist;
  return out;
}

/// Every pair i < j has D_ij(x) >= -tol.
inline bool is_admissible(const Eigen::VectorXd& x, const std::vector<double>& radii, double tol = 0.0)
{
  const auto n = static_cast<Eigen::Index>(radii.size());
  if (x.size() != 2 * n) { throw DimensionError("configuration must have 2n entries"); }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dist = (x.segment<2>(2 * i) - x.segment<2>(2 * j)).norm();
      if (dist - (radii[static_cast<std::size_t>(i)] + radii[static_cast<std::size_t>(j)]) < -tol) { return false; }
    }
  }
  return true;
}

}  // namespace sweepctl
