#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "errors.hpp"

namespace sweepctl {

using Eigen::Index;
using Eigen::VectorXd;

/// Terminal cost phi(x, T).
class CostFunction
{
public:
  virtual ~CostFunction() = default;
  virtual double value(const VectorXd& x, double T) const = 0;
  /// Only meaningful when smooth() is true.
  virtual VectorXd gradient_x(const VectorXd& x, double T) const = 0;
  virtual double derivative_T(const VectorXd& x, double T) const = 0;
  virtual bool smooth() const = 0;
  virtual std::string name() const = 0;
};

/// phi(x, T) = 1/2 ||x - center||^2 (center defaults to the origin).
class HalfSquaredNorm final : public CostFunction
{
public:
  HalfSquaredNorm() = default;
  explicit HalfSquaredNorm(VectorXd center) : center_(std::move(center)) {}

  double value(const VectorXd& x, double) const override { return 0.5 * shifted(x).squaredNorm(); }
  VectorXd gradient_x(const VectorXd& x, double) const override { return shifted(x); }
  double derivative_T(const VectorXd&, double) const override { return 0.0; }
  bool smooth() const override { return true; }
  std::string name() const override { return "half_squared_norm"; }

private:
  VectorXd shifted(const VectorXd& x) const { return center_.size() == 0 ? x : VectorXd(x - center_); }
  VectorXd center_;
};

/// phi(x, T) = ||x||, Lipschitz but not differentiable at the origin. The
/// optimality checks treat it as nonsmooth everywhere.
class EuclideanNormCost final : public CostFunction
{
public:
  double value(const VectorXd& x, double) const override { return x.norm(); }
  VectorXd gradient_x(const VectorXd& x, double) const override
  {
    const double n = x.norm();
    return n > 0.0 ? VectorXd(x / n) : VectorXd::Zero(x.size());
  }
  double derivative_T(const VectorXd&, double) const override { return 0.0; }
  bool smooth() const override { return false; }
  std::string name() const override { return "euclidean_norm"; }
};

/// Box U = [lower, upper] in R^d.
struct ControlBox
{
  VectorXd lower;
  VectorXd upper;

  ControlBox() = default;
  ControlBox(VectorXd lo, VectorXd hi) : lower(std::move(lo)), upper(std::move(hi))
  {
    if (lower.size() != upper.size() || lower.size() == 0) { throw DimensionError("control box bounds mismatch"); }
    for (Index i = 0; i < lower.size(); ++i) {
      if (!std::isfinite(lower(i)) || !std::isfinite(upper(i))) { throw Error("control box must be bounded"); }
      if (lower(i) > upper(i)) { throw Error("control box is empty"); }
    }
  }

  static ControlBox uniform(Index d, double lo, double hi)
  {
    return ControlBox(VectorXd::Constant(d, lo), VectorXd::Constant(d, hi));
  }

  Index dim() const noexcept { return lower.size(); }

  bool contains(const VectorXd& u, double tol = 0.0) const
  {
    return u.size() == dim() && (u - upper).maxCoeff() <= tol && (lower - u).maxCoeff() <= tol;
  }

  /// Largest amount by which u leaves the box (0 inside).
  double violation(const VectorXd& u) const
  {
    return std::max({0.0, (u - upper).maxCoeff(), (lower - u).maxCoeff()});
  }

  VectorXd clamp(const VectorXd& u) const { return u.cwiseMax(lower).cwiseMin(upper); }

  double max_norm() const { return lower.cwiseAbs().cwiseMax(upper.cwiseAbs()).norm(); }

  /// Distance of q from the normal cone N(u; U): components must be <= 0 at a
  /// lower bound, >= 0 at an upper bound and 0 strictly inside. Bounds are
  /// detected with tolerance `active_tol`.
  double normal_cone_violation(const VectorXd& u, const VectorXd& q, double active_tol = 1e-9) const
  {
    double worst = 0.0;
    for (Index i = 0; i < dim(); ++i) {
      const bool at_lo = u(i) <= lower(i) + active_tol;
      const bool at_hi = u(i) >= upper(i) - active_tol;
      double v = 0.0;
      if (at_lo && at_hi) {
        v = 0.0;
      } else if (at_lo) {
        v = std::max(0.0, q(i));
      } else if (at_hi) {
        v = std::max(0.0, -q(i));
      } else {
        v = std::abs(q(i));
      }
      worst = std::max(worst, v);
    }
    return worst;
  }
};

}  // namespace sweepctl
