#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace sweepctl {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Default tolerances shared by the geometric routines.
struct Tolerances
{
  double feasibility = 1e-9;
  double active = 1e-7;
};

/// The half-space {x : <normal, x> <= offset}. Normals are stored as given and
/// never normalized.
struct HalfSpace
{
  VectorXd normal;
  double offset = 0.0;

  HalfSpace() = default;
  HalfSpace(VectorXd n, double c) : normal(std::move(n)), offset(c)
  {
    if (normal.size() == 0 || !(normal.norm() > 0.0)) {
      throw GeometryError("half-space normal must be nonzero");
    }
  }

  double evaluate(const VectorXd& x) const { return normal.dot(x) - offset; }
};

/// Finite intersection of half-spaces in R^dim. Face indices are 0-based.
class Polyhedron
{
public:
  Polyhedron() = default;

  explicit Polyhedron(std::vector<HalfSpace> faces) : faces_(std::move(faces))
  {
    if (faces_.empty()) { throw GeometryError("polyhedron needs at least one face"); }
    dim_ = faces_.front().normal.size();
    for (const auto& f : faces_) {
      if (f.normal.size() != dim_) { throw DimensionError("face normals disagree in dimension"); }
    }
    normals_.resize(dim_, static_cast<Index>(faces_.size()));
    offsets_.resize(static_cast<Index>(faces_.size()));
    for (std::size_t j = 0; j < faces_.size(); ++j) {
      normals_.col(static_cast<Index>(j)) = faces_[j].normal;
      offsets_(static_cast<Index>(j)) = faces_[j].offset;
    }
    rows_ = normals_.transpose();
  }

  /// Builds from a dim x s matrix whose columns are the face normals.
  static Polyhedron from_columns(const MatrixXd& normals, const VectorXd& offsets)
  {
    if (normals.cols() != offsets.size()) { throw DimensionError("normals/offsets count mismatch"); }
    std::vector<HalfSpace> faces;
    faces.reserve(static_cast<std::size_t>(normals.cols()));
    for (Index j = 0; j < normals.cols(); ++j) { faces.emplace_back(normals.col(j), offsets(j)); }
    return Polyhedron(std::move(faces));
  }

  Index dim() const noexcept { return dim_; }
  Index face_count() const noexcept { return static_cast<Index>(faces_.size()); }
  const std::vector<HalfSpace>& faces() const noexcept { return faces_; }
  const HalfSpace& face(Index j) const { return faces_.at(static_cast<std::size_t>(j)); }

  /// Columns are x*_j.
  const MatrixXd& normals() const noexcept { return normals_; }
  const VectorXd& offsets() const noexcept { return offsets_; }

  /// Row-form system A x <= b with A = normals()^T.
  const MatrixXd& constraint_matrix() const noexcept { return rows_; }

  /// <x*_j, x> - c_j for every face.
  VectorXd slacks(const VectorXd& x) const
  {
    check_dim(x);
    return rows_ * x - offsets_;
  }

  double max_violation(const VectorXd& x) const { return slacks(x).maxCoeff(); }

  void check_dim(const VectorXd& x) const
  {
    if (x.size() != dim_) {
      throw DimensionError("point has dimension " + std::to_string(x.size()) + ", polyhedron has "
                           + std::to_string(dim_));
    }
  }

private:
  Index dim_ = 0;
  std::vector<HalfSpace> faces_;
  MatrixXd normals_;
  MatrixXd rows_;
  VectorXd offsets_;
};

/// Strictly increasing face indices (0-based).
class ActiveSet
{
public:
  ActiveSet() = default;
  explicit ActiveSet(std::vector<Index> indices) : indices_(std::move(indices))
  {
    for (std::size_t i = 1; i < indices_.size(); ++i) {
      if (indices_[i] <= indices_[i - 1]) { throw GeometryError("active set must be strictly increasing"); }
    }
  }

  const std::vector<Index>& indices() const noexcept { return indices_; }
  bool empty() const noexcept { return indices_.empty(); }
  std::size_t size() const noexcept { return indices_.size(); }
  bool contains(Index j) const { return std::binary_search(indices_.begin(), indices_.end(), j); }

  void validate_for(const Polyhedron& P) const
  {
    for (Index j : indices_) {
      if (j < 0 || j >= P.face_count()) { throw GeometryError("active index out of range"); }
    }
  }

  friend bool operator==(const ActiveSet&, const ActiveSet&) = default;

private:
  std::vector<Index> indices_;
};

inline bool contains(const Polyhedron& P, const VectorXd& x, double tol = 0.0)
{
  P.check_dim(x);
  return (P.constraint_matrix() * x - P.offsets()).maxCoeff() <= tol;
}

/// Faces with |<x*_j, x> - c_j| <= tol. Throws InfeasibleError when x is not in P
/// (within tol); callers must project first.
inline ActiveSet active_set(const Polyhedron& P, const VectorXd& x, double tol = Tolerances{}.active)
{
  const VectorXd s = P.slacks(x);
  std::vector<Index> idx;
  for (Index j = 0; j < s.size(); ++j) {
    if (s(j) > tol) { throw InfeasibleError("point violates face " + std::to_string(j) + " by " + std::to_string(s(j))); }
    if (std::abs(s(j)) <= tol) { idx.push_back(j); }
  }
  return ActiveSet(std::move(idx));
}

/// Like active_set but never throws; faces violated beyond tol are not reported.
inline ActiveSet active_set_unchecked(const Polyhedron& P, const VectorXd& x, double tol = Tolerances{}.active)
{
  const VectorXd s = P.slacks(x);
  std::vector<Index> idx;
  for (Index j = 0; j < s.size(); ++j) {
    if (std::abs(s(j)) <= tol) { idx.push_back(j); }
  }
  return ActiveSet(std::move(idx));
}

/// How the adjoint-argument index sets I_0(y), I_>(y) compare <x*_j, y>.
enum class DualIndexRule {
  PaperLiteral,     ///< against the face offsets c_j
  HomogeneousZero,  ///< against 0
};

inline const char* to_string(DualIndexRule r)
{
  return r == DualIndexRule::PaperLiteral ? "paper" : "zero";
}

struct DualIndexSets
{
  ActiveSet equal;    ///< I_0
  ActiveSet greater;  ///< I_>

  /// I_0 ∪ I_>
  bool in_union(Index j) const { return equal.contains(j) || greater.contains(j); }
};

inline DualIndexSets dual_index_sets(const Polyhedron& P, const VectorXd& y, double tol,
                                     DualIndexRule rule = DualIndexRule::PaperLiteral)
{
  P.check_dim(y);
  std::vector<Index> eq, gt;
  for (Index j = 0; j < P.face_count(); ++j) {
    const double threshold = rule == DualIndexRule::PaperLiteral ? P.offsets()(j) : 0.0;
    const double v = P.normals().col(j).dot(y) - threshold;
    if (std::abs(v) <= tol) {
      eq.push_back(j);
    } else if (v > tol) {
      gt.push_back(j);
    }
  }
  return {ActiveSet(std::move(eq)), ActiveSet(std::move(gt))};
}

/// Columns of P.normals() restricted to an active set.
inline MatrixXd active_normals(const Polyhedron& P, const ActiveSet& active)
{
  MatrixXd N(P.dim(), static_cast<Index>(active.size()));
  Index c = 0;
  for (Index j : active.indices()) { N.col(c++) = P.normals().col(j); }
  return N;
}

/// True when the active generators are linearly independent.
inline bool linearly_independent(const Polyhedron& P, const ActiveSet& active)
{
  if (active.empty()) { return true; }
  const MatrixXd N = active_normals(P, active);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(N);
  qr.setThreshold(1e-10);
  return qr.rank() == N.cols();
}

}  // namespace sweepctl
