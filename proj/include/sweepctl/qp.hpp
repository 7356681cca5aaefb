#pragma once

#include <Eigen/Dense>

#include <limits>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"

namespace sweepctl {

struct QpOptions
{
  double feasibility_tol = 1e-9;
  int max_iterations = 0;  ///< 0 selects 50 * (m + n)
};

struct QpResult
{
  VectorXd point;
  VectorXd multipliers;  ///< one per row, zero off the final working set
  std::vector<Index> working_set;
  int iterations = 0;
};

/// Dual active-set method (Goldfarb-Idnani with identity Hessian) for
///
///   min 1/2 ||z - v||^2   s.t.   A z <= b.
///
/// Starts from the unconstrained minimizer z = v and adds the most violated
/// row (lowest index on ties) until primal feasibility is reached, dropping
/// working rows whose multipliers would turn negative.
inline QpResult solve_projection_qp(const MatrixXd& A, const VectorXd& b, const VectorXd& v,
                                    const QpOptions& opt = {})
{
  const Index m = A.rows();
  const Index n = v.size();
  if (A.cols() != n && m > 0) { throw DimensionError("constraint matrix has wrong column count"); }
  if (b.size() != m) { throw DimensionError("rhs size does not match constraint rows"); }

  QpResult res;
  res.point = v;
  res.multipliers = VectorXd::Zero(m);
  if (m == 0) { return res; }

  const int max_iter = opt.max_iterations > 0 ? opt.max_iterations : static_cast<int>(50 * (m + n));
  std::vector<Index>& W = res.working_set;
  VectorXd& x = res.point;
  VectorXd& lambda = res.multipliers;

  auto select_entering = [&]() -> Index {
    Index best = -1;
    double worst = opt.feasibility_tol;
    for (Index j = 0; j < m; ++j) {
      if (std::find(W.begin(), W.end(), j) != W.end()) { continue; }
      const double viol = A.row(j).dot(x) - b(j);
      if (viol > worst) {
        worst = viol;
        best = j;
      }
    }
    return best;
  };

  for (Index p = select_entering(); p >= 0; p = select_entering()) {
    const VectorXd ap = A.row(p).transpose();
    const double ap_sq = ap.squaredNorm();
    while (true) {
      if (++res.iterations > max_iter) { throw Error("projection QP: iteration limit reached"); }

      VectorXd r;
      VectorXd z = ap;
      if (!W.empty()) {
        MatrixXd N(n, static_cast<Index>(W.size()));
        for (std::size_t c = 0; c < W.size(); ++c) { N.col(static_cast<Index>(c)) = A.row(W[c]).transpose(); }
        r = N.colPivHouseholderQr().solve(ap);
        z = ap - N * r;
      }
      const double zz = z.squaredNorm();
      const bool primal_step = zz > 1e-14 * ap_sq;
      const double viol = ap.dot(x) - b(p);

      double t1 = primal_step ? viol / zz : std::numeric_limits<double>::infinity();
      double t2 = std::numeric_limits<double>::infinity();
      std::size_t blocking = 0;
      for (std::size_t c = 0; c < W.size(); ++c) {
        const double rc = r(static_cast<Index>(c));
        if (rc > 1e-14) {
          const double t = lambda(W[c]) / rc;
          if (t < t2 || (t == t2 && W[c] < W[blocking])) {
            t2 = t;
            blocking = c;
          }
        }
      }

      if (!std::isfinite(t1) && !std::isfinite(t2)) {
        throw InfeasibleError("projection QP: constraints are infeasible (row " + std::to_string(p) + ")");
      }

      const double t = std::min(t1, t2);
      if (primal_step) { x -= t * z; }
      for (std::size_t c = 0; c < W.size(); ++c) { lambda(W[c]) -= t * r(static_cast<Index>(c)); }
      lambda(p) += t;

      if (t2 < t1) {
        lambda(W[blocking]) = 0.0;
        W.erase(W.begin() + static_cast<std::ptrdiff_t>(blocking));
        continue;
      }
      W.push_back(p);
      break;
    }
  }

  std::sort(W.begin(), W.end());
  return res;
}

/// Lawson-Hanson nonnegative least squares: min ||A x - b|| subject to x >= 0.
inline VectorXd nnls(const MatrixXd& A, const VectorXd& b, double tol = 0.0, int max_iter = 0)
{
  const Index n = A.cols();
  VectorXd x = VectorXd::Zero(n);
  if (n == 0) { return x; }
  if (tol <= 0.0) { tol = 10.0 * std::numeric_limits<double>::epsilon() * A.norm() * std::max<Index>(A.rows(), n); }
  if (max_iter <= 0) { max_iter = static_cast<int>(3 * n + 10); }

  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  VectorXd w = A.transpose() * (b - A * x);

  auto solve_passive = [&](VectorXd& s) {
    std::vector<Index> P;
    for (Index j = 0; j < n; ++j) {
      if (passive[static_cast<std::size_t>(j)]) { P.push_back(j); }
    }
    MatrixXd Ap(A.rows(), static_cast<Index>(P.size()));
    for (std::size_t c = 0; c < P.size(); ++c) { Ap.col(static_cast<Index>(c)) = A.col(P[c]); }
    const VectorXd sp = Ap.colPivHouseholderQr().solve(b);
    s = VectorXd::Zero(n);
    for (std::size_t c = 0; c < P.size(); ++c) { s(P[c]) = sp(static_cast<Index>(c)); }
  };

  for (int outer = 0; outer < max_iter; ++outer) {
    Index t = -1;
    double wmax = tol;
    for (Index j = 0; j < n; ++j) {
      if (!passive[static_cast<std::size_t>(j)] && w(j) > wmax) {
        wmax = w(j);
        t = j;
      }
    }
    if (t < 0) { break; }
    passive[static_cast<std::size_t>(t)] = true;

    VectorXd s;
    solve_passive(s);
    for (int inner = 0; inner < max_iter; ++inner) {
      double alpha = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && s(j) <= 0.0) {
          alpha = std::min(alpha, x(j) / (x(j) - s(j)));
        }
      }
      if (!std::isfinite(alpha)) { break; }
      x += alpha * (s - x);
      for (Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && x(j) <= tol) {
          passive[static_cast<std::size_t>(j)] = false;
          x(j) = 0.0;
        }
      }
      solve_passive(s);
    }
    x = s;
    w = A.transpose() * (b - A * x);
  }
  return x;
}

/// Nonnegative coefficients over the faces of a polyhedron (zero off the
/// active set) together with the representation residual.
struct ConeDecomposition
{
  VectorXd coefficients;
  double residual = 0.0;
};

/// Best nonnegative representation v ~ sum_{j in active} lambda_j x*_j.
/// An empty active set yields zero coefficients and residual ||v||.
inline ConeDecomposition normal_cone_decompose(const Polyhedron& P, const ActiveSet& active, const VectorXd& v)
{
  active.validate_for(P);
  P.check_dim(v);
  ConeDecomposition d;
  d.coefficients = VectorXd::Zero(P.face_count());
  if (active.empty() || v.isZero(0.0)) {
    d.residual = v.norm();
    return d;
  }
  const MatrixXd N = active_normals(P, active);
  const VectorXd lam = nnls(N, v);
  Index c = 0;
  for (Index j : active.indices()) { d.coefficients(j) = lam(c++); }
  d.residual = (N * lam - v).norm();
  return d;
}

struct Projection
{
  VectorXd point;
  ConeDecomposition decomposition;  ///< of v - point in N(point; P)
};

/// Euclidean projection onto P. The decomposition carries the QP multipliers,
/// so v - point = sum_j coefficients_j x*_j up to `residual`.
inline Projection project(const Polyhedron& P, const VectorXd& v, const QpOptions& opt = {})
{
  P.check_dim(v);
  QpResult qp = solve_projection_qp(P.constraint_matrix(), P.offsets(), v, opt);
  Projection out;
  out.point = std::move(qp.point);
  out.decomposition.coefficients = std::move(qp.multipliers);
  out.decomposition.residual = ((v - out.point) - P.normals() * out.decomposition.coefficients).norm();
  return out;
}

/// Unique minimizer of ||z - v||^2 subject to A z <= b.
inline VectorXd project_linear_system(const MatrixXd& A, const VectorXd& b, const VectorXd& v,
                                      const QpOptions& opt = {})
{
  if (A.rows() > 0 && A.cols() != v.size()) { throw DimensionError("system columns do not match point dimension"); }
  return solve_projection_qp(A, b, v, opt).point;
}

/// PLICQ at x: no nonzero nonnegative combination of the active normals
/// vanishes. Decided by the distance from 0 to the convex hull of the
/// (unit-scaled) active normals, computed as a simplex-weighted least squares.
inline bool plicq(const Polyhedron& P, const VectorXd& x, double tol = Tolerances{}.active)
{
  const ActiveSet act = active_set_unchecked(P, x, tol);
  if (act.empty()) { return true; }
  MatrixXd N = active_normals(P, act);
  for (Index c = 0; c < N.cols(); ++c) { N.col(c).normalize(); }
  MatrixXd Aug(N.rows() + 1, N.cols());
  Aug.topRows(N.rows()) = N;
  Aug.row(N.rows()).setOnes();
  VectorXd rhs = VectorXd::Zero(N.rows() + 1);
  rhs(N.rows()) = 1.0;
  const VectorXd lam = nnls(Aug, rhs);
  const double dist = (N * lam).norm();
  return dist > 1e-9;
}

}  // namespace sweepctl
