#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "errors.hpp"

namespace sweepctl {

using SparseMatrixd = Eigen::SparseMatrix<double>;

struct BoundedLsOptions
{
  int max_iterations = 0;  ///< 0 selects 3 * cols + 20
  double regularization = 1e-13;  ///< relative to the largest diagonal of A^T A
  int refinement_steps = 2;
};

struct BoundedLsResult
{
  Eigen::VectorXd x;
  double residual = 0.0;  ///< ||A x - b||
  int iterations = 0;
  bool converged = false;
};

namespace detail {

enum class VarState : unsigned char { Free, AtLower, AtUpper };

/// Solves the normal equations restricted to the free variables, the rest
/// held at their current values.
inline bool solve_free(const SparseMatrixd& AtA, const Eigen::VectorXd& Atb, const std::vector<VarState>& state,
                       const Eigen::VectorXd& x, Eigen::VectorXd& out, const BoundedLsOptions& opt)
{
  const Eigen::Index n = AtA.cols();
  std::vector<Eigen::Index> pos(static_cast<std::size_t>(n), -1);
  Eigen::Index m = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (state[static_cast<std::size_t>(j)] == VarState::Free) { pos[static_cast<std::size_t>(j)] = m++; }
  }
  out = x;
  if (m == 0) { return true; }

  Eigen::VectorXd rhs(m);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (pos[static_cast<std::size_t>(j)] >= 0) { rhs(pos[static_cast<std::size_t>(j)]) = Atb(j); }
  }
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(AtA.nonZeros()));
  double diag_max = 0.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    const Eigen::Index pc = pos[static_cast<std::size_t>(c)];
    for (SparseMatrixd::InnerIterator it(AtA, c); it; ++it) {
      const Eigen::Index pr = pos[static_cast<std::size_t>(it.row())];
      if (pc >= 0 && pr >= 0) {
        trip.emplace_back(pr, pc, it.value());
        if (pr == pc) { diag_max = std::max(diag_max, it.value()); }
      } else if (pr >= 0 && pc < 0) {
        rhs(pr) -= it.value() * x(c);
      }
    }
  }
  const double reg = opt.regularization * std::max(diag_max, 1.0);
  for (Eigen::Index j = 0; j < m; ++j) { trip.emplace_back(j, j, reg); }
  SparseMatrixd N(m, m);
  N.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<SparseMatrixd> ldlt(N);
  if (ldlt.info() != Eigen::Success) { return false; }
  Eigen::VectorXd z = ldlt.solve(rhs);
  for (int r = 0; r < opt.refinement_steps; ++r) { z += ldlt.solve(rhs - N * z); }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (pos[static_cast<std::size_t>(j)] >= 0) { out(j) = z(pos[static_cast<std::size_t>(j)]); }
  }
  return true;
}

}  // namespace detail

/// min ||A x - b|| subject to lower <= x <= upper (entries may be infinite;
/// 0 must be feasible). Active-set method in the style of Lawson-Hanson:
/// free variables are solved through the regularized normal equations, and
/// a variable leaves its bound when the gradient pulls it inside.
inline BoundedLsResult bounded_least_squares(const SparseMatrixd& A, const Eigen::VectorXd& b,
                                             const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                             const BoundedLsOptions& opt = {})
{
  using detail::VarState;
  const Eigen::Index n = A.cols();
  if (b.size() != A.rows() || lower.size() != n || upper.size() != n) { throw DimensionError("bounded_least_squares: shapes"); }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (lower(j) > 0.0 || upper(j) < 0.0) { throw Error("bounded_least_squares: 0 must be feasible"); }
  }
  const int max_iter = opt.max_iterations > 0 ? opt.max_iterations : static_cast<int>(3 * n + 20);
  const SparseMatrixd At = A.transpose();
  const SparseMatrixd AtA = (At * A).pruned();
  const Eigen::VectorXd Atb = At * b;
  const double gtol = 1e-11 * std::max(1.0, Atb.lpNorm<Eigen::Infinity>());

  std::vector<VarState> state(static_cast<std::size_t>(n), VarState::Free);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  BoundedLsResult res;

  // Start from the unconstrained solution and clamp until the free set is
  // feasible; this is usually close to the final active set.
  Eigen::VectorXd s;
  for (int pass = 0; pass < 50; ++pass) {
    if (!detail::solve_free(AtA, Atb, state, x, s, opt)) { throw Error("bounded_least_squares: factorization failed"); }
    bool clamped = false;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (state[static_cast<std::size_t>(j)] != VarState::Free) { continue; }
      if (s(j) < lower(j)) {
        state[static_cast<std::size_t>(j)] = VarState::AtLower;
        x(j) = lower(j);
        clamped = true;
      } else if (s(j) > upper(j)) {
        state[static_cast<std::size_t>(j)] = VarState::AtUpper;
        x(j) = upper(j);
        clamped = true;
      }
    }
    if (!clamped) {
      x = s;
      break;
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      if (state[static_cast<std::size_t>(j)] == VarState::Free) { x(j) = std::clamp(s(j), lower(j), upper(j)); }
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) { x(j) = std::clamp(x(j), lower(j), upper(j)); }

  for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
    const Eigen::VectorXd w = Atb - AtA * x;  // minus the gradient
    Eigen::Index enter = -1;
    double best = gtol;
    for (Eigen::Index j = 0; j < n; ++j) {
      const VarState st = state[static_cast<std::size_t>(j)];
      const double pull = st == VarState::AtLower ? w(j) : (st == VarState::AtUpper ? -w(j) : 0.0);
      if (pull > best) {
        best = pull;
        enter = j;
      }
    }
    if (enter < 0) {
      res.converged = true;
      break;
    }
    state[static_cast<std::size_t>(enter)] = VarState::Free;

    for (int inner = 0; inner < max_iter; ++inner) {
      if (!detail::solve_free(AtA, Atb, state, x, s, opt)) { throw Error("bounded_least_squares: factorization failed"); }
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (state[static_cast<std::size_t>(j)] != VarState::Free) { continue; }
        if (s(j) < lower(j)) { alpha = std::min(alpha, (x(j) - lower(j)) / (x(j) - s(j))); }
        if (s(j) > upper(j)) { alpha = std::min(alpha, (upper(j) - x(j)) / (s(j) - x(j))); }
      }
      if (alpha >= 1.0) {
        x = s;
        break;
      }
      x += alpha * (s - x);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (state[static_cast<std::size_t>(j)] != VarState::Free) { continue; }
        if (x(j) <= lower(j) + 1e-15 * std::max(1.0, std::abs(lower(j))) && std::isfinite(lower(j))) {
          x(j) = lower(j);
          state[static_cast<std::size_t>(j)] = VarState::AtLower;
        } else if (x(j) >= upper(j) - 1e-15 * std::max(1.0, std::abs(upper(j))) && std::isfinite(upper(j))) {
          x(j) = upper(j);
          state[static_cast<std::size_t>(j)] = VarState::AtUpper;
        }
      }
    }
  }
  res.x = x;
  res.residual = (A * x - b).norm();
  return res;
}

}  // namespace sweepctl
