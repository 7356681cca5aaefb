#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "disks.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "qp.hpp"

namespace sweepctl {

// ---------------------------------------------------------------------------
// Grid and signals
// ---------------------------------------------------------------------------

/// Time grid 0 = t_0 < t_1 < ... < t_k = T with steps h_i = t_{i+1} - t_i.
class Grid
{
public:
  Grid() = default;

  explicit Grid(std::vector<double> steps) : steps_(std::move(steps))
  {
    if (steps_.empty()) { throw Error("grid needs at least one step"); }
    for (double h : steps_) {
      if (!(h > 0.0) || !std::isfinite(h)) { throw Error("grid steps must be positive and finite"); }
    }
    build_nodes(std::accumulate(steps_.begin(), steps_.end(), 0.0));
  }

  Grid(double final_time, std::vector<double> steps) : steps_(std::move(steps))
  {
    if (steps_.empty()) { throw Error("grid needs at least one step"); }
    double sum = 0.0;
    for (double h : steps_) {
      if (!(h > 0.0) || !std::isfinite(h)) { throw Error("grid steps must be positive and finite"); }
      sum += h;
    }
    if (std::abs(sum - final_time) > 1e-12 * std::max(1.0, final_time)) {
      throw Error("grid steps do not sum to the final time");
    }
    build_nodes(final_time);
  }

  static Grid uniform(double final_time, std::size_t k)
  {
    if (k == 0) { throw Error("grid needs at least one step"); }
    if (!(final_time > 0.0)) { throw Error("final time must be positive"); }
    return Grid(final_time, std::vector<double>(k, final_time / static_cast<double>(k)));
  }

  /// Uniform on [0, split] with k1 steps and on [split, T] with k2 steps, so
  /// that `split` is a mesh point.
  static Grid two_segment(double split, std::size_t k1, double final_time, std::size_t k2)
  {
    if (!(split > 0.0) || !(final_time > split) || k1 == 0 || k2 == 0) { throw Error("invalid two-segment grid"); }
    std::vector<double> h(k1, split / static_cast<double>(k1));
    h.insert(h.end(), k2, (final_time - split) / static_cast<double>(k2));
    Grid g(final_time, std::move(h));
    g.nodes_[k1] = split;
    return g;
  }

  std::size_t size() const noexcept { return steps_.size(); }
  double final_time() const noexcept { return nodes_.empty() ? 0.0 : nodes_.back(); }
  double step(std::size_t i) const { return steps_.at(i); }
  const std::vector<double>& steps() const noexcept { return steps_; }
  /// t_0 .. t_k, with t_k equal to the final time exactly.
  const std::vector<double>& nodes() const noexcept { return nodes_; }
  double node(std::size_t i) const { return nodes_.at(i); }

  /// Index i of the subinterval [t_i, t_{i+1}) containing t, clamped to [0, k-1].
  std::size_t interval_of(double t) const
  {
    auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
    if (it == nodes_.begin()) { return 0; }
    const auto i = static_cast<std::size_t>(std::distance(nodes_.begin(), it) - 1);
    return std::min(i, steps_.size() - 1);
  }

private:
  void build_nodes(double final_time)
  {
    nodes_.resize(steps_.size() + 1);
    nodes_[0] = 0.0;
    for (std::size_t i = 0; i < steps_.size(); ++i) { nodes_[i + 1] = nodes_[i] + steps_[i]; }
    nodes_.back() = final_time;
  }

  std::vector<double> steps_;
  std::vector<double> nodes_;
};

/// Piecewise-constant control u_0 .. u_{k-1}.
struct ControlSignal
{
  std::vector<VectorXd> values;

  static ControlSignal constant(const VectorXd& u, std::size_t k) { return {std::vector<VectorXd>(k, u)}; }

  std::size_t size() const noexcept { return values.size(); }
  const VectorXd& operator[](std::size_t i) const { return values.at(i); }
};

// ---------------------------------------------------------------------------
// Perturbation maps g(x, u)
// ---------------------------------------------------------------------------

class PerturbationMap
{
public:
  virtual ~PerturbationMap() = default;

  virtual Index state_dim() const = 0;
  virtual Index control_dim() const = 0;
  virtual VectorXd value(const VectorXd& x, const VectorXd& u) const = 0;
  /// n x n
  virtual MatrixXd jacobian_x(const VectorXd& x, const VectorXd& u) const = 0;
  /// n x d
  virtual MatrixXd jacobian_u(const VectorXd& x, const VectorXd& u) const = 0;
  /// beta with ||g(x,u)|| <= beta (1 + ||x||) over the admissible controls.
  virtual double growth_constant() const = 0;
};

/// g(x, u) = A x + B u + c.
class AffinePerturbation final : public PerturbationMap
{
public:
  AffinePerturbation(MatrixXd A, MatrixXd B, VectorXd c, double control_bound = 1.0)
      : A_(std::move(A)), B_(std::move(B)), c_(std::move(c)), control_bound_(control_bound)
  {
    if (A_.rows() != A_.cols() || B_.rows() != A_.rows() || c_.size() != A_.rows()) {
      throw DimensionError("affine perturbation: inconsistent shapes");
    }
  }

  Index state_dim() const override { return A_.rows(); }
  Index control_dim() const override { return B_.cols(); }
  VectorXd value(const VectorXd& x, const VectorXd& u) const override { return A_ * x + B_ * u + c_; }
  MatrixXd jacobian_x(const VectorXd&, const VectorXd&) const override { return A_; }
  MatrixXd jacobian_u(const VectorXd&, const VectorXd&) const override { return B_; }

  double growth_constant() const override
  {
    const double a = A_.size() ? A_.operatorNorm() : 0.0;
    const double b = B_.size() ? B_.operatorNorm() : 0.0;
    return std::max(a, b * control_bound_ + c_.norm());
  }

private:
  MatrixXd A_;
  MatrixXd B_;
  VectorXd c_;
  double control_bound_;
};

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

/// Piecewise-linear arc x_0 .. x_k with constant velocity V_{i+1} on
/// [t_i, t_{i+1}] and normal-cone multipliers eta_i (one entry per face).
/// States obey x_{i+1} = x_i + h_i V_{i+1} exactly when built through
/// from_velocities().
class Trajectory
{
public:
  Trajectory() = default;

  Trajectory(Grid grid, std::vector<VectorXd> states, std::vector<VectorXd> velocities,
             std::vector<VectorXd> cone_multipliers)
      : grid_(std::move(grid)), states_(std::move(states)), velocities_(std::move(velocities)),
        eta_(std::move(cone_multipliers))
  {
    const std::size_t k = grid_.size();
    if (states_.size() != k + 1 || velocities_.size() != k || eta_.size() != k) {
      throw DimensionError("trajectory: grid/states/velocities/multipliers lengths disagree");
    }
  }

  static Trajectory from_velocities(Grid grid, const VectorXd& x0, std::vector<VectorXd> velocities,
                                    std::vector<VectorXd> eta)
  {
    std::vector<VectorXd> states;
    states.reserve(velocities.size() + 1);
    states.push_back(x0);
    for (std::size_t i = 0; i < velocities.size(); ++i) {
      states.push_back(states.back() + grid.step(i) * velocities[i]);
    }
    return Trajectory(std::move(grid), std::move(states), std::move(velocities), std::move(eta));
  }

  /// Velocities from finite differences; multipliers default to zeros of length s.
  static Trajectory from_states(Grid grid, std::vector<VectorXd> states, Index face_count)
  {
    if (states.size() != grid.size() + 1) { throw DimensionError("trajectory: state count must be k + 1"); }
    std::vector<VectorXd> V;
    V.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) { V.push_back((states[i + 1] - states[i]) / grid.step(i)); }
    std::vector<VectorXd> eta(grid.size(), VectorXd::Zero(face_count));
    return Trajectory(std::move(grid), std::move(states), std::move(V), std::move(eta));
  }

  const Grid& grid() const noexcept { return grid_; }
  std::size_t steps() const noexcept { return grid_.size(); }
  double final_time() const noexcept { return grid_.final_time(); }
  Index dim() const { return states_.front().size(); }
  const std::vector<VectorXd>& states() const noexcept { return states_; }
  const std::vector<VectorXd>& velocities() const noexcept { return velocities_; }
  const std::vector<VectorXd>& cone_multipliers() const noexcept { return eta_; }
  const VectorXd& state(std::size_t i) const { return states_.at(i); }
  const VectorXd& terminal_state() const { return states_.back(); }
  /// V_{i+1}, the velocity on [t_i, t_{i+1}).
  const VectorXd& velocity(std::size_t i) const { return velocities_.at(i); }
  const VectorXd& eta(std::size_t i) const { return eta_.at(i); }

  /// Velocity of the extended arc x_e on the piece containing t (0 beyond T).
  VectorXd velocity_at(double t) const
  {
    if (t >= final_time()) { return VectorXd::Zero(dim()); }
    return velocities_[grid_.interval_of(t)];
  }

  /// One-sided velocity samples: `right` is the limit from t+ and `left` from t-.
  VectorXd velocity_right(double t) const { return velocity_at(t); }
  VectorXd velocity_left(double t) const
  {
    if (t > final_time()) { return VectorXd::Zero(dim()); }
    if (t <= 0.0) { return velocities_.front(); }
    const auto& nodes = grid_.nodes();
    auto it = std::lower_bound(nodes.begin(), nodes.end(), t);
    const auto i = static_cast<std::size_t>(std::distance(nodes.begin(), it));
    return velocities_[std::min(i, steps()) - 1];
  }

private:
  Grid grid_;
  std::vector<VectorXd> states_;
  std::vector<VectorXd> velocities_;
  std::vector<VectorXd> eta_;
};

/// x_e(t): linear interpolation on [0, T], constant x_k beyond T.
inline VectorXd sample(const Trajectory& traj, double t)
{
  if (t < 0.0) { throw Error("sample: negative time"); }
  if (t >= traj.final_time()) { return traj.terminal_state(); }
  const std::size_t i = traj.grid().interval_of(t);
  const double ti = traj.grid().node(i);
  if (t == ti) { return traj.state(i); }
  return traj.state(i) + (t - ti) * traj.velocity(i);
}

/// A trajectory together with the control that generated it; used as the
/// reference arc of a discrete problem and by the localization functional.
struct ControlledArc
{
  Trajectory trajectory;
  ControlSignal controls;

  double final_time() const { return trajectory.final_time(); }

  /// Control on the piece containing t; the last control is held beyond T.
  const VectorXd& control_at(double t) const
  {
    if (t >= final_time()) { return controls.values.back(); }
    return controls[trajectory.grid().interval_of(t)];
  }
  const VectorXd& control_right(double t) const { return control_at(t); }
  const VectorXd& control_left(double t) const
  {
    if (t > final_time()) { return controls.values.back(); }
    if (t <= 0.0) { return controls.values.front(); }
    const auto& nodes = trajectory.grid().nodes();
    auto it = std::lower_bound(nodes.begin(), nodes.end(), t);
    const auto i = static_cast<std::size_t>(std::distance(nodes.begin(), it));
    return controls[std::min(i, controls.size()) - 1];
  }
};

/// Sorted breakpoints of [a, b] refined by both node lists.
inline std::vector<double> union_breakpoints(double a, double b, const std::vector<double>& n1,
                                             const std::vector<double>& n2)
{
  std::vector<double> pts{a, b};
  for (double t : n1) {
    if (t > a && t < b) { pts.push_back(t); }
  }
  for (double t : n2) {
    if (t > a && t < b) { pts.push_back(t); }
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

/// int_0^Tbar (||xdot_e - xbardot_e||^2 + ||u - ubar||^2) dt + (Tbar - T)^2,
/// exact on the union refinement of both grids.
inline double localization_distance(const ControlledArc& candidate, const ControlledArc& reference)
{
  const double T = candidate.final_time();
  const double Tbar = reference.final_time();
  const auto pts = union_breakpoints(0.0, Tbar, candidate.trajectory.grid().nodes(), reference.trajectory.grid().nodes());
  double acc = 0.0;
  for (std::size_t p = 0; p + 1 < pts.size(); ++p) {
    const double len = pts[p + 1] - pts[p];
    if (len <= 0.0) { continue; }
    const double mid = 0.5 * (pts[p] + pts[p + 1]);
    const VectorXd dv = candidate.trajectory.velocity_at(mid) - reference.trajectory.velocity_at(mid);
    const VectorXd du = candidate.control_at(mid) - reference.control_at(mid);
    acc += len * (dv.squaredNorm() + du.squaredNorm());
  }
  return acc + (Tbar - T) * (Tbar - T);
}

// ---------------------------------------------------------------------------
// Stepping
// ---------------------------------------------------------------------------

struct StepResult
{
  VectorXd next;
  VectorXd eta;       ///< -V + g = sum_j eta_j x*_j
  VectorXd velocity;  ///< V = (next - x) / h
};

/// Tolerances for the per-step multiplier recovery.
struct StepOptions
{
  QpOptions qp{};
  double active_tol = 1e-7;
  double decomposition_tol = 1e-6;
};

/// One catching-up step x_{i+1} = Pi(x_i + h g(x_i, u_i); C). The multipliers
/// come from a nonnegative least-squares fit of g - V on the active set of
/// the new state.
inline StepResult step_catching_up(const Polyhedron& P, const PerturbationMap& g, const VectorXd& x,
                                   const VectorXd& u, double h, const StepOptions& opt = {})
{
  if (!(h > 0.0)) { throw Error("step size must be positive"); }
  P.check_dim(x);
  const VectorXd gx = g.value(x, u);
  const VectorXd target = x + h * gx;
  StepResult out;
  QpResult qp = solve_projection_qp(P.constraint_matrix(), P.offsets(), target, opt.qp);
  if (qp.working_set.empty() && qp.point == target) {
    out.velocity = gx;
    out.next = target;
    out.eta = VectorXd::Zero(P.face_count());
    return out;
  }
  out.velocity = (qp.point - x) / h;
  out.next = x + h * out.velocity;
  const ActiveSet act = active_set_unchecked(P, out.next, opt.active_tol);
  const ConeDecomposition d = normal_cone_decompose(P, act, gx - out.velocity);
  if (d.residual > opt.decomposition_tol * std::max(1.0, gx.norm())) {
    throw Error("cone multiplier recovery failed, residual " + std::to_string(d.residual));
  }
  out.eta = d.coefficients;
  return out;
}

/// Differentiable constraint functions D(x) >= 0 whose first-order
/// linearization defines the moving set K(x) = {y : D(x) + J(x)(y - x) >= 0}.
class ConstraintFunctions
{
public:
  virtual ~ConstraintFunctions() = default;
  virtual Index count() const = 0;
  virtual Index dim() const = 0;
  virtual VectorXd values(const VectorXd& x) const = 0;
  virtual MatrixXd jacobian(const VectorXd& x) const = 0;  ///< count x dim
};

/// D_j(x) = c_j - <x*_j, x>; its linearization is the polyhedron itself.
class AffineConstraintSet final : public ConstraintFunctions
{
public:
  explicit AffineConstraintSet(Polyhedron P) : P_(std::move(P)) {}
  Index count() const override { return P_.face_count(); }
  Index dim() const override { return P_.dim(); }
  VectorXd values(const VectorXd& x) const override { return -P_.slacks(x); }
  MatrixXd jacobian(const VectorXd&) const override { return -P_.normals().transpose(); }

private:
  Polyhedron P_;
};

/// Pairwise disk separations D_ij, pairs ordered (0,1), (0,2), ..., (n-2,n-1).
class DiskSeparation final : public ConstraintFunctions
{
public:
  explicit DiskSeparation(std::vector<double> radii) : radii_(std::move(radii)) {}

  Index count() const override
  {
    const auto n = static_cast<Index>(radii_.size());
    return n * (n - 1) / 2;
  }
  Index dim() const override { return 2 * static_cast<Index>(radii_.size()); }

  VectorXd values(const VectorXd& x) const override
  {
    VectorXd D(count());
    Index r = 0;
    for_each_pair([&](Index i, Index j) { D(r++) = pair_distance(x, i, j, radii_).value; });
    return D;
  }

  MatrixXd jacobian(const VectorXd& x) const override
  {
    MatrixXd J(count(), dim());
    Index r = 0;
    for_each_pair([&](Index i, Index j) { J.row(r++) = pair_distance(x, i, j, radii_).gradient.transpose(); });
    return J;
  }

  const std::vector<double>& radii() const noexcept { return radii_; }

private:
  template <class F>
  void for_each_pair(F&& f) const
  {
    const auto n = static_cast<Index>(radii_.size());
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) { f(i, j); }
    }
  }

  std::vector<double> radii_;
};

struct LinearSystem
{
  MatrixXd A;
  VectorXd b;
};

/// The admissible-velocity set C_h(x) = {V : D(x) + h J(x) V >= 0} in
/// row form A V <= b.
inline LinearSystem admissible_velocity_system(const ConstraintFunctions& D, const VectorXd& x, double h)
{
  if (!(h > 0.0)) { throw Error("step size must be positive"); }
  if (x.size() != D.dim()) { throw DimensionError("configuration dimension mismatch"); }
  if (D.count() == 0) { return {MatrixXd(0, x.size()), VectorXd(0)}; }
  return {-h * D.jacobian(x), D.values(x)};
}

inline LinearSystem admissible_velocity_system(const VectorXd& positions, const std::vector<double>& radii, double h)
{
  return admissible_velocity_system(DiskSeparation(radii), positions, h);
}

/// One step of the linearized moving-set scheme: V = Pi(g; C_h(x)), x+ = x + h V.
/// eta_j = h * lambda_j so that g - V = sum_j eta_j (-grad D_j).
inline StepResult step_linearized(const ConstraintFunctions& D, const VectorXd& x, const VectorXd& g_value, double h,
                                  const QpOptions& opt = {})
{
  const LinearSystem sys = admissible_velocity_system(D, x, h);
  StepResult out;
  if (sys.A.rows() == 0) {
    out.velocity = g_value;
    out.eta = VectorXd(0);
  } else {
    QpResult qp = solve_projection_qp(sys.A, sys.b, g_value, opt);
    out.velocity = qp.working_set.empty() && qp.point == g_value ? g_value : qp.point;
    out.eta = h * qp.multipliers;
  }
  out.next = x + h * out.velocity;
  return out;
}

inline StepResult step_linearized(const VectorXd& positions, const std::vector<double>& radii, const VectorXd& g_value,
                                  double h, const QpOptions& opt = {})
{
  return step_linearized(DiskSeparation(radii), positions, g_value, h, opt);
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

enum class SimulationMode {
  FixedSet,             ///< x_{i+1} = Pi(x_i + h g; C)
  LinearizedMovingSet,  ///< x_{i+1} = Pi(x_i + h g; K(x_i)) with K from the linearized constraints
};

inline void check_controls(const PerturbationMap& g, const ControlSignal& ctrl, const Grid& grid)
{
  if (ctrl.size() != grid.size()) { throw DimensionError("control count must equal grid step count"); }
  for (const auto& u : ctrl.values) {
    if (u.size() != g.control_dim()) { throw DimensionError("control dimension mismatch"); }
  }
}

/// Moving-set simulation driven by arbitrary constraint functions.
inline Trajectory simulate_moving_set(const ConstraintFunctions& D, const PerturbationMap& g, const VectorXd& x0,
                                      const ControlSignal& ctrl, const Grid& grid, const QpOptions& opt = {})
{
  check_controls(g, ctrl, grid);
  if (x0.size() != D.dim() || g.state_dim() != D.dim()) { throw DimensionError("state dimension mismatch"); }
  std::vector<VectorXd> V;
  std::vector<VectorXd> eta;
  V.reserve(grid.size());
  eta.reserve(grid.size());
  VectorXd x = x0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    try {
      StepResult s = step_linearized(D, x, g.value(x, ctrl[i]), grid.step(i), opt);
      x = std::move(s.next);
      V.push_back(std::move(s.velocity));
      eta.push_back(std::move(s.eta));
    } catch (const SimulationError&) {
      throw;
    } catch (const Error& e) {
      throw SimulationError(i, e.what());
    }
  }
  return Trajectory::from_velocities(grid, x0, std::move(V), std::move(eta));
}

inline Trajectory simulate(const Polyhedron& P, const PerturbationMap& g, const VectorXd& x0, const ControlSignal& ctrl,
                           const Grid& grid, SimulationMode mode = SimulationMode::FixedSet,
                           const StepOptions& opt = {})
{
  P.check_dim(x0);
  if (g.state_dim() != P.dim()) { throw DimensionError("perturbation/polyhedron dimension mismatch"); }
  check_controls(g, ctrl, grid);
  if (!contains(P, x0, opt.qp.feasibility_tol)) { throw SimulationError(0, "initial state is not in C"); }

  if (mode == SimulationMode::LinearizedMovingSet) {
    return simulate_moving_set(AffineConstraintSet(P), g, x0, ctrl, grid, opt.qp);
  }

  std::vector<VectorXd> V;
  std::vector<VectorXd> eta;
  V.reserve(grid.size());
  eta.reserve(grid.size());
  VectorXd x = x0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    try {
      StepResult s = step_catching_up(P, g, x, ctrl[i], grid.step(i), opt);
      x = std::move(s.next);
      V.push_back(std::move(s.velocity));
      eta.push_back(std::move(s.eta));
    } catch (const Error& e) {
      throw SimulationError(i, e.what());
    }
  }
  return Trajectory::from_velocities(grid, x0, std::move(V), std::move(eta));
}

}  // namespace sweepctl
