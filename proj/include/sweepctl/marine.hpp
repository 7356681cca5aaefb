#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "cost.hpp"
#include "discrete_ocp.hpp"
#include "disks.hpp"
#include "dynamics.hpp"
#include "errors.hpp"
#include "geometry.hpp"

namespace sweepctl::marine {

using Eigen::Vector2d;

inline double degrees(double deg) { return deg * std::numbers::pi / 180.0; }

/// n planar vehicles as disks. Directions are headings in radians.
struct VehicleConfig
{
  std::vector<double> radii;
  std::vector<double> speeds;
  std::vector<double> directions;
  std::vector<Vector2d> initial_positions;

  std::size_t n() const noexcept { return radii.size(); }

  void validate() const
  {
    if (radii.empty()) { throw Error("vehicle config: need at least one vehicle"); }
    if (speeds.size() != n() || directions.size() != n() || initial_positions.size() != n()) {
      throw DimensionError("vehicle config: per-vehicle lists differ in length");
    }
    for (double r : radii) {
      if (!(r > 0.0)) { throw Error("vehicle config: radii must be positive"); }
    }
  }

  /// x = (x^1, ..., x^n) stacked in R^{2n}.
  VectorXd initial_state() const
  {
    VectorXd x(2 * static_cast<Index>(n()));
    for (std::size_t i = 0; i < n(); ++i) { x.segment<2>(2 * static_cast<Index>(i)) = initial_positions[i]; }
    return x;
  }
};

/// g(x, u) = (s_1 u_1 cos th_1, s_1 u_1 sin th_1, ..., s_n u_n cos th_n, s_n u_n sin th_n).
/// Controls are signed scalars, so g is linear in u and smooth at u = 0.
class DirectionalPerturbation final : public PerturbationMap
{
public:
  DirectionalPerturbation(std::vector<double> speeds, std::vector<double> directions, double control_bound = 1.0)
      : speeds_(std::move(speeds)), directions_(std::move(directions)), control_bound_(control_bound)
  {
    if (speeds_.size() != directions_.size() || speeds_.empty()) { throw DimensionError("speeds/directions mismatch"); }
    B_ = MatrixXd::Zero(state_dim(), control_dim());
    for (Index i = 0; i < control_dim(); ++i) {
      const auto s = static_cast<std::size_t>(i);
      B_(2 * i, i) = speeds_[s] * std::cos(directions_[s]);
      B_(2 * i + 1, i) = speeds_[s] * std::sin(directions_[s]);
    }
  }

  Index state_dim() const override { return 2 * control_dim(); }
  Index control_dim() const override { return static_cast<Index>(speeds_.size()); }
  VectorXd value(const VectorXd&, const VectorXd& u) const override { return B_ * u; }
  MatrixXd jacobian_x(const VectorXd&, const VectorXd&) const override { return MatrixXd::Zero(state_dim(), state_dim()); }
  MatrixXd jacobian_u(const VectorXd&, const VectorXd&) const override { return B_; }
  double growth_constant() const override { return B_.operatorNorm() * control_bound_ * std::sqrt(double(control_dim())); }

private:
  std::vector<double> speeds_;
  std::vector<double> directions_;
  double control_bound_;
  MatrixXd B_;
};

/// Chain of faces x*_j = e_{j,1} + e_{j,2} - e_{j+1,1} - e_{j+1,2},
/// c_j = -(R_j + R_{j+1}), one per consecutive pair.
inline Polyhedron build_polyhedron(const VehicleConfig& cfg)
{
  cfg.validate();
  if (cfg.n() < 2) { throw Error("build_polyhedron: need at least two vehicles"); }
  const auto dim = 2 * static_cast<Index>(cfg.n());
  std::vector<HalfSpace> faces;
  for (std::size_t j = 0; j + 1 < cfg.n(); ++j) {
    const auto a = 2 * static_cast<Index>(j);
    VectorXd nrm = VectorXd::Zero(dim);
    nrm(a) = 1.0;
    nrm(a + 1) = 1.0;
    nrm(a + 2) = -1.0;
    nrm(a + 3) = -1.0;
    faces.emplace_back(std::move(nrm), -(cfg.radii[j] + cfg.radii[j + 1]));
  }
  return Polyhedron(std::move(faces));
}

inline std::shared_ptr<const DirectionalPerturbation> perturbation(const VehicleConfig& cfg, double control_bound = 1.0)
{
  cfg.validate();
  return std::make_shared<DirectionalPerturbation>(cfg.speeds, cfg.directions, control_bound);
}

struct Posture
{
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
};

/// Via-point posture towards x_ref; psi in (-pi, pi] from the two-argument arctangent.
inline Posture reference_posture(const Vector2d& now, const Vector2d& ref)
{
  const Vector2d d = ref - now;
  if (d.x() == 0.0 && d.y() == 0.0) { throw GeometryError("reference posture: coincident points"); }
  double psi = std::atan2(d.y(), d.x());
  if (psi <= -std::numbers::pi) { psi = std::numbers::pi; }
  return {ref.x(), ref.y(), psi};
}

struct MarineScenario
{
  VehicleConfig config;
  ControlBox control_box;
  Vector2d target = Vector2d::Zero();
  std::shared_ptr<const CostFunction> cost;

  Polyhedron polyhedron() const { return build_polyhedron(config); }
  std::shared_ptr<const DirectionalPerturbation> dynamics() const
  {
    return perturbation(config, control_box.lower.cwiseAbs().cwiseMax(control_box.upper.cwiseAbs()).maxCoeff());
  }

  void validate() const
  {
    config.validate();
    if (control_box.dim() != static_cast<Index>(config.n())) { throw DimensionError("control box needs one interval per vehicle"); }
    if (!cost) { throw Error("marine scenario: cost is required"); }
    if (!is_admissible(config.initial_state(), config.radii, 1e-12)) {
      throw InfeasibleError("marine scenario: initial configuration overlaps");
    }
  }
};

/// Two vehicles of radius 3.5 m at (-25,-25) and (-15,-15), 45 degree
/// headings, unit speeds, U = [-2,2]^2, phi = 1/2 ||x(T)||^2.
inline MarineScenario paper_scenario()
{
  MarineScenario s;
  s.config.radii = {3.5, 3.5};
  s.config.speeds = {1.0, 1.0};
  s.config.directions = {degrees(45.0), degrees(45.0)};
  s.config.initial_positions = {Vector2d(-25.0, -25.0), Vector2d(-15.0, -15.0)};
  s.control_box = ControlBox::uniform(2, -2.0, 2.0);
  s.cost = std::make_shared<HalfSquaredNorm>();
  return s;
}

/// Discrete problem for the scenario in discovery mode (no reference).
inline DiscreteProblem to_problem(const MarineScenario& s, std::size_t k)
{
  s.validate();
  DiscreteProblem p;
  p.polyhedron = s.polyhedron();
  p.perturbation = s.dynamics();
  p.control_box = s.control_box;
  p.cost = s.cost;
  p.initial_state = s.config.initial_state();
  p.k = k;
  return p;
}

/// Closed-form motion under constant controls for n = 2: free flight with
/// g(u) until the face is reached at t_c, then sliding along it.
struct TwoPhase
{
  bool closing = false;
  double contact_time = std::numeric_limits<double>::infinity();  ///< t_c, infinite when never reached
  VectorXd x0;
  VectorXd pre_velocity;
  VectorXd post_velocity;
  double terminal_time = 0.0;  ///< minimizer of phi along the motion (earliest on ties)
  VectorXd terminal_state;
  double terminal_cost = 0.0;

  VectorXd state_at(double t) const
  {
    if (t < 0.0) { throw Error("two-phase state: negative time"); }
    if (t <= contact_time) { return x0 + t * pre_velocity; }
    return x0 + contact_time * pre_velocity + (t - contact_time) * post_velocity;
  }
};

namespace detail {

/// argmin over t in [a, b] of 1/2 ||z + (t - a) v||^2.
inline double segment_argmin(const VectorXd& z, const VectorXd& v, double a, double b)
{
  const double vv = v.squaredNorm();
  if (vv <= 1e-24 * std::max(1.0, z.squaredNorm())) { return a; }  // roundoff-level drift counts as rest
  const double s = std::max(0.0, -z.dot(v) / vv);
  return std::isfinite(b) ? std::min(a + s, b) : a + s;
}

}  // namespace detail

/// The terminal point minimizes the half squared distance to the target over
/// the whole motion, and the arc stops there.
inline TwoPhase analytic_two_phase(const MarineScenario& s, const VectorXd& u)
{
  if (s.config.n() != 2) { throw Error("analytic_two_phase: only two vehicles are supported"); }
  const Polyhedron P = s.polyhedron();
  const auto g = s.dynamics();
  const VectorXd& xs = P.normals().col(0);
  const double c = P.offsets()(0);

  TwoPhase tp;
  tp.x0 = s.config.initial_state();
  tp.pre_velocity = g->value(tp.x0, u);
  const double rate = xs.dot(tp.pre_velocity);
  const double gap = c - xs.dot(tp.x0);  // <= 0 for an admissible start
  tp.closing = rate > 0.0;
  if (tp.closing) {
    tp.contact_time = std::max(0.0, gap / rate);
    tp.post_velocity = tp.pre_velocity - (rate / xs.squaredNorm()) * xs;
  } else {
    tp.post_velocity = tp.pre_velocity;
  }

  VectorXd target(4);
  target << s.target, s.target;
  const VectorXd z0 = tp.x0 - target;
  double t1 = detail::segment_argmin(z0, tp.pre_velocity, 0.0, tp.contact_time);
  double best_t = t1;
  double best = 0.5 * (z0 + t1 * tp.pre_velocity).squaredNorm();
  if (tp.closing) {
    const VectorXd zc = z0 + tp.contact_time * tp.pre_velocity;
    const double t2 = detail::segment_argmin(zc, tp.post_velocity, tp.contact_time,
                                             std::numeric_limits<double>::infinity());
    const double v2 = 0.5 * (zc + (t2 - tp.contact_time) * tp.post_velocity).squaredNorm();
    if (v2 < best) {
      best = v2;
      best_t = t2;
    }
  }
  tp.terminal_time = best_t;
  tp.terminal_state = tp.state_at(best_t);
  tp.terminal_cost = s.cost->value(tp.terminal_state, best_t);
  return tp;
}

struct OracleResult
{
  VectorXd controls;
  double final_time = 0.0;
  double terminal_cost = std::numeric_limits<double>::infinity();
  VectorXd terminal_state;
  std::size_t evaluated = 0;
};

/// Exhaustive grid over constant controls in U (spacing `resolution` per
/// axis, starting at the lower bounds), each scored by its closed-form
/// minimal terminal cost. Ties within `tie_tol` keep the lexicographically
/// first control.
inline OracleResult brute_force_oracle(const MarineScenario& s, double resolution, double tie_tol = 1e-9)
{
  s.validate();
  if (!(resolution > 0.0)) { throw Error("oracle resolution must be positive"); }
  const Index d = s.control_box.dim();
  std::vector<Index> counts(static_cast<std::size_t>(d));
  for (Index c = 0; c < d; ++c) {
    const double w = s.control_box.upper(c) - s.control_box.lower(c);
    counts[static_cast<std::size_t>(c)] = static_cast<Index>(std::floor(w / resolution + 1e-9)) + 1;
  }
  OracleResult best;
  std::vector<Index> idx(static_cast<std::size_t>(d), 0);
  while (true) {
    VectorXd u(d);
    for (Index c = 0; c < d; ++c) {
      const double raw = s.control_box.lower(c) + static_cast<double>(idx[static_cast<std::size_t>(c)]) * resolution;
      u(c) = std::min(s.control_box.upper(c), std::round(raw * 1e12) / 1e12);
    }
    const TwoPhase tp = analytic_two_phase(s, u);
    ++best.evaluated;
    if (best.controls.size() == 0 || tp.terminal_cost < best.terminal_cost - tie_tol * std::max(1.0, std::abs(best.terminal_cost))) {
      best.terminal_cost = tp.terminal_cost;
      best.controls = u;
      best.final_time = tp.terminal_time;
      best.terminal_state = tp.terminal_state;
    }
    Index c = d - 1;
    while (c >= 0) {
      if (++idx[static_cast<std::size_t>(c)] < counts[static_cast<std::size_t>(c)]) { break; }
      idx[static_cast<std::size_t>(c)] = 0;
      --c;
    }
    if (c < 0) { break; }
  }
  return best;
}

/// The exact two-piece arc for constant u: nodes 0, t_c, T with velocities
/// g(u) and the sliding velocity. Used as the reference of a discrete problem.
inline ControlledArc two_phase_arc(const MarineScenario& s, const VectorXd& u, double final_time)
{
  const TwoPhase tp = analytic_two_phase(s, u);
  const Index faces = s.polyhedron().face_count();
  if (!tp.closing || !(tp.contact_time > 0.0) || !(final_time > tp.contact_time)) {
    Grid grid = Grid::uniform(final_time, 1);
    return {Trajectory::from_velocities(grid, tp.x0, {tp.pre_velocity}, {VectorXd::Zero(faces)}),
            ControlSignal::constant(u, 1)};
  }
  Grid grid(final_time, {tp.contact_time, final_time - tp.contact_time});
  const double eta = s.polyhedron().normals().col(0).dot(tp.pre_velocity) / s.polyhedron().normals().col(0).squaredNorm();
  VectorXd e1 = VectorXd::Zero(faces);
  e1(0) = eta;
  return {Trajectory::from_velocities(grid, tp.x0, {tp.pre_velocity, tp.post_velocity}, {VectorXd::Zero(faces), e1}),
          ControlSignal::constant(u, 2)};
}

/// Smallest Euclidean separation D_ij over all pairs at every node.
inline std::vector<double> euclidean_separation(const Trajectory& traj, const std::vector<double>& radii)
{
  std::vector<double> out;
  out.reserve(traj.states().size());
  const auto n = static_cast<Index>(radii.size());
  for (const auto& x : traj.states()) {
    double m = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        const double dist = (x.segment<2>(2 * i) - x.segment<2>(2 * j)).norm();
        m = std::min(m, dist - (radii[static_cast<std::size_t>(i)] + radii[static_cast<std::size_t>(j)]));
      }
    }
    out.push_back(m);
  }
  return out;
}

}  // namespace sweepctl::marine
