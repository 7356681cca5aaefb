#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cost.hpp"
#include "dynamics.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "qp.hpp"

namespace sweepctl {

/// No admissible starting point for the solver (e.g. x_0 outside C).
class NoFeasiblePointError : public InfeasibleError
{
public:
  using InfeasibleError::InfeasibleError;
};

/// The free-time discrete approximation problem: dynamics, control box,
/// terminal cost and, in verification mode, the reference arc whose
/// neighbourhood the tracking terms localize to.
struct DiscreteProblem
{
  Polyhedron polyhedron;
  std::shared_ptr<const PerturbationMap> perturbation;
  ControlBox control_box;
  std::shared_ptr<const CostFunction> cost;
  VectorXd initial_state;
  std::optional<ControlledArc> reference;
  double epsilon = 1e3;
  std::size_t k = 100;

  void validate() const
  {
    if (!perturbation || !cost) { throw Error("problem: perturbation and cost are required"); }
    if (!(epsilon > 0.0)) { throw Error("problem: epsilon must be positive"); }
    if (k == 0) { throw Error("problem: k must be positive"); }
    if (perturbation->state_dim() != polyhedron.dim() || initial_state.size() != polyhedron.dim()) {
      throw DimensionError("problem: state dimensions disagree");
    }
    if (perturbation->control_dim() != control_box.dim()) { throw DimensionError("problem: control dimensions disagree"); }
  }

  bool verification_mode() const noexcept { return reference.has_value(); }
  double reference_time() const { return reference ? reference->final_time() : std::numeric_limits<double>::quiet_NaN(); }
};

enum class SolveStatus { Converged, BudgetExhausted, NotSolved };

inline const char* to_string(SolveStatus s)
{
  switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::BudgetExhausted: return "budget_exhausted";
    default: return "not_solved";
  }
}

/// A candidate (x^k, u^k, T_k) of the discrete problem.
struct DiscreteSolution
{
  Trajectory trajectory;
  ControlSignal controls;
  double cost_value = std::numeric_limits<double>::quiet_NaN();
  SolveStatus status = SolveStatus::NotSolved;
  std::vector<double> cost_trace;
  int iterations = 0;
  int evaluations = 0;

  const Grid& grid() const { return trajectory.grid(); }
  double final_time() const { return trajectory.final_time(); }
  ControlledArc arc() const { return {trajectory, controls}; }
};

// ---------------------------------------------------------------------------
// Cost J_k and its pieces
// ---------------------------------------------------------------------------

struct CostBreakdown
{
  double terminal = 0.0;      ///< phi(x_k, T_k)
  double time_penalty = 0.0;  ///< (T_k - Tbar)^2
  double tracking = 0.0;      ///< sum of the integral terms
  bool reference_used = false;

  double total() const { return terminal + time_penalty + tracking; }
};

/// sum_i int_{t_i}^{t_{i+1}} (||V_i - xbardot(t)||^2 + ||u_i - ubar(t)||^2) dt,
/// exact on the union refinement with the reference grid.
inline double tracking_integral(const Trajectory& traj, const ControlSignal& ctrl, const ControlledArc& ref)
{
  const auto& nodes = traj.grid().nodes();
  const auto& ref_nodes = ref.trajectory.grid().nodes();
  double acc = 0.0;
  for (std::size_t i = 0; i < traj.steps(); ++i) {
    const double a = nodes[i];
    const double b = nodes[i + 1];
    auto lo = std::upper_bound(ref_nodes.begin(), ref_nodes.end(), a);
    double left = a;
    auto piece = [&](double l, double r) {
      if (r <= l) { return; }
      const double mid = 0.5 * (l + r);
      acc += (r - l) * ((traj.velocity(i) - ref.trajectory.velocity_at(mid)).squaredNorm()
                        + (ctrl[i] - ref.control_at(mid)).squaredNorm());
    };
    for (auto it = lo; it != ref_nodes.end() && *it < b; ++it) {
      piece(left, *it);
      left = *it;
    }
    piece(left, b);
  }
  return acc;
}

inline CostBreakdown cost_breakdown(const Trajectory& traj, const ControlSignal& ctrl, const DiscreteProblem& prob)
{
  CostBreakdown c;
  c.terminal = prob.cost->value(traj.terminal_state(), traj.final_time());
  if (prob.reference) {
    c.reference_used = true;
    const double dT = traj.final_time() - prob.reference->final_time();
    c.time_penalty = dT * dT;
    c.tracking = tracking_integral(traj, ctrl, *prob.reference);
  }
  return c;
}

/// J_k = phi(x_k, T_k) + (T_k - Tbar)^2 + tracking integrals. Without a
/// reference only phi is returned (see cost_breakdown().reference_used).
inline double cost_Jk(const DiscreteSolution& sol, const DiscreteProblem& prob)
{
  return cost_breakdown(sol.trajectory, sol.controls, prob).total();
}

// ---------------------------------------------------------------------------
// Optimality-condition quantities: xi, rho, Hbar
// ---------------------------------------------------------------------------

struct XiTerm
{
  VectorXd u;  ///< int (u_i - ubar(t)) dt
  VectorXd y;  ///< int (V_i - xbardot(t)) dt
};

inline std::vector<XiTerm> zero_xi(std::size_t k, Index n, Index d)
{
  return std::vector<XiTerm>(k, XiTerm{VectorXd::Zero(d), VectorXd::Zero(n)});
}

inline std::vector<XiTerm> xi_terms(const Trajectory& traj, const ControlSignal& ctrl, const ControlledArc& ref)
{
  const auto& nodes = traj.grid().nodes();
  const auto& ref_nodes = ref.trajectory.grid().nodes();
  std::vector<XiTerm> out;
  out.reserve(traj.steps());
  for (std::size_t i = 0; i < traj.steps(); ++i) {
    XiTerm xi{VectorXd::Zero(ctrl[i].size()), VectorXd::Zero(traj.dim())};
    const double a = nodes[i];
    const double b = nodes[i + 1];
    double left = a;
    auto piece = [&](double l, double r) {
      if (r <= l) { return; }
      const double mid = 0.5 * (l + r);
      xi.u += (r - l) * (ctrl[i] - ref.control_at(mid));
      xi.y += (r - l) * (traj.velocity(i) - ref.trajectory.velocity_at(mid));
    };
    for (auto it = std::upper_bound(ref_nodes.begin(), ref_nodes.end(), a); it != ref_nodes.end() && *it < b; ++it) {
      piece(left, *it);
      left = *it;
    }
    piece(left, b);
    out.push_back(std::move(xi));
  }
  return out;
}

inline std::vector<XiTerm> xi_terms(const DiscreteSolution& sol, const DiscreteProblem& prob)
{
  if (!prob.reference) { throw Error("xi_terms: a reference arc is required"); }
  return xi_terms(sol.trajectory, sol.controls, *prob.reference);
}

/// rho_k = sum_i [ i/k ||(V_i - xbardot(t_i), u_i - ubar(t_i))||^2
///               - (i+1)/k ||(V_i - xbardot(t_{i+1}), u_i - ubar(t_{i+1}))||^2 ].
/// Reference samples are one-sided limits taken from inside [t_i, t_{i+1}].
inline double rho_term(const Trajectory& traj, const ControlSignal& ctrl, const ControlledArc& ref)
{
  const auto& nodes = traj.grid().nodes();
  const double k = static_cast<double>(traj.steps());
  double acc = 0.0;
  for (std::size_t i = 0; i < traj.steps(); ++i) {
    const double ti = nodes[i];
    const double tn = nodes[i + 1];
    const double left = (traj.velocity(i) - ref.trajectory.velocity_right(ti)).squaredNorm()
                        + (ctrl[i] - ref.control_right(ti)).squaredNorm();
    const double right = (traj.velocity(i) - ref.trajectory.velocity_left(tn)).squaredNorm()
                         + (ctrl[i] - ref.control_left(tn)).squaredNorm();
    acc += (static_cast<double>(i) / k) * left - (static_cast<double>(i + 1) / k) * right;
  }
  return acc;
}

inline double rho_term(const DiscreteSolution& sol, const DiscreteProblem& prob)
{
  if (!prob.reference) { throw Error("rho_term: a reference arc is required"); }
  return rho_term(sol.trajectory, sol.controls, *prob.reference);
}

/// Hbar = (1/k) sum_i <p_{i+1}, (x_{i+1} - x_i) / h_i>.
inline double hbar(const Trajectory& traj, const std::vector<VectorXd>& p)
{
  if (p.size() != traj.steps() + 1) { throw DimensionError("hbar: need k + 1 adjoint vectors"); }
  double acc = 0.0;
  for (std::size_t i = 0; i < traj.steps(); ++i) {
    acc += p[i + 1].dot((traj.state(i + 1) - traj.state(i)) / traj.grid().step(i));
  }
  return acc / static_cast<double>(traj.steps());
}

// ---------------------------------------------------------------------------
// Discrete inclusion x_{i+1} - x_i in -h_i F(x_i, u_i)
// ---------------------------------------------------------------------------

/// Which endpoint of step i supplies the active set of the cone term.
enum class ArcEndpoint { Left, Right };

inline const char* to_string(ArcEndpoint e) { return e == ArcEndpoint::Left ? "left" : "right"; }

struct InclusionFit
{
  ConeDecomposition decomposition;  ///< of g(x_i,u_i) - V_i
  ArcEndpoint endpoint = ArcEndpoint::Left;
};

/// Best nonnegative fit of g(x_i, u_i) - V_i over I(x_i); when that leaves a
/// residual, I(x_{i+1}) is tried as well and the smaller residual wins.
inline InclusionFit fit_inclusion(const Polyhedron& P, const PerturbationMap& g, const Trajectory& traj,
                                  const ControlSignal& ctrl, std::size_t i, double active_tol)
{
  const VectorXd target = g.value(traj.state(i), ctrl[i]) - traj.velocity(i);
  InclusionFit fit;
  fit.decomposition = normal_cone_decompose(P, active_set_unchecked(P, traj.state(i), active_tol), target);
  if (fit.decomposition.residual == 0.0) { return fit; }
  ConeDecomposition right = normal_cone_decompose(P, active_set_unchecked(P, traj.state(i + 1), active_tol), target);
  if (right.residual < fit.decomposition.residual) {
    fit.decomposition = std::move(right);
    fit.endpoint = ArcEndpoint::Right;
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Feasibility report
// ---------------------------------------------------------------------------

struct ResidualItem
{
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = true;
  std::string note;
};

struct FeasibilityReport
{
  std::vector<ResidualItem> items;

  bool all_pass() const
  {
    return std::all_of(items.begin(), items.end(), [](const ResidualItem& r) { return r.pass; });
  }
  const ResidualItem& item(const std::string& name) const
  {
    for (const auto& r : items) {
      if (r.name == name) { return r; }
    }
    throw Error("feasibility report has no item " + name);
  }
  double max_residual() const
  {
    double m = 0.0;
    for (const auto& r : items) { m = std::max(m, r.residual); }
    return m;
  }
};

struct FeasibilityOptions
{
  double tolerance = 1e-8;
  double active_tol = 1e-7;
};

inline FeasibilityReport feasibility_report(const Trajectory& traj, const ControlSignal& ctrl, const DiscreteProblem& prob,
                                            const FeasibilityOptions& opt = {})
{
  FeasibilityReport rep;
  auto add = [&](std::string name, double residual, std::string note = {}) {
    rep.items.push_back({std::move(name), residual, opt.tolerance, residual <= opt.tolerance, std::move(note)});
  };
  const Polyhedron& P = prob.polyhedron;
  const PerturbationMap& g = *prob.perturbation;
  if (ctrl.size() != traj.steps()) { throw DimensionError("feasibility_report: control count mismatch"); }

  double incl = 0.0;
  std::size_t right_steps = 0;
  for (std::size_t i = 0; i < traj.steps(); ++i) {
    const InclusionFit fit = fit_inclusion(P, g, traj, ctrl, i, opt.active_tol);
    incl = std::max(incl, fit.decomposition.residual);
    if (fit.endpoint == ArcEndpoint::Right) { ++right_steps; }
  }
  add("dynamic_inclusion", incl, std::to_string(right_steps) + " step(s) use the right-endpoint active set");

  add("initial_state", (traj.state(0) - prob.initial_state).lpNorm<Eigen::Infinity>());

  double states = 0.0;
  for (const auto& x : traj.states()) { states = std::max(states, std::max(0.0, P.max_violation(x))); }
  add("state_constraint", states);

  double box = 0.0;
  for (const auto& u : ctrl.values) { box = std::max(box, prob.control_box.violation(u)); }
  add("control_box", box);

  add("terminal_constraint", std::max(0.0, P.max_violation(traj.terminal_state())));

  if (prob.reference) {
    const ControlledArc& ref = *prob.reference;
    add("initial_control", (ctrl[0] - ref.control_right(0.0)).lpNorm<Eigen::Infinity>());
    const double tube = tracking_integral(traj, ctrl, ref);
    add("tracking_tube", std::max(0.0, tube - prob.epsilon), "integral " + std::to_string(tube));
    add("final_time", std::max(0.0, std::abs(traj.final_time() - ref.final_time()) - prob.epsilon));
    double prox = 0.0;
    for (std::size_t i = 0; i < traj.steps(); ++i) {
      const double t = traj.grid().node(i);
      const double dx = (traj.state(i) - sample(ref.trajectory, t)).squaredNorm();
      const double du = (ctrl[i] - ref.control_right(t)).squaredNorm();
      prox = std::max(prox, std::max(0.0, std::sqrt(dx + du) - prob.epsilon));
    }
    add("proximity", prox);
  } else {
    add("initial_control", 0.0, "vacuous without a reference");
    add("tracking_tube", 0.0, "vacuous without a reference");
    add("final_time", 0.0, "vacuous without a reference");
    add("proximity", 0.0, "vacuous without a reference");
  }
  return rep;
}

inline FeasibilityReport feasibility_report(const DiscreteSolution& sol, const DiscreteProblem& prob,
                                            const FeasibilityOptions& opt = {})
{
  return feasibility_report(sol.trajectory, sol.controls, prob, opt);
}

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

struct SolverOptions
{
  int max_iterations = 2000;
  double initial_control_step = 0.0;  ///< 0 selects a quarter of the box width
  double initial_time_step = 0.0;     ///< 0 selects a quarter of the initial T
  double min_step = 1e-8;             ///< relative to the initial steps
  double shrink = 0.5;
  std::size_t control_blocks = 1;
  bool diagonal_directions = true;  ///< also poll +-e_a +- e_b for every pair a < b
  double min_final_time = 1e-6;
  StepOptions step{};
};

/// Simulates the problem dynamics on a uniform grid and evaluates J_k.
inline DiscreteSolution evaluate_controls(const DiscreteProblem& prob, const ControlSignal& ctrl, double T,
                                          const StepOptions& step = {})
{
  DiscreteSolution sol;
  sol.trajectory = simulate(prob.polyhedron, *prob.perturbation, prob.initial_state, ctrl, Grid::uniform(T, ctrl.size()),
                            SimulationMode::FixedSet, step);
  sol.controls = ctrl;
  sol.cost_value = cost_Jk(sol, prob);
  return sol;
}

namespace detail {

/// Maps the search vector (block controls..., T) to a control signal.
struct ControlParametrization
{
  std::size_t k = 0;
  Index d = 0;
  std::size_t blocks = 1;
  std::optional<VectorXd> pinned_first;

  std::size_t free_steps() const { return pinned_first ? k - 1 : k; }
  Index size() const { return static_cast<Index>(blocks) * d + 1; }

  std::size_t block_of(std::size_t step) const
  {
    const std::size_t s = pinned_first ? step - 1 : step;
    return std::min(blocks - 1, s * blocks / free_steps());
  }

  ControlSignal controls(const VectorXd& z) const
  {
    ControlSignal c;
    c.values.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      if (i == 0 && pinned_first) {
        c.values.push_back(*pinned_first);
      } else {
        c.values.push_back(z.segment(static_cast<Index>(block_of(i)) * d, d));
      }
    }
    return c;
  }

  VectorXd encode(const ControlSignal& c, double T) const
  {
    VectorXd z(size());
    for (std::size_t b = 0; b < blocks; ++b) {
      // first step of the block
      std::size_t first = pinned_first ? 1 : 0;
      while (first < k && block_of(first) != b) { ++first; }
      z.segment(static_cast<Index>(b) * d, d) = c[std::min(first, k - 1)];
    }
    z(size() - 1) = T;
    return z;
  }
};

struct Candidate
{
  bool feasible = false;
  DiscreteSolution sol;
};

inline Candidate evaluate_candidate(const DiscreteProblem& prob, const ControlParametrization& par, const VectorXd& z,
                                    const SolverOptions& opt)
{
  Candidate c;
  const double T = z(z.size() - 1);
  if (!(T >= opt.min_final_time) || !std::isfinite(T)) { return c; }
  for (std::size_t b = 0; b < par.blocks; ++b) {
    if (!prob.control_box.contains(z.segment(static_cast<Index>(b) * par.d, par.d))) { return c; }
  }
  try {
    c.sol = evaluate_controls(prob, par.controls(z), T, opt.step);
  } catch (const SimulationError&) {
    return c;
  }
  if (prob.reference) {
    FeasibilityOptions fo;
    fo.tolerance = 0.0;
    const auto rep = feasibility_report(c.sol, prob, fo);
    for (const char* name : {"tracking_tube", "final_time", "proximity"}) {
      if (!rep.item(name).pass) { return c; }
    }
  }
  c.feasible = std::isfinite(c.sol.cost_value);
  return c;
}

}  // namespace detail

/// Compass search over (piecewise-constant controls, T) with forward
/// simulation as the inner evaluator. Candidates are polled in a fixed
/// order and the best strictly improving one (lowest index on ties) is
/// accepted; otherwise every step is multiplied by `shrink`.
inline DiscreteSolution solve(const DiscreteProblem& prob, const DiscreteSolution& init, const SolverOptions& opt = {})
{
  prob.validate();
  if (!contains(prob.polyhedron, prob.initial_state, opt.step.qp.feasibility_tol)) {
    throw NoFeasiblePointError("initial state is outside C");
  }
  const std::size_t k = prob.k;
  const Index d = prob.control_box.dim();

  detail::ControlParametrization par;
  par.k = k;
  par.d = d;
  if (prob.reference) {
    if (k < 2) { throw Error("solve: pinned initial control needs k >= 2"); }
    par.pinned_first = prob.reference->control_right(0.0);
  }
  par.blocks = std::max<std::size_t>(1, std::min(opt.control_blocks, par.free_steps()));

  ControlSignal init_ctrl = init.controls;
  if (init_ctrl.size() != k) {
    if (init_ctrl.size() == 0) { throw Error("solve: initial guess has no controls"); }
    init_ctrl = ControlSignal::constant(init_ctrl[0], k);
  }
  for (auto& u : init_ctrl.values) { u = prob.control_box.clamp(u); }
  VectorXd z = par.encode(init_ctrl, init.final_time() > 0 ? init.final_time() : 1.0);

  detail::Candidate best = detail::evaluate_candidate(prob, par, z, opt);
  int evaluations = 1;
  if (!best.feasible) { throw NoFeasiblePointError("initial guess is not feasible for the discrete problem"); }

  VectorXd steps(par.size());
  const VectorXd width = prob.control_box.upper - prob.control_box.lower;
  for (std::size_t b = 0; b < par.blocks; ++b) {
    for (Index c = 0; c < d; ++c) {
      const double w = opt.initial_control_step > 0 ? opt.initial_control_step : 0.25 * width(c);
      steps(static_cast<Index>(b) * d + c) = w > 0 ? w : 0.0;
    }
  }
  steps(par.size() - 1) = opt.initial_time_step > 0 ? opt.initial_time_step : 0.25 * z(par.size() - 1);
  const VectorXd floor = opt.min_step * steps;

  // Poll set: +-e_c first, then the pairwise diagonals, in a fixed order.
  std::vector<VectorXd> directions;
  for (Index c = 0; c < par.size(); ++c) {
    for (double sign : {1.0, -1.0}) {
      directions.push_back(sign * VectorXd::Unit(par.size(), c));
    }
  }
  if (opt.diagonal_directions) {
    for (Index a = 0; a < par.size(); ++a) {
      for (Index b = a + 1; b < par.size(); ++b) {
        for (double sa : {1.0, -1.0}) {
          for (double sb : {1.0, -1.0}) {
            VectorXd v = VectorXd::Zero(par.size());
            v(a) = sa;
            v(b) = sb;
            directions.push_back(v);
          }
        }
      }
    }
  }

  std::vector<double> trace{best.sol.cost_value};
  SolveStatus status = SolveStatus::BudgetExhausted;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    bool all_small = true;
    for (Index c = 0; c < steps.size(); ++c) {
      if (steps(c) > floor(c)) { all_small = false; }
    }
    if (all_small) {
      status = SolveStatus::Converged;
      break;
    }

    int chosen = -1;
    detail::Candidate chosen_cand;
    VectorXd chosen_dir;
    for (std::size_t dir = 0; dir < directions.size(); ++dir) {
      const VectorXd delta = directions[dir].cwiseProduct(steps);
      if (delta.isZero(0.0)) { continue; }
      detail::Candidate cand = detail::evaluate_candidate(prob, par, z + delta, opt);
      ++evaluations;
      if (!cand.feasible) { continue; }
      const double ref = chosen >= 0 ? chosen_cand.sol.cost_value : best.sol.cost_value;
      if (cand.sol.cost_value < ref) {
        chosen = static_cast<int>(dir);
        chosen_cand = std::move(cand);
        chosen_dir = delta;
      }
    }
    if (chosen >= 0) {
      z += chosen_dir;
      best = std::move(chosen_cand);
    } else {
      steps *= opt.shrink;
      for (Index c = 0; c < steps.size(); ++c) {
        if (steps(c) <= floor(c)) { steps(c) = 0.0; }
      }
    }
    trace.push_back(best.sol.cost_value);
  }
  if (it == opt.max_iterations) {
    bool all_small = true;
    for (Index c = 0; c < steps.size(); ++c) {
      if (steps(c) > floor(c)) { all_small = false; }
    }
    if (all_small) { status = SolveStatus::Converged; }
  }

  DiscreteSolution out = std::move(best.sol);
  out.status = status;
  out.cost_trace = std::move(trace);
  out.iterations = it;
  out.evaluations = evaluations;
  return out;
}

struct ConstantControlOptions
{
  double resolution = 0.5;      ///< spacing of the coarse control grid per axis
  double initial_time = 0.0;    ///< 0 selects the reference time, else 1
  double horizon_factor = 2.0;  ///< coarse stage scans t in [0, factor * initial_time]
  SolverOptions refine{};
};

/// Coarse grid over constant controls (one long simulation per control picks
/// the best stopping time), then compass-search refinement of (u, T).
inline DiscreteSolution solve_constant_control(const DiscreteProblem& prob, const ConstantControlOptions& opt = {})
{
  prob.validate();
  if (!(opt.resolution > 0.0)) { throw Error("resolution must be positive"); }
  if (!contains(prob.polyhedron, prob.initial_state, opt.refine.step.qp.feasibility_tol)) {
    throw NoFeasiblePointError("initial state is outside C");
  }
  const Index d = prob.control_box.dim();
  const double T0 = opt.initial_time > 0 ? opt.initial_time : (prob.reference ? prob.reference->final_time() : 1.0);
  const double h0 = T0 / static_cast<double>(prob.k);
  const auto scan_steps = static_cast<std::size_t>(std::ceil(opt.horizon_factor * static_cast<double>(prob.k)));

  std::vector<Index> counts(static_cast<std::size_t>(d));
  for (Index c = 0; c < d; ++c) {
    const double w = prob.control_box.upper(c) - prob.control_box.lower(c);
    counts[static_cast<std::size_t>(c)] = static_cast<Index>(std::floor(w / opt.resolution + 1e-9)) + 1;
  }

  double best_score = std::numeric_limits<double>::infinity();
  VectorXd best_u = prob.control_box.clamp(VectorXd::Zero(d));
  double best_T = T0;
  std::vector<Index> idx(static_cast<std::size_t>(d), 0);
  const Grid scan_grid = Grid::uniform(h0 * static_cast<double>(scan_steps), scan_steps);
  while (true) {
    VectorXd u(d);
    for (Index c = 0; c < d; ++c) {
      u(c) = std::min(prob.control_box.upper(c),
                      prob.control_box.lower(c) + static_cast<double>(idx[static_cast<std::size_t>(c)]) * opt.resolution);
    }
    try {
      const Trajectory tr = simulate(prob.polyhedron, *prob.perturbation, prob.initial_state,
                                     ControlSignal::constant(u, scan_steps), scan_grid, SimulationMode::FixedSet,
                                     opt.refine.step);
      for (std::size_t i = 1; i <= scan_steps; ++i) {
        const double t = scan_grid.node(i);
        double score = prob.cost->value(tr.state(i), t);
        if (prob.reference) {
          const double dT = t - prob.reference->final_time();
          score += dT * dT;
        }
        if (score < best_score) {
          best_score = score;
          best_u = u;
          best_T = t;
        }
      }
    } catch (const SimulationError&) {
    }
    Index c = d - 1;
    while (c >= 0) {
      if (++idx[static_cast<std::size_t>(c)] < counts[static_cast<std::size_t>(c)]) { break; }
      idx[static_cast<std::size_t>(c)] = 0;
      --c;
    }
    if (c < 0) { break; }
  }

  DiscreteSolution init;
  init.controls = ControlSignal::constant(best_u, prob.k);
  init.trajectory = Trajectory::from_states(Grid::uniform(best_T, prob.k),
                                            std::vector<VectorXd>(prob.k + 1, prob.initial_state), prob.polyhedron.face_count());
  SolverOptions ref = opt.refine;
  ref.control_blocks = 1;
  if (ref.initial_control_step <= 0.0) { ref.initial_control_step = opt.resolution; }
  if (ref.initial_time_step <= 0.0) { ref.initial_time_step = std::max(h0, 0.05 * best_T); }
  return solve(prob, init, ref);
}

}  // namespace sweepctl
