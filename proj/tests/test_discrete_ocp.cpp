#include <gtest/gtest.h>

#include <random>

#include <sweepctl/discrete_ocp.hpp>
#include <sweepctl/marine.hpp>

using namespace sweepctl;

namespace {

VectorXd nominal_u()
{
  VectorXd u(2);
  u << 1.67547, 0.49999;
  return u;
}

/// Two-vehicle scenario with the exact two-piece arc as reference.
DiscreteProblem verification_problem(std::size_t k)
{
  const auto s = marine::paper_scenario();
  DiscreteProblem p = marine::to_problem(s, k);
  const auto tp = marine::analytic_two_phase(s, nominal_u());
  p.reference = marine::two_phase_arc(s, nominal_u(), tp.terminal_time);
  return p;
}

/// 1-D problem x' = u on the half-line x <= 10, phi = 1/2 (x - 3)^2.
DiscreteProblem line_problem(std::size_t k)
{
  DiscreteProblem p;
  p.polyhedron = Polyhedron({HalfSpace(VectorXd::Ones(1), 10.0)});
  p.perturbation = std::make_shared<AffinePerturbation>(MatrixXd::Zero(1, 1), MatrixXd::Identity(1, 1), VectorXd::Zero(1), 1.0);
  p.control_box = ControlBox::uniform(1, -1.0, 1.0);
  p.cost = std::make_shared<HalfSquaredNorm>(VectorXd::Constant(1, 3.0));
  p.initial_state = VectorXd::Zero(1);
  p.k = k;
  return p;
}

}  // namespace

TEST(CostJk, ReferenceItselfHasOnlyTerminalCost)
{
  const DiscreteProblem p = verification_problem(2);
  DiscreteSolution sol;
  sol.trajectory = p.reference->trajectory;
  sol.controls = p.reference->controls;
  EXPECT_NEAR(cost_Jk(sol, p), 6.125, 1e-12);
  const CostBreakdown b = cost_breakdown(sol.trajectory, sol.controls, p);
  EXPECT_TRUE(b.reference_used);
  EXPECT_EQ(b.time_penalty, 0.0);
  EXPECT_NEAR(b.tracking, 0.0, 1e-20);
}

TEST(CostJk, ConstantControlOffset)
{
  const DiscreteProblem p = verification_problem(2);
  DiscreteSolution sol;
  sol.trajectory = p.reference->trajectory;
  VectorXd du(2);
  du << 0.1, -0.3;
  sol.controls = ControlSignal::constant(nominal_u() + du, 2);
  const double Tbar = p.reference->final_time();
  EXPECT_NEAR(cost_Jk(sol, p), 6.125 + Tbar * du.squaredNorm(), 1e-12);
}

TEST(CostJk, DiscoveryModeIsTerminalOnly)
{
  const auto s = marine::paper_scenario();
  const DiscreteProblem p = marine::to_problem(s, 100);
  const DiscreteSolution sol = evaluate_controls(p, ControlSignal::constant(nominal_u(), 100), 26.003);
  EXPECT_FALSE(cost_breakdown(sol.trajectory, sol.controls, p).reference_used);
  EXPECT_NEAR(sol.cost_value, 6.125, 1e-4);
}

TEST(CostJk, NominalSolutionAt2600)
{
  const DiscreteProblem p = verification_problem(2600);
  const DiscreteSolution sol = evaluate_controls(p, ControlSignal::constant(nominal_u(), 2600), p.reference->final_time());
  const CostBreakdown b = cost_breakdown(sol.trajectory, sol.controls, p);
  EXPECT_NEAR(b.terminal, 6.125, 1e-6);
  EXPECT_LT(b.tracking, 5e-3);  // one hitting step of length T/k
}

TEST(Feasibility, SimulatedArcAgainstItself)
{
  DiscreteProblem p = line_problem(5);
  const ControlSignal c = ControlSignal::constant(VectorXd::Constant(1, 0.5), 5);
  const DiscreteSolution sol = evaluate_controls(p, c, 2.0);
  p.reference = sol.arc();
  const FeasibilityReport rep = feasibility_report(sol, p);
  EXPECT_TRUE(rep.all_pass());
  EXPECT_EQ(rep.max_residual(), 0.0);
}

TEST(Feasibility, BoxAndTerminalViolations)
{
  const DiscreteProblem p = line_problem(2);
  const Grid grid = Grid::uniform(1.0, 2);
  const Trajectory out = Trajectory::from_velocities(grid, VectorXd::Zero(1), {VectorXd::Constant(1, 1.25), VectorXd::Constant(1, 1.25)},
                                                     {VectorXd::Zero(1), VectorXd::Zero(1)});
  const ControlSignal c = ControlSignal::constant(VectorXd::Constant(1, 1.25), 2);
  const FeasibilityReport rep = feasibility_report(out, c, p);
  EXPECT_NEAR(rep.item("control_box").residual, 0.25, 1e-15);
  EXPECT_TRUE(rep.item("dynamic_inclusion").pass);

  const Trajectory past = Trajectory::from_velocities(grid, VectorXd::Zero(1), {VectorXd::Constant(1, 10.0), VectorXd::Constant(1, 10.5)},
                                                      {VectorXd::Zero(1), VectorXd::Zero(1)});
  const FeasibilityReport r2 = feasibility_report(past, ControlSignal::constant(VectorXd::Constant(1, 1.0), 2), p);
  EXPECT_NEAR(r2.item("terminal_constraint").residual, 0.25, 1e-12);
  EXPECT_FALSE(r2.item("dynamic_inclusion").pass);
  EXPECT_FALSE(r2.all_pass());
}

TEST(XiRho, VanishOnTheReference)
{
  const DiscreteProblem p = verification_problem(2);
  const auto& ref = *p.reference;
  for (const auto& xi : xi_terms(ref.trajectory, ref.controls, ref)) {
    EXPECT_EQ(xi.u.norm(), 0.0);
    EXPECT_EQ(xi.y.norm(), 0.0);
  }
  EXPECT_EQ(rho_term(ref.trajectory, ref.controls, ref), 0.0);
}

TEST(XiRho, ClosedForms)
{
  const Grid grid = Grid::uniform(2.0, 2);
  const VectorXd x0 = VectorXd::Zero(2);
  const Trajectory r = Trajectory::from_velocities(grid, x0, {Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 0)},
                                                   {VectorXd::Zero(1), VectorXd::Zero(1)});
  const ControlledArc ref{r, ControlSignal::constant(VectorXd::Constant(1, 0.5), 2)};
  const Trajectory c = Trajectory::from_velocities(grid, x0, {Eigen::Vector2d(1, 0), Eigen::Vector2d(1.5, -1)},
                                                   {VectorXd::Zero(1), VectorXd::Zero(1)});
  const auto xi = xi_terms(c, ref.controls, ref);
  EXPECT_EQ(xi[0].y.norm(), 0.0);
  EXPECT_NEAR((xi[1].y - Eigen::Vector2d(0.5, -1)).norm(), 0.0, 1e-15);

  // k = 1: rho = -||(V_1 - xbardot(t_1), u_0 - ubar(t_1))||^2
  const Grid one = Grid::uniform(1.0, 1);
  const Trajectory r1 = Trajectory::from_velocities(one, x0, {Eigen::Vector2d(1, 0)}, {VectorXd::Zero(1)});
  const ControlledArc ref1{r1, ControlSignal::constant(VectorXd::Constant(1, 0.5), 1)};
  const Trajectory c1 = Trajectory::from_velocities(one, x0, {Eigen::Vector2d(2, 1)}, {VectorXd::Zero(1)});
  const ControlSignal u1 = ControlSignal::constant(VectorXd::Constant(1, 1.5), 1);
  EXPECT_NEAR(rho_term(c1, u1, ref1), -(1.0 + 1.0 + 1.0), 1e-15);
}

TEST(Hbar, Examples)
{
  const Grid grid = Grid::uniform(3.0, 3);
  const Trajectory tr = Trajectory::from_velocities(grid, VectorXd::Zero(2), std::vector<VectorXd>(3, Eigen::Vector2d(2, -1)),
                                                    std::vector<VectorXd>(3, VectorXd::Zero(1)));
  EXPECT_EQ(hbar(tr, std::vector<VectorXd>(4, VectorXd::Zero(2))), 0.0);
  EXPECT_NEAR(hbar(tr, std::vector<VectorXd>(4, Eigen::Vector2d(0.5, 3))), 1.0 - 3.0, 1e-15);
  const Trajectory one = Trajectory::from_velocities(Grid::uniform(2.0, 1), VectorXd::Zero(2), {Eigen::Vector2d(1, 4)},
                                                     {VectorXd::Zero(1)});
  EXPECT_NEAR(hbar(one, {Eigen::Vector2d(9, 9), Eigen::Vector2d(2, 0.5)}), 4.0, 1e-15);
  EXPECT_THROW(hbar(one, {Eigen::Vector2d(1, 1)}), DimensionError);
}

TEST(FitInclusion, HittingStepUsesRightEndpoint)
{
  const auto s = marine::paper_scenario();
  const DiscreteProblem p = marine::to_problem(s, 100);
  const DiscreteSolution sol = evaluate_controls(p, ControlSignal::constant(nominal_u(), 100), 26.003);
  int rights = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    const InclusionFit f = fit_inclusion(p.polyhedron, *p.perturbation, sol.trajectory, sol.controls, i, 1e-7);
    EXPECT_LE(f.decomposition.residual, 1e-9);
    if (f.endpoint == ArcEndpoint::Right) { ++rights; }
  }
  EXPECT_EQ(rights, 1);
}

TEST(Solve, KnownOptimumIsKept)
{
  const DiscreteProblem p = line_problem(4);
  // x(T) = 3 reached with u = 1 at T = 3, any finer move raises phi or leaves the box
  const DiscreteSolution init = evaluate_controls(p, ControlSignal::constant(VectorXd::Ones(1), 4), 3.0);
  EXPECT_NEAR(init.cost_value, 0.0, 1e-15);
  const DiscreteSolution out = solve(p, init);
  EXPECT_NEAR(out.cost_value, 0.0, 1e-15);
  EXPECT_EQ(out.final_time(), 3.0);
  EXPECT_EQ(out.controls[0](0), 1.0);
}

TEST(Solve, MarineConstantControlsFromCoarseStart)
{
  const auto s = marine::paper_scenario();
  const DiscreteProblem p = marine::to_problem(s, 200);
  const DiscreteSolution init = evaluate_controls(p, ControlSignal::constant(Eigen::Vector2d(1, 1), 200), 30.0);
  const DiscreteSolution out = solve(p, init);
  EXPECT_NEAR(out.cost_value, 6.125, 1e-2);
  for (std::size_t i = 1; i < out.cost_trace.size(); ++i) { EXPECT_LE(out.cost_trace[i], out.cost_trace[i - 1]); }
  FeasibilityOptions fo;
  EXPECT_TRUE(feasibility_report(out, p, fo).all_pass());
}

TEST(Solve, DegenerateBoxKeepsInitialTrajectory)
{
  const auto s = marine::paper_scenario();
  DiscreteProblem p = marine::to_problem(s, 20);
  p.control_box = ControlBox::uniform(2, 0.0, 0.0);
  const DiscreteSolution init = evaluate_controls(p, ControlSignal::constant(VectorXd::Zero(2), 20), 10.0);
  const DiscreteSolution out = solve(p, init);
  for (const auto& x : out.trajectory.states()) { EXPECT_EQ(x, s.config.initial_state()); }
  EXPECT_EQ(out.cost_value, init.cost_value);
}

TEST(Solve, InfeasibleStartAndBudget)
{
  DiscreteProblem p = line_problem(4);
  p.initial_state = VectorXd::Constant(1, 11.0);
  DiscreteSolution init;
  init.controls = ControlSignal::constant(VectorXd::Zero(1), 4);
  EXPECT_THROW(solve(p, init), NoFeasiblePointError);

  DiscreteProblem q = line_problem(4);
  const DiscreteSolution start = evaluate_controls(q, ControlSignal::constant(VectorXd::Zero(1), 4), 1.0);
  SolverOptions opt;
  opt.max_iterations = 2;
  const DiscreteSolution out = solve(q, start, opt);
  EXPECT_EQ(out.status, SolveStatus::BudgetExhausted);
  EXPECT_LE(out.cost_value, start.cost_value);
}

TEST(Solve, VerificationModePinsFirstControl)
{
  DiscreteProblem p = verification_problem(50);
  const DiscreteSolution init = evaluate_controls(p, ControlSignal::constant(Eigen::Vector2d(1.5, 0.7), 50), 25.0);
  SolverOptions opt;
  opt.initial_control_step = 0.1;
  opt.initial_time_step = 0.5;
  const DiscreteSolution out = solve(p, init, opt);
  EXPECT_EQ(out.controls[0], nominal_u());
  EXPECT_LE(out.cost_value, cost_Jk(init, p));
  EXPECT_TRUE(feasibility_report(out, p).all_pass());
}

TEST(SolveConstantControl, MarineAndRefinement)
{
  const auto s = marine::paper_scenario();
  const DiscreteProblem p = marine::to_problem(s, 200);
  ConstantControlOptions opt;
  opt.initial_time = 30.0;
  opt.resolution = 0.5;
  const DiscreteSolution a = solve_constant_control(p, opt);
  EXPECT_NEAR(a.cost_value, 6.125, 1e-2);
  VectorXd xT(4);
  xT << -1.75, -1.75, 1.75, 1.75;
  EXPECT_LE((a.trajectory.terminal_state() - xT).lpNorm<Eigen::Infinity>(), 1e-2);

  opt.resolution = 0.25;
  const DiscreteSolution b = solve_constant_control(p, opt);
  EXPECT_LE(b.cost_value, a.cost_value + 1e-9);
}

TEST(SolveConstantControl, UnobstructedReachesTarget)
{
  DiscreteProblem p = line_problem(50);
  p.cost = std::make_shared<HalfSquaredNorm>(VectorXd::Constant(1, 3.0));
  ConstantControlOptions opt;
  opt.initial_time = 4.0;
  const DiscreteSolution out = solve_constant_control(p, opt);
  EXPECT_LE(out.cost_value, 1e-10);
}

TEST(Refinement, FirstOrderIndicator)
{
  // J_k of the nominal arc on uniform grids: the only discrepancy is the
  // hitting step, of length T/k.
  double prev = -1.0;
  for (std::size_t k : {100u, 200u, 400u}) {
    const DiscreteProblem p = verification_problem(k);
    const DiscreteSolution sol = evaluate_controls(p, ControlSignal::constant(nominal_u(), k), p.reference->final_time());
    const double J = sol.cost_value;
    EXPECT_LE(J - 6.125, 5.0 / static_cast<double>(k));
    EXPECT_GE(J - 6.125, 0.0);
    if (prev > 0) { EXPECT_LE(std::abs(J - prev), 5.0 / static_cast<double>(k)); }
    prev = J;
  }
}
