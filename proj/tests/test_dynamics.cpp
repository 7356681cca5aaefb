#include <gtest/gtest.h>

#include <random>

#include <sweepctl/dynamics.hpp>
#include <sweepctl/marine.hpp>

using namespace sweepctl;

namespace {

Polyhedron marine_face()
{
  VectorXd n(4);
  n << 1, 1, -1, -1;
  return Polyhedron({HalfSpace(n, -7.0)});
}

VectorXd vec(std::initializer_list<double> v)
{
  VectorXd x(static_cast<Index>(v.size()));
  Index i = 0;
  for (double a : v) { x(i++) = a; }
  return x;
}

/// g(x,u) = u, the plain velocity control.
AffinePerturbation identity_control(Index n)
{
  return AffinePerturbation(MatrixXd::Zero(n, n), MatrixXd::Identity(n, n), VectorXd::Zero(n), 2.0);
}

}  // namespace

TEST(Grid, UniformAndTwoSegment)
{
  const Grid g = Grid::uniform(2.0, 4);
  EXPECT_EQ(g.size(), 4u);
  EXPECT_DOUBLE_EQ(g.step(2), 0.5);
  EXPECT_EQ(g.nodes().back(), 2.0);
  EXPECT_EQ(g.interval_of(0.75), 1u);
  EXPECT_EQ(g.interval_of(5.0), 3u);

  const Grid t = Grid::two_segment(0.3, 3, 1.0, 7);
  EXPECT_EQ(t.size(), 10u);
  EXPECT_EQ(t.node(3), 0.3);
  EXPECT_NEAR(t.step(5), 0.1, 1e-15);
  EXPECT_THROW(Grid(1.0, {0.5, 0.4}), Error);
  EXPECT_THROW(Grid(std::vector<double>{0.5, -0.1}), Error);
}

TEST(StepCatchingUp, InteriorStepIsExact)
{
  const Polyhedron P = marine_face();
  const auto g = identity_control(4);
  const VectorXd x = vec({-25, -25, -15, -15});
  const VectorXd u = vec({0.3, 0.1, -0.2, 0.05});
  const StepResult s = step_catching_up(P, g, x, u, 0.01);
  EXPECT_EQ(s.velocity, u);
  EXPECT_EQ(s.next, x + 0.01 * u);
  EXPECT_TRUE(s.eta.isZero(0.0));
}

TEST(StepCatchingUp, SlidingOnTheMarineFace)
{
  const Polyhedron P = marine_face();
  const auto g = identity_control(4);
  const VectorXd x = vec({-10, -10, -6.5, -6.5});  // on the face
  ASSERT_NEAR(P.slacks(x)(0), 0.0, 1e-14);
  const VectorXd gv = vec({1.18474, 1.18474, 0.35355, 0.35355});
  const StepResult s = step_catching_up(P, g, x, gv, 0.01);
  // V = g - (<x*,g>/||x*||^2) x*
  const double eta = (2 * 1.18474 - 2 * 0.35355) / 4.0;
  for (Index c = 0; c < 4; ++c) { EXPECT_NEAR(s.velocity(c), (1.18474 + 0.35355) / 2.0, 1e-12); }
  EXPECT_NEAR(s.velocity(0), 0.769145, 1e-5);
  EXPECT_NEAR(s.eta(0), eta, 1e-12);
  EXPECT_NEAR(s.eta(0), 0.41560, 1e-5);
  EXPECT_LE((gv - s.velocity - s.eta(0) * P.normals().col(0)).norm(), 1e-9);
}

TEST(StepCatchingUp, ZeroFieldIsStationary)
{
  const Polyhedron P = marine_face();
  const auto g = identity_control(4);
  const VectorXd x = vec({-1.75, -1.75, 1.75, 1.75});
  const StepResult s = step_catching_up(P, g, x, VectorXd::Zero(4), 0.5);
  EXPECT_EQ(s.next, x);
  EXPECT_TRUE(s.eta.isZero(0.0));
}

TEST(AdmissibleVelocitySystem, Examples)
{
  const LinearSystem one = admissible_velocity_system(vec({1, 2}), {1.0}, 0.1);
  EXPECT_EQ(one.A.rows(), 0);

  const LinearSystem two = admissible_velocity_system(vec({-25, -25, -15, -15}), {3.5, 3.5}, 0.1);
  ASSERT_EQ(two.A.rows(), 1);
  EXPECT_NEAR(two.b(0), std::sqrt(200.0) - 7.0, 1e-12);
  EXPECT_NEAR(two.b(0), 7.1421, 1e-4);

  // touching: rhs zero, the row forces grad D . V >= 0
  const LinearSystem touch = admissible_velocity_system(vec({0, 0, 7, 0}), {3.5, 3.5}, 0.1);
  EXPECT_NEAR(touch.b(0), 0.0, 1e-15);
  const VectorXd closing = vec({1, 0, 0, 0});
  EXPECT_GT((touch.A * closing)(0), 0.0);

  EXPECT_THROW(admissible_velocity_system(vec({1, 1, 1, 1}), {0.5, 0.5}, 0.1), GeometryError);
}

TEST(StepLinearized, Examples)
{
  const std::vector<double> R{3.5, 3.5};
  const VectorXd far = vec({-25, -25, -15, -15});
  const VectorXd gv = vec({1.18474, 1.18474, 0.35355, 0.35355});
  const StepResult free_step = step_linearized(far, R, gv, 0.01);
  EXPECT_EQ(free_step.velocity, gv);

  // contact along the x axis with a closing desired velocity
  const VectorXd x = vec({0, 0, 7, 0});
  const VectorXd want = vec({1, 0, 0, 0});
  const StepResult s = step_linearized(x, R, want, 0.1);
  EXPECT_NEAR(s.velocity(0), s.velocity(2), 1e-12);  // equal speeds along the normal
  EXPECT_NEAR(s.velocity(0), 0.5, 1e-12);
  const LinearSystem sys = admissible_velocity_system(x, R, 0.1);
  EXPECT_LE((sys.A * s.velocity - sys.b).maxCoeff(), 1e-12);
}

TEST(Simulate, ZeroFieldIsConstant)
{
  const Polyhedron P = marine_face();
  const auto g = identity_control(4);
  const VectorXd x0 = vec({-25, -25, -15, -15});
  const Trajectory tr = simulate(P, g, x0, ControlSignal::constant(VectorXd::Zero(4), 10), Grid::uniform(1.0, 10));
  for (const auto& x : tr.states()) { EXPECT_EQ(x, x0); }
}

TEST(Simulate, TwoVehicleTwoPhaseAtK2600)
{
  const auto s = marine::paper_scenario();
  VectorXd u(2);
  u << 1.67547, 0.49999;
  const auto tp = marine::analytic_two_phase(s, u);
  const Trajectory tr = simulate(s.polyhedron(), *s.dynamics(), s.config.initial_state(), ControlSignal::constant(u, 2600),
                                 Grid::uniform(26.003, 2600));
  for (std::size_t i = 0; i <= 2600; i += 13) {
    const VectorXd ref = tp.state_at(tr.grid().node(i));
    EXPECT_LE((tr.state(i) - ref).lpNorm<Eigen::Infinity>(), 1e-2) << "node " << i;
  }
}

TEST(Simulate, FirstOrderRefinement)
{
  const auto s = marine::paper_scenario();
  VectorXd u(2);
  u << 1.2, 0.7;
  const auto tp = marine::analytic_two_phase(s, u);
  const double T = 15.0;
  double prev = 0.0;
  for (std::size_t k : {50u, 100u, 200u}) {
    const Trajectory tr = simulate(s.polyhedron(), *s.dynamics(), s.config.initial_state(), ControlSignal::constant(u, k),
                                   Grid::uniform(T, k));
    // compare at a mid-horizon node after contact, where the hitting step error persists
    const double err = (tr.state(k / 2) - tp.state_at(T / 2)).norm();
    const double h = T / static_cast<double>(k);
    EXPECT_LE(err, 2.0 * h) << k;
    if (k > 50) { EXPECT_LE(err, prev + 1e-12); }
    prev = err;
  }
}

TEST(Simulate, ErrorsCarryStepIndex)
{
  const Polyhedron P = marine_face();
  const auto g = identity_control(4);
  EXPECT_THROW(simulate(P, g, VectorXd::Zero(4), ControlSignal::constant(VectorXd::Zero(4), 3), Grid::uniform(1, 3)),
               SimulationError);
  EXPECT_THROW(simulate(P, g, vec({-25, -25, -15, -15}), ControlSignal::constant(VectorXd::Zero(4), 2), Grid::uniform(1, 3)),
               DimensionError);
}

TEST(Sample, NodesAndExtension)
{
  const Trajectory tr = Trajectory::from_velocities(Grid::uniform(2.0, 2), vec({0.0}), {vec({1.0}), vec({-2.0})},
                                                    {VectorXd::Zero(1), VectorXd::Zero(1)});
  EXPECT_EQ(sample(tr, 0.0)(0), 0.0);
  EXPECT_EQ(sample(tr, 1.0)(0), 1.0);
  EXPECT_DOUBLE_EQ(sample(tr, 1.5)(0), 0.0);
  EXPECT_EQ(sample(tr, 7.0)(0), tr.terminal_state()(0));
  EXPECT_EQ(tr.velocity_left(1.0)(0), 1.0);
  EXPECT_EQ(tr.velocity_right(1.0)(0), -2.0);
  EXPECT_EQ(tr.velocity_at(3.0)(0), 0.0);
}

TEST(LocalizationDistance, Examples)
{
  const Trajectory a = Trajectory::from_velocities(Grid::uniform(2.0, 4), vec({0, 0}),
                                                   std::vector<VectorXd>(4, vec({1, 0})),
                                                   std::vector<VectorXd>(4, VectorXd::Zero(1)));
  const ControlledArc ref{a, ControlSignal::constant(vec({0.5}), 4)};
  EXPECT_EQ(localization_distance(ref, ref), 0.0);

  // same arc, longer horizon by delta
  const Trajectory b = Trajectory::from_velocities(Grid::uniform(2.3, 3), vec({0, 0}),
                                                   std::vector<VectorXd>(3, vec({1, 0})),
                                                   std::vector<VectorXd>(3, VectorXd::Zero(1)));
  EXPECT_NEAR(localization_distance({b, ControlSignal::constant(vec({0.5}), 3)}, ref), 0.09, 1e-12);

  // constant velocity offset dv on [0, Tbar]
  const Trajectory c = Trajectory::from_velocities(Grid::uniform(2.0, 3), vec({0, 0}),
                                                   std::vector<VectorXd>(3, vec({1.5, -1})),
                                                   std::vector<VectorXd>(3, VectorXd::Zero(1)));
  EXPECT_NEAR(localization_distance({c, ControlSignal::constant(vec({0.5}), 3)}, ref), 2.0 * (0.25 + 1.0), 1e-12);
}

TEST(Properties, RandomMarineStyleInvariants)
{
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  std::uniform_real_distribution<double> R(0.5, 4.0);
  for (int trial = 0; trial < 20; ++trial) {
    marine::MarineScenario s = marine::paper_scenario();
    s.config.radii = {R(rng), R(rng)};
    const Polyhedron P = s.polyhedron();
    const auto g = s.dynamics();
    VectorXd u(2);
    u << U(rng), U(rng);
    const std::size_t k = 200;
    const Trajectory tr = simulate(P, *g, s.config.initial_state(), ControlSignal::constant(u, k), Grid::uniform(30.0, k));
    for (std::size_t i = 0; i < k; ++i) {
      EXPECT_LE(P.max_violation(tr.state(i + 1)), 1e-9);
      const ActiveSet act = active_set_unchecked(P, tr.state(i + 1), 1e-7);
      for (Index j = 0; j < P.face_count(); ++j) {
        if (tr.eta(i)(j) > 1e-9) { EXPECT_TRUE(act.contains(j)); }
      }
      const VectorXd target = tr.state(i) + tr.grid().step(i) * g->value(tr.state(i), u);
      if (active_set_unchecked(P, target, 0.0).empty() && P.max_violation(target) < 0) {
        EXPECT_TRUE(tr.eta(i).isZero(0.0));
        EXPECT_EQ(tr.velocity(i), g->value(tr.state(i), u));
      }
    }
    const Trajectory lin = simulate(P, *g, s.config.initial_state(), ControlSignal::constant(u, k), Grid::uniform(30.0, k),
                                    SimulationMode::LinearizedMovingSet);
    for (std::size_t i = 0; i <= k; ++i) { EXPECT_LE((lin.state(i) - tr.state(i)).norm(), 1e-9); }
  }
}

TEST(Properties, AffineJacobiansMatchFiniteDifferences)
{
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N;
  MatrixXd A(3, 3), B(3, 2);
  VectorXd c(3);
  for (Index i = 0; i < A.size(); ++i) { A.data()[i] = N(rng); }
  for (Index i = 0; i < B.size(); ++i) { B.data()[i] = N(rng); }
  for (Index i = 0; i < c.size(); ++i) { c(i) = N(rng); }
  const AffinePerturbation g(A, B, c, 1.0);
  VectorXd x(3), u(2);
  x << N(rng), N(rng), N(rng);
  u << 0.3, -0.4;
  const double h = 1e-6;
  for (Index j = 0; j < 3; ++j) {
    VectorXd e = VectorXd::Unit(3, j) * h;
    const VectorXd fd = (g.value(x + e, u) - g.value(x - e, u)) / (2 * h);
    EXPECT_LE((fd - g.jacobian_x(x, u).col(j)).norm(), 1e-5);
  }
  for (Index j = 0; j < 2; ++j) {
    VectorXd e = VectorXd::Unit(2, j) * h;
    const VectorXd fd = (g.value(x, u + e) - g.value(x, u - e)) / (2 * h);
    EXPECT_LE((fd - g.jacobian_u(x, u).col(j)).norm(), 1e-5);
  }
  for (int t = 0; t < 50; ++t) {
    VectorXd y(3);
    y << N(rng), N(rng), N(rng);
    EXPECT_LE(g.value(y, u).norm(), g.growth_constant() * (1 + y.norm()) + 1e-12);
  }
}
