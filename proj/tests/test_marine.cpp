#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include <sweepctl/marine.hpp>

using namespace sweepctl;
using namespace sweepctl::marine;

namespace {

VectorXd nominal_u()
{
  VectorXd u(2);
  u << 1.67547, 0.49999;
  return u;
}

}  // namespace

TEST(PairDistance, ValueAndGradient)
{
  VectorXd x(4);
  x << -25, -25, -15, -15;
  const PairDistance d = pair_distance(x, 0, 1, {3.5, 3.5});
  EXPECT_NEAR(d.value, std::sqrt(200.0) - 7.0, 1e-12);
  EXPECT_NEAR(d.value, 7.14214, 1e-5);

  VectorXd touching(4);
  touching << 0, 0, 3, 4;
  EXPECT_NEAR(pair_distance(touching, 0, 1, {2.0, 3.0}).value, 0.0, 1e-15);

  std::mt19937_64 rng(11);
  std::normal_distribution<double> N(0.0, 5.0);
  for (int t = 0; t < 20; ++t) {
    VectorXd y(6);
    for (Index i = 0; i < 6; ++i) { y(i) = N(rng); }
    const std::vector<double> R{1.0, 0.5, 2.0};
    const PairDistance p = pair_distance(y, 2, 0, R);
    const double h = 1e-7;
    for (Index c = 0; c < 6; ++c) {
      VectorXd e = VectorXd::Unit(6, c) * h;
      const double fd = (pair_distance(y + e, 2, 0, R).value - pair_distance(y - e, 2, 0, R).value) / (2 * h);
      EXPECT_NEAR(fd, p.gradient(c), 1e-6);
    }
  }
  EXPECT_THROW(pair_distance(VectorXd::Zero(4), 0, 1, {1.0, 1.0}), GeometryError);
}

TEST(Admissible, Examples)
{
  const auto s = paper_scenario();
  EXPECT_TRUE(is_admissible(s.config.initial_state(), s.config.radii));
  VectorXd overlap(4);
  overlap << 0, 0, 1, 1;
  EXPECT_FALSE(is_admissible(overlap, {3.5, 3.5}));
  EXPECT_TRUE(is_admissible(VectorXd::Zero(2), {1.0}));
}

TEST(BuildPolyhedron, Examples)
{
  const auto s = paper_scenario();
  const Polyhedron P = build_polyhedron(s.config);
  ASSERT_EQ(P.face_count(), 1);
  VectorXd expected(4);
  expected << 1, 1, -1, -1;
  EXPECT_EQ(P.normals().col(0), expected);
  EXPECT_EQ(P.offsets()(0), -7.0);

  VehicleConfig three = s.config;
  three.radii = {1.0, 2.0, 0.5};
  three.speeds = {1, 1, 1};
  three.directions = {0, 0, 0};
  three.initial_positions = {Vector2d(0, 0), Vector2d(5, 0), Vector2d(10, 0)};
  const Polyhedron Q = build_polyhedron(three);
  ASSERT_EQ(Q.face_count(), 2);
  VectorXd f0(6), f1(6);
  f0 << 1, 1, -1, -1, 0, 0;
  f1 << 0, 0, 1, 1, -1, -1;
  EXPECT_EQ(Q.normals().col(0), f0);
  EXPECT_EQ(Q.normals().col(1), f1);
  EXPECT_EQ(Q.offsets()(0), -3.0);
  EXPECT_EQ(Q.offsets()(1), -2.5);
  for (Index j = 0; j < Q.face_count(); ++j) {
    EXPECT_EQ((Q.normals().col(j).array() != 0.0).count(), 4);
    EXPECT_EQ(Q.normals().col(j).cwiseAbs().maxCoeff(), 1.0);
    EXPECT_DOUBLE_EQ(Q.normals().col(j).norm(), 2.0);
  }
}

TEST(Perturbation, NominalVelocities)
{
  const auto s = paper_scenario();
  const auto g = s.dynamics();
  const VectorXd x = s.config.initial_state();
  const VectorXd v = g->value(x, nominal_u());
  EXPECT_NEAR(v(0), 1.18474, 1e-5);
  EXPECT_NEAR(v(1), 1.18474, 1e-5);
  EXPECT_NEAR(v(2), 0.35355, 1e-5);
  EXPECT_NEAR(v(3), 0.35355, 1e-5);
  EXPECT_TRUE(g->value(x, VectorXd::Zero(2)).isZero(0.0));
  const MatrixXd Bu = g->jacobian_u(x, nominal_u());
  EXPECT_NEAR(Bu.col(0).norm(), 1.0, 1e-15);
  EXPECT_NEAR(Bu.col(1).norm(), 1.0, 1e-15);
  EXPECT_TRUE(g->jacobian_x(x, nominal_u()).isZero(0.0));

  const DirectionalPerturbation fast({2.0, 0.5}, {0.3, 2.0}, 2.0);
  const MatrixXd B = fast.jacobian_u(x, nominal_u());
  EXPECT_NEAR(B.col(0).norm(), 2.0, 1e-15);
  EXPECT_NEAR(B.col(1).norm(), 0.5, 1e-15);
  const double h = 1e-6;
  for (Index c = 0; c < 2; ++c) {
    const VectorXd e = VectorXd::Unit(2, c) * h;
    const VectorXd fd = (fast.value(x, nominal_u() + e) - fast.value(x, nominal_u() - e)) / (2 * h);
    EXPECT_LE((fd - B.col(c)).norm(), 1e-5);
  }
}

TEST(ReferencePosture, QuadrantCorrect)
{
  EXPECT_NEAR(reference_posture({0, 0}, {1, 1}).psi, std::numbers::pi / 4, 1e-15);
  EXPECT_NEAR(reference_posture({2, 3}, {2, 5}).psi, std::numbers::pi / 2, 1e-15);
  EXPECT_EQ(reference_posture({0, 0}, {-1, 0}).psi, std::numbers::pi);
  EXPECT_EQ(reference_posture({0, 0}, {-1, 0}).x, -1.0);
  EXPECT_THROW(reference_posture({1, 1}, {1, 1}), GeometryError);
}

TEST(BuiltInScenario, Data)
{
  const auto s = paper_scenario();
  EXPECT_EQ(s.control_box.lower, Eigen::Vector2d(-2, -2));
  EXPECT_EQ(s.control_box.upper, Eigen::Vector2d(2, 2));
  EXPECT_EQ(s.polyhedron().face_count(), 1);
  EXPECT_TRUE(is_admissible(s.config.initial_state(), s.config.radii));
  VectorXd x0(4);
  x0 << -25, -25, -15, -15;
  EXPECT_EQ(s.config.initial_state(), x0);
  EXPECT_NEAR(s.polyhedron().slacks(x0)(0), -13.0, 1e-15);
}

TEST(AnalyticTwoPhase, ContactAndTerminalNumbers)
{
  const auto s = paper_scenario();
  const TwoPhase tp = analytic_two_phase(s, nominal_u());
  ASSERT_TRUE(tp.closing);
  EXPECT_NEAR(tp.contact_time, 13.0 / 1.66238, 1e-4);
  EXPECT_NEAR(tp.contact_time, 7.8201, 1e-3);
  for (Index c = 0; c < 4; ++c) { EXPECT_NEAR(tp.post_velocity(c), 0.76914, 1e-5); }
  EXPECT_NEAR(tp.terminal_time, (-1.75 + 21.75) / 0.76914, 1e-3);
  EXPECT_NEAR(tp.terminal_time, 26.003, 1e-3);
  VectorXd xT(4);
  xT << -1.75, -1.75, 1.75, 1.75;
  EXPECT_LE((tp.terminal_state - xT).norm(), 1e-9);
  EXPECT_NEAR(tp.terminal_cost, 6.125, 1e-12);

  VectorXd away(2);
  away << 0.2, 1.0;
  const TwoPhase open = analytic_two_phase(s, away);
  EXPECT_FALSE(open.closing);
  EXPECT_TRUE(std::isinf(open.contact_time));
}

TEST(AnalyticTwoPhase, AgreesWithSimulation)
{
  const auto s = paper_scenario();
  for (const VectorXd& u : {nominal_u(), VectorXd(Eigen::Vector2d(1.9, -0.3)), VectorXd(Eigen::Vector2d(0.8, 0.6))}) {
    const TwoPhase tp = analytic_two_phase(s, u);
    const double T = 30.0;
    const std::size_t k = 3000;
    const Trajectory tr = simulate(s.polyhedron(), *s.dynamics(), s.config.initial_state(), ControlSignal::constant(u, k),
                                   Grid::uniform(T, k));
    for (std::size_t i = 0; i <= k; i += 37) {
      EXPECT_LE((tr.state(i) - tp.state_at(tr.grid().node(i))).lpNorm<Eigen::Infinity>(), 1e-2);
    }
  }
}

TEST(EncodingEquivalence, GapSumAlongSimulatedStates)
{
  const auto s = paper_scenario();
  const Polyhedron P = s.polyhedron();
  const Trajectory tr = simulate(P, *s.dynamics(), s.config.initial_state(), ControlSignal::constant(nominal_u(), 2600),
                                 Grid::uniform(26.003, 2600));
  for (const auto& x : tr.states()) {
    const double gap = (x(2) - x(0)) + (x(3) - x(1));
    ASSERT_GT(x(2) - x(0), 0.0);
    ASSERT_GT(x(3) - x(1), 0.0);
    EXPECT_EQ(P.normals().col(0).dot(x) <= -7.0 + 1e-9, gap >= 7.0 - 1e-9);
  }
  // the l1 surrogate is conservative but not equivalent to Euclidean nonoverlap
  const auto D = euclidean_separation(tr, s.config.radii);
  EXPECT_NEAR(D.back(), std::sqrt(2.0) * 3.5 - 7.0, 1e-6);
  EXPECT_LT(D.back(), 0.0);
}

TEST(Oracle, BestConstantCost)
{
  const auto s = paper_scenario();
  const OracleResult r = brute_force_oracle(s, 0.05);
  EXPECT_NEAR(r.terminal_cost, 6.125, 1e-6);
  VectorXd xT(4);
  xT << -1.75, -1.75, 1.75, 1.75;
  EXPECT_LE((r.terminal_state - xT).norm(), 1e-6);
  EXPECT_EQ(r.evaluated, 81u * 81u);

  MarineScenario frozen = s;
  frozen.control_box = ControlBox::uniform(2, 0.0, 0.0);
  const OracleResult z = brute_force_oracle(frozen, 0.01);
  EXPECT_NEAR(z.terminal_cost, 0.5 * s.config.initial_state().squaredNorm(), 1e-12);
  EXPECT_EQ(z.evaluated, 1u);
}

TEST(TwoPhaseArc, ExactReference)
{
  const auto s = paper_scenario();
  const TwoPhase tp = analytic_two_phase(s, nominal_u());
  const ControlledArc arc = two_phase_arc(s, nominal_u(), tp.terminal_time);
  ASSERT_EQ(arc.trajectory.steps(), 2u);
  EXPECT_EQ(arc.trajectory.grid().node(1), tp.contact_time);
  EXPECT_NEAR(arc.trajectory.eta(1)(0), 0.41560, 1e-5);
  EXPECT_LE((arc.trajectory.terminal_state() - tp.terminal_state).norm(), 1e-12);
}
