// sweepctl: simulate, solve, verify and reproduce controlled sweeping processes.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <sweepctl/io.hpp>
#include <sweepctl/reproduce.hpp>

using namespace sweepctl;
namespace fs = std::filesystem;

namespace {

enum Exit : int {
  kOk = 0,
  kVerdictFailed = 1,
  kBadInput = 2,
  kSimulationFailed = 3,
  kNoFeasiblePoint = 4,
  kBudgetExhausted = 5,
  kNoCertificate = 6,
};

struct Common
{
  std::string scenario;
  std::string out = ".";
  std::size_t k = 0;
  double tol = 0.0;
  std::string rule;
  std::string xi_mode;
  bool no_timing = false;
};

void add_common(CLI::App* cmd, Common& c, bool scenario_required)
{
  auto* s = cmd->add_option("--scenario", c.scenario, "scenario JSON file");
  if (scenario_required) { s->required(); }
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--k", c.k, "number of steps (overrides the scenario)");
  cmd->add_option("--tol", c.tol, "certificate tolerance (overrides the scenario)");
  cmd->add_option("--dual-index-rule", c.rule, "paper | zero")->check(CLI::IsMember({"paper", "zero"}));
  cmd->add_option("--xi-mode", c.xi_mode, "zero | exact")->check(CLI::IsMember({"zero", "exact"}));
  cmd->add_flag("--no-timing", c.no_timing, "omit timing from reports");
}

io::Scenario load(const Common& c)
{
  io::Scenario sc = c.scenario.empty() ? io::parse_scenario(io::two_vehicle_scenario_json()) : io::load_scenario(c.scenario);
  if (c.k > 0) { sc.problem.k = c.k; }
  if (c.tol > 0.0) { sc.verify.tolerance = c.tol; }
  if (!c.rule.empty()) { sc.verify.rule = io::parse_rule(c.rule); }
  if (!c.xi_mode.empty()) { sc.verify.xi_mode = io::parse_xi_mode(c.xi_mode); }
  return sc;
}

/// --controls: a CSV file (one row per step, or a single row held constant)
/// or a comma-separated constant vector; empty falls back to the scenario.
ControlSignal resolve_controls(const std::string& arg, const io::Scenario& sc, std::size_t k)
{
  const Index d = sc.problem.control_box.dim();
  if (arg.empty()) {
    if (!sc.constant_control) { throw io::ScenarioError("no controls given and the scenario declares none"); }
    return ControlSignal::constant(*sc.constant_control, k);
  }
  ControlSignal ctrl;
  if (fs::exists(arg)) {
    std::ifstream in(arg);
    ctrl = io::read_controls_csv(in);
    if (ctrl.size() == 1) { ctrl = ControlSignal::constant(ctrl[0], k); }
  } else {
    const auto cells = io::detail::split(arg);
    VectorXd u(static_cast<Index>(cells.size()));
    for (std::size_t i = 0; i < cells.size(); ++i) { u(static_cast<Index>(i)) = io::detail::parse_cell(cells[i], 1); }
    ctrl = ControlSignal::constant(u, k);
  }
  for (const auto& u : ctrl.values) {
    if (u.size() != d) { throw io::FormatError("controls: dimension does not match the control box"); }
  }
  if (ctrl.size() != k) {
    throw io::FormatError("controls: " + std::to_string(ctrl.size()) + " rows for " + std::to_string(k) + " steps");
  }
  return ctrl;
}

void finish(io::json& report, const Common& c, std::chrono::steady_clock::time_point start)
{
  if (!c.no_timing) {
    report["timing"] = {{"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
  }
}

std::string path_in(const Common& c, const std::string& name)
{
  fs::create_directories(c.out);
  return (fs::path(c.out) / name).string();
}

int cmd_simulate(const Common& c, const std::string& controls)
{
  const auto start = std::chrono::steady_clock::now();
  io::Scenario sc = load(c);
  const std::size_t k = sc.problem.k;
  const ControlSignal ctrl = resolve_controls(controls, sc, k);
  const Grid grid = io::make_grid(sc, ctrl[0], sc.final_time, k);
  Trajectory tr;
  try {
    tr = simulate(sc.problem.polyhedron, *sc.problem.perturbation, sc.problem.initial_state, ctrl, grid);
  } catch (const SimulationError& e) {
    std::cerr << "simulation failed: " << e.what() << "\n";
    return kSimulationFailed;
  }
  io::write_text(path_in(c, "trajectory.csv"), io::trajectory_csv(tr, sc.problem.polyhedron.face_count()));
  io::json report = io::run_report("simulate", sc);
  report["solution"] = io::solution_json(tr, ctrl, sc.problem);
  report["feasibility"] = io::to_json(feasibility_report(tr, ctrl, sc.problem));
  finish(report, c, start);
  io::write_json(path_in(c, "report.json"), report);
  std::cout << "final state:";
  for (Index i = 0; i < tr.dim(); ++i) { std::cout << " " << io::format_double(tr.terminal_state()(i)); }
  std::cout << "\n";
  return kOk;
}

int cmd_solve(const Common& c, const std::string& controls, bool constant)
{
  const auto start = std::chrono::steady_clock::now();
  io::Scenario sc = load(c);
  DiscreteProblem prob = sc.problem;
  prob.reference = io::reference_arc(sc);
  DiscreteSolution sol;
  try {
    if (constant) {
      ConstantControlOptions o;
      o.resolution = sc.constant_resolution;
      o.initial_time = sc.final_time;
      o.refine.max_iterations = sc.max_iterations;
      sol = solve_constant_control(prob, o);
    } else {
      DiscreteSolution init;
      const VectorXd mid = 0.5 * (prob.control_box.lower + prob.control_box.upper);
      init.controls = controls.empty() && !sc.constant_control ? ControlSignal::constant(mid, prob.k)
                                                               : resolve_controls(controls, sc, prob.k);
      init.trajectory = Trajectory::from_states(Grid::uniform(sc.final_time, prob.k),
                                                std::vector<VectorXd>(prob.k + 1, prob.initial_state),
                                                prob.polyhedron.face_count());
      SolverOptions o;
      o.max_iterations = sc.max_iterations;
      sol = solve(prob, init, o);
    }
  } catch (const NoFeasiblePointError& e) {
    std::cerr << "no feasible point: " << e.what() << "\n";
    return kNoFeasiblePoint;
  }
  io::write_text(path_in(c, "trajectory.csv"), io::trajectory_csv(sol.trajectory, prob.polyhedron.face_count()));
  io::write_text(path_in(c, "controls.csv"), io::controls_csv(sol.controls));
  io::json report = io::run_report("solve", sc);
  report["solver"] = {{"method", constant ? "constant_control" : "compass"},
                      {"status", to_string(sol.status)},
                      {"iterations", sol.iterations},
                      {"evaluations", sol.evaluations}};
  report["solution"] = io::solution_json(sol.trajectory, sol.controls, prob);
  report["feasibility"] = io::to_json(feasibility_report(sol, prob));
  finish(report, c, start);
  io::write_json(path_in(c, "report.json"), report);
  std::cout << "status " << to_string(sol.status) << ", T = " << io::format_double(sol.final_time())
            << ", terminal cost = " << io::format_double(prob.cost->value(sol.trajectory.terminal_state(), sol.final_time()))
            << "\n";
  return sol.status == SolveStatus::BudgetExhausted ? kBudgetExhausted : kOk;
}

int cmd_verify(const Common& c, const std::string& traj_path, const std::string& controls,
               const std::string& mult_path, bool recover)
{
  const auto start = std::chrono::steady_clock::now();
  if (recover == !mult_path.empty()) {
    std::cerr << "verify: give exactly one of --multipliers or --recover\n";
    return kBadInput;
  }
  io::Scenario sc = load(c);
  Trajectory tr;
  ControlSignal ctrl;
  if (!traj_path.empty()) {
    std::ifstream in(traj_path);
    if (!in) { throw io::FormatError("cannot open trajectory " + traj_path); }
    tr = io::read_trajectory_csv(in);
    ctrl = resolve_controls(controls, sc, tr.steps());
  } else {
    ctrl = resolve_controls(controls, sc, sc.problem.k);
    try {
      tr = simulate(sc.problem.polyhedron, *sc.problem.perturbation, sc.problem.initial_state, ctrl,
                    io::make_grid(sc, ctrl[0], sc.final_time, sc.problem.k));
    } catch (const SimulationError& e) {
      std::cerr << "simulation failed: " << e.what() << "\n";
      return kSimulationFailed;
    }
  }
  DiscreteProblem prob = sc.problem;
  prob.k = tr.steps();
  prob.reference = io::reference_arc(sc);

  io::json report = io::run_report("verify", sc);
  report["solution"] = io::solution_json(tr, ctrl, prob);
  report["feasibility"] = io::to_json(feasibility_report(tr, ctrl, prob));
  int code = kOk;
  VerificationReport rep;
  if (recover) {
    const RecoveryResult r = recover_multipliers(tr, ctrl, prob, sc.verify);
    rep = r.report;
    report["recovery"] = {{"found", r.found},
                          {"mode", r.mode},
                          {"worst_residual", io::number(r.worst_residual)},
                          {"least_squares_residual", io::number(r.least_squares_residual)}};
    if (r.found) {
      io::write_json(path_in(c, "multipliers.json"), io::to_json(r.multipliers));
    } else {
      code = kNoCertificate;
    }
  } else {
    std::ifstream in(mult_path);
    if (!in) { throw io::FormatError("cannot open multipliers " + mult_path); }
    io::json j;
    try {
      j = io::json::parse(in);
    } catch (const io::json::exception& e) {
      throw io::FormatError(std::string("multipliers: ") + e.what());
    }
    const Multipliers m = io::multipliers_from_json(j);
    rep = verify_all(tr, ctrl, m, prob, sc.verify);
  }
  report["verification"] = io::to_json(rep);
  if (code == kOk && !rep.overall) { code = kVerdictFailed; }
  finish(report, c, start);
  io::write_json(path_in(c, "report.json"), report);
  std::cout << "verification " << (rep.overall ? "pass" : "fail");
  if (recover) { std::cout << (code == kNoCertificate ? " (no certificate found)" : " (certificate recovered)"); }
  std::cout << "\n";
  for (const auto& r : rep.records) {
    if (!r.pass) { std::cout << "  " << r.id << ": " << io::format_double(r.value) << " (tol " << r.tolerance << ")\n"; }
  }
  return code;
}

int cmd_reproduce(const Common& c)
{
  const auto start = std::chrono::steady_clock::now();
  io::Scenario sc = load(c);
  if (!sc.marine || sc.marine->config.n() != 2 || !sc.constant_control) {
    std::cerr << "reproduce: needs a two-vehicle marine scenario with constant controls\n";
    return kBadInput;
  }
  ReproduceOptions o;
  o.k = sc.problem.k;
  o.constant_resolution = sc.constant_resolution;
  o.oracle_resolution = sc.oracle_resolution;
  o.verify = sc.verify;
  const ReproduceResult r = reproduce(*sc.marine, *sc.constant_control, o);

  std::printf("%-42s %16s %12s %10s  %s\n", "quantity", "value", "expected", "tolerance", "result");
  io::json rows = io::json::array();
  for (const auto& row : r.rows) {
    std::printf("%-42s %16.8f %12.6g %10.1e  %s\n", row.quantity.c_str(), row.value, row.expected, row.tolerance,
                row.pass ? "ok" : "FAIL");
    rows.push_back({{"quantity", row.quantity},
                    {"value", io::number(row.value)},
                    {"expected", row.expected},
                    {"tolerance", row.tolerance},
                    {"pass", row.pass}});
  }
  std::printf("overall: %s\n", r.all_pass ? "pass" : "FAIL");
  if (!c.scenario.empty() || c.out != ".") {
    io::json report = io::run_report("reproduce", sc);
    report["rows"] = rows;
    report["all_pass"] = r.all_pass;
    report["oracle"] = {{"constant_control", io::vector_json(r.oracle.controls)},
                        {"final_time", io::number(r.oracle.final_time)},
                        {"terminal_cost", io::number(r.oracle.terminal_cost)},
                        {"evaluated", r.oracle.evaluated}};
    report["verification"] = io::to_json(r.certificate.report);
    finish(report, c, start);
    io::write_json(path_in(c, "report.json"), report);
  }
  return r.all_pass ? kOk : kVerdictFailed;
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Simulate, solve and verify controlled polyhedral sweeping processes"};
  app.require_subcommand(1);

  Common sim_c, solve_c, ver_c, rep_c;
  std::string sim_controls, solve_controls, ver_controls, ver_traj, ver_mult;
  bool constant = false, recover = false;

  auto* sim = app.add_subcommand("simulate", "catching-up simulation, CSV trajectory and report");
  add_common(sim, sim_c, true);
  sim->add_option("--controls", sim_controls, "constant vector 'u0,u1,...' or a controls CSV");

  auto* sol = app.add_subcommand("solve", "solve the discrete free-time problem");
  add_common(sol, solve_c, true);
  sol->add_option("--controls", solve_controls, "initial controls");
  sol->add_flag("--constant-control", constant, "search constant controls only");

  auto* ver = app.add_subcommand("verify", "check the discrete optimality conditions");
  add_common(ver, ver_c, true);
  ver->add_option("--trajectory", ver_traj, "trajectory CSV (simulated from the controls when absent)");
  ver->add_option("--controls", ver_controls, "controls of the trajectory");
  ver->add_option("--multipliers", ver_mult, "multipliers JSON");
  ver->add_flag("--recover", recover, "recover multipliers instead of reading them");

  auto* rep = app.add_subcommand("reproduce", "run the built-in two-vehicle scenario end to end");
  add_common(rep, rep_c, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadInput;
  }

  try {
    if (sim->parsed()) { return cmd_simulate(sim_c, sim_controls); }
    if (sol->parsed()) { return cmd_solve(solve_c, solve_controls, constant); }
    if (ver->parsed()) { return cmd_verify(ver_c, ver_traj, ver_controls, ver_mult, recover); }
    return cmd_reproduce(rep_c);
  } catch (const io::ScenarioError& e) {
    std::cerr << "invalid scenario: " << e.what() << "\n";
    return kBadInput;
  } catch (const io::FormatError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kBadInput;
  } catch (const SimulationError& e) {
    std::cerr << "simulation failed: " << e.what() << "\n";
    return kSimulationFailed;
  } catch (const NoFeasiblePointError& e) {
    std::cerr << "no feasible point: " << e.what() << "\n";
    return kNoFeasiblePoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadInput;
  }
}
