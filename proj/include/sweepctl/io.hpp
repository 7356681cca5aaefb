#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "marine.hpp"
#include "optimality.hpp"

namespace sweepctl::io {

using nlohmann::json;

inline constexpr int kSpecVersion = 1;

/// Malformed or inconsistent scenario document.
class ScenarioError : public Error
{
public:
  using Error::Error;
};

/// Malformed trajectory, control or multiplier file.
class FormatError : public Error
{
public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Number formatting
// ---------------------------------------------------------------------------

inline std::string format_double(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Finite numbers as-is, anything else as null.
inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json vector_json(const VectorXd& v)
{
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) { a.push_back(number(v(i))); }
  return a;
}

inline json vectors_json(const std::vector<VectorXd>& vs)
{
  json a = json::array();
  for (const auto& v : vs) { a.push_back(vector_json(v)); }
  return a;
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

enum class GridKind { Uniform, ContactAligned };

struct ReferenceSpec
{
  VectorXd control;
  double final_time = 0.0;
};

/// A parsed scenario: the discrete problem without reference plus run
/// settings. Marine scenarios also keep their vehicle description.
struct Scenario
{
  std::string name;
  std::optional<marine::MarineScenario> marine;
  DiscreteProblem problem;
  double final_time = 1.0;
  GridKind grid = GridKind::Uniform;
  std::optional<VectorXd> constant_control;
  std::optional<ReferenceSpec> reference;
  int max_iterations = 2000;
  double constant_resolution = 0.25;
  double oracle_resolution = 0.01;
  VerifyOptions verify{};
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where)
{
  if (!j.is_object()) { throw ScenarioError(where + ": expected an object"); }
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) { throw ScenarioError(where + ": unknown key '" + key + "'"); }
  }
}

inline double get_number(const json& j, const char* key, const std::string& where)
{
  if (!j.contains(key)) { throw ScenarioError(where + ": missing '" + key + "'"); }
  if (!j.at(key).is_number()) { throw ScenarioError(where + "." + key + ": expected a number"); }
  const double v = j.at(key).get<double>();
  if (!std::isfinite(v)) { throw ScenarioError(where + "." + key + ": not finite"); }
  return v;
}

inline VectorXd get_vector(const json& j, const std::string& where)
{
  if (!j.is_array() || j.empty()) { throw ScenarioError(where + ": expected a non-empty array of numbers"); }
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) { throw ScenarioError(where + ": expected numbers"); }
    v(static_cast<Index>(i)) = j[i].get<double>();
    if (!std::isfinite(v(static_cast<Index>(i)))) { throw ScenarioError(where + ": not finite"); }
  }
  return v;
}

inline MatrixXd get_rows(const json& j, const std::string& where)
{
  if (!j.is_array() || j.empty()) { throw ScenarioError(where + ": expected a non-empty array of rows"); }
  const VectorXd first = get_vector(j[0], where);
  MatrixXd M(static_cast<Index>(j.size()), first.size());
  for (std::size_t r = 0; r < j.size(); ++r) {
    const VectorXd row = get_vector(j[r], where);
    if (row.size() != first.size()) { throw ScenarioError(where + ": ragged rows"); }
    M.row(static_cast<Index>(r)) = row.transpose();
  }
  return M;
}

inline DualIndexRule parse_rule(const std::string& s)
{
  if (s == "paper") { return DualIndexRule::PaperLiteral; }
  if (s == "zero") { return DualIndexRule::HomogeneousZero; }
  throw ScenarioError("dual index rule must be 'paper' or 'zero', got '" + s + "'");
}

inline XiMode parse_xi_mode(const std::string& s)
{
  if (s == "zero") { return XiMode::Zero; }
  if (s == "exact") { return XiMode::Exact; }
  throw ScenarioError("xi mode must be 'zero' or 'exact', got '" + s + "'");
}

inline std::string get_string(const json& j, const char* key, const std::string& where)
{
  if (!j.at(key).is_string()) { throw ScenarioError(where + "." + key + ": expected a string"); }
  return j.at(key).get<std::string>();
}

}  // namespace detail

using detail::parse_rule;
using detail::parse_xi_mode;

/// Validates and converts a scenario document. Directions are in degrees.
inline Scenario parse_scenario(const json& doc)
{
  using namespace detail;
  check_keys(doc, {"spec_version", "name", "marine", "polyhedron", "dynamics", "initial_state", "control_box", "cost",
                   "horizon", "controls", "reference", "solver", "tolerances", "modes"},
             "scenario");
  if (doc.contains("spec_version") && doc.at("spec_version") != kSpecVersion) {
    throw ScenarioError("scenario: unsupported spec_version");
  }
  Scenario sc;
  sc.name = doc.contains("name") ? get_string(doc, "name", "scenario") : "unnamed";
  if (doc.contains("marine") == doc.contains("polyhedron")) {
    throw ScenarioError("scenario: exactly one of 'marine' or 'polyhedron' is required");
  }
  if (!doc.contains("control_box")) { throw ScenarioError("scenario: missing 'control_box'"); }
  const json& cb = doc.at("control_box");
  check_keys(cb, {"lower", "upper"}, "control_box");
  if (!cb.contains("lower") || !cb.contains("upper")) { throw ScenarioError("control_box: needs lower and upper"); }
  try {
    sc.problem.control_box = ControlBox(get_vector(cb.at("lower"), "control_box.lower"),
                                        get_vector(cb.at("upper"), "control_box.upper"));
  } catch (const ScenarioError&) {
    throw;
  } catch (const Error& e) {
    throw ScenarioError(std::string("control_box: ") + e.what());
  }

  std::shared_ptr<const CostFunction> cost = std::make_shared<HalfSquaredNorm>();
  if (doc.contains("cost")) {
    const json& c = doc.at("cost");
    check_keys(c, {"type", "center"}, "cost");
    const std::string type = c.contains("type") ? get_string(c, "type", "cost") : "half_squared_norm";
    if (type == "half_squared_norm") {
      cost = c.contains("center") ? std::make_shared<HalfSquaredNorm>(get_vector(c.at("center"), "cost.center"))
                                  : std::make_shared<HalfSquaredNorm>();
    } else if (type == "euclidean_norm") {
      if (c.contains("center")) { throw ScenarioError("cost: euclidean_norm takes no center"); }
      cost = std::make_shared<EuclideanNormCost>();
    } else {
      throw ScenarioError("cost: unknown type '" + type + "'");
    }
  }
  sc.problem.cost = cost;

  if (doc.contains("marine")) {
    if (doc.contains("dynamics") || doc.contains("initial_state")) {
      throw ScenarioError("scenario: marine scenarios derive dynamics and initial state from the vehicles");
    }
    const json& m = doc.at("marine");
    check_keys(m, {"radii", "speeds", "directions_deg", "initial_positions"}, "marine");
    for (const char* key : {"radii", "speeds", "directions_deg", "initial_positions"}) {
      if (!m.contains(key)) { throw ScenarioError(std::string("marine: missing '") + key + "'"); }
    }
    marine::MarineScenario ms;
    const VectorXd R = get_vector(m.at("radii"), "marine.radii");
    const VectorXd S = get_vector(m.at("speeds"), "marine.speeds");
    const VectorXd D = get_vector(m.at("directions_deg"), "marine.directions_deg");
    const MatrixXd X = get_rows(m.at("initial_positions"), "marine.initial_positions");
    if (X.cols() != 2) { throw ScenarioError("marine.initial_positions: rows must be planar points"); }
    for (Index i = 0; i < R.size(); ++i) { ms.config.radii.push_back(R(i)); }
    for (Index i = 0; i < S.size(); ++i) { ms.config.speeds.push_back(S(i)); }
    for (Index i = 0; i < D.size(); ++i) { ms.config.directions.push_back(marine::degrees(D(i))); }
    for (Index i = 0; i < X.rows(); ++i) { ms.config.initial_positions.emplace_back(X(i, 0), X(i, 1)); }
    ms.control_box = sc.problem.control_box;
    ms.cost = cost;
    try {
      ms.validate();
      sc.problem.polyhedron = ms.polyhedron();
      sc.problem.perturbation = ms.dynamics();
      sc.problem.initial_state = ms.config.initial_state();
    } catch (const Error& e) {
      throw ScenarioError(std::string("marine: ") + e.what());
    }
    sc.marine = std::move(ms);
  } else {
    const json& p = doc.at("polyhedron");
    check_keys(p, {"normals", "offsets"}, "polyhedron");
    if (!p.contains("normals") || !p.contains("offsets")) { throw ScenarioError("polyhedron: needs normals and offsets"); }
    const MatrixXd N = get_rows(p.at("normals"), "polyhedron.normals");
    const VectorXd c = get_vector(p.at("offsets"), "polyhedron.offsets");
    if (N.rows() != c.size()) { throw ScenarioError("polyhedron: one offset per normal"); }
    if (!doc.contains("dynamics") || !doc.contains("initial_state")) {
      throw ScenarioError("scenario: polyhedral scenarios need 'dynamics' and 'initial_state'");
    }
    const json& dy = doc.at("dynamics");
    check_keys(dy, {"A", "B", "c"}, "dynamics");
    if (!dy.contains("A") || !dy.contains("B")) { throw ScenarioError("dynamics: needs A and B"); }
    const MatrixXd A = get_rows(dy.at("A"), "dynamics.A");
    const MatrixXd B = get_rows(dy.at("B"), "dynamics.B");
    const VectorXd c0 = dy.contains("c") ? get_vector(dy.at("c"), "dynamics.c") : VectorXd::Zero(A.rows());
    try {
      sc.problem.polyhedron = Polyhedron::from_columns(N.transpose(), c);
      sc.problem.perturbation = std::make_shared<AffinePerturbation>(A, B, c0, sc.problem.control_box.max_norm());
    } catch (const Error& e) {
      throw ScenarioError(std::string("polyhedron/dynamics: ") + e.what());
    }
    sc.problem.initial_state = get_vector(doc.at("initial_state"), "initial_state");
  }

  if (!doc.contains("horizon")) { throw ScenarioError("scenario: missing 'horizon'"); }
  const json& hz = doc.at("horizon");
  check_keys(hz, {"k", "T", "grid"}, "horizon");
  const double k = get_number(hz, "k", "horizon");
  if (k < 1 || k != std::floor(k) || k > 1e7) { throw ScenarioError("horizon.k: expected a positive integer"); }
  sc.problem.k = static_cast<std::size_t>(k);
  sc.final_time = get_number(hz, "T", "horizon");
  if (!(sc.final_time > 0.0)) { throw ScenarioError("horizon.T: must be positive"); }
  if (hz.contains("grid")) {
    const std::string g = get_string(hz, "grid", "horizon");
    if (g == "uniform") {
      sc.grid = GridKind::Uniform;
    } else if (g == "contact_aligned") {
      if (!sc.marine || sc.marine->config.n() != 2) {
        throw ScenarioError("horizon.grid: contact_aligned needs a two-vehicle marine scenario");
      }
      sc.grid = GridKind::ContactAligned;
    } else {
      throw ScenarioError("horizon.grid: expected 'uniform' or 'contact_aligned'");
    }
  }

  if (doc.contains("controls")) {
    const json& c = doc.at("controls");
    check_keys(c, {"constant"}, "controls");
    if (c.contains("constant")) { sc.constant_control = get_vector(c.at("constant"), "controls.constant"); }
  }
  if (doc.contains("reference")) {
    const json& r = doc.at("reference");
    check_keys(r, {"constant_control", "final_time"}, "reference");
    if (!sc.marine || sc.marine->config.n() != 2) {
      throw ScenarioError("reference: the analytic reference arc needs a two-vehicle marine scenario");
    }
    if (!r.contains("constant_control")) { throw ScenarioError("reference: missing 'constant_control'"); }
    ReferenceSpec ref;
    ref.control = get_vector(r.at("constant_control"), "reference.constant_control");
    ref.final_time = r.contains("final_time") ? get_number(r, "final_time", "reference") : 0.0;
    sc.reference = ref;
  }
  if (doc.contains("solver")) {
    const json& s = doc.at("solver");
    check_keys(s, {"max_iterations", "constant_resolution", "oracle_resolution"}, "solver");
    if (s.contains("max_iterations")) { sc.max_iterations = static_cast<int>(get_number(s, "max_iterations", "solver")); }
    if (s.contains("constant_resolution")) {
      sc.constant_resolution = get_number(s, "constant_resolution", "solver");
    }
    if (s.contains("oracle_resolution")) { sc.oracle_resolution = get_number(s, "oracle_resolution", "solver"); }
    if (sc.max_iterations < 0 || !(sc.constant_resolution > 0) || !(sc.oracle_resolution > 0)) {
      throw ScenarioError("solver: values must be positive");
    }
  }
  if (doc.contains("tolerances")) {
    const json& t = doc.at("tolerances");
    check_keys(t, {"certificate", "primal", "active", "nontriviality"}, "tolerances");
    if (t.contains("certificate")) { sc.verify.tolerance = get_number(t, "certificate", "tolerances"); }
    if (t.contains("primal")) { sc.verify.primal_tolerance = get_number(t, "primal", "tolerances"); }
    if (t.contains("active")) { sc.verify.active_tol = get_number(t, "active", "tolerances"); }
    if (t.contains("nontriviality")) {
      sc.verify.nontriviality_threshold = get_number(t, "nontriviality", "tolerances");
    }
  }
  if (doc.contains("modes")) {
    const json& m = doc.at("modes");
    check_keys(m, {"dual_index_rule", "xi_mode"}, "modes");
    if (m.contains("dual_index_rule")) { sc.verify.rule = parse_rule(get_string(m, "dual_index_rule", "modes")); }
    if (m.contains("xi_mode")) { sc.verify.xi_mode = parse_xi_mode(get_string(m, "xi_mode", "modes")); }
  }

  try {
    sc.problem.validate();
  } catch (const Error& e) {
    throw ScenarioError(std::string("scenario: ") + e.what());
  }
  if (sc.constant_control && sc.constant_control->size() != sc.problem.control_box.dim()) {
    throw ScenarioError("controls.constant: dimension mismatch");
  }
  if (sc.reference && sc.reference->control.size() != sc.problem.control_box.dim()) {
    throw ScenarioError("reference.constant_control: dimension mismatch");
  }
  if (sc.verify.xi_mode == XiMode::Exact && !sc.reference) {
    throw ScenarioError("modes.xi_mode: 'exact' needs a reference");
  }
  return sc;
}

inline Scenario load_scenario(const std::string& path)
{
  std::ifstream in(path);
  if (!in) { throw ScenarioError("cannot open scenario file " + path); }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ScenarioError("scenario " + path + ": " + e.what());
  }
  return parse_scenario(doc);
}

/// The built-in two-vehicle scenario as a document. T is the closed-form
/// terminal time of the listed control.
inline json two_vehicle_scenario_json()
{
  const marine::MarineScenario s = marine::paper_scenario();
  const VectorXd u = Eigen::Vector2d(1.67547, 0.49999);
  const double T = marine::analytic_two_phase(s, u).terminal_time;
  return json{{"spec_version", kSpecVersion},
              {"name", "two-vehicle marine model"},
              {"marine",
               {{"radii", {3.5, 3.5}},
                {"speeds", {1.0, 1.0}},
                {"directions_deg", {45.0, 45.0}},
                {"initial_positions", {{-25.0, -25.0}, {-15.0, -15.0}}}}},
              {"control_box", {{"lower", {-2.0, -2.0}}, {"upper", {2.0, 2.0}}}},
              {"cost", {{"type", "half_squared_norm"}}},
              {"horizon", {{"k", 2600}, {"T", T}, {"grid", "uniform"}}},
              {"controls", {{"constant", {1.67547, 0.49999}}}},
              {"modes", {{"dual_index_rule", "paper"}, {"xi_mode", "zero"}}}};
}

/// Reference arc of a scenario (analytic two-phase arc), if declared. A zero
/// final time selects the arc's own terminal time.
inline std::optional<ControlledArc> reference_arc(const Scenario& sc)
{
  if (!sc.reference) { return std::nullopt; }
  const marine::TwoPhase tp = marine::analytic_two_phase(*sc.marine, sc.reference->control);
  const double T = sc.reference->final_time > 0.0 ? sc.reference->final_time : tp.terminal_time;
  return marine::two_phase_arc(*sc.marine, sc.reference->control, T);
}

/// Grid of k steps on [0, T]; the contact-aligned grid puts the analytic
/// contact time on a node: that of the reference control if one is declared,
/// else that of constant control u.
inline Grid make_grid(const Scenario& sc, const VectorXd& u, double T, std::size_t k)
{
  if (sc.grid == GridKind::ContactAligned) {
    const marine::TwoPhase tp = marine::analytic_two_phase(*sc.marine, sc.reference ? sc.reference->control : u);
    if (tp.closing && tp.contact_time > 0.0 && tp.contact_time < T && k >= 2) {
      auto k1 = static_cast<std::size_t>(std::llround(static_cast<double>(k) * tp.contact_time / T));
      k1 = std::clamp<std::size_t>(k1, 1, k - 1);
      return Grid::two_segment(tp.contact_time, k1, T, k - k1);
    }
  }
  return Grid::uniform(T, k);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// t,x0..x{n-1},V0..V{n-1},eta0..eta{s-1}; the terminal row carries zero
/// velocity and multipliers (the arc is held constant beyond T).
inline std::string trajectory_csv(const Trajectory& tr, Index faces)
{
  std::ostringstream os;
  const Index n = tr.dim();
  os << "t";
  for (Index c = 0; c < n; ++c) { os << ",x" << c; }
  for (Index c = 0; c < n; ++c) { os << ",V" << c; }
  for (Index j = 0; j < faces; ++j) { os << ",eta" << j; }
  os << "\n";
  for (std::size_t i = 0; i <= tr.steps(); ++i) {
    os << format_double(tr.grid().node(i));
    const bool last = i == tr.steps();
    for (Index c = 0; c < n; ++c) { os << "," << format_double(tr.state(i)(c)); }
    for (Index c = 0; c < n; ++c) { os << "," << format_double(last ? 0.0 : tr.velocity(i)(c)); }
    for (Index j = 0; j < faces; ++j) { os << "," << format_double(last ? 0.0 : tr.eta(i)(j)); }
    os << "\n";
  }
  return os.str();
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep = ',')
{
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) { out.push_back(cell); }
  if (!line.empty() && line.back() == sep) { out.emplace_back(); }
  return out;
}

inline double parse_cell(const std::string& s, std::size_t row)
{
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) { throw std::invalid_argument(s); }
    return v;
  } catch (const std::exception&) {
    throw FormatError("row " + std::to_string(row) + ": bad number '" + s + "'");
  }
}

inline std::vector<std::vector<double>> read_table(std::istream& in, std::vector<std::string>& header)
{
  std::string line;
  if (!std::getline(in, line)) { throw FormatError("empty file"); }
  if (!line.empty() && line.back() == '\r') { line.pop_back(); }
  header = split(line);
  std::vector<std::vector<double>> rows;
  std::size_t r = 1;
  while (std::getline(in, line)) {
    ++r;
    if (!line.empty() && line.back() == '\r') { line.pop_back(); }
    if (line.empty()) { continue; }
    const auto cells = split(line);
    if (cells.size() != header.size()) { throw FormatError("row " + std::to_string(r) + ": wrong column count"); }
    std::vector<double> row;
    for (const auto& c : cells) { row.push_back(parse_cell(c, r)); }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

inline Trajectory read_trajectory_csv(std::istream& in)
{
  std::vector<std::string> header;
  const auto rows = detail::read_table(in, header);
  Index n = 0, s = 0;
  if (header.empty() || header[0] != "t") { throw FormatError("trajectory: first column must be t"); }
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c] == "x" + std::to_string(n)) {
      ++n;
    } else if (header[c].rfind("eta", 0) == 0) {
      ++s;
    }
  }
  if (n == 0 || header.size() != static_cast<std::size_t>(1 + 2 * n + s)) { throw FormatError("trajectory: bad header"); }
  for (Index c = 0; c < n; ++c) {
    if (header[static_cast<std::size_t>(1 + n + c)] != "V" + std::to_string(c)) { throw FormatError("trajectory: bad header"); }
  }
  if (rows.size() < 2) { throw FormatError("trajectory: need at least two rows"); }
  if (rows.front()[0] != 0.0) { throw FormatError("trajectory: time must start at 0"); }
  std::vector<double> steps;
  std::vector<VectorXd> states, V, eta;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    states.push_back(Eigen::Map<const VectorXd>(r.data() + 1, n));
    if (i + 1 < rows.size()) {
      const double h = rows[i + 1][0] - r[0];
      if (!(h > 0.0)) { throw FormatError("trajectory: times must increase"); }
      steps.push_back(h);
      V.push_back(Eigen::Map<const VectorXd>(r.data() + 1 + n, n));
      eta.push_back(Eigen::Map<const VectorXd>(r.data() + 1 + 2 * n, s));
    }
  }
  return Trajectory(Grid(rows.back()[0], std::move(steps)), std::move(states), std::move(V), std::move(eta));
}

inline std::string controls_csv(const ControlSignal& ctrl)
{
  std::ostringstream os;
  const Index d = ctrl.values.front().size();
  for (Index c = 0; c < d; ++c) { os << (c ? "," : "") << "u" << c; }
  os << "\n";
  for (const auto& u : ctrl.values) {
    for (Index c = 0; c < d; ++c) { os << (c ? "," : "") << format_double(u(c)); }
    os << "\n";
  }
  return os.str();
}

inline ControlSignal read_controls_csv(std::istream& in)
{
  std::vector<std::string> header;
  const auto rows = detail::read_table(in, header);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] != "u" + std::to_string(c)) { throw FormatError("controls: header must be u0,u1,..."); }
  }
  if (rows.empty()) { throw FormatError("controls: no rows"); }
  ControlSignal ctrl;
  for (const auto& r : rows) { ctrl.values.push_back(Eigen::Map<const VectorXd>(r.data(), static_cast<Index>(r.size()))); }
  return ctrl;
}

// ---------------------------------------------------------------------------
// JSON reports
// ---------------------------------------------------------------------------

inline json to_json(const Multipliers& m)
{
  return json{{"spec_version", kSpecVersion}, {"mu0", number(m.mu0)}, {"p", vectors_json(m.p)},
              {"q", vectors_json(m.q)},       {"eta", vectors_json(m.eta)}, {"gamma", vectors_json(m.gamma)}};
}

inline Multipliers multipliers_from_json(const json& j)
{
  try {
    detail::check_keys(j, {"spec_version", "mu0", "p", "q", "eta", "gamma"}, "multipliers");
  } catch (const ScenarioError& e) {
    throw FormatError(e.what());
  }
  auto list = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_array()) { throw FormatError(std::string("multipliers: missing '") + key + "'"); }
    std::vector<VectorXd> out;
    for (const auto& row : j.at(key)) {
      if (!row.is_array()) { throw FormatError(std::string("multipliers.") + key + ": expected arrays"); }
      VectorXd v(static_cast<Index>(row.size()));
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (!row[i].is_number()) { throw FormatError(std::string("multipliers.") + key + ": expected numbers"); }
        v(static_cast<Index>(i)) = row[i].get<double>();
      }
      out.push_back(std::move(v));
    }
    return out;
  };
  if (!j.contains("mu0") || !j.at("mu0").is_number()) { throw FormatError("multipliers: missing 'mu0'"); }
  Multipliers m;
  m.mu0 = j.at("mu0").get<double>();
  m.p = list("p");
  m.q = list("q");
  m.eta = list("eta");
  m.gamma = list("gamma");
  return m;
}

inline json to_json(const ConditionRecord& r)
{
  json details = json::array();
  for (const auto& d : r.details) {
    json e{{"i", d.i}, {"residual", number(d.residual)}};
    if (d.j >= 0) { e["j"] = d.j; }
    details.push_back(std::move(e));
  }
  return json{{"id", r.id},         {"value", number(r.value)}, {"tolerance", number(r.tolerance)},
              {"pass", r.pass},     {"checked", r.checked},     {"note", r.note},
              {"details", details}};
}

inline json to_json(const VerificationReport& rep)
{
  json recs = json::array();
  for (const auto& r : rep.records) { recs.push_back(to_json(r)); }
  return json{{"dual_index_rule", to_string(rep.rule)},
              {"xi_mode", to_string(rep.xi_mode)},
              {"hbar", number(rep.hbar)},
              {"rho", number(rep.rho)},
              {"reference_time", number(rep.reference_time)},
              {"overall", rep.overall},
              {"conditions", recs}};
}

inline json to_json(const FeasibilityReport& rep)
{
  json items = json::array();
  for (const auto& r : rep.items) {
    items.push_back(json{{"name", r.name},
                         {"residual", number(r.residual)},
                         {"tolerance", number(r.tolerance)},
                         {"pass", r.pass},
                         {"note", r.note}});
  }
  return json{{"all_pass", rep.all_pass()}, {"items", items}};
}

/// Solution summary: final time, controls (constant controls collapse to
/// one vector), terminal state and cost.
inline json solution_json(const Trajectory& tr, const ControlSignal& ctrl, const DiscreteProblem& prob)
{
  const CostBreakdown cb = cost_breakdown(tr, ctrl, prob);
  bool constant = true;
  for (const auto& u : ctrl.values) { constant = constant && u == ctrl.values.front(); }
  json j{{"k", tr.steps()},
         {"final_time", number(tr.final_time())},
         {"terminal_state", vector_json(tr.terminal_state())},
         {"terminal_cost", number(cb.terminal)},
         {"cost_Jk", number(cb.total())}};
  if (constant) {
    j["constant_control"] = vector_json(ctrl.values.front());
  } else {
    j["controls"] = vectors_json(ctrl.values);
  }
  return j;
}

inline json run_report(const std::string& command, const Scenario& sc)
{
  return json{{"spec_version", kSpecVersion}, {"command", command}, {"scenario", sc.name}, {"k", sc.problem.k}};
}

inline void write_text(const std::string& path, const std::string& text)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) { throw Error("cannot write " + path); }
  out << text;
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace sweepctl::io
