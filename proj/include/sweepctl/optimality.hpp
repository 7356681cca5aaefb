#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "bvls.hpp"
#include "discrete_ocp.hpp"

namespace sweepctl {

/// How the xi terms and rho enter the conditions: zero ("convergence mode")
/// or computed exactly against the reference arc.
enum class XiMode { Zero, Exact };

inline const char* to_string(XiMode m) { return m == XiMode::Zero ? "zero" : "exact"; }

/// Dual bundle (mu0, p, q, eta, gamma) of a discrete arc with k steps.
/// eta_0 .. eta_{k-1} represent the primal arc; eta_k enters transversality.
struct Multipliers
{
  double mu0 = 0.0;
  std::vector<VectorXd> p;      ///< p_0 .. p_k
  std::vector<VectorXd> q;      ///< q_0 .. q_{k-1}
  std::vector<VectorXd> eta;    ///< eta_0 .. eta_k
  std::vector<VectorXd> gamma;  ///< gamma_0 .. gamma_{k-1}

  static Multipliers zeros(std::size_t k, Index n, Index d, Index s)
  {
    Multipliers m;
    m.p.assign(k + 1, VectorXd::Zero(n));
    m.q.assign(k, VectorXd::Zero(d));
    m.eta.assign(k + 1, VectorXd::Zero(s));
    m.gamma.assign(k, VectorXd::Zero(s));
    return m;
  }

  std::size_t steps() const noexcept { return q.size(); }

  void validate(std::size_t k, Index n, Index d, Index s) const
  {
    auto dims = [](const std::vector<VectorXd>& v, std::size_t count, Index dim) {
      return v.size() == count && std::all_of(v.begin(), v.end(), [dim](const VectorXd& x) { return x.size() == dim; });
    };
    if (!dims(p, k + 1, n) || !dims(q, k, d) || !dims(eta, k + 1, s) || !dims(gamma, k, s)) {
      throw DimensionError("multipliers: lengths do not match the trajectory");
    }
    if (!(mu0 >= 0.0) || !std::isfinite(mu0)) { throw Error("multipliers: mu0 must be finite and nonnegative"); }
  }

  /// Scales the dual part (mu0, p, q, gamma, eta_k). eta_0 .. eta_{k-1} are
  /// fixed by the arc velocities and stay as they are.
  Multipliers scaled(double lambda) const
  {
    Multipliers m = *this;
    m.mu0 *= lambda;
    for (auto& v : m.p) { v *= lambda; }
    for (auto& v : m.q) { v *= lambda; }
    for (auto& v : m.gamma) { v *= lambda; }
    if (!m.eta.empty()) { m.eta.back() *= lambda; }
    return m;
  }
};

struct IndexDetail
{
  std::size_t i = 0;
  Index j = -1;  ///< face, or -1 when the record is per step only
  double residual = 0.0;
};

struct ConditionRecord
{
  std::string id;
  double value = 0.0;  ///< max residual (nontriviality: the norm sum)
  double tolerance = 0.0;
  bool pass = true;
  bool checked = true;
  std::string note;
  std::vector<IndexDetail> details;  ///< worst offenders, largest first
};

struct VerifyOptions
{
  double tolerance = 1e-6;               ///< dual residuals
  double primal_tolerance = 1e-6;        ///< primal arc representation
  double nontriviality_threshold = 1e-8;
  double active_tol = 1e-7;              ///< state faces
  double control_active_tol = 1e-9;      ///< box bounds
  double index_tol = 1e-9;               ///< dual index sets I_0 / I_>
  double support_tol = 1e-12;            ///< eta_ij counted as positive above this
  DualIndexRule rule = DualIndexRule::PaperLiteral;
  XiMode xi_mode = XiMode::Zero;
  std::size_t max_details = 8;
};

struct VerificationReport
{
  std::vector<ConditionRecord> records;
  DualIndexRule rule = DualIndexRule::PaperLiteral;
  XiMode xi_mode = XiMode::Zero;
  double hbar = 0.0;
  double rho = 0.0;
  double reference_time = 0.0;
  bool overall = false;

  const ConditionRecord& record(const std::string& id) const
  {
    for (const auto& r : records) {
      if (r.id == id) { return r; }
    }
    throw Error("verification report has no record " + id);
  }

  double worst_residual() const
  {
    double w = 0.0;
    for (const auto& r : records) {
      if (!r.pass && r.id.find("nontriviality") == std::string::npos) { w = std::max(w, r.value); }
    }
    return w;
  }

  /// Pass flags in record order.
  std::vector<bool> verdicts() const
  {
    std::vector<bool> v;
    for (const auto& r : records) { v.push_back(r.pass); }
    return v;
  }
};

namespace detail {

/// Collects residuals and keeps the worst few.
class Tally
{
public:
  Tally(std::string id, double tol, std::size_t keep) : keep_(keep)
  {
    rec_.id = std::move(id);
    rec_.tolerance = tol;
  }

  void add(std::size_t i, Index j, double r)
  {
    if (std::isnan(r)) { r = std::numeric_limits<double>::infinity(); }
    rec_.value = std::max(rec_.value, r);
    if (r > rec_.tolerance) {
      ++violations_;
      rec_.details.push_back({i, j, r});
      std::sort(rec_.details.begin(), rec_.details.end(),
                [](const IndexDetail& a, const IndexDetail& b) { return a.residual > b.residual; });
      if (rec_.details.size() > keep_) { rec_.details.pop_back(); }
    }
  }

  ConditionRecord finish(std::string note = {})
  {
    rec_.pass = rec_.value <= rec_.tolerance;
    if (violations_ > 0) { note += (note.empty() ? "" : "; ") + std::to_string(violations_) + " violation(s)"; }
    rec_.note = std::move(note);
    return std::move(rec_);
  }

private:
  ConditionRecord rec_;
  std::size_t keep_;
  std::size_t violations_ = 0;
};

inline VectorXd adjoint_argument(const Multipliers& m, const std::vector<XiTerm>& xi, const Trajectory& traj,
                                 std::size_t i)
{
  return -m.mu0 * xi[i].y / traj.grid().step(i) + m.p[i + 1];
}

inline bool strictly_inactive(const Polyhedron& P, const VectorXd& x, Index j, double tol)
{
  return P.normals().col(j).dot(x) < P.offsets()(j) - tol;
}

/// Endpoint whose active set best represents step i with the given eta_i.
struct StepLabel
{
  ArcEndpoint endpoint = ArcEndpoint::Left;
  ActiveSet active;
  double residual = 0.0;
};

inline StepLabel label_step(const Polyhedron& P, const PerturbationMap& g, const Trajectory& traj,
                            const ControlSignal& ctrl, const VectorXd& eta, std::size_t i, double active_tol)
{
  const VectorXd target = g.value(traj.state(i), ctrl[i]) - traj.velocity(i);
  auto residual = [&](const ActiveSet& a) {
    VectorXd r = target;
    for (Index j : a.indices()) { r -= eta(j) * P.normals().col(j); }
    return r.norm();
  };
  StepLabel left{ArcEndpoint::Left, active_set_unchecked(P, traj.state(i), active_tol), 0.0};
  left.residual = residual(left.active);
  if (left.residual == 0.0) { return left; }
  StepLabel right{ArcEndpoint::Right, active_set_unchecked(P, traj.state(i + 1), active_tol), 0.0};
  right.residual = residual(right.active);
  return right.residual < left.residual ? right : left;
}

inline void check_lengths(const Trajectory& traj, const ControlSignal& ctrl, const Multipliers& m, const Polyhedron& P,
                          Index d)
{
  if (ctrl.size() != traj.steps()) { throw DimensionError("optimality: control count mismatch"); }
  m.validate(traj.steps(), traj.dim(), d, P.face_count());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Individual conditions
// ---------------------------------------------------------------------------

/// mu0 + ||eta_k|| + sum_{i<k} ||p_i|| + ||q|| (general) or
/// mu0 + ||eta_k|| + ||p_0|| + ||q|| (enhanced); passes at or above threshold.
inline ConditionRecord check_nontriviality(const Multipliers& m, bool enhanced, double threshold = 1e-8)
{
  double qn = 0.0;
  for (const auto& v : m.q) { qn += v.squaredNorm(); }
  double value = m.mu0 + (m.eta.empty() ? 0.0 : m.eta.back().norm()) + std::sqrt(qn);
  if (enhanced) {
    value += m.p.empty() ? 0.0 : m.p.front().norm();
  } else {
    for (std::size_t i = 0; i + 1 < m.p.size(); ++i) { value += m.p[i].norm(); }
  }
  ConditionRecord r;
  r.id = enhanced ? "enhanced_nontriviality" : "nontriviality";
  r.value = value;
  r.tolerance = threshold;
  r.pass = value >= threshold;
  r.note = "value must be at least the threshold";
  return r;
}

/// Residual of -(x_{i+1} - x_i)/h_i + g(x_i,u_i) - sum eta_ij x*_j, the sum
/// over the active set of the endpoint that represents the step.
inline ConditionRecord check_primal_representation(const Trajectory& traj, const Multipliers& m, const Polyhedron& P,
                                                   const PerturbationMap& g, const ControlSignal& ctrl,
                                                   const VerifyOptions& opt = {})
{
  detail::check_lengths(traj, ctrl, m, P, g.control_dim());
  detail::Tally t("primal_representation", opt.primal_tolerance, opt.max_details);
  std::size_t right = 0;
  for (std::size_t i = 0; i < traj.steps(); ++i) {
    const detail::StepLabel lab = detail::label_step(P, g, traj, ctrl, m.eta[i], i, opt.active_tol);
    if (lab.endpoint == ArcEndpoint::Right) { ++right; }
    t.add(i, -1, lab.residual);
  }
  return t.finish(std::to_string(right) + " step(s) represented with the active set of x_{i+1}");
}

/// Residual of (p_{i+1}-p_i)/h_i + grad_x g^T y_i - sum_{j in I_0 u I_>} gamma_ij x*_j
/// with y_i = -mu0 xi_iy/h_i + p_{i+1}.
inline ConditionRecord check_adjoint_dynamics(const Trajectory& traj, const Multipliers& m, const Polyhedron& P,
                                              const PerturbationMap& g, const ControlSignal& ctrl,
                                              const std::vector<XiTerm>& xi, const VerifyOptions& opt = {})
{
  detail::check_lengths(traj, ctrl, m, P, g.control_dim());
  if (xi.size() != traj.steps()) { throw DimensionError("check_adjoint_dynamics: xi length"); }
  detail::Tally t("adjoint_dynamics", opt.tolerance, opt.max_details);
  for (std::size_t i = 0; i < traj.steps(); ++i) {
    const double h = traj.grid().step(i);
    const VectorXd y = detail::adjoint_argument(m, xi, traj, i);
    const DualIndexSets I = dual_index_sets(P, y, opt.index_tol, opt.rule);
    VectorXd r = (m.p[i + 1] - m.p[i]) / h + g.jacobian_x(traj.state(i), ctrl[i]).transpose() * y;
    for (Index j = 0; j < P.face_count(); ++j) {
      if (I.in_union(j)) { r -= m.gamma[i](j) * P.normals().col(j); }
    }
    t.add(i, -1, r.norm());
  }
  return t.finish();
}

/// Terminal inclusion: x-component in full-sum and active-sum form, and the
/// time component. Nonsmooth costs are reported as not checked.
inline std::vector<ConditionRecord> check_transversality(const Trajectory& traj, const Multipliers& m,
                                                         const Polyhedron& P, const CostFunction& cost, double hbar_value,
                                                         double rho, double Tbar, const VerifyOptions& opt = {})
{
  const std::size_t k = traj.steps();
  if (m.p.size() != k + 1 || m.eta.size() != k + 1) { throw DimensionError("check_transversality: lengths"); }
  const VectorXd& xk = traj.terminal_state();
  const double Tk = traj.final_time();
  std::vector<ConditionRecord> out;
  if (!cost.smooth()) {
    for (const char* id : {"transversality_x", "transversality_x_active", "transversality_T"}) {
      ConditionRecord r;
      r.id = id;
      r.tolerance = opt.tolerance;
      r.pass = false;
      r.checked = false;
      r.value = std::numeric_limits<double>::quiet_NaN();
      r.note = "not checked (nonsmooth cost " + cost.name() + ")";
      out.push_back(std::move(r));
    }
    return out;
  }
  const VectorXd grad = cost.gradient_x(xk, Tk);
  VectorXd full = -m.p[k] - m.mu0 * grad;
  VectorXd act = full;
  for (Index j = 0; j < P.face_count(); ++j) {
    full -= m.eta[k](j) * P.normals().col(j);
    if (!detail::strictly_inactive(P, xk, j, opt.active_tol)) { act -= m.eta[k](j) * P.normals().col(j); }
  }
  detail::Tally a("transversality_x", opt.tolerance, opt.max_details);
  a.add(k, -1, full.norm());
  out.push_back(a.finish());
  detail::Tally b("transversality_x_active", opt.tolerance, opt.max_details);
  b.add(k, -1, act.norm());
  out.push_back(b.finish("sum restricted to faces active at x_k"));
  const double tr = hbar_value + 2.0 * m.mu0 * (Tbar - Tk) + m.mu0 * rho - m.mu0 * cost.derivative_T(xk, Tk);
  detail::Tally c("transversality_T", opt.tolerance, opt.max_details);
  c.add(k, -1, std::abs(tr));
  out.push_back(c.finish());
  return out;
}

/// (a) -mu0 xi_iu/h_i - q_i/h_i + grad_u g^T y_i = 0 and (b) q_i in N(u_i; U).
inline std::vector<ConditionRecord> check_maximum_principle(const Trajectory& traj, const Multipliers& m,
                                                            const Polyhedron& P, const PerturbationMap& g,
                                                            const ControlSignal& ctrl, const ControlBox& box,
                                                            const std::vector<XiTerm>& xi, const VerifyOptions& opt = {})
{
  detail::check_lengths(traj, ctrl, m, P, g.control_dim());
  detail::Tally eq("maximum_principle", opt.tolerance, opt.max_details);
  detail::Tally cone("control_normal_cone", opt.tolerance, opt.max_details);
  for (std::size_t i = 0; i < traj.steps(); ++i) {
    const double h = traj.grid().step(i);
    const VectorXd y = detail::adjoint_argument(m, xi, traj, i);
    const VectorXd r = -m.mu0 * xi[i].u / h - m.q[i] / h + g.jacobian_u(traj.state(i), ctrl[i]).transpose() * y;
    eq.add(i, -1, r.norm());
    cone.add(i, -1, box.normal_cone_violation(ctrl[i], m.q[i], opt.control_active_tol));
  }
  return {eq.finish(), cone.finish()};
}

/// The complementarity implications, one record each.
inline std::vector<ConditionRecord> check_complementarity(const Trajectory& traj, const Multipliers& m,
                                                          const Polyhedron& P, const PerturbationMap& g,
                                                          const ControlSignal& ctrl, const std::vector<XiTerm>& xi,
                                                          const VerifyOptions& opt = {})
{
  detail::check_lengths(traj, ctrl, m, P, g.control_dim());
  const std::size_t k = traj.steps();
  const double tol = opt.tolerance;
  detail::Tally eta_inactive("cs_eta_inactive", opt.primal_tolerance, opt.max_details);
  detail::Tally gamma_sign("cs_gamma_nonnegative", tol, opt.max_details);
  detail::Tally gamma_support("cs_gamma_index_support", tol, opt.max_details);
  detail::Tally gamma_inactive("cs_gamma_inactive", tol, opt.max_details);
  detail::Tally eta_terminal("cs_eta_terminal", tol, opt.max_details);
  detail::Tally ortho("cs_orthogonality", tol, opt.max_details);
  std::size_t dependent = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const detail::StepLabel lab = detail::label_step(P, g, traj, ctrl, m.eta[i], i, opt.active_tol);
    const VectorXd& xe = lab.endpoint == ArcEndpoint::Left ? traj.state(i) : traj.state(i + 1);
    const VectorXd y = detail::adjoint_argument(m, xi, traj, i);
    const DualIndexSets I = dual_index_sets(P, y, opt.index_tol, opt.rule);
    const bool independent = linearly_independent(P, lab.active);
    if (!independent) { ++dependent; }
    for (Index j = 0; j < P.face_count(); ++j) {
      const double e = m.eta[i](j);
      const double gm = m.gamma[i](j);
      eta_inactive.add(i, j, detail::strictly_inactive(P, xe, j, opt.active_tol) ? std::abs(e) : 0.0);
      gamma_sign.add(i, j, I.greater.contains(j) ? std::max(0.0, -gm) : 0.0);
      gamma_support.add(i, j, I.in_union(j) ? 0.0 : std::abs(gm));
      gamma_inactive.add(i, j, detail::strictly_inactive(P, traj.state(i), j, opt.active_tol) ? std::abs(gm) : 0.0);
      ortho.add(i, j, independent && e > opt.support_tol ? std::abs(P.normals().col(j).dot(y)) : 0.0);
    }
  }
  for (Index j = 0; j < P.face_count(); ++j) {
    eta_terminal.add(k, j,
                     detail::strictly_inactive(P, traj.terminal_state(), j, opt.active_tol) ? std::abs(m.eta[k](j)) : 0.0);
  }
  std::string onote =
      dependent == 0 ? std::string{} : std::to_string(dependent) + " step(s) skipped: active generators dependent";
  return {eta_inactive.finish(), gamma_sign.finish(), gamma_support.finish(), gamma_inactive.finish(),
          eta_terminal.finish(), ortho.finish(onote)};
}

/// mu0 >= 0 and eta >= 0.
inline ConditionRecord check_signs(const Multipliers& m, const VerifyOptions& opt = {})
{
  detail::Tally t("sign_constraints", opt.tolerance, opt.max_details);
  t.add(0, -1, std::max(0.0, -m.mu0));
  for (std::size_t i = 0; i < m.eta.size(); ++i) {
    for (Index j = 0; j < m.eta[i].size(); ++j) { t.add(i, j, std::max(0.0, -m.eta[i](j))); }
  }
  return t.finish();
}

// ---------------------------------------------------------------------------
// Aggregate verification
// ---------------------------------------------------------------------------

/// xi terms, rho and the reference time used by the conditions.
struct ConditionInputs
{
  std::vector<XiTerm> xi;
  double rho = 0.0;
  double Tbar = 0.0;
};

inline ConditionInputs condition_inputs(const Trajectory& traj, const ControlSignal& ctrl, const DiscreteProblem& prob,
                                    XiMode mode)
{
  ConditionInputs in;
  in.Tbar = prob.reference ? prob.reference->final_time() : traj.final_time();
  if (mode == XiMode::Exact) {
    if (!prob.reference) { throw Error("exact xi mode needs a reference arc"); }
    in.xi = xi_terms(traj, ctrl, *prob.reference);
    in.rho = rho_term(traj, ctrl, *prob.reference);
  } else {
    in.xi = zero_xi(traj.steps(), traj.dim(), prob.control_box.dim());
  }
  return in;
}

/// True when grad_u g has full rank at every step.
inline bool control_jacobian_full_rank(const Trajectory& traj, const ControlSignal& ctrl, const PerturbationMap& g)
{
  for (std::size_t i = 0; i < traj.steps(); ++i) {
    const MatrixXd B = g.jacobian_u(traj.state(i), ctrl[i]);
    Eigen::ColPivHouseholderQR<MatrixXd> qr(B);
    qr.setThreshold(1e-10);
    if (qr.rank() < std::min(B.rows(), B.cols())) { return false; }
  }
  return true;
}

inline VerificationReport verify_all(const Trajectory& traj, const ControlSignal& ctrl, const Multipliers& m,
                                     const DiscreteProblem& prob, const VerifyOptions& opt = {})
{
  const Polyhedron& P = prob.polyhedron;
  const PerturbationMap& g = *prob.perturbation;
  detail::check_lengths(traj, ctrl, m, P, g.control_dim());
  const ConditionInputs in = condition_inputs(traj, ctrl, prob, opt.xi_mode);

  VerificationReport rep;
  rep.rule = opt.rule;
  rep.xi_mode = opt.xi_mode;
  rep.rho = in.rho;
  rep.reference_time = in.Tbar;
  rep.hbar = hbar(traj, m.p);

  rep.records.push_back(check_nontriviality(m, false, opt.nontriviality_threshold));
  ConditionRecord enh = check_nontriviality(m, true, opt.nontriviality_threshold);
  if (!control_jacobian_full_rank(traj, ctrl, g)) {
    enh.pass = true;
    enh.note = "not required: grad_u g is rank deficient at some step";
  }
  rep.records.push_back(std::move(enh));
  rep.records.push_back(check_signs(m, opt));
  rep.records.push_back(check_primal_representation(traj, m, P, g, ctrl, opt));
  rep.records.push_back(check_adjoint_dynamics(traj, m, P, g, ctrl, in.xi, opt));
  for (auto& r : check_transversality(traj, m, P, *prob.cost, rep.hbar, in.rho, in.Tbar, opt)) {
    rep.records.push_back(std::move(r));
  }
  for (auto& r : check_maximum_principle(traj, m, P, g, ctrl, prob.control_box, in.xi, opt)) {
    rep.records.push_back(std::move(r));
  }
  for (auto& r : check_complementarity(traj, m, P, g, ctrl, in.xi, opt)) { rep.records.push_back(std::move(r)); }
  rep.overall = std::all_of(rep.records.begin(), rep.records.end(), [](const ConditionRecord& r) { return r.pass; });
  return rep;
}

inline VerificationReport verify_all(const DiscreteSolution& sol, const Multipliers& m, const DiscreteProblem& prob,
                                     const VerifyOptions& opt = {})
{
  return verify_all(sol.trajectory, sol.controls, m, prob, opt);
}

// ---------------------------------------------------------------------------
// Recovery
// ---------------------------------------------------------------------------

struct RecoveryResult
{
  bool found = false;
  std::string mode;  ///< "normal", "abnormal" or "none"
  Multipliers multipliers;
  VerificationReport report;
  double worst_residual = 0.0;
  double least_squares_residual = 0.0;
};

namespace detail {

/// Column bookkeeping of the recovery system.
struct RecoveryLayout
{
  std::size_t k = 0;
  Index n = 0;
  Index d = 0;
  Index s = 0;
  Index cols = 0;
  std::vector<std::vector<Index>> q_col;      ///< [i][c] or -1
  std::vector<std::vector<Index>> gamma_col;  ///< [i][j] or -1
  std::vector<Index> etak_col;                ///< [j] or -1
  Index s_base = 0;                           ///< S_0 .. S_{k-1}
  std::vector<double> lower, upper;

  Index p_col(std::size_t i, Index c) const { return static_cast<Index>(i) * n + c; }

  Index add(double lo, double hi)
  {
    lower.push_back(lo);
    upper.push_back(hi);
    return cols++;
  }
};

struct RecoverySetup
{
  const Trajectory* traj = nullptr;
  const ControlSignal* ctrl = nullptr;
  const DiscreteProblem* prob = nullptr;
  ConditionInputs in;
  std::vector<InclusionFit> fits;
  std::vector<MatrixXd> Gx, Gu;
  RecoveryLayout L;
};

inline RecoverySetup prepare_recovery(const Trajectory& traj, const ControlSignal& ctrl, const DiscreteProblem& prob,
                                      const VerifyOptions& opt)
{
  constexpr double inf = std::numeric_limits<double>::infinity();
  RecoverySetup S;
  S.traj = &traj;
  S.ctrl = &ctrl;
  S.prob = &prob;
  S.in = condition_inputs(traj, ctrl, prob, opt.xi_mode);
  const Polyhedron& P = prob.polyhedron;
  const PerturbationMap& g = *prob.perturbation;
  RecoveryLayout& L = S.L;
  L.k = traj.steps();
  L.n = traj.dim();
  L.d = g.control_dim();
  L.s = P.face_count();
  for (std::size_t i = 0; i <= L.k; ++i) {
    for (Index c = 0; c < L.n; ++c) { L.add(-inf, inf); }
  }
  const ControlBox& box = prob.control_box;
  L.q_col.assign(L.k, std::vector<Index>(static_cast<std::size_t>(L.d), -1));
  L.gamma_col.assign(L.k, std::vector<Index>(static_cast<std::size_t>(L.s), -1));
  for (std::size_t i = 0; i < L.k; ++i) {
    S.fits.push_back(fit_inclusion(P, g, traj, ctrl, i, opt.active_tol));
    S.Gx.push_back(g.jacobian_x(traj.state(i), ctrl[i]));
    S.Gu.push_back(g.jacobian_u(traj.state(i), ctrl[i]));
    const VectorXd& u = ctrl[i];
    for (Index c = 0; c < L.d; ++c) {
      const bool lo = u(c) <= box.lower(c) + opt.control_active_tol;
      const bool hi = u(c) >= box.upper(c) - opt.control_active_tol;
      if (lo && hi) {
        L.q_col[i][static_cast<std::size_t>(c)] = L.add(-inf, inf);
      } else if (lo) {
        L.q_col[i][static_cast<std::size_t>(c)] = L.add(-inf, 0.0);
      } else if (hi) {
        L.q_col[i][static_cast<std::size_t>(c)] = L.add(0.0, inf);
      }
    }
    // gamma is only admitted where the face is active at x_i and the
    // orthogonality condition pins <x*_j, y_i>, which fixes its index class.
    const ActiveSet endpoint_active = active_set_unchecked(
        P, S.fits[i].endpoint == ArcEndpoint::Left ? traj.state(i) : traj.state(i + 1), opt.active_tol);
    if (!linearly_independent(P, endpoint_active)) { continue; }
    for (Index j = 0; j < L.s; ++j) {
      if (strictly_inactive(P, traj.state(i), j, opt.active_tol)) { continue; }
      if (!(S.fits[i].decomposition.coefficients(j) > opt.support_tol)) { continue; }
      const double level = opt.rule == DualIndexRule::PaperLiteral ? -P.offsets()(j) : 0.0;
      if (level > opt.index_tol) {
        L.gamma_col[i][static_cast<std::size_t>(j)] = L.add(0.0, inf);  // I_>
      } else if (level >= -opt.index_tol) {
        L.gamma_col[i][static_cast<std::size_t>(j)] = L.add(-inf, inf);  // I_0
      }
    }
  }
  L.etak_col.assign(static_cast<std::size_t>(L.s), -1);
  for (Index j = 0; j < L.s; ++j) {
    if (!strictly_inactive(P, traj.terminal_state(), j, opt.active_tol)) { L.etak_col[static_cast<std::size_t>(j)] = L.add(0.0, inf); }
  }
  L.s_base = L.cols;
  for (std::size_t i = 0; i < L.k; ++i) { L.add(-inf, inf); }
  return S;
}

enum class Normalization { Normal, TerminalEta, AdjointStart };

/// Assembles and solves the bounded least-squares system; returns the raw
/// variable vector.
inline BoundedLsResult solve_recovery(const RecoverySetup& S, double mu0, Normalization norm, Index norm_index,
                                      double norm_sign)
{
  const RecoveryLayout& L = S.L;
  const Trajectory& traj = *S.traj;
  const DiscreteProblem& prob = *S.prob;
  const Polyhedron& P = prob.polyhedron;
  const CostFunction& cost = *prob.cost;
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> rhs;
  Index row = 0;
  auto put = [&](Index col, double v) {
    if (v != 0.0) { trip.emplace_back(row, col, v); }
  };
  auto end_row = [&](double b) {
    rhs.push_back(b);
    ++row;
  };

  for (std::size_t i = 0; i < L.k; ++i) {
    const double h = traj.grid().step(i);
    const XiTerm& xi = S.in.xi[i];
    // adjoint recurrence, multiplied by h
    const VectorXd ad_rhs = mu0 * S.Gx[i].transpose() * xi.y;
    for (Index r = 0; r < L.n; ++r) {
      put(L.p_col(i, r), -1.0);
      put(L.p_col(i + 1, r), 1.0);
      for (Index c = 0; c < L.n; ++c) { put(L.p_col(i + 1, c), h * S.Gx[i](c, r)); }
      for (Index j = 0; j < L.s; ++j) {
        const Index gc = L.gamma_col[i][static_cast<std::size_t>(j)];
        if (gc >= 0) { put(gc, -P.normals()(r, j)); }
      }
      end_row(ad_rhs(r));
    }
    // maximum principle, with q/h as unknown
    const VectorXd mp_rhs = mu0 * xi.u / h + mu0 * S.Gu[i].transpose() * xi.y / h;
    for (Index c = 0; c < L.d; ++c) {
      for (Index r = 0; r < L.n; ++r) { put(L.p_col(i + 1, r), S.Gu[i](r, c)); }
      const Index qc = L.q_col[i][static_cast<std::size_t>(c)];
      if (qc >= 0) { put(qc, -1.0); }
      end_row(mp_rhs(c));
    }
    // orthogonality where eta_ij > 0 with independent generators
    for (Index j = 0; j < L.s; ++j) {
      if (L.gamma_col[i][static_cast<std::size_t>(j)] < 0) { continue; }
      for (Index r = 0; r < L.n; ++r) { put(L.p_col(i + 1, r), P.normals()(r, j)); }
      end_row(mu0 * P.normals().col(j).dot(xi.y) / h);
    }
    // S_i - S_{i+1} - <p_{i+1}, V_i>/k = 0
    put(L.s_base + static_cast<Index>(i), 1.0);
    if (i + 1 < L.k) { put(L.s_base + static_cast<Index>(i) + 1, -1.0); }
    for (Index r = 0; r < L.n; ++r) {
      put(L.p_col(i + 1, r), -traj.velocity(i)(r) / static_cast<double>(L.k));
    }
    end_row(0.0);
  }

  const VectorXd& xk = traj.terminal_state();
  const double Tk = traj.final_time();
  if (cost.smooth()) {
    const VectorXd grad = cost.gradient_x(xk, Tk);
    for (Index r = 0; r < L.n; ++r) {
      put(L.p_col(L.k, r), -1.0);
      for (Index j = 0; j < L.s; ++j) {
        const Index ec = L.etak_col[static_cast<std::size_t>(j)];
        if (ec >= 0) { put(ec, -P.normals()(r, j)); }
      }
      end_row(mu0 * grad(r));
    }
    put(L.s_base, 1.0);
    end_row(mu0 * (cost.derivative_T(xk, Tk) - 2.0 * (S.in.Tbar - Tk) - S.in.rho));
  }

  if (norm == Normalization::TerminalEta) {
    bool any = false;
    for (Index c : L.etak_col) {
      if (c >= 0) {
        put(c, 1.0);
        any = true;
      }
    }
    if (!any) { return {}; }
    end_row(1.0);
  } else if (norm == Normalization::AdjointStart) {
    put(L.p_col(0, norm_index), 1.0);
    end_row(norm_sign);
  }

  SparseMatrixd A(row, L.cols);
  A.setFromTriplets(trip.begin(), trip.end());
  const Eigen::Map<const VectorXd> b(rhs.data(), static_cast<Index>(rhs.size()));
  const Eigen::Map<const VectorXd> lo(L.lower.data(), L.cols);
  const Eigen::Map<const VectorXd> hi(L.upper.data(), L.cols);
  return bounded_least_squares(A, b, lo, hi);
}

/// Rebuilds p from the terminal condition and the recurrence, and q from the
/// maximum-principle equation, so that only the sign and complementarity
/// conditions carry the solver error.
inline Multipliers polish(const RecoverySetup& S, const VectorXd& z, double mu0)
{
  const RecoveryLayout& L = S.L;
  const Trajectory& traj = *S.traj;
  const DiscreteProblem& prob = *S.prob;
  const Polyhedron& P = prob.polyhedron;
  Multipliers m = Multipliers::zeros(L.k, L.n, L.d, L.s);
  m.mu0 = mu0;
  for (std::size_t i = 0; i < L.k; ++i) {
    m.eta[i] = S.fits[i].decomposition.coefficients;
    const double h = traj.grid().step(i);
    for (Index j = 0; j < L.s; ++j) {
      const Index gc = L.gamma_col[i][static_cast<std::size_t>(j)];
      if (gc >= 0) { m.gamma[i](j) = z(gc) / h; }
    }
  }
  for (Index j = 0; j < L.s; ++j) {
    const Index ec = L.etak_col[static_cast<std::size_t>(j)];
    if (ec >= 0) { m.eta[L.k](j) = std::max(0.0, z(ec)); }
  }
  if (prob.cost->smooth()) {
    m.p[L.k] = -P.normals() * m.eta[L.k] - mu0 * prob.cost->gradient_x(traj.terminal_state(), traj.final_time());
  } else {
    m.p[L.k] = z.segment(L.p_col(L.k, 0), L.n);
  }
  for (std::size_t i = L.k; i-- > 0;) {
    const double h = traj.grid().step(i);
    m.p[i] = m.p[i + 1] + h * S.Gx[i].transpose() * m.p[i + 1] - h * P.normals() * m.gamma[i]
             - mu0 * S.Gx[i].transpose() * S.in.xi[i].y;
  }
  for (std::size_t i = 0; i < L.k; ++i) {
    const double h = traj.grid().step(i);
    const VectorXd y = -mu0 * S.in.xi[i].y / h + m.p[i + 1];
    m.q[i] = h * S.Gu[i].transpose() * y - mu0 * S.in.xi[i].u;
  }
  return m;
}

/// Divides the dual part by ||(p, q, eta_k)||_1.
inline void normalize_abnormal(Multipliers& m)
{
  double l1 = m.eta.back().lpNorm<1>();
  for (const auto& v : m.p) { l1 += v.lpNorm<1>(); }
  for (const auto& v : m.q) { l1 += v.lpNorm<1>(); }
  if (l1 > 0.0) { m = m.scaled(1.0 / l1); }
  m.mu0 = 0.0;
}

}  // namespace detail

/// Finds a dual bundle satisfying the discrete optimality conditions for the
/// given arc. Tries mu0 = 1 first, then mu0 = 0 under an l1 normalization.
/// Returns found = false with the closest normal bundle when neither works.
inline RecoveryResult recover_multipliers(const Trajectory& traj, const ControlSignal& ctrl, const DiscreteProblem& prob,
                                          const VerifyOptions& opt = {})
{
  prob.validate();
  if (ctrl.size() != traj.steps()) { throw DimensionError("recover_multipliers: control count mismatch"); }
  const detail::RecoverySetup S = detail::prepare_recovery(traj, ctrl, prob, opt);

  RecoveryResult res;
  const BoundedLsResult normal = detail::solve_recovery(S, 1.0, detail::Normalization::Normal, 0, 0.0);
  res.multipliers = detail::polish(S, normal.x, 1.0);
  res.report = verify_all(traj, ctrl, res.multipliers, prob, opt);
  res.least_squares_residual = normal.residual;
  res.worst_residual = res.report.worst_residual();
  if (res.report.overall) {
    res.found = true;
    res.mode = "normal";
    return res;
  }

  auto attempt = [&](detail::Normalization norm, Index idx, double sign) {
    const BoundedLsResult r = detail::solve_recovery(S, 0.0, norm, idx, sign);
    if (r.x.size() == 0) { return false; }
    Multipliers m = detail::polish(S, r.x, 0.0);
    detail::normalize_abnormal(m);
    VerificationReport rep = verify_all(traj, ctrl, m, prob, opt);
    if (!rep.overall) { return false; }
    res.found = true;
    res.mode = "abnormal";
    res.multipliers = std::move(m);
    res.report = std::move(rep);
    res.least_squares_residual = r.residual;
    res.worst_residual = 0.0;
    return true;
  };
  if (attempt(detail::Normalization::TerminalEta, 0, 0.0)) { return res; }
  for (Index c = 0; c < traj.dim(); ++c) {
    for (double sign : {1.0, -1.0}) {
      if (attempt(detail::Normalization::AdjointStart, c, sign)) { return res; }
    }
  }
  res.mode = "none";
  return res;
}

inline RecoveryResult recover_multipliers(const DiscreteSolution& sol, const DiscreteProblem& prob,
                                          const VerifyOptions& opt = {})
{
  return recover_multipliers(sol.trajectory, sol.controls, prob, opt);
}

}  // namespace sweepctl
