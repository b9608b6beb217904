#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>

#include "astor/homological.hpp"

namespace astor {

/// H(q, p, t) = W(q).p + a(q, t) + b(q, t).p + Q(q, p, t), where Q = m(q, p, t) p.p
/// collects every term of p-degree 2..4.
struct HamiltonianSpec {
  int n = 1;
  VectorFieldSpec W;
  TrigTimeFunction a;
  TrigField b;
  TrigTimeFunction quad;

  // Exact derivatives, built once.
  TrigField da;      // d_{q_k} a
  TrigField db;      // db[i * n + k] = d_{q_k} b_i
  TrigField dquad_p; // d_{p_i} Q  (= (mbar p)_i)
  TrigField dquad_q; // d_{q_k} Q
  TrigField mbar0;   // mbar at p = 0: Hessian of the degree-2 part, [i * n + j]

  double sigma = 1.0;
  double Upsilon = 1.0;

  static HamiltonianSpec make(VectorFieldSpec W, TrigTimeFunction a, TrigField b, TrigTimeFunction quad,
                              double sigma = 1.0);

  double H(const Vec& q, const Vec& p, double t) const;
  /// d_p H and d_q H at one point.
  Vec dH_dp(const Vec& q, const Vec& p, double t) const;
  Vec dH_dq(const Vec& q, const Vec& p, double t) const;

  /// m with m p.p = Q: m_ij = sum_d d_i d_j Q_d / (d (d - 1)).
  TrigField m_matrix() const;
  /// mbar with mbar p = d_p Q: mbar_ij = sum_d d_i d_j Q_d / (d - 1).
  TrigField mbar_matrix() const;

  bool unperturbed() const { return a.empty() && std::all_of(b.begin(), b.end(), [](auto& f) { return f.empty(); }); }
  nlohmann::json to_json() const;
};

/// Coefficient extraction from a full Hamiltonian polynomial in p (degree <= 4).
/// Autonomous degree-1 terms form W, the rest of degree 1 forms b.
HamiltonianSpec expand_hamiltonian(const TrigTimeFunction& H, double sigma = 1.0);
/// Assembles Q = sum m_ij p_i p_j from a matrix of p-polynomial entries (row-major n x n).
HamiltonianSpec hamiltonian_from_parts(VectorFieldSpec W, TrigTimeFunction a, TrigField b, const TrigField& m,
                                       double sigma = 1.0);

/// The iteration state: blocks (u, v) for Hamiltonians, (u) for vector fields.
using State = std::vector<GridFunction>;

struct EmbeddingFamily {
  GridFunction u;
  GridFunction v;  // empty (dim 0 data) on the vector-field path
  double upsilon = 0.0;
  bool has_v() const { return !v.data().empty(); }
};

struct SolveConfig {
  NormSpec spec{1.0, 2.0, 0.0};  // upsilon here is the initial upsilon'
  int N = 64;
  int M = 0;              // 0: derived from horizon / keep_fraction
  double dt = 0.025;
  double horizon = 0.0;   // T_max - upsilon' of the returned family; 0: default_horizon
  double keep_fraction = 0.5;
  double tol_residual = 1e-6;
  double tol_fixed_point = 1e-10;
  int max_iterations = 60;
  double upsilon_cap = 8.0;
  int probes = 5;
  double probe_threshold = 0.5;
  std::uint64_t seed = 0;
  int interp_width = 8;
  double h_ode = 1e-3;
  double fold_tol = 1e-8;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Discretization shared by every iteration: grid, time step, slice count,
/// and a homological solver whose tables do not depend on the time origin.
class InvarianceContext {
 public:
  InvarianceContext(VectorFieldSpec W, const SolveConfig& cfg, Exec exec = Exec::Parallel);
  InvarianceContext(const InvarianceContext&) = delete;
  InvarianceContext& operator=(const InvarianceContext&) = delete;

  const SolveConfig& config() const { return cfg_; }
  const TorusGrid& grid() const { return grid_; }
  int M() const { return M_; }
  double internal_horizon() const { return (M_ - 1) * cfg_.dt; }
  double output_horizon() const { return horizon_; }
  int kept_slices() const;
  TimeAxis axis(double upsilon) const { return TimeAxis{upsilon, cfg_.dt, M_}; }
  HomologicalSolver& solver() { return *solver_; }
  const HomologicalSolver& solver() const { return *solver_; }
  const VectorFieldSpec& field() const { return solver_->field(); }
  const GridFunction& W_grid() const { return Wg_; }
  const GridFunction& dW_grid() const { return dWg_; }
  Exec exec() const { return exec_; }

  /// max over blocks of |y|_{sigma,lambda} and |(grad y) Wbar|_{sigma,lambda}.
  double state_norm(const State& y) const;
  /// Interior weighted norm of a functional value.
  double residual_norm(const State& F) const;

 private:
  SolveConfig cfg_;
  TorusGrid grid_;
  int M_ = 0;
  double horizon_ = 0.0;
  Exec exec_;
  std::unique_ptr<HomologicalSolver> solver_;
  GridFunction Wg_, dWg_;
};

/// (F1, F2) with F1 = d_pH(q + u, v, t) - W(q) - (grad u) Wbar and
/// F2 = d_qH(q + u, v, t) + (grad v) Wbar. Throws FoldError when
/// det(Id + d_q u) <= fold_tol somewhere.
State eval_F(const HamiltonianSpec& H, InvarianceContext& ctx, const State& y);
/// F(y) - D F(0) y with D F(0) taken at a = b = 0. Contains no derivatives of y.
State eval_remainder(const HamiltonianSpec& H, InvarianceContext& ctx, const State& y);
/// D F at y = 0 for a = b = 0:
/// (dW u - (grad u) Wbar + mbar0 v, dW^T v + (grad v) Wbar).
State apply_linearized(const HamiltonianSpec& H, InvarianceContext& ctx, const State& yhat);
/// Right inverse of apply_linearized: v from (grad v) Wbar + dW^T v = g, then
/// u from (grad u) Wbar - dW u = mbar0 v - z.
State right_inverse(const HamiltonianSpec& H, InvarianceContext& ctx, const State& zg);

/// Corollary path: F(u) = W(q + u) + P(q + u, t) - W(q) - (grad u) Wbar.
State eval_F_vectorfield(const TrigField& P, InvarianceContext& ctx, const State& u);
State eval_remainder_vectorfield(const TrigField& P, InvarianceContext& ctx, const State& u);
State apply_linearized_vectorfield(InvarianceContext& ctx, const State& uhat);
State right_inverse_vectorfield(InvarianceContext& ctx, const State& z);

/// Throws FoldError if det(Id + d_q u) <= tol anywhere; returns the minimum.
double check_fold(const GridFunction& u, double tol, Exec exec = Exec::Parallel);

/// The functional and its right inverse on one time axis. When R (= F - D F(0))
/// is set, L is evaluated as -eta(R(y)): the transport terms of F and D F(0)
/// cancel exactly, so the grid derivative never meets the quadrature in eta.
struct FixedPointOps {
  int blocks = 2;
  std::function<State(const State&)> F;
  std::function<State(const State&)> R;
  std::function<State(const State&)> eta;
};

/// L(y) = y - eta(F(y)), or -eta(R(y)) when R is available.
State apply_L(const FixedPointOps& ops, const State& y);

/// Random probe in the unit ball: e^{-lambda t}(1 - e^{-3(T - t)}) times
/// low-mode trig polynomials, scaled to norm r.
State random_probe(const InvarianceContext& ctx, double upsilon, int blocks, double r, std::mt19937_64& rng);

/// Max of |L(y1) - L(y2)| / |y1 - y2| over the given number of random pairs.
double probe_contraction(const FixedPointOps& ops, const InvarianceContext& ctx, double upsilon, int pairs,
                         std::uint64_t seed);

struct UpsilonTrial {
  double upsilon = 0.0;
  double probe_ratio = 0.0;
  std::string outcome;  // "accepted", "probe_ratio", "stall", "fold", "diverged"
  nlohmann::json to_json() const;
};

struct NormReport {
  bool converged = false;
  std::string status;
  int iterations = 0;
  double upsilon_prime = 0.0;
  double T_max = 0.0;           // end of the returned family
  double internal_T = 0.0;      // end of the computational window
  double residual = 0.0;        // weighted |F(y)| on the returned window, boundary slices excluded
  double last_step = 0.0;
  double y_norm = 0.0;
  double first_iterate_norm = 0.0;
  double probe_ratio = 0.0;
  double contraction_factor = 0.0;  // max ratio of successive steps over the last iterations
  std::vector<double> residual_history;
  std::vector<double> step_history;
  std::vector<UpsilonTrial> trials;
  std::vector<std::string> warnings;
  GrowthConstants growth;
  double admissibility_threshold = 0.0;
  double Upsilon = 0.0;
  nlohmann::json to_json(const SolveConfig& cfg) const;
};

struct SolveResult {
  EmbeddingFamily family;      // cropped to the kept window
  EmbeddingFamily full;        // whole computational window
  State first_iterate;         // on the accepted axis
  NormReport report;
};

/// Builds the per-axis operators for a given time origin.
using OpsFactory = std::function<FixedPointOps(double upsilon)>;

SolveResult run_fixed_point(InvarianceContext& ctx, const OpsFactory& make_ops, int blocks,
                            std::vector<std::string> warnings = {});

FixedPointOps hamiltonian_ops(const HamiltonianSpec& H, InvarianceContext& ctx);
FixedPointOps vectorfield_ops(const TrigField& P, InvarianceContext& ctx);

SolveResult iterate_L(const HamiltonianSpec& H, const SolveConfig& cfg, Exec exec = Exec::Parallel);
SolveResult iterate_L(const HamiltonianSpec& H, InvarianceContext& ctx);

/// Torus vector field Z = W + P with P decaying.
struct VectorFieldProblem {
  VectorFieldSpec W;
  TrigField P;
  /// Splits Z into its autonomous part W and the rest P.
  static VectorFieldProblem from_field(const TrigField& Z, double sigma = 1.0);
};

SolveResult solve_vectorfield(const VectorFieldProblem& prob, const SolveConfig& cfg, Exec exec = Exec::Parallel);
SolveResult solve_vectorfield(const VectorFieldProblem& prob, InvarianceContext& ctx);

}  // namespace astor
