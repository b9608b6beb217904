#pragma once

#include <optional>
#include <string>
#include <vector>

#include "astor/invariance.hpp"

namespace astor {

/// The non-autonomous system X the family is supposed to be invariant under:
/// either the Hamiltonian vector field (d_p H, -d_q H) on T^n x R^n or a
/// torus field Z = W + P.
class TargetSystem {
 public:
  static TargetSystem hamiltonian(const HamiltonianSpec& H);
  static TargetSystem vectorfield(const VectorFieldProblem& prob);

  int n() const { return W_.n; }
  bool has_p() const { return H_.has_value(); }
  const VectorFieldSpec& W() const { return W_; }

  /// dx = X(x, t) for x = (q, p); the p part is ignored on the torus path.
  void rhs(const Vec& q, const Vec& p, double t, Vec& dq, Vec& dp) const;

 private:
  VectorFieldSpec W_;
  std::optional<HamiltonianSpec> H_;
  TrigField P_;
};

struct DiagnosticsOptions {
  double sigma = 1.0;
  double lambda = 2.0;
  double residual_tol = 1e-5;
  double decay_fraction = 0.9;      // fitted rate must reach decay_fraction * lambda
  int conjugacy_samples = 50;
  double conjugacy_horizon = 5.0;   // t - t0 <= horizon
  double conjugacy_tol = 1e-4;
  double lagrangian_factor = 10.0;  // coefficients <= factor * residual
  double extension_back = 1.0;      // extend to upsilon' - extension_back
  double h_ode = 1e-3;
  std::uint64_t seed = 0;

  static DiagnosticsOptions from(const SolveConfig& cfg);
  nlohmann::json to_json() const;
};

struct ResidualReport {
  double norm = 0.0;             // weighted C^sigma norm over the FD6 interior
  std::vector<double> profile;   // per slice, weighted; zero on the skipped margins
  int margin = 3;
  GridFunction r_u, r_v;         // pointwise residual blocks (r_v empty on the torus path)
};

/// X(phi(q, t), t) - d_q phi W - d_t phi for phi = (q + u, v) (or q + u), with
/// spectral q-derivatives and FD6 in time.
ResidualReport invariance_residual(const TargetSystem& X, const EmbeddingFamily& family, double sigma,
                                   double lambda, Exec exec = Exec::Parallel);

struct DecayFit {
  bool floor = false;   // norms below 1e-14: decayed to rounding, no rate
  double rate = 0.0;    // -slope of log |f^t|_{C^sigma}
  double r2 = 0.0;
  double stderr_rate = 0.0;
  int samples = 0;
  double t_begin = 0.0, t_end = 0.0;
  nlohmann::json to_json(double min_rate) const;
};

/// Least-squares fit of log |f^t|_{C^sigma} against t over the second half of
/// the time grid. Needs at least 8 slices there.
DecayFit decay_fit(const GridFunction& f, double sigma);

struct ConjugacySample {
  Vec q{};
  double t0 = 0.0, t = 0.0;
  double defect = 0.0;
  bool diverged = false;
};

struct ConjugacyReport {
  std::vector<ConjugacySample> samples;
  double max_defect = 0.0;
  double mean_defect = 0.0;
  int diverged = 0;
};

/// Evaluates phi^t at an arbitrary torus point, t a slice time of the family.
void evaluate_embedding(const EmbeddingFamily& family, int j, const Vec& q, Vec& Q, Vec& P);

/// Random samples (q, t0, t): t0, t slice times with t0 <= t <= t0 + horizon.
std::vector<ConjugacySample> conjugacy_samples(const EmbeddingFamily& family, int count, double horizon,
                                               std::uint64_t seed);

/// |psi^t_{t0,X}(phi^{t0}(q)) - phi^t(psi^t_{t0,W}(q))| per sample (torus metric on q,
/// Euclidean on p).
ConjugacyReport conjugacy_defect(const TargetSystem& X, const EmbeddingFamily& family,
                                 std::vector<ConjugacySample> samples, double h_ode = 1e-3,
                                 Exec exec = Exec::Parallel);

struct LagrangianReport {
  bool skipped = false;
  std::string reason;
  std::vector<double> profile;  // max |coefficient| per slice
  double at_upsilon = 0.0;      // first slice
  double max = 0.0;
};

/// Coefficients of the pullback of sum_i dp_i ^ dq_i through q -> (q + u, v):
/// c_kl = sum_i d_k v_i (delta_il + d_l u_i) - d_l v_i (delta_ik + d_k u_i), k < l.
/// Skipped for n = 1 and on the torus path.
LagrangianReport lagrangian_coefficients(const EmbeddingFamily& family, Exec exec = Exec::Parallel);
/// Per-point coefficients of one slice, [i * n * n + k * n + l].
std::vector<double> lagrangian_slice(const EmbeddingFamily& family, int j);

struct ExtendedEmbedding {
  double t = 0.0;
  GridFunction u, v;  // single slice at t
  double min_det = 0.0;
};

/// phi^t = psi^t_{upsilon',X} o phi^{upsilon'} o psi^{upsilon'}_{t,W} on the grid. Works for any t;
/// t = upsilon' returns the first slice unchanged. DivergenceError when a flow blows up.
ExtendedEmbedding extend_embedding(const TargetSystem& X, const EmbeddingFamily& family, double t,
                                   double h_ode = 1e-3, Exec exec = Exec::Parallel);

struct ExtensionReport {
  double t_target = 0.0;
  double min_det = 0.0;
  double consistency = 0.0;         // max |extension - family| at the check times
  std::vector<double> check_times;
};

ExtensionReport extension_check(const TargetSystem& X, const EmbeddingFamily& family, double back,
                                double h_ode = 1e-3, Exec exec = Exec::Parallel);

struct DiagnosticsReport {
  DiagnosticsOptions options;
  ResidualReport residual;
  DecayFit decay_u, decay_v;
  bool has_v = false;
  ConjugacyReport conjugacy;
  LagrangianReport lagrangian;
  ExtensionReport extension;
  std::vector<double> times;
  std::vector<double> u_norms, v_norms;  // |u^t|_{C^sigma}, |v^t|_{C^sigma}

  bool residual_pass() const;
  bool decay_pass() const;
  bool conjugacy_pass() const;
  bool lagrangian_pass() const;
  bool extension_pass() const;
  bool all_pass() const;

  nlohmann::json to_json() const;
  /// Per-time profile: t, weighted residual, |u|, |v|, Lagrangian maximum.
  std::string profile_csv() const;
};

DiagnosticsReport run_diagnostics(const TargetSystem& X, const EmbeddingFamily& family,
                                  const DiagnosticsOptions& opt, Exec exec = Exec::Parallel);

}  // namespace astor
