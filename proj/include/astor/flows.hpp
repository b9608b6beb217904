#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "astor/grid.hpp"
#include "json.hpp"

namespace astor {

/// Autonomous torus vector field W with its exact Jacobian field.
struct VectorFieldSpec {
  int n = 1;
  TrigField W;
  /// dW[i * n + j] = d W_i / d q_j.
  TrigField dW;
  double dW_c0 = 0.0;
  double dW_csigma = 0.0;

  /// Validates autonomy and dimensions, caches |d_q W|_{C^0} and |d_q W|_{C^sigma}.
  static VectorFieldSpec make(TrigField W, double sigma = 1.0);

  Vec eval(const Vec& q) const;
  Mat jacobian(const Vec& q) const;
};

/// Classical RK4 over [t0, t1] with m = ceil(|t1 - t0| / h) equal steps.
/// rhs(t, x, dxdt). Shared by every flow in the library so identical fields
/// give bitwise identical trajectories.
template <class State, class Rhs>
State rk4(State x, double t0, double t1, double h, Rhs&& rhs, int* steps = nullptr) {
  const double span = t1 - t0;
  if (span == 0.0) {
    if (steps) *steps = 0;
    return x;
  }
  const int m = static_cast<int>(std::ceil(std::abs(span) / h - 1e-9));
  const int count = m < 1 ? 1 : m;
  const double dt = span / count;
  State k1, k2, k3, k4, tmp;
  for (int s = 0; s < count; ++s) {
    const double t = t0 + s * dt;
    rhs(t, x, k1);
    for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
    rhs(t + 0.5 * dt, tmp, k2);
    for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
    rhs(t + 0.5 * dt, tmp, k3);
    for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + dt * k3[i];
    rhs(t + dt, tmp, k4);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  if (steps) *steps = count;
  return x;
}

struct FlowResult {
  Vec q{};   // wrapped to [0, 2pi)^n
  Mat J{};   // d_q phi^t (unwrapped)
  double error = 0.0;  // Richardson estimate |x_h - x_2h| / 15
};

/// phi_W^t(q0) and its Jacobian via the coupled flow + variational system.
FlowResult integrate_flow(const VectorFieldSpec& W, const Vec& q0, double t, double h_ode = 1e-3,
                          bool estimate_error = true);

/// Propagator of dR/dt = -sign B(phi^t q) R, R(q, tau, tau) = Id, with
/// B = d_q W or its transpose. Requires tau >= t.
Mat fundamental_matrix(const VectorFieldSpec& W, const Vec& q, double t, double tau, int sign,
                       bool transpose = false, double h_ode = 1e-3);

/// G(q, s) = R(phi^{-t} q, t, t + s), independent of t; solves dG/ds = sign G B(phi^s q).
Mat forward_propagator(const VectorFieldSpec& W, const Vec& q, double s, int sign, bool transpose = false,
                       double h_ode = 1e-3);

/// Rectified propagator R~(q, t, tau) = R(phi^{-tau} q, t, tau).
Mat rectified_propagator(const VectorFieldSpec& W, const Vec& q, double t, double tau, int sign,
                         bool transpose = false, double h_ode = 1e-3);

/// Flow values and Jacobians of W on a torus grid at sorted time offsets
/// (negative offsets allowed).
struct FlowTable {
  TorusGrid grid;
  std::vector<double> offsets;
  double h_ode = 1e-3;
  std::vector<Vec> phi;       // [k * Nq + i]
  std::vector<Mat> jac;       // [k * Nq + i]
  std::vector<double> error;  // per entry Richardson estimate (flow component)
  double group_law_defect = 0.0;

  std::size_t Nq() const { return grid.size(); }
  /// Index of a tabulated offset; CoverageError if absent.
  int find(double offset) const;
  const Vec& flow(int k, std::size_t i) const { return phi[k * Nq() + i]; }
  const Mat& jacobian(int k, std::size_t i) const { return jac[k * Nq() + i]; }
  nlohmann::json sidecar(const VectorFieldSpec& W) const;
};

/// Tabulates phi and d_q phi. Entries at offset 0 are the identity exactly.
/// The group law is checked on a subsample of (t, s) pairs; a defect above
/// tol_flow raises DivergenceError. An infinite tol_flow skips the check.
FlowTable build_flow_table(const VectorFieldSpec& W, const TorusGrid& grid, std::vector<double> offsets,
                           double h_ode = 1e-3, double tol_flow = 1e-8, Exec exec = Exec::Parallel);
/// Symmetric offsets: count points on [-T_probe, T_probe] (count odd so 0 is included).
FlowTable build_flow_table(const VectorFieldSpec& W, const TorusGrid& grid, double T_probe, int count,
                           double h_ode = 1e-3, double tol_flow = 1e-8, Exec exec = Exec::Parallel);

/// Forward propagators G(q_i, s_k) at offsets s_k = k ds, k < K (ds may be negative), plus the flow
/// phi^{s_k}(q_i). Integrated incrementally along each orbit.
struct PropagatorTable {
  TorusGrid grid;
  double ds = 0.0;
  int K = 0;
  int sign = 1;
  bool transpose = false;
  double h_ode = 1e-3;
  std::vector<Vec> phi;  // [k * Nq + i]
  std::vector<Mat> G;    // [k * Nq + i]

  std::size_t Nq() const { return grid.size(); }
  const Vec& flow(int k, std::size_t i) const { return phi[k * Nq() + i]; }
  const Mat& prop(int k, std::size_t i) const { return G[k * Nq() + i]; }
  nlohmann::json sidecar(const VectorFieldSpec& W) const;
};

PropagatorTable build_propagator_table(const VectorFieldSpec& W, const TorusGrid& grid, double ds, int K, int sign,
                                       bool transpose, double h_ode = 1e-3, Exec exec = Exec::Parallel);

struct GrowthConstants {
  double dW_c0 = 0.0;
  double T_probe = 0.0;
  // Envelope rates: max_s log(sup_q |.|_max) / s, clamped >= 0 (absolute, not normalized).
  double rate_flow = 0.0;
  double rate_prop = 0.0;
  // Least-squares slopes through the origin and their RMS residuals.
  double ls_rate_flow = 0.0;
  double ls_rate_prop = 0.0;
  double ls_residual_flow = 0.0;
  double ls_residual_prop = 0.0;
  // Normalized constants c = rate / |d_q W|_{C^0}.
  double c0 = 0.0;
  double c_flow = 0.0;
  double c_kappa = 0.0;
  double safety = 1.5;

  /// c_kappa |d_q W|_{C^0}: decay rates above this are admissible.
  double admissibility_threshold() const { return c_kappa * dW_c0; }
  nlohmann::json to_json() const;
};

/// Fits growth envelopes of |d_q phi^s|_{C^0} and |R|_{C^0} (both signs) over
/// s in (0, T_probe]. T_probe <= 0 picks max(5 / |d_q W|_{C^0}, 5). The step is
/// at least 1e-2.
GrowthConstants measure_growth(const VectorFieldSpec& W, double T_probe = 0.0, int N = 0, int samples = 64,
                               double h_ode = 1e-3, Exec exec = Exec::Parallel);

}  // namespace astor
