#pragma once

#include <map>
#include <memory>
#include <optional>

#include "astor/flows.hpp"
#include "astor/interp.hpp"
#include "astor/norms.hpp"
#include "astor/spectral.hpp"

namespace astor {

enum class RectifyDirection { Forward, Inverse };

/// Time offsets a flow table must cover to rectify functions on the given axis.
std::vector<double> rectify_offsets(const TimeAxis& axis, RectifyDirection dir);

/// Forward: (f o h)(q, t) = f(phi^{-t} q, t). Inverse: (f o h^{-1})(q, t) = f(phi^t q, t).
/// interp_width <= 0 selects trigonometric interpolation, otherwise a Lagrange
/// stencil of that width. CoverageError when the table lacks an offset.
GridFunction rectify(const GridFunction& f, const FlowTable& table, RectifyDirection dir, int interp_width = 0,
                     Exec exec = Exec::Parallel);

/// Quadrature weights on K equal intervals of width h: Simpson for even K,
/// Simpson plus a closing 3/8 panel for odd K >= 3, trapezoid for K = 1.
void quadrature_weights(int K, double h, double* w);

/// T_max - upsilon = max(10 / lambda, 5 / (lambda - threshold)).
double default_horizon(double lambda, double threshold);

struct HomologicalOptions {
  int interp_width = 8;
  double h_ode = 1e-3;
  bool allow_inadmissible = false;
};

/// Solves d_q k W + d_t k + sign B k = z on T^n x [t0, t0 + (M-1) dt] with
/// B = d_q W (or its transpose), via
///   k(q, t) = -int_0^{T-t} G(q, s) z(phi^s q, t + s) ds,
/// G the forward propagator. The quadrature step equals dt so t + s stays on
/// the time grid. The last interval borrows two earlier samples (Adams-Moulton)
/// when available. The solution vanishes at the final time.
/// Tables depend only on (W, grid, dt, M), so one solver serves every time
/// origin.
class HomologicalSolver {
 public:
  HomologicalSolver(VectorFieldSpec W, TorusGrid grid, double dt, int M, HomologicalOptions opt = {},
                    Exec exec = Exec::Parallel);

  const VectorFieldSpec& field() const { return W_; }
  const TorusGrid& grid() const { return grid_; }
  double dt() const { return dt_; }
  int M() const { return M_; }
  const GrowthConstants& growth() const;
  /// Reuses growth constants measured elsewhere for the same field.
  void set_growth(GrowthConstants g) { growth_ = std::move(g); }
  const HomologicalOptions& options() const { return opt_; }

  /// Throws InadmissibleRateError when lambda <= c_kappa |d_q W|_{C^0}, unless
  /// allowed by the options.
  void check_admissible(double lambda) const;
  bool admissible(double lambda) const;

  GridFunction solve(const GridFunction& z, int sign, bool transpose = false);
  /// Serial reference path: stencils and weights computed on the fly.
  GridFunction solve_reference(const GridFunction& z, int sign, bool transpose = false);

  const PropagatorTable& table(int sign, bool transpose);

 private:
  struct Prepared {
    PropagatorTable tab;
    std::vector<PointStencil> stencils;  // [k * Nq + i]
    PropagatorTable back;                 // offsets 0, -dt, -2dt for the last panel
    std::vector<PointStencil> back_stencils;
  };
  Prepared& prepare(int sign, bool transpose);
  void check_input(const GridFunction& z) const;

  VectorFieldSpec W_;
  TorusGrid grid_;
  double dt_;
  int M_;
  HomologicalOptions opt_;
  Exec exec_;
  std::map<std::pair<int, bool>, std::unique_ptr<Prepared>> prepared_;
  mutable std::optional<GrowthConstants> growth_;
};

/// d_q k W + d_t k + sign B k - z with spectral q-derivatives and FD4 in time.
GridFunction residual_HE(const GridFunction& kappa, const GridFunction& z, const VectorFieldSpec& W, int sign,
                         bool transpose = false, Exec exec = Exec::Parallel);

/// Weighted norm of a residual over the interior slices (margin dropped at each end).
WeightedNorm interior_norm(const GridFunction& r, double sigma, double lambda, int margin = 2,
                           Exec exec = Exec::Parallel);

struct HomologicalProblem {
  VectorFieldSpec W;
  GridFunction z;
  int sign = 1;
  bool transpose = false;
  NormSpec spec;
  HomologicalOptions options;
};

struct HomologicalSolution {
  GridFunction kappa;
  double residual = 0.0;       // interior weighted residual |residual_HE|_{sigma, lambda}
  double tail_bound = 0.0;     // weighted bound on the discarded integral beyond T_max, at t = upsilon
  double kappa_norm = 0.0;     // |k|_{sigma, lambda}
  double z_norm = 0.0;         // |z|_{sigma, lambda}
  double K = 0.0;              // kappa_norm / z_norm
  double T_max = 0.0;
  bool admissible = true;
  GrowthConstants growth;
};

HomologicalSolution solve_homological(const HomologicalProblem& prob, Exec exec = Exec::Parallel);
/// Same pipeline with an existing solver (tables reused).
HomologicalSolution solve_homological(HomologicalSolver& solver, const GridFunction& z, int sign, bool transpose,
                                      const NormSpec& spec);

/// Analytic bound (weighted at t = upsilon) on the tail int_{T_max}^inf |G z|.
double tail_bound(double z0_weighted, double lambda, double growth_rate, double horizon);

/// Exact solution on [t0, T_end] with zero terminal value for constant W = omega
/// and p-independent trig right-hand side z (one component per axis).
GridFunction transport_solution(const TrigField& z, const Vec& omega, const TorusGrid& grid, const TimeAxis& axis);

}  // namespace astor
