#pragma once

#include "astor/grid.hpp"

namespace astor {

/// Regularity sigma = k + mu, decay rate lambda, base time upsilon.
struct NormSpec {
  double sigma = 1.0;
  double lambda = 0.0;
  double upsilon = 0.0;

  int k() const;
  double mu() const;
  /// Throws ConfigError unless sigma >= min_sigma, lambda >= 0, upsilon >= 0, k <= 4.
  void validate(double min_sigma = 1.0) const;
};

/// C^sigma norm of one time slice (layout i * dim + c): max over |alpha| <= k of
/// the grid maximum of |d^alpha f|, plus the mu-Hoelder seminorm of the top
/// derivatives over pairs of distinct grid points (torus metric).
double holder_norm(const TorusGrid& grid, const double* slice, int dim, double sigma);

struct WeightedNorm {
  double value = 0.0;
  int argmax_index = 0;
  double argmax_time = 0.0;
};

/// max_j |f^{t_j}|_{C^sigma} e^{lambda t_j} over slices j in [j_begin, j_end).
/// j_end < 0 means M.
WeightedNorm weighted_norm(const GridFunction& f, double sigma, double lambda, Exec exec = Exec::Parallel,
                           int j_begin = 0, int j_end = -1);
inline WeightedNorm weighted_norm(const GridFunction& f, const NormSpec& spec, Exec exec = Exec::Parallel) {
  return weighted_norm(f, spec.sigma, spec.lambda, exec);
}

/// Per-slice |f^{t_j}|_{C^sigma} (unweighted).
std::vector<double> slice_norms(const GridFunction& f, double sigma, Exec exec = Exec::Parallel);

}  // namespace astor
