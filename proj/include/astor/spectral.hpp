#pragma once

#include <vector>

#include "astor/grid.hpp"

namespace astor {

/// Dense N x N trigonometric differentiation matrix of the given order
/// (row-major). Odd orders drop the Nyquist mode. Cached per (N, order).
const std::vector<double>& diff_matrix(int N, int order);

/// Applies a 1-D operator D (N x N) along one torus axis of a single time slice.
void apply_axis(const TorusGrid& grid, const double* in, double* out, int dim, int axis,
                const std::vector<double>& D);

/// Spectral derivative d^order/dq_axis^order of every time slice.
GridFunction partial_derivative(const GridFunction& f, int axis, int order, Exec exec = Exec::Parallel);

enum class TimeStencil { FD4, FD6 };

/// d/dt along the time axis. FD4 covers the whole grid (one-sided closures,
/// needs M >= 5). FD6 is centered only; the first and last three slices are
/// left at zero and must be excluded by callers.
GridFunction time_derivative(const GridFunction& f, TimeStencil stencil = TimeStencil::FD4,
                             Exec exec = Exec::Parallel);

/// Number of slices at each end not covered by the given stencil's centered part.
int stencil_margin(TimeStencil stencil);

/// Transport derivative (grad f) Wbar = sum_a d_a f W_a + d_t f.
/// W_on_grid may hold a single slice when W is autonomous.
GridFunction transport_derivative(const GridFunction& f, const GridFunction& W_on_grid,
                                  TimeStencil stencil = TimeStencil::FD4, Exec exec = Exec::Parallel);

/// Jacobian d_q f (dim x n per point) as a grid function with dim*n components,
/// entry (c, a) at component c*n + a.
GridFunction jacobian(const GridFunction& f, Exec exec = Exec::Parallel);

}  // namespace astor
