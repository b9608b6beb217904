#pragma once

#include <array>

#include "astor/grid.hpp"

namespace astor {

inline constexpr int kMaxStencil = 16;

/// Periodic Lagrange stencil along one axis: nodes start, start+1, ... (mod N).
/// width == 1 marks a point sitting exactly on a node.
struct AxisStencil {
  int start = 0;
  int width = 1;
  std::array<double, kMaxStencil> w{};
};

/// Tensor-product interpolation stencil for one point of T^n.
struct PointStencil {
  std::array<AxisStencil, kMaxDim> axis{};
};

/// Lagrange stencil of the given width (clamped to N) for the point x.
PointStencil lagrange_stencil(const TorusGrid& grid, const Vec& x, int width);

/// Interpolates every component of a time slice (layout i * dim + c) at the stencil point.
void interpolate(const TorusGrid& grid, const double* slice, int dim, const PointStencil& st, double* out);

/// Trigonometric (band-limited) interpolation of a slice at x. Exact for
/// functions whose spectrum fits on the grid.
void trig_interpolate(const TorusGrid& grid, const double* slice, int dim, const Vec& x, double* out);

}  // namespace astor
