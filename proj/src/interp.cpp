#include "astor/interp.hpp"

#include <algorithm>
#include <vector>

namespace astor {

namespace {

AxisStencil axis_stencil(int N, double x, int width) {
  AxisStencil s;
  const double pos = wrap_angle(x) / (kTwoPi / N);
  const double nearest = std::round(pos);
  if (std::abs(pos - nearest) <= 1e-12 * std::max(1.0, pos)) {
    s.start = static_cast<int>(nearest) % N;
    s.width = 1;
    s.w[0] = 1.0;
    return s;
  }
  width = std::clamp(width, 2, std::min(N, kMaxStencil));
  const int base = (width % 2 == 0) ? static_cast<int>(std::floor(pos)) - width / 2 + 1
                                    : static_cast<int>(nearest) - (width - 1) / 2;
  const double r = pos - base;
  s.width = width;
  s.start = ((base % N) + N) % N;
  for (int m = 0; m < width; ++m) {
    double num = 1.0, den = 1.0;
    for (int l = 0; l < width; ++l) {
      if (l == m) continue;
      num *= r - l;
      den *= m - l;
    }
    s.w[m] = num / den;
  }
  return s;
}

// Periodic sinc kernel for trigonometric interpolation on N nodes.
double periodic_sinc(int N, double d) {
  const double half = 0.5 * d;
  const double sh = std::sin(half);
  if (std::abs(sh) < 1e-15) return 1.0;
  if (N % 2 == 0) return std::sin(N * half) / (N * std::tan(half));
  return std::sin(N * half) / (N * sh);
}

}  // namespace

PointStencil lagrange_stencil(const TorusGrid& grid, const Vec& x, int width) {
  PointStencil p;
  for (int a = 0; a < grid.n; ++a) p.axis[a] = axis_stencil(grid.N, x[a], width);
  return p;
}

void interpolate(const TorusGrid& grid, const double* slice, int dim, const PointStencil& st, double* out) {
  for (int c = 0; c < dim; ++c) out[c] = 0.0;
  const int n = grid.n;
  const int N = grid.N;
  std::array<int, kMaxDim> m{};
  while (true) {
    double w = 1.0;
    std::size_t idx = 0;
    std::size_t stride = 1;
    for (int a = 0; a < n; ++a) {
      const AxisStencil& s = st.axis[a];
      w *= s.w[m[a]];
      idx += static_cast<std::size_t>((s.start + m[a]) % N) * stride;
      stride *= N;
    }
    const double* v = slice + idx * dim;
    for (int c = 0; c < dim; ++c) out[c] += w * v[c];
    int a = 0;
    while (a < n && ++m[a] == st.axis[a].width) m[a++] = 0;
    if (a == n) break;
  }
}

void trig_interpolate(const TorusGrid& grid, const double* slice, int dim, const Vec& x, double* out) {
  const int n = grid.n;
  const int N = grid.N;
  const double h = grid.h();
  std::vector<std::vector<double>> ker(n, std::vector<double>(N));
  std::array<bool, kMaxDim> exact{};
  std::array<int, kMaxDim> node{};
  for (int a = 0; a < n; ++a) {
    const double pos = wrap_angle(x[a]) / h;
    const double nearest = std::round(pos);
    if (std::abs(pos - nearest) <= 1e-12 * std::max(1.0, pos)) {
      exact[a] = true;
      node[a] = static_cast<int>(nearest) % N;
    } else {
      for (int k = 0; k < N; ++k) ker[a][k] = periodic_sinc(N, x[a] - k * h);
    }
  }
  for (int c = 0; c < dim; ++c) out[c] = 0.0;
  std::array<int, kMaxDim> m{};
  std::array<int, kMaxDim> lim{};
  for (int a = 0; a < n; ++a) lim[a] = exact[a] ? 1 : N;
  while (true) {
    double w = 1.0;
    std::size_t idx = 0;
    std::size_t stride = 1;
    for (int a = 0; a < n; ++a) {
      const int k = exact[a] ? node[a] : m[a];
      if (!exact[a]) w *= ker[a][k];
      idx += static_cast<std::size_t>(k) * stride;
      stride *= N;
    }
    const double* v = slice + idx * dim;
    for (int c = 0; c < dim; ++c) out[c] += w * v[c];
    int a = 0;
    while (a < n && ++m[a] == lim[a]) m[a++] = 0;
    if (a == n) break;
  }
}

}  // namespace astor
