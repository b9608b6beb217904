#include "astor/spectral.hpp"

#include <complex>
#include <map>
#include <memory>
#include <mutex>

namespace astor {

namespace {

std::vector<double> build_diff_matrix(int N, int order) {
  // Circulant: entry (r, c) depends only on (r - c) mod N.
  const double h = kTwoPi / N;
  const int kmin = -((N - 1) / 2);
  const int kmax = N / 2;
  std::vector<double> col(N, 0.0);
  for (int m = 1; m < N; ++m) {
    const double d = m * h;
    double s = 0.0;
    for (int k = kmin; k <= kmax; ++k) {
      if (k == 0) continue;
      const bool nyquist = (N % 2 == 0 && k == N / 2);
      if (nyquist && order % 2 == 1) continue;
      const std::complex<double> ik(0.0, static_cast<double>(k));
      s += (std::pow(ik, order) * std::exp(std::complex<double>(0.0, k * d))).real();
    }
    col[m] = s / N;
  }
  // Rows annihilate constants; enforce it exactly on the diagonal.
  double off = 0.0;
  for (int m = 1; m < N; ++m) off += col[m];
  col[0] = -off;
  std::vector<double> D(static_cast<std::size_t>(N) * N);
  for (int r = 0; r < N; ++r)
    for (int c = 0; c < N; ++c) D[static_cast<std::size_t>(r) * N + c] = col[((r - c) % N + N) % N];
  return D;
}

}  // namespace

const std::vector<double>& diff_matrix(int N, int order) {
  if (order < 1) throw ResolutionError("derivative order must be >= 1");
  if (2 * order >= N)
    throw ResolutionError("derivative order " + std::to_string(order) + " not resolvable on N = " +
                          std::to_string(N) + " (need N > 2*order)");
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::unique_ptr<std::vector<double>>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{N, order}];
  if (!slot) slot = std::make_unique<std::vector<double>>(build_diff_matrix(N, order));
  return *slot;
}

void apply_axis(const TorusGrid& grid, const double* in, double* out, int dim, int axis,
                const std::vector<double>& D) {
  const int N = grid.N;
  const std::size_t st = grid.stride(axis);
  const std::size_t Nq = grid.size();
  std::vector<double> line(N);
  for (std::size_t base = 0; base < Nq; ++base) {
    if ((base / st) % N != 0) continue;
    for (int c = 0; c < dim; ++c) {
      for (int m = 0; m < N; ++m) line[m] = in[(base + m * st) * dim + c];
      for (int r = 0; r < N; ++r) {
        const double* row = D.data() + static_cast<std::size_t>(r) * N;
        double s = 0.0;
        for (int m = 0; m < N; ++m) s += row[m] * line[m];
        out[(base + r * st) * dim + c] = s;
      }
    }
  }
}

GridFunction partial_derivative(const GridFunction& f, int axis, int order, Exec exec) {
  if (axis < 0 || axis >= f.grid().n) throw ConfigError("derivative axis out of range");
  const auto& D = diff_matrix(f.grid().N, order);
  GridFunction out(f.grid(), f.axis(), f.dim());
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (int j = 0; j < f.M(); ++j) apply_axis(f.grid(), f.slice(j), out.slice(j), f.dim(), axis, D);
  return out;
}

int stencil_margin(TimeStencil stencil) { return stencil == TimeStencil::FD4 ? 2 : 3; }

GridFunction time_derivative(const GridFunction& f, TimeStencil stencil, Exec exec) {
  const int M = f.M();
  const std::size_t S = f.slice_size();
  GridFunction out(f.grid(), f.axis(), f.dim());
  const double dt = f.axis().dt;
  const double* x = f.data().data();
  double* y = out.data().data();
  auto v = [&](int j, std::size_t k) { return x[j * S + k]; };

  if (stencil == TimeStencil::FD4) {
    if (M < 5) throw ResolutionError("fourth-order time derivative needs M >= 5");
    const double s = 1.0 / (12.0 * dt);
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
    for (int j = 0; j < M; ++j) {
      for (std::size_t k = 0; k < S; ++k) {
        double d;
        if (j >= 2 && j <= M - 3) {
          d = v(j - 2, k) - 8.0 * v(j - 1, k) + 8.0 * v(j + 1, k) - v(j + 2, k);
        } else if (j == 0) {
          d = -25.0 * v(0, k) + 48.0 * v(1, k) - 36.0 * v(2, k) + 16.0 * v(3, k) - 3.0 * v(4, k);
        } else if (j == 1) {
          d = -3.0 * v(0, k) - 10.0 * v(1, k) + 18.0 * v(2, k) - 6.0 * v(3, k) + v(4, k);
        } else if (j == M - 2) {
          d = 3.0 * v(M - 1, k) + 10.0 * v(M - 2, k) - 18.0 * v(M - 3, k) + 6.0 * v(M - 4, k) - v(M - 5, k);
        } else {
          d = 25.0 * v(M - 1, k) - 48.0 * v(M - 2, k) + 36.0 * v(M - 3, k) - 16.0 * v(M - 4, k) + 3.0 * v(M - 5, k);
        }
        y[j * S + k] = d * s;
      }
    }
  } else {
    if (M < 7) throw ResolutionError("sixth-order time derivative needs M >= 7");
    const double s = 1.0 / (60.0 * dt);
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
    for (int j = 3; j < M - 3; ++j) {
      for (std::size_t k = 0; k < S; ++k) {
        const double d = -v(j - 3, k) + 9.0 * v(j - 2, k) - 45.0 * v(j - 1, k) + 45.0 * v(j + 1, k) -
                         9.0 * v(j + 2, k) + v(j + 3, k);
        y[j * S + k] = d * s;
      }
    }
  }
  return out;
}

GridFunction transport_derivative(const GridFunction& f, const GridFunction& W_on_grid, TimeStencil stencil,
                                  Exec exec) {
  const int n = f.grid().n;
  if (W_on_grid.dim() != n || (W_on_grid.M() != 1 && W_on_grid.M() != f.M()) || !(W_on_grid.grid() == f.grid()))
    throw ConfigError("frequency field layout does not match");
  const bool frozen = W_on_grid.M() == 1;
  GridFunction out = time_derivative(f, stencil, exec);
  const auto& D = diff_matrix(f.grid().N, 1);
  const std::size_t Nq = f.grid().size();
  const int dim = f.dim();
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (int j = 0; j < f.M(); ++j) {
    std::vector<double> buf(f.slice_size());
    for (int a = 0; a < n; ++a) {
      apply_axis(f.grid(), f.slice(j), buf.data(), dim, a, D);
      for (std::size_t i = 0; i < Nq; ++i) {
        const double w = W_on_grid(frozen ? 0 : j, i, a);
        for (int c = 0; c < dim; ++c) out(j, i, c) += buf[i * dim + c] * w;
      }
    }
  }
  return out;
}

GridFunction jacobian(const GridFunction& f, Exec exec) {
  const int n = f.grid().n;
  const int dim = f.dim();
  GridFunction out(f.grid(), f.axis(), dim * n);
  const auto& D = diff_matrix(f.grid().N, 1);
  const std::size_t Nq = f.grid().size();
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (int j = 0; j < f.M(); ++j) {
    std::vector<double> buf(f.slice_size());
    for (int a = 0; a < n; ++a) {
      apply_axis(f.grid(), f.slice(j), buf.data(), dim, a, D);
      for (std::size_t i = 0; i < Nq; ++i)
        for (int c = 0; c < dim; ++c) out(j, i, c * n + a) = buf[i * dim + c];
    }
  }
  return out;
}

}  // namespace astor
