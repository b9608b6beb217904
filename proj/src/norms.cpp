#include "astor/norms.hpp"

#include <algorithm>
#include <limits>
#include <vector>

#include "astor/spectral.hpp"

namespace astor {

int NormSpec::k() const { return static_cast<int>(std::floor(sigma)); }
double NormSpec::mu() const { return sigma - k(); }

void NormSpec::validate(double min_sigma) const {
  if (!(sigma >= min_sigma)) throw ConfigError("sigma must be >= " + std::to_string(min_sigma));
  if (k() > 4) throw ConfigError("sigma must be < 5 (integer part at most 4)");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(upsilon >= 0.0)) throw ConfigError("upsilon must be >= 0");
}

namespace {

// All multi-indices alpha in N^n with |alpha| == order.
void multi_indices(int n, int order, std::vector<std::array<int, kMaxDim>>& out) {
  std::array<int, kMaxDim> a{};
  auto rec = [&](auto&& self, int axis, int left) -> void {
    if (axis == n - 1) {
      a[axis] = left;
      out.push_back(a);
      return;
    }
    for (int v = left; v >= 0; --v) {
      a[axis] = v;
      self(self, axis + 1, left - v);
    }
  };
  rec(rec, 0, order);
}

std::vector<double> derivative_slice(const TorusGrid& g, const double* slice, int dim,
                                     const std::array<int, kMaxDim>& alpha) {
  std::vector<double> cur(slice, slice + g.size() * dim);
  std::vector<double> tmp(cur.size());
  for (int a = 0; a < g.n; ++a) {
    if (alpha[a] == 0) continue;
    apply_axis(g, cur.data(), tmp.data(), dim, a, diff_matrix(g.N, alpha[a]));
    cur.swap(tmp);
  }
  return cur;
}

}  // namespace

double holder_norm(const TorusGrid& grid, const double* slice, int dim, double sigma) {
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
  const int k = static_cast<int>(std::floor(sigma));
  const double mu = sigma - k;
  const std::size_t Nq = grid.size();
  double sup = 0.0;
  for (std::size_t x = 0; x < Nq * dim; ++x) sup = std::max(sup, std::abs(slice[x]));
  std::vector<std::array<int, kMaxDim>> top;
  for (int order = 1; order <= k; ++order) {
    std::vector<std::array<int, kMaxDim>> alphas;
    multi_indices(grid.n, order, alphas);
    for (const auto& al : alphas) {
      const auto d = derivative_slice(grid, slice, dim, al);
      for (double v : d) sup = std::max(sup, std::abs(v));
    }
    if (order == k) top = alphas;
  }
  if (mu <= 0.0) return sup;

  std::vector<std::vector<double>> tops;
  if (k == 0)
    tops.emplace_back(slice, slice + Nq * dim);
  else
    for (const auto& al : top) tops.push_back(derivative_slice(grid, slice, dim, al));
  double semi = 0.0;
  for (const auto& d : tops) {
    for (std::size_t x = 0; x < Nq; ++x) {
      const Vec px = grid.point(x);
      for (std::size_t y = x + 1; y < Nq; ++y) {
        const double dist = torus_distance(px, grid.point(y), grid.n);
        const double scale = std::pow(dist, mu);
        for (int c = 0; c < dim; ++c)
          semi = std::max(semi, std::abs(d[x * dim + c] - d[y * dim + c]) / scale);
      }
    }
  }
  return sup + semi;
}

std::vector<double> slice_norms(const GridFunction& f, double sigma, Exec exec) {
  std::vector<double> v(f.M());
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (int j = 0; j < f.M(); ++j) v[j] = holder_norm(f.grid(), f.slice(j), f.dim(), sigma);
  return v;
}

WeightedNorm weighted_norm(const GridFunction& f, double sigma, double lambda, Exec exec, int j_begin,
                           int j_end) {
  if (j_end < 0) j_end = f.M();
  j_begin = std::max(0, j_begin);
  j_end = std::min(j_end, f.M());
  WeightedNorm r;
  r.argmax_index = j_begin;
  r.argmax_time = f.axis().time(j_begin);
  if (j_end <= j_begin) return r;
  std::vector<double> v(j_end - j_begin);
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (int j = j_begin; j < j_end; ++j) {
    const double t = f.axis().time(j);
    v[j - j_begin] = holder_norm(f.grid(), f.slice(j), f.dim(), sigma) * std::exp(lambda * t);
  }
  for (int j = j_begin; j < j_end; ++j) {
    if (!std::isfinite(v[j - j_begin])) {
      r.value = std::numeric_limits<double>::infinity();
      r.argmax_index = j;
      r.argmax_time = f.axis().time(j);
      return r;
    }
    if (v[j - j_begin] > r.value) {
      r.value = v[j - j_begin];
      r.argmax_index = j;
      r.argmax_time = f.axis().time(j);
    }
  }
  return r;
}

}  // namespace astor
