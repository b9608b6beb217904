#include "astor/grid.hpp"

#include <algorithm>

namespace astor {

std::size_t TorusGrid::size() const {
  std::size_t s = 1;
  for (int a = 0; a < n; ++a) s *= static_cast<std::size_t>(N);
  return s;
}

std::size_t TorusGrid::stride(int axis) const {
  std::size_t s = 1;
  for (int a = 0; a < axis; ++a) s *= static_cast<std::size_t>(N);
  return s;
}

Vec TorusGrid::point(std::size_t i) const {
  Vec q{};
  for (int a = 0; a < n; ++a) {
    q[a] = h() * static_cast<double>(i % N);
    i /= N;
  }
  return q;
}

GridFunction::GridFunction(TorusGrid grid, TimeAxis axis, int dim)
    : grid_(grid), axis_(axis), dim_(dim) {
  if (grid.n < 1 || grid.n > kMaxDim) throw ConfigError("torus dimension must be in [1, 4]");
  if (grid.N < 2) throw ConfigError("grid resolution N must be >= 2");
  if (axis.M < 1) throw ConfigError("time grid needs at least one point");
  if (!(axis.dt > 0.0)) throw ConfigError("time step dt must be > 0");
  if (dim < 1) throw ConfigError("codomain dimension must be >= 1");
  data_.assign(static_cast<std::size_t>(axis.M) * grid.size() * dim, 0.0);
}

GridFunction GridFunction::sample(const TrigField& f, TorusGrid grid, TimeAxis axis, Exec exec) {
  GridFunction out(grid, axis, static_cast<int>(f.size()));
  const std::size_t Nq = grid.size();
  const long total = static_cast<long>(axis.M) * static_cast<long>(Nq);
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (long idx = 0; idx < total; ++idx) {
    const int j = static_cast<int>(idx / static_cast<long>(Nq));
    const std::size_t i = static_cast<std::size_t>(idx % static_cast<long>(Nq));
    const Vec q = grid.point(i);
    const double t = axis.time(j);
    for (int c = 0; c < out.dim(); ++c) out(j, i, c) = f[c](q, t);
  }
  return out;
}

bool GridFunction::same_layout(const GridFunction& o) const {
  return grid_ == o.grid_ && axis_.M == o.axis_.M && dim_ == o.dim_ &&
         std::abs(axis_.dt - o.axis_.dt) <= 1e-12 * axis_.dt &&
         std::abs(axis_.t0 - o.axis_.t0) <= 1e-12 * std::max(1.0, std::abs(axis_.t0));
}

bool GridFunction::finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

double GridFunction::max_abs() const {
  double m = 0.0;
  for (double x : data_) m = std::max(m, std::abs(x));
  return m;
}

GridFunction GridFunction::crop(int j0, int count) const {
  if (j0 < 0 || count < 1 || j0 + count > axis_.M) throw ConfigError("crop window outside time grid");
  TimeAxis ax{axis_.time(j0), axis_.dt, count};
  GridFunction out(grid_, ax, dim_);
  std::copy(data_.begin() + static_cast<std::ptrdiff_t>(j0 * slice_size()),
            data_.begin() + static_cast<std::ptrdiff_t>((j0 + count) * slice_size()), out.data_.begin());
  return out;
}

GridFunction GridFunction::rebased(double t0) const {
  GridFunction out = *this;
  out.axis_.t0 = t0;
  return out;
}

namespace {
void check_layout(const GridFunction& a, const GridFunction& b) {
  if (!a.same_layout(b)) throw ConfigError("grid functions have incompatible layouts");
}
}  // namespace

GridFunction& GridFunction::operator+=(const GridFunction& o) {
  check_layout(*this, o);
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
  return *this;
}

GridFunction& GridFunction::operator-=(const GridFunction& o) {
  check_layout(*this, o);
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
  return *this;
}

GridFunction& GridFunction::operator*=(double c) {
  for (double& x : data_) x *= c;
  return *this;
}

GridFunction& GridFunction::axpy(double c, const GridFunction& o) {
  check_layout(*this, o);
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += c * o.data_[k];
  return *this;
}

GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
GridFunction operator*(double c, GridFunction a) { return a *= c; }

GridFunction negate(GridFunction a) {
  for (double& x : a.data()) x = 0.0 - x;
  return a;
}

}  // namespace astor
