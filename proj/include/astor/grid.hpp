#pragma once

#include <cstddef>
#include <vector>

#include "astor/core.hpp"
#include "astor/trig_function.hpp"

namespace astor {

/// Uniform N^n grid on T^n. Flat index i = i_0 + N i_1 + N^2 i_2 + ...
struct TorusGrid {
  int n = 1;
  int N = 32;

  std::size_t size() const;
  std::size_t stride(int axis) const;
  double h() const { return kTwoPi / N; }
  int coord(std::size_t i, int axis) const { return static_cast<int>((i / stride(axis)) % N); }
  Vec point(std::size_t i) const;

  bool operator==(const TorusGrid&) const = default;
};

/// Uniform time grid t_j = t0 + j dt, j < M.
struct TimeAxis {
  double t0 = 0.0;
  double dt = 0.01;
  int M = 1;

  double time(int j) const { return t0 + j * dt; }
  double end() const { return time(M - 1); }

  bool operator==(const TimeAxis&) const = default;
};

/// Samples of a dim-valued function on T^n x {t_j}.
/// Layout: data[(j * grid.size() + i) * dim + c].
class GridFunction {
 public:
  GridFunction() = default;
  GridFunction(TorusGrid grid, TimeAxis axis, int dim);

  static GridFunction sample(const TrigField& f, TorusGrid grid, TimeAxis axis, Exec exec = Exec::Parallel);

  const TorusGrid& grid() const { return grid_; }
  const TimeAxis& axis() const { return axis_; }
  int dim() const { return dim_; }
  int M() const { return axis_.M; }
  std::size_t slice_size() const { return grid_.size() * dim_; }

  double& operator()(int j, std::size_t i, int c) { return data_[(j * grid_.size() + i) * dim_ + c]; }
  double operator()(int j, std::size_t i, int c) const { return data_[(j * grid_.size() + i) * dim_ + c]; }
  double* slice(int j) { return data_.data() + j * slice_size(); }
  const double* slice(int j) const { return data_.data() + j * slice_size(); }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_layout(const GridFunction& o) const;
  bool finite() const;
  double max_abs() const;

  /// Time window [j0, j0 + count).
  GridFunction crop(int j0, int count) const;
  /// Same grid, new time origin (values untouched).
  GridFunction rebased(double t0) const;

  GridFunction& operator+=(const GridFunction& o);
  GridFunction& operator-=(const GridFunction& o);
  GridFunction& operator*=(double c);
  /// this += c * o
  GridFunction& axpy(double c, const GridFunction& o);

 private:
  TorusGrid grid_;
  TimeAxis axis_;
  int dim_ = 1;
  std::vector<double> data_;
};

using TimeGridFunction = GridFunction;

GridFunction operator+(GridFunction a, const GridFunction& b);
GridFunction operator-(GridFunction a, const GridFunction& b);
GridFunction operator*(double c, GridFunction a);

/// Exact value of -u: any sign of zero is mapped to +0.
GridFunction negate(GridFunction a);

}  // namespace astor
