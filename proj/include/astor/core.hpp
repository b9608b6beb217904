#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace astor {

inline constexpr int kMaxDim = 4;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Fixed-capacity point/vector on T^n or R^n; only the first n entries are meaningful.
using Vec = std::array<double, kMaxDim>;
/// Fixed-capacity n x n matrix, row-major with stride kMaxDim.
using Mat = std::array<double, kMaxDim * kMaxDim>;

inline constexpr double& at(Mat& m, int i, int j) { return m[i * kMaxDim + j]; }
inline constexpr double at(const Mat& m, int i, int j) { return m[i * kMaxDim + j]; }

inline Mat identity(int n) {
  Mat m{};
  for (int i = 0; i < n; ++i) at(m, i, i) = 1.0;
  return m;
}

inline Mat matmul(const Mat& a, const Mat& b, int n) {
  Mat c{};
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const double aik = at(a, i, k);
      for (int j = 0; j < n; ++j) at(c, i, j) += aik * at(b, k, j);
    }
  return c;
}

inline Vec matvec(const Mat& a, const Vec& x, int n) {
  Vec y{};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) y[i] += at(a, i, j) * x[j];
  return y;
}

inline Mat transpose(const Mat& a, int n) {
  Mat t{};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) at(t, j, i) = at(a, i, j);
  return t;
}

double determinant(const Mat& a, int n);

/// Max-entry norm, the matrix norm used for |R|_{C^0}.
inline double max_entry(const Mat& a, int n) {
  double m = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m = std::max(m, std::abs(at(a, i, j)));
  return m;
}

inline double wrap_angle(double x) {
  double r = std::fmod(x, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

/// Signed difference a - b reduced to (-pi, pi].
inline double angle_diff(double a, double b) {
  double d = std::remainder(a - b, kTwoPi);
  return d;
}

/// Euclidean distance on the flat torus.
inline double torus_distance(const Vec& a, const Vec& b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = angle_diff(a[i], b[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

/// Serial reference path or OpenMP-parallel path for the data-parallel kernels.
enum class Exec { Serial, Parallel };

/// Collects the first exception thrown inside an OpenMP loop body so it can be
/// rethrown on the calling thread (exceptions must not escape a parallel region).
class ExceptionSink {
 public:
  template <class F>
  void run(F&& f) {
    try {
      f();
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu_);
      if (!first_) first_ = std::current_exception();
    }
  }
  void rethrow() {
    if (first_) std::rethrow_exception(first_);
  }

 private:
  std::mutex mu_;
  std::exception_ptr first_;
};

// Error hierarchy. Every numerical failure mode named by the module contracts
// maps to one type so callers (and the CLI) can dispatch on it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ResolutionError : public Error {
 public:
  using Error::Error;
};
class DivergenceError : public Error {
 public:
  using Error::Error;
};
class CoverageError : public Error {
 public:
  using Error::Error;
};
class InadmissibleRateError : public Error {
 public:
  using Error::Error;
};
class FoldError : public Error {
 public:
  using Error::Error;
};
class UnsupportedInputError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace astor
