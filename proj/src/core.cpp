#include "astor/core.hpp"

namespace astor {

double determinant(const Mat& a, int n) {
  Mat m = a;
  double det = 1.0;
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(at(m, r, c)) > std::abs(at(m, piv, c))) piv = r;
    if (at(m, piv, c) == 0.0) return 0.0;
    if (piv != c) {
      for (int j = 0; j < n; ++j) std::swap(at(m, c, j), at(m, piv, j));
      det = -det;
    }
    det *= at(m, c, c);
    for (int r = c + 1; r < n; ++r) {
      const double f = at(m, r, c) / at(m, c, c);
      for (int j = c; j < n; ++j) at(m, r, j) -= f * at(m, c, j);
    }
  }
  return det;
}

}  // namespace astor
