#include "astor/homological.hpp"

#include <complex>
#include <limits>
#include <string>

namespace astor {

std::vector<double> rectify_offsets(const TimeAxis& axis, RectifyDirection dir) {
  std::vector<double> out(axis.M);
  const double s = dir == RectifyDirection::Forward ? -1.0 : 1.0;
  for (int j = 0; j < axis.M; ++j) out[j] = s * axis.time(j);
  return out;
}

GridFunction rectify(const GridFunction& f, const FlowTable& table, RectifyDirection dir, int interp_width,
                     Exec exec) {
  if (!(table.grid == f.grid())) throw ConfigError("rectify: flow table grid does not match the function grid");
  const auto& grid = f.grid();
  const std::size_t Nq = grid.size();
  const int M = f.M(), dim = f.dim();
  const auto offs = rectify_offsets(f.axis(), dir);
  std::vector<int> kidx(M);
  for (int j = 0; j < M; ++j) kidx[j] = table.find(offs[j]);

  GridFunction out(grid, f.axis(), dim);
  const long total = static_cast<long>(M) * static_cast<long>(Nq);
  ExceptionSink sink;
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (long idx = 0; idx < total; ++idx) {
    sink.run([&] {
      const int j = static_cast<int>(idx / static_cast<long>(Nq));
      const std::size_t i = static_cast<std::size_t>(idx % static_cast<long>(Nq));
      const Vec& x = table.flow(kidx[j], i);
      if (interp_width <= 0) {
        trig_interpolate(grid, f.slice(j), dim, x, &out(j, i, 0));
      } else {
        interpolate(grid, f.slice(j), dim, lagrange_stencil(grid, x, interp_width), &out(j, i, 0));
      }
    });
  }
  sink.rethrow();
  return out;
}

void quadrature_weights(int K, double h, double* w) {
  if (K < 0) throw ConfigError("quadrature_weights: negative interval count");
  if (K == 0) {
    w[0] = 0.0;
    return;
  }
  for (int k = 0; k <= K; ++k) w[k] = 0.0;
  if (K == 1) {
    w[0] = w[1] = 0.5 * h;
    return;
  }
  const int simpson_end = (K % 2 == 0) ? K : K - 3;
  for (int k = 0; k < simpson_end; k += 2) {
    w[k] += h / 3.0;
    w[k + 1] += 4.0 * h / 3.0;
    w[k + 2] += h / 3.0;
  }
  if (simpson_end != K) {
    const int b = simpson_end;
    w[b] += 3.0 * h / 8.0;
    w[b + 1] += 9.0 * h / 8.0;
    w[b + 2] += 9.0 * h / 8.0;
    w[b + 3] += 3.0 * h / 8.0;
  }
}

double default_horizon(double lambda, double threshold) {
  if (!(lambda > 0.0)) throw InadmissibleRateError("decay rate must be positive");
  const double a = 10.0 / lambda;
  if (lambda <= threshold) return a;
  return std::max(a, 5.0 / (lambda - threshold));
}

HomologicalSolver::HomologicalSolver(VectorFieldSpec W, TorusGrid grid, double dt, int M, HomologicalOptions opt,
                                     Exec exec)
    : W_(std::move(W)), grid_(grid), dt_(dt), M_(M), opt_(opt), exec_(exec) {
  if (W_.n != grid_.n) throw ConfigError("homological solver: field and grid dimensions differ");
  if (!(dt_ > 0.0) || M_ < 1) throw ConfigError("homological solver: need dt > 0 and M >= 1");
  if (opt_.interp_width < 1 || opt_.interp_width > kMaxStencil)
    throw ConfigError("homological solver: interpolation width out of range");
}

const GrowthConstants& HomologicalSolver::growth() const {
  if (!growth_) growth_ = measure_growth(W_, 0.0, 0, 64, opt_.h_ode, exec_);
  return *growth_;
}

bool HomologicalSolver::admissible(double lambda) const {
  return lambda > 0.0 && lambda > growth().admissibility_threshold();
}

void HomologicalSolver::check_admissible(double lambda) const {
  if (admissible(lambda) || opt_.allow_inadmissible) return;
  throw InadmissibleRateError("decay rate " + std::to_string(lambda) + " does not exceed c_kappa |d_q W|_C0 = " +
                              std::to_string(growth().admissibility_threshold()));
}

HomologicalSolver::Prepared& HomologicalSolver::prepare(int sign, bool transpose) {
  if (sign != 1 && sign != -1) throw ConfigError("homological solver: sign must be +1 or -1");
  if (W_.n == 1) transpose = false;
  auto key = std::make_pair(sign, transpose);
  auto it = prepared_.find(key);
  if (it != prepared_.end()) return *it->second;

  auto p = std::make_unique<Prepared>();
  p->tab = build_propagator_table(W_, grid_, dt_, M_, sign, transpose, opt_.h_ode, exec_);
  const std::size_t Nq = grid_.size();
  if (M_ >= 3) {
    p->back = build_propagator_table(W_, grid_, -dt_, 3, sign, transpose, opt_.h_ode, exec_);
    p->back_stencils.resize(2 * Nq);
    for (int k = 1; k <= 2; ++k)
      for (std::size_t i = 0; i < Nq; ++i)
        p->back_stencils[(k - 1) * Nq + i] = lagrange_stencil(grid_, p->back.flow(k, i), opt_.interp_width);
  }
  p->stencils.resize(static_cast<std::size_t>(M_) * Nq);
  const long total = static_cast<long>(p->stencils.size());
  ExceptionSink sink;
#pragma omp parallel for schedule(static) if (exec_ == Exec::Parallel)
  for (long idx = 0; idx < total; ++idx) {
    sink.run([&] {
      const int k = static_cast<int>(idx / static_cast<long>(Nq));
      const std::size_t i = static_cast<std::size_t>(idx % static_cast<long>(Nq));
      p->stencils[idx] = lagrange_stencil(grid_, p->tab.flow(k, i), opt_.interp_width);
    });
  }
  sink.rethrow();
  return *prepared_.emplace(key, std::move(p)).first->second;
}

const PropagatorTable& HomologicalSolver::table(int sign, bool transpose) { return prepare(sign, transpose).tab; }

void HomologicalSolver::check_input(const GridFunction& z) const {
  if (!(z.grid() == grid_)) throw ConfigError("homological solve: right-hand side grid mismatch");
  if (z.M() != M_ || std::abs(z.axis().dt - dt_) > 1e-14 * dt_)
    throw ConfigError("homological solve: right-hand side time axis mismatch");
  if (z.dim() != W_.n) throw ConfigError("homological solve: right-hand side must have n components");
  if (!z.finite()) throw DivergenceError("homological solve: right-hand side is not finite");
}

namespace {

// Adams-Moulton panel on nodes -2, -1, 0, 1 (units of dt) for the last
// interval: a lone trapezoid there spoils the time derivative near T.
constexpr double kLastPanel[4] = {1.0 / 24.0, -5.0 / 24.0, 19.0 / 24.0, 9.0 / 24.0};

// acc += w * G z for an n-vector z.
inline void accumulate(int n, double w, const Mat& G, const double* z, double* acc) {
  for (int r = 0; r < n; ++r) {
    double s = 0.0;
    for (int c = 0; c < n; ++c) s += at(G, r, c) * z[c];
    acc[r] += w * s;
  }
}

}  // namespace

GridFunction HomologicalSolver::solve(const GridFunction& z, int sign, bool transpose) {
  check_input(z);
  const Prepared& p = prepare(sign, transpose);
  const int n = W_.n, M = M_, N = grid_.N;
  const std::size_t Nq = grid_.size();
  const int closing = (M - 2 >= 2) ? M - 2 : -1;

  // Weights for every interval count K = M - 1 - j.
  std::vector<double> weights(static_cast<std::size_t>(M) * M, 0.0);
  for (int K = 0; K < M; ++K) quadrature_weights(K, dt_, &weights[static_cast<std::size_t>(K) * M]);

  // Time-contiguous copy: zT[(node * M + t) * n + c].
  std::vector<double> zT(Nq * M * n);
  for (int t = 0; t < M; ++t)
    for (std::size_t i = 0; i < Nq; ++i)
      for (int c = 0; c < n; ++c) zT[(i * M + t) * n + c] = z(t, i, c);

  GridFunction kappa(grid_, z.axis(), n);
  ExceptionSink sink;
#pragma omp parallel if (exec_ == Exec::Parallel)
  {
    // For a fixed (k, i) the stencil is shared by every time row, so the
    // interpolated values of z along the whole time axis are built at once.
    std::vector<double> acc(static_cast<std::size_t>(M) * n), v(static_cast<std::size_t>(M) * n);
#pragma omp for schedule(dynamic)
    for (long ii = 0; ii < static_cast<long>(Nq); ++ii) {
      sink.run([&] {
        const std::size_t i = static_cast<std::size_t>(ii);
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int k = 0; k < M; ++k) {
          const int t_end = M;  // rows j <= M - 1 - k read times t = j + k < M
          std::fill(v.begin() + k * n, v.begin() + t_end * n, 0.0);
          const PointStencil& st = p.stencils[k * Nq + i];
          std::array<int, kMaxDim> m{};
          while (true) {
            double w = 1.0;
            std::size_t node = 0, stride = 1;
            for (int a = 0; a < n; ++a) {
              const AxisStencil& s = st.axis[a];
              w *= s.w[m[a]];
              node += static_cast<std::size_t>((s.start + m[a]) % N) * stride;
              stride *= N;
            }
            const double* src = &zT[node * M * n];
            for (int e = k * n; e < t_end * n; ++e) v[e] += w * src[e];
            int a = 0;
            while (a < n && ++m[a] == st.axis[a].width) m[a++] = 0;
            if (a == n) break;
          }
          const Mat& G = p.tab.prop(k, i);
          for (int j = 0; j + k < t_end && j < M - 1; ++j) {
            if (j == closing) continue;
            const double wk = weights[static_cast<std::size_t>(M - 1 - j) * M + k];
            accumulate(n, wk, G, &v[(j + k) * n], &acc[j * n]);
          }
        }
        for (int j = 0; j < M - 1; ++j)
          for (int c = 0; c < n; ++c) kappa(j, i, c) = -acc[j * n + c];
        if (closing >= 0) {
          const int j = closing;
          double a2[kMaxDim] = {0, 0, 0, 0};
          double zv[kMaxDim];
          for (int k = 0; k <= 1; ++k) {
            interpolate(grid_, z.slice(j + k), n, p.stencils[k * Nq + i], zv);
            accumulate(n, kLastPanel[k + 2] * dt_, p.tab.prop(k, i), zv, a2);
          }
          for (int k = 1; k <= 2; ++k) {
            interpolate(grid_, z.slice(j - k), n, p.back_stencils[(k - 1) * Nq + i], zv);
            accumulate(n, kLastPanel[2 - k] * dt_, p.back.prop(k, i), zv, a2);
          }
          for (int c = 0; c < n; ++c) kappa(j, i, c) = -a2[c];
        }
      });
    }
  }
  sink.rethrow();
  return kappa;
}

GridFunction HomologicalSolver::solve_reference(const GridFunction& z, int sign, bool transpose) {
  check_input(z);
  const Prepared& p = prepare(sign, transpose);
  const PropagatorTable& tab = p.tab;
  const int n = W_.n, M = M_;
  const std::size_t Nq = grid_.size();
  GridFunction kappa(grid_, z.axis(), n);
  std::vector<double> w(M);
  for (int j = 0; j < M; ++j) {
    const int K = M - 1 - j;
    quadrature_weights(K, dt_, w.data());
    for (std::size_t i = 0; i < Nq; ++i) {
      double acc[kMaxDim] = {0, 0, 0, 0};
      double zv[kMaxDim];
      if (K == 1 && j >= 2) {
        for (int k = 0; k <= 1; ++k) {
          const PointStencil st = lagrange_stencil(grid_, tab.flow(k, i), opt_.interp_width);
          interpolate(grid_, z.slice(j + k), n, st, zv);
          accumulate(n, kLastPanel[k + 2] * dt_, tab.prop(k, i), zv, acc);
        }
        for (int k = 1; k <= 2; ++k) {
          const PointStencil st = lagrange_stencil(grid_, p.back.flow(k, i), opt_.interp_width);
          interpolate(grid_, z.slice(j - k), n, st, zv);
          accumulate(n, kLastPanel[2 - k] * dt_, p.back.prop(k, i), zv, acc);
        }
      } else {
        for (int k = 0; k <= K; ++k) {
          if (w[k] == 0.0) continue;
          const PointStencil st = lagrange_stencil(grid_, tab.flow(k, i), opt_.interp_width);
          interpolate(grid_, z.slice(j + k), n, st, zv);
          accumulate(n, w[k], tab.prop(k, i), zv, acc);
        }
      }
      for (int c = 0; c < n; ++c) kappa(j, i, c) = -acc[c];
    }
  }
  return kappa;
}

GridFunction residual_HE(const GridFunction& kappa, const GridFunction& z, const VectorFieldSpec& W, int sign,
                         bool transpose, Exec exec) {
  if (!kappa.same_layout(z)) throw ConfigError("residual_HE: kappa and z layouts differ");
  const auto& grid = kappa.grid();
  const int n = W.n;
  if (kappa.dim() != n) throw ConfigError("residual_HE: expected n components");
  const TimeAxis one{0.0, 1.0, 1};
  const GridFunction Wg = GridFunction::sample(W.W, grid, one, exec);
  const GridFunction Bg = GridFunction::sample(W.dW, grid, one, exec);
  GridFunction r = transport_derivative(kappa, Wg, TimeStencil::FD4, exec);
  const std::size_t Nq = grid.size();
  const long total = static_cast<long>(kappa.M()) * static_cast<long>(Nq);
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (long idx = 0; idx < total; ++idx) {
    const int j = static_cast<int>(idx / static_cast<long>(Nq));
    const std::size_t i = static_cast<std::size_t>(idx % static_cast<long>(Nq));
    for (int a = 0; a < n; ++a) {
      double s = 0.0;
      for (int b = 0; b < n; ++b) {
        const int comp = transpose ? b * n + a : a * n + b;
        s += Bg(0, i, comp) * kappa(j, i, b);
      }
      r(j, i, a) += sign * s - z(j, i, a);
    }
  }
  return r;
}

WeightedNorm interior_norm(const GridFunction& r, double sigma, double lambda, int margin, Exec exec) {
  const int M = r.M();
  if (M <= 2 * margin) return weighted_norm(r, sigma, lambda, exec);
  return weighted_norm(r, sigma, lambda, exec, margin, M - margin);
}

double tail_bound(double z0_weighted, double lambda, double growth_rate, double horizon) {
  if (!(lambda > growth_rate)) return std::numeric_limits<double>::infinity();
  return z0_weighted * std::exp(-(lambda - growth_rate) * horizon) / (lambda - growth_rate);
}

HomologicalSolution solve_homological(HomologicalSolver& solver, const GridFunction& z, int sign, bool transpose,
                                      const NormSpec& spec) {
  spec.validate();
  HomologicalSolution out;
  out.growth = solver.growth();
  out.admissible = solver.admissible(spec.lambda);
  solver.check_admissible(spec.lambda);
  out.kappa = solver.solve(z, sign, transpose);
  out.T_max = z.axis().end();
  const GridFunction r = residual_HE(out.kappa, z, solver.field(), sign, transpose);
  out.residual = interior_norm(r, spec.sigma, spec.lambda).value;
  out.kappa_norm = weighted_norm(out.kappa, spec).value;
  out.z_norm = weighted_norm(z, spec).value;
  out.K = out.z_norm > 0.0 ? out.kappa_norm / out.z_norm : 0.0;
  const double z0 = weighted_norm(z, 0.0, spec.lambda).value;
  out.tail_bound = tail_bound(z0, spec.lambda, out.growth.rate_prop, out.T_max - spec.upsilon);
  return out;
}

HomologicalSolution solve_homological(const HomologicalProblem& prob, Exec exec) {
  HomologicalSolver solver(prob.W, prob.z.grid(), prob.z.axis().dt, prob.z.M(), prob.options, exec);
  return solve_homological(solver, prob.z, prob.sign, prob.transpose, prob.spec);
}

GridFunction transport_solution(const TrigField& z, const Vec& omega, const TorusGrid& grid, const TimeAxis& axis) {
  const int n = grid.n;
  if (static_cast<int>(z.size()) != n) throw ConfigError("transport_solution: z must have n components");
  GridFunction out(grid, axis, n);
  const double T = axis.end();
  for (int c = 0; c < n; ++c)
    for (const auto& term : z[c].terms()) {
      if (term.p_degree() != 0) throw UnsupportedInputError("transport_solution: p-dependent term");
      double nu = 0.0;
      for (int a = 0; a < n; ++a) nu += term.k[a] * omega[a];
      const std::complex<double> rate(-term.mu, nu);
      for (int j = 0; j < axis.M; ++j) {
        const double t = axis.time(j), L = T - t;
        // int_0^L exp(rate s) ds
        const std::complex<double> I =
            std::abs(rate) < 1e-300 ? std::complex<double>(L, 0.0) : (std::exp(rate * L) - 1.0) / rate;
        for (std::size_t i = 0; i < grid.size(); ++i) {
          const Vec q = grid.point(i);
          double kq = 0.0;
          for (int a = 0; a < n; ++a) kq += term.k[a] * q[a];
          const std::complex<double> v = std::exp(std::complex<double>(0.0, kq)) * I;
          const double part = term.phase == Phase::Cos ? v.real() : v.imag();
          out(j, i, c) -= term.amp * std::exp(-term.mu * t) * part;
        }
      }
    }
  return out;
}

}  // namespace astor
