// Acceptance run: one PASS/FAIL line per criterion with its runtime.
// Oracles (closed forms, quadratures, fits, defects) are computed here,
// independently of the library code they check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "astor/diagnostics.hpp"
#include "astor/spectral.hpp"

using namespace astor;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", x);
  return buf;
}

VectorFieldSpec field1(double c, double eps) {
  TrigTimeFunction w(1);
  if (c != 0.0) w.add({0}, Phase::Cos, c);
  if (eps != 0.0) w.add({1}, Phase::Sin, eps);
  return VectorFieldSpec::make({w});
}

VectorFieldSpec coupled2() {
  TrigTimeFunction w1(2), w2(2);
  w1.add({0, 0}, Phase::Cos, 1.0).add({0, 1}, Phase::Sin, 0.3).add({1, 0}, Phase::Cos, 0.2);
  w2.add({0, 0}, Phase::Cos, 0.7).add({1, 1}, Phase::Sin, 0.25);
  return VectorFieldSpec::make({w1, w2});
}

// W = sin q: tan(q/2) = tan(q0/2) e^t.
double sin_flow(double q0, double t) { return wrap_angle(2.0 * std::atan(std::tan(q0 / 2.0) * std::exp(t))); }

TrigField half_m(int n) {
  TrigField m(n * n, TrigTimeFunction(n));
  for (int a = 0; a < n; ++a) m[a * n + a].add(std::vector<int>(n, 0), Phase::Cos, 0.5);
  return m;
}

HamiltonianSpec bench_n1(double s = 1.0) {
  TrigTimeFunction a(1), b(1);
  a.add({1}, Phase::Cos, 0.1 * s, 2.0);
  b.add({1}, Phase::Sin, 0.05 * s, 2.0);
  return hamiltonian_from_parts(field1(1.0, 0.3), a, {b}, half_m(1));
}

// The same Hamiltonian written out as one polynomial in p, for the defect oracle.
TrigTimeFunction bench_n1_full() {
  TrigTimeFunction H(1);
  H.add({{0}, {1}, Phase::Cos, 1.0, 0.0});
  H.add({{1}, {1}, Phase::Sin, 0.3, 0.0});
  H.add({{0}, {2}, Phase::Cos, 0.5, 0.0});
  H.add({{1}, {0}, Phase::Cos, 0.1, 2.0});
  H.add({{1}, {1}, Phase::Sin, 0.05, 2.0});
  return H;
}

SolveConfig bench_config() {
  SolveConfig cfg;
  cfg.N = 64;
  cfg.M = 400;
  cfg.dt = 0.025;
  return cfg;
}

double max_diff(const GridFunction& a, const GridFunction& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k) d = std::max(d, std::abs(a.data()[k] - b.data()[k]));
  return d;
}

// Least-squares slope of log|f^t|_{C^1} over the second half of the slices,
// with the C^1 norm taken as max(|f|, |d_q f|) on the grid.
double fitted_rate(const GridFunction& f) {
  const int M = f.M();
  const int n = f.grid().n;
  std::vector<GridFunction> d;
  for (int a = 0; a < n; ++a) d.push_back(partial_derivative(f, a, 1));
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (int j = M / 2; j < M; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < f.grid().size(); ++i)
      for (int c = 0; c < f.dim(); ++c) {
        m = std::max(m, std::abs(f(j, i, c)));
        for (int a = 0; a < n; ++a) m = std::max(m, std::abs(d[a](j, i, c)));
      }
    if (m < 1e-14) continue;
    const double t = f.axis().time(j), y = std::log(m);
    sx += t;
    sy += y;
    sxx += t * t;
    sxy += t * y;
    ++cnt;
  }
  if (cnt < 8) return std::numeric_limits<double>::infinity();
  return -(cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
}

// Invariance defect of (q + u, v) under the Hamiltonian field of the full H
// (n = 1), weighted C^1 norm on slices 3 .. M-4 with FD4 in time.
double hamiltonian_defect(const TrigTimeFunction& H, const VectorFieldSpec& W, const EmbeddingFamily& fam,
                          double lambda) {
  const auto& u = fam.u;
  const auto& v = fam.v;
  const auto& grid = u.grid();
  const auto& axis = u.axis();
  const TrigTimeFunction Hp = H.dp(0), Hq = H.dq(0);
  const GridFunction du = partial_derivative(u, 0, 1), dv = partial_derivative(v, 0, 1);
  GridFunction r(grid, axis, 2);
  const double h = axis.dt;
  for (int j = 3; j < axis.M - 3; ++j)
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const Vec q = grid.point(i);
      const double w = W.eval(q)[0];
      auto fd4 = [&](const GridFunction& f) {
        return (f(j - 2, i, 0) - 8 * f(j - 1, i, 0) + 8 * f(j + 1, i, 0) - f(j + 2, i, 0)) / (12 * h);
      };
      const Vec x{q[0] + u(j, i, 0)}, p{v(j, i, 0)};
      const double t = axis.time(j);
      r(j, i, 0) = Hp(x, p, t) - w - du(j, i, 0) * w - fd4(u);
      r(j, i, 1) = -Hq(x, p, t) - dv(j, i, 0) * w - fd4(v);
    }
  const GridFunction dr = partial_derivative(r, 0, 1);
  double worst = 0.0;
  for (int j = 3; j < axis.M - 3; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
      for (int c = 0; c < 2; ++c) m = std::max({m, std::abs(r(j, i, c)), std::abs(dr(j, i, c))});
    worst = std::max(worst, m * std::exp(lambda * axis.time(j)));
  }
  return worst;
}

// Shared n = 1 benchmark solve (criteria 6 to 8).
struct Benchmark {
  HamiltonianSpec H = bench_n1();
  std::unique_ptr<InvarianceContext> ctx;
  SolveResult result;
  double solve_seconds = 0.0;
};

Benchmark& benchmark() {
  static std::unique_ptr<Benchmark> b;
  if (!b) {
    const auto t0 = Clock::now();
    b = std::make_unique<Benchmark>();
    b->ctx = std::make_unique<InvarianceContext>(b->H.W, bench_config());
    b->result = iterate_L(b->H, *b->ctx);
    b->solve_seconds = seconds_since(t0);
  }
  return *b;
}

// ---------------------------------------------------------------------------

Verdict flow_correctness() {
  Verdict v;
  const auto W = field1(0.0, 1.0);
  double worst = 0.0;
  for (double q0 : {0.3, 1.0, 2.0, std::numbers::pi / 2, 2.9, 4.0, 5.5})
    for (double t = 0.125; t <= 3.0 + 1e-12; t += 0.125)
      worst = std::max(worst, std::abs(angle_diff(integrate_flow(W, Vec{q0}, t).q[0], sin_flow(q0, t))));
  const auto tab = build_flow_table(W, TorusGrid{1, 32}, 3.0, 13, 1e-3, std::numeric_limits<double>::infinity());
  v.require(worst <= 1e-8, "closed form");
  v.require(tab.group_law_defect <= 1e-8, "group law");
  v.detail << "flow error " << sci(worst) << ", group-law defect " << sci(tab.group_law_defect);
  return v;
}

Verdict propagator_correctness() {
  Verdict v;
  // W = sin q: int_t^tau W'(phi^s q) ds = log(sin phi^tau q / sin phi^t q).
  const auto W = field1(0.0, 1.0);
  double closed = 0.0, cocycle = 0.0;
  for (int sign : {1, -1})
    for (double q : {0.4, 1.3, 2.2, 3.9, 5.0})
      for (auto [t, tau] : {std::pair{0.0, 1.0}, std::pair{0.5, 2.0}, std::pair{1.0, 3.0}, std::pair{0.0, 3.0}}) {
        const double oracle = std::pow(std::sin(sin_flow(q, tau)) / std::sin(sin_flow(q, t)), sign);
        const double got = fundamental_matrix(W, Vec{q}, t, tau, sign)[0];
        closed = std::max(closed, std::abs(got - oracle) / std::max(1.0, std::abs(oracle)));
        const double mid = 0.5 * (t + tau);
        const double ab = fundamental_matrix(W, Vec{q}, t, mid, sign)[0] * fundamental_matrix(W, Vec{q}, mid, tau, sign)[0];
        cocycle = std::max(cocycle, std::abs(ab - got));
      }
  bool identity = true;
  const auto V = coupled2();
  for (double tau : {0.0, 1.5, 3.0})
    for (int sign : {1, -1}) {
      identity = identity && fundamental_matrix(V, Vec{0.7, 2.3}, tau, tau, sign) == astor::identity(2);
      identity = identity && fundamental_matrix(W, Vec{0.7}, tau, tau, sign) == astor::identity(1);
    }
  // 2-D cocycle and det R = exp(sign int tr dW(phi^s q) ds) by composite Simpson along the orbit.
  double liouville = 0.0;
  const Vec q{0.7, 2.3};
  for (int sign : {1, -1}) {
    const Mat a = fundamental_matrix(V, q, 0.5, 2.0, sign), b = fundamental_matrix(V, q, 2.0, 3.5, sign);
    const Mat c = fundamental_matrix(V, q, 0.5, 3.5, sign), ab = matmul(a, b, 2);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) cocycle = std::max(cocycle, std::abs(at(ab, i, j) - at(c, i, j)));
    const int m = 1500;
    const double t = 0.5, tau = 3.5, h = (tau - t) / (2 * m);
    Vec x = integrate_flow(V, q, t, 1e-3, false).q;
    double s = 0.0;
    for (int k = 0; k <= 2 * m; ++k) {
      const Mat B = V.jacobian(x);
      s += (k == 0 || k == 2 * m ? 1.0 : (k % 2 ? 4.0 : 2.0)) * (at(B, 0, 0) + at(B, 1, 1));
      if (k < 2 * m) x = integrate_flow(V, x, h, 1e-4, false).q;
    }
    liouville = std::max(liouville, std::abs(determinant(c, 2) - std::exp(sign * s * h / 3.0)));
  }
  v.require(closed <= 1e-8, "closed form");
  v.require(cocycle <= 1e-8, "cocycle");
  v.require(identity, "R(tau, tau) = Id");
  v.require(liouville <= 1e-6, "Liouville");
  v.detail << "closed form " << sci(closed) << ", cocycle " << sci(cocycle) << ", R(tau,tau)=Id "
           << (identity ? "exact" : "no") << ", Liouville " << sci(liouville);
  return v;
}

TrigField rhs1(double mu) {
  TrigTimeFunction z(1);
  z.add({1}, Phase::Sin, 1.0, mu).add({2}, Phase::Cos, 0.3, mu);
  return {z};
}

Verdict homological_equation() {
  Verdict v;
  // Constant W: k(q, t) = -int_0^{T-t} z(q + omega s, t + s) ds by fine Simpson.
  const TorusGrid g2{2, 16};
  const Vec omega{1.0, std::sqrt(2.0)};
  TrigTimeFunction W1(2), W2(2), za(2), zb(2);
  W1.add({0, 0}, Phase::Cos, omega[0]);
  W2.add({0, 0}, Phase::Cos, omega[1]);
  za.add({1, 0}, Phase::Cos, 1.0, 2.0).add({1, 1}, Phase::Sin, 0.2, 2.0);
  zb.add({0, 1}, Phase::Sin, 0.5, 2.0).add({0, 0}, Phase::Cos, 0.1, 2.0);
  const TrigField zf{za, zb};
  const TimeAxis ax{0.0, 0.025, 161};
  HomologicalSolver rot(VectorFieldSpec::make({W1, W2}), g2, ax.dt, ax.M);
  const auto z2 = GridFunction::sample(zf, g2, ax);
  double transport = 0.0;
  for (int sign : {1, -1}) {
    const auto k = rot.solve(z2, sign);
    for (int j : {0, 40, 100, 150, 160})
      for (std::size_t i = 0; i < g2.size(); i += 5) {
        const double t = ax.time(j), L = ax.end() - t;
        const Vec q = g2.point(i);
        const int m = 2000;
        const double hs = L / (2 * m);
        for (int c = 0; c < 2; ++c) {
          double s = 0.0;
          for (int r = 0; r <= 2 * m && L > 0; ++r) {
            const double sr = r * hs;
            s += ((r == 0 || r == 2 * m) ? 1.0 : (r % 2 ? 4.0 : 2.0)) *
                 zf[c](Vec{q[0] + omega[0] * sr, q[1] + omega[1] * sr}, t + sr);
          }
          transport = std::max(transport, std::abs(k(j, i, c) + s * hs / 3.0));
        }
      }
  }
  // W = 1 + 0.3 sin q, lambda = 2, both signs.
  const auto W = field1(1.0, 0.3);
  const NormSpec spec{1.0, 2.0, 0.0};
  double residual = 0.0, drift = 0.0;
  for (int sign : {1, -1}) {
    double K[2];
    for (int r = 0; r < 2; ++r) {
      const TorusGrid g{1, 32 << r};
      const TimeAxis a{0.0, 0.05 / (1 << r), 80 * (1 << r) + 1};
      HomologicalSolver solver(W, g, a.dt, a.M);
      const auto sol = solve_homological(solver, GridFunction::sample(rhs1(2.0), g, a), sign, false, spec);
      K[r] = sol.K;
      if (r == 1) residual = std::max(residual, sol.residual);
    }
    drift = std::max(drift, std::abs(K[1] - K[0]) / K[0]);
  }
  v.require(transport <= 1e-6, "transport oracle");
  v.require(residual <= 1e-5, "residual");
  v.require(drift <= 0.2, "K stability");
  v.detail << "transport " << sci(transport) << ", residual " << sci(residual) << ", K drift " << sci(drift);
  return v;
}

Verdict linearization() {
  Verdict v;
  SolveConfig cfg = bench_config();
  cfg.N = 32;
  cfg.M = 160;
  // D F at zero is taken with a = b = 0; a cubic term in p keeps F nonlinear.
  TrigTimeFunction Hf(1);
  Hf.add({{0}, {1}, Phase::Cos, 1.0, 0.0});
  Hf.add({{1}, {1}, Phase::Sin, 0.3, 0.0});
  Hf.add({{0}, {2}, Phase::Cos, 0.5, 0.0});
  Hf.add({{1}, {3}, Phase::Cos, 0.2, 0.0});
  const auto H = expand_hamiltonian(Hf);
  InvarianceContext ctx(H.W, cfg);
  std::mt19937_64 rng(3);
  const State zero(2, GridFunction(ctx.grid(), ctx.axis(0.0), 1));
  const State F0 = eval_F(H, ctx, zero);
  double worst = 0.0;
  const double eps = 1e-4;
  for (int trial = 0; trial < 4; ++trial) {
    const State yhat = random_probe(ctx, 0.0, 2, 1.0, rng);
    const State D = apply_linearized(H, ctx, yhat);
    double dnorm = 0.0;
    for (const auto& b : D) dnorm = std::max(dnorm, b.max_abs());
    State y = yhat;
    for (auto& b : y) b *= eps;
    const State F = eval_F(H, ctx, y);
    double e = 0.0;
    for (int c = 0; c < 2; ++c) e = std::max(e, max_diff((1.0 / eps) * (F[c] - F0[c]), D[c]));
    worst = std::max(worst, e / dnorm);
  }
  v.require(worst <= 1e-3, "relative error");
  v.detail << "max relative error at eps = 1e-4: " << sci(worst);
  return v;
}

GridFunction random_decaying(const TorusGrid& grid, const TimeAxis& axis, double mu, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  TrigTimeFunction g(1);
  for (int k = 0; k <= 3; ++k) {
    const double s = 0.5 / (1 + k);
    g.add({k}, Phase::Cos, s * U(rng), mu);
    if (k) g.add({k}, Phase::Sin, s * U(rng), mu);
  }
  return GridFunction::sample({g}, grid, axis);
}

Verdict right_inverse_check() {
  Verdict v;
  const SolveConfig cfg = bench_config();
  const auto H = bench_n1();
  InvarianceContext ctx(H.W, cfg);
  const auto axis = ctx.axis(0.0);
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const State zg{random_decaying(ctx.grid(), axis, 2.0, rng), random_decaying(ctx.grid(), axis, 2.0, rng)};
    const State back = apply_linearized(H, ctx, right_inverse(H, ctx, zg));
    worst = std::max(worst, ctx.residual_norm({back[0] - zg[0], back[1] - zg[1]}));
  }
  v.require(worst <= 2.0 * cfg.tol_residual, "round trip");
  v.detail << "worst weighted defect over 10 instances " << sci(worst) << " (limit " << sci(2 * cfg.tol_residual)
           << ")";
  return v;
}

Verdict contraction() {
  Verdict v;
  auto& b = benchmark();
  const double ups = b.result.report.upsilon_prime;
  const double ratio = probe_contraction(hamiltonian_ops(b.H, *b.ctx), *b.ctx, ups, 5, 0);
  v.require(ratio <= 0.6, "Lipschitz ratio");
  v.detail << "upsilon' = " << ups << ", Lipschitz ratio over 5 pairs " << ratio;
  return v;
}

Verdict end_to_end() {
  Verdict v;
  auto& b = benchmark();
  const auto& r = b.result;
  const auto rep = run_diagnostics(TargetSystem::hamiltonian(b.H), r.family, DiagnosticsOptions::from(bench_config()));
  const double defect = hamiltonian_defect(bench_n1_full(), b.H.W, r.family, 2.0);
  const double ru = fitted_rate(r.family.u), rv = fitted_rate(r.family.v);
  v.require(r.report.converged, "convergence");
  v.require(rep.residual.norm <= 1e-5, "invariance residual");
  v.require(defect <= 1e-5, "full-H defect");
  v.require(ru >= 1.8 && rv >= 1.8, "decay rates");
  v.detail << "iterations " << r.report.iterations << ", residual " << sci(rep.residual.norm) << " (full-H defect "
           << sci(defect) << "), rates u " << ru << " v " << rv;
  return v;
}

Verdict conjugacy() {
  Verdict v;
  auto& b = benchmark();
  const auto X = TargetSystem::hamiltonian(b.H);
  const auto& fam = b.result.family;
  const auto samples = conjugacy_samples(fam, 50, 5.0, 0);
  bool horizon = true;
  for (const auto& s : samples) horizon = horizon && s.t - s.t0 <= 5.0 + 1e-12 && s.t >= s.t0;
  const auto rep = conjugacy_defect(X, fam, samples);
  auto same = samples;
  for (auto& s : same) s.t = s.t0;
  const auto zero = conjugacy_defect(X, fam, same);
  v.require(horizon && samples.size() == 50, "sampling");
  v.require(rep.max_defect <= 1e-4, "defect");
  v.require(zero.max_defect == 0.0, "t = t0");
  v.detail << "max defect over 50 samples " << sci(rep.max_defect) << ", at t = t0 " << zero.max_defect;
  return v;
}

Verdict corollary() {
  Verdict v;
  TrigTimeFunction P(1);
  P.add({1}, Phase::Sin, 0.1, 2.0);
  const VectorFieldProblem prob{field1(1.0, 0.3), {P}};
  const auto r = solve_vectorfield(prob, bench_config());
  const auto rep = run_diagnostics(TargetSystem::vectorfield(prob), r.family, DiagnosticsOptions::from(bench_config()));
  const double rate = fitted_rate(r.family.u);
  v.require(r.report.converged, "convergence");
  v.require(rep.residual.norm <= 1e-5, "residual");
  v.require(rate >= 1.8, "decay rate");
  v.detail << "iterations " << r.report.iterations << ", residual " << sci(rep.residual.norm) << ", rate " << rate;
  return v;
}

Verdict lagrangian() {
  Verdict v;
  TrigTimeFunction w1(2), w2(2), a(2), b1(2), b2(2);
  w1.add({0, 0}, Phase::Cos, 1.0).add({1, 0}, Phase::Sin, 0.3);
  w2.add({0, 0}, Phase::Cos, 1.0).add({0, 1}, Phase::Sin, 0.3);
  a.add({1, 0}, Phase::Cos, 0.1, 2.0).add({0, 1}, Phase::Cos, 0.1, 2.0).add({1, 1}, Phase::Cos, 0.01, 2.0);
  b1.add({1, 0}, Phase::Sin, 0.05, 2.0);
  b2.add({0, 1}, Phase::Sin, 0.05, 2.0);
  const auto H = hamiltonian_from_parts(VectorFieldSpec::make({w1, w2}), a, {b1, b2}, half_m(2));
  SolveConfig cfg;
  cfg.N = 24;
  cfg.M = 200;
  cfg.dt = 0.05;
  const auto r = iterate_L(H, cfg);
  auto opt = DiagnosticsOptions::from(cfg);
  opt.conjugacy_samples = 0;
  const auto rep = run_diagnostics(TargetSystem::hamiltonian(H), r.family, opt);

  // Exact-gradient oracle: v = grad S e^{-2t}, u = 0 has a vanishing pullback.
  EmbeddingFamily grad;
  const TorusGrid g{2, 24};
  const TimeAxis ax{0.0, 0.05, 40};
  grad.u = GridFunction(g, ax, 2);
  grad.v = GridFunction(g, ax, 2);
  for (int j = 0; j < ax.M; ++j)
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Vec q = g.point(i);
      const double e = std::exp(-2.0 * ax.time(j));
      grad.v(j, i, 0) = e * (-std::sin(q[0] + 2 * q[1]) + 0.3 * std::cos(q[0]) * std::cos(q[1]));
      grad.v(j, i, 1) = e * (-2 * std::sin(q[0] + 2 * q[1]) - 0.3 * std::sin(q[0]) * std::sin(q[1]));
    }
  const double oracle = lagrangian_coefficients(grad).max;

  v.require(r.report.converged, "convergence");
  v.require(rep.lagrangian.at_upsilon <= 10.0 * rep.residual.norm, "pullback at upsilon'");
  v.require(oracle <= 1e-8, "gradient oracle");
  v.detail << "residual " << sci(rep.residual.norm) << ", pullback at upsilon' " << sci(rep.lagrangian.at_upsilon)
           << " (limit " << sci(10.0 * rep.residual.norm) << "), gradient oracle " << sci(oracle);
  return v;
}

Verdict trivial() {
  Verdict v;
  SolveConfig cfg = bench_config();
  cfg.M = 200;
  const auto H0 = bench_n1(0.0);
  const auto r = iterate_L(H0, cfg);
  const auto d = run_diagnostics(TargetSystem::hamiltonian(H0), r.family, DiagnosticsOptions::from(cfg));
  const VectorFieldProblem prob{field1(1.0, 0.3), {TrigTimeFunction(1)}};
  const auto rv = solve_vectorfield(prob, cfg);
  const auto dv = run_diagnostics(TargetSystem::vectorfield(prob), rv.family, DiagnosticsOptions::from(cfg));
  for (const auto* res : {&r, &rv}) {
    v.require(res->report.converged && res->report.iterations == 0, "iteration 0");
    v.require(res->family.u.max_abs() == 0.0 && (!res->family.has_v() || res->family.v.max_abs() == 0.0),
              "zero family");
  }
  for (const auto* rep : {&d, &dv}) {
    v.require(rep->residual.norm == 0.0, "residual");
    v.require(rep->conjugacy.max_defect == 0.0, "conjugacy");
    v.require(rep->extension.consistency == 0.0, "extension");
    v.require(rep->all_pass(), "all checks");
  }
  v.detail << "iterations 0/0, residual " << d.residual.norm << "/" << dv.residual.norm << ", conjugacy "
           << d.conjugacy.max_defect << "/" << dv.conjugacy.max_defect;
  return v;
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Verdict()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "flow correctness", 5, flow_correctness},
      {2, "propagator correctness", 10, propagator_correctness},
      {3, "homological equation", 60, homological_equation},
      {4, "linearization fidelity", 0, linearization},
      {5, "right inverse", 0, right_inverse_check},
      {6, "contraction", 0, contraction},
      {7, "end-to-end n=1 benchmark", 300, end_to_end},
      {8, "conjugacy", 0, conjugacy},
      {9, "vector-field corollary", 120, corollary},
      {10, "Lagrangian check n=2", 0, lagrangian},
      {11, "trivial fixed point", 0, trivial},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << "exception: " << e.what();
    }
    double secs = seconds_since(t0);
    // Criterion 7 is end to end: count the benchmark solve that criterion 6 triggered.
    if (c.id == 7) {
      secs += benchmark().solve_seconds;
      v.detail << " (runtime includes the shared solve)";
    }
    if (c.limit_seconds > 0 && secs > c.limit_seconds) v.require(false, "runtime above " + std::to_string(c.limit_seconds) + " s");
    std::printf("%s  [%2d] %-26s %7.2f s  %s\n", v.pass ? "PASS" : "FAIL", c.id, c.name, secs, v.detail.str().c_str());
    std::fflush(stdout);
    if (!v.pass) ++failed;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
