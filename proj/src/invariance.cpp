#include "astor/invariance.hpp"

#include <limits>
#include <sstream>

#include "astor/report.hpp"

namespace astor {

namespace {

TrigTimeFunction sum_all(int n, const std::vector<TrigTimeFunction>& parts) {
  TrigTimeFunction out(n);
  for (const auto& p : parts) out = out + p;
  return out;
}

double eval_at(const TrigTimeFunction& f, const Vec& q, const Vec& p, double t) {
  return f.empty() ? 0.0 : f(q, p, t);
}

}  // namespace

HamiltonianSpec HamiltonianSpec::make(VectorFieldSpec W, TrigTimeFunction a, TrigField b, TrigTimeFunction quad,
                                      double sigma) {
  HamiltonianSpec H;
  const int n = W.n;
  H.n = n;
  if (a.n() != n || quad.n() != n) throw ConfigError("Hamiltonian parts must share the torus dimension");
  if (b.empty()) b.assign(n, TrigTimeFunction(n));
  if (static_cast<int>(b.size()) != n) throw ConfigError("b must have n components");
  for (const auto& bi : b) {
    if (bi.n() != n) throw ConfigError("b components must share the torus dimension");
    if (bi.max_p_degree() > 0) throw UnsupportedInputError("b must not depend on p");
  }
  if (a.max_p_degree() > 0) throw UnsupportedInputError("a must not depend on p");
  for (const auto& t : quad.terms()) {
    const int d = t.p_degree();
    if (d < 2) throw UnsupportedInputError("quadratic remainder has a term of p-degree < 2");
    if (d > 4) throw UnsupportedInputError("p-degree above 4 is not supported");
  }
  H.W = std::move(W);
  H.a = std::move(a);
  H.b = std::move(b);
  H.quad = std::move(quad);
  H.sigma = sigma;

  for (int k = 0; k < n; ++k) H.da.push_back(H.a.dq(k));
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) H.db.push_back(H.b[i].dq(k));
  for (int i = 0; i < n; ++i) H.dquad_p.push_back(H.quad.dp(i));
  for (int k = 0; k < n; ++k) H.dquad_q.push_back(H.quad.dq(k));
  const TrigTimeFunction q2 = H.quad.p_degree_part(2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) H.mbar0.push_back(q2.dp(i).dp(j));

  // Upsilon: max(1, sup_t |a|_{C^{sigma+1}}, sup_t |b|_{C^sigma}, sup |d_p^2 Q| on |p|_inf <= 1 at t = 0).
  double ups = 1.0;
  ups = std::max(ups, tail_certificate(H.a, sigma + 1.0, 0.0, 0.0));
  for (const auto& bi : H.b) ups = std::max(ups, tail_certificate(bi, sigma, 0.0, 0.0));
  if (!H.quad.empty()) {
    const TorusGrid g{n, n == 1 ? 64 : (n == 2 ? 16 : 8)};
    const auto mb = H.mbar_matrix();
    std::vector<TrigTimeFunction> hess;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) hess.push_back(H.quad.dp(i).dp(j));
    int corners = 1;
    for (int a = 0; a < n; ++a) corners *= 3;
    for (std::size_t i = 0; i < g.size(); ++i)
      for (int c = 0; c < corners; ++c) {
        Vec p{};
        for (int a = 0, r = c; a < n; ++a, r /= 3) p[a] = (r % 3) - 1.0;
        for (const auto& h : hess) ups = std::max(ups, std::abs(h(g.point(i), p, 0.0)));
      }
  }
  H.Upsilon = ups;
  return H;
}

double HamiltonianSpec::H(const Vec& q, const Vec& p, double t) const {
  const Vec w = W.eval(q);
  double s = eval_at(a, q, p, t) + eval_at(quad, q, p, t);
  for (int i = 0; i < n; ++i) s += (w[i] + eval_at(b[i], q, p, t)) * p[i];
  return s;
}

Vec HamiltonianSpec::dH_dp(const Vec& q, const Vec& p, double t) const {
  const Vec w = W.eval(q);
  Vec out{};
  for (int i = 0; i < n; ++i) out[i] = w[i] + eval_at(b[i], q, p, t) + eval_at(dquad_p[i], q, p, t);
  return out;
}

Vec HamiltonianSpec::dH_dq(const Vec& q, const Vec& p, double t) const {
  const Mat J = W.jacobian(q);
  Vec out{};
  for (int k = 0; k < n; ++k) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += at(J, i, k) * p[i];
    s += eval_at(da[k], q, p, t);
    for (int i = 0; i < n; ++i) s += eval_at(db[i * n + k], q, p, t) * p[i];
    s += eval_at(dquad_q[k], q, p, t);
    out[k] = s;
  }
  return out;
}

TrigField HamiltonianSpec::m_matrix() const {
  TrigField m;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      std::vector<TrigTimeFunction> parts;
      for (int d = 2; d <= 4; ++d)
        parts.push_back(quad.p_degree_part(d).dp(i).dp(j).scaled(1.0 / (d * (d - 1))));
      m.push_back(sum_all(n, parts));
    }
  return m;
}

TrigField HamiltonianSpec::mbar_matrix() const {
  TrigField m;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      std::vector<TrigTimeFunction> parts;
      for (int d = 2; d <= 4; ++d) parts.push_back(quad.p_degree_part(d).dp(i).dp(j).scaled(1.0 / (d - 1)));
      m.push_back(sum_all(n, parts));
    }
  return m;
}

nlohmann::json HamiltonianSpec::to_json() const {
  return {{"n", n},
          {"W", field_to_json(W.W)},
          {"a", a.to_json()},
          {"b", field_to_json(b)},
          {"quad", quad.to_json()},
          {"Upsilon", num(Upsilon, "computed bound max(1, |a|_{C^{sigma+1}}, |b|_{C^sigma}, |d_p^2 H|_{C^0}); reported only")}};
}

HamiltonianSpec expand_hamiltonian(const TrigTimeFunction& H, double sigma) {
  const int n = H.n();
  if (H.max_p_degree() > 4) throw UnsupportedInputError("Hamiltonian p-degree above 4 is not supported");
  TrigTimeFunction a(n), quad(n);
  TrigField W(n, TrigTimeFunction(n)), b(n, TrigTimeFunction(n));
  for (const auto& t : H.terms()) {
    const int d = t.p_degree();
    if (d == 0) {
      a.add(t);
    } else if (d == 1) {
      int axis = 0;
      while (t.alpha[axis] == 0) ++axis;
      TrigTerm c = t;
      c.alpha[axis] = 0;
      (c.mu == 0.0 ? W[axis] : b[axis]).add(c);
    } else {
      quad.add(t);
    }
  }
  return HamiltonianSpec::make(VectorFieldSpec::make(W, sigma), a, b, quad, sigma);
}

HamiltonianSpec hamiltonian_from_parts(VectorFieldSpec W, TrigTimeFunction a, TrigField b, const TrigField& m,
                                       double sigma) {
  const int n = W.n;
  TrigTimeFunction quad(n);
  if (!m.empty()) {
    if (static_cast<int>(m.size()) != n * n) throw ConfigError("m must have n*n entries");
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const auto& e = m[i * n + j];
        if (e.n() != n) throw ConfigError("m entries must share the torus dimension");
        if (e.max_p_degree() > 2) throw UnsupportedInputError("m entries must have p-degree <= 2");
        quad = quad + e.times_p(i).times_p(j);
      }
  }
  return HamiltonianSpec::make(std::move(W), std::move(a), std::move(b), std::move(quad), sigma);
}

// ---------------------------------------------------------------------------

void SolveConfig::validate() const {
  spec.validate(1.0);
  if (!(spec.lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (N < 8) throw ConfigError("N must be at least 8");
  if (M != 0 && M < 5) throw ConfigError("M must be 0 (automatic) or at least 5");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (horizon < 0.0) throw ConfigError("horizon must be >= 0");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw ConfigError("keep_fraction must lie in (0, 1]");
  if (!(tol_residual > 0.0) || !(tol_fixed_point > 0.0)) throw ConfigError("tolerances must be positive");
  if (max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
  if (upsilon_cap < spec.upsilon) throw ConfigError("upsilon_cap must be >= the initial upsilon");
  if (probes < 0) throw ConfigError("probes must be >= 0");
  if (interp_width < 1 || interp_width > kMaxStencil) throw ConfigError("interp_width out of range");
  if (!(h_ode > 0.0)) throw ConfigError("h_ode must be positive");
}

nlohmann::json SolveConfig::to_json() const {
  return {{"sigma", spec.sigma},
          {"lambda", spec.lambda},
          {"upsilon", spec.upsilon},
          {"N", N},
          {"M", M},
          {"dt", dt},
          {"horizon", horizon},
          {"keep_fraction", keep_fraction},
          {"tol_residual", tol_residual},
          {"tol_fixed_point", tol_fixed_point},
          {"max_iterations", max_iterations},
          {"upsilon_cap", upsilon_cap},
          {"probes", probes},
          {"probe_threshold", probe_threshold},
          {"seed", seed},
          {"interp_width", interp_width},
          {"h_ode", h_ode},
          {"fold_tol", fold_tol}};
}

InvarianceContext::InvarianceContext(VectorFieldSpec W, const SolveConfig& cfg, Exec exec)
    : cfg_(cfg), grid_{W.n, cfg.N}, exec_(exec) {
  cfg_.validate();
  const GrowthConstants growth = measure_growth(W, 0.0, 0, 64, cfg_.h_ode, exec_);
  const double thr = growth.admissibility_threshold();
  if (cfg_.M > 0) {
    M_ = cfg_.M;
  } else {
    const double H = cfg_.horizon > 0.0 ? cfg_.horizon : default_horizon(cfg_.spec.lambda, thr);
    M_ = static_cast<int>(std::ceil(H / cfg_.keep_fraction / cfg_.dt - 1e-9)) + 1;
  }
  horizon_ = (kept_slices() - 1) * cfg_.dt;
  HomologicalOptions opt;
  opt.interp_width = cfg_.interp_width;
  opt.h_ode = cfg_.h_ode;
  opt.allow_inadmissible = true;  // the iteration proceeds and reports a warning instead
  solver_ = std::make_unique<HomologicalSolver>(std::move(W), grid_, cfg_.dt, M_, opt, exec_);
  solver_->set_growth(growth);
  const TimeAxis one{0.0, 1.0, 1};
  Wg_ = GridFunction::sample(field().W, grid_, one, exec_);
  dWg_ = GridFunction::sample(field().dW, grid_, one, exec_);
}

int InvarianceContext::kept_slices() const {
  const int k = static_cast<int>(std::floor(cfg_.keep_fraction * (M_ - 1) + 1e-9)) + 1;
  return std::clamp(k, 1, M_);
}

// Both norms look only at the kept window: near the end of the computational
// window the solution is at roundoff level and e^{lambda t} would inflate it.
double InvarianceContext::state_norm(const State& y) const {
  const int end = kept_slices();
  double m = 0.0;
  for (const auto& b : y) {
    m = std::max(m, weighted_norm(b, cfg_.spec.sigma, cfg_.spec.lambda, exec_, 0, end).value);
    const GridFunction T = transport_derivative(b, Wg_, TimeStencil::FD4, exec_);
    m = std::max(m, weighted_norm(T, cfg_.spec.sigma, cfg_.spec.lambda, exec_, 0, end).value);
  }
  return m;
}

double InvarianceContext::residual_norm(const State& F) const {
  const int margin = 2;
  const int end = std::min(kept_slices(), M_ - margin);
  if (end <= margin) throw ConfigError("time window too short for the residual");
  double m = 0.0;
  for (const auto& b : F)
    m = std::max(m, weighted_norm(b, cfg_.spec.sigma, cfg_.spec.lambda, exec_, margin, end).value);
  return m;
}

// ---------------------------------------------------------------------------

double check_fold(const GridFunction& u, double tol, Exec exec) {
  const int n = u.grid().n;
  const GridFunction J = jacobian(u, exec);
  const std::size_t Nq = u.grid().size();
  double worst = std::numeric_limits<double>::infinity();
  for (int j = 0; j < u.M(); ++j)
    for (std::size_t i = 0; i < Nq; ++i) {
      Mat A = identity(n);
      for (int c = 0; c < n; ++c)
        for (int a = 0; a < n; ++a) A[c * kMaxDim + a] += J(j, i, c * n + a);
      worst = std::min(worst, determinant(A, n));
    }
  if (!(worst > tol)) {
    std::ostringstream os;
    os << "embedding folds: min det(Id + d_q u) = " << worst;
    throw FoldError(os.str());
  }
  return worst;
}

namespace {

void check_state(const State& y, int blocks, const InvarianceContext& ctx) {
  if (static_cast<int>(y.size()) != blocks) throw ConfigError("state has the wrong number of blocks");
  for (const auto& b : y) {
    if (!(b.grid() == ctx.grid()) || b.M() != ctx.M() || b.dim() != ctx.grid().n)
      throw ConfigError("state block does not match the discretization");
    if (!b.finite()) throw DivergenceError("state is not finite");
  }
}

GridFunction sample_matrix(const TrigField& f, const TorusGrid& grid, const TimeAxis& axis, Exec exec) {
  bool autonomous = true;
  for (const auto& e : f) autonomous = autonomous && e.is_autonomous();
  return GridFunction::sample(f, grid, autonomous ? TimeAxis{axis.t0, axis.dt, 1} : axis, exec);
}

// out(j, i, r) += s * sum_c A(j or 0, i, r * n + c (or c * n + r)) x(j, i, c)
void add_matvec(GridFunction& out, const GridFunction& A, const GridFunction& x, bool transpose, double s,
                Exec exec) {
  const int n = out.dim();
  const std::size_t Nq = out.grid().size();
  const long total = static_cast<long>(out.M()) * static_cast<long>(Nq);
  const bool single = A.M() == 1;
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (long idx = 0; idx < total; ++idx) {
    const int j = static_cast<int>(idx / static_cast<long>(Nq));
    const std::size_t i = static_cast<std::size_t>(idx % static_cast<long>(Nq));
    const int ja = single ? 0 : j;
    for (int r = 0; r < n; ++r) {
      double acc = 0.0;
      for (int c = 0; c < n; ++c) acc += A(ja, i, transpose ? c * n + r : r * n + c) * x(j, i, c);
      out(j, i, r) += s * acc;
    }
  }
}

}  // namespace

namespace {

// Pointwise part of F (everything but the transport terms). With `remainder`
// the linear part of D F(0) at a = b = 0 is subtracted as well.
State hamiltonian_pointwise(const HamiltonianSpec& H, InvarianceContext& ctx, const State& y, bool remainder) {
  check_state(y, 2, ctx);
  const GridFunction& u = y[0];
  const GridFunction& v = y[1];
  const Exec exec = ctx.exec();
  check_fold(u, ctx.config().fold_tol, exec);
  const auto& grid = u.grid();
  const auto& axis = u.axis();
  const int n = grid.n;
  const std::size_t Nq = grid.size();
  GridFunction F1(grid, axis, n), F2(grid, axis, n);
  const long total = static_cast<long>(axis.M) * static_cast<long>(Nq);
  ExceptionSink sink;
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (long idx = 0; idx < total; ++idx) {
    sink.run([&] {
      const int j = static_cast<int>(idx / static_cast<long>(Nq));
      const std::size_t i = static_cast<std::size_t>(idx % static_cast<long>(Nq));
      const double t = axis.time(j);
      const Vec q = grid.point(i);
      Vec x{}, p{};
      for (int a = 0; a < n; ++a) {
        x[a] = q[a] + u(j, i, a);
        p[a] = v(j, i, a);
      }
      const Vec wx = H.W.eval(x), wq = H.W.eval(q);
      const Mat J = H.W.jacobian(x);
      Mat J0{};
      if (remainder) J0 = H.W.jacobian(q);
      for (int a = 0; a < n; ++a) {
        double d1 = (wx[a] - wq[a]) + eval_at(H.b[a], x, p, t) + eval_at(H.dquad_p[a], x, p, t);
        double d2 = 0.0;
        for (int c = 0; c < n; ++c) d2 += at(J, c, a) * p[c];
        d2 += eval_at(H.da[a], x, p, t);
        for (int c = 0; c < n; ++c) d2 += eval_at(H.db[c * n + a], x, p, t) * p[c];
        d2 += eval_at(H.dquad_q[a], x, p, t);
        if (remainder) {
          for (int c = 0; c < n; ++c) {
            d1 -= at(J0, a, c) * u(j, i, c) + eval_at(H.mbar0[a * n + c], q, Vec{}, t) * p[c];
            d2 -= at(J0, c, a) * p[c];
          }
        }
        F1(j, i, a) = d1;
        F2(j, i, a) = d2;
      }
    });
  }
  sink.rethrow();
  return {std::move(F1), std::move(F2)};
}

}  // namespace

State eval_F(const HamiltonianSpec& H, InvarianceContext& ctx, const State& y) {
  State F = hamiltonian_pointwise(H, ctx, y, false);
  F[0] -= transport_derivative(y[0], ctx.W_grid(), TimeStencil::FD4, ctx.exec());
  F[1] += transport_derivative(y[1], ctx.W_grid(), TimeStencil::FD4, ctx.exec());
  return F;
}

State eval_remainder(const HamiltonianSpec& H, InvarianceContext& ctx, const State& y) {
  return hamiltonian_pointwise(H, ctx, y, true);
}

State apply_linearized(const HamiltonianSpec& H, InvarianceContext& ctx, const State& yhat) {
  check_state(yhat, 2, ctx);
  const Exec exec = ctx.exec();
  const GridFunction& u = yhat[0];
  const GridFunction& v = yhat[1];
  GridFunction z = negate(transport_derivative(u, ctx.W_grid(), TimeStencil::FD4, exec));
  add_matvec(z, ctx.dW_grid(), u, false, 1.0, exec);
  add_matvec(z, sample_matrix(H.mbar0, u.grid(), u.axis(), exec), v, false, 1.0, exec);
  GridFunction g = transport_derivative(v, ctx.W_grid(), TimeStencil::FD4, exec);
  add_matvec(g, ctx.dW_grid(), v, true, 1.0, exec);
  return {std::move(z), std::move(g)};
}

State right_inverse(const HamiltonianSpec& H, InvarianceContext& ctx, const State& zg) {
  check_state(zg, 2, ctx);
  const Exec exec = ctx.exec();
  GridFunction v = ctx.solver().solve(zg[1], +1, true);
  GridFunction rhs = negate(zg[0]);
  add_matvec(rhs, sample_matrix(H.mbar0, v.grid(), v.axis(), exec), v, false, 1.0, exec);
  GridFunction u = ctx.solver().solve(rhs, -1, false);
  return {std::move(u), std::move(v)};
}

namespace {

GridFunction vectorfield_pointwise(const TrigField& P, InvarianceContext& ctx, const State& y, bool remainder) {
  check_state(y, 1, ctx);
  const GridFunction& u = y[0];
  const Exec exec = ctx.exec();
  check_fold(u, ctx.config().fold_tol, exec);
  const auto& grid = u.grid();
  const auto& axis = u.axis();
  const int n = grid.n;
  const std::size_t Nq = grid.size();
  const auto& W = ctx.field();
  GridFunction F(grid, axis, n);
  const long total = static_cast<long>(axis.M) * static_cast<long>(Nq);
  ExceptionSink sink;
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (long idx = 0; idx < total; ++idx) {
    sink.run([&] {
      const int j = static_cast<int>(idx / static_cast<long>(Nq));
      const std::size_t i = static_cast<std::size_t>(idx % static_cast<long>(Nq));
      const double t = axis.time(j);
      const Vec q = grid.point(i);
      Vec x{};
      for (int a = 0; a < n; ++a) x[a] = q[a] + u(j, i, a);
      const Vec wx = W.eval(x), wq = W.eval(q);
      Mat J0{};
      if (remainder) J0 = W.jacobian(q);
      for (int a = 0; a < n; ++a) {
        double d = (wx[a] - wq[a]) + eval_at(P[a], x, Vec{}, t);
        if (remainder)
          for (int c = 0; c < n; ++c) d -= at(J0, a, c) * u(j, i, c);
        F(j, i, a) = d;
      }
    });
  }
  sink.rethrow();
  return F;
}

}  // namespace

State eval_F_vectorfield(const TrigField& P, InvarianceContext& ctx, const State& u) {
  GridFunction F = vectorfield_pointwise(P, ctx, u, false);
  F -= transport_derivative(u[0], ctx.W_grid(), TimeStencil::FD4, ctx.exec());
  return {std::move(F)};
}

State eval_remainder_vectorfield(const TrigField& P, InvarianceContext& ctx, const State& u) {
  return {vectorfield_pointwise(P, ctx, u, true)};
}

State apply_linearized_vectorfield(InvarianceContext& ctx, const State& uhat) {
  check_state(uhat, 1, ctx);
  GridFunction z = negate(transport_derivative(uhat[0], ctx.W_grid(), TimeStencil::FD4, ctx.exec()));
  add_matvec(z, ctx.dW_grid(), uhat[0], false, 1.0, ctx.exec());
  return {std::move(z)};
}

State right_inverse_vectorfield(InvarianceContext& ctx, const State& z) {
  check_state(z, 1, ctx);
  return {ctx.solver().solve(negate(z[0]), -1, false)};
}

// ---------------------------------------------------------------------------

namespace {

State negate_state(State y) {
  for (auto& b : y) b *= -1.0;
  return y;
}

}  // namespace

State apply_L(const FixedPointOps& ops, const State& y) {
  if (ops.R) return negate_state(ops.eta(ops.R(y)));
  const State d = ops.eta(ops.F(y));
  State out = y;
  for (std::size_t b = 0; b < out.size(); ++b) out[b] -= d[b];
  return out;
}

State random_probe(const InvarianceContext& ctx, double upsilon, int blocks, double r, std::mt19937_64& rng) {
  const auto& grid = ctx.grid();
  const TimeAxis axis = ctx.axis(upsilon);
  const int n = grid.n;
  const double lambda = ctx.config().spec.lambda;
  const double T = axis.end();
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  // Wave vectors with entries in {-2..2}, first nonzero entry positive.
  std::vector<std::array<int, kMaxDim>> modes;
  std::array<int, kMaxDim> k{};
  int total = 1;
  for (int a = 0; a < n; ++a) total *= 5;
  for (int c = 0; c < total; ++c) {
    int rem = c;
    for (int a = 0; a < n; ++a, rem /= 5) k[a] = rem % 5 - 2;
    int first = 0;
    for (int a = 0; a < n && first == 0; ++a) first = k[a];
    if (first >= 0) modes.push_back(k);
  }
  State y;
  for (int b = 0; b < blocks; ++b) {
    GridFunction f(grid, axis, n);
    for (int c = 0; c < n; ++c) {
      std::vector<double> cc(modes.size()), ss(modes.size());
      for (std::size_t m = 0; m < modes.size(); ++m) {
        cc[m] = U(rng);
        ss[m] = U(rng);
      }
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const Vec q = grid.point(i);
        double s = 0.0;
        for (std::size_t m = 0; m < modes.size(); ++m) {
          double kq = 0.0;
          for (int a = 0; a < n; ++a) kq += modes[m][a] * q[a];
          s += cc[m] * std::cos(kq) + ss[m] * std::sin(kq);
        }
        for (int j = 0; j < axis.M; ++j) {
          const double t = axis.time(j);
          f(j, i, c) = s * std::exp(-lambda * t) * (1.0 - std::exp(-3.0 * (T - t)));
        }
      }
    }
    y.push_back(std::move(f));
  }
  const double nrm = ctx.state_norm(y);
  for (auto& b : y) b *= r / nrm;
  return y;
}

double probe_contraction(const FixedPointOps& ops, const InvarianceContext& ctx, double upsilon, int pairs,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> R(0.25, 1.0);
  double worst = 0.0;
  for (int k = 0; k < pairs; ++k) {
    const double r1 = R(rng), r2 = R(rng);
    const State y1 = random_probe(ctx, upsilon, ops.blocks, r1, rng);
    const State y2 = random_probe(ctx, upsilon, ops.blocks, r2, rng);
    State d = y1;
    for (std::size_t b = 0; b < d.size(); ++b) d[b] -= y2[b];
    const double den = ctx.state_norm(d);
    try {
      State L1 = apply_L(ops, y1);
      const State L2 = apply_L(ops, y2);
      for (std::size_t b = 0; b < L1.size(); ++b) L1[b] -= L2[b];
      const double ratio = ctx.state_norm(L1) / den;
      if (!std::isfinite(ratio)) return std::numeric_limits<double>::infinity();
      worst = std::max(worst, ratio);
    } catch (const FoldError&) {
      return std::numeric_limits<double>::infinity();
    } catch (const DivergenceError&) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return worst;
}

nlohmann::json UpsilonTrial::to_json() const {
  return {{"upsilon", num(upsilon, "candidate base time")},
          {"probe_ratio", num(probe_ratio, "max |L y1 - L y2| / |y1 - y2| over random unit-ball pairs")},
          {"outcome", outcome}};
}

nlohmann::json NormReport::to_json(const SolveConfig& cfg) const {
  nlohmann::json rh = nlohmann::json::array(), sh = nlohmann::json::array(), tr = nlohmann::json::array();
  for (double r : residual_history) rh.push_back(num(r, "interior |F(y_k)|_{sigma,lambda}"));
  for (double s : step_history) sh.push_back(num(s, "|y_{k+1} - y_k|_{sigma,lambda}"));
  for (const auto& t : trials) tr.push_back(t.to_json());
  return {{"converged", converged},
          {"status", status},
          {"iterations", num(iterations, "applications of L")},
          {"upsilon_prime", num(upsilon_prime, "selected base time")},
          {"T_max", num(T_max, "end of the returned family")},
          {"internal_T", num(internal_T, "end of the computational window (zero terminal value)")},
          {"residual", num(residual, cfg.tol_residual, "weighted norm of F(y) on the returned window, boundary slices excluded")},
          {"last_step", num(last_step, "weighted norm of the last fixed-point step on the returned window")},
          {"y_norm", num(y_norm, 1.0, "weighted norm of y including (grad y) Wbar; contraction ball radius 1")},
          {"first_iterate_norm", num(first_iterate_norm, "weighted norm of y_1 = -eta(F(0))")},
          {"probe_ratio", num(probe_ratio, 0.6, "Lipschitz ratio of L on random unit-ball pairs at upsilon'")},
          {"contraction_factor", num(contraction_factor, "max ratio of successive steps over the last 5 iterations")},
          {"admissibility_threshold", num(admissibility_threshold, "c_kappa |d_q W|_C0; lambda must exceed it")},
          {"Upsilon", num(Upsilon, "normal-form bound, reported only")},
          {"growth", growth.to_json()},
          {"residual_history", rh},
          {"step_history", sh},
          {"trials", tr},
          {"warnings", warnings}};
}

// ---------------------------------------------------------------------------

namespace {

double next_upsilon(double u) { return u <= 0.0 ? 0.5 : 2.0 * u; }

State zero_state(const InvarianceContext& ctx, double upsilon, int blocks) {
  return State(blocks, GridFunction(ctx.grid(), ctx.axis(upsilon), ctx.grid().n));
}

}  // namespace

SolveResult run_fixed_point(InvarianceContext& ctx, const OpsFactory& make_ops, int blocks,
                            std::vector<std::string> warnings) {
  const SolveConfig& cfg = ctx.config();
  SolveResult res;
  NormReport& rep = res.report;
  rep.warnings = std::move(warnings);
  rep.growth = ctx.solver().growth();
  rep.admissibility_threshold = rep.growth.admissibility_threshold();

  double ups = cfg.spec.upsilon;
  State y;
  while (true) {
    const FixedPointOps ops = make_ops(ups);
    UpsilonTrial trial{ups, 0.0, ""};
    const bool at_cap = next_upsilon(ups) > cfg.upsilon_cap + 1e-12;
    y = zero_state(ctx, ups, blocks);
    rep.residual_history.clear();
    rep.step_history.clear();
    res.first_iterate = y;

    State F = ops.F(y);
    double r = ctx.residual_norm(F);
    rep.residual_history.push_back(r);
    if (r <= cfg.tol_residual) {
      // Trivial fixed point: nothing to iterate.
      trial.outcome = "accepted";
      rep.trials.push_back(trial);
      rep.status = "converged";
      rep.converged = true;
      rep.iterations = 0;
      break;
    }
    if (cfg.probes > 0) {
      trial.probe_ratio = probe_contraction(ops, ctx, ups, cfg.probes, cfg.seed);
      if (!(trial.probe_ratio <= cfg.probe_threshold) && !at_cap) {
        trial.outcome = "probe_ratio";
        rep.trials.push_back(trial);
        ups = next_upsilon(ups);
        continue;
      }
    }
    std::string outcome;
    int stalls = 0;
    int it = 0;
    bool done = false;
    while (!done) {
      if (it >= cfg.max_iterations) {
        outcome = "max_iterations";
        break;
      }
      State d;
      if (ops.R) {
        // y_next = -eta(R(y)); the step is y - y_next.
        State next = negate_state(ops.eta(it == 0 ? F : ops.R(y)));
        d = y;
        for (int b = 0; b < blocks; ++b) d[b] -= next[b];
        y = std::move(next);
      } else {
        d = ops.eta(F);
        for (int b = 0; b < blocks; ++b) y[b] -= d[b];
      }
      ++it;
      const double step = ctx.state_norm(d);
      if (it == 1) res.first_iterate = y;
      if (!rep.step_history.empty() && step > 0.5 * rep.step_history.back()) ++stalls;
      rep.step_history.push_back(step);
      try {
        F = ops.F(y);
      } catch (const FoldError&) {
        outcome = "fold";
        break;
      }
      r = ctx.residual_norm(F);
      rep.residual_history.push_back(r);
      if (!std::isfinite(r) || !std::isfinite(step)) {
        outcome = "diverged";
        break;
      }
      if (r <= cfg.tol_residual) {
        outcome = "converged";
        break;
      }
      if (step <= cfg.tol_fixed_point) {
        outcome = "stalled_at_fixed_point";
        break;
      }
      if (stalls >= 2 && !at_cap) {
        outcome = "stall";
        break;
      }
    }
    rep.iterations = it;
    if ((outcome == "fold" || outcome == "diverged" || outcome == "stall") && !at_cap) {
      trial.outcome = outcome;
      rep.trials.push_back(trial);
      ups = next_upsilon(ups);
      continue;
    }
    if (outcome == "fold") throw FoldError("embedding folds at the largest allowed upsilon'");
    trial.outcome = outcome == "converged" ? "accepted" : outcome;
    rep.trials.push_back(trial);
    rep.status = outcome;
    rep.converged = outcome == "converged";
    rep.probe_ratio = trial.probe_ratio;
    break;
  }

  rep.upsilon_prime = ups;
  rep.residual = rep.residual_history.back();
  rep.last_step = rep.step_history.empty() ? 0.0 : rep.step_history.back();
  rep.y_norm = ctx.state_norm(y);
  rep.first_iterate_norm = ctx.state_norm(res.first_iterate);
  const auto& sh = rep.step_history;
  for (std::size_t k = sh.size() > 6 ? sh.size() - 5 : 1; k < sh.size(); ++k)
    if (sh[k - 1] > 0.0) rep.contraction_factor = std::max(rep.contraction_factor, sh[k] / sh[k - 1]);
  if (!rep.converged) rep.warnings.push_back("fixed-point iteration did not converge: " + rep.status);

  const int kept = ctx.kept_slices();
  const TimeAxis axis = ctx.axis(ups);
  rep.T_max = axis.time(kept - 1);
  rep.internal_T = axis.end();
  res.full.upsilon = res.family.upsilon = ups;
  res.full.u = y[0];
  res.family.u = y[0].crop(0, kept);
  if (blocks == 2) {
    res.full.v = y[1];
    res.family.v = y[1].crop(0, kept);
  }
  return res;
}

FixedPointOps hamiltonian_ops(const HamiltonianSpec& H, InvarianceContext& ctx) {
  FixedPointOps ops;
  ops.blocks = 2;
  ops.F = [&H, &ctx](const State& y) { return eval_F(H, ctx, y); };
  ops.R = [&H, &ctx](const State& y) { return eval_remainder(H, ctx, y); };
  ops.eta = [&H, &ctx](const State& zg) { return right_inverse(H, ctx, zg); };
  return ops;
}

FixedPointOps vectorfield_ops(const TrigField& P, InvarianceContext& ctx) {
  FixedPointOps ops;
  ops.blocks = 1;
  ops.F = [&P, &ctx](const State& y) { return eval_F_vectorfield(P, ctx, y); };
  ops.R = [&P, &ctx](const State& y) { return eval_remainder_vectorfield(P, ctx, y); };
  ops.eta = [&ctx](const State& z) { return right_inverse_vectorfield(ctx, z); };
  return ops;
}

namespace {

std::vector<std::string> rate_warnings(const InvarianceContext& ctx, const std::vector<const TrigTimeFunction*>& fs) {
  std::vector<std::string> w;
  const double lambda = ctx.config().spec.lambda;
  const double thr = ctx.solver().growth().admissibility_threshold();
  if (!(lambda > thr)) {
    std::ostringstream os;
    os << "admissibility: lambda = " << lambda << " does not exceed the measured threshold c_kappa |d_q W|_C0 = "
       << thr;
    w.push_back(os.str());
  }
  for (const auto* f : fs)
    if (!f->empty() && !(f->min_mu() >= lambda)) {
      std::ostringstream os;
      os << "perturbation term decays at rate " << f->min_mu() << " < lambda = " << lambda;
      w.push_back(os.str());
      break;
    }
  return w;
}

}  // namespace

SolveResult iterate_L(const HamiltonianSpec& H, InvarianceContext& ctx) {
  if (H.n != ctx.grid().n) throw ConfigError("Hamiltonian dimension does not match the grid");
  std::vector<const TrigTimeFunction*> fs{&H.a};
  for (const auto& b : H.b) fs.push_back(&b);
  auto warnings = rate_warnings(ctx, fs);
  auto res = run_fixed_point(ctx, [&](double) { return hamiltonian_ops(H, ctx); }, 2, std::move(warnings));
  res.report.Upsilon = H.Upsilon;
  return res;
}

SolveResult iterate_L(const HamiltonianSpec& H, const SolveConfig& cfg, Exec exec) {
  InvarianceContext ctx(H.W, cfg, exec);
  return iterate_L(H, ctx);
}

VectorFieldProblem VectorFieldProblem::from_field(const TrigField& Z, double sigma) {
  const int n = static_cast<int>(Z.size());
  if (n < 1 || n > kMaxDim) throw ConfigError("vector field must have 1..4 components");
  TrigField W(n, TrigTimeFunction(n)), P(n, TrigTimeFunction(n));
  for (int i = 0; i < n; ++i) {
    if (Z[i].n() != n) throw ConfigError("vector field components must share the torus dimension");
    if (Z[i].max_p_degree() > 0) throw UnsupportedInputError("vector field must not depend on p");
    for (const auto& t : Z[i].terms()) (t.mu == 0.0 ? W[i] : P[i]).add(t);
  }
  return {VectorFieldSpec::make(W, sigma), P};
}

SolveResult solve_vectorfield(const VectorFieldProblem& prob, InvarianceContext& ctx) {
  const int n = ctx.grid().n;
  if (static_cast<int>(prob.P.size()) != n) throw ConfigError("P must have n components");
  for (const auto& p : prob.P)
    if (p.max_p_degree() > 0) throw UnsupportedInputError("P must not depend on p");
  std::vector<const TrigTimeFunction*> fs;
  for (const auto& p : prob.P) fs.push_back(&p);
  auto warnings = rate_warnings(ctx, fs);
  return run_fixed_point(ctx, [&](double) { return vectorfield_ops(prob.P, ctx); }, 1, std::move(warnings));
}

SolveResult solve_vectorfield(const VectorFieldProblem& prob, const SolveConfig& cfg, Exec exec) {
  InvarianceContext ctx(prob.W, cfg, exec);
  return solve_vectorfield(prob, ctx);
}

}  // namespace astor
