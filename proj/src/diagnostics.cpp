#include "astor/diagnostics.hpp"

#include <limits>
#include <random>
#include <sstream>

#include "astor/interp.hpp"
#include "astor/norms.hpp"
#include "astor/report.hpp"
#include "astor/spectral.hpp"

namespace astor {

TargetSystem TargetSystem::hamiltonian(const HamiltonianSpec& H) {
  TargetSystem s;
  s.W_ = H.W;
  s.H_ = H;
  return s;
}

TargetSystem TargetSystem::vectorfield(const VectorFieldProblem& prob) {
  TargetSystem s;
  s.W_ = prob.W;
  s.P_ = prob.P;
  return s;
}

void TargetSystem::rhs(const Vec& q, const Vec& p, double t, Vec& dq, Vec& dp) const {
  if (H_) {
    dq = H_->dH_dp(q, p, t);
    const Vec g = H_->dH_dq(q, p, t);
    dp = Vec{};
    for (int a = 0; a < n(); ++a) dp[a] = -g[a];
    return;
  }
  dq = W_.eval(q);
  if (!P_.empty()) {
    const Vec e = evaluate(P_, q, Vec{}, t);
    for (int a = 0; a < n(); ++a) dq[a] += e[a];
  }
  dp = Vec{};
}

DiagnosticsOptions DiagnosticsOptions::from(const SolveConfig& cfg) {
  DiagnosticsOptions o;
  o.sigma = cfg.spec.sigma;
  o.lambda = cfg.spec.lambda;
  o.residual_tol = std::max(o.residual_tol, cfg.tol_residual);
  o.h_ode = cfg.h_ode;
  o.seed = cfg.seed;
  return o;
}

nlohmann::json DiagnosticsOptions::to_json() const {
  return {{"sigma", num(sigma, "regularity of the norms")},
          {"lambda", num(lambda, "decay rate of the weights")},
          {"residual_tol", num(residual_tol, "threshold for the invariance residual")},
          {"decay_fraction", num(decay_fraction, "required fraction of lambda for fitted rates")},
          {"conjugacy_samples", num(conjugacy_samples, "number of random conjugacy samples")},
          {"conjugacy_horizon", num(conjugacy_horizon, "max t - t0 per sample")},
          {"conjugacy_tol", num(conjugacy_tol, "threshold for conjugacy and extension defects")},
          {"lagrangian_factor", num(lagrangian_factor, "Lagrangian bound as a multiple of the residual")},
          {"extension_back", num(extension_back, "extension distance before upsilon'")},
          {"h_ode", num(h_ode, "RK4 step")},
          {"seed", num(static_cast<double>(seed), "sampling seed")}};
}

// ---------------------------------------------------------------------------

ResidualReport invariance_residual(const TargetSystem& X, const EmbeddingFamily& family, double sigma,
                                   double lambda, Exec exec) {
  const GridFunction& u = family.u;
  const auto& grid = u.grid();
  const auto& axis = u.axis();
  const int n = grid.n;
  if (grid.n != X.n()) throw ConfigError("family and system dimensions differ");
  if (X.has_p() != family.has_v()) throw ConfigError("family blocks do not match the system");
  const int margin = stencil_margin(TimeStencil::FD6);
  if (axis.M < 2 * margin + 1) throw ConfigError("family has too few slices for the residual");

  ResidualReport rep;
  rep.margin = margin;
  const GridFunction Ju = jacobian(u, exec), ut = time_derivative(u, TimeStencil::FD6, exec);
  GridFunction Jv, vt;
  if (family.has_v()) {
    Jv = jacobian(family.v, exec);
    vt = time_derivative(family.v, TimeStencil::FD6, exec);
    rep.r_v = GridFunction(grid, axis, n);
  }
  rep.r_u = GridFunction(grid, axis, n);
  const std::size_t Nq = grid.size();
  const long total = static_cast<long>(axis.M - 2 * margin) * static_cast<long>(Nq);
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (long idx = 0; idx < total; ++idx) {
    const int j = margin + static_cast<int>(idx / static_cast<long>(Nq));
    const std::size_t i = static_cast<std::size_t>(idx % static_cast<long>(Nq));
    const Vec q = grid.point(i);
    const Vec w = X.W().eval(q);
    Vec x{}, p{};
    for (int a = 0; a < n; ++a) {
      x[a] = q[a] + u(j, i, a);
      if (family.has_v()) p[a] = family.v(j, i, a);
    }
    Vec dq{}, dp{};
    X.rhs(x, p, axis.time(j), dq, dp);
    for (int a = 0; a < n; ++a) {
      double tu = ut(j, i, a);
      for (int b = 0; b < n; ++b) tu += Ju(j, i, a * n + b) * w[b];
      rep.r_u(j, i, a) = dq[a] - w[a] - tu;
      if (family.has_v()) {
        double tv = vt(j, i, a);
        for (int b = 0; b < n; ++b) tv += Jv(j, i, a * n + b) * w[b];
        rep.r_v(j, i, a) = dp[a] - tv;
      }
    }
  }
  rep.profile.assign(axis.M, 0.0);
  for (int j = margin; j < axis.M - margin; ++j) {
    double m = holder_norm(grid, rep.r_u.slice(j), n, sigma);
    if (family.has_v()) m = std::max(m, holder_norm(grid, rep.r_v.slice(j), n, sigma));
    rep.profile[j] = m * std::exp(lambda * axis.time(j));
    rep.norm = std::max(rep.norm, rep.profile[j]);
  }
  return rep;
}

// ---------------------------------------------------------------------------

DecayFit decay_fit(const GridFunction& f, double sigma) {
  const int M = f.M();
  const int j0 = M / 2;
  if (M - j0 < 8) throw ConfigError("decay fit needs at least 8 slices in the second half");
  const std::vector<double> norms = slice_norms(f, sigma);
  DecayFit fit;
  fit.t_begin = f.axis().time(j0);
  fit.t_end = f.axis().end();
  std::vector<double> ts, ys;
  for (int j = j0; j < M; ++j)
    if (norms[j] >= 1e-14) {
      ts.push_back(f.axis().time(j));
      ys.push_back(std::log(norms[j]));
    }
  fit.samples = static_cast<int>(ts.size());
  if (fit.samples < 8) {
    fit.floor = true;
    return fit;
  }
  const double k = static_cast<double>(ts.size());
  double mt = 0.0, my = 0.0;
  for (std::size_t s = 0; s < ts.size(); ++s) {
    mt += ts[s];
    my += ys[s];
  }
  mt /= k;
  my /= k;
  double stt = 0.0, sty = 0.0, syy = 0.0;
  for (std::size_t s = 0; s < ts.size(); ++s) {
    stt += (ts[s] - mt) * (ts[s] - mt);
    sty += (ts[s] - mt) * (ys[s] - my);
    syy += (ys[s] - my) * (ys[s] - my);
  }
  const double slope = sty / stt;
  double sse = 0.0;
  for (std::size_t s = 0; s < ts.size(); ++s) {
    const double e = ys[s] - (my + slope * (ts[s] - mt));
    sse += e * e;
  }
  fit.rate = -slope;
  fit.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  fit.stderr_rate = k > 2 ? std::sqrt(sse / (k - 2) / stt) : 0.0;
  return fit;
}

nlohmann::json DecayFit::to_json(double min_rate) const {
  nlohmann::json j;
  j["status"] = floor ? "floor" : "fitted";
  if (floor) {
    j["rate"] = num(std::numeric_limits<double>::infinity(), "norms below 1e-14: decayed to rounding");
  } else {
    nlohmann::json r = num(rate, "least-squares decay rate of |f^t|_{C^sigma}");
    r["minimum"] = min_rate;
    r["pass"] = rate >= min_rate;
    j["rate"] = r;
  }
  j["r2"] = num(r2, "coefficient of determination of the log-linear fit");
  j["stderr"] = num(stderr_rate, "standard error of the rate");
  j["samples"] = num(samples, "slices used");
  j["t_begin"] = num(t_begin, "start of the fit window");
  j["t_end"] = num(t_end, "end of the fit window");
  return j;
}

// ---------------------------------------------------------------------------

void evaluate_embedding(const EmbeddingFamily& family, int j, const Vec& q, Vec& Q, Vec& P) {
  const auto& grid = family.u.grid();
  const int n = grid.n;
  Vec du{};
  trig_interpolate(grid, family.u.slice(j), n, q, du.data());
  Q = Vec{};
  P = Vec{};
  for (int a = 0; a < n; ++a) Q[a] = q[a] + du[a];
  if (family.has_v()) trig_interpolate(grid, family.v.slice(j), n, q, P.data());
}

namespace {

using Phase2 = std::array<double, 2 * kMaxDim>;

// Integrates X from t0 to t1 starting at (Q, P).
void flow_X(const TargetSystem& X, Vec& Q, Vec& P, double t0, double t1, double h) {
  const int n = X.n();
  Phase2 x{};
  for (int a = 0; a < n; ++a) {
    x[a] = Q[a];
    x[kMaxDim + a] = P[a];
  }
  x = rk4(x, t0, t1, h, [&](double t, const Phase2& s, Phase2& d) {
    Vec q{}, p{}, dq{}, dp{};
    for (int a = 0; a < n; ++a) {
      q[a] = s[a];
      p[a] = s[kMaxDim + a];
    }
    X.rhs(q, p, t, dq, dp);
    d = Phase2{};
    for (int a = 0; a < n; ++a) {
      d[a] = dq[a];
      d[kMaxDim + a] = dp[a];
    }
  });
  for (int a = 0; a < n; ++a) {
    Q[a] = x[a];
    P[a] = x[kMaxDim + a];
  }
}

double phase_distance(const Vec& Q1, const Vec& P1, const Vec& Q2, const Vec& P2, int n) {
  double s = 0.0;
  for (int a = 0; a < n; ++a) {
    const double dq = angle_diff(wrap_angle(Q1[a]), wrap_angle(Q2[a]));
    const double dp = P1[a] - P2[a];
    s += dq * dq + dp * dp;
  }
  return std::sqrt(s);
}

}  // namespace

std::vector<ConjugacySample> conjugacy_samples(const EmbeddingFamily& family, int count, double horizon,
                                               std::uint64_t seed) {
  const auto& axis = family.u.axis();
  const int n = family.u.grid().n;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, kTwoPi);
  const int span = static_cast<int>(std::floor(horizon / axis.dt + 1e-9));
  std::vector<ConjugacySample> out;
  for (int s = 0; s < count; ++s) {
    ConjugacySample c;
    for (int a = 0; a < n; ++a) c.q[a] = U(rng);
    const int j0 = std::uniform_int_distribution<int>(0, axis.M - 1)(rng);
    const int j1 = std::uniform_int_distribution<int>(j0, std::min(axis.M - 1, j0 + span))(rng);
    c.t0 = axis.time(j0);
    c.t = axis.time(j1);
    out.push_back(c);
  }
  return out;
}

ConjugacyReport conjugacy_defect(const TargetSystem& X, const EmbeddingFamily& family,
                                 std::vector<ConjugacySample> samples, double h_ode, Exec exec) {
  const auto& axis = family.u.axis();
  const int n = X.n();
  auto slice_of = [&](double t) {
    const int j = static_cast<int>(std::lround((t - axis.t0) / axis.dt));
    if (j < 0 || j >= axis.M || std::abs(axis.time(j) - t) > 1e-9 * std::max(1.0, std::abs(t)))
      throw ConfigError("conjugacy sample time is not a slice of the family");
    return j;
  };
  for (const auto& s : samples) {
    slice_of(s.t0);
    slice_of(s.t);
    if (s.t < s.t0) throw ConfigError("conjugacy samples need t >= t0");
  }
  const long count = static_cast<long>(samples.size());
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (long k = 0; k < count; ++k) {
    auto& s = samples[k];
    Vec Q1, P1, Q2, P2;
    evaluate_embedding(family, slice_of(s.t0), s.q, Q1, P1);
    flow_X(X, Q1, P1, s.t0, s.t, h_ode);
    const Vec q2 = integrate_flow(X.W(), s.q, s.t - s.t0, h_ode, false).q;
    evaluate_embedding(family, slice_of(s.t), q2, Q2, P2);
    s.defect = phase_distance(Q1, P1, Q2, P2, n);
    s.diverged = !std::isfinite(s.defect);
  }
  ConjugacyReport rep;
  double sum = 0.0;
  for (const auto& s : samples) {
    if (s.diverged) {
      ++rep.diverged;
      continue;
    }
    rep.max_defect = std::max(rep.max_defect, s.defect);
    sum += s.defect;
  }
  const int ok = count - rep.diverged;
  rep.mean_defect = ok > 0 ? sum / ok : 0.0;
  rep.samples = std::move(samples);
  return rep;
}

// ---------------------------------------------------------------------------

namespace {

void pullback_coefficients(const GridFunction& Ju, const GridFunction& Jv, int j, std::size_t i, int n,
                           double* c) {
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l) {
      double s = 0.0;
      for (int a = 0; a < n; ++a) {
        const double ul = (a == l ? 1.0 : 0.0) + Ju(j, i, a * n + l);
        const double uk = (a == k ? 1.0 : 0.0) + Ju(j, i, a * n + k);
        s += Jv(j, i, a * n + k) * ul - Jv(j, i, a * n + l) * uk;
      }
      c[k * n + l] = s;
    }
}

}  // namespace

std::vector<double> lagrangian_slice(const EmbeddingFamily& family, int j) {
  const auto& grid = family.u.grid();
  const int n = grid.n;
  if (!family.has_v()) throw ConfigError("Lagrangian coefficients need the p block");
  const GridFunction u = family.u.crop(j, 1), v = family.v.crop(j, 1);
  const GridFunction Ju = jacobian(u, Exec::Serial), Jv = jacobian(v, Exec::Serial);
  std::vector<double> out(grid.size() * n * n);
  for (std::size_t i = 0; i < grid.size(); ++i) pullback_coefficients(Ju, Jv, 0, i, n, &out[i * n * n]);
  return out;
}

LagrangianReport lagrangian_coefficients(const EmbeddingFamily& family, Exec exec) {
  LagrangianReport rep;
  const auto& grid = family.u.grid();
  const int n = grid.n;
  if (!family.has_v()) {
    rep.skipped = true;
    rep.reason = "torus path: no p block";
    return rep;
  }
  if (n == 1) {
    rep.skipped = true;
    rep.reason = "n = 1: the pullback 2-form vanishes identically";
    return rep;
  }
  const GridFunction Ju = jacobian(family.u, exec), Jv = jacobian(family.v, exec);
  const int M = family.u.M();
  rep.profile.assign(M, 0.0);
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (int j = 0; j < M; ++j) {
    double m = 0.0;
    std::array<double, kMaxDim * kMaxDim> c{};
    for (std::size_t i = 0; i < grid.size(); ++i) {
      pullback_coefficients(Ju, Jv, j, i, n, c.data());
      for (int k = 0; k < n; ++k)
        for (int l = k + 1; l < n; ++l) m = std::max(m, std::abs(c[k * n + l]));
    }
    rep.profile[j] = m;
  }
  rep.at_upsilon = rep.profile.front();
  rep.max = *std::max_element(rep.profile.begin(), rep.profile.end());
  return rep;
}

// ---------------------------------------------------------------------------

ExtendedEmbedding extend_embedding(const TargetSystem& X, const EmbeddingFamily& family, double t, double h_ode,
                                   Exec exec) {
  const auto& grid = family.u.grid();
  const int n = grid.n;
  const double t_base = family.u.axis().t0;
  const TimeAxis one{t, 1.0, 1};
  ExtendedEmbedding ext;
  ext.t = t;
  if (t == t_base) {
    ext.u = family.u.crop(0, 1);
    if (family.has_v()) ext.v = family.v.crop(0, 1);
  } else {
    ext.u = GridFunction(grid, one, n);
    if (family.has_v()) ext.v = GridFunction(grid, one, n);
    const long Nq = static_cast<long>(grid.size());
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
    for (long ii = 0; ii < Nq; ++ii) {
      const std::size_t i = static_cast<std::size_t>(ii);
      const Vec q = grid.point(i);
      const Vec q1 = integrate_flow(X.W(), q, t_base - t, h_ode, false).q;
      // Base point pushed forward with the same integrator as the X-flow, so the
      // backward/forward round-trip error of the W-flow cancels.
      const Vec qt = integrate_flow(X.W(), q1, t - t_base, h_ode, false).q;
      Vec Q, P;
      evaluate_embedding(family, 0, q1, Q, P);
      flow_X(X, Q, P, t_base, t, h_ode);
      for (int a = 0; a < n; ++a) {
        ext.u(0, i, a) = angle_diff(Q[a], qt[a]);
        if (family.has_v()) ext.v(0, i, a) = P[a];
      }
    }
    if (!ext.u.finite() || (family.has_v() && !ext.v.finite()))
      throw DivergenceError("extension: flow diverged before reaching the target time");
  }
  ext.min_det = check_fold(ext.u, -std::numeric_limits<double>::infinity(), exec);
  return ext;
}

ExtensionReport extension_check(const TargetSystem& X, const EmbeddingFamily& family, double back, double h_ode,
                                Exec exec) {
  const auto& axis = family.u.axis();
  ExtensionReport rep;
  rep.t_target = axis.t0 - back;
  rep.min_det = extend_embedding(X, family, rep.t_target, h_ode, exec).min_det;
  for (int j : {(axis.M - 1) / 4, (axis.M - 1) / 2}) {
    if (j == 0) continue;
    const double t = axis.time(j);
    rep.check_times.push_back(t);
    const ExtendedEmbedding e = extend_embedding(X, family, t, h_ode, exec);
    for (std::size_t i = 0; i < family.u.grid().size(); ++i)
      for (int a = 0; a < family.u.dim(); ++a) {
        rep.consistency = std::max(rep.consistency, std::abs(e.u(0, i, a) - family.u(j, i, a)));
        if (family.has_v())
          rep.consistency = std::max(rep.consistency, std::abs(e.v(0, i, a) - family.v(j, i, a)));
      }
  }
  return rep;
}

// ---------------------------------------------------------------------------

bool DiagnosticsReport::residual_pass() const { return residual.norm <= options.residual_tol; }

bool DiagnosticsReport::decay_pass() const {
  const double min_rate = options.decay_fraction * options.lambda;
  auto ok = [&](const DecayFit& f) { return f.floor || f.rate >= min_rate; };
  return ok(decay_u) && (!has_v || ok(decay_v));
}

bool DiagnosticsReport::conjugacy_pass() const {
  return conjugacy.diverged == 0 && conjugacy.max_defect <= options.conjugacy_tol;
}

bool DiagnosticsReport::lagrangian_pass() const {
  return lagrangian.skipped || lagrangian.at_upsilon <= options.lagrangian_factor * residual.norm;
}

bool DiagnosticsReport::extension_pass() const {
  return extension.min_det > 0.0 && extension.consistency <= options.conjugacy_tol;
}

bool DiagnosticsReport::all_pass() const {
  return residual_pass() && decay_pass() && conjugacy_pass() && lagrangian_pass() && extension_pass();
}

nlohmann::json DiagnosticsReport::to_json() const {
  nlohmann::json j;
  j["options"] = options.to_json();
  j["pass"] = all_pass();
  j["invariance_residual"] = {
      {"norm", num(residual.norm, options.residual_tol, "weighted C^sigma norm of the invariance residual (FD6 interior)")},
      {"margin", num(residual.margin, "slices skipped at each end")},
      {"pass", residual_pass()}};
  const double min_rate = options.decay_fraction * options.lambda;
  j["decay"] = {{"u", decay_u.to_json(min_rate)}, {"pass", decay_pass()}};
  if (has_v) j["decay"]["v"] = decay_v.to_json(min_rate);
  else j["decay"]["v"] = {{"skipped", true}, {"reason", "torus path: no p block"}};

  nlohmann::json table = nlohmann::json::array();
  for (const auto& s : conjugacy.samples) {
    nlohmann::json q = nlohmann::json::array();
    for (int a = 0; a < residual.r_u.grid().n; ++a) q.push_back(num(s.q[a], "sample point"));
    table.push_back({{"q", q},
                     {"t0", num(s.t0, "start time")},
                     {"t", num(s.t, "end time")},
                     {"defect", num(s.defect, options.conjugacy_tol, "phase-space distance of both sides")},
                     {"diverged", s.diverged}});
  }
  j["conjugacy"] = {{"max", num(conjugacy.max_defect, options.conjugacy_tol, "max defect over samples")},
                    {"mean", num(conjugacy.mean_defect, "mean defect over samples")},
                    {"diverged", num(conjugacy.diverged, "samples whose X-flow diverged")},
                    {"samples", table},
                    {"pass", conjugacy_pass()}};
  if (lagrangian.skipped) {
    j["lagrangian"] = {{"skipped", true}, {"reason", lagrangian.reason}, {"pass", true}};
  } else {
    j["lagrangian"] = {
        {"skipped", false},
        {"at_upsilon", num(lagrangian.at_upsilon, options.lagrangian_factor * residual.norm,
                           "max pullback coefficient at upsilon'; bound is factor times the residual")},
        {"max", num(lagrangian.max, "max pullback coefficient over the family")},
        {"pass", lagrangian_pass()}};
  }
  nlohmann::json times = nlohmann::json::array();
  for (double t : extension.check_times) times.push_back(num(t, "consistency check time"));
  j["extension"] = {{"t_target", num(extension.t_target, "extension target before upsilon'")},
                    {"min_det", num(extension.min_det, "min det(Id + d_q u) of the extended torus; must be > 0")},
                    {"consistency", num(extension.consistency, options.conjugacy_tol,
                                        "max |extension - family| at the check times")},
                    {"check_times", times},
                    {"pass", extension_pass()}};
  return j;
}

std::string DiagnosticsReport::profile_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "t,residual_weighted,u_norm,v_norm,lagrangian_max\n";
  for (std::size_t j = 0; j < times.size(); ++j) {
    os << times[j] << ',' << residual.profile[j] << ',' << u_norms[j] << ',';
    if (has_v) os << v_norms[j];
    os << ',';
    if (!lagrangian.skipped) os << lagrangian.profile[j];
    os << '\n';
  }
  return os.str();
}

DiagnosticsReport run_diagnostics(const TargetSystem& X, const EmbeddingFamily& family,
                                  const DiagnosticsOptions& opt, Exec exec) {
  DiagnosticsReport rep;
  rep.options = opt;
  rep.has_v = family.has_v();
  rep.residual = invariance_residual(X, family, opt.sigma, opt.lambda, exec);
  rep.decay_u = decay_fit(family.u, opt.sigma);
  if (rep.has_v) rep.decay_v = decay_fit(family.v, opt.sigma);
  rep.conjugacy = conjugacy_defect(
      X, family, conjugacy_samples(family, opt.conjugacy_samples, opt.conjugacy_horizon, opt.seed), opt.h_ode, exec);
  rep.lagrangian = lagrangian_coefficients(family, exec);
  rep.extension = extension_check(X, family, opt.extension_back, opt.h_ode, exec);
  const auto& axis = family.u.axis();
  for (int j = 0; j < axis.M; ++j) rep.times.push_back(axis.time(j));
  rep.u_norms = slice_norms(family.u, opt.sigma, exec);
  if (rep.has_v) rep.v_norms = slice_norms(family.v, opt.sigma, exec);
  return rep;
}

}  // namespace astor
