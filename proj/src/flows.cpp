#include "astor/flows.hpp"

#include <algorithm>
#include <limits>

#include "astor/norms.hpp"
#include "astor/report.hpp"

namespace astor {

namespace {

constexpr int kFlowState = kMaxDim + kMaxDim * kMaxDim;
using FlowState = std::array<double, kFlowState>;

void check_finite(const FlowState& x, const char* what) {
  for (double v : x)
    if (!std::isfinite(v)) throw DivergenceError(std::string(what) + " produced non-finite values; reduce h_ode");
}

// q' = W(q), J' = dW(q) J.
struct VariationalRhs {
  const VectorFieldSpec& W;
  void operator()(double, const FlowState& x, FlowState& dx) const {
    const int n = W.n;
    Vec q{};
    for (int a = 0; a < n; ++a) q[a] = x[a];
    const Vec w = W.eval(q);
    const Mat B = W.jacobian(q);
    dx.fill(0.0);
    for (int a = 0; a < n; ++a) dx[a] = w[a];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += at(B, i, k) * x[n + k * n + j];
        dx[n + i * n + j] = s;
      }
  }
};

// q' = W(q), G' = sign G B(q) with B = dW or dW^T.
struct PropagatorRhs {
  const VectorFieldSpec& W;
  int sign;
  bool transpose;
  void operator()(double, const FlowState& x, FlowState& dx) const {
    const int n = W.n;
    Vec q{};
    for (int a = 0; a < n; ++a) q[a] = x[a];
    const Vec w = W.eval(q);
    Mat B = W.jacobian(q);
    if (transpose) B = astor::transpose(B, n);
    dx.fill(0.0);
    for (int a = 0; a < n; ++a) dx[a] = w[a];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += x[n + i * n + k] * at(B, k, j);
        dx[n + i * n + j] = sign * s;
      }
  }
};

FlowState pack(const Vec& q, const Mat& M, int n) {
  FlowState x{};
  for (int a = 0; a < n; ++a) x[a] = q[a];
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) x[n + i * n + j] = at(M, i, j);
  return x;
}

void unpack(const FlowState& x, int n, Vec& q, Mat& M) {
  q = Vec{};
  M = Mat{};
  for (int a = 0; a < n; ++a) q[a] = x[a];
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) at(M, i, j) = x[n + i * n + j];
}

int sample_resolution(int n) {
  switch (n) {
    case 1: return 256;
    case 2: return 128;
    case 3: return 32;
    default: return 16;
  }
}

}  // namespace

VectorFieldSpec VectorFieldSpec::make(TrigField W, double sigma) {
  VectorFieldSpec s;
  if (W.empty()) throw ConfigError("vector field W has no components");
  s.n = static_cast<int>(W.size());
  if (s.n > kMaxDim) throw ConfigError("torus dimension above 4 is not supported");
  for (const auto& c : W) {
    if (c.n() != s.n) throw ConfigError("W component dimension does not match the number of components");
    if (!c.is_autonomous()) throw ConfigError("W must be autonomous (mu = 0 on every term)");
    if (c.max_p_degree() != 0) throw ConfigError("W must not depend on p");
  }
  s.W = std::move(W);
  for (int i = 0; i < s.n; ++i)
    for (int j = 0; j < s.n; ++j) s.dW.push_back(s.W[i].dq(j));
  const TorusGrid g{s.n, sample_resolution(s.n)};
  const auto dWg = GridFunction::sample(s.dW, g, TimeAxis{});
  s.dW_c0 = dWg.max_abs();
  s.dW_csigma = holder_norm(g, dWg.slice(0), dWg.dim(), std::min(sigma, 2.0));
  return s;
}

Vec VectorFieldSpec::eval(const Vec& q) const {
  Vec w{};
  for (int i = 0; i < n; ++i) w[i] = W[i](q, 0.0);
  return w;
}

Mat VectorFieldSpec::jacobian(const Vec& q) const {
  Mat m{};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) at(m, i, j) = dW[i * n + j](q, 0.0);
  return m;
}

FlowResult integrate_flow(const VectorFieldSpec& W, const Vec& q0, double t, double h_ode, bool estimate_error) {
  if (!(h_ode > 0.0)) throw ConfigError("h_ode must be > 0");
  const int n = W.n;
  FlowResult r;
  if (t == 0.0) {
    for (int a = 0; a < n; ++a) r.q[a] = wrap_angle(q0[a]);
    r.J = identity(n);
    return r;
  }
  const VariationalRhs rhs{W};
  const FlowState x0 = pack(q0, identity(n), n);
  const FlowState x = rk4(x0, 0.0, t, h_ode, rhs);
  check_finite(x, "flow integration");
  if (estimate_error) {
    const FlowState x2 = rk4(x0, 0.0, t, 2.0 * h_ode, rhs);
    double e = 0.0;
    for (int a = 0; a < n; ++a) e = std::max(e, std::abs(x[a] - x2[a]));
    r.error = e / 15.0;
  }
  unpack(x, n, r.q, r.J);
  for (int a = 0; a < n; ++a) r.q[a] = wrap_angle(r.q[a]);
  return r;
}

Mat forward_propagator(const VectorFieldSpec& W, const Vec& q, double s, int sign, bool transpose, double h_ode) {
  if (sign != 1 && sign != -1) throw ConfigError("sign must be +1 or -1");
  const int n = W.n;
  if (s == 0.0) return identity(n);
  const PropagatorRhs rhs{W, sign, transpose};
  const FlowState x = rk4(pack(q, identity(n), n), 0.0, s, h_ode, rhs);
  check_finite(x, "propagator integration");
  Vec qq;
  Mat G;
  unpack(x, n, qq, G);
  return G;
}

Mat fundamental_matrix(const VectorFieldSpec& W, const Vec& q, double t, double tau, int sign, bool transpose,
                       double h_ode) {
  if (tau < t) throw ConfigError("fundamental_matrix requires tau >= t");
  if (tau == t) return identity(W.n);
  const Vec x = integrate_flow(W, q, t, h_ode, false).q;
  return forward_propagator(W, x, tau - t, sign, transpose, h_ode);
}

Mat rectified_propagator(const VectorFieldSpec& W, const Vec& q, double t, double tau, int sign, bool transpose,
                         double h_ode) {
  if (tau < t) throw ConfigError("rectified_propagator requires tau >= t");
  if (tau == t) return identity(W.n);
  // R(phi^{-tau} q, t, tau) = G(phi^{t - tau} q, tau - t).
  const Vec x = integrate_flow(W, q, t - tau, h_ode, false).q;
  return forward_propagator(W, x, tau - t, sign, transpose, h_ode);
}

int FlowTable::find(double offset) const {
  const double tol = 1e-9 * std::max(1.0, std::abs(offset));
  auto it = std::lower_bound(offsets.begin(), offsets.end(), offset - tol);
  if (it != offsets.end() && std::abs(*it - offset) <= tol) return static_cast<int>(it - offsets.begin());
  throw CoverageError("time offset " + std::to_string(offset) + " is not covered by the flow table");
}

nlohmann::json FlowTable::sidecar(const VectorFieldSpec& W) const {
  return {{"n", W.n},
          {"N", grid.N},
          {"T_probe", offsets.empty() ? 0.0 : std::max(std::abs(offsets.front()), std::abs(offsets.back()))},
          {"h_ode", h_ode},
          {"offsets", offsets.size()},
          {"group_law_defect", group_law_defect}};
}

FlowTable build_flow_table(const VectorFieldSpec& W, const TorusGrid& grid, std::vector<double> offsets, double h_ode,
                           double tol_flow, Exec exec) {
  if (grid.n != W.n) throw ConfigError("grid dimension does not match W");
  std::sort(offsets.begin(), offsets.end());
  offsets.erase(std::unique(offsets.begin(), offsets.end()), offsets.end());
  FlowTable tab;
  tab.grid = grid;
  tab.offsets = offsets;
  tab.h_ode = h_ode;
  const std::size_t Nq = grid.size();
  const int K = static_cast<int>(offsets.size());
  tab.phi.assign(K * Nq, Vec{});
  tab.jac.assign(K * Nq, Mat{});
  tab.error.assign(K * Nq, 0.0);
  const int n = W.n;
  const auto zero_it = std::lower_bound(offsets.begin(), offsets.end(), 0.0);
  const int k0 = static_cast<int>(zero_it - offsets.begin());  // first non-negative offset
  const VariationalRhs rhs{W};

  ExceptionSink sink;
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (long ii = 0; ii < static_cast<long>(Nq); ++ii) sink.run([&] {
    const std::size_t i = static_cast<std::size_t>(ii);
    const Vec q0 = grid.point(i);
    // Two sweeps from offset 0: forward through non-negative offsets, backward through negative ones.
    for (int dir : {1, -1}) {
      FlowState x = pack(q0, identity(n), n);
      FlowState x2 = x;
      double t_prev = 0.0;
      const int begin = dir == 1 ? k0 : k0 - 1;
      for (int k = begin; dir == 1 ? k < K : k >= 0; k += dir) {
        const double t = offsets[k];
        x = rk4(x, t_prev, t, h_ode, rhs);
        x2 = rk4(x2, t_prev, t, 2.0 * h_ode, rhs);
        check_finite(x, "flow table");
        t_prev = t;
        Vec q;
        Mat J;
        unpack(x, n, q, J);
        double e = 0.0;
        for (int a = 0; a < n; ++a) {
          e = std::max(e, std::abs(x[a] - x2[a]));
          q[a] = wrap_angle(q[a]);
        }
        if (t == 0.0) {
          tab.phi[k * Nq + i] = q0;
          tab.jac[k * Nq + i] = identity(n);
        } else {
          tab.phi[k * Nq + i] = q;
          tab.jac[k * Nq + i] = J;
          tab.error[k * Nq + i] = e / 15.0;
        }
      }
    }
  });
  sink.rethrow();

  if (std::isinf(tol_flow)) return tab;
  // Group law on a subsample: phi^{t+s}(q) vs phi^t(phi^s(q)).
  std::vector<int> picks;
  const int stride = std::max(1, K / 6);
  for (int k = 0; k < K; k += stride) picks.push_back(k);
  const std::size_t qstride = std::max<std::size_t>(1, Nq / 8);
  double defect = 0.0;
  for (int ks : picks)
    for (int kt : picks) {
      const double s = offsets[ks], t = offsets[kt];
      int kst;
      try {
        kst = tab.find(s + t);
      } catch (const CoverageError&) {
        continue;
      }
      for (std::size_t i = 0; i < Nq; i += qstride) {
        const Vec composed = integrate_flow(W, tab.flow(ks, i), t, h_ode, false).q;
        defect = std::max(defect, torus_distance(composed, tab.flow(kst, i), n));
      }
    }
  tab.group_law_defect = defect;
  if (defect > tol_flow)
    throw DivergenceError("flow table group-law defect " + std::to_string(defect) + " exceeds tol_flow");
  return tab;
}

FlowTable build_flow_table(const VectorFieldSpec& W, const TorusGrid& grid, double T_probe, int count, double h_ode,
                           double tol_flow, Exec exec) {
  if (!(T_probe > 0.0)) throw ConfigError("T_probe must be > 0");
  if (count < 3) count = 3;
  if (count % 2 == 0) ++count;
  std::vector<double> offsets(count);
  const int half = count / 2;
  for (int k = 0; k < count; ++k) offsets[k] = T_probe * (k - half) / half;
  offsets[half] = 0.0;
  return build_flow_table(W, grid, std::move(offsets), h_ode, tol_flow, exec);
}

nlohmann::json PropagatorTable::sidecar(const VectorFieldSpec& W) const {
  return {{"n", W.n},  {"N", grid.N},          {"T_probe", ds * std::max(0, K - 1)},
          {"h_ode", h_ode}, {"sign", sign}, {"transpose", transpose}, {"ds", ds}, {"K", K}};
}

PropagatorTable build_propagator_table(const VectorFieldSpec& W, const TorusGrid& grid, double ds, int K, int sign,
                                       bool transpose, double h_ode, Exec exec) {
  if (grid.n != W.n) throw ConfigError("grid dimension does not match W");
  if (sign != 1 && sign != -1) throw ConfigError("sign must be +1 or -1");
  if (K < 1 || !(ds != 0.0) || !std::isfinite(ds)) throw ConfigError("propagator table needs K >= 1 and ds != 0");
  PropagatorTable tab;
  tab.grid = grid;
  tab.ds = ds;
  tab.K = K;
  tab.sign = sign;
  tab.transpose = transpose;
  tab.h_ode = h_ode;
  const std::size_t Nq = grid.size();
  tab.phi.assign(K * Nq, Vec{});
  tab.G.assign(K * Nq, Mat{});
  const int n = W.n;
  const PropagatorRhs rhs{W, sign, transpose};
  ExceptionSink sink;
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (long ii = 0; ii < static_cast<long>(Nq); ++ii) sink.run([&] {
    const std::size_t i = static_cast<std::size_t>(ii);
    const Vec q0 = grid.point(i);
    tab.phi[i] = q0;
    tab.G[i] = identity(n);
    FlowState x = pack(q0, identity(n), n);
    for (int k = 1; k < K; ++k) {
      x = rk4(x, (k - 1) * ds, k * ds, h_ode, rhs);
      check_finite(x, "propagator table");
      Vec q;
      Mat G;
      unpack(x, n, q, G);
      for (int a = 0; a < n; ++a) q[a] = wrap_angle(q[a]);
      tab.phi[k * Nq + i] = q;
      tab.G[k * Nq + i] = G;
    }
  });
  sink.rethrow();
  return tab;
}

nlohmann::json GrowthConstants::to_json() const {
  return {{"dW_c0", num(dW_c0, "|d_q W|_{C^0}")},
          {"T_probe", num(T_probe, "probe horizon for the growth rates")},
          {"rate_flow", num(rate_flow, "envelope growth rate of d_q phi")},
          {"rate_prop", num(rate_prop, "envelope growth rate of the propagators")},
          {"ls_rate_flow", num(ls_rate_flow, "least-squares growth rate of d_q phi")},
          {"ls_rate_prop", num(ls_rate_prop, "least-squares growth rate of the propagators")},
          {"ls_residual_flow", num(ls_residual_flow, "RMS residual of the flow fit")},
          {"ls_residual_prop", num(ls_residual_prop, "RMS residual of the propagator fit")},
          {"c0", num(c0, "normalized flow constant")},
          {"c_flow", num(c_flow, "normalized flow-Jacobian constant")},
          {"c_kappa", num(c_kappa, "normalized propagator constant with safety factor")},
          {"safety", num(safety, "safety factor applied to c_kappa")},
          {"admissibility_threshold", num(admissibility_threshold(), "c_kappa |d_q W|_{C^0}")}};
}

namespace {

struct Envelope {
  double rate = 0.0, ls = 0.0, ls_residual = 0.0;
};

// logs[k] = log sup_q |.| at s_k = k ds (k >= 1).
Envelope fit_envelope(const std::vector<double>& logs, double ds) {
  Envelope e;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 1; k < logs.size(); ++k) {
    const double s = k * ds;
    e.rate = std::max(e.rate, logs[k] / s);
    sxy += s * logs[k];
    sxx += s * s;
  }
  if (sxx > 0.0) e.ls = std::max(0.0, sxy / sxx);
  double rss = 0.0;
  for (std::size_t k = 1; k < logs.size(); ++k) {
    const double r = logs[k] - e.ls * k * ds;
    rss += r * r;
  }
  if (logs.size() > 1) e.ls_residual = std::sqrt(rss / static_cast<double>(logs.size() - 1));
  return e;
}

}  // namespace

GrowthConstants measure_growth(const VectorFieldSpec& W, double T_probe, int N, int samples, double h_ode, Exec exec) {
  GrowthConstants g;
  g.dW_c0 = W.dW_c0;
  if (T_probe <= 0.0) T_probe = W.dW_c0 > 0.0 ? std::max(5.0 / W.dW_c0, 5.0) : 5.0;
  g.T_probe = T_probe;
  if (W.dW_c0 == 0.0) return g;
  if (N <= 0) N = W.n == 1 ? 32 : (W.n == 2 ? 16 : 8);
  // Rates need a few digits only; a coarser step keeps long probes cheap.
  h_ode = std::max(h_ode, 1e-2);
  if (samples < 2) samples = 2;
  const TorusGrid grid{W.n, N};
  const double ds = T_probe / samples;
  const std::size_t Nq = grid.size();
  const int n = W.n;

  std::vector<double> offsets(samples + 1);
  for (int k = 0; k <= samples; ++k) offsets[k] = k * ds;
  const FlowTable ft = build_flow_table(W, grid, offsets, h_ode, std::numeric_limits<double>::infinity(), exec);
  std::vector<double> logs(samples + 1, 0.0);
  for (int k = 0; k <= samples; ++k) {
    double sup = 0.0;
    for (std::size_t i = 0; i < Nq; ++i) sup = std::max(sup, max_entry(ft.jacobian(k, i), n));
    logs[k] = std::log(sup);
  }
  const Envelope ef = fit_envelope(logs, ds);

  Envelope ep;
  for (int sign : {1, -1})
    for (bool tr : {false, true}) {
      if (tr && n == 1) continue;
      const PropagatorTable pt = build_propagator_table(W, grid, ds, samples + 1, sign, tr, h_ode, exec);
      for (int k = 0; k <= samples; ++k) {
        double sup = 0.0;
        for (std::size_t i = 0; i < Nq; ++i) sup = std::max(sup, max_entry(pt.prop(k, i), n));
        logs[k] = std::log(sup);
      }
      const Envelope e = fit_envelope(logs, ds);
      if (e.rate >= ep.rate) ep.rate = e.rate;
      if (e.ls >= ep.ls) {
        ep.ls = e.ls;
        ep.ls_residual = e.ls_residual;
      }
    }
  g.rate_flow = ef.rate;
  g.rate_prop = ep.rate;
  g.ls_rate_flow = ef.ls;
  g.ls_rate_prop = ep.ls;
  g.ls_residual_flow = ef.ls_residual;
  g.ls_residual_prop = ep.ls_residual;
  g.c_flow = g.rate_flow / W.dW_c0;
  g.c0 = g.rate_prop / W.dW_c0;
  g.c_kappa = g.safety * std::max(g.c0, g.c_flow);
  return g;
}

}  // namespace astor
