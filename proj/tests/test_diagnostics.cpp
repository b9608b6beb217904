#include <cmath>
#include <random>
#include <sstream>

#include "astor/diagnostics.hpp"
#include "doctest.h"

using namespace astor;

namespace {

VectorFieldSpec bench_field() {
  TrigTimeFunction w(1);
  w.add({0}, Phase::Cos, 1.0).add({1}, Phase::Sin, 0.3);
  return VectorFieldSpec::make({w});
}

TrigField half_m(int n) {
  TrigField m(n * n, TrigTimeFunction(n));
  for (int a = 0; a < n; ++a) m[a * n + a].add(std::vector<int>(n, 0), Phase::Cos, 0.5);
  return m;
}

HamiltonianSpec bench_hamiltonian(double s) {
  TrigTimeFunction a(1), b(1);
  a.add({1}, Phase::Cos, 0.1 * s, 2.0);
  b.add({1}, Phase::Sin, 0.05 * s, 2.0);
  return hamiltonian_from_parts(bench_field(), a, {b}, half_m(1));
}

SolveConfig bench_config() {
  SolveConfig cfg;
  cfg.N = 64;
  cfg.M = 400;
  cfg.dt = 0.025;
  return cfg;
}

EmbeddingFamily zero_family(int n, int N, int M, double dt, bool with_v) {
  const TorusGrid grid{n, N};
  const TimeAxis axis{0.0, dt, M};
  EmbeddingFamily f;
  f.u = GridFunction(grid, axis, n);
  if (with_v) f.v = GridFunction(grid, axis, n);
  return f;
}

// Every number in a report sits in an object that also carries "context".
bool no_bare_numbers(const nlohmann::json& j, bool parent_has_context = false) {
  if (j.is_number()) return parent_has_context;
  if (j.is_object()) {
    const bool ctx = j.contains("context");
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!no_bare_numbers(it.value(), ctx)) return false;
    return true;
  }
  if (j.is_array()) {
    for (const auto& e : j)
      if (!no_bare_numbers(e, false)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("target system right-hand sides") {
  const auto H = bench_hamiltonian(1.0);
  const auto X = TargetSystem::hamiltonian(H);
  TrigTimeFunction full(1);
  full.add({{0}, {1}, Phase::Cos, 1.0, 0.0});
  full.add({{1}, {1}, Phase::Sin, 0.3, 0.0});
  full.add({{0}, {2}, Phase::Cos, 0.5, 0.0});
  full.add({{1}, {0}, Phase::Cos, 0.1, 2.0});
  full.add({{1}, {1}, Phase::Sin, 0.05, 2.0});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int s = 0; s < 10; ++s) {
    Vec q{}, p{}, dq{}, dp{};
    q[0] = U(rng);
    p[0] = U(rng);
    const double t = std::abs(U(rng));
    X.rhs(q, p, t, dq, dp);
    CHECK(dq[0] == doctest::Approx(full.dp(0)(q, p, t)).epsilon(1e-13));
    CHECK(dp[0] == doctest::Approx(-full.dq(0)(q, p, t)).epsilon(1e-13));
  }
  TrigTimeFunction P(1);
  P.add({1}, Phase::Sin, 0.1, 2.0);
  const auto Z = TargetSystem::vectorfield({bench_field(), {P}});
  CHECK_FALSE(Z.has_p());
  Vec q{}, dq{}, dp{};
  q[0] = 0.7;
  Z.rhs(q, Vec{}, 0.5, dq, dp);
  CHECK(dq[0] == doctest::Approx(1.0 + 0.3 * std::sin(0.7) + 0.1 * std::sin(0.7) * std::exp(-1.0)).epsilon(1e-14));
}

TEST_CASE("invariance residual of the trivial embedding is exactly zero") {
  const auto fam = zero_family(1, 32, 60, 0.025, true);
  const auto r = invariance_residual(TargetSystem::hamiltonian(bench_hamiltonian(0.0)), fam, 1.0, 2.0);
  CHECK(r.norm == 0.0);
  CHECK(r.r_u.max_abs() == 0.0);
  CHECK(r.r_v.max_abs() == 0.0);
  const auto famz = zero_family(1, 32, 60, 0.025, false);
  const auto rz = invariance_residual(TargetSystem::vectorfield({bench_field(), {TrigTimeFunction(1)}}), famz, 1.0, 2.0);
  CHECK(rz.norm == 0.0);
  CHECK_THROWS_AS(invariance_residual(TargetSystem::hamiltonian(bench_hamiltonian(0.0)), famz, 1.0, 2.0),
                  ConfigError);
}

TEST_CASE("invariance residual responds linearly to a shift of u") {
  // u = eps e^{-lambda t}: r_u = W(q + u) - W(q) + lambda u ~ eps e^{-lambda t} (0.3 cos q + lambda),
  // whose weighted C^1 norm is eps (lambda + 0.3).
  const double lambda = 2.0;
  const auto X = TargetSystem::hamiltonian(bench_hamiltonian(0.0));
  std::vector<double> slopes;
  for (double eps : {1e-3, 1e-4}) {
    auto fam = zero_family(1, 32, 120, 0.025, true);
    for (int j = 0; j < fam.u.M(); ++j)
      for (std::size_t i = 0; i < 32; ++i) fam.u(j, i, 0) = eps * std::exp(-lambda * fam.u.axis().time(j));
    const auto r = invariance_residual(X, fam, 1.0, lambda);
    CHECK(r.r_v.max_abs() == 0.0);
    slopes.push_back(r.norm / eps);
  }
  for (double s : slopes) CHECK(std::abs(s - (lambda + 0.3)) <= 0.1 * (lambda + 0.3));
  CHECK(slopes[0] == doctest::Approx(slopes[1]).epsilon(0.01));
}

TEST_CASE("decay fit") {
  const TorusGrid grid{1, 32};
  const TimeAxis axis{0.0, 0.025, 200};
  TrigTimeFunction f(1);
  f.add({1}, Phase::Sin, 1.0, 2.0);
  const auto fit = decay_fit(GridFunction::sample({f}, grid, axis), 1.0);
  CHECK_FALSE(fit.floor);
  CHECK(fit.rate == doctest::Approx(2.0).epsilon(0.005));
  CHECK(fit.r2 > 0.999999);
  CHECK(fit.samples == 100);

  const auto z = decay_fit(GridFunction(grid, axis, 1), 1.0);
  CHECK(z.floor);
  CHECK_THROWS_AS(decay_fit(GridFunction(grid, TimeAxis{0.0, 0.1, 10}, 1), 1.0), ConfigError);
}

TEST_CASE("conjugacy defect: exact at t = t0 and clean for the trivial family") {
  // Any family: take an arbitrary smooth one.
  auto fam = zero_family(1, 32, 120, 0.025, true);
  for (int j = 0; j < fam.u.M(); ++j)
    for (std::size_t i = 0; i < 32; ++i) {
      const double q = fam.u.grid().point(i)[0], t = fam.u.axis().time(j);
      fam.u(j, i, 0) = 0.2 * std::sin(q) * std::exp(-t);
      fam.v(j, i, 0) = 0.1 * std::cos(2 * q) * std::exp(-t);
    }
  const auto X = TargetSystem::hamiltonian(bench_hamiltonian(1.0));
  auto samples = conjugacy_samples(fam, 20, 5.0, 3);
  for (auto& s : samples) s.t = s.t0;
  const auto rep = conjugacy_defect(X, fam, samples);
  CHECK(rep.max_defect == 0.0);

  const auto zero = zero_family(1, 32, 120, 0.025, true);
  const auto X0 = TargetSystem::hamiltonian(bench_hamiltonian(0.0));
  const auto rep0 = conjugacy_defect(X0, zero, conjugacy_samples(zero, 20, 5.0, 4));
  CHECK(rep0.max_defect == 0.0);
  CHECK(rep0.diverged == 0);

  for (const auto& s : conjugacy_samples(fam, 100, 1.0, 5)) {
    CHECK(s.t >= s.t0);
    CHECK(s.t - s.t0 <= 1.0 + 1e-12);
  }
}

TEST_CASE("Lagrangian coefficients") {
  const int N = 24, M = 20;
  const double lambda = 2.0;
  SUBCASE("zero family") {
    const auto fam = zero_family(2, N, M, 0.05, true);
    const auto rep = lagrangian_coefficients(fam);
    CHECK_FALSE(rep.skipped);
    CHECK(rep.max == 0.0);
  }
  SUBCASE("exact gradient") {
    // v = grad S e^{-lambda t}, S = cos(q1 + 2 q2) + 0.3 sin(q1) cos(q2), u = 0.
    auto fam = zero_family(2, N, M, 0.05, true);
    for (int j = 0; j < M; ++j)
      for (std::size_t i = 0; i < fam.u.grid().size(); ++i) {
        const Vec q = fam.u.grid().point(i);
        const double e = std::exp(-lambda * fam.u.axis().time(j));
        fam.v(j, i, 0) = e * (-std::sin(q[0] + 2 * q[1]) + 0.3 * std::cos(q[0]) * std::cos(q[1]));
        fam.v(j, i, 1) = e * (-2 * std::sin(q[0] + 2 * q[1]) - 0.3 * std::sin(q[0]) * std::sin(q[1]));
      }
    const auto rep = lagrangian_coefficients(fam);
    CHECK(rep.max <= 1e-8);
    // A rotational v is caught: c_12 = d_1 v_2 - d_2 v_1 = -cos q2.
    for (int j = 0; j < M; ++j)
      for (std::size_t i = 0; i < fam.u.grid().size(); ++i) {
        fam.v(j, i, 0) = std::sin(fam.u.grid().point(i)[1]);
        fam.v(j, i, 1) = 0.0;
      }
    const auto c = lagrangian_slice(fam, 0);
    for (std::size_t i = 0; i < fam.u.grid().size(); ++i)
      CHECK(c[i * 4 + 1] == doctest::Approx(-std::cos(fam.u.grid().point(i)[1])).epsilon(1e-10));
  }
  SUBCASE("skipped for n = 1") {
    const auto rep = lagrangian_coefficients(zero_family(1, N, M, 0.05, true));
    CHECK(rep.skipped);
    CHECK_FALSE(rep.reason.empty());
  }
}

TEST_CASE("extend_embedding trivial cases") {
  auto fam = zero_family(1, 32, 60, 0.025, true);
  const auto X0 = TargetSystem::hamiltonian(bench_hamiltonian(0.0));
  const auto e0 = extend_embedding(X0, fam, -1.0);
  CHECK(e0.u.max_abs() <= 1e-10);
  CHECK(e0.v.max_abs() == 0.0);
  CHECK(e0.min_det > 0.0);

  for (int j = 0; j < fam.u.M(); ++j)
    for (std::size_t i = 0; i < 32; ++i) fam.u(j, i, 0) = 0.1 * std::sin(fam.u.grid().point(i)[0] + j);
  const auto e1 = extend_embedding(X0, fam, 0.0);
  CHECK(e1.u.data() == fam.u.crop(0, 1).data());
}

TEST_CASE("diagnostics on the converged benchmark") {
  const SolveConfig cfg = bench_config();
  const auto H = bench_hamiltonian(1.0);
  const auto r = iterate_L(H, cfg);
  REQUIRE(r.report.converged);
  const auto X = TargetSystem::hamiltonian(H);
  const auto opt = DiagnosticsOptions::from(cfg);
  const auto d = run_diagnostics(X, r.family, opt);

  CHECK(d.residual.norm <= 1e-5);
  CHECK(d.decay_u.rate >= 0.9 * 2.0);
  CHECK(d.decay_v.rate >= 0.9 * 2.0);
  CHECK(d.conjugacy.samples.size() == 50);
  CHECK(d.conjugacy.max_defect <= 1e-4);
  CHECK(d.lagrangian.skipped);
  CHECK(d.extension.min_det > 0.0);
  CHECK(d.extension.consistency <= 1e-4);
  CHECK(d.all_pass());

  // A defect built from the residual: the solver output must not be trivially exact.
  CHECK(d.residual.norm > 0.0);

  const auto j = d.to_json();
  CHECK(no_bare_numbers(j));
  CHECK(no_bare_numbers(r.report.to_json(cfg)));
  const std::string csv = d.profile_csv();
  std::istringstream is(csv);
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) ++lines;
  CHECK(lines == r.family.u.M() + 1);

  // Zero family against the perturbed problem fails the residual check.
  EmbeddingFamily zero{GridFunction(r.family.u.grid(), r.family.u.axis(), 1),
                       GridFunction(r.family.u.grid(), r.family.u.axis(), 1), 0.0};
  const auto dz = run_diagnostics(X, zero, opt);
  CHECK_FALSE(dz.residual_pass());
  CHECK_FALSE(dz.all_pass());
  // r_u = b, r_v = -d_q a: weighted C^1 norm max(0.05, 0.1).
  CHECK(dz.residual.norm == doctest::Approx(0.1).epsilon(1e-3));
}

TEST_CASE("diagnostics on the vector field benchmark") {
  const SolveConfig cfg = bench_config();
  TrigTimeFunction Z(1);
  Z.add({0}, Phase::Cos, 1.0).add({1}, Phase::Sin, 0.3).add({1}, Phase::Sin, 0.1, 2.0);
  const auto prob = VectorFieldProblem::from_field({Z});
  const auto r = solve_vectorfield(prob, cfg);
  REQUIRE(r.report.converged);
  const auto d = run_diagnostics(TargetSystem::vectorfield(prob), r.family, DiagnosticsOptions::from(cfg));
  CHECK(d.residual.norm <= 1e-5);
  CHECK(d.decay_u.rate >= 1.8);
  CHECK(d.conjugacy.max_defect <= 1e-4);
  CHECK(d.lagrangian.skipped);
  CHECK(d.all_pass());
}

TEST_CASE("trivial problem: every diagnostic is exactly clean") {
  const SolveConfig cfg = bench_config();
  const auto H = bench_hamiltonian(0.0);
  const auto r = iterate_L(H, cfg);
  const auto d = run_diagnostics(TargetSystem::hamiltonian(H), r.family, DiagnosticsOptions::from(cfg));
  CHECK(d.residual.norm == 0.0);
  CHECK(d.decay_u.floor);
  CHECK(d.decay_v.floor);
  CHECK(d.conjugacy.max_defect == 0.0);
  CHECK(d.lagrangian.skipped);
  CHECK(d.all_pass());
}
