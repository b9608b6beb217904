// astor: batch front end. Subcommands solve, homological, verify, flow-table.
// Exit codes: 0 success, 1 input error, 2 non-convergence / failed checks /
// numerical failure.

#include <omp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "astor/config.hpp"
#include "astor/io.hpp"
#include "astor/report.hpp"

namespace fs = std::filesystem;
using namespace astor;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kFailed = 2;

struct Common {
  std::string config;
  std::string out_dir;
  int threads = 0;
  std::uint64_t seed = 0;
  std::string log_level = "info";
  CLI::Option* seed_opt = nullptr;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void add_common(CLI::App* sub, Common& c, bool config_required = true) {
  auto* opt = sub->add_option("--config", c.config, "run configuration (.toml or .json)");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  sub->add_option("--out-dir", c.out_dir, "output directory (overrides [output] directory)");
  sub->add_option("--threads", c.threads, "OpenMP threads (fallback: ASTOR_THREADS)")->check(CLI::NonNegativeNumber);
  c.seed_opt = sub->add_option("--seed", c.seed, "seed for probes and sampled diagnostics (overrides numerics.seed)");
  sub->add_option("--log-level", c.log_level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
}

void setup(const Common& c) {
  spdlog::set_level(spdlog::level::from_str(c.log_level));
  int threads = c.threads;
  if (threads == 0) {
    if (const char* env = std::getenv("ASTOR_THREADS")) {
      try {
        threads = std::stoi(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("ASTOR_THREADS is not an integer: '") + env + "'");
      }
      if (threads < 0) throw ConfigError("ASTOR_THREADS must be >= 0");
    }
  }
  if (threads > 0) omp_set_num_threads(threads);
  spdlog::debug("threads: {}", omp_get_max_threads());
}

RunConfig load(const Common& c) {
  RunConfig cfg = load_run_config(c.config);
  if (c.seed_opt && c.seed_opt->count() > 0) cfg.set_seed(c.seed);
  if (!c.out_dir.empty()) cfg.output.directory = c.out_dir;
  spdlog::info("config {} (kind {}, n = {})", c.config, to_string(cfg.kind), cfg.n);
  return cfg;
}

fs::path out_path(const RunConfig& cfg, const std::string& name) { return fs::path(cfg.output.directory) / name; }

void write_json(const RunConfig& cfg, const std::string& name, const nlohmann::json& j) {
  if (!cfg.output.json) return;
  write_text(out_path(cfg, name), j.dump(2) + "\n");
  spdlog::info("wrote {}", out_path(cfg, name).string());
}

void write_csv(const RunConfig& cfg, const std::string& name, const std::string& text) {
  if (!cfg.output.csv) return;
  write_text(out_path(cfg, name), text);
  spdlog::info("wrote {}", out_path(cfg, name).string());
}

std::string csv_number(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

TargetSystem target_of(const RunConfig& cfg) {
  if (cfg.hamiltonian) return TargetSystem::hamiltonian(*cfg.hamiltonian);
  return TargetSystem::vectorfield(*cfg.vectorfield);
}

// Diagnostics never abort a run: a failure is recorded in the report instead.
std::optional<DiagnosticsReport> diagnose(const RunConfig& cfg, const EmbeddingFamily& family, nlohmann::json& out) {
  Stopwatch sw;
  try {
    DiagnosticsReport rep = run_diagnostics(target_of(cfg), family, cfg.diagnostics);
    out = rep.to_json();
    spdlog::info("diagnostics: residual {:.3e}, all checks {} ({:.2f} s)", rep.residual.norm,
                 rep.all_pass() ? "pass" : "FAIL", sw.seconds());
    return rep;
  } catch (const Error& e) {
    spdlog::error("diagnostics failed: {}", e.what());
    out = {{"error", e.what()}, {"pass", false}};
    return std::nullopt;
  }
}

int cmd_solve(const Common& c) {
  setup(c);
  RunConfig cfg = load(c);
  if (cfg.kind == ProblemKind::Homological) throw ConfigError(cfg.source + ": solve needs kind hamiltonian or vectorfield");
  Stopwatch sw;
  InvarianceContext ctx(cfg.field(), cfg.numerics);
  spdlog::info("grid N = {}, M = {}, dt = {} ({:.2f} s setup)", cfg.numerics.N, ctx.M(), cfg.numerics.dt, sw.seconds());
  SolveResult res = cfg.hamiltonian ? iterate_L(*cfg.hamiltonian, ctx) : solve_vectorfield(*cfg.vectorfield, ctx);
  const NormReport& rep = res.report;
  for (const auto& w : rep.warnings) spdlog::warn("{}", w);
  spdlog::info("{}: {} iterations, residual {:.3e}, upsilon' = {} ({:.2f} s)", rep.status, rep.iterations, rep.residual,
               rep.upsilon_prime, sw.seconds());

  if (cfg.output.binary) {
    save_family(out_path(cfg, "family.bin"), res.family);
    spdlog::info("wrote {}", out_path(cfg, "family.bin").string());
  }
  nlohmann::json norm = rep.to_json(cfg.numerics);
  norm["kind"] = to_string(cfg.kind);
  write_json(cfg, "norm_report.json", norm);
  std::ostringstream hist;
  hist << "iteration,residual,step\n";
  for (std::size_t k = 0; k < rep.residual_history.size(); ++k)
    hist << k << ',' << csv_number(rep.residual_history[k]) << ','
         << (k < rep.step_history.size() ? csv_number(rep.step_history[k]) : "") << '\n';
  write_csv(cfg, "iterations.csv", hist.str());

  nlohmann::json diag;
  auto drep = diagnose(cfg, res.family, diag);
  write_json(cfg, "diagnostics.json", diag);
  if (drep) write_csv(cfg, "profile.csv", drep->profile_csv());

  if (!rep.converged) {
    spdlog::error("no convergence ({}); artifacts written", rep.status);
    return kFailed;
  }
  if (!drep || !drep->all_pass()) spdlog::warn("solver converged but some diagnostics failed");
  return kOk;
}

bool constant_field(const VectorFieldSpec& W) {
  for (const auto& w : W.W)
    if (!w.q_independent()) return false;
  return true;
}

int cmd_homological(const Common& c) {
  setup(c);
  RunConfig cfg = load(c);
  if (cfg.kind != ProblemKind::Homological) throw ConfigError(cfg.source + ": homological needs kind homological");
  const SolveConfig& nm = cfg.numerics;
  const VectorFieldSpec& W = *cfg.W;
  Stopwatch sw;
  const GrowthConstants growth = measure_growth(W, 0.0, 0, 64, nm.h_ode);
  int M = nm.M;
  if (M == 0) {
    const double H = nm.horizon > 0.0 ? nm.horizon : default_horizon(nm.spec.lambda, growth.admissibility_threshold());
    M = static_cast<int>(std::ceil(H / nm.dt - 1e-9)) + 1;
  }
  const TorusGrid grid{cfg.n, nm.N};
  const TimeAxis axis{nm.spec.upsilon, nm.dt, M};
  HomologicalOptions opt;
  opt.interp_width = nm.interp_width;
  opt.h_ode = nm.h_ode;
  opt.allow_inadmissible = cfg.allow_inadmissible;
  HomologicalSolver solver(W, grid, nm.dt, M, opt);
  solver.set_growth(growth);
  const GridFunction z = GridFunction::sample(cfg.z, grid, axis);
  const HomologicalSolution sol = solve_homological(solver, z, cfg.sign, cfg.transpose, nm.spec);
  spdlog::info("homological solve: residual {:.3e}, K = {:.4f} ({:.2f} s)", sol.residual, sol.K, sw.seconds());

  nlohmann::json j{
      {"kind", "homological"},
      {"sign", cfg.sign > 0 ? "+1" : "-1"},
      {"transpose", cfg.transpose},
      {"admissible", sol.admissible},
      {"grid",
       {{"n", num(cfg.n, "torus dimension")},
        {"N", num(nm.N, "grid points per axis")},
        {"M", num(M, "time slices")},
        {"dt", num(nm.dt, "time step and quadrature step")}}},
      {"T_max", num(sol.T_max, "truncation horizon (last time slice)")},
      {"residual", num(sol.residual, "weighted interior norm of the HE residual, FD4 in time")},
      {"kappa_norm", num(sol.kappa_norm, "weighted norm of the solution")},
      {"z_norm", num(sol.z_norm, "weighted norm of the right-hand side")},
      {"K", num(sol.K, "kappa_norm / z_norm")},
      {"tail_bound", num(sol.tail_bound, "weighted bound on the integral beyond T_max")},
      {"admissibility_threshold", num(growth.admissibility_threshold(), "c_kappa |d_q W|_C0")},
      {"growth", growth.to_json()}};
  if (constant_field(W)) {
    Vec omega{};
    for (int a = 0; a < cfg.n; ++a) omega[a] = W.W[a](Vec{}, 0.0);
    const GridFunction exact = transport_solution(cfg.z, omega, grid, axis);
    double d = 0.0;
    for (std::size_t k = 0; k < exact.data().size(); ++k) d = std::max(d, std::abs(exact.data()[k] - sol.kappa.data()[k]));
    j["transport_error"] = num(d, 1e-6, "max |kappa - closed-form transport solution| (constant W)");
    spdlog::info("closed-form transport comparison: {:.3e}", d);
  }
  write_json(cfg, "homological.json", j);
  if (cfg.output.binary) {
    save_grid_function(out_path(cfg, "kappa.bin"), sol.kappa, "kappa");
    spdlog::info("wrote {}", out_path(cfg, "kappa.bin").string());
  }
  const GridFunction r = residual_HE(sol.kappa, z, W, cfg.sign, cfg.transpose);
  const auto nk = slice_norms(sol.kappa, nm.spec.sigma), nz = slice_norms(z, nm.spec.sigma),
             nr = slice_norms(r, nm.spec.sigma);
  std::ostringstream csv;
  csv << "t,kappa_weighted,z_weighted,residual_weighted\n";
  for (int jt = 0; jt < M; ++jt) {
    const double t = axis.time(jt), w = std::exp(nm.spec.lambda * t);
    const bool interior = jt >= 2 && jt < M - 2;
    csv << csv_number(t) << ',' << csv_number(nk[jt] * w) << ',' << csv_number(nz[jt] * w) << ','
        << csv_number(interior ? nr[jt] * w : 0.0) << '\n';
  }
  write_csv(cfg, "homological_profile.csv", csv.str());
  return kOk;
}

int cmd_verify(const Common& c, const std::string& family_path) {
  setup(c);
  RunConfig cfg = load(c);
  if (cfg.kind == ProblemKind::Homological) throw ConfigError(cfg.source + ": verify needs kind hamiltonian or vectorfield");
  const EmbeddingFamily family = load_family(family_path);
  const auto& g = family.u.grid();
  const auto& ax = family.u.axis();
  auto mismatch = [&](const std::string& what) {
    throw IntegrityError(family_path + ": metadata mismatch with " + cfg.source + ": " + what);
  };
  if (g.n != cfg.n) mismatch("n = " + std::to_string(g.n) + " vs " + std::to_string(cfg.n));
  if (g.N != cfg.numerics.N) mismatch("N = " + std::to_string(g.N) + " vs " + std::to_string(cfg.numerics.N));
  if (std::abs(ax.dt - cfg.numerics.dt) > 1e-12 * cfg.numerics.dt) mismatch("dt differs");
  if (family.has_v() != (cfg.kind == ProblemKind::Hamiltonian)) mismatch("family blocks do not fit the problem kind");
  if (ax.M < 16) mismatch("family has fewer than 16 time slices");
  spdlog::info("family {}: N = {}, M = {}, t in [{}, {}]", family_path, g.N, ax.M, ax.t0, ax.end());

  nlohmann::json diag;
  auto drep = diagnose(cfg, family, diag);
  write_json(cfg, "diagnostics.json", diag);
  if (drep) write_csv(cfg, "profile.csv", drep->profile_csv());
  return drep && drep->all_pass() ? kOk : kFailed;
}

int cmd_flow_table(const Common& c) {
  setup(c);
  RunConfig cfg = load(c);
  const VectorFieldSpec& W = cfg.field();
  const TorusGrid grid{cfg.n, cfg.numerics.N};
  double T = cfg.flow_table.T_probe;
  if (T <= 0.0) T = std::max(5.0, W.dW_c0 > 0.0 ? 5.0 / W.dW_c0 : 5.0);
  const int count = cfg.flow_table.count;
  const double h = cfg.numerics.h_ode;
  Stopwatch sw;
  const FlowTable flow = build_flow_table(W, grid, T, count, h, cfg.flow_table.tol_flow);
  spdlog::info("flow table: {} offsets on [-{}, {}], group-law defect {:.2e} ({:.2f} s)", count, T, T,
               flow.group_law_defect, sw.seconds());
  if (cfg.output.binary) save_flow_table(out_path(cfg, "flow_table.bin"), flow, W);
  const int K = (count + 1) / 2;
  const double ds = T / (K - 1);
  for (int sign : {1, -1})
    for (bool tr : {false, true}) {
      if (tr && cfg.n == 1) continue;
      const PropagatorTable tab = build_propagator_table(W, grid, ds, K, sign, tr, h);
      const std::string name =
          std::string("propagator_") + (sign > 0 ? "plus" : "minus") + (tr ? "_transpose" : "") + ".bin";
      if (cfg.output.binary) save_propagator_table(out_path(cfg, name), tab, W);
    }
  const GrowthConstants growth = measure_growth(W, T, cfg.numerics.N, 64, h);
  write_json(cfg, "growth.json",
             {{"growth", growth.to_json()},
              {"group_law_defect", num(flow.group_law_defect, cfg.flow_table.tol_flow, "flow table group law")},
              {"T_probe", num(T, "largest tabulated offset")}});
  spdlog::info("tables written ({:.2f} s)", sw.seconds());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("astor"));
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"astor: asymptotic invariant tori for decaying time-dependent perturbations"};
  app.require_subcommand(1);
  Common c;
  std::string family;
  auto* solve = app.add_subcommand("solve", "solve for the invariant family and run diagnostics");
  add_common(solve, c);
  auto* hom = app.add_subcommand("homological", "solve one homological equation");
  add_common(hom, c);
  auto* verify = app.add_subcommand("verify", "run diagnostics on a stored family");
  add_common(verify, c);
  verify->add_option("--family", family, "family file written by solve")->required();
  auto* flow = app.add_subcommand("flow-table", "export flow and propagator tables of W");
  add_common(flow, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (solve->parsed()) return cmd_solve(c);
    if (hom->parsed()) return cmd_homological(c);
    if (verify->parsed()) return cmd_verify(c, family);
    return cmd_flow_table(c);
  } catch (const ConfigError& e) {
    spdlog::error("input error: {}", e.what());
    return kInputError;
  } catch (const IntegrityError& e) {
    spdlog::error("integrity error: {}", e.what());
    return kInputError;
  } catch (const UnsupportedInputError& e) {
    spdlog::error("unsupported input: {}", e.what());
    return kInputError;
  } catch (const InadmissibleRateError& e) {
    spdlog::error("inadmissible rate: {}", e.what());
    return kInputError;
  } catch (const Error& e) {
    spdlog::error("numerical failure: {}", e.what());
    return kFailed;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("file error: {}", e.what());
    return kInputError;
  }
}
