#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "astor/diagnostics.hpp"

namespace astor {

enum class ProblemKind { Hamiltonian, VectorField, Homological };
enum class ConfigFormat { Toml, Json };

std::string to_string(ProblemKind kind);

struct FlowTableOptions {
  double T_probe = 0.0;  // 0: max(5 / |d_q W|_{C^0}, 5)
  int count = 41;        // odd, so offset 0 is tabulated
  double tol_flow = 1e-8;
};

struct OutputOptions {
  std::string directory = "astor_out";
  bool json = true;
  bool csv = true;
  bool binary = true;
};

/// A validated batch run. Functions are flat term lists: every term is a table
/// with amp and optional k, alpha (p-exponents, Hamiltonian H and m only),
/// phase, mu, plus the component index i (fields) or the entry i, j (m).
struct RunConfig {
  std::string source;
  ProblemKind kind = ProblemKind::Hamiltonian;
  int n = 1;

  std::optional<HamiltonianSpec> hamiltonian;
  std::optional<VectorFieldProblem> vectorfield;

  // kind = homological
  std::optional<VectorFieldSpec> W;
  TrigField z;
  int sign = 1;
  bool transpose = false;
  bool allow_inadmissible = false;

  SolveConfig numerics;
  DiagnosticsOptions diagnostics;
  FlowTableOptions flow_table;
  OutputOptions output;

  const VectorFieldSpec& field() const;
  void set_seed(std::uint64_t seed);
};

/// Throws ConfigError with a "name:line: " prefix on syntax errors, unknown
/// keys, wrong types and out-of-range values.
RunConfig parse_run_config(const std::string& text, ConfigFormat format, const std::string& name = "<config>");
/// Format from the extension: .json is JSON, anything else TOML.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace astor
