// Runs the astor binary on the configs in tests/data.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "astor/io.hpp"
#include "doctest.h"

using namespace astor;
namespace fs = std::filesystem;

namespace {

const fs::path kData = ASTOR_TEST_DATA;
const fs::path kWork = fs::temp_directory_path() / "astor_test_cli";

struct Run {
  int code = -1;
  std::string log;
};

Run run_cli(const std::string& args, const std::string& env = "") {
  fs::create_directories(kWork);
  const fs::path log = kWork / "log.txt";
  const std::string cmd = env + " " + std::string(ASTOR_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.log = read_text(log);
  return r;
}

std::string data(const std::string& name) { return (kData / name).string(); }
fs::path out(const std::string& name) { return kWork / name; }

nlohmann::json json_file(const fs::path& p) { return nlohmann::json::parse(read_text(p)); }

bool no_bare_numbers(const nlohmann::json& j, bool parent_has_context = false) {
  if (j.is_number()) return parent_has_context;
  if (j.is_object()) {
    const bool ctx = j.contains("context");
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!no_bare_numbers(it.value(), ctx)) return false;
    return true;
  }
  if (j.is_array())
    for (const auto& e : j)
      if (!no_bare_numbers(e, false)) return false;
  return true;
}

double value(const nlohmann::json& j) { return j.at("value").get<double>(); }

}  // namespace

TEST_CASE("solve on the unperturbed problem gives the zero family") {
  const auto r = run_cli("solve --config " + data("unperturbed.toml") + " --out-dir " + out("zero").string());
  INFO(r.log);
  REQUIRE(r.code == 0);
  const auto fam = load_family(out("zero") / "family.bin");
  CHECK(fam.u.max_abs() == 0.0);
  CHECK(fam.v.max_abs() == 0.0);
  const auto d = json_file(out("zero") / "diagnostics.json");
  CHECK(d.at("pass") == true);
  CHECK(value(d.at("invariance_residual").at("norm")) == 0.0);
}

TEST_CASE("solve, verify and determinism on the n = 1 benchmark") {
  const auto a = run_cli("solve --config " + data("bench_n1.toml") + " --out-dir " + out("bench_a").string());
  INFO(a.log);
  REQUIRE(a.code == 0);
  const auto rep = json_file(out("bench_a") / "norm_report.json");
  CHECK(rep.at("converged") == true);
  CHECK(value(rep.at("residual")) <= 1e-5);
  CHECK(no_bare_numbers(rep));
  CHECK(no_bare_numbers(json_file(out("bench_a") / "diagnostics.json")));
  CHECK(fs::exists(out("bench_a") / "profile.csv"));
  CHECK(fs::exists(out("bench_a") / "iterations.csv"));

  SUBCASE("identical config and seed give identical artifacts") {
    const auto b = run_cli("solve --config " + data("bench_n1.toml") + " --out-dir " + out("bench_b").string(),
                         "ASTOR_THREADS=1");
    REQUIRE(b.code == 0);
    for (const char* f : {"norm_report.json", "diagnostics.json", "family.bin", "profile.csv", "iterations.csv"})
      CHECK_MESSAGE(read_text(out("bench_a") / f) == read_text(out("bench_b") / f), f);
  }
  SUBCASE("the family verifies against its own config") {
    const auto v = run_cli("verify --family " + (out("bench_a") / "family.bin").string() + " --config " +
                         data("bench_n1.toml") + " --out-dir " + out("verify").string());
    INFO(v.log);
    CHECK(v.code == 0);
    CHECK(json_file(out("verify") / "diagnostics.json").at("pass") == true);
  }
  SUBCASE("a zero family fails against the perturbed config") {
    EmbeddingFamily zero = load_family(out("bench_a") / "family.bin");
    zero.u *= 0.0;
    zero.v *= 0.0;
    save_family(out("zero_fam.bin"), zero);
    const auto v = run_cli("verify --family " + out("zero_fam.bin").string() + " --config " + data("bench_n1.toml") +
                         " --out-dir " + out("verify_zero").string());
    CHECK(v.code != 0);
    const auto d = json_file(out("verify_zero") / "diagnostics.json");
    CHECK(d.at("pass") == false);
    // F(0) = (b, d_q a): C^1 size max(0.05, 0.1) at the first slice, weight e^0.
    CHECK(value(d.at("invariance_residual").at("norm")) == doctest::Approx(0.1).epsilon(0.02));
  }
  SUBCASE("a truncated family file is rejected") {
    fs::copy_file(out("bench_a") / "family.bin", out("cut.bin"), fs::copy_options::overwrite_existing);
    fs::copy_file(out("bench_a") / "family.bin.json", out("cut.bin.json"), fs::copy_options::overwrite_existing);
    fs::resize_file(out("cut.bin"), fs::file_size(out("cut.bin")) / 2);
    const auto v = run_cli("verify --family " + out("cut.bin").string() + " --config " + data("bench_n1.toml") +
                         " --out-dir " + out("verify_cut").string());
    CHECK(v.code == 1);
    CHECK(v.log.find("truncated") != std::string::npos);
  }
  SUBCASE("metadata mismatch is an input error") {
    const auto v = run_cli("verify --family " + (out("bench_a") / "family.bin").string() + " --config " +
                         data("unperturbed.toml") + " --out-dir " + out("verify_mm").string());
    CHECK(v.code == 1);
    CHECK(v.log.find("mismatch") != std::string::npos);
  }
}

TEST_CASE("vector field config in JSON") {
  const auto r = run_cli("solve --config " + data("vectorfield_n1.json") + " --out-dir " + out("vf").string());
  INFO(r.log);
  REQUIRE(r.code == 0);
  const auto fam = load_family(out("vf") / "family.bin");
  CHECK_FALSE(fam.has_v());
  CHECK(value(json_file(out("vf") / "norm_report.json").at("residual")) <= 1e-5);
}

TEST_CASE("lambda below the admissibility threshold warns and still runs") {
  const auto r = run_cli("solve --config " + data("low_lambda.toml") + " --out-dir " + out("low").string());
  INFO(r.log);
  CHECK((r.code == 0 || r.code == 2));
  const auto rep = json_file(out("low") / "norm_report.json");
  bool warned = false;
  for (const auto& w : rep.at("warnings")) warned = warned || w.get<std::string>().find("admissib") != std::string::npos;
  CHECK(warned);
}

TEST_CASE("homological subcommand") {
  SUBCASE("zero right-hand side") {
    const auto r = run_cli("homological --config " + data("homological_zero.toml") + " --out-dir " + out("hz").string());
    REQUIRE(r.code == 0);
    CHECK(load_grid_function(out("hz") / "kappa.bin").max_abs() == 0.0);
  }
  SUBCASE("constant W matches the transport solution") {
    const auto r =
        run_cli("homological --config " + data("homological_transport.toml") + " --out-dir " + out("ht").string());
    INFO(r.log);
    REQUIRE(r.code == 0);
    const auto j = json_file(out("ht") / "homological.json");
    CHECK(value(j.at("transport_error")) <= 1e-6);
    CHECK(no_bare_numbers(j));
  }
  SUBCASE("inadmissible rate") {
    const auto r =
        run_cli("homological --config " + data("homological_inadmissible.toml") + " --out-dir " + out("hi").string());
    CHECK(r.code == 1);
    CHECK(r.log.find("inadmissible") != std::string::npos);
  }
}

TEST_CASE("flow-table export") {
  const auto r = run_cli("flow-table --config " + data("unperturbed.toml") + " --out-dir " + out("ft").string() +
                       " --threads 1");
  INFO(r.log);
  REQUIRE(r.code == 0);
  const auto tab = load_flow_table(out("ft") / "flow_table.bin");
  CHECK(tab.offsets.size() == 41);
  const auto side = json_file(sidecar_path(out("ft") / "propagator_minus.bin"));
  CHECK(side.at("sign") == -1);
  CHECK(no_bare_numbers(json_file(out("ft") / "growth.json")));
}

TEST_CASE("input errors exit with 1") {
  fs::create_directories(kWork);
  write_text(out("bad.toml"), "kind = \"hamiltonian\"\n[problem]\nn = 1\nW = [{ amp = 1.0 }]\ntypo = 2\n");
  auto r = run_cli("solve --config " + out("bad.toml").string());
  CHECK(r.code == 1);
  CHECK(r.log.find("bad.toml:5: unknown key 'typo'") != std::string::npos);

  r = run_cli("solve --config " + (kWork / "missing.toml").string());
  CHECK(r.code == 1);
  r = run_cli("solve");
  CHECK(r.code == 1);
  r = run_cli("homological --config " + data("bench_n1.toml"));
  CHECK(r.code == 1);
  r = run_cli("solve --config " + data("unperturbed.toml") + " --out-dir " + out("env").string(), "ASTOR_THREADS=two");
  CHECK(r.code == 1);
}
