#include <filesystem>
#include <fstream>
#include <random>

#include "astor/config.hpp"
#include "astor/io.hpp"
#include "doctest.h"

using namespace astor;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "astor_test_io";
  fs::create_directories(dir);
  return dir / name;
}

GridFunction random_function(TorusGrid grid, TimeAxis axis, int dim, std::uint64_t seed) {
  GridFunction f(grid, axis, dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  for (auto& x : f.data()) x = g(rng);
  return f;
}

std::string error_of(const std::string& text, ConfigFormat fmt) {
  try {
    parse_run_config(text, fmt, "cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

const char* kBench = R"(kind = "hamiltonian"
[problem]
n = 1
W = [{ amp = 1.0 }, { k = [1], phase = "sin", amp = 0.3 }]
a = [{ k = [1], amp = 0.1, mu = 2.0 }]
b = [{ k = [1], phase = "sin", amp = 0.05, mu = 2.0 }]
m = [{ amp = 0.5 }]
[numerics]
N = 32
M = 100
)";

}  // namespace

TEST_CASE("grid function round trip is bitwise") {
  const auto f = random_function({2, 8}, {0.5, 0.1, 7}, 2, 3);
  const auto path = scratch("f.bin");
  save_grid_function(path, f);
  const auto g = load_grid_function(path);
  CHECK(g.grid() == f.grid());
  CHECK(g.axis() == f.axis());
  CHECK(g.dim() == 2);
  CHECK(g.data() == f.data());
  CHECK(fs::file_size(path) == 8 + 8 + f.data().size() * 8);
}

TEST_CASE("family round trip keeps both blocks and upsilon") {
  EmbeddingFamily fam;
  fam.u = random_function({2, 6}, {1.5, 0.05, 9}, 2, 1);
  fam.v = random_function({2, 6}, {1.5, 0.05, 9}, 2, 2);
  fam.upsilon = 1.5;
  const auto path = scratch("fam.bin");
  save_family(path, fam);
  const auto back = load_family(path);
  CHECK(back.has_v());
  CHECK(back.u.data() == fam.u.data());
  CHECK(back.v.data() == fam.v.data());
  CHECK(back.upsilon == 1.5);

  EmbeddingFamily torus;
  torus.u = random_function({1, 8}, {0.0, 0.1, 5}, 1, 4);
  save_family(path, torus);
  CHECK_FALSE(load_family(path).has_v());
}

TEST_CASE("corrupt files raise integrity errors") {
  const auto f = random_function({1, 16}, {0.0, 0.1, 10}, 1, 5);
  const auto path = scratch("c.bin");

  SUBCASE("truncated") {
    save_grid_function(path, f);
    fs::resize_file(path, fs::file_size(path) - 8);
    CHECK_THROWS_AS(load_grid_function(path), IntegrityError);
    try {
      load_grid_function(path);
    } catch (const IntegrityError& e) {
      CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
  }
  SUBCASE("trailing bytes") {
    save_grid_function(path, f);
    std::ofstream(path, std::ios::app | std::ios::binary) << "x";
    CHECK_THROWS_AS(load_grid_function(path), IntegrityError);
  }
  SUBCASE("flipped payload byte") {
    save_grid_function(path, f);
    std::fstream io(path, std::ios::in | std::ios::out | std::ios::binary);
    io.seekp(40);
    io.put('\x7f');
    io.close();
    CHECK_THROWS_WITH_AS(load_grid_function(path), doctest::Contains("checksum"), IntegrityError);
  }
  SUBCASE("bad magic") {
    save_grid_function(path, f);
    std::fstream io(path, std::ios::in | std::ios::out | std::ios::binary);
    io.put('X');
    io.close();
    CHECK_THROWS_WITH_AS(load_grid_function(path), doctest::Contains("magic"), IntegrityError);
  }
  SUBCASE("missing sidecar") {
    save_grid_function(path, f);
    fs::remove(sidecar_path(path));
    CHECK_THROWS_AS(load_grid_function(path), IntegrityError);
  }
  SUBCASE("wrong kind") {
    save_grid_function(path, f);
    CHECK_THROWS_AS(load_family(path), IntegrityError);
  }
}

TEST_CASE("flow and propagator tables round trip") {
  TrigTimeFunction w(2), w2(2);
  w.add({0, 0}, Phase::Cos, 1.0).add({0, 1}, Phase::Sin, 0.2);
  w2.add({0, 0}, Phase::Cos, 0.7).add({1, 0}, Phase::Cos, 0.1);
  const auto W = VectorFieldSpec::make({w, w2});
  const TorusGrid grid{2, 6};
  const auto flow = build_flow_table(W, grid, 1.0, 5);
  const auto path = scratch("flow.bin");
  save_flow_table(path, flow, W);
  const auto back = load_flow_table(path);
  CHECK(back.offsets == flow.offsets);
  CHECK(back.error == flow.error);
  REQUIRE(back.phi.size() == flow.phi.size());
  for (std::size_t e = 0; e < flow.phi.size(); ++e) {
    CHECK(back.phi[e] == flow.phi[e]);
    CHECK(back.jac[e] == flow.jac[e]);
  }
  nlohmann::json side;
  read_arrays(path, &side);
  for (const char* key : {"n", "N", "T_probe", "h_ode"}) CHECK(side.contains(key));

  const auto prop = build_propagator_table(W, grid, 0.25, 4, -1, true);
  save_propagator_table(path, prop, W);
  const auto pb = load_propagator_table(path);
  CHECK(pb.sign == -1);
  CHECK(pb.transpose);
  CHECK(pb.K == 4);
  for (std::size_t e = 0; e < prop.G.size(); ++e) CHECK(pb.G[e] == prop.G[e]);
  read_arrays(path, &side);
  CHECK(side.at("sign") == -1);
}

TEST_CASE("run config from TOML") {
  const auto cfg = parse_run_config(kBench, ConfigFormat::Toml);
  CHECK(cfg.kind == ProblemKind::Hamiltonian);
  REQUIRE(cfg.hamiltonian);
  const auto& H = *cfg.hamiltonian;
  CHECK(cfg.numerics.N == 32);
  CHECK(cfg.numerics.M == 100);
  CHECK(cfg.numerics.spec.lambda == 2.0);
  const Vec q{0.7}, p{0.4};
  const double t = 0.3;
  const double expected = (1.0 + 0.3 * std::sin(0.7)) * 0.4 + 0.5 * 0.16 + 0.1 * std::cos(0.7) * std::exp(-0.6) +
                          0.05 * std::sin(0.7) * std::exp(-0.6) * 0.4;
  CHECK(H.H(q, p, t) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(cfg.diagnostics.seed == 0);
  CHECK(cfg.output.directory == "astor_out");
}

TEST_CASE("JSON and TOML give the same problem") {
  const char* json = R"({"kind": "hamiltonian",
    "problem": {"n": 1,
      "W": [{"amp": 1.0}, {"k": [1], "phase": "sin", "amp": 0.3}],
      "a": [{"k": [1], "amp": 0.1, "mu": 2.0}],
      "b": [{"k": [1], "phase": "sin", "amp": 0.05, "mu": 2.0}],
      "m": [{"amp": 0.5}]},
    "numerics": {"N": 32, "M": 100}})";
  const auto a = parse_run_config(kBench, ConfigFormat::Toml);
  const auto b = parse_run_config(json, ConfigFormat::Json);
  CHECK(a.hamiltonian->to_json() == b.hamiltonian->to_json());
  CHECK(a.numerics.to_json() == b.numerics.to_json());
}

TEST_CASE("full Hamiltonian H is expanded") {
  const char* text = R"(kind = "hamiltonian"
[problem]
n = 1
H = [
  { alpha = [1], amp = 1.0 },
  { k = [1], alpha = [1], phase = "sin", amp = 0.3 },
  { alpha = [2], amp = 0.5 },
  { k = [1], amp = 0.1, mu = 2.0 },
]
)";
  const auto cfg = parse_run_config(text, ConfigFormat::Toml);
  const auto ref = parse_run_config(kBench, ConfigFormat::Toml);
  const Vec q{1.1}, p{-0.3};
  CHECK(cfg.hamiltonian->H(q, p, 0.2) ==
        doctest::Approx(ref.hamiltonian->H(q, p, 0.2) - 0.05 * std::sin(1.1) * std::exp(-0.4) * -0.3).epsilon(1e-14));
  CHECK(cfg.hamiltonian->W.W[0](q, 0.0) == doctest::Approx(1.0 + 0.3 * std::sin(1.1)));
}

TEST_CASE("vector field and homological configs") {
  const auto vf = parse_run_config(R"(kind = "vectorfield"
[problem]
n = 2
Z = [{ i = 0, amp = 1.0 }, { i = 1, amp = 0.5 }, { i = 1, k = [1, 1], amp = 0.2, mu = 3.0 }]
)",
                                   ConfigFormat::Toml);
  REQUIRE(vf.vectorfield);
  CHECK(vf.vectorfield->W.W[1].terms().size() == 1);
  CHECK(vf.vectorfield->P[1].terms().size() == 1);
  CHECK(vf.vectorfield->P[0].empty());

  const auto hom = parse_run_config(R"(kind = "homological"
[problem]
n = 1
W = [{ amp = 1.0 }]
z = [{ k = [2], amp = 1.0, mu = 3.0 }]
sign = -1
[numerics]
allow_inadmissible = true
)",
                                    ConfigFormat::Toml);
  CHECK(hom.sign == -1);
  CHECK(hom.allow_inadmissible);
  CHECK(hom.z.size() == 1);
  CHECK(hom.field().n == 1);
}

TEST_CASE("config errors carry the line") {
  CHECK(error_of("kind = \"hamiltonian\"\n[problem]\nn = 1\nW = [{ amp = 1.0 }]\nextra = 1\n", ConfigFormat::Toml) ==
        "cfg:5: unknown key 'extra' in 'problem'");
  CHECK(error_of("kind = \"hamiltonian\"\n[problem]\nn = 1\nW = [\n  { amp = 1.0 },\n  { amp = 2.0, kk = [1] },\n]\n",
                 ConfigFormat::Toml)
            .rfind("cfg:6: unknown key 'kk'", 0) == 0);
  CHECK(error_of("kind = \"hamiltonian\"\n[problem]\nn = 1\nW = [{ amp = 1.0 }]\n[numerics]\nN = 4\n",
                 ConfigFormat::Toml)
            .rfind("cfg:5:", 0) == 0);
  CHECK(error_of("kind = \"hamiltonian\"\n[problem]\nn = 1\nW = [{ amp = 1.0 }]\n[numerics]\nlambda = \"two\"\n",
                 ConfigFormat::Toml) == "cfg:6: 'lambda' must be a number");
  CHECK(error_of("kind = \"hamiltonian\"\n[problem\n", ConfigFormat::Toml).rfind("cfg:2:", 0) == 0);
  CHECK(error_of("kind = \"hamiltonian\"\nsurprise = true\n", ConfigFormat::Toml) ==
        "cfg:2: unknown key 'surprise' in top level");
  CHECK(error_of("kind = \"lagrangian\"\n", ConfigFormat::Toml).rfind("cfg:1: kind must be", 0) == 0);

  const std::string json = "{\n  \"kind\": \"vectorfield\",\n  \"problem\": {\n    \"n\": 1,\n    \"Z\": [\n"
                           "      {\"amp\": 1.0},\n      {\"amp\": 0.1, \"mu\": 1.0, \"i\": 3}\n    ]\n  }\n}\n";
  CHECK(error_of(json, ConfigFormat::Json).rfind("cfg:7: component index", 0) == 0);
  CHECK(error_of("{\"kind\": \"vectorfield\",\n \"problem\": {\"n\": 1, \"Z\": [{\"amp\": 1.0}]},\n \"out\": {}}",
                 ConfigFormat::Json) == "cfg:3: unknown key 'out' in top level");
  CHECK_FALSE(error_of("{\"kind\": ", ConfigFormat::Json).empty());
  CHECK(error_of("kind = \"hamiltonian\"\n[problem]\nn = 1\nW = [{ amp = 1.0, i = 0, alpha = [1] }]\n",
                 ConfigFormat::Toml)
            .rfind("cfg:4: unknown key 'alpha'", 0) == 0);
  CHECK(error_of("kind = \"hamiltonian\"\n[problem]\nn = 5\n", ConfigFormat::Toml).rfind("cfg:3: n must", 0) == 0);
}

TEST_CASE("seed override reaches solver and diagnostics") {
  auto cfg = parse_run_config(kBench, ConfigFormat::Toml);
  cfg.set_seed(42);
  CHECK(cfg.numerics.seed == 42);
  CHECK(cfg.diagnostics.seed == 42);
}
