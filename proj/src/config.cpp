#include "astor/config.hpp"

#include <map>

#include "astor/io.hpp"
#include "toml.hpp"

namespace astor {

namespace {

using json = nlohmann::json;
using LineMap = std::map<std::string, int>;

std::string escape_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~')
      out += "~0";
    else if (c == '/')
      out += "~1";
    else
      out += c;
  }
  return out;
}

// Records the line of every object key and of every container that starts
// inside an array, keyed by JSON pointer.
void scan_json_lines(const std::string& text, LineMap& lines) {
  struct Frame {
    bool array;
    int index = 0;
    std::string key;
  };
  std::vector<Frame> st;
  int line = 1;
  auto path = [&] {
    std::string p;
    for (const auto& f : st) p += "/" + (f.array ? std::to_string(f.index) : escape_token(f.key));
    return p;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      ++line;
    } else if (c == '"') {
      const int at_line = line;
      std::string s;
      for (++i; i < text.size() && text[i] != '"'; ++i) {
        if (text[i] == '\\' && i + 1 < text.size()) ++i;
        s += text[i];
      }
      std::size_t k = i + 1;
      while (k < text.size() && std::isspace(static_cast<unsigned char>(text[k]))) ++k;
      if (k < text.size() && text[k] == ':' && !st.empty() && !st.back().array) {
        st.back().key = s;
        lines.emplace(path(), at_line);
      }
    } else if (c == '{' || c == '[') {
      if (!st.empty() && st.back().array) lines.emplace(path(), line);
      st.push_back({c == '[', 0, ""});
    } else if (c == '}' || c == ']') {
      if (!st.empty()) st.pop_back();
    } else if (c == ',' && !st.empty() && st.back().array) {
      ++st.back().index;
    }
  }
}

json toml_to_json(const toml::node& node, const std::string& ptr, LineMap& lines, const std::string& name) {
  if (const auto* t = node.as_table()) {
    json out = json::object();
    for (auto&& [k, v] : *t) {
      const std::string child = ptr + "/" + escape_token(std::string(k.str()));
      const int line = static_cast<int>(k.source().begin.line ? k.source().begin.line : v.source().begin.line);
      lines.emplace(child, line);
      out[std::string(k.str())] = toml_to_json(v, child, lines, name);
    }
    return out;
  }
  if (const auto* a = node.as_array()) {
    json out = json::array();
    for (std::size_t i = 0; i < a->size(); ++i) {
      const std::string child = ptr + "/" + std::to_string(i);
      lines.emplace(child, static_cast<int>((*a)[i].source().begin.line));
      out.push_back(toml_to_json((*a)[i], child, lines, name));
    }
    return out;
  }
  if (auto v = node.value_exact<std::int64_t>()) return *v;
  if (auto v = node.value_exact<double>()) return *v;
  if (auto v = node.value_exact<bool>()) return *v;
  if (auto v = node.value_exact<std::string>()) return *v;
  throw ConfigError(name + ":" + std::to_string(node.source().begin.line) + ": dates and times are not supported");
}

class Reader {
 public:
  Reader(std::string name, LineMap lines) : name_(std::move(name)), lines_(std::move(lines)) {}

  [[noreturn]] void fail(const std::string& ptr, const std::string& msg) const {
    throw ConfigError(name_ + ":" + std::to_string(line(ptr)) + ": " + msg);
  }

  int line(std::string ptr) const {
    for (;;) {
      auto it = lines_.find(ptr);
      if (it != lines_.end()) return it->second;
      if (ptr.empty()) return 1;
      ptr.erase(ptr.rfind('/'));
    }
  }

  static std::string label(const std::string& ptr) { return ptr.empty() ? "top level" : "'" + ptr.substr(1) + "'"; }

  void keys(const json& obj, const std::string& ptr, std::initializer_list<const char*> allowed) const {
    if (!obj.is_object()) fail(ptr, label(ptr) + " must be a table");
    for (const auto& [key, _] : obj.items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || key == a;
      if (!ok) fail(ptr + "/" + escape_token(key), "unknown key '" + key + "' in " + label(ptr));
    }
  }

  double number(const json& obj, const std::string& ptr, const char* key, double def) const {
    if (!obj.contains(key)) return def;
    const json& v = obj.at(key);
    if (!v.is_number()) fail(ptr + "/" + key, std::string("'") + key + "' must be a number");
    return v.get<double>();
  }

  long long integer(const json& obj, const std::string& ptr, const char* key, long long def) const {
    if (!obj.contains(key)) return def;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) fail(ptr + "/" + key, std::string("'") + key + "' must be an integer");
    return v.get<long long>();
  }

  bool boolean(const json& obj, const std::string& ptr, const char* key, bool def) const {
    if (!obj.contains(key)) return def;
    const json& v = obj.at(key);
    if (!v.is_boolean()) fail(ptr + "/" + key, std::string("'") + key + "' must be true or false");
    return v.get<bool>();
  }

  std::string string(const json& obj, const std::string& ptr, const char* key, const std::string& def) const {
    if (!obj.contains(key)) return def;
    const json& v = obj.at(key);
    if (!v.is_string()) fail(ptr + "/" + key, std::string("'") + key + "' must be a string");
    return v.get<std::string>();
  }

  std::vector<int> ints(const json& v, const std::string& ptr, int n) const {
    if (!v.is_array() || static_cast<int>(v.size()) != n) fail(ptr, "expected an array of " + std::to_string(n) + " integers");
    std::vector<int> out;
    for (const auto& x : v) {
      if (!x.is_number_integer()) fail(ptr, "expected integers");
      out.push_back(x.get<int>());
    }
    return out;
  }

  // Flat term list into `slots` functions; index keys select the slot.
  enum class Index { None, Component, Entry };
  std::vector<TrigTimeFunction> terms(const json& obj, const std::string& ptr, const char* key, int n, Index index,
                                      bool allow_alpha) const {
    const int slots = index == Index::None ? 1 : index == Index::Component ? n : n * n;
    std::vector<TrigTimeFunction> out(slots, TrigTimeFunction(n));
    if (!obj.contains(key)) return out;
    const std::string base = ptr + "/" + key;
    const json& arr = obj.at(key);
    if (!arr.is_array()) fail(base, std::string("'") + key + "' must be an array of terms");
    for (std::size_t t = 0; t < arr.size(); ++t) {
      const std::string tp = base + "/" + std::to_string(t);
      const json& jt = arr[t];
      if (!jt.is_object()) fail(tp, "each term must be a table");
      for (const auto& [k, _] : jt.items()) {
        const bool ok = k == "amp" || k == "k" || k == "phase" || k == "mu" || (k == "alpha" && allow_alpha) ||
                        (k == "i" && index != Index::None) || (k == "j" && index == Index::Entry);
        if (!ok) fail(tp + "/" + escape_token(k), "unknown key '" + k + "' in a term of '" + key + "'");
      }
      TrigTerm term;
      if (!jt.contains("amp")) fail(tp, std::string("term of '") + key + "' needs 'amp'");
      term.amp = number(jt, tp, "amp", 0.0);
      term.mu = number(jt, tp, "mu", 0.0);
      term.k = jt.contains("k") ? ints(jt.at("k"), tp + "/k", n) : std::vector<int>(n, 0);
      term.alpha = jt.contains("alpha") ? ints(jt.at("alpha"), tp + "/alpha", n) : std::vector<int>(n, 0);
      for (int a : term.alpha)
        if (a < 0) fail(tp + "/alpha", "p-exponents must be >= 0");
      const std::string phase = string(jt, tp, "phase", "cos");
      if (phase == "cos")
        term.phase = Phase::Cos;
      else if (phase == "sin")
        term.phase = Phase::Sin;
      else
        fail(tp + "/phase", "phase must be \"cos\" or \"sin\"");
      const long long i = integer(jt, tp, "i", 0);
      const long long j = integer(jt, tp, "j", 0);
      if (i < 0 || i >= n) fail(tp + "/i", "component index i out of range [0, " + std::to_string(n) + ")");
      if (j < 0 || j >= n) fail(tp + "/j", "entry index j out of range [0, " + std::to_string(n) + ")");
      const long long slot = index == Index::Entry ? i * n + j : index == Index::Component ? i : 0;
      out[slot].add(std::move(term));
    }
    return out;
  }

 private:
  std::string name_;
  LineMap lines_;
};

template <class F>
auto anchored(const Reader& r, const std::string& ptr, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    r.fail(ptr, e.what());
  } catch (const UnsupportedInputError& e) {
    r.fail(ptr, e.what());
  }
}

void read_numerics(const Reader& r, const json& root, RunConfig& cfg) {
  SolveConfig& s = cfg.numerics;
  if (!root.contains("numerics")) return;
  const json& nm = root.at("numerics");
  const std::string p = "/numerics";
  r.keys(nm, p,
         {"sigma", "lambda", "upsilon", "N", "M", "dt", "horizon", "keep_fraction", "tol_residual", "tol_fixed_point",
          "max_iterations", "upsilon_cap", "probes", "probe_threshold", "seed", "interp_width", "h_ode", "fold_tol",
          "allow_inadmissible"});
  s.spec.sigma = r.number(nm, p, "sigma", s.spec.sigma);
  s.spec.lambda = r.number(nm, p, "lambda", s.spec.lambda);
  s.spec.upsilon = r.number(nm, p, "upsilon", s.spec.upsilon);
  s.N = static_cast<int>(r.integer(nm, p, "N", s.N));
  s.M = static_cast<int>(r.integer(nm, p, "M", s.M));
  s.dt = r.number(nm, p, "dt", s.dt);
  s.horizon = r.number(nm, p, "horizon", s.horizon);
  s.keep_fraction = r.number(nm, p, "keep_fraction", s.keep_fraction);
  s.tol_residual = r.number(nm, p, "tol_residual", s.tol_residual);
  s.tol_fixed_point = r.number(nm, p, "tol_fixed_point", s.tol_fixed_point);
  s.max_iterations = static_cast<int>(r.integer(nm, p, "max_iterations", s.max_iterations));
  s.upsilon_cap = r.number(nm, p, "upsilon_cap", std::max(s.upsilon_cap, s.spec.upsilon));
  s.probes = static_cast<int>(r.integer(nm, p, "probes", s.probes));
  s.probe_threshold = r.number(nm, p, "probe_threshold", s.probe_threshold);
  const long long seed = r.integer(nm, p, "seed", 0);
  if (seed < 0) r.fail(p + "/seed", "seed must be >= 0");
  s.seed = static_cast<std::uint64_t>(seed);
  s.interp_width = static_cast<int>(r.integer(nm, p, "interp_width", s.interp_width));
  s.h_ode = r.number(nm, p, "h_ode", s.h_ode);
  s.fold_tol = r.number(nm, p, "fold_tol", s.fold_tol);
  cfg.allow_inadmissible = r.boolean(nm, p, "allow_inadmissible", false);
  anchored(r, p, [&] { s.validate(); });
}

void read_problem(const Reader& r, const json& root, RunConfig& cfg) {
  if (!root.contains("problem")) r.fail("", "missing [problem] table");
  const json& pb = root.at("problem");
  const std::string p = "/problem";
  using Index = Reader::Index;
  const double sigma = cfg.numerics.spec.sigma;
  auto dim = [&] {
    if (!pb.is_object() || !pb.contains("n")) r.fail(p, "'problem' needs the dimension n");
    const long long n = r.integer(pb, p, "n", 1);
    if (n < 1 || n > kMaxDim) r.fail(p + "/n", "n must lie in [1, " + std::to_string(kMaxDim) + "]");
    return static_cast<int>(n);
  };
  auto make_W = [&](const char* key) {
    if (!pb.contains(key)) r.fail(p, std::string("'problem' needs '") + key + "'");
    auto W = r.terms(pb, p, key, cfg.n, Index::Component, false);
    return anchored(r, p + "/" + key, [&] { return VectorFieldSpec::make(W, sigma); });
  };

  switch (cfg.kind) {
    case ProblemKind::Hamiltonian: {
      r.keys(pb, p, {"n", "H", "W", "a", "b", "m"});
      cfg.n = dim();
      if (pb.contains("H")) {
        for (const char* k : {"W", "a", "b", "m"})
          if (pb.contains(k)) r.fail(p + "/" + k, std::string("give either H or W, a, b, m, not both ('") + k + "')");
        auto H = r.terms(pb, p, "H", cfg.n, Index::None, true)[0];
        cfg.hamiltonian = anchored(r, p + "/H", [&] { return expand_hamiltonian(H, sigma); });
      } else {
        VectorFieldSpec W = make_W("W");
        auto a = r.terms(pb, p, "a", cfg.n, Index::None, false)[0];
        auto b = r.terms(pb, p, "b", cfg.n, Index::Component, false);
        auto m = r.terms(pb, p, "m", cfg.n, Index::Entry, true);
        cfg.hamiltonian = anchored(r, p, [&] { return hamiltonian_from_parts(W, a, b, m, sigma); });
      }
      break;
    }
    case ProblemKind::VectorField: {
      r.keys(pb, p, {"n", "Z", "W", "P"});
      cfg.n = dim();
      if (pb.contains("Z")) {
        for (const char* k : {"W", "P"})
          if (pb.contains(k)) r.fail(p + "/" + k, std::string("give either Z or W and P, not both ('") + k + "')");
        auto Z = r.terms(pb, p, "Z", cfg.n, Index::Component, false);
        cfg.vectorfield = anchored(r, p + "/Z", [&] { return VectorFieldProblem::from_field(Z, sigma); });
      } else {
        VectorFieldProblem prob;
        prob.W = make_W("W");
        prob.P = r.terms(pb, p, "P", cfg.n, Index::Component, false);
        cfg.vectorfield = prob;
      }
      break;
    }
    case ProblemKind::Homological: {
      r.keys(pb, p, {"n", "W", "z", "sign", "transpose"});
      cfg.n = dim();
      cfg.W = make_W("W");
      cfg.z = r.terms(pb, p, "z", cfg.n, Index::Component, false);
      for (std::size_t c = 0; c < cfg.z.size(); ++c)
        for (const auto& t : cfg.z[c].terms())
          if (t.mu < 0.0) r.fail(p + "/z", "right-hand side terms must not grow (mu >= 0)");
      const long long sign = r.integer(pb, p, "sign", 1);
      if (sign != 1 && sign != -1) r.fail(p + "/sign", "sign must be +1 or -1");
      cfg.sign = static_cast<int>(sign);
      cfg.transpose = r.boolean(pb, p, "transpose", false);
      break;
    }
  }
}

void read_diagnostics(const Reader& r, const json& root, RunConfig& cfg) {
  DiagnosticsOptions& d = cfg.diagnostics;
  d = DiagnosticsOptions::from(cfg.numerics);
  if (!root.contains("diagnostics")) return;
  const json& dg = root.at("diagnostics");
  const std::string p = "/diagnostics";
  r.keys(dg, p,
         {"residual_tol", "decay_fraction", "conjugacy_samples", "conjugacy_horizon", "conjugacy_tol",
          "lagrangian_factor", "extension_back"});
  d.residual_tol = r.number(dg, p, "residual_tol", d.residual_tol);
  d.decay_fraction = r.number(dg, p, "decay_fraction", d.decay_fraction);
  d.conjugacy_samples = static_cast<int>(r.integer(dg, p, "conjugacy_samples", d.conjugacy_samples));
  d.conjugacy_horizon = r.number(dg, p, "conjugacy_horizon", d.conjugacy_horizon);
  d.conjugacy_tol = r.number(dg, p, "conjugacy_tol", d.conjugacy_tol);
  d.lagrangian_factor = r.number(dg, p, "lagrangian_factor", d.lagrangian_factor);
  d.extension_back = r.number(dg, p, "extension_back", d.extension_back);
  if (!(d.residual_tol > 0.0) || !(d.conjugacy_tol > 0.0)) r.fail(p, "tolerances must be positive");
  if (d.conjugacy_samples < 0) r.fail(p + "/conjugacy_samples", "conjugacy_samples must be >= 0");
  if (!(d.conjugacy_horizon >= 0.0) || !(d.extension_back >= 0.0)) r.fail(p, "horizons must be >= 0");
}

void read_flow_table(const Reader& r, const json& root, RunConfig& cfg) {
  if (!root.contains("flow_table")) return;
  const json& ft = root.at("flow_table");
  const std::string p = "/flow_table";
  r.keys(ft, p, {"T_probe", "count", "tol_flow"});
  cfg.flow_table.T_probe = r.number(ft, p, "T_probe", cfg.flow_table.T_probe);
  cfg.flow_table.count = static_cast<int>(r.integer(ft, p, "count", cfg.flow_table.count));
  cfg.flow_table.tol_flow = r.number(ft, p, "tol_flow", cfg.flow_table.tol_flow);
  if (cfg.flow_table.T_probe < 0.0) r.fail(p + "/T_probe", "T_probe must be >= 0");
  if (cfg.flow_table.count < 3 || cfg.flow_table.count % 2 == 0) r.fail(p + "/count", "count must be odd and >= 3");
}

void read_output(const Reader& r, const json& root, RunConfig& cfg) {
  if (!root.contains("output")) return;
  const json& out = root.at("output");
  const std::string p = "/output";
  r.keys(out, p, {"directory", "formats"});
  cfg.output.directory = r.string(out, p, "directory", cfg.output.directory);
  if (out.contains("formats")) {
    const json& f = out.at("formats");
    if (!f.is_array()) r.fail(p + "/formats", "'formats' must be an array of strings");
    cfg.output.json = cfg.output.csv = cfg.output.binary = false;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const std::string fp = p + "/formats/" + std::to_string(i);
      if (!f[i].is_string()) r.fail(fp, "format names must be strings");
      const std::string name = f[i].get<std::string>();
      if (name == "json")
        cfg.output.json = true;
      else if (name == "csv")
        cfg.output.csv = true;
      else if (name == "binary")
        cfg.output.binary = true;
      else
        r.fail(fp, "unknown output format '" + name + "' (json, csv, binary)");
    }
  }
}

}  // namespace

std::string to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::Hamiltonian:
      return "hamiltonian";
    case ProblemKind::VectorField:
      return "vectorfield";
    case ProblemKind::Homological:
      return "homological";
  }
  return "?";
}

const VectorFieldSpec& RunConfig::field() const {
  if (hamiltonian) return hamiltonian->W;
  if (vectorfield) return vectorfield->W;
  return *W;
}

void RunConfig::set_seed(std::uint64_t seed) {
  numerics.seed = seed;
  diagnostics.seed = seed;
}

RunConfig parse_run_config(const std::string& text, ConfigFormat format, const std::string& name) {
  LineMap lines;
  json root;
  if (format == ConfigFormat::Toml) {
    try {
      const toml::table tbl = toml::parse(text, name);
      root = toml_to_json(tbl, "", lines, name);
    } catch (const toml::parse_error& e) {
      throw ConfigError(name + ":" + std::to_string(e.source().begin.line) + ": " + std::string(e.description()));
    }
  } else {
    try {
      root = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(name + ": " + e.what());
    }
    scan_json_lines(text, lines);
  }

  Reader r(name, std::move(lines));
  r.keys(root, "", {"kind", "problem", "numerics", "diagnostics", "flow_table", "output"});
  RunConfig cfg;
  cfg.source = name;
  if (!root.contains("kind")) r.fail("", "missing 'kind' (hamiltonian, vectorfield or homological)");
  const std::string kind = r.string(root, "", "kind", "");
  if (kind == "hamiltonian")
    cfg.kind = ProblemKind::Hamiltonian;
  else if (kind == "vectorfield")
    cfg.kind = ProblemKind::VectorField;
  else if (kind == "homological")
    cfg.kind = ProblemKind::Homological;
  else
    r.fail("/kind", "kind must be hamiltonian, vectorfield or homological, got '" + kind + "'");

  read_numerics(r, root, cfg);
  read_problem(r, root, cfg);
  read_diagnostics(r, root, cfg);
  read_flow_table(r, root, cfg);
  read_output(r, root, cfg);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const auto format = path.extension() == ".json" ? ConfigFormat::Json : ConfigFormat::Toml;
  return parse_run_config(read_text(path), format, path.string());
}

}  // namespace astor
