#include "astor/io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace astor {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'A', 'S', 'T', 'O', 'R', 'G', 'F', '1'};

struct Fnv {
  std::uint64_t h = 0xcbf29ce484222325ull;
  void add(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  }
  std::string hex() const {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
  }
};

nlohmann::json grid_json(const TorusGrid& g) { return {{"n", g.n}, {"N", g.N}}; }
nlohmann::json axis_json(const TimeAxis& a) { return {{"t0", a.t0}, {"dt", a.dt}, {"M", a.M}}; }

template <class T>
T field(const nlohmann::json& j, const char* key, const fs::path& file) {
  if (!j.contains(key)) throw IntegrityError(file.string() + ": sidecar lacks '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw IntegrityError(file.string() + ": sidecar field '" + key + "' has the wrong type");
  }
}

GridFunction grid_block(const ArrayBlock& b, const nlohmann::json& side, const fs::path& file) {
  const auto& g = side.at("grid");
  const auto& a = side.at("axis");
  const TorusGrid grid{field<int>(g, "n", file), field<int>(g, "N", file)};
  const TimeAxis axis{field<double>(a, "t0", file), field<double>(a, "dt", file), field<int>(a, "M", file)};
  const int dim = field<int>(b.meta, "dim", file);
  if (grid.n < 1 || grid.n > kMaxDim || grid.N < 1 || axis.M < 1 || dim < 1)
    throw IntegrityError(file.string() + ": invalid grid metadata");
  GridFunction f(grid, axis, dim);
  if (f.data().size() != b.data.size())
    throw IntegrityError(file.string() + ": block '" + b.name + "' holds " + std::to_string(b.data.size()) +
                         " values, metadata implies " + std::to_string(f.data().size()));
  f.data() = b.data;
  return f;
}

const ArrayBlock& find_block(const std::vector<ArrayBlock>& blocks, const std::string& name, const fs::path& file) {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw IntegrityError(file.string() + ": missing block '" + name + "'");
}

}  // namespace

fs::path sidecar_path(const fs::path& file) { return fs::path(file.string() + ".json"); }

void write_arrays(const fs::path& file, const std::vector<ArrayBlock>& blocks, nlohmann::json sidecar) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + file.string());
  out.write(kMagic, sizeof kMagic);
  Fnv fnv;
  std::uint64_t bytes = sizeof kMagic;
  nlohmann::json jb = nlohmann::json::array();
  for (const auto& b : blocks) {
    const std::uint64_t count = b.data.size();
    out.write(reinterpret_cast<const char*>(&count), sizeof count);
    out.write(reinterpret_cast<const char*>(b.data.data()), static_cast<std::streamsize>(count * sizeof(double)));
    fnv.add(&count, sizeof count);
    fnv.add(b.data.data(), count * sizeof(double));
    bytes += sizeof count + count * sizeof(double);
    nlohmann::json m = b.meta;
    m["name"] = b.name;
    m["count"] = count;
    jb.push_back(m);
  }
  if (!out) throw ConfigError("write failed for " + file.string());
  sidecar["format"] = "ASTORGF1";
  sidecar["blocks"] = jb;
  sidecar["bytes"] = bytes;
  sidecar["checksum"] = fnv.hex();
  write_text(sidecar_path(file), sidecar.dump(2) + "\n");
}

std::vector<ArrayBlock> read_arrays(const fs::path& file, nlohmann::json* sidecar) {
  const fs::path sp = sidecar_path(file);
  if (!fs::exists(file)) throw IntegrityError(file.string() + ": no such file");
  if (!fs::exists(sp)) throw IntegrityError(file.string() + ": missing sidecar " + sp.string());
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(read_text(sp));
  } catch (const nlohmann::json::parse_error& e) {
    throw IntegrityError(sp.string() + ": unreadable sidecar: " + e.what());
  }
  if (side.value("format", "") != "ASTORGF1") throw IntegrityError(sp.string() + ": unknown format");
  const auto expected = field<std::uint64_t>(side, "bytes", file);
  const auto actual = static_cast<std::uint64_t>(fs::file_size(file));
  if (actual < expected)
    throw IntegrityError(file.string() + ": truncated: " + std::to_string(actual) + " of " + std::to_string(expected) +
                         " bytes present");
  if (actual > expected)
    throw IntegrityError(file.string() + ": " + std::to_string(actual - expected) + " unexpected trailing bytes");

  std::ifstream in(file, std::ios::binary);
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw IntegrityError(file.string() + ": bad magic");
  const auto& jb = side.at("blocks");
  std::vector<ArrayBlock> out;
  Fnv fnv;
  for (const auto& m : jb) {
    ArrayBlock b;
    b.name = field<std::string>(m, "name", file);
    const auto want = field<std::uint64_t>(m, "count", file);
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof count);
    if (!in) throw IntegrityError(file.string() + ": truncated before block '" + b.name + "'");
    if (count != want)
      throw IntegrityError(file.string() + ": block '" + b.name + "' count " + std::to_string(count) +
                           " does not match sidecar " + std::to_string(want));
    if (count > (expected - sizeof kMagic) / sizeof(double))
      throw IntegrityError(file.string() + ": block '" + b.name + "' exceeds the file");
    b.data.resize(count);
    in.read(reinterpret_cast<char*>(b.data.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw IntegrityError(file.string() + ": truncated inside block '" + b.name + "'");
    fnv.add(&count, sizeof count);
    fnv.add(b.data.data(), count * sizeof(double));
    b.meta = m;
    out.push_back(std::move(b));
  }
  if (fnv.hex() != field<std::string>(side, "checksum", file))
    throw IntegrityError(file.string() + ": checksum mismatch");
  if (sidecar) *sidecar = std::move(side);
  return out;
}

void save_grid_function(const fs::path& file, const GridFunction& f, const std::string& name) {
  ArrayBlock b{name, f.data(), {{"dim", f.dim()}}};
  write_arrays(file, {b}, {{"kind", "grid_function"}, {"grid", grid_json(f.grid())}, {"axis", axis_json(f.axis())}});
}

GridFunction load_grid_function(const fs::path& file) {
  nlohmann::json side;
  auto blocks = read_arrays(file, &side);
  if (side.value("kind", "") != "grid_function" || blocks.size() != 1)
    throw IntegrityError(file.string() + ": not a grid function file");
  return grid_block(blocks[0], side, file);
}

void save_family(const fs::path& file, const EmbeddingFamily& family) {
  std::vector<ArrayBlock> blocks{{"u", family.u.data(), {{"dim", family.u.dim()}}}};
  if (family.has_v()) {
    if (!family.v.same_layout(family.u)) throw ConfigError("family blocks u and v have different layouts");
    blocks.push_back({"v", family.v.data(), {{"dim", family.v.dim()}}});
  }
  write_arrays(file, blocks,
               {{"kind", "embedding_family"},
                {"upsilon", family.upsilon},
                {"grid", grid_json(family.u.grid())},
                {"axis", axis_json(family.u.axis())}});
}

EmbeddingFamily load_family(const fs::path& file) {
  nlohmann::json side;
  auto blocks = read_arrays(file, &side);
  if (side.value("kind", "") != "embedding_family") throw IntegrityError(file.string() + ": not a family file");
  EmbeddingFamily fam;
  fam.u = grid_block(find_block(blocks, "u", file), side, file);
  if (blocks.size() > 1) fam.v = grid_block(find_block(blocks, "v", file), side, file);
  fam.upsilon = field<double>(side, "upsilon", file);
  if (fam.u.dim() != fam.u.grid().n || (fam.has_v() && fam.v.dim() != fam.u.grid().n))
    throw IntegrityError(file.string() + ": block dimension differs from n");
  return fam;
}

void save_flow_table(const fs::path& file, const FlowTable& tab, const VectorFieldSpec& W) {
  const int n = W.n;
  ArrayBlock phi{"phi", {}, {{"per_entry", n}}}, jac{"jac", {}, {{"per_entry", n * n}}};
  for (std::size_t e = 0; e < tab.phi.size(); ++e) {
    for (int a = 0; a < n; ++a) phi.data.push_back(tab.phi[e][a]);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) jac.data.push_back(at(tab.jac[e], a, b));
  }
  nlohmann::json side = tab.sidecar(W);
  side["kind"] = "flow_table";
  side["offset_values"] = tab.offsets;
  write_arrays(file, {phi, jac, {"error", tab.error, {{"per_entry", 1}}}}, side);
}

FlowTable load_flow_table(const fs::path& file) {
  nlohmann::json side;
  auto blocks = read_arrays(file, &side);
  if (side.value("kind", "") != "flow_table") throw IntegrityError(file.string() + ": not a flow table file");
  FlowTable tab;
  const int n = field<int>(side, "n", file);
  tab.grid = TorusGrid{n, field<int>(side, "N", file)};
  tab.offsets = field<std::vector<double>>(side, "offset_values", file);
  tab.h_ode = field<double>(side, "h_ode", file);
  tab.group_law_defect = field<double>(side, "group_law_defect", file);
  const std::size_t entries = tab.offsets.size() * tab.Nq();
  const auto& phi = find_block(blocks, "phi", file);
  const auto& jac = find_block(blocks, "jac", file);
  tab.error = find_block(blocks, "error", file).data;
  if (phi.data.size() != entries * n || jac.data.size() != entries * n * n || tab.error.size() != entries)
    throw IntegrityError(file.string() + ": block sizes do not match the offsets and grid");
  tab.phi.assign(entries, Vec{});
  tab.jac.assign(entries, Mat{});
  for (std::size_t e = 0; e < entries; ++e) {
    for (int a = 0; a < n; ++a) tab.phi[e][a] = phi.data[e * n + a];
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) at(tab.jac[e], a, b) = jac.data[(e * n + a) * n + b];
  }
  return tab;
}

void save_propagator_table(const fs::path& file, const PropagatorTable& tab, const VectorFieldSpec& W) {
  const int n = W.n;
  ArrayBlock phi{"phi", {}, {{"per_entry", n}}}, G{"G", {}, {{"per_entry", n * n}}};
  for (std::size_t e = 0; e < tab.phi.size(); ++e) {
    for (int a = 0; a < n; ++a) phi.data.push_back(tab.phi[e][a]);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) G.data.push_back(at(tab.G[e], a, b));
  }
  nlohmann::json side = tab.sidecar(W);
  side["kind"] = "propagator_table";
  write_arrays(file, {phi, G}, side);
}

PropagatorTable load_propagator_table(const fs::path& file) {
  nlohmann::json side;
  auto blocks = read_arrays(file, &side);
  if (side.value("kind", "") != "propagator_table") throw IntegrityError(file.string() + ": not a propagator table");
  PropagatorTable tab;
  const int n = field<int>(side, "n", file);
  tab.grid = TorusGrid{n, field<int>(side, "N", file)};
  tab.ds = field<double>(side, "ds", file);
  tab.K = field<int>(side, "K", file);
  tab.sign = field<int>(side, "sign", file);
  tab.transpose = field<bool>(side, "transpose", file);
  tab.h_ode = field<double>(side, "h_ode", file);
  const std::size_t entries = static_cast<std::size_t>(tab.K) * tab.Nq();
  const auto& phi = find_block(blocks, "phi", file);
  const auto& G = find_block(blocks, "G", file);
  if (phi.data.size() != entries * n || G.data.size() != entries * n * n)
    throw IntegrityError(file.string() + ": block sizes do not match K and grid");
  tab.phi.assign(entries, Vec{});
  tab.G.assign(entries, Mat{});
  for (std::size_t e = 0; e < entries; ++e) {
    for (int a = 0; a < n; ++a) tab.phi[e][a] = phi.data[e * n + a];
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) at(tab.G[e], a, b) = G.data[(e * n + a) * n + b];
  }
  return tab;
}

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  out << text;
  if (!out) throw ConfigError("cannot write " + file.string());
}

std::string read_text(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read " + file.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace astor
