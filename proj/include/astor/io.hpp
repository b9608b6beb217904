#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "astor/flows.hpp"
#include "astor/invariance.hpp"

namespace astor {

/// Binary array files: the 8-byte magic "ASTORGF1", then per block a uint64
/// count followed by that many native doubles. Shape and provenance of the
/// numbers live in a JSON sidecar next to the file (path + ".json"), which
/// also carries the byte size and an FNV-1a checksum of the payload.
struct ArrayBlock {
  std::string name;
  std::vector<double> data;
  nlohmann::json meta = nlohmann::json::object();
};

std::filesystem::path sidecar_path(const std::filesystem::path& file);

void write_arrays(const std::filesystem::path& file, const std::vector<ArrayBlock>& blocks, nlohmann::json sidecar);
/// IntegrityError on a missing sidecar, wrong magic, truncation, trailing
/// bytes, count mismatch or checksum mismatch.
std::vector<ArrayBlock> read_arrays(const std::filesystem::path& file, nlohmann::json* sidecar = nullptr);

void save_grid_function(const std::filesystem::path& file, const GridFunction& f, const std::string& name = "f");
GridFunction load_grid_function(const std::filesystem::path& file);

/// One file with blocks u (and v on the Hamiltonian path).
void save_family(const std::filesystem::path& file, const EmbeddingFamily& family);
EmbeddingFamily load_family(const std::filesystem::path& file);

void save_flow_table(const std::filesystem::path& file, const FlowTable& tab, const VectorFieldSpec& W);
FlowTable load_flow_table(const std::filesystem::path& file);
void save_propagator_table(const std::filesystem::path& file, const PropagatorTable& tab, const VectorFieldSpec& W);
PropagatorTable load_propagator_table(const std::filesystem::path& file);

void write_text(const std::filesystem::path& file, const std::string& text);
std::string read_text(const std::filesystem::path& file);

}  // namespace astor
