#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hsml/fem.hpp"
#include "hsml/mesh.hpp"

namespace hsml::io {

// All binary artifacts share one container: the 8-byte magic "HSML0001",
// a little-endian u64 element count, then that many little-endian f64.
void write_doubles(const std::string& path, std::span<const double> data);
std::vector<double> read_doubles(const std::string& path);

// MSH 2.2 ASCII. Parsing keeps 4-node tets and 3-node boundary triangles
// (physical tag = first element tag), remaps 1-based ids to dense 0-based
// indices in file order, skips unknown element types (counted in
// *skipped_elements when given), and fails hard on dangling node references.
mesh::VolumeMesh parse_msh(const std::string& path, int* skipped_elements = nullptr);
void write_msh(const std::string& path, const mesh::VolumeMesh& m);

// XDMF export: <stem>.xdmf XML plus <stem>.bin sidecar holding geometry and
// per-time nodal attributes as f64 blocks. The XML references the sidecar by
// file name (same directory) with byte Seek offsets; connectivity is inline.
struct XdmfBundle {
    std::string xml_path;
    std::string binary_path;
    struct Block {
        std::string name;  // "geometry" or "<component>@<time index>"
        std::uint64_t offset = 0;  // byte offset into the sidecar
        std::uint64_t count = 0;   // number of f64 values
    };
    std::vector<Block> blocks;
};

XdmfBundle write_xdmf(const std::string& stem, const mesh::VolumeMesh& m, const fem::FieldSeries& series);

// Plain-text parameter table; relative errors are computed from the inputs.
// A zero reference makes that row's error column absolute, marked with '*'.
void write_parameter_report(const std::string& path, const std::vector<std::string>& names,
                            std::span<const double> estimates, std::span<const double> references);

// CSV with %.17g floats so values round-trip exactly.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

// Minimal line-based text key-value store ("key = value").
void write_kv(const std::string& path, const std::vector<std::pair<std::string, std::string>>& entries);
std::vector<std::pair<std::string, std::string>> read_kv(const std::string& path);

}  // namespace hsml::io
