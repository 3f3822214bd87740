#include "hsml/io.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace hsml::io {

namespace {

constexpr char kMagic[8] = {'H', 'S', 'M', 'L', '0', '0', '0', '1'};

void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64_le(std::string& out, double d) { put_u64_le(out, std::bit_cast<std::uint64_t>(d)); }

std::uint64_t get_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("short write: " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_doubles(const std::string& path, std::span<const double> data) {
    std::string bytes;
    bytes.reserve(16 + data.size() * 8);
    bytes.append(kMagic, 8);
    put_u64_le(bytes, data.size());
    for (double d : data) put_f64_le(bytes, d);
    write_file(path, bytes);
}

std::vector<double> read_doubles(const std::string& path) {
    std::string bytes = read_file(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw std::runtime_error("not a binary artifact (bad magic): " + path);
    std::uint64_t count = get_u64_le(reinterpret_cast<const unsigned char*>(bytes.data()) + 8);
    if (bytes.size() != 16 + count * 8) throw std::runtime_error("truncated binary artifact: " + path);
    std::vector<double> out(count);
    for (std::uint64_t i = 0; i < count; ++i)
        out[i] = std::bit_cast<double>(get_u64_le(reinterpret_cast<const unsigned char*>(bytes.data()) + 16 + i * 8));
    return out;
}

mesh::VolumeMesh parse_msh(const std::string& path, int* skipped_elements) {
    std::istringstream in(read_file(path));
    mesh::VolumeMesh out;
    std::map<long, int> node_id;  // file id -> dense index
    int skipped = 0;
    std::string line;

    auto expect_line = [&](const char* what) {
        if (!std::getline(in, line)) throw std::runtime_error(std::string("msh: unexpected end of file before ") + what);
        return line;
    };

    while (std::getline(in, line)) {
        if (line.rfind("$MeshFormat", 0) == 0) {
            std::istringstream fs(expect_line("format id"));
            double version = 0.0;
            int file_type = -1, data_size = 0;
            fs >> version >> file_type >> data_size;
            if (!(version >= 2.0 && version < 3.0) || file_type != 0)
                throw std::runtime_error("msh: unsupported format (need ASCII 2.x): " + path);
            expect_line("$EndMeshFormat");
        } else if (line.rfind("$PhysicalNames", 0) == 0) {
            long count = std::stol(expect_line("physical name count"));
            for (long i = 0; i < count; ++i) {
                std::istringstream ls(expect_line("physical name"));
                int dim = 0, tag = 0;
                std::string name;
                ls >> dim >> tag;
                std::getline(ls, name);
                auto first = name.find('"');
                auto last = name.rfind('"');
                if (first != std::string::npos && last != std::string::npos && last > first)
                    name = name.substr(first + 1, last - first - 1);
                out.tag_names[tag] = name;
            }
            expect_line("$EndPhysicalNames");
        } else if (line.rfind("$Nodes", 0) == 0) {
            long count = std::stol(expect_line("node count"));
            for (long i = 0; i < count; ++i) {
                std::istringstream ls(expect_line("node"));
                long id = 0;
                double x = 0, y = 0, z = 0;
                if (!(ls >> id >> x >> y >> z)) throw std::runtime_error("msh: malformed node line");
                node_id[id] = static_cast<int>(out.nodes.size());
                out.nodes.push_back({x, y, z});
            }
            expect_line("$EndNodes");
        } else if (line.rfind("$Elements", 0) == 0) {
            long count = std::stol(expect_line("element count"));
            for (long i = 0; i < count; ++i) {
                std::istringstream ls(expect_line("element"));
                long id = 0;
                int type = 0, ntags = 0;
                if (!(ls >> id >> type >> ntags)) throw std::runtime_error("msh: malformed element line");
                std::vector<int> tags(static_cast<std::size_t>(ntags));
                for (int k = 0; k < ntags; ++k) ls >> tags[static_cast<std::size_t>(k)];
                auto read_node = [&]() {
                    long nid = 0;
                    if (!(ls >> nid)) throw std::runtime_error("msh: malformed element node list");
                    auto it = node_id.find(nid);
                    if (it == node_id.end())
                        throw std::runtime_error("msh: element references missing node " + std::to_string(nid));
                    return it->second;
                };
                if (type == 4) {
                    std::array<int, 4> t{read_node(), read_node(), read_node(), read_node()};
                    if (mesh::tet_volume(out.nodes[static_cast<std::size_t>(t[0])],
                                         out.nodes[static_cast<std::size_t>(t[1])],
                                         out.nodes[static_cast<std::size_t>(t[2])],
                                         out.nodes[static_cast<std::size_t>(t[3])]) < 0.0)
                        std::swap(t[2], t[3]);
                    out.tets.push_back(t);
                } else if (type == 2) {
                    int a = read_node(), b = read_node(), c = read_node();
                    out.boundary_faces.push_back({{a, b, c}, ntags > 0 ? tags[0] : 0});
                } else {
                    ++skipped;
                }
            }
            expect_line("$EndElements");
        }
        // other sections ignored wholesale
    }

    if (skipped_elements) *skipped_elements = skipped;
    if (out.nodes.empty()) throw std::runtime_error("msh: no nodes found in " + path);
    if (out.tets.empty()) throw std::runtime_error("msh: no volume elements in " + path);
    return out;
}

void write_msh(const std::string& path, const mesh::VolumeMesh& m) {
    std::ostringstream os;
    os << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";
    if (!m.tag_names.empty()) {
        os << "$PhysicalNames\n" << m.tag_names.size() << "\n";
        for (const auto& [tag, name] : m.tag_names) os << "2 " << tag << " \"" << name << "\"\n";
        os << "$EndPhysicalNames\n";
    }
    os << "$Nodes\n" << m.nodes.size() << "\n";
    for (std::size_t i = 0; i < m.nodes.size(); ++i)
        os << (i + 1) << " " << fmt17(m.nodes[i].x) << " " << fmt17(m.nodes[i].y) << " " << fmt17(m.nodes[i].z) << "\n";
    os << "$EndNodes\n";

    os << "$Elements\n" << (m.boundary_faces.size() + m.tets.size()) << "\n";
    std::size_t eid = 1;
    for (const auto& bf : m.boundary_faces) {
        os << eid++ << " 2 2 " << bf.tag << " " << bf.tag;
        for (int v : bf.nodes) os << " " << (v + 1);
        os << "\n";
    }
    for (const auto& t : m.tets) {
        os << eid++ << " 4 2 0 0";
        for (int v : t) os << " " << (v + 1);
        os << "\n";
    }
    os << "$EndElements\n";
    write_file(path, os.str());
}

XdmfBundle write_xdmf(const std::string& stem, const mesh::VolumeMesh& m, const fem::FieldSeries& series) {
    const std::size_t nn = m.nodes.size();
    const std::size_t nt = m.tets.size();
    if (series.times.size() != series.values.size())
        throw std::invalid_argument("write_xdmf: times/values size mismatch");
    const std::size_t ncomp = series.values.empty() ? 0 : series.values[0].size();
    for (const auto& per_time : series.values) {
        if (per_time.size() != ncomp) throw std::invalid_argument("write_xdmf: ragged component lists");
        for (const auto& v : per_time)
            if (static_cast<std::size_t>(v.size()) != nn)
                throw std::invalid_argument("write_xdmf: field length does not match node count");
    }

    XdmfBundle bundle;
    bundle.xml_path = stem + ".xdmf";
    bundle.binary_path = stem + ".bin";
    std::string sidecar_name = bundle.binary_path;
    if (auto slash = sidecar_name.find_last_of('/'); slash != std::string::npos)
        sidecar_name = sidecar_name.substr(slash + 1);

    // sidecar: geometry block then per-time per-component attribute blocks
    std::vector<double> payload;
    payload.reserve(nn * 3 + series.times.size() * ncomp * nn);
    std::uint64_t offset = 16;
    bundle.blocks.push_back({"geometry", offset, nn * 3});
    for (const auto& v : m.nodes) {
        payload.push_back(v.x);
        payload.push_back(v.y);
        payload.push_back(v.z);
    }
    offset += nn * 3 * 8;

    std::vector<std::string> comp_names;
    for (std::size_t c = 0; c < ncomp; ++c)
        comp_names.push_back(c < series.component_names.size() ? series.component_names[c]
                                                               : "u" + std::to_string(c + 1));

    std::vector<std::vector<std::uint64_t>> attr_offsets(series.times.size(), std::vector<std::uint64_t>(ncomp, 0));
    for (std::size_t ti = 0; ti < series.times.size(); ++ti)
        for (std::size_t c = 0; c < ncomp; ++c) {
            bundle.blocks.push_back({comp_names[c] + "@" + std::to_string(ti), offset, nn});
            attr_offsets[ti][c] = offset;
            const Eigen::VectorXd& v = series.values[ti][c];
            for (Eigen::Index i = 0; i < v.size(); ++i) payload.push_back(v[i]);
            offset += nn * 8;
        }
    write_doubles(bundle.binary_path, payload);

    std::ostringstream xml;
    xml << "<?xml version=\"1.0\"?>\n<Xdmf Version=\"3.0\">\n <Domain>\n";
    xml << "  <Topology Name=\"tets\" TopologyType=\"Tetrahedron\" NumberOfElements=\"" << nt << "\">\n";
    xml << "   <DataItem Dimensions=\"" << nt << " 4\" NumberType=\"Int\" Format=\"XML\">\n";
    for (const auto& t : m.tets) xml << "    " << t[0] << " " << t[1] << " " << t[2] << " " << t[3] << "\n";
    xml << "   </DataItem>\n  </Topology>\n";
    xml << "  <Geometry Name=\"nodes\" GeometryType=\"XYZ\">\n";
    xml << "   <DataItem Dimensions=\"" << nn << " 3\" NumberType=\"Float\" Precision=\"8\" Endian=\"Little\""
        << " Format=\"Binary\" Seek=\"16\">" << sidecar_name << "</DataItem>\n";
    xml << "  </Geometry>\n";
    xml << "  <Grid Name=\"fields\" GridType=\"Collection\" CollectionType=\"Temporal\">\n";
    for (std::size_t ti = 0; ti < series.times.size(); ++ti) {
        xml << "   <Grid Name=\"step_" << ti << "\" GridType=\"Uniform\">\n";
        xml << "    <Time Value=\"" << fmt17(series.times[ti]) << "\"/>\n";
        xml << "    <Topology Reference=\"/Xdmf/Domain/Topology[@Name='tets']\"/>\n";
        xml << "    <Geometry Reference=\"/Xdmf/Domain/Geometry[@Name='nodes']\"/>\n";
        for (std::size_t c = 0; c < ncomp; ++c) {
            xml << "    <Attribute Name=\"" << comp_names[c] << "\" AttributeType=\"Scalar\" Center=\"Node\">\n";
            xml << "     <DataItem Dimensions=\"" << nn << "\" NumberType=\"Float\" Precision=\"8\" Endian=\"Little\""
                << " Format=\"Binary\" Seek=\"" << attr_offsets[ti][c] << "\">" << sidecar_name << "</DataItem>\n";
            xml << "    </Attribute>\n";
        }
        xml << "   </Grid>\n";
    }
    xml << "  </Grid>\n </Domain>\n</Xdmf>\n";
    write_file(bundle.xml_path, xml.str());
    return bundle;
}

void write_parameter_report(const std::string& path, const std::vector<std::string>& names,
                            std::span<const double> estimates, std::span<const double> references) {
    if (names.size() != estimates.size() || names.size() != references.size())
        throw std::invalid_argument("write_parameter_report: column length mismatch");
    std::ostringstream os;
    os << "parameter     estimate      reference     rel_error\n";
    for (std::size_t i = 0; i < names.size(); ++i) {
        char line[160];
        double ref = references[i];
        if (ref != 0.0) {
            double rel = std::abs(estimates[i] - ref) / std::abs(ref);
            std::snprintf(line, sizeof(line), "%-12s  %-12.4f  %-12.4f  %.4e\n", names[i].c_str(), estimates[i], ref,
                          rel);
        } else {
            std::snprintf(line, sizeof(line), "%-12s  %-12.4f  %-12.4f  %.4e*\n", names[i].c_str(), estimates[i], ref,
                          std::abs(estimates[i]));
        }
        os << line;
    }
    write_file(path, os.str());
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ostringstream os;
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << "\n";
    for (const auto& row : rows) {
        if (row.size() != header.size()) throw std::invalid_argument("write_csv: ragged row");
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << fmt17(row[i]);
        os << "\n";
    }
    write_file(path, os.str());
}

void write_kv(const std::string& path, const std::vector<std::pair<std::string, std::string>>& entries) {
    std::ostringstream os;
    for (const auto& [k, v] : entries) os << k << " = " << v << "\n";
    write_file(path, os.str());
}

std::vector<std::pair<std::string, std::string>> read_kv(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string k = line.substr(0, eq);
        std::string v = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
            while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.pop_back();
        };
        trim(k);
        trim(v);
        out.emplace_back(k, v);
    }
    return out;
}

}  // namespace hsml::io
