#pragma once

// Geometry fixtures shared by mesh, sampling, and pipeline tests.

#include <map>
#include <sstream>
#include <string>
#include <utility>

#include "hsml/mesh.hpp"

namespace testsupport {

// JSON text for an axis-aligned unit cube (8 vertices, 12 triangles, outward
// normals) carrying an explicit scale/location transform.
inline std::string cube_summary_json(double sx = 1.0, double sy = 1.0, double sz = 1.0, double lx = 0.0,
                                     double ly = 0.0, double lz = 0.0, const char* name = "cube") {
    std::ostringstream os;
    os << "{\"objects\":[{\"name\":\"" << name << "\",";
    os << "\"scale\":[" << sx << "," << sy << "," << sz << "],";
    os << "\"location\":[" << lx << "," << ly << "," << lz << "],";
    os << "\"vertices\":[[0,0,0],[1,0,0],[1,1,0],[0,1,0],[0,0,1],[1,0,1],[1,1,1],[0,1,1]],";
    os << "\"faces\":[[0,2,1],[0,3,2],[4,5,6],[4,6,7],[0,1,5],[0,5,4],[3,7,6],[3,6,2],[0,4,7],[0,7,3],[1,2,6],[1,6,"
          "5]],";
    os << "\"normals\":[[0,0,-1],[0,0,-1],[0,0,1],[0,0,1],[0,-1,0],[0,-1,0],[0,1,0],[0,1,0],[-1,0,0],[-1,0,0],[1,0,0],"
          "[1,0,0]],";
    os << "\"extra_metadata\":{\"ignored\":true}}]}";
    return os.str();
}

inline hsml::mesh::SurfaceModel make_icosphere(int level, double radius, hsml::Vec3 center) {
    using hsml::Vec3;
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> verts = {
        {-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0}, {0, -1, phi},  {0, 1, phi},
        {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1},  {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1},
    };
    std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
        {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
        {3, 8, 9},   {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1},
    };
    auto project = [&](Vec3 v) { return v / hsml::norm(v); };
    for (auto& v : verts) v = project(v);

    for (int l = 0; l < level; ++l) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            Vec3 m = project((verts[static_cast<std::size_t>(a)] + verts[static_cast<std::size_t>(b)]) / 2.0);
            verts.push_back(m);
            int idx = static_cast<int>(verts.size()) - 1;
            midpoint[key] = idx;
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        for (const auto& f : faces) {
            int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }

    hsml::mesh::SurfaceObject obj;
    obj.name = "sphere";
    for (const auto& v : verts) obj.vertices.push_back(v * radius + center);
    obj.faces = faces;
    for (const auto& f : faces) {
        Vec3 e1 = obj.vertices[static_cast<std::size_t>(f[1])] - obj.vertices[static_cast<std::size_t>(f[0])];
        Vec3 e2 = obj.vertices[static_cast<std::size_t>(f[2])] - obj.vertices[static_cast<std::size_t>(f[0])];
        Vec3 n = hsml::cross(e1, e2);
        obj.normals.push_back(n / hsml::norm(n));
    }
    hsml::mesh::SurfaceModel model;
    model.objects.push_back(std::move(obj));
    return model;
}

}  // namespace testsupport
