#include "hsml/mesh.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace hsml::mesh {

namespace {

using nlohmann::json;

Vec3 parse_vec3(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number())
        throw std::runtime_error("model summary: " + what + " is not a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::string face_label(const std::string& object, std::size_t face) {
    return "object '" + object + "' face " + std::to_string(face);
}

}  // namespace

SurfaceModel ingest_model_summary(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("model summary: invalid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("objects") || !doc["objects"].is_array())
        throw std::runtime_error("model summary: missing top-level 'objects' array");

    SurfaceModel model;
    for (const auto& jo : doc["objects"]) {
        if (!jo.is_object()) throw std::runtime_error("model summary: object entry is not a JSON object");
        SurfaceObject obj;
        obj.name = jo.value("name", std::string("object_") + std::to_string(model.objects.size()));

        Vec3 scale{1.0, 1.0, 1.0}, location{0.0, 0.0, 0.0};
        if (jo.contains("scale")) scale = parse_vec3(jo["scale"], "scale of '" + obj.name + "'");
        if (jo.contains("location")) location = parse_vec3(jo["location"], "location of '" + obj.name + "'");

        if (!jo.contains("vertices") || !jo["vertices"].is_array())
            throw std::runtime_error("model summary: object '" + obj.name + "' has no vertices array");
        for (const auto& jv : jo["vertices"]) {
            Vec3 v = parse_vec3(jv, "vertex of '" + obj.name + "'");
            v = Vec3{v.x * scale.x, v.y * scale.y, v.z * scale.z} + location;
            if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z))
                throw std::runtime_error("model summary: non-finite vertex in object '" + obj.name + "'");
            obj.vertices.push_back(v);
        }

        if (!jo.contains("faces") || !jo["faces"].is_array())
            throw std::runtime_error("model summary: object '" + obj.name + "' has no faces array");
        const int nv = static_cast<int>(obj.vertices.size());
        for (const auto& jf : jo["faces"]) {
            if (!jf.is_array() || jf.size() != 3)
                throw std::runtime_error("model summary: non-triangle face in object '" + obj.name + "'");
            std::array<int, 3> f{};
            for (int k = 0; k < 3; ++k) {
                if (!jf[static_cast<std::size_t>(k)].is_number_integer())
                    throw std::runtime_error("model summary: non-integer index in " +
                                             face_label(obj.name, obj.faces.size()));
                f[static_cast<std::size_t>(k)] = jf[static_cast<std::size_t>(k)].get<int>();
                if (f[static_cast<std::size_t>(k)] < 0 || f[static_cast<std::size_t>(k)] >= nv)
                    throw std::runtime_error("model summary: vertex index out of range in " +
                                             face_label(obj.name, obj.faces.size()));
            }
            obj.faces.push_back(f);
        }

        std::vector<Vec3> stored_normals;
        if (jo.contains("normals")) {
            if (!jo["normals"].is_array() || jo["normals"].size() != obj.faces.size())
                throw std::runtime_error("model summary: normals count does not match faces in object '" + obj.name +
                                         "'");
            for (const auto& jn : jo["normals"]) stored_normals.push_back(parse_vec3(jn, "normal of '" + obj.name + "'"));
        }

        for (std::size_t fi = 0; fi < obj.faces.size(); ++fi) {
            const auto& f = obj.faces[fi];
            Vec3 e1 = obj.vertices[static_cast<std::size_t>(f[1])] - obj.vertices[static_cast<std::size_t>(f[0])];
            Vec3 e2 = obj.vertices[static_cast<std::size_t>(f[2])] - obj.vertices[static_cast<std::size_t>(f[0])];
            Vec3 n = cross(e1, e2);
            double len = norm(n);
            if (len <= 0.0) throw std::runtime_error("model summary: degenerate " + face_label(obj.name, fi));
            n = n / len;
            if (!stored_normals.empty()) {
                Vec3 s = stored_normals[fi];
                double slen = norm(s);
                if (slen <= 0.0)
                    throw std::runtime_error("model summary: zero stored normal in " + face_label(obj.name, fi));
                double c = std::abs(dot(s / slen, n));
                double angle = std::acos(std::min(1.0, c));
                if (angle > 1e-3)
                    throw std::runtime_error("model summary: stored normal deviates from geometry in " +
                                             face_label(obj.name, fi));
            }
            obj.normals.push_back(n);
        }

        model.objects.push_back(std::move(obj));
    }
    return model;
}

std::string serialize_model_summary(const SurfaceModel& m) {
    json doc;
    doc["objects"] = json::array();
    for (const auto& obj : m.objects) {
        json jo;
        jo["name"] = obj.name;
        jo["scale"] = {1.0, 1.0, 1.0};
        jo["location"] = {0.0, 0.0, 0.0};
        jo["vertices"] = json::array();
        for (const auto& v : obj.vertices) jo["vertices"].push_back({v.x, v.y, v.z});
        jo["faces"] = json::array();
        for (const auto& f : obj.faces) jo["faces"].push_back({f[0], f[1], f[2]});
        jo["normals"] = json::array();
        for (const auto& n : obj.normals) jo["normals"].push_back({n.x, n.y, n.z});
        doc["objects"].push_back(std::move(jo));
    }
    return doc.dump(2) + "\n";
}

Aabb bounding_box(const SurfaceModel& m) {
    Aabb box{{1e300, 1e300, 1e300}, {-1e300, -1e300, -1e300}};
    bool any = false;
    for (const auto& obj : m.objects)
        for (const auto& v : obj.vertices) {
            any = true;
            for (int k = 0; k < 3; ++k) {
                box.lo[k] = std::min(box.lo[k], v[k]);
                box.hi[k] = std::max(box.hi[k], v[k]);
            }
        }
    if (!any) throw std::runtime_error("bounding box of empty model");
    return box;
}

double surface_area(const SurfaceModel& m) {
    double area = 0.0;
    for (const auto& obj : m.objects)
        for (const auto& f : obj.faces) {
            Vec3 e1 = obj.vertices[static_cast<std::size_t>(f[1])] - obj.vertices[static_cast<std::size_t>(f[0])];
            Vec3 e2 = obj.vertices[static_cast<std::size_t>(f[2])] - obj.vertices[static_cast<std::size_t>(f[0])];
            area += 0.5 * norm(cross(e1, e2));
        }
    return area;
}

void require_watertight(const SurfaceModel& m) {
    for (const auto& obj : m.objects) {
        std::map<std::pair<int, int>, int> edge_count;
        for (const auto& f : obj.faces)
            for (int k = 0; k < 3; ++k) {
                int a = f[static_cast<std::size_t>(k)];
                int b = f[static_cast<std::size_t>((k + 1) % 3)];
                edge_count[{std::min(a, b), std::max(a, b)}]++;
            }
        for (const auto& [edge, count] : edge_count)
            if (count != 2)
                throw std::runtime_error("object '" + obj.name + "' is not watertight: edge (" +
                                         std::to_string(edge.first) + ", " + std::to_string(edge.second) +
                                         ") belongs to " + std::to_string(count) + " triangles");
    }
}

namespace {

// Ray-triangle intersection; returns 1 on a clean crossing with positive ray
// parameter, 0 on a clean miss, -1 when the configuration is too close to
// call (grazing edge, coplanar ray, or hit at the origin).
int ray_crossing(const Vec3& origin, const Vec3& dir, const Vec3& v0, const Vec3& v1, const Vec3& v2) {
    constexpr double eps = 1e-12;
    Vec3 e1 = v1 - v0, e2 = v2 - v0;
    Vec3 p = cross(dir, e2);
    double det = dot(e1, p);
    double scale = norm(e1) * norm(e2);
    if (std::abs(det) < eps * std::max(scale, 1e-30)) {
        // Near-parallel ray; only ambiguous when the ray passes near the
        // triangle plane within its extent, but recasting is cheap enough to
        // do unconditionally only when the plane is actually close.
        Vec3 n = cross(e1, e2);
        double nn = norm(n);
        if (nn > 0.0 && std::abs(dot(n / nn, origin - v0)) < 1e-9) return -1;
        return 0;
    }
    double inv = 1.0 / det;
    Vec3 s = origin - v0;
    double u = dot(s, p) * inv;
    if (u < -1e-10 || u > 1.0 + 1e-10) return 0;
    Vec3 q = cross(s, e1);
    double v = dot(dir, q) * inv;
    if (v < -1e-10 || u + v > 1.0 + 1e-10) return 0;
    double t = dot(e2, q) * inv;
    if (t < -1e-10) return 0;
    constexpr double edge_eps = 1e-9;
    if (u < edge_eps || v < edge_eps || u + v > 1.0 - edge_eps || t < edge_eps) return -1;
    return 1;
}

Vec3 unit_direction(Rng& rng) {
    // Uniform direction via normalized gaussians.
    for (;;) {
        Vec3 d{rng.normal(), rng.normal(), rng.normal()};
        double n = norm(d);
        if (n > 1e-6) return d / n;
    }
}

bool point_in_object(const Vec3& p, const SurfaceObject& obj, Rng& rng) {
    for (int attempt = 0; attempt < 8; ++attempt) {
        Vec3 dir = unit_direction(rng);
        long crossings = 0;
        bool ambiguous = false;
        for (const auto& f : obj.faces) {
            int r = ray_crossing(p, dir, obj.vertices[static_cast<std::size_t>(f[0])],
                                 obj.vertices[static_cast<std::size_t>(f[1])],
                                 obj.vertices[static_cast<std::size_t>(f[2])]);
            if (r < 0) {
                ambiguous = true;
                break;
            }
            crossings += r;
        }
        if (!ambiguous) return (crossings % 2) == 1;
    }
    throw std::runtime_error("point_in_model: no unambiguous ray after 8 attempts near object '" + obj.name + "'");
}

std::uint64_t point_hash(const Vec3& p) {
    auto mix = [](std::uint64_t h, std::uint64_t v) {
        h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        return h;
    };
    std::uint64_t h = 0x243f6a8885a308d3ull;
    h = mix(h, std::bit_cast<std::uint64_t>(p.x));
    h = mix(h, std::bit_cast<std::uint64_t>(p.y));
    h = mix(h, std::bit_cast<std::uint64_t>(p.z));
    return h;
}

}  // namespace

bool point_in_model(const Vec3& p, const SurfaceModel& m) {
    Rng rng(point_hash(p));
    for (const auto& obj : m.objects)
        if (point_in_object(p, obj, rng)) return true;
    return false;
}

SamplePlan sample_plan(const SurfaceModel& m, const SampleCounts& counts, double horizon, std::uint64_t seed) {
    if (counts.collocation < 0 || counts.boundary < 0 || counts.initial < 0)
        throw std::invalid_argument("sample_plan: negative point count");
    if (horizon < 0.0) throw std::invalid_argument("sample_plan: negative horizon");
    if (horizon == 0.0 && counts.initial > 0)
        throw std::invalid_argument("sample_plan: initial points require a positive horizon");

    SamplePlan plan;
    plan.horizon = horizon;
    plan.seed = seed;

    const std::size_t interior_needed = static_cast<std::size_t>(counts.collocation + counts.initial);
    if (interior_needed > 0) require_watertight(m);

    Rng rng(seed);
    Aabb box = bounding_box(m);

    // Interior rejection sampling; fails loudly on vanishing acceptance.
    std::vector<Vec3> interior;
    interior.reserve(interior_needed);
    constexpr std::size_t kMaxTrials = 10'000'000;
    std::size_t trials = 0;
    while (interior.size() < interior_needed) {
        if (trials >= kMaxTrials ||
            (trials >= 1'000'000 && static_cast<double>(interior.size()) < 1e-5 * static_cast<double>(trials))) {
            double rate = trials ? static_cast<double>(interior.size()) / static_cast<double>(trials) : 0.0;
            if (rate < 1e-4) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%.3e", rate);
                throw std::runtime_error("sample_plan: interior acceptance rate " + std::string(buf) + " after " +
                                         std::to_string(trials) + " trials; model volume too small for its box");
            }
        }
        ++trials;
        Vec3 p{rng.uniform(box.lo.x, box.hi.x), rng.uniform(box.lo.y, box.hi.y), rng.uniform(box.lo.z, box.hi.z)};
        if (point_in_model(p, m)) interior.push_back(p);
    }

    for (int i = 0; i < counts.collocation; ++i) {
        SamplePoint sp;
        sp.x = interior[static_cast<std::size_t>(i)];
        sp.t = horizon > 0.0 ? rng.uniform(0.0, horizon) : 0.0;
        plan.collocation.push_back(sp);
    }
    for (int i = 0; i < counts.initial; ++i)
        plan.initial.push_back(interior[static_cast<std::size_t>(counts.collocation + i)]);

    // Boundary sampling: area-weighted triangle, uniform barycentric point.
    if (counts.boundary > 0) {
        struct Tri {
            const SurfaceObject* obj;
            std::size_t face;
            double cum_area;
        };
        std::vector<Tri> tris;
        double total = 0.0;
        for (const auto& obj : m.objects)
            for (std::size_t fi = 0; fi < obj.faces.size(); ++fi) {
                const auto& f = obj.faces[fi];
                Vec3 e1 = obj.vertices[static_cast<std::size_t>(f[1])] - obj.vertices[static_cast<std::size_t>(f[0])];
                Vec3 e2 = obj.vertices[static_cast<std::size_t>(f[2])] - obj.vertices[static_cast<std::size_t>(f[0])];
                total += 0.5 * norm(cross(e1, e2));
                tris.push_back({&obj, fi, total});
            }
        if (tris.empty() || total <= 0.0) throw std::runtime_error("sample_plan: model has no surface area");

        for (int i = 0; i < counts.boundary; ++i) {
            double target = rng.uniform(0.0, total);
            auto it = std::lower_bound(tris.begin(), tris.end(), target,
                                       [](const Tri& t, double v) { return t.cum_area < v; });
            if (it == tris.end()) it = std::prev(tris.end());
            const auto& f = it->obj->faces[it->face];
            Vec3 v0 = it->obj->vertices[static_cast<std::size_t>(f[0])];
            Vec3 v1 = it->obj->vertices[static_cast<std::size_t>(f[1])];
            Vec3 v2 = it->obj->vertices[static_cast<std::size_t>(f[2])];
            double r1 = rng.uniform(), r2 = rng.uniform();
            if (r1 + r2 > 1.0) {
                r1 = 1.0 - r1;
                r2 = 1.0 - r2;
            }
            SamplePoint sp;
            sp.x = v0 + (v1 - v0) * r1 + (v2 - v0) * r2;
            sp.t = horizon > 0.0 ? rng.uniform(0.0, horizon) : 0.0;
            plan.boundary.push_back(sp);
        }
    }
    return plan;
}

double tet_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    return dot(cross(b - a, c - a), d - a) / 6.0;
}

VolumeMesh structured_box_mesh(int divisions, const Vec3& extent, const Vec3& origin) {
    if (divisions < 1) throw std::invalid_argument("structured_box_mesh: divisions must be >= 1");
    if (extent.x <= 0.0 || extent.y <= 0.0 || extent.z <= 0.0)
        throw std::invalid_argument("structured_box_mesh: extent must be positive");

    VolumeMesh mesh;
    const int n = divisions;
    auto id = [n](int i, int j, int k) { return i + (n + 1) * (j + (n + 1) * k); };

    for (int k = 0; k <= n; ++k)
        for (int j = 0; j <= n; ++j)
            for (int i = 0; i <= n; ++i)
                mesh.nodes.push_back(origin + Vec3{extent.x * i / n, extent.y * j / n, extent.z * k / n});

    // Kuhn split: six tets around the c000-c111 diagonal of each cell.
    static const int corners[6][4][3] = {
        {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {1, 1, 1}}, {{0, 0, 0}, {1, 1, 0}, {0, 1, 0}, {1, 1, 1}},
        {{0, 0, 0}, {0, 1, 0}, {0, 1, 1}, {1, 1, 1}}, {{0, 0, 0}, {0, 1, 1}, {0, 0, 1}, {1, 1, 1}},
        {{0, 0, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}}, {{0, 0, 0}, {1, 0, 1}, {1, 0, 0}, {1, 1, 1}},
    };
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                for (const auto& tet : corners) {
                    std::array<int, 4> t{};
                    for (int v = 0; v < 4; ++v) t[static_cast<std::size_t>(v)] =
                        id(i + tet[v][0], j + tet[v][1], k + tet[v][2]);
                    if (tet_volume(mesh.nodes[static_cast<std::size_t>(t[0])], mesh.nodes[static_cast<std::size_t>(t[1])],
                                   mesh.nodes[static_cast<std::size_t>(t[2])],
                                   mesh.nodes[static_cast<std::size_t>(t[3])]) < 0.0)
                        std::swap(t[2], t[3]);
                    mesh.tets.push_back(t);
                }

    // Boundary faces: tet faces seen exactly once, then tagged by side plane.
    std::map<std::array<int, 3>, int> face_count;
    static const int tet_faces[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
    for (const auto& t : mesh.tets)
        for (const auto& tf : tet_faces) {
            std::array<int, 3> f{t[static_cast<std::size_t>(tf[0])], t[static_cast<std::size_t>(tf[1])],
                                 t[static_cast<std::size_t>(tf[2])]};
            std::sort(f.begin(), f.end());
            face_count[f]++;
        }

    mesh.tag_names = {{1, "xmin"}, {2, "xmax"}, {3, "ymin"}, {4, "ymax"}, {5, "zmin"}, {6, "zmax"}};
    const double tol = 1e-12 * std::max({extent.x, extent.y, extent.z});
    auto side_tag = [&](const std::array<int, 3>& f) {
        for (int axis = 0; axis < 3; ++axis)
            for (int side = 0; side < 2; ++side) {
                double plane = side ? origin[axis] + extent[axis] : origin[axis];
                bool on = true;
                for (int v : f)
                    if (std::abs(mesh.nodes[static_cast<std::size_t>(v)][axis] - plane) > tol) on = false;
                if (on) return 2 * axis + side + 1;
            }
        return 0;
    };
    for (const auto& [f, count] : face_count)
        if (count == 1) mesh.boundary_faces.push_back({f, side_tag(f)});

    return mesh;
}

void validate(const VolumeMesh& mesh) {
    const int nn = static_cast<int>(mesh.nodes.size());
    for (std::size_t ti = 0; ti < mesh.tets.size(); ++ti) {
        const auto& t = mesh.tets[ti];
        for (int v : t)
            if (v < 0 || v >= nn)
                throw std::runtime_error("mesh: tet " + std::to_string(ti) + " references missing node");
        double vol = tet_volume(mesh.nodes[static_cast<std::size_t>(t[0])], mesh.nodes[static_cast<std::size_t>(t[1])],
                                mesh.nodes[static_cast<std::size_t>(t[2])], mesh.nodes[static_cast<std::size_t>(t[3])]);
        if (vol <= 0.0) throw std::runtime_error("mesh: tet " + std::to_string(ti) + " has non-positive volume");
    }

    std::map<std::array<int, 3>, int> face_count;
    static const int tet_faces[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
    for (const auto& t : mesh.tets)
        for (const auto& tf : tet_faces) {
            std::array<int, 3> f{t[static_cast<std::size_t>(tf[0])], t[static_cast<std::size_t>(tf[1])],
                                 t[static_cast<std::size_t>(tf[2])]};
            std::sort(f.begin(), f.end());
            face_count[f]++;
        }

    std::set<std::array<int, 3>> boundary;
    for (const auto& bf : mesh.boundary_faces) {
        std::array<int, 3> f = bf.nodes;
        for (int v : f)
            if (v < 0 || v >= nn) throw std::runtime_error("mesh: boundary face references missing node");
        std::sort(f.begin(), f.end());
        auto it = face_count.find(f);
        if (it == face_count.end() || it->second != 1)
            throw std::runtime_error("mesh: boundary face does not belong to exactly one tet");
        boundary.insert(f);
    }
    for (const auto& [f, count] : face_count)
        if (count == 1 && !boundary.count(f))
            throw std::runtime_error("mesh: exposed tet face missing from boundary list");
}

std::vector<int> boundary_nodes(const VolumeMesh& mesh, const std::vector<int>& tags) {
    std::set<int> keep;
    for (const auto& bf : mesh.boundary_faces) {
        if (!tags.empty() && std::find(tags.begin(), tags.end(), bf.tag) == tags.end()) continue;
        for (int v : bf.nodes) keep.insert(v);
    }
    return {keep.begin(), keep.end()};
}

SurfaceModel surface_from_mesh(const VolumeMesh& mesh, const std::string& name) {
    // Faces seen once, oriented outward using the owning tet's centroid.
    std::map<std::array<int, 3>, std::pair<int, std::array<int, 3>>> once;  // sorted -> (count, as-seen)
    std::map<std::array<int, 3>, std::size_t> owner;
    static const int tet_faces[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
    for (std::size_t ti = 0; ti < mesh.tets.size(); ++ti) {
        const auto& t = mesh.tets[ti];
        for (const auto& tf : tet_faces) {
            std::array<int, 3> raw{t[static_cast<std::size_t>(tf[0])], t[static_cast<std::size_t>(tf[1])],
                                   t[static_cast<std::size_t>(tf[2])]};
            std::array<int, 3> key = raw;
            std::sort(key.begin(), key.end());
            auto [it, inserted] = once.try_emplace(key, std::pair{0, raw});
            it->second.first++;
            if (inserted) owner[key] = ti;
        }
    }

    SurfaceObject obj;
    obj.name = name;
    std::map<int, int> remap;
    auto local = [&](int global) {
        auto [it, inserted] = remap.try_emplace(global, static_cast<int>(obj.vertices.size()));
        if (inserted) obj.vertices.push_back(mesh.nodes[static_cast<std::size_t>(global)]);
        return it->second;
    };

    for (const auto& [key, entry] : once) {
        if (entry.first != 1) continue;
        std::array<int, 3> raw = entry.second;
        const auto& t = mesh.tets[owner.at(key)];
        Vec3 centroid = (mesh.nodes[static_cast<std::size_t>(t[0])] + mesh.nodes[static_cast<std::size_t>(t[1])] +
                         mesh.nodes[static_cast<std::size_t>(t[2])] + mesh.nodes[static_cast<std::size_t>(t[3])]) /
                        4.0;
        Vec3 v0 = mesh.nodes[static_cast<std::size_t>(raw[0])];
        Vec3 v1 = mesh.nodes[static_cast<std::size_t>(raw[1])];
        Vec3 v2 = mesh.nodes[static_cast<std::size_t>(raw[2])];
        Vec3 n = cross(v1 - v0, v2 - v0);
        if (dot(n, centroid - v0) > 0.0) std::swap(raw[1], raw[2]);

        std::array<int, 3> f{local(raw[0]), local(raw[1]), local(raw[2])};
        obj.faces.push_back(f);
        Vec3 nn = cross(obj.vertices[static_cast<std::size_t>(f[1])] - obj.vertices[static_cast<std::size_t>(f[0])],
                        obj.vertices[static_cast<std::size_t>(f[2])] - obj.vertices[static_cast<std::size_t>(f[0])]);
        obj.normals.push_back(nn / norm(nn));
    }

    SurfaceModel model;
    model.objects.push_back(std::move(obj));
    return model;
}

}  // namespace hsml::mesh
