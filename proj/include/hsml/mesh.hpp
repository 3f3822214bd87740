#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hsml/common.hpp"

namespace hsml::mesh {

// Triangulated object with its summary transform already applied: vertices
// are stored in world coordinates (scale first, then location), normals are
// unit length and refer to the transformed geometry.
struct SurfaceObject {
    std::string name;
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<Vec3> normals;  // per face
};

struct SurfaceModel {
    std::vector<SurfaceObject> objects;
};

struct Aabb {
    Vec3 lo, hi;
};

// Parses a model summary document (JSON text). Unknown keys are ignored.
// Throws std::runtime_error naming the object and face index on malformed
// indices, degenerate triangles, or stored normals more than 1e-3 rad away
// from the computed cross-product normal (sign flips allowed).
SurfaceModel ingest_model_summary(const std::string& json_text);

// Canonical re-serialization (identity transform, world coordinates).
// ingest(serialize(m)) reproduces m exactly.
std::string serialize_model_summary(const SurfaceModel& m);

Aabb bounding_box(const SurfaceModel& m);
double surface_area(const SurfaceModel& m);

// Throws if any object has an edge not shared by exactly two triangles.
void require_watertight(const SurfaceModel& m);

// Ray-crossing parity along a direction derived deterministically from p,
// re-cast up to 8 times when a hit is too close to an edge or the ray origin.
// A point is inside the model when it is inside any object.
// Precondition: watertight model (see require_watertight).
bool point_in_model(const Vec3& p, const SurfaceModel& m);

struct SamplePoint {
    Vec3 x;
    double t = 0.0;
};

struct SampleCounts {
    int collocation = 0;
    int boundary = 0;
    int initial = 0;
};

// Interior points by rejection sampling in the model bounding box, boundary
// points by area-weighted triangle selection with uniform barycentric
// coordinates. horizon > 0 adds times uniform in [0, horizon] to collocation
// and boundary points; initial points are spatial only (t = 0).
struct SamplePlan {
    std::vector<SamplePoint> collocation;
    std::vector<SamplePoint> boundary;
    std::vector<Vec3> initial;
    double horizon = 0.0;
    std::uint64_t seed = 0;
};

SamplePlan sample_plan(const SurfaceModel& m, const SampleCounts& counts, double horizon, std::uint64_t seed);

// P1 tetrahedral mesh. Boundary faces carry integer tags; tag_names maps a
// tag to a label ("xmin" ... for procedural meshes, physical names for MSH).
struct VolumeMesh {
    struct BoundaryFace {
        std::array<int, 3> nodes;
        int tag = 0;
    };

    std::vector<Vec3> nodes;
    std::vector<std::array<int, 4>> tets;
    std::vector<BoundaryFace> boundary_faces;
    std::map<int, std::string> tag_names;
};

double tet_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

// Axis-aligned box split into 6 positively oriented tets per cell.
// divisions >= 1; (divisions+1)^3 nodes, 6*divisions^3 tets, boundary faces
// tagged by side (xmin, xmax, ymin, ymax, zmin, zmax).
VolumeMesh structured_box_mesh(int divisions, const Vec3& extent = {1.0, 1.0, 1.0},
                               const Vec3& origin = {0.0, 0.0, 0.0});

// Structural checks: positive volumes, valid indices, every boundary face on
// exactly one tet, every once-shared tet face present as a boundary face.
void validate(const VolumeMesh& mesh);

// Sorted unique node ids on boundary faces; empty tag filter = all tags.
std::vector<int> boundary_nodes(const VolumeMesh& mesh, const std::vector<int>& tags = {});

// Boundary triangles as a single-object surface model with outward normals.
SurfaceModel surface_from_mesh(const VolumeMesh& mesh, const std::string& name = "boundary");

}  // namespace hsml::mesh
