#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hsml/bench.hpp"
#include "hsml/common.hpp"
#include "hsml/fem.hpp"
#include "hsml/mesh.hpp"

namespace hsml::rom {

// Full-order solution columns for one field component. Unsteady sets hold
// steps+1 columns per parameter (the initial state included), time-major
// within each parameter block.
struct SnapshotSet {
    std::vector<Vec3> parameters;
    Eigen::MatrixXd matrix;
    int time_steps = 0;  // 0 for steady sets
    int component = 0;

    int columns_per_parameter() const { return time_steps > 0 ? time_steps + 1 : 1; }
};

// Column-orthonormal modes with the full snapshot spectrum. The spectrum
// keeps every singular value (including numerically null ones) so the energy
// identity sum(sigma_i^2) = |S|_F^2 holds; modes are built only for
// directions above the rank cutoff and pass one modified Gram-Schmidt sweep
// to restore per-entry orthonormality for the deepest modes.
struct ReducedBasis {
    Eigen::MatrixXd modes;
    std::vector<double> singular_values;
    double tolerance = 0.0;
    int k() const { return static_cast<int>(modes.cols()); }
};

// Projected operators, split by row type of the eliminated full system:
// stiffness = Q^T E(A) Q with E the Dirichlet elimination, mass_ff drops
// prescribed rows and columns, mass_fu drops prescribed rows only (it
// multiplies the full previous state in the time recursion).
struct ReducedOperators {
    Eigen::MatrixXd stiffness;
    Eigen::MatrixXd mass_ff;
    Eigen::MatrixXd mass_fu;
};

struct ComponentRom {
    SnapshotSet snapshots;  // empty after load_bundle
    ReducedBasis basis;
    ReducedOperators ops;
};

struct RomBundle {
    std::string problem_id;
    double tolerance = 1e-6;
    int time_steps = 0;
    std::uint64_t seed = 0;
    std::vector<ComponentRom> components;
};

// Parameter draws in [0,1]^3: per-coordinate normal(0.5, 0.25) redrawn until
// inside the box, or plain uniform when gaussian is false.
std::vector<Vec3> sample_parameters(int count, std::uint64_t seed, bool gaussian = true);

// Proper orthogonal decomposition by the method of snapshots: eigensolve of
// the Gram matrix S^T S, modes = S v / sigma. Directions with eigenvalue
// below 1e-14 * trace are discarded before inversion. k is the smallest value
// whose tail energy ratio drops to `tolerance`, unless forced_k > 0 asks for
// a specific count (capped at the numerical rank; forced_k beyond the column
// count throws).
ReducedBasis pod(const Eigen::MatrixXd& snapshots, double tolerance, int forced_k = 0);

// Two-stage reduction for time-dependent sets: per-parameter POD over the
// time columns, then POD over the concatenated per-parameter modes.
ReducedBasis pod_unsteady(const SnapshotSet& snapshots, double tolerance, int forced_k = 0);

// Everything the online data lift needs from the full-order side. The system
// must have its Dirichlet pattern applied; its bound closures are ignored in
// favor of the problem closures evaluated at the query parameter.
struct OnlineContext {
    const bench::ProblemSpec* spec = nullptr;
    const mesh::VolumeMesh* mesh = nullptr;
    const fem::SparseSystem* system = nullptr;
};

struct OfflineConfig {
    double tolerance = 1e-6;
    int forced_k = 0;
    int time_steps = 20;  // unsteady problems only
};

// Snapshot collection over the given parameter draws, POD per component, and
// reduced operator assembly. Supports the parametric problems (steady single
// component and unsteady multi-component); self-coupled and data-driven
// problems have no parameter family to reduce over and are rejected.
RomBundle offline(const std::string& problem_id, const mesh::VolumeMesh& mesh,
                  const std::vector<Vec3>& samples, const OfflineConfig& config = {});

// Pure reduced solves: every argument is k-sized, nothing here may allocate
// at full order. The steady path guards against a numerically singular
// reduced matrix (condition above 1e14).
Eigen::VectorXd reduced_steady_solve(const Eigen::MatrixXd& a_r, const Eigen::VectorXd& f_r);
std::vector<Eigen::VectorXd> reduced_unsteady_solve(const ReducedOperators& ops,
                                                    const std::vector<Eigen::VectorXd>& data_lifts,
                                                    const Eigen::VectorXd& alpha0, double h);

// Reduced solve at a query parameter, lifted back to nodal fields. The data
// lift (load projection, boundary values, initial projection) costs
// O(N_h * k) per time step by design; the recursion itself is k-sized.
fem::FieldSeries online(const RomBundle& bundle, const OnlineContext& ctx, const Vec3& mu);

// Reduced-versus-full comparison over test parameters for every basis size
// k = 1..k_max (truncation reuses the leading block of the operators).
// One row per k: mean/max absolute and mean/max relative L2 error pooled
// over samples and components.
struct ErrorCurve {
    std::vector<int> k;
    std::vector<double> mean_abs, max_abs, mean_rel, max_rel;
};
ErrorCurve error_analysis(const RomBundle& bundle, const OnlineContext& ctx,
                          const std::vector<Vec3>& test_samples, int k_max);

// Artifact persistence: basis.bin, singular_values.bin, reduced_ops.bin and a
// text meta file in `dir`. Snapshot matrices are not persisted.
void save_bundle(const std::string& dir, const RomBundle& bundle);
RomBundle load_bundle(const std::string& dir);

}  // namespace hsml::rom
