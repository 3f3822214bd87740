#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hsml/common.hpp"
#include "hsml/mesh.hpp"

namespace hsml::fem {

using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using SpaceTimeFn = std::function<double(const Vec3&, double)>;

// Sign convention for the assembled right-hand side:
//   poisson: laplacian(u) = f        ->  A u = -F
//   heat:    du/dt - laplacian(u) = f -> (M/h + A) u_next = M u/h + F
enum class PdeForm { poisson, heat };

struct TimeGrid {
    double horizon = 0.0;
    int steps = 0;  // number of backward-Euler steps; times t_i = horizon*i/steps
};

struct FieldSeries {
    std::vector<double> times;
    std::vector<std::vector<Eigen::VectorXd>> values;  // [time][component], length = node count
    std::vector<std::string> component_names;
};

// P1 stiffness/mass pair with load assembly data. Stiffness and mass share
// one sparsity pattern; `stiffness` is Dirichlet-eliminated in place by
// apply_dirichlet while `stiffness_raw` keeps the untouched operator for
// right-hand-side corrections.
struct SparseSystem {
    SpMat stiffness;
    SpMat stiffness_raw;
    SpMat mass;
    Eigen::VectorXd load;  // steady load at t = 0, sign-adjusted, corrected by apply_dirichlet
    PdeForm form = PdeForm::poisson;

    SpaceTimeFn forcing;
    SpaceTimeFn boundary_value;
    std::vector<int> dirichlet_nodes;  // sorted
    std::vector<char> is_dirichlet;

    // quadrature cache: one entry per (element, quad point)
    struct QuadPoint {
        Vec3 pos;
        std::array<int, 4> nodes;
        std::array<double, 4> weighted_phi;  // w_q * phi_i(x_q)
    };
    std::vector<QuadPoint> quadrature;

    std::size_t node_count() const { return static_cast<std::size_t>(stiffness.rows()); }
};

// Assembles stiffness (element-constant gradients), consistent P1 mass
// (V/10 diagonal, V/20 off-diagonal), and the order-2 four-point quadrature
// load for `forcing` at t = 0.
SparseSystem assemble(const mesh::VolumeMesh& mesh, PdeForm form, SpaceTimeFn forcing);

// Symmetric elimination of boundary nodes on the given face tags (all tags
// when empty): zero rows/columns, unit diagonal, load moved to the right-hand
// side, prescribed values written into the load.
void apply_dirichlet(SparseSystem& system, const mesh::VolumeMesh& mesh, SpaceTimeFn boundary_value,
                     const std::vector<int>& tags = {});

// Jacobi-preconditioned conjugate gradients; relative residual <= 1e-10 or
// at most 10 * N iterations, then throws carrying the final residual.
Eigen::VectorXd solve_steady(const SparseSystem& system);

// Picard iteration for steady problems whose load depends on the solution:
// extra_load(u) returns the raw load contribution, re-evaluated per sweep.
// Starts from the boundary lifting; stops when the update drops below tol.
Eigen::VectorXd solve_steady_coupled(const SparseSystem& system,
                                     const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& extra_load,
                                     double tol = 1e-10, int max_sweeps = 60);

// Backward Euler with the (M/h + A) factorization computed once and reused
// across steps; time-dependent Dirichlet values re-applied at every step.
FieldSeries solve_unsteady(const SparseSystem& system, const mesh::VolumeMesh& mesh, const Eigen::VectorXd& u0,
                           const TimeGrid& grid);

// Quadrature load at time t, sign-adjusted per the form.
Eigen::VectorXd assemble_load(const SparseSystem& system, double t);

// same quadrature cache, different forcing; the system's own closure is untouched
Eigen::VectorXd assemble_load(const SparseSystem& system, const SpaceTimeFn& forcing, double t);

// Nodal interpolation of a closed-form field.
Eigen::VectorXd interpolate(const mesh::VolumeMesh& mesh, const SpaceTimeFn& fn, double t);

}  // namespace hsml::fem
