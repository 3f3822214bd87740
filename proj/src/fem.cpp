#include "hsml/fem.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

namespace hsml::fem {

namespace {

std::string fmt_residual(double r) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6e", r);
    return buf;
}

}  // namespace

SparseSystem assemble(const mesh::VolumeMesh& mesh, PdeForm form, SpaceTimeFn forcing) {
    const std::size_t nn = mesh.nodes.size();
    if (nn == 0 || mesh.tets.empty()) throw std::invalid_argument("assemble: empty mesh");

    SparseSystem sys;
    sys.form = form;
    sys.forcing = std::move(forcing);

    std::vector<Eigen::Triplet<double>> ka, ma;
    ka.reserve(mesh.tets.size() * 16);
    ma.reserve(mesh.tets.size() * 16);

    // order-2 rule: 4 points at barycentric (a,b,b,b) permutations, weight V/4
    const double qa = (5.0 + 3.0 * std::sqrt(5.0)) / 20.0;
    const double qb = (5.0 - std::sqrt(5.0)) / 20.0;
    sys.quadrature.reserve(mesh.tets.size() * 4);

    for (const auto& t : mesh.tets) {
        const Vec3& p0 = mesh.nodes[static_cast<std::size_t>(t[0])];
        const Vec3& p1 = mesh.nodes[static_cast<std::size_t>(t[1])];
        const Vec3& p2 = mesh.nodes[static_cast<std::size_t>(t[2])];
        const Vec3& p3 = mesh.nodes[static_cast<std::size_t>(t[3])];

        double vol = mesh::tet_volume(p0, p1, p2, p3);
        if (vol <= 0.0) throw std::runtime_error("assemble: non-positive tet volume");

        // P1 gradients: rows of J^{-T} for local nodes 1..3, node 0 closes the sum
        Eigen::Matrix3d J;
        J.col(0) << p1.x - p0.x, p1.y - p0.y, p1.z - p0.z;
        J.col(1) << p2.x - p0.x, p2.y - p0.y, p2.z - p0.z;
        J.col(2) << p3.x - p0.x, p3.y - p0.y, p3.z - p0.z;
        Eigen::Matrix3d Jit = J.inverse().transpose();
        Eigen::Matrix<double, 3, 4> grad;
        grad.col(1) = Jit.col(0);
        grad.col(2) = Jit.col(1);
        grad.col(3) = Jit.col(2);
        grad.col(0) = -(grad.col(1) + grad.col(2) + grad.col(3));

        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                double kij = vol * grad.col(i).dot(grad.col(j));
                double mij = (i == j) ? vol / 10.0 : vol / 20.0;
                ka.emplace_back(t[static_cast<std::size_t>(i)], t[static_cast<std::size_t>(j)], kij);
                ma.emplace_back(t[static_cast<std::size_t>(i)], t[static_cast<std::size_t>(j)], mij);
            }

        const Vec3 corners[4] = {p0, p1, p2, p3};
        for (int q = 0; q < 4; ++q) {
            SparseSystem::QuadPoint qp;
            qp.nodes = t;
            std::array<double, 4> bary{qb, qb, qb, qb};
            bary[static_cast<std::size_t>(q)] = qa;
            Vec3 pos{0, 0, 0};
            for (int i = 0; i < 4; ++i) pos = pos + corners[i] * bary[static_cast<std::size_t>(i)];
            qp.pos = pos;
            for (int i = 0; i < 4; ++i) qp.weighted_phi[static_cast<std::size_t>(i)] =
                vol / 4.0 * bary[static_cast<std::size_t>(i)];
            sys.quadrature.push_back(qp);
        }
    }

    sys.stiffness.resize(static_cast<Eigen::Index>(nn), static_cast<Eigen::Index>(nn));
    sys.stiffness.setFromTriplets(ka.begin(), ka.end());
    sys.stiffness_raw = sys.stiffness;
    sys.mass.resize(static_cast<Eigen::Index>(nn), static_cast<Eigen::Index>(nn));
    sys.mass.setFromTriplets(ma.begin(), ma.end());

    sys.is_dirichlet.assign(nn, 0);
    sys.load = assemble_load(sys, 0.0);
    return sys;
}

Eigen::VectorXd assemble_load(const SparseSystem& system, double t) {
    return assemble_load(system, system.forcing, t);
}

Eigen::VectorXd assemble_load(const SparseSystem& system, const SpaceTimeFn& forcing, double t) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(system.node_count()));
    if (!forcing) return f;
    for (const auto& qp : system.quadrature) {
        double fv = forcing(qp.pos, t);
        for (int i = 0; i < 4; ++i) f[qp.nodes[static_cast<std::size_t>(i)]] += fv * qp.weighted_phi[static_cast<std::size_t>(i)];
    }
    if (system.form == PdeForm::poisson) f = -f;
    return f;
}

void apply_dirichlet(SparseSystem& system, const mesh::VolumeMesh& mesh, SpaceTimeFn boundary_value,
                     const std::vector<int>& tags) {
    if (!boundary_value) throw std::invalid_argument("apply_dirichlet: missing boundary closure");
    std::vector<int> nodes = mesh::boundary_nodes(mesh, tags);
    if (nodes.empty()) throw std::runtime_error("apply_dirichlet: no boundary nodes under the requested tags");

    system.boundary_value = std::move(boundary_value);
    system.dirichlet_nodes = nodes;
    system.is_dirichlet.assign(system.node_count(), 0);
    for (int d : nodes) system.is_dirichlet[static_cast<std::size_t>(d)] = 1;

    // steady path: move prescribed values to the right-hand side
    Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(system.node_count()));
    for (int d : nodes) g[d] = system.boundary_value(mesh.nodes[static_cast<std::size_t>(d)], 0.0);
    Eigen::VectorXd correction = system.stiffness_raw * g;
    for (Eigen::Index i = 0; i < system.load.size(); ++i)
        if (!system.is_dirichlet[static_cast<std::size_t>(i)]) system.load[i] -= correction[i];
    for (int d : nodes) system.load[d] = g[d];

    // symmetric elimination in place; the pattern (explicit zeros) survives
    for (int row = 0; row < system.stiffness.outerSize(); ++row) {
        for (SpMat::InnerIterator it(system.stiffness, row); it; ++it) {
            bool rd = system.is_dirichlet[static_cast<std::size_t>(it.row())];
            bool cd = system.is_dirichlet[static_cast<std::size_t>(it.col())];
            if (rd || cd) it.valueRef() = (it.row() == it.col() && rd) ? 1.0 : 0.0;
        }
    }
}

Eigen::VectorXd solve_steady(const SparseSystem& system) {
    const Eigen::Index n = static_cast<Eigen::Index>(system.node_count());
    const SpMat& A = system.stiffness;
    const Eigen::VectorXd& b = system.load;

    Eigen::VectorXd diag(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double d = A.coeff(i, i);
        if (d == 0.0) throw std::runtime_error("solve_steady: zero diagonal entry");
        diag[i] = d;
    }

    // start from the boundary lifting so prescribed rows never move
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (int d : system.dirichlet_nodes) x[d] = b[d];

    double bnorm = b.norm();
    if (bnorm == 0.0) return x;

    const long max_iter = 10 * static_cast<long>(n);
    long iters = 0;
    double rel = std::numeric_limits<double>::infinity();

    // the recurrence residual can drift from b - A x (badly so on singular
    // systems), so convergence is only trusted after a fresh recomputation
    while (iters < max_iter) {
        Eigen::VectorXd r = b - A * x;
        rel = r.norm() / bnorm;
        if (rel <= 1e-10 || !std::isfinite(rel)) break;

        Eigen::VectorXd z = r.cwiseQuotient(diag);
        Eigen::VectorXd p = z;
        double rz = r.dot(z);
        double rec = rel;
        for (; iters < max_iter && rec > 1e-10; ++iters) {
            Eigen::VectorXd Ap = A * p;
            double alpha = rz / p.dot(Ap);
            x += alpha * p;
            r -= alpha * Ap;
            rec = r.norm() / bnorm;
            if (!std::isfinite(rec)) break;
            z = r.cwiseQuotient(diag);
            double rz_next = r.dot(z);
            p = z + (rz_next / rz) * p;
            rz = rz_next;
        }
        if (!std::isfinite(rec)) break;
    }

    rel = (b - A * x).norm() / bnorm;
    if (!(rel <= 1e-10))
        throw std::runtime_error("solve_steady: conjugate gradients stalled at relative residual " + fmt_residual(rel));
    return x;
}

Eigen::VectorXd solve_steady_coupled(const SparseSystem& system,
                                     const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& extra_load,
                                     double tol, int max_sweeps) {
    const Eigen::Index n = static_cast<Eigen::Index>(system.node_count());
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
    for (int d : system.dirichlet_nodes) u[d] = system.load[d];

    SparseSystem scratch = system;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        Eigen::VectorXd extra = extra_load(u);
        scratch.load = system.load;
        for (Eigen::Index i = 0; i < n; ++i)
            if (!system.is_dirichlet[static_cast<std::size_t>(i)]) scratch.load[i] += extra[i];
        Eigen::VectorXd next = solve_steady(scratch);
        double delta = (next - u).norm() / std::max(1.0, next.norm());
        u = next;
        if (delta <= tol) return u;
    }
    throw std::runtime_error("solve_steady_coupled: Picard iteration did not reach tolerance");
}

FieldSeries solve_unsteady(const SparseSystem& system, const mesh::VolumeMesh& mesh, const Eigen::VectorXd& u0,
                           const TimeGrid& grid) {
    if (grid.steps < 1 || grid.horizon <= 0.0) throw std::invalid_argument("solve_unsteady: bad time grid");
    if (system.form != PdeForm::heat) throw std::invalid_argument("solve_unsteady: system was not assembled as heat form");
    if (system.dirichlet_nodes.empty()) throw std::runtime_error("solve_unsteady: no Dirichlet data applied");
    const Eigen::Index n = static_cast<Eigen::Index>(system.node_count());
    if (u0.size() != n) throw std::invalid_argument("solve_unsteady: initial vector size mismatch");

    const double h = grid.horizon / grid.steps;
    SpMat K_raw = system.stiffness_raw + SpMat((system.mass / h).eval());
    SpMat K = K_raw;
    for (int row = 0; row < K.outerSize(); ++row)
        for (SpMat::InnerIterator it(K, row); it; ++it) {
            bool rd = system.is_dirichlet[static_cast<std::size_t>(it.row())];
            bool cd = system.is_dirichlet[static_cast<std::size_t>(it.col())];
            if (rd || cd) it.valueRef() = (it.row() == it.col() && rd) ? 1.0 : 0.0;
        }

    Eigen::SparseMatrix<double> K_col = K;  // column-major copy for the factorization
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(K_col);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("solve_unsteady: factorization failed at step 0");

    FieldSeries series;
    Eigen::VectorXd u = u0;
    for (int d : system.dirichlet_nodes) u[d] = system.boundary_value(mesh.nodes[static_cast<std::size_t>(d)], 0.0);
    series.times.push_back(0.0);
    series.values.push_back({u});

    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    for (int step = 1; step <= grid.steps; ++step) {
        double t = grid.horizon * step / grid.steps;
        Eigen::VectorXd b = system.mass * (u / h) + assemble_load(system, t);
        g.setZero();
        for (int d : system.dirichlet_nodes) g[d] = system.boundary_value(mesh.nodes[static_cast<std::size_t>(d)], t);
        Eigen::VectorXd corr = K_raw * g;
        for (Eigen::Index i = 0; i < n; ++i)
            if (!system.is_dirichlet[static_cast<std::size_t>(i)]) b[i] -= corr[i];
        for (int d : system.dirichlet_nodes) b[d] = g[d];

        u = ldlt.solve(b);
        if (ldlt.info() != Eigen::Success)
            throw std::runtime_error("solve_unsteady: solve failed at step " + std::to_string(step));
        for (int d : system.dirichlet_nodes) u[d] = g[d];

        series.times.push_back(t);
        series.values.push_back({u});
    }
    return series;
}

Eigen::VectorXd interpolate(const mesh::VolumeMesh& mesh, const SpaceTimeFn& fn, double t) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(mesh.nodes.size()));
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i) v[static_cast<Eigen::Index>(i)] = fn(mesh.nodes[i], t);
    return v;
}

}  // namespace hsml::fem
