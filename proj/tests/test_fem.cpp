#include "doctest.h"

#include <cmath>
#include <numbers>

#include "hsml/fem.hpp"
#include "hsml/mesh.hpp"

using namespace hsml;

namespace {

constexpr double kPi = std::numbers::pi;

// manufactured diffusion benchmark: u = l*x*cos(a*pi*y)*sin(b*pi*z), laplacian(u) = f
struct Manufactured {
    double l = 0.1, a = 0.2, b = 0.5;
    double value(const Vec3& p) const { return l * p.x * std::cos(a * kPi * p.y) * std::sin(b * kPi * p.z); }
    double laplacian(const Vec3& p) const { return -(a * a + b * b) * kPi * kPi * value(p); }
};

double mass_weighted_error(const Eigen::VectorXd& u, const Eigen::VectorXd& ref, const fem::SpMat& mass) {
    Eigen::VectorXd e = u - ref;
    return std::sqrt(e.dot(mass * e)) / std::sqrt(ref.dot(mass * ref));
}

double poisson_error(int divisions) {
    Manufactured mf;
    auto m = mesh::structured_box_mesh(divisions);
    auto sys = fem::assemble(m, fem::PdeForm::poisson, [&](const Vec3& p, double) { return mf.laplacian(p); });
    fem::apply_dirichlet(sys, m, [&](const Vec3& p, double) { return mf.value(p); });
    Eigen::VectorXd u = fem::solve_steady(sys);
    Eigen::VectorXd ref = fem::interpolate(m, [&](const Vec3& p, double) { return mf.value(p); }, 0.0);
    return mass_weighted_error(u, ref, sys.mass);
}

}  // namespace

TEST_CASE("assembly satisfies conservation identities") {
    auto m = mesh::structured_box_mesh(3);
    auto sys = fem::assemble(m, fem::PdeForm::poisson, {});
    const Eigen::Index n = static_cast<Eigen::Index>(sys.node_count());
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);

    SUBCASE("total mass equals domain volume") {
        CHECK(std::abs(ones.dot(sys.mass * ones) - 1.0) < 1e-12);
    }

    SUBCASE("stiffness annihilates constants") {
        Eigen::VectorXd row_sums = sys.stiffness * ones;
        CHECK(row_sums.cwiseAbs().maxCoeff() < 1e-12);
    }

    SUBCASE("operators are symmetric with identical patterns") {
        fem::SpMat at = fem::SpMat(sys.stiffness.transpose());
        fem::SpMat mt = fem::SpMat(sys.mass.transpose());
        double anorm = 0.0, mnorm = 0.0, adiff = 0.0, mdiff = 0.0;
        for (int row = 0; row < sys.stiffness.outerSize(); ++row) {
            fem::SpMat::InnerIterator ia(sys.stiffness, row), iat(at, row);
            fem::SpMat::InnerIterator im(sys.mass, row), imt(mt, row);
            for (; ia; ++ia, ++iat, ++im, ++imt) {
                REQUIRE(im);
                CHECK(ia.col() == im.col());  // shared sparsity pattern
                anorm = std::max(anorm, std::abs(ia.value()));
                mnorm = std::max(mnorm, std::abs(im.value()));
                adiff = std::max(adiff, std::abs(ia.value() - iat.value()));
                mdiff = std::max(mdiff, std::abs(im.value() - imt.value()));
            }
            CHECK(!im);
        }
        CHECK(adiff < 1e-12 * anorm);
        CHECK(mdiff < 1e-12 * mnorm);
    }

    SUBCASE("lumped mass stays positive") {
        Eigen::VectorXd lumped = sys.mass * ones;
        CHECK(lumped.minCoeff() > 0.0);
    }

    SUBCASE("single tetrahedron stiffness rows sum to zero") {
        mesh::VolumeMesh tet;
        tet.nodes = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
        tet.tets = {{0, 1, 2, 3}};
        if (mesh::tet_volume(tet.nodes[0], tet.nodes[1], tet.nodes[2], tet.nodes[3]) < 0.0)
            std::swap(tet.tets[0][2], tet.tets[0][3]);
        auto one_tet = fem::assemble(tet, fem::PdeForm::poisson, {});
        Eigen::VectorXd rs = one_tet.stiffness * Eigen::VectorXd::Ones(4);
        CHECK(rs.cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("load assembly integrates the forcing") {
    auto m = mesh::structured_box_mesh(3);

    SUBCASE("constant forcing integrates to the volume") {
        auto sys = fem::assemble(m, fem::PdeForm::heat, [](const Vec3&, double) { return 1.0; });
        CHECK(std::abs(sys.load.sum() - 1.0) < 1e-10);
    }

    SUBCASE("quadratic forcing is integrated exactly by the 4-point rule") {
        auto sys = fem::assemble(m, fem::PdeForm::heat, [](const Vec3& p, double) { return p.x * p.x; });
        CHECK(std::abs(sys.load.sum() - 1.0 / 3.0) < 1e-12);
    }

    SUBCASE("diffusion convention negates the load") {
        auto heat = fem::assemble(m, fem::PdeForm::heat, [](const Vec3& p, double) { return p.x + 2.0; });
        auto poisson = fem::assemble(m, fem::PdeForm::poisson, [](const Vec3& p, double) { return p.x + 2.0; });
        CHECK((heat.load + poisson.load).cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("time-dependent forcing is re-evaluated") {
        auto sys = fem::assemble(m, fem::PdeForm::heat, [](const Vec3&, double t) { return std::exp(t); });
        Eigen::VectorXd f1 = fem::assemble_load(sys, 1.0);
        CHECK(std::abs(f1.sum() - std::exp(1.0)) < 1e-10);
    }
}

TEST_CASE("dirichlet elimination preserves interior equations") {
    auto m = mesh::structured_box_mesh(3);

    SUBCASE("zero boundary data leaves interior rows untouched") {
        auto sys = fem::assemble(m, fem::PdeForm::poisson, [](const Vec3& p, double) { return p.y; });
        Eigen::VectorXd before = sys.load;
        fem::apply_dirichlet(sys, m, [](const Vec3&, double) { return 0.0; });
        for (Eigen::Index i = 0; i < before.size(); ++i)
            if (!sys.is_dirichlet[static_cast<std::size_t>(i)]) CHECK(sys.load[i] == before[i]);
        for (int d : sys.dirichlet_nodes) CHECK(sys.load[d] == 0.0);
    }

    SUBCASE("boundary values are imposed bitwise") {
        Manufactured mf;
        auto g = [&](const Vec3& p, double) { return mf.value(p); };
        auto sys = fem::assemble(m, fem::PdeForm::poisson, [&](const Vec3& p, double) { return mf.laplacian(p); });
        fem::apply_dirichlet(sys, m, g);
        Eigen::VectorXd u = fem::solve_steady(sys);
        for (int d : sys.dirichlet_nodes) CHECK(u[d] == g(m.nodes[static_cast<std::size_t>(d)], 0.0));
    }

    SUBCASE("unknown tags are rejected") {
        auto sys = fem::assemble(m, fem::PdeForm::poisson, {});
        CHECK_THROWS_AS(fem::apply_dirichlet(sys, m, [](const Vec3&, double) { return 0.0; }, {99}), std::exception);
    }

    SUBCASE("all-boundary mesh reduces to the identity") {
        auto tiny = mesh::structured_box_mesh(1);
        auto sys = fem::assemble(tiny, fem::PdeForm::poisson, {});
        auto g = [](const Vec3& p, double) { return 3.0 * p.x - p.y + 0.25 * p.z; };
        fem::apply_dirichlet(sys, tiny, g);
        Eigen::VectorXd u = fem::solve_steady(sys);
        for (std::size_t i = 0; i < tiny.nodes.size(); ++i)
            CHECK(u[static_cast<Eigen::Index>(i)] == g(tiny.nodes[i], 0.0));
    }
}

TEST_CASE("steady solver reproduces linear harmonic fields") {
    auto m = mesh::structured_box_mesh(4);
    auto sys = fem::assemble(m, fem::PdeForm::poisson, {});
    auto g = [](const Vec3& p, double) { return 2.0 * p.x - 0.5 * p.y + p.z - 0.75; };
    fem::apply_dirichlet(sys, m, g);
    Eigen::VectorXd u = fem::solve_steady(sys);
    Eigen::VectorXd ref = fem::interpolate(m, g, 0.0);
    CHECK((u - ref).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("steady solver satisfies discrete orthogonality") {
    Manufactured mf;
    auto m = mesh::structured_box_mesh(4);
    auto sys = fem::assemble(m, fem::PdeForm::poisson, [&](const Vec3& p, double) { return mf.laplacian(p); });
    fem::apply_dirichlet(sys, m, [&](const Vec3& p, double) { return mf.value(p); });
    Eigen::VectorXd u = fem::solve_steady(sys);
    Eigen::VectorXd r = sys.load - sys.stiffness * u;
    double scale = sys.load.norm();
    for (Eigen::Index i = 0; i < r.size(); ++i)
        if (!sys.is_dirichlet[static_cast<std::size_t>(i)]) CHECK(std::abs(r[i]) <= 1e-10 * scale);
}

TEST_CASE("manufactured diffusion solution converges at second order") {
    double coarse = poisson_error(4);
    double fine = poisson_error(8);
    CHECK(coarse < 0.05);
    double ratio = coarse / fine;
    CHECK(ratio > 3.2);
    CHECK(ratio < 4.8);
}

TEST_CASE("singular systems fail loudly with the residual") {
    auto m = mesh::structured_box_mesh(2);
    // no Dirichlet data: the operator has the constants in its kernel and the load has a mean component
    auto sys = fem::assemble(m, fem::PdeForm::heat, [](const Vec3&, double) { return 1.0; });
    CHECK_THROWS_WITH_AS(fem::solve_steady(sys), doctest::Contains("relative residual"), std::runtime_error);
}

TEST_CASE("implicit stepper preserves steady states") {
    auto m = mesh::structured_box_mesh(3);
    auto g = [](const Vec3& p, double) { return p.x - 0.3 * p.y + 0.7; };
    auto sys = fem::assemble(m, fem::PdeForm::heat, {});
    fem::apply_dirichlet(sys, m, g);
    Eigen::VectorXd u0 = fem::interpolate(m, g, 0.0);
    auto series = fem::solve_unsteady(sys, m, u0, {1.0, 8});
    REQUIRE(series.times.size() == 9);
    CHECK(series.times[8] == 1.0);
    for (const auto& snap : series.values) CHECK((snap[0] - u0).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("implicit stepper dissipates free energy") {
    auto m = mesh::structured_box_mesh(3);
    auto sys = fem::assemble(m, fem::PdeForm::heat, {});
    fem::apply_dirichlet(sys, m, [](const Vec3&, double) { return 0.0; });

    Rng rng(4242);
    Eigen::VectorXd u0(static_cast<Eigen::Index>(sys.node_count()));
    for (Eigen::Index i = 0; i < u0.size(); ++i) u0[i] = rng.uniform(-1.0, 1.0);
    for (int d : sys.dirichlet_nodes) u0[d] = 0.0;

    auto series = fem::solve_unsteady(sys, m, u0, {0.5, 20});
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& snap : series.values) {
        double energy = snap[0].dot(sys.mass * snap[0]);
        CHECK(energy <= prev * (1.0 + 1e-12));
        prev = energy;
    }
    CHECK(prev < u0.dot(sys.mass * u0) * 0.5);  // strict decay, not just stability
}

TEST_CASE("implicit stepper converges at first order in time") {
    // spatially linear manufactured solution: the discretization error is purely temporal
    const double l = 0.1, a = 0.2, b = 0.5;
    auto exact = [&](const Vec3& p, double t) { return std::exp(l * t) + a * p.x + b * p.y + p.z; };
    auto forcing = [&](const Vec3&, double t) { return l * std::exp(l * t); };

    auto m = mesh::structured_box_mesh(3);
    auto run = [&](int steps) {
        auto sys = fem::assemble(m, fem::PdeForm::heat, forcing);
        fem::apply_dirichlet(sys, m, exact);
        Eigen::VectorXd u0 = fem::interpolate(m, exact, 0.0);
        auto series = fem::solve_unsteady(sys, m, u0, {1.0, steps});
        Eigen::VectorXd ref = fem::interpolate(m, exact, 1.0);
        return mass_weighted_error(series.values.back()[0], ref, sys.mass);
    };

    double e10 = run(10);
    double e20 = run(20);
    CHECK(e10 < 1e-2);
    double ratio = e10 / e20;
    CHECK(ratio > 1.8);
    CHECK(ratio < 2.2);
}

TEST_CASE("unsteady solver validates its inputs") {
    auto m = mesh::structured_box_mesh(2);
    Eigen::VectorXd u0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.nodes.size()));

    auto poisson = fem::assemble(m, fem::PdeForm::poisson, {});
    fem::apply_dirichlet(poisson, m, [](const Vec3&, double) { return 0.0; });
    CHECK_THROWS_AS(fem::solve_unsteady(poisson, m, u0, {1.0, 4}), std::invalid_argument);

    auto heat = fem::assemble(m, fem::PdeForm::heat, {});
    CHECK_THROWS_AS(fem::solve_unsteady(heat, m, u0, {1.0, 4}), std::runtime_error);  // no boundary data

    fem::apply_dirichlet(heat, m, [](const Vec3&, double) { return 0.0; });
    CHECK_THROWS_AS(fem::solve_unsteady(heat, m, u0, {1.0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(fem::solve_unsteady(heat, m, Eigen::VectorXd::Zero(3), {1.0, 4}), std::invalid_argument);
}

TEST_CASE("self-coupled reaction term converges via fixed-point sweeps") {
    // diffusion balancing a reaction proportional to the field itself, with an exponential exact solution
    auto exact = [](const Vec3& p, double) { return std::exp(p.x + p.y); };
    auto m = mesh::structured_box_mesh(4);
    auto sys = fem::assemble(m, fem::PdeForm::poisson, {});
    fem::apply_dirichlet(sys, m, exact);

    auto extra = [&](const Eigen::VectorXd& u) { return Eigen::VectorXd(-2.0 * (sys.mass * u)); };
    Eigen::VectorXd u = fem::solve_steady_coupled(sys, extra, 1e-10, 60);
    Eigen::VectorXd ref = fem::interpolate(m, exact, 0.0);
    CHECK(mass_weighted_error(u, ref, sys.mass) < 5e-3);

    // a hopeless sweep budget is reported, not looped forever
    CHECK_THROWS_AS(fem::solve_steady_coupled(sys, extra, 1e-30, 2), std::runtime_error);
}
