#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>

#include "hsml/bench.hpp"
#include "hsml/fem.hpp"
#include "hsml/mesh.hpp"
#include "hsml/rom.hpp"

using namespace hsml;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
    return m;
}

Eigen::MatrixXd random_orthonormal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m = random_matrix(rng, rows, cols);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    return Eigen::MatrixXd(qr.householderQ()) .leftCols(cols);
}

// matrix with a prescribed singular spectrum, for closed-form checks
Eigen::MatrixXd with_spectrum(Rng& rng, Eigen::Index rows, const std::vector<double>& sigma) {
    auto cols = static_cast<Eigen::Index>(sigma.size());
    Eigen::MatrixXd u = random_orthonormal(rng, rows, cols);
    Eigen::MatrixXd v = random_orthonormal(rng, cols, cols);
    Eigen::VectorXd s(cols);
    for (Eigen::Index i = 0; i < cols; ++i) s[i] = sigma[static_cast<std::size_t>(i)];
    return u * s.asDiagonal() * v.transpose();
}

double max_offdiag_identity_error(const Eigen::MatrixXd& q) {
    Eigen::MatrixXd gram = q.transpose() * q;
    return (gram - Eigen::MatrixXd::Identity(q.cols(), q.cols())).cwiseAbs().maxCoeff();
}

// full-order reference solve with the problem closures bound at mu, written
// against the fem interface only (no rom internals)
fem::FieldSeries full_reference(const bench::ProblemSpec& spec, const mesh::VolumeMesh& mesh, const Vec3& mu,
                                int time_steps) {
    fem::FieldSeries out;
    if (time_steps > 0)
        for (int s = 0; s <= time_steps; ++s) out.times.push_back(spec.horizon * s / time_steps);
    else
        out.times.push_back(0.0);
    out.values.assign(out.times.size(), {});

    for (int comp = 0; comp < spec.components; ++comp) {
        fem::SpaceTimeFn forcing = [&spec, mu, comp](const Vec3& p, double t) {
            return spec.forcing(mu, p, t, comp, nullptr);
        };
        fem::SpaceTimeFn boundary = [&spec, mu, comp](const Vec3& p, double t) {
            return spec.boundary(mu, p, t, comp);
        };
        fem::SparseSystem sys = fem::assemble(mesh, spec.form, forcing);
        fem::apply_dirichlet(sys, mesh, boundary);
        if (time_steps == 0) {
            out.values[0].push_back(fem::solve_steady(sys));
        } else {
            Eigen::VectorXd u0 = fem::interpolate(
                mesh, [&spec, mu, comp](const Vec3& p, double) { return spec.initial(mu, p, comp); }, 0.0);
            auto series = fem::solve_unsteady(sys, mesh, u0, {spec.horizon, time_steps});
            for (std::size_t s = 0; s < series.values.size(); ++s) out.values[s].push_back(series.values[s][0]);
        }
    }
    return out;
}

double pooled_relative_error(const fem::FieldSeries& a, const fem::FieldSeries& b, int comp) {
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < a.values.size(); ++t) {
        num += (a.values[t][static_cast<std::size_t>(comp)] - b.values[t][static_cast<std::size_t>(comp)])
                   .squaredNorm();
        den += b.values[t][static_cast<std::size_t>(comp)].squaredNorm();
    }
    return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("parameter sampling stays in the unit box and is seed-deterministic") {
    auto draws = rom::sample_parameters(200, 77);
    REQUIRE(draws.size() == 200);
    double sum = 0.0, sumsq = 0.0;
    for (const auto& mu : draws) {
        for (double c : {mu.x, mu.y, mu.z}) {
            CHECK(c >= 0.0);
            CHECK(c <= 1.0);
            sum += c;
            sumsq += c * c;
        }
    }
    double n = 600.0;
    double mean = sum / n;
    double sd = std::sqrt(sumsq / n - mean * mean);
    CHECK(mean == doctest::Approx(0.5).epsilon(0.1));
    // the truncated normal concentrates harder than uniform (sd 0.289)
    CHECK(sd > 0.15);
    CHECK(sd < 0.27);

    auto uniform = rom::sample_parameters(200, 77, false);
    double usumsq = 0.0, usum = 0.0;
    for (const auto& mu : uniform)
        for (double c : {mu.x, mu.y, mu.z}) {
            usum += c;
            usumsq += c * c;
        }
    double umean = usum / n;
    double usd = std::sqrt(usumsq / n - umean * umean);
    CHECK(usd > 0.26);
    CHECK(usd < 0.32);

    auto again = rom::sample_parameters(200, 77);
    auto other = rom::sample_parameters(200, 78);
    bool same = true, differs = false;
    for (std::size_t i = 0; i < draws.size(); ++i) {
        same = same && draws[i].x == again[i].x && draws[i].y == again[i].y && draws[i].z == again[i].z;
        differs = differs || draws[i].x != other[i].x;
    }
    CHECK(same);
    CHECK(differs);
    CHECK_THROWS_AS(rom::sample_parameters(0, 1), std::invalid_argument);
}

TEST_CASE("pod produces an orthonormal basis with the full energy spectrum") {
    Rng rng(42);
    Eigen::MatrixXd s = random_matrix(rng, 60, 12);
    auto basis = rom::pod(s, 1e-12);

    REQUIRE(basis.singular_values.size() == 12);
    for (std::size_t i = 0; i < basis.singular_values.size(); ++i) {
        CHECK(basis.singular_values[i] >= 0.0);
        if (i > 0) CHECK(basis.singular_values[i] <= basis.singular_values[i - 1]);
    }

    double energy = 0.0;
    for (double sv : basis.singular_values) energy += sv * sv;
    CHECK(energy == doctest::Approx(s.squaredNorm()).epsilon(1e-10));

    REQUIRE(basis.k() == 12);  // random Gaussian columns are full rank
    CHECK(max_offdiag_identity_error(basis.modes) < 1e-10);
}

TEST_CASE("pod spectrum and reconstruction match a dense SVD oracle") {
    Rng rng(7);
    Eigen::MatrixXd s = random_matrix(rng, 8, 5);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(s);

    auto basis = rom::pod(s, 1e-12);
    REQUIRE(basis.singular_values.size() == 5);
    for (Eigen::Index i = 0; i < 5; ++i)
        CHECK(basis.singular_values[static_cast<std::size_t>(i)] ==
              doctest::Approx(svd.singularValues()[i]).epsilon(1e-8));

    // Eckart-Young: the rank-k projection error is the discarded tail energy
    for (int k : {1, 2, 3}) {
        auto trunc = rom::pod(s, 0.0, k);
        REQUIRE(trunc.k() == k);
        auto q = trunc.modes;
        double err = (s - q * (q.transpose() * s)).squaredNorm();
        double tail = 0.0;
        for (Eigen::Index i = k; i < 5; ++i) tail += svd.singularValues()[i] * svd.singularValues()[i];
        CHECK(err == doctest::Approx(tail).epsilon(1e-8));
    }
}

TEST_CASE("pod handles single and duplicated snapshots") {
    Rng rng(11);
    Eigen::VectorXd s = random_matrix(rng, 20, 1);

    auto single = rom::pod(s, 1e-6);
    REQUIRE(single.k() == 1);
    CHECK(single.modes.col(0).norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(single.modes.col(0).dot(s)) == doctest::Approx(s.norm()).epsilon(1e-12));

    Eigen::MatrixXd dup(20, 2);
    dup.col(0) = s;
    dup.col(1) = s;
    auto two = rom::pod(dup, 1e-6);
    REQUIRE(two.singular_values.size() == 2);
    CHECK(two.singular_values[0] == doctest::Approx(std::sqrt(2.0) * s.norm()).epsilon(1e-10));
    CHECK(two.singular_values[1] <= 1e-12 * two.singular_values[0]);
    CHECK(two.k() == 1);  // duplicate direction is below the rank cutoff

    CHECK_THROWS_AS(rom::pod(Eigen::MatrixXd(), 1e-6), std::invalid_argument);
    CHECK_THROWS_AS(rom::pod(Eigen::MatrixXd::Zero(4, 3), 1e-6), std::invalid_argument);
    CHECK_THROWS_AS(rom::pod(dup, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(rom::pod(dup, 1e-6, 3), std::invalid_argument);  // more modes than columns
}

TEST_CASE("tail-energy truncation matches the closed-form count on a known spectrum") {
    Rng rng(3);
    std::vector<double> sigma;
    for (int i = 0; i < 8; ++i) sigma.push_back(std::pow(2.0, -i));
    Eigen::MatrixXd s = with_spectrum(rng, 40, sigma);

    for (double tol : {1e-1, 1e-2, 1e-3, 1e-5}) {
        // independent count: smallest k with tail energy ratio <= tol
        double total = 0.0;
        for (double sv : sigma) total += sv * sv;
        int expect = static_cast<int>(sigma.size());
        double cum = 0.0;
        for (std::size_t i = 0; i < sigma.size(); ++i) {
            cum += sigma[i] * sigma[i];
            if (1.0 - cum / total <= tol) {
                expect = static_cast<int>(i) + 1;
                break;
            }
        }
        CHECK(rom::pod(s, tol).k() == expect);
    }

    SUBCASE("forced size wins over the tolerance and caps at numerical rank") {
        CHECK(rom::pod(s, 1e-1, 6).k() == 6);

        std::vector<double> rank2 = {1.0, 0.5, 0.0, 0.0, 0.0};
        Eigen::MatrixXd low = with_spectrum(rng, 30, rank2);
        CHECK(rom::pod(low, 1e-12, 5).k() == 2);
    }

    SUBCASE("wide spectra keep per-entry orthonormality") {
        std::vector<double> wide;
        for (int i = 0; i < 8; ++i) wide.push_back(std::pow(10.0, -i));
        Eigen::MatrixXd hard = with_spectrum(rng, 50, wide);
        auto basis = rom::pod(hard, 0.0, 8);
        CHECK(basis.k() >= 6);  // deepest directions may fall below the rank cutoff
        CHECK(max_offdiag_identity_error(basis.modes) < 1e-10);
    }
}

TEST_CASE("pod projection beats random subspaces of the same rank") {
    Rng rng(19);
    Eigen::MatrixXd s = random_matrix(rng, 30, 10);
    auto basis = rom::pod(s, 0.0, 3);
    const auto& q = basis.modes;
    double best = (s - q * (q.transpose() * s)).norm();

    for (int trial = 0; trial < 100; ++trial) {
        Eigen::MatrixXd p = random_orthonormal(rng, 30, 3);
        double other = (s - p * (p.transpose() * s)).norm();
        CHECK(best <= other + 1e-10);
    }
}

TEST_CASE("nested pod spans the same space as flat pod on low-rank data") {
    Rng rng(23);
    Eigen::MatrixXd span = random_matrix(rng, 40, 5);

    rom::SnapshotSet set;
    set.parameters = {{0.1, 0.2, 0.3}, {0.4, 0.5, 0.6}, {0.7, 0.8, 0.9}};
    set.time_steps = 3;  // four columns per parameter
    set.matrix = span * random_matrix(rng, 5, 12);

    auto nested = rom::pod_unsteady(set, 1e-10);
    auto flat = rom::pod(set.matrix, 1e-10);
    REQUIRE(nested.k() == 5);
    REQUIRE(flat.k() == 5);
    CHECK(max_offdiag_identity_error(nested.modes) < 1e-10);

    // principal angles between the two spans are all ~0
    Eigen::JacobiSVD<Eigen::MatrixXd> overlap(nested.modes.transpose() * flat.modes);
    CHECK(overlap.singularValues().minCoeff() > 1.0 - 1e-8);

    SUBCASE("shape validation") {
        rom::SnapshotSet bad = set;
        bad.time_steps = 0;
        CHECK_THROWS_AS(rom::pod_unsteady(bad, 1e-10), std::invalid_argument);
        bad = set;
        bad.matrix = set.matrix.leftCols(11);
        CHECK_THROWS_AS(rom::pod_unsteady(bad, 1e-10), std::invalid_argument);
    }
}

TEST_CASE("reduced unsteady recursion matches a dense backward step oracle") {
    Rng rng(31);
    rom::ReducedOperators ops;
    Eigen::MatrixXd base = random_matrix(rng, 3, 3);
    ops.stiffness = base * base.transpose() + 3.0 * Eigen::MatrixXd::Identity(3, 3);
    Eigen::MatrixXd mbase = random_matrix(rng, 3, 3);
    ops.mass_ff = mbase * mbase.transpose() + Eigen::MatrixXd::Identity(3, 3);
    ops.mass_fu = random_matrix(rng, 3, 3);

    const double h = 0.1;
    Eigen::VectorXd alpha0 = random_matrix(rng, 3, 1);
    std::vector<Eigen::VectorXd> lifts;
    for (int s = 0; s < 4; ++s) lifts.push_back(random_matrix(rng, 3, 1));

    auto alphas = rom::reduced_unsteady_solve(ops, lifts, alpha0, h);
    REQUIRE(alphas.size() == 5);
    CHECK((alphas[0] - alpha0).norm() == 0.0);

    Eigen::MatrixXd lhs = ops.stiffness + ops.mass_ff / h;
    Eigen::VectorXd a = alpha0;
    for (std::size_t s = 0; s < lifts.size(); ++s) {
        a = lhs.fullPivLu().solve(ops.mass_fu * a / h + lifts[s]);
        CHECK((alphas[s + 1] - a).norm() < 1e-12 * (1.0 + a.norm()));
    }

    CHECK_THROWS_AS(rom::reduced_unsteady_solve(ops, lifts, alpha0, 0.0), std::invalid_argument);
}

TEST_CASE("singular reduced systems are refused") {
    Rng rng(37);
    Eigen::MatrixXd u = random_matrix(rng, 3, 1);
    Eigen::MatrixXd rank1 = u * u.transpose();
    CHECK_THROWS_WITH_AS(rom::reduced_steady_solve(rank1, Eigen::VectorXd::Ones(3)),
                         doctest::Contains("singular"), std::runtime_error);
    CHECK_THROWS_AS(rom::reduced_steady_solve(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Ones(2)),
                    std::invalid_argument);
}

TEST_CASE("steady reduction reproduces training solves and generalizes nearby") {
    auto mesh = mesh::structured_box_mesh(4);
    auto samples = rom::sample_parameters(8, 2026);

    rom::OfflineConfig cfg;
    cfg.tolerance = 1e-9;
    auto bundle = rom::offline("tp1", mesh, samples, cfg);
    REQUIRE(bundle.components.size() == 1);
    const auto& cr = bundle.components[0];
    REQUIRE(cr.basis.k() >= 1);
    REQUIRE(cr.basis.k() <= 8);
    CHECK(max_offdiag_identity_error(cr.basis.modes) < 1e-10);

    const auto& spec = bench::get("tp1");
    fem::SparseSystem sys = fem::assemble(mesh, spec.form, {});
    fem::apply_dirichlet(sys, mesh, [&spec](const Vec3& p, double t) {
        return spec.boundary(spec.reference_mu, p, t, 0);
    });
    rom::OnlineContext ctx{&spec, &mesh, &sys};

    SUBCASE("projected operator equals an independent dense computation") {
        Eigen::MatrixXd dense = Eigen::MatrixXd(sys.stiffness);
        Eigen::MatrixXd expect = cr.basis.modes.transpose() * dense * cr.basis.modes;
        CHECK((cr.ops.stiffness - expect).cwiseAbs().maxCoeff() < 1e-10);

        Eigen::MatrixXd md = Eigen::MatrixXd(sys.mass);
        Eigen::MatrixXd mask = Eigen::MatrixXd::Identity(md.rows(), md.cols());
        for (int d : sys.dirichlet_nodes) mask(d, d) = 0.0;
        Eigen::MatrixXd expect_ff = cr.basis.modes.transpose() * mask * md * mask * cr.basis.modes;
        Eigen::MatrixXd expect_fu = cr.basis.modes.transpose() * mask * md * cr.basis.modes;
        CHECK((cr.ops.mass_ff - expect_ff).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((cr.ops.mass_fu - expect_fu).cwiseAbs().maxCoeff() < 1e-10);
    }

    SUBCASE("training parameters are reproduced through the reduced path") {
        for (std::size_t j : {std::size_t{0}, samples.size() - 1}) {
            auto red = rom::online(bundle, ctx, samples[j]);
            auto full = full_reference(spec, mesh, samples[j], 0);
            CHECK(pooled_relative_error(red, full, 0) < 1e-8);
            // reduced coordinates are the projection of the full solve
            Eigen::VectorXd alpha = cr.basis.modes.transpose() * full.values[0][0];
            CHECK((cr.basis.modes * alpha - red.values[0][0]).norm() < 1e-8 * full.values[0][0].norm());
        }
    }

    SUBCASE("held-out parameter stays accurate and the error curve decays") {
        auto red = rom::online(bundle, ctx, spec.reference_mu);
        auto full = full_reference(spec, mesh, spec.reference_mu, 0);
        CHECK(pooled_relative_error(red, full, 0) < 0.05);

        auto curve = rom::error_analysis(bundle, ctx, {spec.reference_mu, samples[3]}, cr.basis.k());
        REQUIRE(curve.k.size() == static_cast<std::size_t>(cr.basis.k()));
        CHECK(curve.mean_rel.back() <= curve.mean_rel.front());
        CHECK(curve.max_rel.back() <= 1e-3);  // the held-out draw dominates the pooled maximum

        // log-linear fit over the k range has negative slope
        double sx = 0.0, sy = 0.0, sxy = 0.0, sxx = 0.0;
        auto npts = static_cast<double>(curve.k.size());
        for (std::size_t i = 0; i < curve.k.size(); ++i) {
            double x = curve.k[i];
            double y = std::log10(std::max(curve.mean_rel[i], 1e-16));
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
        }
        double slope = (npts * sxy - sx * sy) / (npts * sxx - sx * sx);
        CHECK(slope < -0.1);
    }

    SUBCASE("bundles round-trip through disk byte-exactly") {
        auto dir = std::filesystem::temp_directory_path() / "hsml_rom_bundle";
        rom::save_bundle(dir.string(), bundle);
        auto loaded = rom::load_bundle(dir.string());

        CHECK(loaded.problem_id == bundle.problem_id);
        CHECK(loaded.tolerance == bundle.tolerance);
        CHECK(loaded.time_steps == bundle.time_steps);
        REQUIRE(loaded.components.size() == 1);
        const auto& lcr = loaded.components[0];
        CHECK((lcr.basis.modes - cr.basis.modes).norm() == 0.0);
        CHECK(lcr.basis.singular_values == cr.basis.singular_values);
        CHECK((lcr.ops.stiffness - cr.ops.stiffness).norm() == 0.0);
        CHECK((lcr.ops.mass_ff - cr.ops.mass_ff).norm() == 0.0);
        CHECK((lcr.ops.mass_fu - cr.ops.mass_fu).norm() == 0.0);

        auto red = rom::online(loaded, ctx, samples[2]);
        auto ref = rom::online(bundle, ctx, samples[2]);
        CHECK((red.values[0][0] - ref.values[0][0]).norm() == 0.0);
    }
}

TEST_CASE("unsteady reduction reproduces both components of a training trajectory") {
    auto mesh = mesh::structured_box_mesh(3);
    auto samples = rom::sample_parameters(4, 515);

    rom::OfflineConfig cfg;
    cfg.tolerance = 1e-12;
    cfg.time_steps = 5;
    auto bundle = rom::offline("tp2", mesh, samples, cfg);
    REQUIRE(bundle.components.size() == 2);
    CHECK(bundle.time_steps == 5);

    const auto& spec = bench::get("tp2");
    fem::SparseSystem sys = fem::assemble(mesh, spec.form, {});
    fem::apply_dirichlet(sys, mesh, [&spec](const Vec3& p, double t) {
        return spec.boundary(spec.reference_mu, p, t, 0);
    });
    rom::OnlineContext ctx{&spec, &mesh, &sys};

    auto red = rom::online(bundle, ctx, samples[1]);
    REQUIRE(red.times.size() == 6);
    CHECK(red.times.front() == 0.0);
    CHECK(red.times.back() == doctest::Approx(spec.horizon));
    REQUIRE(red.values[0].size() == 2);

    // nested truncation keeps the tail energy at the tolerance, so training
    // trajectories come back to ~sqrt(tol) amplitude, not exactly
    auto full = full_reference(spec, mesh, samples[1], 5);
    CHECK(pooled_relative_error(red, full, 0) < 1e-5);
    CHECK(pooled_relative_error(red, full, 1) < 1e-5);

    SUBCASE("held-out parameter") {
        auto held = rom::online(bundle, ctx, spec.reference_mu);
        auto ref = full_reference(spec, mesh, spec.reference_mu, 5);
        CHECK(pooled_relative_error(held, ref, 0) < 0.05);
        CHECK(pooled_relative_error(held, ref, 1) < 0.05);
    }
}

TEST_CASE("offline refuses problems without a parameter family") {
    auto mesh = mesh::structured_box_mesh(2);
    auto samples = rom::sample_parameters(2, 8);
    CHECK_THROWS_AS(rom::offline("tp3", mesh, samples, {}), std::invalid_argument);
    CHECK_THROWS_AS(rom::offline("tp4", mesh, samples, {}), std::invalid_argument);
    CHECK_THROWS_AS(rom::offline("tp1", mesh, {}, {}), std::invalid_argument);
}
