#include "hsml/rom.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "hsml/io.hpp"

namespace hsml::rom {

namespace {

std::string fmt_mu(const Vec3& mu) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "(%.6g, %.6g, %.6g)", mu.x, mu.y, mu.z);
    return buf;
}

// load with Dirichlet lifting for a steady solve: quadrature load corrected
// so free rows see the boundary values and prescribed rows carry them
Eigen::VectorXd lifted_steady_load(const fem::SparseSystem& sys, const mesh::VolumeMesh& mesh,
                                   const fem::SpaceTimeFn& forcing, const fem::SpaceTimeFn& boundary) {
    Eigen::VectorXd f = fem::assemble_load(sys, forcing, 0.0);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(f.size());
    for (int d : sys.dirichlet_nodes) g[d] = boundary(mesh.nodes[static_cast<std::size_t>(d)], 0.0);
    Eigen::VectorXd corr = sys.stiffness_raw * g;
    for (Eigen::Index i = 0; i < f.size(); ++i)
        if (!sys.is_dirichlet[static_cast<std::size_t>(i)]) f[i] -= corr[i];
    for (int d : sys.dirichlet_nodes) f[d] = g[d];
    return f;
}

// per-step data lift of the reduced backward Euler recursion:
// Q^T [ P_free (f_t - (A_raw + M/h) g_t) + P_bnd g_t ]
Eigen::VectorXd step_data_lift(const fem::SparseSystem& sys, const mesh::VolumeMesh& mesh,
                               const Eigen::MatrixXd& modes, const fem::SpaceTimeFn& forcing,
                               const fem::SpaceTimeFn& boundary, double t, double h) {
    Eigen::VectorXd f = fem::assemble_load(sys, forcing, t);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(f.size());
    for (int d : sys.dirichlet_nodes) g[d] = boundary(mesh.nodes[static_cast<std::size_t>(d)], t);
    Eigen::VectorXd corr = sys.stiffness_raw * g + (sys.mass * g) / h;
    for (Eigen::Index i = 0; i < f.size(); ++i)
        if (!sys.is_dirichlet[static_cast<std::size_t>(i)]) f[i] -= corr[i];
    for (int d : sys.dirichlet_nodes) f[d] = g[d];
    return modes.transpose() * f;
}

ReducedOperators project_operators(const fem::SparseSystem& sys, const Eigen::MatrixXd& modes) {
    ReducedOperators ops;
    ops.stiffness = modes.transpose() * (sys.stiffness * modes);

    Eigen::MatrixXd masked = modes;
    for (int d : sys.dirichlet_nodes) masked.row(d).setZero();
    ops.mass_ff = masked.transpose() * (sys.mass * masked);

    Eigen::MatrixXd mq = sys.mass * modes;
    for (int d : sys.dirichlet_nodes) mq.row(d).setZero();
    ops.mass_fu = modes.transpose() * mq;
    return ops;
}

void check_context(const OnlineContext& ctx) {
    if (!ctx.spec || !ctx.mesh || !ctx.system) throw std::invalid_argument("rom: incomplete online context");
    if (ctx.system->dirichlet_nodes.empty())
        throw std::invalid_argument("rom: online context needs a system with Dirichlet data applied");
}

// reduced solve at a basis truncation; k_use = 0 means the full basis
fem::FieldSeries online_impl(const RomBundle& bundle, const OnlineContext& ctx, const Vec3& mu, int k_use) {
    check_context(ctx);
    const auto& spec = *ctx.spec;
    const auto& mesh = *ctx.mesh;
    const auto& sys = *ctx.system;

    fem::FieldSeries out;
    const int steps = bundle.time_steps;
    if (steps > 0) {
        for (int s = 0; s <= steps; ++s) out.times.push_back(spec.horizon * s / steps);
    } else {
        out.times.push_back(0.0);
    }
    out.values.assign(out.times.size(), {});

    for (int comp = 0; comp < static_cast<int>(bundle.components.size()); ++comp) {
        const auto& cr = bundle.components[static_cast<std::size_t>(comp)];
        const int k = k_use > 0 ? std::min(k_use, cr.basis.k()) : cr.basis.k();
        auto modes = cr.basis.modes.leftCols(k);

        fem::SpaceTimeFn forcing = [&spec, mu, comp](const Vec3& p, double t) {
            return spec.forcing(mu, p, t, comp, nullptr);
        };
        fem::SpaceTimeFn boundary = [&spec, mu, comp](const Vec3& p, double t) {
            return spec.boundary(mu, p, t, comp);
        };

        if (steps == 0) {
            Eigen::VectorXd f_r = modes.transpose() * lifted_steady_load(sys, mesh, forcing, boundary);
            Eigen::VectorXd alpha = reduced_steady_solve(cr.ops.stiffness.topLeftCorner(k, k), f_r);
            out.values[0].push_back(modes * alpha);
        } else {
            const double h = spec.horizon / steps;
            Eigen::VectorXd u0 = fem::interpolate(
                mesh, [&spec, mu, comp](const Vec3& p, double) { return spec.initial(mu, p, comp); }, 0.0);
            Eigen::VectorXd alpha0 = modes.transpose() * u0;

            std::vector<Eigen::VectorXd> lifts;
            lifts.reserve(static_cast<std::size_t>(steps));
            for (int s = 1; s <= steps; ++s)
                lifts.push_back(step_data_lift(sys, mesh, modes, forcing, boundary, out.times[static_cast<std::size_t>(s)], h));

            ReducedOperators trunc;
            trunc.stiffness = cr.ops.stiffness.topLeftCorner(k, k);
            trunc.mass_ff = cr.ops.mass_ff.topLeftCorner(k, k);
            trunc.mass_fu = cr.ops.mass_fu.topLeftCorner(k, k);
            auto alphas = reduced_unsteady_solve(trunc, lifts, alpha0, h);
            for (std::size_t s = 0; s < alphas.size(); ++s) out.values[s].push_back(modes * alphas[s]);
        }
    }
    return out;
}

}  // namespace

std::vector<Vec3> sample_parameters(int count, std::uint64_t seed, bool gaussian) {
    if (count < 1) throw std::invalid_argument("sample_parameters: count must be positive");
    Rng rng(seed);
    auto draw = [&]() {
        if (!gaussian) return rng.uniform();
        for (int tries = 0; tries < 100; ++tries) {
            double v = 0.5 + 0.25 * rng.normal();
            if (v >= 0.0 && v <= 1.0) return v;
        }
        return rng.uniform();  // pathologically unlucky stream; keep the draw in-box
    };
    std::vector<Vec3> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        double a = draw(), b = draw(), c = draw();
        out.push_back({a, b, c});
    }
    return out;
}

ReducedBasis pod(const Eigen::MatrixXd& snapshots, double tolerance, int forced_k) {
    if (snapshots.rows() == 0 || snapshots.cols() == 0) throw std::invalid_argument("pod: empty snapshot matrix");
    if (forced_k > snapshots.cols())
        throw std::invalid_argument("pod: requested more modes than snapshot columns");
    if (!(tolerance > 0.0) && forced_k <= 0) throw std::invalid_argument("pod: need a tolerance or a forced size");

    const Eigen::Index m = snapshots.cols();
    Eigen::MatrixXd gram = snapshots.transpose() * snapshots;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) throw std::runtime_error("pod: Gram eigendecomposition failed");

    // ascending from Eigen; flip to a descending spectrum
    Eigen::VectorXd lam = eig.eigenvalues().reverse();
    Eigen::MatrixXd vec = eig.eigenvectors().rowwise().reverse();

    double total = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) total += std::max(lam[i], 0.0);
    if (total <= 0.0) throw std::invalid_argument("pod: all-zero snapshot matrix");

    ReducedBasis basis;
    basis.tolerance = tolerance;
    for (Eigen::Index i = 0; i < m; ++i) basis.singular_values.push_back(std::sqrt(std::max(lam[i], 0.0)));

    Eigen::Index rank = 0;
    while (rank < m && lam[rank] > 1e-14 * total) ++rank;
    if (rank == 0) throw std::invalid_argument("pod: all-zero snapshot matrix");

    Eigen::Index k;
    if (forced_k > 0) {
        k = std::min<Eigen::Index>(forced_k, rank);
    } else {
        k = rank;
        double cum = 0.0;
        for (Eigen::Index i = 0; i < rank; ++i) {
            cum += std::max(lam[i], 0.0);
            if (1.0 - cum / total <= tolerance) {
                k = i + 1;
                break;
            }
        }
    }

    basis.modes.resize(snapshots.rows(), k);
    for (Eigen::Index i = 0; i < k; ++i)
        basis.modes.col(i) = snapshots * vec.col(i) / basis.singular_values[static_cast<std::size_t>(i)];

    // two modified Gram-Schmidt sweeps: the Gram route loses orthogonality on
    // the deepest modes when the spectrum spans many decades
    for (int pass = 0; pass < 2; ++pass)
        for (Eigen::Index j = 0; j < k; ++j) {
            for (Eigen::Index i = 0; i < j; ++i)
                basis.modes.col(j) -= basis.modes.col(i).dot(basis.modes.col(j)) * basis.modes.col(i);
            double norm = basis.modes.col(j).norm();
            if (norm < 1e-12) throw std::runtime_error("pod: basis degenerated during orthonormalization");
            basis.modes.col(j) /= norm;
        }
    return basis;
}

ReducedBasis pod_unsteady(const SnapshotSet& snapshots, double tolerance, int forced_k) {
    if (snapshots.time_steps < 1) throw std::invalid_argument("pod_unsteady: snapshot set is not time-dependent");
    const int nt = snapshots.columns_per_parameter();
    const int np = static_cast<int>(snapshots.parameters.size());
    if (np < 1 || snapshots.matrix.cols() != static_cast<Eigen::Index>(np) * nt)
        throw std::invalid_argument("pod_unsteady: column count does not match parameters and time grid");

    std::vector<Eigen::MatrixXd> stage1;
    Eigen::Index total_cols = 0;
    for (int p = 0; p < np; ++p) {
        Eigen::MatrixXd block = snapshots.matrix.middleCols(static_cast<Eigen::Index>(p) * nt, nt);
        ReducedBasis rb = pod(block, tolerance);
        total_cols += rb.modes.cols();
        stage1.push_back(std::move(rb.modes));
    }

    Eigen::MatrixXd concat(snapshots.matrix.rows(), total_cols);
    Eigen::Index at = 0;
    for (const auto& blockmodes : stage1) {
        concat.middleCols(at, blockmodes.cols()) = blockmodes;
        at += blockmodes.cols();
    }
    return pod(concat, tolerance, forced_k);
}

RomBundle offline(const std::string& problem_id, const mesh::VolumeMesh& mesh,
                  const std::vector<Vec3>& samples, const OfflineConfig& config) {
    const auto& spec = bench::get(problem_id);
    if (!spec.parametric)
        throw std::invalid_argument("offline: " + problem_id + " has no parameter family to reduce over");
    if (samples.empty()) throw std::invalid_argument("offline: no parameter samples");
    if (spec.time_dependent && config.time_steps < 1)
        throw std::invalid_argument("offline: unsteady reduction needs time steps");

    RomBundle bundle;
    bundle.problem_id = problem_id;
    bundle.tolerance = config.tolerance;
    bundle.time_steps = spec.time_dependent ? config.time_steps : 0;

    const Eigen::Index n = static_cast<Eigen::Index>(mesh.nodes.size());
    const int nt = bundle.time_steps > 0 ? bundle.time_steps + 1 : 1;
    const int m = static_cast<int>(samples.size());

    for (int comp = 0; comp < spec.components; ++comp) {
        fem::SparseSystem sys = fem::assemble(mesh, spec.form, {});
        fem::apply_dirichlet(sys, mesh, [&spec, comp](const Vec3& p, double t) {
            return spec.boundary(spec.reference_mu, p, t, comp);
        });

        ComponentRom cr;
        cr.snapshots.parameters = samples;
        cr.snapshots.time_steps = bundle.time_steps;
        cr.snapshots.component = comp;
        cr.snapshots.matrix.resize(n, static_cast<Eigen::Index>(m) * nt);

        fem::SparseSystem scratch = sys;
        for (int j = 0; j < m; ++j) {
            const Vec3 mu = samples[static_cast<std::size_t>(j)];
            fem::SpaceTimeFn forcing = [&spec, mu, comp](const Vec3& p, double t) {
                return spec.forcing(mu, p, t, comp, nullptr);
            };
            fem::SpaceTimeFn boundary = [&spec, mu, comp](const Vec3& p, double t) {
                return spec.boundary(mu, p, t, comp);
            };
            try {
                if (bundle.time_steps == 0) {
                    scratch.load = lifted_steady_load(scratch, mesh, forcing, boundary);
                    cr.snapshots.matrix.col(j) = fem::solve_steady(scratch);
                } else {
                    scratch.forcing = forcing;
                    scratch.boundary_value = boundary;
                    Eigen::VectorXd u0 = fem::interpolate(
                        mesh, [&spec, mu, comp](const Vec3& p, double) { return spec.initial(mu, p, comp); }, 0.0);
                    auto series = fem::solve_unsteady(scratch, mesh, u0, {spec.horizon, bundle.time_steps});
                    for (int s = 0; s < nt; ++s)
                        cr.snapshots.matrix.col(static_cast<Eigen::Index>(j) * nt + s) =
                            series.values[static_cast<std::size_t>(s)][0];
                }
            } catch (const std::exception& e) {
                throw std::runtime_error("offline: full-order solve failed at mu=" + fmt_mu(mu) + ": " + e.what());
            }
        }

        cr.basis = bundle.time_steps == 0 ? pod(cr.snapshots.matrix, config.tolerance, config.forced_k)
                                          : pod_unsteady(cr.snapshots, config.tolerance, config.forced_k);
        cr.ops = project_operators(sys, cr.basis.modes);
        bundle.components.push_back(std::move(cr));
    }
    return bundle;
}

Eigen::VectorXd reduced_steady_solve(const Eigen::MatrixXd& a_r, const Eigen::VectorXd& f_r) {
    if (a_r.rows() != a_r.cols() || a_r.rows() != f_r.size())
        throw std::invalid_argument("reduced_steady_solve: shape mismatch");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a_r, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    double smin = sv[sv.size() - 1];
    if (!(smin > 0.0) || sv[0] / smin > 1e14) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.3e", smin > 0.0 ? sv[0] / smin : std::numeric_limits<double>::infinity());
        throw std::runtime_error(std::string("reduced_steady_solve: system numerically singular (condition ") + buf +
                                 ")");
    }
    return svd.solve(f_r);
}

std::vector<Eigen::VectorXd> reduced_unsteady_solve(const ReducedOperators& ops,
                                                    const std::vector<Eigen::VectorXd>& data_lifts,
                                                    const Eigen::VectorXd& alpha0, double h) {
    if (h <= 0.0) throw std::invalid_argument("reduced_unsteady_solve: bad step size");
    Eigen::MatrixXd lhs = ops.stiffness + ops.mass_ff / h;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(lhs, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (!(sv[sv.size() - 1] > 0.0) || sv[0] / sv[sv.size() - 1] > 1e14)
        throw std::runtime_error("reduced_unsteady_solve: step system numerically singular");

    std::vector<Eigen::VectorXd> alphas;
    alphas.reserve(data_lifts.size() + 1);
    alphas.push_back(alpha0);
    for (const auto& lift : data_lifts) alphas.push_back(svd.solve(ops.mass_fu * alphas.back() / h + lift));
    return alphas;
}

fem::FieldSeries online(const RomBundle& bundle, const OnlineContext& ctx, const Vec3& mu) {
    return online_impl(bundle, ctx, mu, 0);
}

ErrorCurve error_analysis(const RomBundle& bundle, const OnlineContext& ctx,
                          const std::vector<Vec3>& test_samples, int k_max) {
    check_context(ctx);
    if (test_samples.empty()) throw std::invalid_argument("error_analysis: no test samples");
    const auto& spec = *ctx.spec;

    int k_cap = k_max;
    for (const auto& cr : bundle.components) k_cap = std::min(k_cap, cr.basis.k());
    if (k_cap < 1) throw std::invalid_argument("error_analysis: no modes available");

    // full-order references once per sample
    std::vector<fem::FieldSeries> full;
    for (const Vec3& mu : test_samples) {
        fem::FieldSeries fs;
        const int steps = bundle.time_steps;
        if (steps > 0)
            for (int s = 0; s <= steps; ++s) fs.times.push_back(spec.horizon * s / steps);
        else
            fs.times.push_back(0.0);
        fs.values.assign(fs.times.size(), {});

        for (int comp = 0; comp < spec.components; ++comp) {
            fem::SparseSystem scratch = *ctx.system;
            fem::SpaceTimeFn forcing = [&spec, mu, comp](const Vec3& p, double t) {
                return spec.forcing(mu, p, t, comp, nullptr);
            };
            fem::SpaceTimeFn boundary = [&spec, mu, comp](const Vec3& p, double t) {
                return spec.boundary(mu, p, t, comp);
            };
            if (steps == 0) {
                scratch.load = lifted_steady_load(scratch, *ctx.mesh, forcing, boundary);
                fs.values[0].push_back(fem::solve_steady(scratch));
            } else {
                scratch.forcing = forcing;
                scratch.boundary_value = boundary;
                Eigen::VectorXd u0 = fem::interpolate(
                    *ctx.mesh, [&spec, mu, comp](const Vec3& p, double) { return spec.initial(mu, p, comp); }, 0.0);
                auto series = fem::solve_unsteady(scratch, *ctx.mesh, u0, {spec.horizon, steps});
                for (std::size_t s = 0; s < series.values.size(); ++s) fs.values[s].push_back(series.values[s][0]);
            }
        }
        full.push_back(std::move(fs));
    }

    ErrorCurve curve;
    for (int k = 1; k <= k_cap; ++k) {
        double sum_abs = 0.0, worst_abs = 0.0, sum_rel = 0.0, worst_rel = 0.0;
        int count = 0;
        for (std::size_t si = 0; si < test_samples.size(); ++si) {
            fem::FieldSeries red = online_impl(bundle, ctx, test_samples[si], k);
            for (int comp = 0; comp < spec.components; ++comp) {
                double num = 0.0, den = 0.0;
                for (std::size_t t = 0; t < red.times.size(); ++t) {
                    num += (red.values[t][static_cast<std::size_t>(comp)] -
                            full[si].values[t][static_cast<std::size_t>(comp)])
                               .squaredNorm();
                    den += full[si].values[t][static_cast<std::size_t>(comp)].squaredNorm();
                }
                double abs_err = std::sqrt(num);
                double rel_err = den > 0.0 ? std::sqrt(num / den) : abs_err;
                sum_abs += abs_err;
                sum_rel += rel_err;
                worst_abs = std::max(worst_abs, abs_err);
                worst_rel = std::max(worst_rel, rel_err);
                ++count;
            }
        }
        curve.k.push_back(k);
        curve.mean_abs.push_back(sum_abs / count);
        curve.max_abs.push_back(worst_abs);
        curve.mean_rel.push_back(sum_rel / count);
        curve.max_rel.push_back(worst_rel);
    }
    return curve;
}

void save_bundle(const std::string& dir, const RomBundle& bundle) {
    std::filesystem::create_directories(dir);

    char tolbuf[32];
    std::snprintf(tolbuf, sizeof(tolbuf), "%.17g", bundle.tolerance);

    std::vector<double> basis_data, spectrum_data, ops_data;
    std::vector<std::pair<std::string, std::string>> meta;
    meta.emplace_back("problem", bundle.problem_id);
    meta.emplace_back("tolerance", tolbuf);
    meta.emplace_back("time_steps", std::to_string(bundle.time_steps));
    meta.emplace_back("seed", std::to_string(bundle.seed));
    meta.emplace_back("components", std::to_string(bundle.components.size()));

    for (std::size_t c = 0; c < bundle.components.size(); ++c) {
        const auto& cr = bundle.components[c];
        const auto& q = cr.basis.modes;
        meta.emplace_back("rows_" + std::to_string(c), std::to_string(q.rows()));
        meta.emplace_back("k_" + std::to_string(c), std::to_string(q.cols()));
        meta.emplace_back("spectrum_" + std::to_string(c), std::to_string(cr.basis.singular_values.size()));
        for (Eigen::Index j = 0; j < q.cols(); ++j)
            for (Eigen::Index i = 0; i < q.rows(); ++i) basis_data.push_back(q(i, j));
        spectrum_data.insert(spectrum_data.end(), cr.basis.singular_values.begin(), cr.basis.singular_values.end());
        for (const Eigen::MatrixXd* mat : {&cr.ops.stiffness, &cr.ops.mass_ff, &cr.ops.mass_fu})
            for (Eigen::Index j = 0; j < mat->cols(); ++j)
                for (Eigen::Index i = 0; i < mat->rows(); ++i) ops_data.push_back((*mat)(i, j));
    }

    io::write_kv(dir + "/meta", meta);
    io::write_doubles(dir + "/basis.bin", basis_data);
    io::write_doubles(dir + "/singular_values.bin", spectrum_data);
    io::write_doubles(dir + "/reduced_ops.bin", ops_data);
}

RomBundle load_bundle(const std::string& dir) {
    auto kv = io::read_kv(dir + "/meta");
    auto find = [&](const std::string& key) -> const std::string& {
        for (const auto& [k, v] : kv)
            if (k == key) return v;
        throw std::runtime_error("load_bundle: missing meta key " + key);
    };

    RomBundle bundle;
    bundle.problem_id = find("problem");
    bundle.tolerance = std::stod(find("tolerance"));
    bundle.time_steps = std::stoi(find("time_steps"));
    bundle.seed = std::stoull(find("seed"));
    std::size_t ncomp = std::stoul(find("components"));

    auto basis_data = io::read_doubles(dir + "/basis.bin");
    auto spectrum_data = io::read_doubles(dir + "/singular_values.bin");
    auto ops_data = io::read_doubles(dir + "/reduced_ops.bin");

    std::size_t b_at = 0, s_at = 0, o_at = 0;
    for (std::size_t c = 0; c < ncomp; ++c) {
        ComponentRom cr;
        Eigen::Index rows = std::stol(find("rows_" + std::to_string(c)));
        Eigen::Index k = std::stol(find("k_" + std::to_string(c)));
        std::size_t spectrum = std::stoul(find("spectrum_" + std::to_string(c)));

        if (b_at + static_cast<std::size_t>(rows * k) > basis_data.size() ||
            s_at + spectrum > spectrum_data.size() ||
            o_at + 3 * static_cast<std::size_t>(k * k) > ops_data.size())
            throw std::runtime_error("load_bundle: artifact sizes disagree with meta");

        cr.basis.tolerance = bundle.tolerance;
        cr.basis.modes.resize(rows, k);
        for (Eigen::Index j = 0; j < k; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) cr.basis.modes(i, j) = basis_data[b_at++];
        cr.basis.singular_values.assign(spectrum_data.begin() + static_cast<std::ptrdiff_t>(s_at),
                                        spectrum_data.begin() + static_cast<std::ptrdiff_t>(s_at + spectrum));
        s_at += spectrum;

        for (Eigen::MatrixXd* mat : {&cr.ops.stiffness, &cr.ops.mass_ff, &cr.ops.mass_fu}) {
            mat->resize(k, k);
            for (Eigen::Index j = 0; j < k; ++j)
                for (Eigen::Index i = 0; i < k; ++i) (*mat)(i, j) = ops_data[o_at++];
        }
        cr.snapshots.component = static_cast<int>(c);
        cr.snapshots.time_steps = bundle.time_steps;
        bundle.components.push_back(std::move(cr));
    }
    return bundle;
}

}  // namespace hsml::rom
