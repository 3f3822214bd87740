#include "hsml/cli.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hsml/bench.hpp"
#include "hsml/fem.hpp"
#include "hsml/io.hpp"
#include "hsml/mesh.hpp"
#include "hsml/pinn.hpp"
#include "hsml/rom.hpp"

namespace fs = std::filesystem;

namespace hsml::cli {
namespace {

struct MeshSource {
    std::string box;  // "box:N"
    std::string msh;  // path to a MSH file
};

// Procedural box or a mesh file; exactly one is expected by the caller.
mesh::VolumeMesh load_mesh(const MeshSource& src) {
    if (!src.msh.empty()) return io::parse_msh(src.msh);
    const std::string prefix = "box:";
    if (src.box.rfind(prefix, 0) != 0)
        throw std::runtime_error("mesh spec must look like box:8, got '" + src.box + "'");
    const int divisions = std::stoi(src.box.substr(prefix.size()));
    return mesh::structured_box_mesh(divisions);
}

Vec3 parse_vec3(const std::string& text, const std::string& flag) {
    std::stringstream ss(text);
    std::vector<double> vals;
    std::string item;
    while (std::getline(ss, item, ',')) vals.push_back(std::stod(item));
    if (vals.size() != 3) throw std::runtime_error(flag + " needs three comma-separated values");
    return {vals[0], vals[1], vals[2]};
}

std::vector<double> parse_times(const std::string& text) {
    std::stringstream ss(text);
    std::vector<double> vals;
    std::string item;
    while (std::getline(ss, item, ',')) vals.push_back(std::stod(item));
    if (vals.empty()) throw std::runtime_error("--times needs at least one value");
    return vals;
}

// Output directories start empty so stale artifacts cannot leak into a run.
void ensure_out_dir(const std::string& dir, bool force) {
    fs::path p(dir);
    if (!fs::exists(p)) {
        fs::create_directories(p);
        return;
    }
    if (!fs::is_directory(p)) throw std::runtime_error("output path is not a directory: " + dir);
    if (!fs::is_empty(p) && !force)
        throw std::runtime_error("output directory " + dir + " is not empty (pass --force to reuse it)");
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_samples_csv(const std::string& path, const mesh::SamplePlan& plan) {
    std::vector<std::string> header{"kind", "x", "y", "z", "t"};
    std::vector<std::vector<double>> rows;
    // kind: 0 collocation, 1 boundary, 2 initial
    for (const auto& p : plan.collocation) rows.push_back({0, p.x.x, p.x.y, p.x.z, p.t});
    for (const auto& p : plan.boundary) rows.push_back({1, p.x.x, p.x.y, p.x.z, p.t});
    for (const auto& p : plan.initial) rows.push_back({2, p.x, p.y, p.z, 0.0});
    io::write_csv(path, header, rows);
}

std::string model_summary_text(const mesh::SurfaceModel& model) {
    std::ostringstream out;
    auto box = mesh::bounding_box(model);
    out << "objects " << model.objects.size() << "\n";
    for (const auto& obj : model.objects)
        out << "  " << obj.name << ": " << obj.vertices.size() << " vertices, " << obj.faces.size() << " faces\n";
    out << "surface area " << fmt(mesh::surface_area(model)) << "\n";
    out << "bounding box (" << fmt(box.lo.x) << ", " << fmt(box.lo.y) << ", " << fmt(box.lo.z) << ") to ("
        << fmt(box.hi.x) << ", " << fmt(box.hi.y) << ", " << fmt(box.hi.z) << ")\n";
    out << "watertight yes\n";
    return out.str();
}

// Full-order solve of a registered problem: the reference every other
// surface (ROM, network) is compared against.
fem::FieldSeries solve_problem(const bench::ProblemSpec& spec, const mesh::VolumeMesh& m, const Vec3& mu,
                               int steps, double t0_constant = 0.0) {
    fem::FieldSeries series;
    for (int comp = 0; comp < spec.components; ++comp) {
        fem::SpaceTimeFn forcing;
        if (!spec.self_coupled)
            forcing = [&spec, mu, comp](const Vec3& p, double t) { return spec.forcing(mu, p, t, comp, nullptr); };
        auto sys = fem::assemble(m, spec.form, forcing);
        fem::apply_dirichlet(sys, m, [&spec, mu, comp](const Vec3& p, double t) {
            return spec.boundary(mu, p, t, comp);
        });

        fem::FieldSeries part;
        if (spec.time_dependent) {
            Eigen::VectorXd u0;
            if (spec.initial)
                u0 = fem::interpolate(m, [&spec, mu, comp](const Vec3& p, double) {
                    return spec.initial(mu, p, comp);
                }, 0.0);
            else
                u0 = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m.nodes.size()), t0_constant);
            part = fem::solve_unsteady(sys, m, u0, {spec.horizon, steps});
        } else if (spec.self_coupled && comp == 0) {
            // reaction feeding on the field itself: lap(u) = f(u) via sweeps
            auto extra = [&sys, &spec, mu, comp](const Eigen::VectorXd& u) {
                Eigen::VectorXd scaled(u.size());
                for (Eigen::Index i = 0; i < u.size(); ++i) {
                    double uv = u[i];
                    scaled[i] = spec.forcing(mu, Vec3{}, 0.0, comp, &uv);
                }
                return Eigen::VectorXd(-(sys.mass * scaled));
            };
            part.times = {0.0};
            part.values = {{fem::solve_steady_coupled(sys, extra)}};
        } else {
            if (spec.self_coupled) {
                // constant source component: bake it through the quadrature load
                double dummy = 0.0;
                sys.load = fem::assemble_load(sys, [&spec, mu, comp, &dummy](const Vec3& p, double t) {
                    return spec.forcing(mu, p, t, comp, &dummy);
                }, 0.0);
                fem::apply_dirichlet(sys, m, [&spec, mu, comp](const Vec3& p, double t) {
                    return spec.boundary(mu, p, t, comp);
                });
            }
            part.times = {0.0};
            part.values = {{fem::solve_steady(sys)}};
        }

        if (comp == 0) {
            series.times = part.times;
            series.values.resize(part.times.size());
        }
        for (std::size_t ti = 0; ti < part.times.size(); ++ti)
            series.values[ti].push_back(part.values[ti][0]);
        series.component_names.push_back("u" + std::to_string(comp));
    }
    return series;
}

fem::FieldSeries analytic_series(const bench::ProblemSpec& spec, const mesh::VolumeMesh& m, const Vec3& mu,
                                 const std::vector<double>& times) {
    fem::FieldSeries series;
    series.times = times;
    for (int comp = 0; comp < spec.components; ++comp)
        series.component_names.push_back("u" + std::to_string(comp));
    for (double t : times) {
        std::vector<Eigen::VectorXd> fields;
        for (int comp = 0; comp < spec.components; ++comp)
            fields.push_back(fem::interpolate(m, [&spec, mu, comp, t](const Vec3& p, double) {
                return spec.analytic(mu, p, t, comp);
            }, t));
        series.values.push_back(std::move(fields));
    }
    return series;
}

std::string error_report_text(const bench::ErrorReport& report) {
    std::ostringstream out;
    for (std::size_t c = 0; c < report.component.size(); ++c)
        out << "component " << c << " relative l2 " << fmt(report.component[c])
            << (report.component_absolute[c] ? " (absolute)" : "") << "\n";
    out << "magnitude relative l2 " << fmt(report.magnitude) << (report.magnitude_absolute ? " (absolute)" : "")
        << "\n";
    return out.str();
}

void write_singular_values(const std::string& path, const rom::RomBundle& bundle) {
    std::vector<std::string> header{"component", "index", "sigma"};
    std::vector<std::vector<double>> rows;
    for (std::size_t c = 0; c < bundle.components.size(); ++c) {
        const auto& sv = bundle.components[c].basis.singular_values;
        for (std::size_t i = 0; i < sv.size(); ++i)
            rows.push_back({static_cast<double>(c), static_cast<double>(i), sv[i]});
    }
    io::write_csv(path, header, rows);
}

// Shared by pinn-direct and pinn-inverse: the collocation geometry either
// comes from an ingested summary or defaults to the unit box.
mesh::SurfaceModel pinn_surface(const std::string& model_path) {
    if (!model_path.empty()) {
        auto model = mesh::ingest_model_summary(read_text(model_path));
        mesh::require_watertight(model);
        return model;
    }
    return mesh::surface_from_mesh(mesh::structured_box_mesh(1));
}

pinn::Preset pick_preset(const std::string& problem, const std::string& recipe, const std::string& variant) {
    std::string key = problem;
    if (problem == "tp4") key += "-" + variant;
    return recipe == "reference" ? pinn::reference_preset(key) : pinn::desk_preset(key);
}

struct CommonPinnFlags {
    std::string problem;
    std::string recipe = "desk";
    std::string variant = "physics";
    std::string model_path;
    std::string out;
    bool force = false;
    int epochs = 0;
    std::uint64_t seed = 1;
};

int cmd_ingest(const std::string& model_path, const std::string& out, bool force, int collocation, int boundary,
               int initial, double horizon, std::uint64_t seed) {
    ensure_out_dir(out, force);
    auto model = mesh::ingest_model_summary(read_text(model_path));
    mesh::require_watertight(model);
    write_text((fs::path(out) / "canonical.json").string(), mesh::serialize_model_summary(model));
    write_text((fs::path(out) / "summary.txt").string(), model_summary_text(model));
    auto plan = mesh::sample_plan(model, {collocation, boundary, initial}, horizon, seed);
    write_samples_csv((fs::path(out) / "samples.csv").string(), plan);
    std::printf("ingested %zu objects, %d interior and %d boundary samples\n", model.objects.size(), collocation,
                boundary);
    return 0;
}

int cmd_sample(const std::string& model_path, const MeshSource& src, const std::string& out, bool force,
               int collocation, int boundary, int initial, double horizon, std::uint64_t seed) {
    ensure_out_dir(out, force);
    mesh::SurfaceModel surface;
    if (!model_path.empty()) {
        surface = mesh::ingest_model_summary(read_text(model_path));
        mesh::require_watertight(surface);
    } else {
        surface = mesh::surface_from_mesh(load_mesh(src));
    }
    auto plan = mesh::sample_plan(surface, {collocation, boundary, initial}, horizon, seed);
    write_samples_csv((fs::path(out) / "samples.csv").string(), plan);
    std::printf("sampled %d collocation, %d boundary, %d initial points\n", collocation, boundary, initial);
    return 0;
}

int cmd_fem_solve(const std::string& problem, const MeshSource& src, const std::string& mu_text, int steps,
                  int sites, int samples, std::uint64_t seed, const std::string& out, bool force) {
    ensure_out_dir(out, force);
    const auto& spec = bench::get(problem);
    auto m = load_mesh(src);
    mesh::validate(m);
    Vec3 mu = mu_text.empty() ? spec.reference_mu : parse_vec3(mu_text, "--mu");

    double t0_constant = 0.0;
    if (!spec.initial && spec.time_dependent) {
        auto fixture = bench::make_sensor_fixture(mesh::surface_from_mesh(m), sites, samples, seed);
        t0_constant = fixture.t0_mean;
    }
    auto series = solve_problem(spec, m, mu, steps, t0_constant);
    auto bundle = io::write_xdmf((fs::path(out) / "solution").string(), m, series);

    std::ostringstream meta;
    meta << "problem " << problem << "\n";
    meta << "nodes " << m.nodes.size() << "\n";
    meta << "tets " << m.tets.size() << "\n";
    meta << "mu " << fmt(mu.x) << "," << fmt(mu.y) << "," << fmt(mu.z) << "\n";
    if (spec.time_dependent) meta << "steps " << steps << "\n";
    write_text((fs::path(out) / "meta.txt").string(), meta.str());

    if (spec.has_analytic) {
        auto exact = analytic_series(spec, m, mu, series.times);
        auto report = bench::l2_relative_error(series, exact);
        write_text((fs::path(out) / "error.txt").string(), error_report_text(report));
        std::printf("solved %s on %zu nodes, magnitude error %s\n", problem.c_str(), m.nodes.size(),
                    fmt(report.magnitude).c_str());
    } else {
        std::printf("solved %s on %zu nodes\n", problem.c_str(), m.nodes.size());
    }
    std::printf("wrote %s\n", bundle.xml_path.c_str());
    return 0;
}

int cmd_rom_offline(const std::string& problem, const MeshSource& src, int snapshots, double tolerance, int k,
                    int steps, std::uint64_t seed, const std::string& out, bool force) {
    ensure_out_dir(out, force);
    auto m = load_mesh(src);
    mesh::validate(m);
    auto samples = rom::sample_parameters(snapshots, seed);
    rom::OfflineConfig config;
    config.tolerance = tolerance;
    config.forced_k = k;
    config.time_steps = steps;
    auto bundle = rom::offline(problem, m, samples, config);
    bundle.seed = seed;
    rom::save_bundle(out, bundle);
    io::write_msh((fs::path(out) / "mesh.msh").string(), m);
    write_singular_values((fs::path(out) / "singular_values.csv").string(), bundle);
    for (std::size_t c = 0; c < bundle.components.size(); ++c)
        std::printf("component %zu: %d modes from %d snapshots\n", c, bundle.components[c].basis.k(), snapshots);
    return 0;
}

// The bundle directory is self-contained: mesh.msh travels with the reduced
// operators so the online stage needs no mesh flags.
int cmd_rom_online(const std::string& bundle_dir, const std::string& mu_text, const std::string& out, bool force) {
    ensure_out_dir(out, force);
    auto bundle = rom::load_bundle(bundle_dir);
    auto m = io::parse_msh((fs::path(bundle_dir) / "mesh.msh").string());
    const auto& spec = bench::get(bundle.problem_id);
    Vec3 mu = parse_vec3(mu_text, "--mu");

    auto sys = fem::assemble(m, spec.form, nullptr);
    fem::apply_dirichlet(sys, m, [](const Vec3&, double) { return 0.0; });
    rom::OnlineContext ctx{&spec, &m, &sys};
    auto series = rom::online(bundle, ctx, mu);
    auto xdmf = io::write_xdmf((fs::path(out) / "solution").string(), m, series);
    std::printf("lifted %zu time frames at mu (%s, %s, %s)\n", series.times.size(), fmt(mu.x).c_str(),
                fmt(mu.y).c_str(), fmt(mu.z).c_str());
    std::printf("wrote %s\n", xdmf.xml_path.c_str());
    return 0;
}

int cmd_pinn_direct(const CommonPinnFlags& flags, int sites, int samples, int export_divisions) {
    ensure_out_dir(flags.out, flags.force);
    const auto& spec = bench::get(flags.problem);
    auto preset = pick_preset(flags.problem, flags.recipe, flags.variant);
    auto config = preset.config;
    if (flags.epochs > 0) config.epochs = flags.epochs;
    config.seed = flags.seed;

    auto surface = pinn_surface(flags.model_path);
    mesh::SampleCounts counts{config.collocation, config.boundary, config.initial};
    auto plan = mesh::sample_plan(surface, counts, spec.time_dependent ? spec.horizon : 0.0, flags.seed + 100);

    auto model = pinn::make_model(spec.time_dependent ? 4 : 3, preset.hidden, spec.components, preset.arch,
                                  flags.seed + 1000);

    pinn::Observations obs;
    const pinn::Observations* obs_ptr = nullptr;
    if (config.w_data > 0.0) {
        if (spec.has_analytic) {
            obs = pinn::synthetic_observations(flags.problem, spec.reference_mu, config.data, flags.seed + 200);
        } else {
            auto fixture = bench::make_sensor_fixture(surface, sites, samples, flags.seed + 300);
            obs = pinn::sensor_observations(fixture);
            model.hard.active = true;
            model.hard.t0 = fixture.t0_mean;
            config.data = static_cast<int>(obs.points.size());
        }
        obs_ptr = &obs;
    }

    auto result = pinn::train(model, flags.problem, config, plan, obs_ptr);
    pinn::save_run(flags.out, result.model, config, result);

    auto box = mesh::structured_box_mesh(export_divisions);
    std::vector<double> times;
    if (spec.time_dependent)
        for (int i = 0; i <= 10; ++i) times.push_back(spec.horizon * i / 10.0);
    else
        times.push_back(0.0);
    auto series = pinn::evaluate_on_mesh(result.model, box, times);
    io::write_xdmf((fs::path(flags.out) / "solution").string(), box, series);

    if (spec.has_analytic) {
        auto exact = analytic_series(spec, box, spec.reference_mu, times);
        auto report = bench::l2_relative_error(series, exact);
        write_text((fs::path(flags.out) / "error.txt").string(), error_report_text(report));
        std::printf("final loss %s, magnitude error %s\n", fmt(result.history.back().total()).c_str(),
                    fmt(report.magnitude).c_str());
    } else {
        std::printf("final loss %s\n", fmt(result.history.back().total()).c_str());
    }
    return 0;
}

int cmd_pinn_inverse(const CommonPinnFlags& flags, const std::string& mu_data_text, int data_override,
                     int time_instants) {
    ensure_out_dir(flags.out, flags.force);
    const auto& spec = bench::get(flags.problem);
    auto preset = pick_preset(flags.problem, flags.recipe, flags.variant);
    auto config = preset.config;
    if (flags.epochs > 0) config.epochs = flags.epochs;
    config.seed = flags.seed;

    Vec3 mu_data = mu_data_text.empty() ? spec.reference_mu : parse_vec3(mu_data_text, "--mu-data");
    const int data_count = data_override > 0 ? data_override : config.data;
    config.data = data_count;
    if (time_instants < 0) time_instants = spec.time_dependent ? 21 : 0;

    auto surface = pinn_surface(flags.model_path);
    mesh::SampleCounts counts{config.collocation, config.boundary, config.initial};
    auto plan = mesh::sample_plan(surface, counts, spec.time_dependent ? spec.horizon : 0.0, flags.seed + 100);
    auto obs = pinn::synthetic_observations(flags.problem, mu_data, data_count, flags.seed + 200, time_instants);
    auto model = pinn::make_model(spec.time_dependent ? 4 : 3, preset.hidden, spec.components, preset.arch,
                                  flags.seed + 1000);

    auto inverse = pinn::identify_parameters(model, flags.problem, plan, obs, config, &mu_data);
    pinn::save_run(flags.out, inverse.training.model, config, inverse.training, &inverse);

    for (std::size_t i = 0; i < inverse.names.size(); ++i)
        std::printf("%s = %s (relative error %s)%s\n", inverse.names[i].c_str(), fmt(inverse.estimates[i]).c_str(),
                    fmt(inverse.rel_error[i]).c_str(), inverse.identifiable[i] ? "" : " [not identifiable]");
    return 0;
}

int cmd_export(const std::string& network_path, const MeshSource& src, const std::string& times_text,
               const std::string& out, bool force) {
    ensure_out_dir(out, force);
    auto model = pinn::load_model(network_path);
    auto m = load_mesh(src);
    mesh::validate(m);
    auto times = parse_times(times_text);
    auto series = pinn::evaluate_on_mesh(model, m, times);
    auto bundle = io::write_xdmf((fs::path(out) / "solution").string(), m, series);
    std::printf("wrote %s (%zu frames)\n", bundle.xml_path.c_str(), times.size());
    return 0;
}

// Assembles the human-readable endpoint of a run directory from whatever
// artifacts are present; identical inputs give byte-identical reports.
std::string build_report(const std::string& run_dir) {
    std::ostringstream out;
    fs::path dir(run_dir);
    if (fs::exists(dir / "config")) {
        out << "[configuration]\n" << read_text((dir / "config").string());
    }
    if (fs::exists(dir / "loss_history.csv")) {
        auto text = read_text((dir / "loss_history.csv").string());
        std::vector<std::string> lines;
        std::stringstream ss(text);
        std::string line;
        while (std::getline(ss, line))
            if (!line.empty()) lines.push_back(line);
        out << "[training]\n";
        out << "epochs " << (lines.size() - 1) << "\n";
        if (lines.size() > 1) {
            out << "first " << lines[1] << "\n";
            out << "last  " << lines.back() << "\n";
        }
    }
    if (fs::exists(dir / "estimates")) {
        out << "[estimates]\n" << read_text((dir / "estimates").string());
    }
    if (fs::exists(dir / "rom_errors.csv")) {
        out << "[reduced order errors]\n" << read_text((dir / "rom_errors.csv").string());
    }
    if (out.str().empty()) throw std::runtime_error("no recognizable artifacts under " + run_dir);
    return out.str();
}

int cmd_report(const std::string& run_dir, const std::string& out_file) {
    auto text = build_report(run_dir);
    if (out_file.empty())
        std::fputs(text.c_str(), stdout);
    else
        write_text(out_file, text);
    return 0;
}

// ingest -> sample -> reduce -> identify -> lift at the estimate -> export:
// the whole workflow against one problem, everything under one directory.
int cmd_full_pipeline(const std::string& problem, const MeshSource& src, int snapshots, double tolerance, int k,
                      int steps, const std::string& recipe, int epochs, std::uint64_t seed, const std::string& out,
                      bool force) {
    ensure_out_dir(out, force);
    const auto& spec = bench::get(problem);
    auto m = load_mesh(src);
    mesh::validate(m);

    // ingest: the boundary surface doubles as the uploaded asset
    auto surface = mesh::surface_from_mesh(m);
    fs::create_directories(fs::path(out) / "ingest");
    write_text((fs::path(out) / "ingest" / "canonical.json").string(), mesh::serialize_model_summary(surface));
    write_text((fs::path(out) / "ingest" / "summary.txt").string(), model_summary_text(surface));

    auto preset = recipe == "reference" ? pinn::reference_preset(problem) : pinn::desk_preset(problem);
    auto config = preset.config;
    if (epochs > 0) config.epochs = epochs;
    config.seed = seed;

    // sample: the training geometry for the identification stage
    mesh::SampleCounts counts{config.collocation, config.boundary, config.initial};
    auto plan = mesh::sample_plan(surface, counts, spec.time_dependent ? spec.horizon : 0.0, seed + 100);
    write_samples_csv((fs::path(out) / "samples.csv").string(), plan);

    // reduce: offline POD over parameter draws
    auto draws = rom::sample_parameters(snapshots, seed);
    rom::OfflineConfig rom_config;
    rom_config.tolerance = tolerance;
    rom_config.forced_k = k;
    rom_config.time_steps = steps;
    auto bundle = rom::offline(problem, m, draws, rom_config);
    bundle.seed = seed;
    fs::create_directories(fs::path(out) / "rom");
    rom::save_bundle((fs::path(out) / "rom").string(), bundle);
    io::write_msh((fs::path(out) / "rom" / "mesh.msh").string(), m);
    write_singular_values((fs::path(out) / "rom" / "singular_values.csv").string(), bundle);

    // identify: recover the parameters from synthetic boundary data
    int time_instants = spec.time_dependent ? 21 : 0;
    auto obs = pinn::synthetic_observations(problem, spec.reference_mu, config.data, seed + 200, time_instants);
    auto model = pinn::make_model(spec.time_dependent ? 4 : 3, preset.hidden, spec.components, preset.arch,
                                  seed + 1000);
    auto inverse = pinn::identify_parameters(model, problem, plan, obs, config, &spec.reference_mu);
    fs::create_directories(fs::path(out) / "inverse");
    pinn::save_run((fs::path(out) / "inverse").string(), inverse.training.model, config, inverse.training, &inverse);

    // lift: reduced solve at the estimated parameters, exported as a field
    Vec3 mu_hat{inverse.estimates[0], inverse.estimates[1], inverse.estimates[2]};
    auto sys = fem::assemble(m, spec.form, nullptr);
    fem::apply_dirichlet(sys, m, [](const Vec3&, double) { return 0.0; });
    rom::OnlineContext ctx{&spec, &m, &sys};
    auto lifted = rom::online(bundle, ctx, mu_hat);
    fs::create_directories(fs::path(out) / "field");
    io::write_xdmf((fs::path(out) / "field" / "solution").string(), m, lifted);

    // reduced-versus-full fidelity on held-out draws
    auto held_out = rom::sample_parameters(5, seed + 400, false);
    auto curve = rom::error_analysis(bundle, ctx, held_out, bundle.components[0].basis.k());
    {
        std::vector<std::string> header{"k", "mean_abs", "max_abs", "mean_rel", "max_rel"};
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < curve.k.size(); ++i)
            rows.push_back({static_cast<double>(curve.k[i]), curve.mean_abs[i], curve.max_abs[i], curve.mean_rel[i],
                            curve.max_rel[i]});
        io::write_csv((fs::path(out) / "inverse" / "rom_errors.csv").string(), header, rows);
    }

    write_text((fs::path(out) / "report.txt").string(), build_report((fs::path(out) / "inverse").string()));
    for (std::size_t i = 0; i < inverse.names.size(); ++i)
        std::printf("%s = %s (relative error %s)\n", inverse.names[i].c_str(), fmt(inverse.estimates[i]).c_str(),
                    fmt(inverse.rel_error[i]).c_str());
    std::printf("reduced max relative error %s\n", fmt(curve.max_rel.back()).c_str());
    std::printf("wrote %s\n", (fs::path(out) / "report.txt").string().c_str());
    return 0;
}

void apply_thread_cap() {
    if (const char* env = std::getenv("HSML_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) Eigen::setNbThreads(n);
    }
}

}  // namespace

int run(int argc, const char* const* argv) {
    apply_thread_cap();

    CLI::App app{"heritage structure simulation toolkit"};
    app.require_subcommand(1);

    // shared state filled by whichever subcommand parses
    std::string model_path, out, mu_text, mu_data_text, bundle_dir, run_dir, out_file, network_path;
    std::string times_text = "0";
    MeshSource src;
    bool force = false;
    int collocation = 200, boundary = 100, initial = 0;
    int steps = 20, snapshots = 100, k = 0, sites = 100, samples = 99;
    int epochs = 0, data_override = 0, time_instants = -1, export_divisions = 8;
    double horizon = 0.0, tolerance = 1e-6;
    std::uint64_t seed = 1;
    CommonPinnFlags pf;

    auto add_out = [&](CLI::App* sub) {
        sub->add_option("--out", out, "output directory")->required();
        sub->add_flag("--force", force, "reuse a non-empty output directory");
    };
    auto add_mesh_source = [&](CLI::App* sub, bool required) {
        auto* box = sub->add_option("--mesh", src.box, "procedural mesh, e.g. box:8");
        auto* file = sub->add_option("--msh", src.msh, "mesh file path");
        box->excludes(file);
        file->excludes(box);
        if (required) {
            // one of the two must be present; CLI11 checks after parse
            sub->parse_complete_callback([&src]() {
                if (src.box.empty() && src.msh.empty())
                    throw CLI::RequiredError("--mesh or --msh");
            });
        }
    };

    auto* ingest = app.add_subcommand("ingest", "validate a model summary and write sampling tables");
    ingest->add_option("--model", model_path, "model summary JSON")->required();
    add_out(ingest);
    ingest->add_option("--collocation", collocation, "interior sample count");
    ingest->add_option("--boundary", boundary, "boundary sample count");
    ingest->add_option("--initial", initial, "initial-slice sample count");
    ingest->add_option("--horizon", horizon, "time horizon for sample times");
    ingest->add_option("--seed", seed, "sampling seed");
    ingest->callback([&]() { cmd_ingest(model_path, out, force, collocation, boundary, initial, horizon, seed); });

    auto* sample = app.add_subcommand("sample", "draw collocation and boundary points");
    sample->add_option("--model", model_path, "model summary JSON");
    add_mesh_source(sample, false);
    add_out(sample);
    sample->add_option("--collocation", collocation, "interior sample count");
    sample->add_option("--boundary", boundary, "boundary sample count");
    sample->add_option("--initial", initial, "initial-slice sample count");
    sample->add_option("--horizon", horizon, "time horizon for sample times");
    sample->add_option("--seed", seed, "sampling seed");
    sample->callback([&]() {
        if (model_path.empty() && src.box.empty() && src.msh.empty())
            throw std::runtime_error("sample needs --model, --mesh, or --msh");
        cmd_sample(model_path, src, out, force, collocation, boundary, initial, horizon, seed);
    });

    auto* fem_solve = app.add_subcommand("fem-solve", "full-order solve of a registered problem");
    fem_solve->add_option("--problem", pf.problem, "problem id")->required();
    add_mesh_source(fem_solve, true);
    add_out(fem_solve);
    fem_solve->add_option("--mu", mu_text, "parameter triple a,b,c");
    fem_solve->add_option("--steps", steps, "backward Euler steps");
    fem_solve->add_option("--sites", sites, "sensor sites for data-driven problems");
    fem_solve->add_option("--samples", samples, "sensor time samples");
    fem_solve->add_option("--seed", seed, "sensor fixture seed");
    fem_solve->callback([&]() { cmd_fem_solve(pf.problem, src, mu_text, steps, sites, samples, seed, out, force); });

    auto* rom_offline = app.add_subcommand("rom-offline", "snapshot collection and reduction");
    rom_offline->add_option("--problem", pf.problem, "problem id")->required();
    add_mesh_source(rom_offline, true);
    add_out(rom_offline);
    rom_offline->add_option("--snapshots", snapshots, "parameter draws");
    rom_offline->add_option("--tolerance", tolerance, "energy tail tolerance");
    rom_offline->add_option("--k", k, "forced basis size (0 = by tolerance)");
    rom_offline->add_option("--steps", steps, "time steps for unsteady problems");
    rom_offline->add_option("--seed", seed, "parameter sampling seed");
    rom_offline->callback(
        [&]() { cmd_rom_offline(pf.problem, src, snapshots, tolerance, k, steps, seed, out, force); });

    auto* rom_online = app.add_subcommand("rom-online", "reduced solve lifted to the mesh");
    rom_online->add_option("--bundle", bundle_dir, "rom-offline output directory")->required();
    rom_online->add_option("--mu", mu_text, "query parameters a,b,c")->required();
    add_out(rom_online);
    rom_online->callback([&]() { cmd_rom_online(bundle_dir, mu_text, out, force); });

    auto* pinn_direct = app.add_subcommand("pinn-direct", "train a network on residual and data terms");
    pinn_direct->add_option("--problem", pf.problem, "problem id")->required();
    pinn_direct->add_option("--recipe", pf.recipe, "desk or reference hyperparameters")
        ->check(CLI::IsMember({"desk", "reference"}));
    pinn_direct->add_option("--variant", pf.variant, "physics or data recipe (two-component reaction)")
        ->check(CLI::IsMember({"physics", "data"}));
    pinn_direct->add_option("--model", pf.model_path, "model summary JSON for the geometry");
    pinn_direct->add_option("--epochs", pf.epochs, "override the preset epoch count");
    pinn_direct->add_option("--seed", pf.seed, "training seed");
    pinn_direct->add_option("--sites", sites, "sensor sites for data-driven problems");
    pinn_direct->add_option("--samples", samples, "sensor time samples");
    pinn_direct->add_option("--export-divisions", export_divisions, "box divisions for the exported field");
    add_out(pinn_direct);
    pinn_direct->callback([&]() {
        pf.out = out;
        pf.force = force;
        cmd_pinn_direct(pf, sites, samples, export_divisions);
    });

    auto* pinn_inverse = app.add_subcommand("pinn-inverse", "recover physical parameters from data");
    pinn_inverse->add_option("--problem", pf.problem, "problem id")->required();
    pinn_inverse->add_option("--recipe", pf.recipe, "desk or reference hyperparameters")
        ->check(CLI::IsMember({"desk", "reference"}));
    pinn_inverse->add_option("--model", pf.model_path, "model summary JSON for the geometry");
    pinn_inverse->add_option("--epochs", pf.epochs, "override the preset epoch count");
    pinn_inverse->add_option("--seed", pf.seed, "training seed");
    pinn_inverse->add_option("--mu-data", mu_data_text, "parameters generating the synthetic data");
    pinn_inverse->add_option("--data", data_override, "override the preset observation count");
    pinn_inverse->add_option("--time-instants", time_instants, "observation time grid (-1 = preset)");
    add_out(pinn_inverse);
    pinn_inverse->callback([&]() {
        pf.out = out;
        pf.force = force;
        cmd_pinn_inverse(pf, mu_data_text, data_override, time_instants);
    });

    auto* full = app.add_subcommand("full-pipeline", "ingest, reduce, identify, lift, and report");
    full->add_option("--problem", pf.problem, "problem id")->required();
    add_mesh_source(full, true);
    add_out(full);
    full->add_option("--snapshots", snapshots, "parameter draws for the reduction");
    full->add_option("--tolerance", tolerance, "energy tail tolerance");
    full->add_option("--k", k, "forced basis size (0 = by tolerance)");
    full->add_option("--steps", steps, "time steps for unsteady problems");
    full->add_option("--recipe", pf.recipe, "desk or reference hyperparameters")
        ->check(CLI::IsMember({"desk", "reference"}));
    full->add_option("--epochs", epochs, "override the preset epoch count");
    full->add_option("--seed", seed, "seed for sampling and training");
    full->callback([&]() {
        cmd_full_pipeline(pf.problem, src, snapshots, tolerance, k, steps, pf.recipe, epochs, seed, out, force);
    });

    auto* exp = app.add_subcommand("export", "evaluate a saved network on a mesh as XDMF");
    exp->add_option("--network", network_path, "saved model file")->required();
    add_mesh_source(exp, true);
    exp->add_option("--times", times_text, "comma-separated evaluation times");
    add_out(exp);
    exp->callback([&]() { cmd_export(network_path, src, times_text, out, force); });

    auto* report = app.add_subcommand("report", "summarize a run directory");
    report->add_option("--run", run_dir, "run directory")->required();
    report->add_option("--to", out_file, "write to a file instead of stdout");
    report->callback([&]() { cmd_report(run_dir, out_file); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        std::fprintf(stderr, "%s", app.help().c_str());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

int run(const std::vector<std::string>& args) {
    std::vector<std::string> full{"hsml"};
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : full) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace hsml::cli
