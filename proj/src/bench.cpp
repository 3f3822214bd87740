#include "hsml/bench.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "hsml/autodiff.hpp"

namespace hsml::bench {

namespace {

using formulas::tp1_forcing;
using formulas::tp1_solution;
using formulas::tp2_forcing;
using formulas::tp2_solution;
using formulas::tp3_sensor_temperature;
using formulas::tp4_forcing;
using formulas::tp4_solution;

std::map<std::string, ProblemSpec> build_registry() {
    std::map<std::string, ProblemSpec> reg;

    {
        ProblemSpec s;
        s.id = "tp1";
        s.title = "steady diffusion with parametric oscillatory loading";
        s.components = 1;
        s.parametric = true;
        s.form = fem::PdeForm::poisson;
        s.reference_mu = {0.1, 0.2, 0.5};
        s.forcing = [](const Vec3& mu, const Vec3& p, double, int, const double*) {
            return tp1_forcing(mu.x, mu.y, mu.z, p.x, p.y, p.z);
        };
        s.boundary = [](const Vec3& mu, const Vec3& p, double, int) {
            return tp1_solution(mu.x, mu.y, mu.z, p.x, p.y, p.z);
        };
        s.analytic = s.boundary;
        reg[s.id] = std::move(s);
    }

    {
        ProblemSpec s;
        s.id = "tp2";
        s.title = "two-component heating with time-dependent sources";
        s.components = 2;
        s.time_dependent = true;
        s.parametric = true;
        s.form = fem::PdeForm::heat;
        s.horizon = 1.0;
        s.reference_mu = {0.1, 0.2, 0.5};
        s.forcing = [](const Vec3& mu, const Vec3&, double t, int comp, const double*) {
            return tp2_forcing(comp, mu.x, mu.y, mu.z, t);
        };
        s.analytic = [](const Vec3& mu, const Vec3& p, double t, int comp) {
            return tp2_solution(comp, mu.x, mu.y, mu.z, p.x, p.y, p.z, t);
        };
        s.boundary = s.analytic;
        s.initial = [](const Vec3& mu, const Vec3& p, int comp) {
            return tp2_solution(comp, mu.x, mu.y, mu.z, p.x, p.y, p.z, 0.0);
        };
        reg[s.id] = std::move(s);
    }

    {
        ProblemSpec s;
        s.id = "tp3";
        s.title = "temperature monitoring from boundary sensor data";
        s.components = 1;
        s.time_dependent = true;
        s.has_analytic = false;
        s.form = fem::PdeForm::heat;
        s.horizon = 1.0;
        s.forcing = [](const Vec3&, const Vec3&, double, int, const double*) { return 0.0; };
        s.boundary = [](const Vec3&, const Vec3& p, double t, int) { return tp3_sensor_temperature(p, t); };
        // initial state is the data-derived constant (SensorFixture::t0_mean), so no closure here
        reg[s.id] = std::move(s);
    }

    {
        ProblemSpec s;
        s.id = "tp4";
        s.title = "steady diffusion-reaction pair";
        s.components = 2;
        s.self_coupled = true;
        s.form = fem::PdeForm::poisson;
        s.forcing = [](const Vec3&, const Vec3&, double, int comp, const double* u) {
            if (comp == 0) {
                if (!u) throw std::logic_error("tp4 forcing: component 0 needs the field value");
                return tp4_forcing(0, u[0]);
            }
            return tp4_forcing(1, 0.0);
        };
        s.boundary = [](const Vec3&, const Vec3& p, double, int comp) { return tp4_solution(comp, p.x, p.y, p.z); };
        s.analytic = s.boundary;
        reg[s.id] = std::move(s);
    }

    return reg;
}

const std::map<std::string, ProblemSpec>& registry() {
    static const std::map<std::string, ProblemSpec> reg = build_registry();
    return reg;
}

double weighted_sq(const Eigen::VectorXd& v, const fem::SpMat* mass) {
    return mass ? v.dot(*mass * v) : v.squaredNorm();
}

}  // namespace

const ProblemSpec& get(const std::string& id) {
    auto it = registry().find(id);
    if (it == registry().end()) throw std::invalid_argument("unknown problem id: " + id);
    return it->second;
}

std::vector<std::string> problem_ids() {
    std::vector<std::string> ids;
    for (const auto& [id, spec] : registry()) ids.push_back(id);
    return ids;
}

ErrorReport l2_relative_error(const fem::FieldSeries& a, const fem::FieldSeries& b, const fem::SpMat* mass) {
    if (a.times.size() != b.times.size() || a.values.size() != b.values.size() || a.values.empty())
        throw std::invalid_argument("l2_relative_error: time series shapes differ");
    const std::size_t ncomp = b.values[0].size();
    const Eigen::Index n = b.values[0][0].size();

    std::vector<double> num(ncomp, 0.0), den(ncomp, 0.0);
    double mag_num = 0.0, mag_den = 0.0;
    for (std::size_t ti = 0; ti < a.times.size(); ++ti) {
        if (a.values[ti].size() != ncomp || b.values[ti].size() != ncomp)
            throw std::invalid_argument("l2_relative_error: component counts differ");
        Eigen::VectorXd mag_a = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd mag_b = Eigen::VectorXd::Zero(n);
        for (std::size_t c = 0; c < ncomp; ++c) {
            const Eigen::VectorXd& va = a.values[ti][c];
            const Eigen::VectorXd& vb = b.values[ti][c];
            if (va.size() != n || vb.size() != n)
                throw std::invalid_argument("l2_relative_error: field lengths differ");
            num[c] += weighted_sq(va - vb, mass);
            den[c] += weighted_sq(vb, mass);
            mag_a.array() += va.array().square();
            mag_b.array() += vb.array().square();
        }
        mag_a = mag_a.cwiseSqrt();
        mag_b = mag_b.cwiseSqrt();
        mag_num += weighted_sq(mag_a - mag_b, mass);
        mag_den += weighted_sq(mag_b, mass);
    }

    ErrorReport report;
    for (std::size_t c = 0; c < ncomp; ++c) {
        bool absolute = den[c] <= 0.0;
        report.component.push_back(absolute ? std::sqrt(num[c]) : std::sqrt(num[c] / den[c]));
        report.component_absolute.push_back(absolute);
    }
    report.magnitude_absolute = mag_den <= 0.0;
    report.magnitude = report.magnitude_absolute ? std::sqrt(mag_num) : std::sqrt(mag_num / mag_den);
    return report;
}

double manufactured_residual(const ProblemSpec& spec, const Vec3& mu, int points, std::uint64_t seed) {
    if (!spec.has_analytic) throw std::invalid_argument("manufactured_residual: " + spec.id + " has no analytic solution");
    if (points < 1) throw std::invalid_argument("manufactured_residual: need at least one probe");

    Rng rng(seed);
    double worst = 0.0;

    for (int comp = 0; comp < spec.components; ++comp) {
        ad::ExprGraph g;
        ad::Expr x{&g, g.variable()};
        ad::Expr y{&g, g.variable()};
        ad::Expr z{&g, g.variable()};
        std::vector<int> spatial = {x.node, y.node, z.node};
        ad::Expr t{&g, g.constant(0.0)};
        if (spec.time_dependent) t = ad::Expr{&g, g.variable()};

        ad::Expr l{&g, g.constant(mu.x)};
        ad::Expr a{&g, g.constant(mu.y)};
        ad::Expr b{&g, g.constant(mu.z)};

        int res = -1;
        if (spec.id == "tp1") {
            ad::Expr u = tp1_solution(l, a, b, x, y, z);
            ad::Expr f = tp1_forcing(l, a, b, x, y, z);
            res = g.sub(g.laplacian(u.node, spatial), f.node);
        } else if (spec.id == "tp2") {
            ad::Expr u = tp2_solution(comp, l, a, b, x, y, z, t);
            ad::Expr f = tp2_forcing(comp, l, a, b, t);
            int dudt = g.grad(u.node, std::vector<int>{t.node})[0];
            res = g.sub(g.sub(dudt, g.laplacian(u.node, spatial)), f.node);
        } else if (spec.id == "tp4") {
            ad::Expr u = tp4_solution(comp, x, y, z);
            ad::Expr f = tp4_forcing(comp, u);
            res = g.sub(g.laplacian(u.node, spatial), f.node);
        } else {
            throw std::invalid_argument("manufactured_residual: no operator check for " + spec.id);
        }

        for (int i = 0; i < points; ++i) {
            std::vector<double> vals = {rng.uniform(), rng.uniform(), rng.uniform()};
            if (spec.time_dependent) vals.push_back(rng.uniform() * spec.horizon);
            worst = std::max(worst, std::abs(g.eval(res, vals)));

            Vec3 p{vals[0], vals[1], vals[2]};
            double tt = spec.time_dependent ? vals[3] : 0.0;
            worst = std::max(worst,
                             std::abs(spec.boundary(mu, p, tt, comp) - spec.analytic(mu, p, tt, comp)));
        }
    }
    return worst;
}

SensorFixture make_sensor_fixture(const mesh::SurfaceModel& model, int sites, int samples, std::uint64_t seed) {
    if (sites < 1 || samples < 2) throw std::invalid_argument("make_sensor_fixture: need sites >= 1 and samples >= 2");

    mesh::SampleCounts counts;
    counts.boundary = sites;
    auto plan = mesh::sample_plan(model, counts, 0.0, seed);

    SensorFixture fx;
    for (const auto& sp : plan.boundary) fx.sites.push_back(sp.x);
    for (int j = 0; j < samples; ++j) {
        double t = static_cast<double>(j) / (samples - 1);
        fx.times.push_back(t);
        std::vector<double> row;
        row.reserve(fx.sites.size());
        for (const auto& p : fx.sites) row.push_back(tp3_sensor_temperature(p, t));
        fx.readings.push_back(std::move(row));
    }
    for (double v : fx.readings[0]) fx.t0_mean += v;
    fx.t0_mean /= static_cast<double>(fx.sites.size());
    return fx;
}

}  // namespace hsml::bench
