#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "hsml/common.hpp"
#include "hsml/fem.hpp"
#include "hsml/mesh.hpp"

namespace hsml::bench {

// Closed-form pieces of the benchmark problems. Templated on the scalar type
// so the exact same expressions drive numeric evaluation (double) and graph
// construction (ad::Expr); keeping one source of truth here is what makes the
// residual checks between solvers meaningful.
namespace formulas {

inline constexpr double pi = std::numbers::pi;

template <class T>
T tp1_solution(const T& l, const T& a, const T& b, const T& x, const T& y, const T& z) {
    using std::cos;
    using std::sin;
    return l * x * cos(a * pi * y) * sin(b * pi * z);
}

template <class T>
T tp1_forcing(const T& l, const T& a, const T& b, const T& x, const T& y, const T& z) {
    return -(a * a + b * b) * (pi * pi) * tp1_solution(l, a, b, x, y, z);
}

template <class T>
T tp2_solution(int comp, const T& l, const T& a, const T& b, const T& x, const T& y, const T& z, const T& t) {
    using std::exp;
    if (comp == 0) return exp(l * t) + a * x + b * y + z;
    return exp(l * t) + a * x * x + b * y * y + z * z;
}

template <class T>
T tp2_forcing(int comp, const T& l, const T& a, const T& b, const T& t) {
    using std::exp;
    if (comp == 0) return l * exp(l * t);
    return l * exp(l * t) - (a + b + 1.0) * 2.0;
}

template <class T>
T tp4_solution(int comp, const T& x, const T& y, const T& z) {
    using std::exp;
    if (comp == 0) return exp(x + y);
    return x * x - z;
}

// component 0 reacts to its own concentration; `u1 * 0.0` keeps the constant
// branch expressible for graph scalars too
template <class T>
T tp4_forcing(int comp, const T& u1) {
    if (comp == 0) return u1 * 2.0;
    return u1 * 0.0 + 2.0;
}

// synthetic sensor readings for the monitoring problem: a daily cycle with a
// smooth per-location amplitude in [0.8, 1.2] plus a height offset
inline double tp3_sensor_temperature(const Vec3& p, double t) {
    double amplitude = 1.0 + 0.2 * std::sin(pi * p.x) * std::cos(pi * p.y);
    return 20.0 + 2.0 * std::sin(2.0 * pi * t) * amplitude + 0.5 * p.z;
}

}  // namespace formulas

// One registered benchmark problem. Components are indexed from 0. The
// forcing closure receives the local solution values through `u` (length =
// components) when `self_coupled` is set, nullptr otherwise; time is ignored
// by steady problems. tp3 carries no analytic solution and no initial
// closure: its initial state is the data-derived constant from the sensor
// fixture and its reference is a full-order solve.
struct ProblemSpec {
    std::string id;
    std::string title;
    int components = 1;
    bool time_dependent = false;
    bool has_analytic = true;
    bool self_coupled = false;
    bool parametric = false;
    fem::PdeForm form = fem::PdeForm::poisson;
    double horizon = 0.0;
    Vec3 reference_mu{0.0, 0.0, 0.0};
    Vec3 param_lo{0.0, 0.0, 0.0};
    Vec3 param_hi{1.0, 1.0, 1.0};

    std::function<double(const Vec3& mu, const Vec3& p, double t, int comp, const double* u)> forcing;
    std::function<double(const Vec3& mu, const Vec3& p, double t, int comp)> boundary;
    std::function<double(const Vec3& mu, const Vec3& p, int comp)> initial;
    std::function<double(const Vec3& mu, const Vec3& p, double t, int comp)> analytic;
};

// registry lookup; throws std::invalid_argument for unknown ids
const ProblemSpec& get(const std::string& id);
std::vector<std::string> problem_ids();

// Relative discrete L2 distance between two field series, per component and
// for the per-node vector magnitude. When `mass` is given the nodal norm is
// mass-weighted. A vanishing reference norm is reported as an absolute error
// with the matching flag set.
struct ErrorReport {
    std::vector<double> component;
    std::vector<bool> component_absolute;
    double magnitude = 0.0;
    bool magnitude_absolute = false;
};
ErrorReport l2_relative_error(const fem::FieldSeries& a, const fem::FieldSeries& b,
                              const fem::SpMat* mass = nullptr);

// Plugs the registered analytic solution into the strong form of the operator
// with automatic differentiation and returns the largest absolute residual
// over `points` random probes (interior, random time for unsteady problems).
// Also verifies the boundary closure against the analytic values. Throws for
// problems without an analytic solution.
double manufactured_residual(const ProblemSpec& spec, const Vec3& mu, int points, std::uint64_t seed);

// Fixed sensor sites on the model boundary sampled once, then one reading per
// site per time on the uniform grid t_j = j/(samples-1). The first sample
// feeds the initial condition as its spatial mean; later samples are the
// training data.
struct SensorFixture {
    std::vector<Vec3> sites;
    std::vector<double> times;
    std::vector<std::vector<double>> readings;  // [time][site]
    double t0_mean = 0.0;
};
SensorFixture make_sensor_fixture(const mesh::SurfaceModel& model, int sites, int samples, std::uint64_t seed);

}  // namespace hsml::bench
