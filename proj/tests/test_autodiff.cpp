#include "hsml/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <vector>

#include "doctest.h"
#include "hsml/common.hpp"
#include "support.hpp"

using namespace hsml;
using ad::ExprGraph;
using ad::Op;

TEST_CASE("second derivative of exp(2x) matches finite differences and closed form") {
    ExprGraph g;
    int x = g.variable();
    int f = g.exp(g.mul(g.constant(2.0), x));

    std::vector<double> at = {0.5};
    double fd = testsupport::fd_second(g, f, at, 0, 1e-4);

    int d1 = g.grad(f, std::array{x})[0];
    int d2 = g.grad(d1, std::array{x})[0];
    double ad2 = g.eval(d2, at);

    CHECK(std::abs(ad2 - fd) <= 1e-6 * std::abs(fd));
    CHECK(ad2 == doctest::Approx(4.0 * std::exp(1.0)).epsilon(1e-12));
}

TEST_CASE("build rejects malformed nodes") {
    ExprGraph g;
    int x = g.variable();
    CHECK_THROWS_AS(g.build(Op::add, std::array{x, 99}), std::invalid_argument);
    CHECK_THROWS_AS(g.build(Op::add, std::array{x}), std::invalid_argument);
    CHECK_THROWS_AS(g.build(Op::exp, std::array{-1}), std::invalid_argument);
    CHECK_THROWS_AS(g.grad(42, std::array{x}), std::invalid_argument);
}

TEST_CASE("iterative evaluation survives a 10000-deep chain") {
    ExprGraph g;
    int x = g.variable();
    int c = g.constant(1.0000001);
    int node = x;
    for (int i = 0; i < 10000; ++i) node = g.mul(node, c);
    double v = g.eval(node, std::array{2.0});
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(2.0 * std::pow(1.0000001, 10000)).epsilon(1e-12));

    // Reference recursive evaluator agrees on a shallow prefix of the chain.
    ExprGraph h;
    int y = h.variable();
    int d = h.constant(1.0000001);
    int short_node = y;
    for (int i = 0; i < 12; ++i) short_node = h.mul(short_node, d);
    std::map<int, double> vv{{y, 2.0}};
    CHECK(h.eval(short_node, std::array{2.0}) ==
          doctest::Approx(testsupport::eval_recursive(h, short_node, vv)).epsilon(1e-15));
}

TEST_CASE("laplacian equals the sum of per-axis grad-of-grad diagonals bitwise") {
    ExprGraph g;
    int x = g.variable(), y = g.variable(), z = g.variable();
    // u = x^2 y + sin(z) * x
    int u = g.add(g.mul(g.mul(x, x), y), g.mul(g.sin(z), x));
    std::array vars{x, y, z};

    int lap = g.laplacian(u, vars);

    double sum = 0.0;
    std::vector<double> at = {0.7, -0.3, 1.1};
    for (int v : vars) {
        int d1 = g.grad(u, std::array{v})[0];
        int d2 = g.grad(d1, std::array{v})[0];
        sum += g.eval(d2, at);
    }
    double lap_val = g.eval(lap, at);
    CHECK(std::memcmp(&lap_val, &sum, sizeof(double)) == 0);

    // closed form: u_xx = 2y, u_yy = 0, u_zz = -sin(z) x
    CHECK(lap_val == doctest::Approx(2.0 * at[1] - std::sin(at[2]) * at[0]).epsilon(1e-14));
}

TEST_CASE("gradients of random graphs match central finite differences") {
    Rng rng(20240817);
    int checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
        auto c = testsupport::make_random_graph(rng);
        auto g1 = c.g.grad(c.output, c.vars);
        for (std::size_t vi = 0; vi < c.vars.size(); ++vi) {
            double fd = testsupport::fd_first(c.g, c.output, c.values, vi, 1e-5);
            double ad1 = c.g.eval(g1[vi], c.values);
            double scale = std::max({1.0, std::abs(fd), std::abs(ad1)});
            CHECK(std::abs(ad1 - fd) <= 1e-5 * scale);
            ++checked;
        }
    }
    CHECK(checked > 300);
}

TEST_CASE("grad is linear in the output expression") {
    Rng rng(7);
    ExprGraph g;
    int x = g.variable(), y = g.variable();
    int f = g.mul(g.sin(x), y);
    int h = g.add(g.tanh(y), g.mul(x, x));
    double a = 2.25, b = -0.5;
    int combo = g.add(g.mul(g.constant(a), f), g.mul(g.constant(b), h));

    std::array vars{x, y};
    auto gc = g.grad(combo, vars);
    auto gf = g.grad(f, vars);
    auto gh = g.grad(h, vars);

    for (int t = 0; t < 20; ++t) {
        std::vector<double> at = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
        for (std::size_t i = 0; i < vars.size(); ++i) {
            double lhs = g.eval(gc[i], at);
            double rhs = a * g.eval(gf[i], at) + b * g.eval(gh[i], at);
            CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
        }
    }
}

TEST_CASE("evaluation is deterministic bit for bit") {
    Rng rng(99);
    auto c = testsupport::make_random_graph(rng);
    double v1 = c.g.eval(c.output, c.values);
    double v2 = c.g.eval(c.output, c.values);
    CHECK(std::memcmp(&v1, &v2, sizeof(double)) == 0);
}

TEST_CASE("grad with respect to an unused variable is zero") {
    ExprGraph g;
    int x = g.variable();
    int y = g.variable();
    int f = g.sin(x);
    auto d = g.grad(f, std::array{y});
    CHECK(g.eval(d[0], std::array{0.3, 0.9}) == 0.0);
}

TEST_CASE("differentiate bundles value, gradient, and second diagonal") {
    ExprGraph g;
    int x = g.variable(), y = g.variable();
    // f = exp(x) * sin(y)
    int f = g.mul(g.exp(x), g.sin(y));
    std::array vars{x, y};
    std::vector<double> at = {0.4, 1.3};

    auto bundle = ad::differentiate(g, f, vars, vars, at);
    double ex = std::exp(at[0]), sy = std::sin(at[1]), cy = std::cos(at[1]);
    CHECK(bundle.value == doctest::Approx(ex * sy).epsilon(1e-14));
    CHECK(bundle.first.at(x) == doctest::Approx(ex * sy).epsilon(1e-12));
    CHECK(bundle.first.at(y) == doctest::Approx(ex * cy).epsilon(1e-12));
    CHECK(bundle.second_diagonal.at(x) == doctest::Approx(ex * sy).epsilon(1e-12));
    CHECK(bundle.second_diagonal.at(y) == doctest::Approx(-ex * sy).epsilon(1e-12));
}

TEST_CASE("program forward matches graph eval and reverse matches finite differences") {
    Rng rng(31137);
    for (int trial = 0; trial < 120; ++trial) {
        auto c = testsupport::make_random_graph(rng);
        ad::Program prog(c.g, std::array{c.output}, c.vars);
        auto ws = prog.make_workspace();

        double out = 0.0;
        prog.forward(c.values, ws, std::span{&out, 1});
        CHECK(out == doctest::Approx(c.g.eval(c.output, c.values)).epsilon(1e-15));

        std::vector<double> grad(c.vars.size(), 0.0);
        double seed = 1.0;
        prog.reverse(std::span{&seed, 1}, ws, grad);
        for (std::size_t vi = 0; vi < c.vars.size(); ++vi) {
            double fd = testsupport::fd_first(c.g, c.output, c.values, vi, 1e-5);
            double scale = std::max({1.0, std::abs(fd), std::abs(grad[vi])});
            CHECK(std::abs(grad[vi] - fd) <= 1e-5 * scale);
        }
    }
}

TEST_CASE("program reverse leaves a clean adjoint buffer") {
    ExprGraph g;
    int x = g.variable(), y = g.variable();
    int f = g.mul(g.tanh(x), g.exp(y));
    ad::Program prog(g, std::array{f}, std::array{x, y});
    auto ws = prog.make_workspace();

    std::vector<double> at = {0.3, -0.8};
    double out = 0.0;
    std::vector<double> g1(2, 0.0), g2(2, 0.0);
    double seed = 1.0;
    prog.forward(at, ws, std::span{&out, 1});
    prog.reverse(std::span{&seed, 1}, ws, g1);
    prog.forward(at, ws, std::span{&out, 1});
    prog.reverse(std::span{&seed, 1}, ws, g2);
    CHECK(std::memcmp(g1.data(), g2.data(), sizeof(double) * 2) == 0);
}

TEST_CASE("program with several outputs accumulates the seeded combination") {
    ExprGraph g;
    int x = g.variable(), y = g.variable();
    int f1 = g.mul(x, y);
    int f2 = g.sin(x);
    ad::Program prog(g, std::array{f1, f2}, std::array{x, y});
    auto ws = prog.make_workspace();

    std::vector<double> at = {0.6, 1.4};
    std::vector<double> outs(2, 0.0);
    prog.forward(at, ws, outs);
    std::vector<double> seeds = {2.0, -3.0};
    std::vector<double> grad(2, 0.0);
    prog.reverse(seeds, ws, grad);

    // d(2 f1 - 3 f2)/dx = 2y - 3cos(x); d/dy = 2x
    CHECK(grad[0] == doctest::Approx(2.0 * at[1] - 3.0 * std::cos(at[0])).epsilon(1e-13));
    CHECK(grad[1] == doctest::Approx(2.0 * at[0]).epsilon(1e-13));
}

TEST_CASE("second derivatives of random graphs match central finite differences") {
    Rng rng(555);
    for (int trial = 0; trial < 100; ++trial) {
        auto c = testsupport::make_random_graph(rng);
        for (std::size_t vi = 0; vi < c.vars.size(); ++vi) {
            int d1 = c.g.grad(c.output, std::array{c.vars[vi]})[0];
            int d2 = c.g.grad(d1, std::array{c.vars[vi]})[0];
            double ad2 = c.g.eval(d2, c.values);
            double fd = testsupport::fd_second(c.g, c.output, c.values, vi, 1e-4);
            double scale = std::max({1.0, std::abs(fd), std::abs(ad2)});
            CHECK(std::abs(ad2 - fd) <= 2e-5 * scale);
        }
    }
}
