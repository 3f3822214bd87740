#pragma once

// Shared test utilities. Oracles here deliberately avoid the code paths they
// check: derivatives are approximated from plain forward evaluations, and the
// reference evaluator is recursive where the library is iterative.

#include <cmath>
#include <map>
#include <vector>

#include "hsml/autodiff.hpp"
#include "hsml/common.hpp"

namespace testsupport {

// Central difference d/dx_vi using only forward evaluation.
inline double fd_first(const hsml::ad::ExprGraph& g, int out, std::vector<double> vals, std::size_t vi, double h) {
    vals[vi] += h;
    double fp = g.eval(out, vals);
    vals[vi] -= 2.0 * h;
    double fm = g.eval(out, vals);
    return (fp - fm) / (2.0 * h);
}

// Central second difference d2/dx_vi2 using only forward evaluation.
inline double fd_second(const hsml::ad::ExprGraph& g, int out, std::vector<double> vals, std::size_t vi, double h) {
    double f0 = g.eval(out, vals);
    vals[vi] += h;
    double fp = g.eval(out, vals);
    vals[vi] -= 2.0 * h;
    double fm = g.eval(out, vals);
    return (fp - 2.0 * f0 + fm) / (h * h);
}

// Reference evaluator: recursive on purpose, usable only on shallow graphs.
inline double eval_recursive(const hsml::ad::ExprGraph& g, int i, const std::map<int, double>& var_values) {
    using hsml::ad::Op;
    const auto& nd = g.node(i);
    switch (nd.op) {
        case Op::constant:
            return nd.payload;
        case Op::variable:
            return var_values.at(i);
        case Op::add:
            return eval_recursive(g, nd.a, var_values) + eval_recursive(g, nd.b, var_values);
        case Op::sub:
            return eval_recursive(g, nd.a, var_values) - eval_recursive(g, nd.b, var_values);
        case Op::mul:
            return eval_recursive(g, nd.a, var_values) * eval_recursive(g, nd.b, var_values);
        case Op::div:
            return eval_recursive(g, nd.a, var_values) / eval_recursive(g, nd.b, var_values);
        case Op::pow_const:
            return std::pow(eval_recursive(g, nd.a, var_values), nd.payload);
        case Op::exp:
            return std::exp(eval_recursive(g, nd.a, var_values));
        case Op::sin:
            return std::sin(eval_recursive(g, nd.a, var_values));
        case Op::cos:
            return std::cos(eval_recursive(g, nd.a, var_values));
        case Op::tanh:
            return std::tanh(eval_recursive(g, nd.a, var_values));
        case Op::neg:
            return -eval_recursive(g, nd.a, var_values);
    }
    return 0.0;
}

struct RandomGraphCase {
    hsml::ad::ExprGraph g;
    std::vector<int> vars;
    int output = -1;
    std::vector<double> values;
};

// Random well-conditioned graph: div denominators are bounded away from zero
// and exp arguments damped so central differences stay accurate.
inline RandomGraphCase make_random_graph(hsml::Rng& rng) {
    using hsml::ad::Op;
    RandomGraphCase c;
    std::size_t nvars = 1 + rng.index(3);
    std::vector<int> pool;
    for (std::size_t i = 0; i < nvars; ++i) {
        c.vars.push_back(c.g.variable());
        c.values.push_back(rng.uniform(-1.2, 1.2));
        pool.push_back(c.vars.back());
    }
    pool.push_back(c.g.constant(rng.uniform(0.3, 1.7)));

    std::size_t steps = 3 + rng.index(6);
    for (std::size_t s = 0; s < steps; ++s) {
        int a = pool[rng.index(pool.size())];
        int b = pool[rng.index(pool.size())];
        int node = -1;
        switch (rng.index(9)) {
            case 0:
                node = c.g.add(a, b);
                break;
            case 1:
                node = c.g.sub(a, b);
                break;
            case 2:
                node = c.g.mul(a, b);
                break;
            case 3:
                node = c.g.div(a, c.g.add(c.g.mul(b, b), c.g.constant(0.7)));
                break;
            case 4:
                node = c.g.sin(a);
                break;
            case 5:
                node = c.g.cos(a);
                break;
            case 6:
                node = c.g.tanh(a);
                break;
            case 7:
                node = c.g.exp(c.g.mul(c.g.constant(0.3), a));
                break;
            case 8:
                node = c.g.pow(a, rng.index(2) ? 2.0 : 3.0);
                break;
        }
        pool.push_back(node);
    }
    c.output = pool.back();
    return c;
}

}  // namespace testsupport
