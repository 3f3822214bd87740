#include "hsml/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hsml::ad {

int arity(Op op) {
    switch (op) {
        case Op::constant:
        case Op::variable:
            return 0;
        case Op::exp:
        case Op::sin:
        case Op::cos:
        case Op::tanh:
        case Op::neg:
        case Op::pow_const:
            return 1;
        case Op::add:
        case Op::sub:
        case Op::mul:
        case Op::div:
            return 2;
    }
    throw std::invalid_argument("unknown op kind");
}

int ExprGraph::append(Op op, int a, int b, double payload) {
    nodes_.push_back(Node{op, a, b, payload});
    return static_cast<int>(nodes_.size()) - 1;
}

bool ExprGraph::is_const(int i, double v) const {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    return n.op == Op::constant && n.payload == v;
}

int ExprGraph::variable() {
    int id = append(Op::variable, -1, -1, 0.0);
    variables_.push_back(id);
    return id;
}

int ExprGraph::constant(double v) {
    if (std::isnan(v)) return append(Op::constant, -1, -1, v);
    auto it = constant_pool_.find(v);
    if (it != constant_pool_.end()) return it->second;
    int id = append(Op::constant, -1, -1, v);
    constant_pool_[v] = id;
    return id;
}

int ExprGraph::build(Op op, std::span<const int> operands, double payload) {
    int want = arity(op);
    if (static_cast<int>(operands.size()) != want)
        throw std::invalid_argument("operand count does not match op arity");
    for (int idx : operands)
        if (idx < 0 || idx >= static_cast<int>(nodes_.size()))
            throw std::invalid_argument("operand index out of range");

    switch (op) {
        case Op::constant:
            return constant(payload);
        case Op::variable:
            return variable();
        case Op::add:
            return add(operands[0], operands[1]);
        case Op::sub:
            return sub(operands[0], operands[1]);
        case Op::mul:
            return mul(operands[0], operands[1]);
        case Op::div:
            return div(operands[0], operands[1]);
        case Op::pow_const:
            return pow(operands[0], payload);
        case Op::exp:
            return exp(operands[0]);
        case Op::sin:
            return sin(operands[0]);
        case Op::cos:
            return cos(operands[0]);
        case Op::tanh:
            return tanh(operands[0]);
        case Op::neg:
            return neg(operands[0]);
    }
    throw std::invalid_argument("unknown op kind");
}

// The algebraic shortcuts below fold constants and strip identity operands.
// They exist to keep grad-of-grad graphs compact, not for user convenience:
// every adjoint seed starts as the constant 1 and most propagation terms
// multiply by 0/1 constants that would otherwise snowball.
int ExprGraph::add(int a, int b) {
    const Node& na = nodes_[static_cast<std::size_t>(a)];
    const Node& nb = nodes_[static_cast<std::size_t>(b)];
    if (na.op == Op::constant && nb.op == Op::constant) return constant(na.payload + nb.payload);
    if (is_const(a, 0.0)) return b;
    if (is_const(b, 0.0)) return a;
    return append(Op::add, a, b, 0.0);
}

int ExprGraph::sub(int a, int b) {
    const Node& na = nodes_[static_cast<std::size_t>(a)];
    const Node& nb = nodes_[static_cast<std::size_t>(b)];
    if (na.op == Op::constant && nb.op == Op::constant) return constant(na.payload - nb.payload);
    if (is_const(b, 0.0)) return a;
    if (is_const(a, 0.0)) return neg(b);
    return append(Op::sub, a, b, 0.0);
}

int ExprGraph::mul(int a, int b) {
    const Node& na = nodes_[static_cast<std::size_t>(a)];
    const Node& nb = nodes_[static_cast<std::size_t>(b)];
    if (na.op == Op::constant && nb.op == Op::constant) return constant(na.payload * nb.payload);
    if (is_const(a, 0.0) || is_const(b, 0.0)) return constant(0.0);
    if (is_const(a, 1.0)) return b;
    if (is_const(b, 1.0)) return a;
    if (is_const(a, -1.0)) return neg(b);
    if (is_const(b, -1.0)) return neg(a);
    return append(Op::mul, a, b, 0.0);
}

int ExprGraph::div(int a, int b) {
    const Node& na = nodes_[static_cast<std::size_t>(a)];
    const Node& nb = nodes_[static_cast<std::size_t>(b)];
    if (na.op == Op::constant && nb.op == Op::constant) return constant(na.payload / nb.payload);
    if (is_const(a, 0.0)) return constant(0.0);
    if (is_const(b, 1.0)) return a;
    return append(Op::div, a, b, 0.0);
}

int ExprGraph::pow(int a, double exponent) {
    const Node& na = nodes_[static_cast<std::size_t>(a)];
    if (na.op == Op::constant) return constant(std::pow(na.payload, exponent));
    if (exponent == 1.0) return a;
    if (exponent == 0.0) return constant(1.0);
    return append(Op::pow_const, a, -1, exponent);
}

int ExprGraph::exp(int a) {
    const Node& na = nodes_[static_cast<std::size_t>(a)];
    if (na.op == Op::constant) return constant(std::exp(na.payload));
    return append(Op::exp, a, -1, 0.0);
}

int ExprGraph::sin(int a) {
    const Node& na = nodes_[static_cast<std::size_t>(a)];
    if (na.op == Op::constant) return constant(std::sin(na.payload));
    return append(Op::sin, a, -1, 0.0);
}

int ExprGraph::cos(int a) {
    const Node& na = nodes_[static_cast<std::size_t>(a)];
    if (na.op == Op::constant) return constant(std::cos(na.payload));
    return append(Op::cos, a, -1, 0.0);
}

int ExprGraph::tanh(int a) {
    const Node& na = nodes_[static_cast<std::size_t>(a)];
    if (na.op == Op::constant) return constant(std::tanh(na.payload));
    return append(Op::tanh, a, -1, 0.0);
}

int ExprGraph::neg(int a) {
    const Node& na = nodes_[static_cast<std::size_t>(a)];
    if (na.op == Op::constant) return constant(-na.payload);
    if (na.op == Op::neg) return na.a;
    return append(Op::neg, a, -1, 0.0);
}

std::vector<int> ExprGraph::grad(int output, std::span<const int> wrt) {
    if (output < 0 || output >= static_cast<int>(nodes_.size()))
        throw std::invalid_argument("grad: output index out of range");

    const int n = output + 1;
    std::vector<bool> reach(static_cast<std::size_t>(n), false);
    reach[static_cast<std::size_t>(output)] = true;
    for (int i = output; i >= 0; --i) {
        if (!reach[static_cast<std::size_t>(i)]) continue;
        const Node& nd = nodes_[static_cast<std::size_t>(i)];
        if (nd.a >= 0) reach[static_cast<std::size_t>(nd.a)] = true;
        if (nd.b >= 0) reach[static_cast<std::size_t>(nd.b)] = true;
    }

    // adjoint[i] = node index of d(output)/d(node i), -1 while untouched.
    std::vector<int> adjoint(static_cast<std::size_t>(n), -1);
    adjoint[static_cast<std::size_t>(output)] = constant(1.0);

    auto accumulate = [&](int target, int term) {
        int& slot = adjoint[static_cast<std::size_t>(target)];
        slot = (slot < 0) ? term : add(slot, term);
    };

    // Reverse topological sweep: all consumers of node i have larger indices,
    // so adjoint[i] is final when the loop reaches i.
    for (int i = output; i >= 0; --i) {
        if (!reach[static_cast<std::size_t>(i)] || adjoint[static_cast<std::size_t>(i)] < 0) continue;
        const Node nd = nodes_[static_cast<std::size_t>(i)];
        const int up = adjoint[static_cast<std::size_t>(i)];
        switch (nd.op) {
            case Op::constant:
            case Op::variable:
                break;
            case Op::add:
                accumulate(nd.a, up);
                accumulate(nd.b, up);
                break;
            case Op::sub:
                accumulate(nd.a, up);
                accumulate(nd.b, neg(up));
                break;
            case Op::mul:
                accumulate(nd.a, mul(up, nd.b));
                accumulate(nd.b, mul(up, nd.a));
                break;
            case Op::div:
                accumulate(nd.a, div(up, nd.b));
                accumulate(nd.b, neg(div(mul(up, i), nd.b)));
                break;
            case Op::pow_const:
                accumulate(nd.a, mul(up, mul(constant(nd.payload), pow(nd.a, nd.payload - 1.0))));
                break;
            case Op::exp:
                accumulate(nd.a, mul(up, i));
                break;
            case Op::sin:
                accumulate(nd.a, mul(up, cos(nd.a)));
                break;
            case Op::cos:
                accumulate(nd.a, neg(mul(up, sin(nd.a))));
                break;
            case Op::tanh:
                accumulate(nd.a, mul(up, sub(constant(1.0), pow(i, 2.0))));
                break;
            case Op::neg:
                accumulate(nd.a, neg(up));
                break;
        }
    }

    std::vector<int> out;
    out.reserve(wrt.size());
    for (int v : wrt) {
        if (v < 0 || v >= static_cast<int>(nodes_.size()) || nodes_[static_cast<std::size_t>(v)].op != Op::variable)
            throw std::invalid_argument("grad: wrt entry is not a variable node");
        out.push_back((v <= output && adjoint[static_cast<std::size_t>(v)] >= 0) ? adjoint[static_cast<std::size_t>(v)]
                                                                                 : constant(0.0));
    }
    return out;
}

int ExprGraph::laplacian(int output, std::span<const int> spatial) {
    std::vector<int> first = grad(output, spatial);
    int acc = constant(0.0);
    for (std::size_t i = 0; i < spatial.size(); ++i) {
        int axis[1] = {spatial[i]};
        int second = grad(first[i], axis)[0];
        acc = add(acc, second);
    }
    return acc;
}

double ExprGraph::eval(int output, std::span<const double> var_values) const {
    if (output < 0 || output >= static_cast<int>(nodes_.size()))
        throw std::invalid_argument("eval: output index out of range");
    if (var_values.size() != variables_.size())
        throw std::invalid_argument("eval: variable value count mismatch");

    std::vector<double> v(nodes_.size(), 0.0);
    for (std::size_t i = 0; i < variables_.size(); ++i) v[static_cast<std::size_t>(variables_[i])] = var_values[i];

    for (int i = 0; i <= output; ++i) {
        const Node& nd = nodes_[static_cast<std::size_t>(i)];
        double* val = v.data();
        switch (nd.op) {
            case Op::constant:
                val[i] = nd.payload;
                break;
            case Op::variable:
                break;
            case Op::add:
                val[i] = val[nd.a] + val[nd.b];
                break;
            case Op::sub:
                val[i] = val[nd.a] - val[nd.b];
                break;
            case Op::mul:
                val[i] = val[nd.a] * val[nd.b];
                break;
            case Op::div:
                val[i] = val[nd.a] / val[nd.b];
                break;
            case Op::pow_const:
                val[i] = std::pow(val[nd.a], nd.payload);
                break;
            case Op::exp:
                val[i] = std::exp(val[nd.a]);
                break;
            case Op::sin:
                val[i] = std::sin(val[nd.a]);
                break;
            case Op::cos:
                val[i] = std::cos(val[nd.a]);
                break;
            case Op::tanh:
                val[i] = std::tanh(val[nd.a]);
                break;
            case Op::neg:
                val[i] = -val[nd.a];
                break;
        }
    }
    return v[static_cast<std::size_t>(output)];
}

DerivativeBundle differentiate(ExprGraph& g, int output, std::span<const int> first_vars,
                               std::span<const int> second_vars, std::span<const double> var_values) {
    // Union of requested variables so second derivatives can reuse the
    // first-derivative nodes from a single reverse sweep.
    std::vector<int> wanted(first_vars.begin(), first_vars.end());
    for (int v : second_vars)
        if (std::find(wanted.begin(), wanted.end(), v) == wanted.end()) wanted.push_back(v);

    std::vector<int> g1 = g.grad(output, wanted);
    std::vector<std::pair<int, int>> seconds;  // (var, node)
    for (int v : second_vars) {
        std::size_t pos = static_cast<std::size_t>(std::find(wanted.begin(), wanted.end(), v) - wanted.begin());
        int axis[1] = {v};
        seconds.emplace_back(v, g.grad(g1[pos], axis)[0]);
    }

    DerivativeBundle out;
    out.value = g.eval(output, var_values);
    for (std::size_t i = 0; i < first_vars.size(); ++i) {
        std::size_t pos =
            static_cast<std::size_t>(std::find(wanted.begin(), wanted.end(), first_vars[i]) - wanted.begin());
        out.first[first_vars[i]] = g.eval(g1[pos], var_values);
    }
    for (auto [v, node] : seconds) out.second_diagonal[v] = g.eval(node, var_values);
    return out;
}

namespace {
Expr wrap(ExprGraph* g, int node) { return Expr{g, node}; }
}  // namespace

Expr operator+(Expr a, Expr b) { return wrap(a.g, a.g->add(a.node, b.node)); }
Expr operator-(Expr a, Expr b) { return wrap(a.g, a.g->sub(a.node, b.node)); }
Expr operator*(Expr a, Expr b) { return wrap(a.g, a.g->mul(a.node, b.node)); }
Expr operator/(Expr a, Expr b) { return wrap(a.g, a.g->div(a.node, b.node)); }
Expr operator+(Expr a, double b) { return wrap(a.g, a.g->add(a.node, a.g->constant(b))); }
Expr operator+(double a, Expr b) { return wrap(b.g, b.g->add(b.g->constant(a), b.node)); }
Expr operator-(Expr a, double b) { return wrap(a.g, a.g->sub(a.node, a.g->constant(b))); }
Expr operator-(double a, Expr b) { return wrap(b.g, b.g->sub(b.g->constant(a), b.node)); }
Expr operator*(Expr a, double b) { return wrap(a.g, a.g->mul(a.node, a.g->constant(b))); }
Expr operator*(double a, Expr b) { return wrap(b.g, b.g->mul(b.g->constant(a), b.node)); }
Expr operator/(Expr a, double b) { return wrap(a.g, a.g->div(a.node, a.g->constant(b))); }
Expr operator/(double a, Expr b) { return wrap(b.g, b.g->div(b.g->constant(a), b.node)); }
Expr operator-(Expr a) { return wrap(a.g, a.g->neg(a.node)); }
Expr exp(Expr a) { return wrap(a.g, a.g->exp(a.node)); }
Expr sin(Expr a) { return wrap(a.g, a.g->sin(a.node)); }
Expr cos(Expr a) { return wrap(a.g, a.g->cos(a.node)); }
Expr tanh(Expr a) { return wrap(a.g, a.g->tanh(a.node)); }
Expr pow(Expr a, double e) { return wrap(a.g, a.g->pow(a.node, e)); }

Program::Program(const ExprGraph& g, std::span<const int> outputs, std::span<const int> grad_leaves) {
    const int n = static_cast<int>(g.size());
    std::vector<bool> reach(static_cast<std::size_t>(n), false);
    int hi = -1;
    for (int o : outputs) {
        if (o < 0 || o >= n) throw std::invalid_argument("program: output index out of range");
        reach[static_cast<std::size_t>(o)] = true;
        hi = std::max(hi, o);
    }
    for (int i = hi; i >= 0; --i) {
        if (!reach[static_cast<std::size_t>(i)]) continue;
        const Node& nd = g.node(i);
        if (nd.a >= 0) reach[static_cast<std::size_t>(nd.a)] = true;
        if (nd.b >= 0) reach[static_cast<std::size_t>(nd.b)] = true;
    }

    std::vector<std::int32_t> remap(static_cast<std::size_t>(n), -1);
    for (int i = 0; i <= hi; ++i) {
        if (!reach[static_cast<std::size_t>(i)]) continue;
        remap[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(nodes_.size());
        Node nd = g.node(i);
        if (nd.a >= 0) nd.a = remap[static_cast<std::size_t>(nd.a)];
        if (nd.b >= 0) nd.b = remap[static_cast<std::size_t>(nd.b)];
        nodes_.push_back(nd);
    }

    const std::vector<int>& vars = g.variables();
    for (std::size_t ord = 0; ord < vars.size(); ++ord) {
        int v = vars[ord];
        if (v <= hi && remap[static_cast<std::size_t>(v)] >= 0)
            inputs_.emplace_back(remap[static_cast<std::size_t>(v)], static_cast<std::int32_t>(ord));
    }
    for (int o : outputs) outputs_.push_back(remap[static_cast<std::size_t>(o)]);
    leaf_ordinal_.assign(nodes_.size(), -1);
    for (std::size_t k = 0; k < grad_leaves.size(); ++k) {
        int v = grad_leaves[k];
        if (v < 0 || v >= n || g.node(v).op != Op::variable)
            throw std::invalid_argument("program: grad leaf is not a variable node");
        if (v <= hi && remap[static_cast<std::size_t>(v)] >= 0)
            leaf_ordinal_[static_cast<std::size_t>(remap[static_cast<std::size_t>(v)])] = static_cast<std::int32_t>(k);
    }
    grad_leaf_count_ = grad_leaves.size();
}

Program::Workspace Program::make_workspace() const {
    Workspace ws;
    ws.values.assign(nodes_.size(), 0.0);
    ws.adjoints.assign(nodes_.size(), 0.0);
    return ws;
}

void Program::forward(std::span<const double> var_values, Workspace& ws, std::span<double> outputs) const {
    if (ws.values.size() != nodes_.size()) throw std::invalid_argument("program: workspace size mismatch");
    if (outputs.size() != outputs_.size()) throw std::invalid_argument("program: output span size mismatch");

    double* val = ws.values.data();
    for (auto [ci, ord] : inputs_) {
        if (static_cast<std::size_t>(ord) >= var_values.size())
            throw std::invalid_argument("program: variable value count mismatch");
        val[ci] = var_values[static_cast<std::size_t>(ord)];
    }

    const Node* nodes = nodes_.data();
    const std::size_t n = nodes_.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Node& nd = nodes[i];
        switch (nd.op) {
            case Op::constant:
                val[i] = nd.payload;
                break;
            case Op::variable:
                break;
            case Op::add:
                val[i] = val[nd.a] + val[nd.b];
                break;
            case Op::sub:
                val[i] = val[nd.a] - val[nd.b];
                break;
            case Op::mul:
                val[i] = val[nd.a] * val[nd.b];
                break;
            case Op::div:
                val[i] = val[nd.a] / val[nd.b];
                break;
            case Op::pow_const:
                val[i] = (nd.payload == 2.0) ? val[nd.a] * val[nd.a] : std::pow(val[nd.a], nd.payload);
                break;
            case Op::exp:
                val[i] = std::exp(val[nd.a]);
                break;
            case Op::sin:
                val[i] = std::sin(val[nd.a]);
                break;
            case Op::cos:
                val[i] = std::cos(val[nd.a]);
                break;
            case Op::tanh:
                val[i] = std::tanh(val[nd.a]);
                break;
            case Op::neg:
                val[i] = -val[nd.a];
                break;
        }
    }
    for (std::size_t k = 0; k < outputs_.size(); ++k) outputs[k] = val[outputs_[k]];
}

void Program::reverse(std::span<const double> output_seeds, Workspace& ws, std::span<double> grad_out) const {
    if (output_seeds.size() != outputs_.size()) throw std::invalid_argument("program: seed span size mismatch");

    double* adj = ws.adjoints.data();
    const double* val = ws.values.data();
    for (std::size_t k = 0; k < outputs_.size(); ++k) adj[outputs_[k]] += output_seeds[k];

    // Each node's adjoint is final when reached (consumers have larger
    // indices) and is zeroed after use so the buffer is clean on return.
    // Requested leaves are harvested in the same pass.
    const Node* nodes = nodes_.data();
    const std::int32_t* leaf_ord = leaf_ordinal_.data();
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        const double a_i = adj[i];
        adj[i] = 0.0;
        if (a_i == 0.0) continue;
        const Node& nd = nodes[i];
        switch (nd.op) {
            case Op::constant:
                break;
            case Op::variable:
                if (leaf_ord[i] >= 0) grad_out[static_cast<std::size_t>(leaf_ord[i])] += a_i;
                break;
            case Op::add:
                adj[nd.a] += a_i;
                adj[nd.b] += a_i;
                break;
            case Op::sub:
                adj[nd.a] += a_i;
                adj[nd.b] -= a_i;
                break;
            case Op::mul:
                adj[nd.a] += a_i * val[nd.b];
                adj[nd.b] += a_i * val[nd.a];
                break;
            case Op::div:
                adj[nd.a] += a_i / val[nd.b];
                adj[nd.b] -= a_i * val[i] / val[nd.b];
                break;
            case Op::pow_const:
                adj[nd.a] += (nd.payload == 2.0) ? a_i * 2.0 * val[nd.a]
                                                 : a_i * nd.payload * std::pow(val[nd.a], nd.payload - 1.0);
                break;
            case Op::exp:
                adj[nd.a] += a_i * val[i];
                break;
            case Op::sin:
                adj[nd.a] += a_i * std::cos(val[nd.a]);
                break;
            case Op::cos:
                adj[nd.a] -= a_i * std::sin(val[nd.a]);
                break;
            case Op::tanh:
                adj[nd.a] += a_i * (1.0 - val[i] * val[i]);
                break;
            case Op::neg:
                adj[nd.a] -= a_i;
                break;
        }
    }
}

}  // namespace hsml::ad
