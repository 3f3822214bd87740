#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace hsml::ad {

enum class Op : std::uint8_t {
    constant,
    variable,
    add,
    sub,
    mul,
    div,
    pow_const,  // payload holds the exponent
    exp,
    sin,
    cos,
    tanh,
    neg,
};

int arity(Op op);

struct Node {
    Op op = Op::constant;
    std::int32_t a = -1;  // first operand index
    std::int32_t b = -1;  // second operand index
    double payload = 0.0;  // constant value or pow exponent
};

// Value of an expression together with first derivatives and the diagonal of
// the second-derivative matrix, keyed by variable node index.
struct DerivativeBundle {
    double value = 0.0;
    std::map<int, double> first;
    std::map<int, double> second_diagonal;
};

// Append-only scalar expression graph. Node indices are topologically ordered
// by construction (operands always precede consumers), so evaluation and
// differentiation are single iterative sweeps; no recursion anywhere.
class ExprGraph {
  public:
    int variable();
    int constant(double v);

    // Generic node append; validates op kind and operand indices.
    int build(Op op, std::span<const int> operands, double payload = 0.0);

    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);
    int div(int a, int b);
    int pow(int a, double exponent);
    int exp(int a);
    int sin(int a);
    int cos(int a);
    int tanh(int a);
    int neg(int a);

    // Appends reverse-mode gradient expressions of `output` and returns the
    // node holding d(output)/d(v) for each requested variable, in order.
    // The returned nodes live in this graph and can be differentiated again.
    std::vector<int> grad(int output, std::span<const int> wrt);

    // Sum of per-axis grad-of-grad diagonal entries over `spatial` variables.
    int laplacian(int output, std::span<const int> spatial);

    // Iterative full-graph evaluation; `var_values` pairs with variables() order.
    double eval(int output, std::span<const double> var_values) const;

    std::size_t size() const { return nodes_.size(); }
    const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& variables() const { return variables_; }

  private:
    int append(Op op, int a, int b, double payload);
    bool is_const(int i, double v) const;

    std::vector<Node> nodes_;
    std::vector<int> variables_;           // node indices of variable leaves
    std::map<double, int> constant_pool_;  // value -> node, shared constants
};

// Evaluates value, first derivatives for `first_vars`, and second-derivative
// diagonal entries for `second_vars`. Appends gradient expressions to `g`.
DerivativeBundle differentiate(ExprGraph& g, int output, std::span<const int> first_vars,
                               std::span<const int> second_vars, std::span<const double> var_values);

// Handle type with operator sugar so closed-form expressions can be written
// once and instantiated either on doubles or on graph nodes.
struct Expr {
    ExprGraph* g = nullptr;
    int node = -1;
};

Expr operator+(Expr a, Expr b);
Expr operator-(Expr a, Expr b);
Expr operator*(Expr a, Expr b);
Expr operator/(Expr a, Expr b);
Expr operator+(Expr a, double b);
Expr operator+(double a, Expr b);
Expr operator-(Expr a, double b);
Expr operator-(double a, Expr b);
Expr operator*(Expr a, double b);
Expr operator*(double a, Expr b);
Expr operator/(Expr a, double b);
Expr operator/(double a, Expr b);
Expr operator-(Expr a);
Expr exp(Expr a);
Expr sin(Expr a);
Expr cos(Expr a);
Expr tanh(Expr a);
Expr pow(Expr a, double e);

// A graph frozen for repeated evaluation: nodes reachable from `outputs` are
// compacted in topological order. Forward evaluation and numeric reverse
// sweeps share a per-caller workspace so one Program can serve many threads.
class Program {
  public:
    Program() = default;
    // `grad_leaves` lists the variable node indices whose adjoints reverse()
    // accumulates (typically network weights plus physical parameters).
    Program(const ExprGraph& g, std::span<const int> outputs, std::span<const int> grad_leaves);

    struct Workspace {
        std::vector<double> values;
        std::vector<double> adjoints;
    };

    Workspace make_workspace() const;

    // `var_values` pairs with ExprGraph::variables() order.
    void forward(std::span<const double> var_values, Workspace& ws, std::span<double> outputs) const;

    // Accumulates d(sum_i seed_i * output_i)/d(leaf_j) += into grad_out.
    // Must follow a forward() on the same workspace. Leaves the adjoint
    // buffer zeroed for the next call.
    void reverse(std::span<const double> output_seeds, Workspace& ws, std::span<double> grad_out) const;

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t output_count() const { return outputs_.size(); }
    std::size_t grad_leaf_count() const { return grad_leaf_count_; }

  private:
    std::vector<Node> nodes_;  // compacted, operand indices rewritten
    std::vector<std::pair<std::int32_t, std::int32_t>> inputs_;  // (compact idx, variables() ordinal)
    std::vector<std::int32_t> outputs_;                          // compact indices
    std::vector<std::int32_t> leaf_ordinal_;                     // per compact node: grad_out slot or -1
    std::size_t grad_leaf_count_ = 0;
};

}  // namespace hsml::ad
