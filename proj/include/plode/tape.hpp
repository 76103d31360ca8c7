#pragma once

// Recorded evaluation procedures for composite piecewise differentiable
// functions. A Tape is an immutable straight-line program (a DAG of
// elementary operations) over the library {+, -, *, smooth unaries, abs}.
// Division is recorded as recip followed by mul; max/min desugar into
// add/sub/abs/scale via max(u,v) = (u+v+|u-v|)/2.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace plode {

using Vec = std::vector<double>;

enum class Op : std::uint8_t {
    input,
    constant,
    add,
    sub,
    mul,
    // smooth unaries
    neg,
    recip,
    sin,
    cos,
    tan,
    exp,
    log,
    sqrt,
    // the one nonsmooth elemental
    abs,
};

constexpr bool is_smooth_unary(Op op) {
    return op >= Op::neg && op <= Op::sqrt;
}

inline const char* op_name(Op op) {
    switch (op) {
        case Op::input: return "input";
        case Op::constant: return "constant";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::neg: return "neg";
        case Op::recip: return "recip";
        case Op::sin: return "sin";
        case Op::cos: return "cos";
        case Op::tan: return "tan";
        case Op::exp: return "exp";
        case Op::log: return "log";
        case Op::sqrt: return "sqrt";
        case Op::abs: return "abs";
    }
    return "?";
}

struct Node {
    Op op;
    std::int32_t a = -1;   // first operand index, or input slot for Op::input
    std::int32_t b = -1;   // second operand index
    double value = 0.0;    // payload for Op::constant
    std::int32_t sw = -1;  // switch index for Op::abs
};

/// Evaluation left the domain of a smooth elemental (log of a nonpositive
/// value, reciprocal of zero, square root of a negative value).
class EvalDomainError : public std::runtime_error {
public:
    EvalDomainError(std::string what, std::int32_t node)
        : std::runtime_error(std::move(what)), node_index(node) {}
    std::int32_t node_index;
};

class Tape {
public:
    std::size_t n_inputs() const { return n_inputs_; }
    std::size_t n_outputs() const { return outputs_.size(); }
    std::size_t n_abs() const { return n_abs_; }
    std::size_t n_nodes() const { return nodes_.size(); }
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<std::int32_t>& outputs() const { return outputs_; }

    /// Forward sweep filling one intermediate value per node.
    /// `work` must have n_nodes() entries; `y` must have n_outputs().
    void evaluate_into(std::span<const double> x, std::span<double> work,
                       std::span<double> y) const {
        if (x.size() != n_inputs_)
            throw std::invalid_argument("tape expects " + std::to_string(n_inputs_) +
                                        " inputs, got " + std::to_string(x.size()));
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const Node& nd = nodes_[i];
            double v = 0.0;
            switch (nd.op) {
                case Op::input: v = x[static_cast<std::size_t>(nd.a)]; break;
                case Op::constant: v = nd.value; break;
                case Op::add: v = work[nd.a] + work[nd.b]; break;
                case Op::sub: v = work[nd.a] - work[nd.b]; break;
                case Op::mul: v = work[nd.a] * work[nd.b]; break;
                case Op::neg: v = -work[nd.a]; break;
                case Op::recip:
                    if (work[nd.a] == 0.0)
                        throw EvalDomainError("recip of zero at node " + std::to_string(i),
                                              static_cast<std::int32_t>(i));
                    v = 1.0 / work[nd.a];
                    break;
                case Op::sin: v = std::sin(work[nd.a]); break;
                case Op::cos: v = std::cos(work[nd.a]); break;
                case Op::tan: v = std::tan(work[nd.a]); break;
                case Op::exp: v = std::exp(work[nd.a]); break;
                case Op::log:
                    if (work[nd.a] <= 0.0)
                        throw EvalDomainError("log of nonpositive value at node " +
                                                  std::to_string(i),
                                              static_cast<std::int32_t>(i));
                    v = std::log(work[nd.a]);
                    break;
                case Op::sqrt:
                    if (work[nd.a] < 0.0)
                        throw EvalDomainError("sqrt of negative value at node " +
                                                  std::to_string(i),
                                              static_cast<std::int32_t>(i));
                    v = std::sqrt(work[nd.a]);
                    break;
                case Op::abs: v = std::fabs(work[nd.a]); break;
            }
            work[i] = v;
        }
        for (std::size_t k = 0; k < outputs_.size(); ++k)
            y[k] = work[static_cast<std::size_t>(outputs_[k])];
    }

    Vec evaluate(std::span<const double> x, Vec* intermediates = nullptr) const {
        Vec work(nodes_.size());
        Vec y(outputs_.size());
        evaluate_into(x, work, y);
        if (intermediates) *intermediates = std::move(work);
        return y;
    }

    /// Derivative of a smooth unary elemental at v.
    static double unary_derivative(Op op, double v) {
        switch (op) {
            case Op::neg: return -1.0;
            case Op::recip: return -1.0 / (v * v);
            case Op::sin: return std::cos(v);
            case Op::cos: return -std::sin(v);
            case Op::tan: {
                double t = std::tan(v);
                return 1.0 + t * t;
            }
            case Op::exp: return std::exp(v);
            case Op::log: return 1.0 / v;
            case Op::sqrt: return 0.5 / std::sqrt(v);
            default: throw std::logic_error("unary_derivative: not a smooth unary");
        }
    }

private:
    friend class TapeBuilder;
    Tape() = default;

    std::size_t n_inputs_ = 0;
    std::size_t n_abs_ = 0;
    std::vector<Node> nodes_;
    std::vector<std::int32_t> outputs_;
};

/// Handle to a recorded node; only valid for the builder that produced it.
struct NodeRef {
    std::int32_t idx = -1;
};

class TapeBuilder {
public:
    NodeRef input() {
        Node nd{Op::input};
        nd.a = static_cast<std::int32_t>(n_inputs_++);
        return push(nd);
    }
    NodeRef constant(double c) {
        Node nd{Op::constant};
        nd.value = c;
        return push(nd);
    }
    NodeRef add(NodeRef x, NodeRef y) { return binary(Op::add, x, y); }
    NodeRef sub(NodeRef x, NodeRef y) { return binary(Op::sub, x, y); }
    NodeRef mul(NodeRef x, NodeRef y) { return binary(Op::mul, x, y); }
    NodeRef neg(NodeRef x) { return unary(Op::neg, x); }
    NodeRef recip(NodeRef x) { return unary(Op::recip, x); }
    NodeRef sin(NodeRef x) { return unary(Op::sin, x); }
    NodeRef cos(NodeRef x) { return unary(Op::cos, x); }
    NodeRef tan(NodeRef x) { return unary(Op::tan, x); }
    NodeRef exp(NodeRef x) { return unary(Op::exp, x); }
    NodeRef log(NodeRef x) { return unary(Op::log, x); }
    NodeRef sqrt(NodeRef x) { return unary(Op::sqrt, x); }
    NodeRef abs(NodeRef x) {
        check(x);
        Node nd{Op::abs};
        nd.a = x.idx;
        nd.sw = static_cast<std::int32_t>(n_abs_++);
        return push(nd);
    }

    NodeRef smooth_unary(Op op, NodeRef x) {
        if (!is_smooth_unary(op)) throw std::invalid_argument("unknown smooth unary kind");
        return unary(op, x);
    }

    /// x / y records as recip(y) * x; the binary rules cover only {+,-,*}.
    NodeRef div(NodeRef x, NodeRef y) { return mul(x, recip(y)); }

    /// max(u,v) = (u + v + |u - v|) / 2
    NodeRef max(NodeRef u, NodeRef v) {
        return mul(constant(0.5), add(add(u, v), abs(sub(u, v))));
    }
    /// min(u,v) = (u + v - |u - v|) / 2
    NodeRef min(NodeRef u, NodeRef v) {
        return mul(constant(0.5), sub(add(u, v), abs(sub(u, v))));
    }
    NodeRef scale(double c, NodeRef x) { return mul(constant(c), x); }

    void output(NodeRef y) {
        check(y);
        outputs_.push_back(y.idx);
    }

    Tape build() {
        Tape t;
        t.n_inputs_ = n_inputs_;
        t.n_abs_ = n_abs_;
        t.nodes_ = std::move(nodes_);
        t.outputs_ = std::move(outputs_);
        return t;
    }

private:
    NodeRef push(Node nd) {
        nodes_.push_back(nd);
        return NodeRef{static_cast<std::int32_t>(nodes_.size() - 1)};
    }
    NodeRef binary(Op op, NodeRef x, NodeRef y) {
        check(x);
        check(y);
        Node nd{op};
        nd.a = x.idx;
        nd.b = y.idx;
        return push(nd);
    }
    NodeRef unary(Op op, NodeRef x) {
        check(x);
        Node nd{op};
        nd.a = x.idx;
        return push(nd);
    }
    void check(NodeRef r) const {
        if (r.idx < 0 || r.idx >= static_cast<std::int32_t>(nodes_.size()))
            throw std::invalid_argument("operand refers to a node that does not exist yet");
    }

    std::size_t n_inputs_ = 0;
    std::size_t n_abs_ = 0;
    std::vector<Node> nodes_;
    std::vector<std::int32_t> outputs_;
};

// Small dense-vector helpers shared across the library.

inline double norm_inf(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

inline Vec vsub(std::span<const double> a, std::span<const double> b) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

inline Vec vadd(std::span<const double> a, std::span<const double> b) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

inline Vec vscale(double c, std::span<const double> a) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = c * a[i];
    return r;
}

// a + c*b
inline Vec vaxpy(std::span<const double> a, double c, std::span<const double> b) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + c * b[i];
    return r;
}

inline double dist_inf(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace plode
