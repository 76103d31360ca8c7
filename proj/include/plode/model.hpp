#pragma once

// Piecewise linear tangent and secant models of a recorded tape.
//
// A model stores per-node midpoint values and slopes so that increments
// propagate through the tape with abs kept exact:
//
//   add/sub : dv_i = dv_j +- dv_k
//   mul     : dv_i = v_j * dv_k + dv_j * v_k         (midpoint values)
//   unary   : dv_i = c_ij * dv_j                     (tangent or secant slope)
//   abs     : dv_i = |v_j + dv_j| - v_i
//
// where v_i for an abs node is |v_j| in tangent mode and (|v_lo|+|v_hi|)/2
// in secant mode. With that abs value the secant model interpolates F at
// both anchor points and collapses to the tangent model when they coincide.

#include <cstdint>
#include <span>
#include <vector>

#include "plode/tape.hpp"

namespace plode {

enum class Mode { tangent, secant };

/// Signs of all switching variables (abs arguments), one entry per switch.
using Signature = std::vector<std::int8_t>;

namespace defaults {
/// Relative threshold below which a secant slope degenerates to the
/// derivative at the midpoint.
inline constexpr double secant_slope_eps = 1e-10;
/// Zero band for signature computation (exact zeros only).
inline constexpr double signature_eps = 0.0;
}  // namespace defaults

class PLModel {
public:
    Mode mode() const { return mode_; }
    const Tape& tape() const { return *tape_; }
    const Vec& ref_lo() const { return ref_lo_; }        // x_lo (x-check)
    const Vec& ref_hi() const { return ref_hi_; }        // x_hi (x-hat)
    const Vec& midpoint() const { return mid_; }         // (x_lo + x_hi)/2
    const Vec& ref_value() const { return ref_value_; }  // F at midpoint / mean of F
    const Vec& node_mid() const { return node_mid_; }
    const Vec& node_slope() const { return node_slope_; }

    std::size_t dim_in() const { return tape_->n_inputs(); }
    std::size_t dim_out() const { return tape_->n_outputs(); }

    /// Propagate an input increment through the model.
    /// `dwork` must have tape().n_nodes() entries, `dy` dim_out().
    void increment_into(std::span<const double> dx, std::span<double> dwork,
                        std::span<double> dy) const {
        const auto& nodes = tape_->nodes();
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const Node& nd = nodes[i];
            double d = 0.0;
            switch (nd.op) {
                case Op::input: d = dx[static_cast<std::size_t>(nd.a)]; break;
                case Op::constant: d = 0.0; break;
                case Op::add: d = dwork[nd.a] + dwork[nd.b]; break;
                case Op::sub: d = dwork[nd.a] - dwork[nd.b]; break;
                case Op::mul:
                    d = node_mid_[nd.a] * dwork[nd.b] + dwork[nd.a] * node_mid_[nd.b];
                    break;
                case Op::abs:
                    d = std::fabs(node_mid_[nd.a] + dwork[nd.a]) - node_mid_[i];
                    break;
                default:  // smooth unary
                    d = node_slope_[i] * dwork[nd.a];
                    break;
            }
            dwork[i] = d;
        }
        const auto& outs = tape_->outputs();
        for (std::size_t k = 0; k < outs.size(); ++k)
            dy[k] = dwork[static_cast<std::size_t>(outs[k])];
    }

    Vec increment(std::span<const double> dx) const {
        Vec dwork(tape_->n_nodes());
        Vec dy(dim_out());
        increment_into(dx, dwork, dy);
        return dy;
    }

    /// Nonincremental form: ref_value + increment(x - midpoint).
    Vec nonincremental(std::span<const double> x) const {
        Vec dx = vsub(x, mid_);
        Vec dy = increment(dx);
        for (std::size_t k = 0; k < dy.size(); ++k) dy[k] += ref_value_[k];
        return dy;
    }

    /// Signs of the switching variables at midpoint + dx.
    Signature signature_at(std::span<const double> dx) const {
        Vec dwork(tape_->n_nodes());
        Vec dy(dim_out());
        increment_into(dx, dwork, dy);
        Signature sig(tape_->n_abs());
        const auto& nodes = tape_->nodes();
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (nodes[i].op != Op::abs) continue;
            double z = node_mid_[nodes[i].a] + dwork[nodes[i].a];
            std::int8_t s = 0;
            if (z > defaults::signature_eps)
                s = 1;
            else if (z < -defaults::signature_eps)
                s = -1;
            sig[static_cast<std::size_t>(nodes[i].sw)] = s;
        }
        return sig;
    }

private:
    friend PLModel linearize_tangent(const Tape&, std::span<const double>);
    friend PLModel linearize_secant(const Tape&, std::span<const double>,
                                    std::span<const double>);
    PLModel() = default;

    Mode mode_ = Mode::tangent;
    const Tape* tape_ = nullptr;
    Vec ref_lo_, ref_hi_, mid_;
    Vec ref_value_;
    Vec node_mid_;    // per-node reference value (for abs: the stored abs value)
    Vec node_slope_;  // per-node slope, smooth unaries only
};

inline PLModel linearize_tangent(const Tape& tape, std::span<const double> x) {
    PLModel m;
    m.mode_ = Mode::tangent;
    m.tape_ = &tape;
    m.ref_lo_.assign(x.begin(), x.end());
    m.ref_hi_ = m.ref_lo_;
    m.mid_ = m.ref_lo_;
    Vec work;
    m.ref_value_ = tape.evaluate(x, &work);
    m.node_mid_ = std::move(work);
    m.node_slope_.assign(tape.n_nodes(), 0.0);
    const auto& nodes = tape.nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (is_smooth_unary(nodes[i].op))
            m.node_slope_[i] = Tape::unary_derivative(nodes[i].op, m.node_mid_[nodes[i].a]);
    return m;
}

inline PLModel linearize_secant(const Tape& tape, std::span<const double> lo,
                                std::span<const double> hi) {
    PLModel m;
    m.mode_ = Mode::secant;
    m.tape_ = &tape;
    m.ref_lo_.assign(lo.begin(), lo.end());
    m.ref_hi_.assign(hi.begin(), hi.end());
    m.mid_.resize(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) m.mid_[i] = 0.5 * (lo[i] + hi[i]);

    Vec work_lo, work_hi;
    Vec y_lo = tape.evaluate(lo, &work_lo);
    Vec y_hi = tape.evaluate(hi, &work_hi);
    m.ref_value_.resize(y_lo.size());
    for (std::size_t k = 0; k < y_lo.size(); ++k)
        m.ref_value_[k] = 0.5 * (y_lo[k] + y_hi[k]);

    const auto& nodes = tape.nodes();
    m.node_mid_.resize(tape.n_nodes());
    m.node_slope_.assign(tape.n_nodes(), 0.0);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const Node& nd = nodes[i];
        // For every node the stored reference is the mean of the two sweeps;
        // for an abs node this is (|v_lo| + |v_hi|)/2, the value that makes
        // the secant model interpolating.
        m.node_mid_[i] = 0.5 * (work_lo[i] + work_hi[i]);
        if (is_smooth_unary(nd.op)) {
            double dj = work_hi[nd.a] - work_lo[nd.a];
            double scl = std::max({1.0, std::fabs(work_lo[nd.a]), std::fabs(work_hi[nd.a])});
            if (std::fabs(dj) > defaults::secant_slope_eps * scl)
                m.node_slope_[i] = (work_hi[i] - work_lo[i]) / dj;
            else
                m.node_slope_[i] = Tape::unary_derivative(nd.op, m.node_mid_[nd.a]);
        }
    }
    return m;
}

}  // namespace plode
