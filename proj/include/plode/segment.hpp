#pragma once

// Kink marching along a line segment in increment space.
//
// Within a region of constant signature every switching value
// z_s(tau) = v_s + dv_s(tau) is affine in the segment parameter, so the
// next breakpoint is the smallest positive root over all switches. One
// forward pass per region propagates values and directional slopes
// jointly, with abs nodes frozen to the signature resolved on the fly
// (sign of the value, broken by the sign of the slope on exact zeros).
// On each subinterval the model output is affine, so endpoint-trapezoid
// integration is exact.

#include <span>
#include <stdexcept>
#include <vector>

#include "plode/model.hpp"

namespace plode {

struct SegmentOptions {
    double advance_eps = 1e-14;  // guard against re-detecting the same crossing
    std::size_t max_kinks_base = 64;
    std::size_t max_kinks_per_switch = 10;
};

/// A segment hit more breakpoints than the configured bound; typically a
/// switching value hovering around zero.
class SegmentOverflow : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SegmentDecomposition {
    Vec params;                         // 0 = tau_0 < ... < tau_{k+1} = 1
    std::vector<Signature> signatures;  // one per open subinterval
    std::vector<Vec> values;            // model output at each tau_i
    std::vector<Vec> kink_points;       // input-space point at each tau_i
};

namespace detail {

// One pass at parameter tau: exact increment values and one-sided
// (forward) slopes, resolving the signature for the region ahead.
// Fills per-switch value z and slope zdot for root finding.
inline void region_pass(const PLModel& m, std::span<const double> dx,
                        std::span<const double> dir, std::span<double> val,
                        std::span<double> der, std::span<double> z,
                        std::span<double> zdot, Signature& sig) {
    const auto& nodes = m.tape().nodes();
    const Vec& mid = m.node_mid();
    const Vec& slope = m.node_slope();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const Node& nd = nodes[i];
        switch (nd.op) {
            case Op::input:
                val[i] = dx[static_cast<std::size_t>(nd.a)];
                der[i] = dir[static_cast<std::size_t>(nd.a)];
                break;
            case Op::constant:
                val[i] = 0.0;
                der[i] = 0.0;
                break;
            case Op::add:
                val[i] = val[nd.a] + val[nd.b];
                der[i] = der[nd.a] + der[nd.b];
                break;
            case Op::sub:
                val[i] = val[nd.a] - val[nd.b];
                der[i] = der[nd.a] - der[nd.b];
                break;
            case Op::mul:
                val[i] = mid[nd.a] * val[nd.b] + val[nd.a] * mid[nd.b];
                der[i] = mid[nd.a] * der[nd.b] + der[nd.a] * mid[nd.b];
                break;
            case Op::abs: {
                double zi = mid[nd.a] + val[nd.a];
                double zidot = der[nd.a];
                std::int8_t s;
                if (zi > 0.0)
                    s = 1;
                else if (zi < 0.0)
                    s = -1;
                else
                    s = zidot > 0.0 ? 1 : (zidot < 0.0 ? -1 : 0);
                auto sw = static_cast<std::size_t>(nd.sw);
                z[sw] = zi;
                zdot[sw] = zidot;
                sig[sw] = s;
                val[i] = s * zi - mid[i];
                der[i] = s * zidot;
                break;
            }
            default:  // smooth unary
                val[i] = slope[i] * val[nd.a];
                der[i] = slope[i] * der[nd.a];
                break;
        }
    }
}

}  // namespace detail

/// Split [p,q] (increment-space endpoints relative to the model midpoint)
/// into maximal subintervals of constant signature.
inline SegmentDecomposition decompose_segment(const PLModel& m,
                                              std::span<const double> p,
                                              std::span<const double> q,
                                              const SegmentOptions& opt = {}) {
    const std::size_t n = m.dim_in();
    const std::size_t n_nodes = m.tape().n_nodes();
    const std::size_t n_sw = m.tape().n_abs();
    const std::size_t max_kinks =
        opt.max_kinks_base + opt.max_kinks_per_switch * n_sw;

    Vec dir(n);
    for (std::size_t i = 0; i < n; ++i) dir[i] = q[i] - p[i];

    SegmentDecomposition dec;
    Vec val(n_nodes), der(n_nodes), z(n_sw), zdot(n_sw);
    Vec dx(n), dy(m.dim_out());
    Signature sig(n_sw);

    auto record = [&](double tau) {
        for (std::size_t i = 0; i < n; ++i) dx[i] = p[i] + tau * dir[i];
        Vec out = m.increment(dx);
        const Vec& f0 = m.ref_value();
        for (std::size_t k = 0; k < out.size(); ++k) {
            out[k] += f0[k];
            if (!std::isfinite(out[k]))
                throw std::runtime_error("nonfinite value in segment decomposition");
        }
        dec.params.push_back(tau);
        dec.values.push_back(std::move(out));
        Vec pt(n);
        const Vec& mid = m.midpoint();
        for (std::size_t i = 0; i < n; ++i) pt[i] = mid[i] + dx[i];
        dec.kink_points.push_back(std::move(pt));
    };

    record(0.0);
    double tau = 0.0;
    while (tau < 1.0) {
        for (std::size_t i = 0; i < n; ++i) dx[i] = p[i] + tau * dir[i];
        detail::region_pass(m, dx, dir, val, der, z, zdot, sig);
        double tau_next = 1.0;
        for (std::size_t s = 0; s < n_sw; ++s) {
            if (zdot[s] == 0.0) continue;  // grazing: z constant, no crossing
            double t_star = tau - z[s] / zdot[s];
            if (t_star > tau + opt.advance_eps && t_star < tau_next) tau_next = t_star;
        }
        dec.signatures.push_back(sig);
        record(tau_next);
        if (dec.params.size() > max_kinks + 2)
            throw SegmentOverflow("too many breakpoints along segment");
        tau = tau_next;
    }
    return dec;
}

/// Trapezoid over each affine subinterval: exact value of
/// the tau-normalized integral of the model along the decomposition.
inline Vec integrate_decomposition(const SegmentDecomposition& dec) {
    const std::size_t mdim = dec.values.front().size();
    Vec acc(mdim, 0.0);
    for (std::size_t i = 0; i + 1 < dec.params.size(); ++i) {
        double w = 0.5 * (dec.params[i + 1] - dec.params[i]);
        for (std::size_t k = 0; k < mdim; ++k)
            acc[k] += w * (dec.values[i][k] + dec.values[i + 1][k]);
    }
    return acc;
}

/// Running integral of the model up to each breakpoint; entry i holds
/// the tau-normalized integral over [0, tau_i].
inline std::vector<Vec> cumulative_integrals(const SegmentDecomposition& dec) {
    const std::size_t mdim = dec.values.front().size();
    std::vector<Vec> cum(dec.params.size(), Vec(mdim, 0.0));
    for (std::size_t i = 0; i + 1 < dec.params.size(); ++i) {
        double w = 0.5 * (dec.params[i + 1] - dec.params[i]);
        for (std::size_t k = 0; k < mdim; ++k)
            cum[i + 1][k] = cum[i][k] + w * (dec.values[i][k] + dec.values[i + 1][k]);
    }
    return cum;
}

/// Exact integral over tau in [0,1] of the nonincremental model along the
/// segment p -> q (increment-space coordinates).
inline Vec integrate_segment(const PLModel& m, std::span<const double> p,
                             std::span<const double> q,
                             const SegmentOptions& opt = {}) {
    return integrate_decomposition(decompose_segment(m, p, q, opt));
}

}  // namespace plode
