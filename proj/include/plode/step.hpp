#pragma once

// Single-step integrators for autonomous IVPs with piecewise smooth right
// hand side:
//
//   classical   : x_hat = x + h/2 (F(x) + F(x_hat))
//   generalized : x_hat = x + h * integral of the secant model along the
//                 chord from x to x_hat (exact, kink by kink)
//   midpoint    : tangent model re-linearized at the running midpoint
//
// All three solve their implicit equation by plain fixed-point iteration
// from an explicit Euler predictor. Contraction holds for h below a
// problem-dependent bound; divergence is reported and treated as a step
// rejection by the adaptive driver.

#include <limits>
#include <optional>
#include <span>
#include <tuple>
#include <stdexcept>
#include <string>
#include <vector>

#include "plode/segment.hpp"

namespace plode {

enum class Method { classical, generalized, midpoint };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::classical: return "classical";
        case Method::generalized: return "generalized";
        case Method::midpoint: return "midpoint";
    }
    return "?";
}

/// Where the kink slopes xdot_i for dense output come from: the model
/// values (makes the interpolant exactly continuous) or the raw right
/// hand side F at the kink states. The difference is O(h^2).
enum class SlopeSource { model, rhs };

struct FPOptions {
    double atol = 1e-12;
    double rtol = 1e-12;
    int max_iter = 50;
    int patience = 5;  // consecutive nondecreasing residuals before giving up
    SlopeSource slope_source = SlopeSource::model;
};

class FixedPointDivergence : public std::runtime_error {
public:
    FixedPointDivergence(double residual, int iterations)
        : std::runtime_error("fixed-point iteration diverged (residual " +
                             std::to_string(residual) + " after " +
                             std::to_string(iterations) + " iterations)"),
          residual(residual),
          iterations(iterations) {}
    double residual;
    int iterations;
};

struct IVP {
    const Tape* tape = nullptr;  // autonomous right hand side, n = m
    Vec x0;
    double t0 = 0.0;
    double t_end = 1.0;
};

struct StepResult {
    Method method = Method::generalized;
    Vec x_start;
    Vec x_end;
    double h = 0.0;
    // Kink data (always {0,1} endpoints for the classical rule).
    Vec params;                    // tau_0 = 0 .. tau_{k+1} = 1
    std::vector<Vec> kink_states;  // trajectory values at each tau_i
    std::vector<Vec> kink_slopes;  // slopes at each tau_i
    SegmentDecomposition decomposition;  // empty for the classical rule
    std::optional<PLModel> model;        // model at acceptance (generalized/midpoint)
    int fp_iterations = 0;
    double fp_residual = 0.0;

    bool has_generalized_data() const { return method != Method::classical; }
};

namespace detail {

// Fixed-point loop shared by all three rules. `apply` maps the current
// iterate to the next one; returns (x, iterations, final residual).
template <class ApplyFn>
inline std::tuple<Vec, int, double> fixed_point(Vec x, const ApplyFn& apply,
                                                const FPOptions& fp) {
    double prev_res = std::numeric_limits<double>::infinity();
    int bad = 0;
    for (int it = 1; it <= fp.max_iter; ++it) {
        Vec x_next = apply(x);
        double res = dist_inf(x_next, x);
        x = std::move(x_next);
        if (!std::isfinite(res)) throw FixedPointDivergence(res, it);
        if (res <= fp.atol + fp.rtol * norm_inf(x)) return {std::move(x), it, res};
        if (res >= prev_res) {
            if (++bad >= fp.patience) throw FixedPointDivergence(res, it);
        } else {
            bad = 0;
        }
        prev_res = res;
    }
    throw FixedPointDivergence(prev_res, fp.max_iter);
}

// Chord endpoints of a secant/midpoint model in increment space:
// x_lo - mid = -(x_hi - x_lo)/2 and +(x_hi - x_lo)/2.
inline std::pair<Vec, Vec> chord_increments(std::span<const double> lo,
                                            std::span<const double> hi) {
    Vec p(lo.size()), q(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) {
        double d = 0.5 * (hi[i] - lo[i]);
        p[i] = -d;
        q[i] = d;
    }
    return {std::move(p), std::move(q)};
}

inline void fill_kink_data(StepResult& r, const Tape& tape, const FPOptions& fp) {
    auto [p, q] = chord_increments(r.x_start, r.x_end);
    const PLModel& m = *r.model;
    r.decomposition = decompose_segment(m, p, q);
    auto cum = cumulative_integrals(r.decomposition);
    r.params = r.decomposition.params;
    r.kink_states.clear();
    r.kink_slopes.clear();
    for (std::size_t i = 0; i < r.params.size(); ++i) {
        r.kink_states.push_back(vaxpy(r.x_start, r.h, cum[i]));
        if (fp.slope_source == SlopeSource::model)
            r.kink_slopes.push_back(r.decomposition.values[i]);
        else
            r.kink_slopes.push_back(tape.evaluate(r.kink_states[i]));
    }
    // The last partial integral is the full step; pin the endpoint exactly.
    r.kink_states.back() = r.x_end;
}

}  // namespace detail

inline StepResult classical_trap_step(const Tape& tape, std::span<const double> x,
                                      double h, const FPOptions& fp = {}) {
    Vec fx = tape.evaluate(x);
    Vec x0(x.begin(), x.end());
    auto [x_hat, iters, res] = detail::fixed_point(
        vaxpy(x0, h, fx),
        [&](const Vec& xk) {
            Vec fxk = tape.evaluate(xk);
            Vec out(x0.size());
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = x0[i] + 0.5 * h * (fx[i] + fxk[i]);
            return out;
        },
        fp);

    StepResult r;
    r.method = Method::classical;
    r.x_start = x0;
    r.x_end = x_hat;
    r.h = h;
    r.fp_iterations = iters;
    r.fp_residual = res;
    r.params = {0.0, 1.0};
    r.kink_states = {x0, x_hat};
    r.kink_slopes = {fx, tape.evaluate(x_hat)};
    return r;
}

inline StepResult generalized_trap_step(const Tape& tape, std::span<const double> x,
                                        double h, const FPOptions& fp = {}) {
    Vec fx = tape.evaluate(x);
    Vec x0(x.begin(), x.end());
    auto [x_hat, iters, res] = detail::fixed_point(
        vaxpy(x0, h, fx),
        [&](const Vec& xk) {
            PLModel m = linearize_secant(tape, x0, xk);
            auto [p, q] = detail::chord_increments(x0, xk);
            Vec integral = integrate_segment(m, p, q);
            return vaxpy(x0, h, integral);
        },
        fp);

    StepResult r;
    r.method = Method::generalized;
    r.x_start = x0;
    r.x_end = std::move(x_hat);
    r.h = h;
    r.fp_iterations = iters;
    r.fp_residual = res;
    r.model = linearize_secant(tape, r.x_start, r.x_end);
    detail::fill_kink_data(r, tape, fp);
    return r;
}

inline StepResult generalized_midpoint_step(const Tape& tape,
                                            std::span<const double> x, double h,
                                            const FPOptions& fp = {}) {
    Vec fx = tape.evaluate(x);
    Vec x0(x.begin(), x.end());
    auto [x_hat, iters, res] = detail::fixed_point(
        vaxpy(x0, h, fx),
        [&](const Vec& xk) {
            Vec mid(x0.size());
            for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = 0.5 * (x0[i] + xk[i]);
            PLModel m = linearize_tangent(tape, mid);
            auto [p, q] = detail::chord_increments(x0, xk);
            Vec integral = integrate_segment(m, p, q);
            return vaxpy(x0, h, integral);
        },
        fp);

    StepResult r;
    r.method = Method::midpoint;
    r.x_start = x0;
    r.x_end = std::move(x_hat);
    r.h = h;
    r.fp_iterations = iters;
    r.fp_residual = res;
    Vec mid(x0.size());
    for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = 0.5 * (x0[i] + r.x_end[i]);
    r.model = linearize_tangent(tape, mid);
    detail::fill_kink_data(r, tape, fp);
    return r;
}

inline StepResult take_step(const Tape& tape, std::span<const double> x, double h,
                            Method method, const FPOptions& fp = {}) {
    switch (method) {
        case Method::classical: return classical_trap_step(tape, x, h, fp);
        case Method::generalized: return generalized_trap_step(tape, x, h, fp);
        case Method::midpoint: return generalized_midpoint_step(tape, x, h, fp);
    }
    throw std::logic_error("unknown method");
}

/// (4 * x_two_halves - x_full) / 3: cancels the leading error term of a
/// second-order method.
inline Vec richardson_extrapolate(std::span<const double> x_full,
                                  std::span<const double> x_two_halves) {
    Vec r(x_full.size());
    for (std::size_t i = 0; i < r.size(); ++i)
        r[i] = (4.0 * x_two_halves[i] - x_full[i]) / 3.0;
    return r;
}

struct TrajectoryStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t fp_iterations = 0;
};

/// Per-step error-estimate record, filled by the adaptive driver.
struct StepEstimateRecord {
    double t = 0.0;
    double h = 0.0;
    double total = 0.0;
    double term_curvature = 0.0;
    double term_deviation = 0.0;
    bool accepted = true;
};

struct Trajectory {
    Vec times;
    std::vector<Vec> states;
    std::vector<StepResult> steps;  // only when requested
    std::vector<StepEstimateRecord> estimates;  // adaptive runs only
    TrajectoryStats stats;
    bool completed = true;
    std::string diagnostic;
};

struct FixedGridOptions {
    bool keep_steps = false;
};

/// Uniform-step integration; the last step is shortened to land on t_end.
/// With `extrapolate` two chains run side by side (step h and step h/2)
/// and each reported state is the Richardson combination of the two;
/// propagation stays on the unextrapolated grids.
inline Trajectory integrate_fixed(const IVP& ivp, double h, Method method,
                                  bool extrapolate = false, const FPOptions& fp = {},
                                  const FixedGridOptions& opt = {}) {
    Trajectory traj;
    traj.times.push_back(ivp.t0);
    traj.states.push_back(ivp.x0);
    Vec x_coarse = ivp.x0;
    Vec x_fine = ivp.x0;
    const double span_t = ivp.t_end - ivp.t0;
    const auto n_steps = static_cast<std::size_t>(std::ceil(span_t / h - 1e-9));
    try {
        for (std::size_t i = 0; i < n_steps; ++i) {
            double t_next = (i + 1 == n_steps) ? ivp.t_end : ivp.t0 + (i + 1.0) * h;
            double hi = t_next - traj.times.back();
            StepResult s = take_step(*ivp.tape, x_coarse, hi, method, fp);
            traj.stats.fp_iterations += static_cast<std::size_t>(s.fp_iterations);
            x_coarse = s.x_end;
            if (extrapolate) {
                StepResult f1 = take_step(*ivp.tape, x_fine, 0.5 * hi, method, fp);
                StepResult f2 = take_step(*ivp.tape, f1.x_end, 0.5 * hi, method, fp);
                traj.stats.fp_iterations +=
                    static_cast<std::size_t>(f1.fp_iterations + f2.fp_iterations);
                x_fine = f2.x_end;
                traj.states.push_back(richardson_extrapolate(x_coarse, x_fine));
            } else {
                traj.states.push_back(x_coarse);
                if (opt.keep_steps) traj.steps.push_back(std::move(s));
            }
            traj.times.push_back(t_next);
            ++traj.stats.accepted;
        }
    } catch (const FixedPointDivergence& e) {
        traj.completed = false;
        traj.diagnostic = std::string("step failure at t = ") +
                          std::to_string(traj.times.back()) + ": " + e.what();
    }
    return traj;
}

}  // namespace plode
