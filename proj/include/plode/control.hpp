#pragma once

// Local error estimation and adaptive step-size control for the
// generalized trapezoidal rule.
//
// The estimate is the two-term bound
//   (1/12) h gamma |x_hat - x_check|^2
//   + beta * sum_i integral of |q_i(t)| over the kink subintervals,
// where q_i is the quadratic deviation of the dense interpolant from the
// chord of the step. The sup-norm integral of a vector of quadratics is
// computed exactly by splitting at every component root and every
// pairwise crossing, so the maximizing component and its sign are fixed
// on each piece.

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "plode/dense.hpp"
#include "plode/step.hpp"

namespace plode {

struct LipschitzEstimates {
    double beta = 0.0;   // Lipschitz constant of F
    double gamma = 0.0;  // curvature constant of the linearization
    enum class Source { user, sampled } source = Source::user;
};

struct ErrorEstimate {
    double total = 0.0;
    double term_curvature = 0.0;
    double term_deviation = 0.0;
};

/// Exact integral of |a t^2 + b t + c| over [0, L] by splitting at the
/// real roots of the quadratic.
inline double abs_quadratic_integral(double a, double b, double c, double L) {
    if (L <= 0.0) return 0.0;
    auto antideriv = [&](double t) { return ((a / 3.0 * t + b / 2.0) * t + c) * t; };

    double roots[2];
    int n_roots = 0;
    if (a == 0.0) {
        if (b != 0.0) roots[n_roots++] = -c / b;
    } else {
        double disc = b * b - 4.0 * a * c;
        if (disc > 0.0) {
            double sq = std::sqrt(disc);
            double qq = -0.5 * (b + (b >= 0.0 ? sq : -sq));
            double r1 = qq / a;
            double r2 = (qq != 0.0) ? c / qq : -b / a - r1;
            roots[n_roots++] = std::min(r1, r2);
            roots[n_roots++] = std::max(r1, r2);
        }
    }

    double cuts[4] = {0.0, L, L, L};
    int n_cuts = 1;
    for (int i = 0; i < n_roots; ++i)
        if (roots[i] > 0.0 && roots[i] < L) cuts[n_cuts++] = roots[i];
    cuts[n_cuts++] = L;

    double acc = 0.0;
    for (int i = 0; i + 1 < n_cuts; ++i)
        acc += std::fabs(antideriv(cuts[i + 1]) - antideriv(cuts[i]));
    return acc;
}

namespace detail {

inline void collect_quadratic_roots(double a, double b, double c, double L,
                                    Vec& cuts) {
    if (a == 0.0) {
        if (b != 0.0) {
            double r = -c / b;
            if (r > 0.0 && r < L) cuts.push_back(r);
        }
        return;
    }
    double disc = b * b - 4.0 * a * c;
    if (disc <= 0.0) return;
    double sq = std::sqrt(disc);
    double qq = -0.5 * (b + (b >= 0.0 ? sq : -sq));
    double r1 = qq / a;
    double r2 = (qq != 0.0) ? c / qq : -b / a - r1;
    for (double r : {r1, r2})
        if (r > 0.0 && r < L) cuts.push_back(r);
}

// Exact integral over [0,L] of max_k |a_k t^2 + b_k t + c_k|.
inline double infnorm_quadratic_integral_exact(std::span<const double> a,
                                               std::span<const double> b,
                                               std::span<const double> c, double L) {
    const std::size_t n = a.size();
    Vec cuts{0.0, L};
    for (std::size_t i = 0; i < n; ++i) {
        collect_quadratic_roots(a[i], b[i], c[i], L, cuts);
        for (std::size_t j = i + 1; j < n; ++j) {
            collect_quadratic_roots(a[i] - a[j], b[i] - b[j], c[i] - c[j], L, cuts);
            collect_quadratic_roots(a[i] + a[j], b[i] + b[j], c[i] + c[j], L, cuts);
        }
    }
    std::sort(cuts.begin(), cuts.end());
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        double t0 = cuts[i], t1 = cuts[i + 1];
        if (t1 - t0 <= 0.0) continue;
        double tm = 0.5 * (t0 + t1);
        std::size_t best = 0;
        double best_v = -1.0;
        for (std::size_t k = 0; k < n; ++k) {
            double v = std::fabs((a[k] * tm + b[k]) * tm + c[k]);
            if (v > best_v) {
                best_v = v;
                best = k;
            }
        }
        // Shift the winning quadratic to local coordinates on [0, t1-t0].
        double as = a[best];
        double bs = 2.0 * a[best] * t0 + b[best];
        double cs = (a[best] * t0 + b[best]) * t0 + c[best];
        acc += abs_quadratic_integral(as, bs, cs, t1 - t0);
    }
    return acc;
}

// 33-point composite Simpson fallback for high-dimensional systems.
inline double infnorm_quadratic_integral_simpson(std::span<const double> a,
                                                 std::span<const double> b,
                                                 std::span<const double> c, double L) {
    const int panels = 32;
    auto f = [&](double t) {
        double m = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k)
            m = std::max(m, std::fabs((a[k] * t + b[k]) * t + c[k]));
        return m;
    };
    double hstep = L / panels;
    double acc = f(0.0) + f(L);
    for (int i = 1; i < panels; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(i * hstep);
    return acc * hstep / 3.0;
}

inline double infnorm_quadratic_integral(std::span<const double> a,
                                         std::span<const double> b,
                                         std::span<const double> c, double L) {
    if (L <= 0.0) return 0.0;
    if (a.size() <= 32) return infnorm_quadratic_integral_exact(a, b, c, L);
    return infnorm_quadratic_integral_simpson(a, b, c, L);
}

}  // namespace detail

inline ErrorEstimate estimate_error(const StepResult& step,
                                    const LipschitzEstimates& consts) {
    if (!step.has_generalized_data() || step.params.size() < 2)
        throw std::invalid_argument("estimate_error: step carries no kink data");

    const std::size_t n = step.x_start.size();
    const double h = step.h;
    Vec dxh = vsub(step.x_end, step.x_start);  // x_hat - x_check

    ErrorEstimate est;
    double nd = norm_inf(dxh);
    est.term_curvature = consts.gamma * h * nd * nd / 12.0;

    Vec qa(n), qb(n), qc(n);
    double dev = 0.0;
    for (std::size_t i = 0; i + 1 < step.params.size(); ++i) {
        double dtau = step.params[i + 1] - step.params[i];
        if (dtau <= 0.0) continue;  // coincident kinks contribute nothing
        double L = h * dtau;
        for (std::size_t k = 0; k < n; ++k) {
            qa[k] = (step.kink_slopes[i + 1][k] - step.kink_slopes[i][k]) / (2.0 * L);
            qb[k] = step.kink_slopes[i][k] - dxh[k] / h;
            qc[k] = step.kink_states[i][k] - step.x_start[k] - step.params[i] * dxh[k];
        }
        dev += detail::infnorm_quadratic_integral(qa, qb, qc, L);
    }
    est.term_deviation = consts.beta * dev;
    est.total = est.term_curvature + est.term_deviation;
    return est;
}

/// Sampled surrogates for the Lipschitz and curvature constants around a
/// point, inflated by a safety factor of two.
inline LipschitzEstimates estimate_constants(const Tape& tape,
                                             std::span<const double> center,
                                             double radius, std::size_t samples,
                                             std::uint64_t seed = 0) {
    if (radius <= 0.0) throw std::invalid_argument("estimate_constants: radius must be positive");
    if (samples < 2) throw std::invalid_argument("estimate_constants: need at least 2 samples");
    const std::size_t n = center.size();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    auto draw = [&] {
        Vec x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = center[i] + radius * unit(rng);
        return x;
    };

    std::vector<Vec> pts(samples);
    std::vector<Vec> vals(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        pts[i] = draw();
        vals[i] = tape.evaluate(pts[i]);
    }

    double beta = 0.0;
    bool any_pair = false;
    for (std::size_t i = 0; i < samples; ++i)
        for (std::size_t j = i + 1; j < samples; ++j) {
            double d = dist_inf(pts[i], pts[j]);
            if (d == 0.0) continue;
            any_pair = true;
            beta = std::max(beta, dist_inf(vals[i], vals[j]) / d);
        }
    if (!any_pair) throw std::invalid_argument("estimate_constants: degenerate sampling");

    double gamma = 0.0;
    std::uniform_int_distribution<std::size_t> pick(0, samples - 1);
    for (std::size_t trial = 0; trial < samples; ++trial) {
        std::size_t iu = pick(rng), iw = pick(rng), iv = pick(rng);
        double dw = dist_inf(pts[iu], pts[iw]);
        double dv = dist_inf(pts[iu], pts[iv]);
        if (dw == 0.0 || dv == 0.0) continue;
        PLModel m = linearize_secant(tape, pts[iw], pts[iv]);
        Vec approx = m.nonincremental(pts[iu]);
        gamma = std::max(gamma, 2.0 * dist_inf(vals[iu], approx) / (dw * dv));
    }

    LipschitzEstimates est;
    est.beta = 2.0 * beta;
    est.gamma = 2.0 * gamma;
    est.source = LipschitzEstimates::Source::sampled;
    return est;
}

struct StepLimits {
    double fac_min = 0.2;
    double fac_max = 5.0;
    double safety = 0.9;
};

struct StepProposal {
    bool accept = false;
    double h_new = 0.0;
};

/// Elementary controller for a method of local order three.
inline StepProposal propose_step(const ErrorEstimate& est, double tol, double h,
                                 const StepLimits& lim = {}) {
    constexpr double tiny = 1e-300;
    StepProposal p;
    p.accept = est.total <= tol;
    double fac = lim.safety * std::cbrt(tol / std::max(est.total, tiny));
    p.h_new = h * std::clamp(fac, lim.fac_min, lim.fac_max);
    return p;
}

struct AdaptiveOptions {
    double h0 = 0.0;  // 0: (t_end - t0) / 100
    double h_min_rel = 1e-12;
    StepLimits limits{};
    std::size_t max_steps = 50'000'000;
    bool keep_steps = false;
};

/// Accept/reject loop: generalized trapezoidal step, two-term estimate,
/// order-3 controller. Fixed-point divergence counts as a rejection with
/// the step halved.
inline Trajectory integrate_adaptive(const IVP& ivp, double tol,
                                     const LipschitzEstimates& consts,
                                     const FPOptions& fp = {},
                                     const AdaptiveOptions& opt = {}) {
    if (tol <= 0.0) throw std::invalid_argument("integrate_adaptive: tol must be positive");
    Trajectory traj;
    traj.times.push_back(ivp.t0);
    traj.states.push_back(ivp.x0);
    const double span_t = ivp.t_end - ivp.t0;
    const double h_min = opt.h_min_rel * span_t;
    double h = opt.h0 > 0.0 ? opt.h0 : span_t / 100.0;
    Vec x = ivp.x0;
    double t = ivp.t0;

    while (t < ivp.t_end) {
        if (traj.stats.accepted + traj.stats.rejected >= opt.max_steps) {
            traj.completed = false;
            traj.diagnostic = "step budget exhausted";
            return traj;
        }
        double h_try = std::min(h, ivp.t_end - t);
        StepResult s;
        try {
            s = generalized_trap_step(*ivp.tape, x, h_try, fp);
        } catch (const FixedPointDivergence&) {
            ++traj.stats.rejected;
            h = 0.5 * h_try;
            if (h < h_min) {
                traj.completed = false;
                traj.diagnostic = "step size underflow after fixed-point divergence at t = " +
                                  std::to_string(t);
                return traj;
            }
            continue;
        }
        traj.stats.fp_iterations += static_cast<std::size_t>(s.fp_iterations);
        ErrorEstimate est = estimate_error(s, consts);
        StepProposal prop = propose_step(est, tol, h_try, opt.limits);
        traj.estimates.push_back({t, h_try, est.total, est.term_curvature,
                                  est.term_deviation, prop.accept});
        if (prop.accept) {
            t += h_try;
            x = s.x_end;
            traj.times.push_back(t);
            traj.states.push_back(x);
            if (opt.keep_steps) traj.steps.push_back(std::move(s));
            ++traj.stats.accepted;
        } else {
            ++traj.stats.rejected;
        }
        h = prop.h_new;
        if (h < h_min) {
            traj.completed = false;
            traj.diagnostic = "step size underflow at t = " + std::to_string(t);
            return traj;
        }
    }
    return traj;
}

}  // namespace plode
