#pragma once

// Benchmark problems: the rolling stone (piecewise linear Hamiltonian),
// the diode LC circuit (time encoded as the first state) and the scalar
// abs-linear model problem with closed-form branch solutions. Plus the
// experiment drivers: convergence study, single-kink-step study and
// energy study.

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "plode/control.hpp"
#include "plode/step.hpp"

namespace plode {

struct Problem {
    std::string name;
    std::shared_ptr<const Tape> tape;
    Vec x0;
    double t_end = 1.0;
    double period = 0.0;  // 0: no natural period
    std::function<Vec(double)> analytic;                       // optional
    std::function<double(std::span<const double>)> energy;     // optional
    enum class Reference { analytic, fine_step } reference = Reference::fine_step;
    FPOptions default_fp{};

    IVP ivp() const { return IVP{tape.get(), x0, 0.0, t_end}; }
    IVP ivp(double T) const { return IVP{tape.get(), x0, 0.0, T}; }
};

inline constexpr double rolling_stone_period = 2.0 * std::numbers::pi + 4.0;

inline double rolling_stone_potential(double x) {
    if (x <= -1.0) return 0.5 * (1.0 + x) * (1.0 + x);
    if (x >= 1.0) return 0.5 * (1.0 - x) * (1.0 - x);
    return 0.0;
}

inline Vec rolling_stone_analytic(double t) {
    const double pi = std::numbers::pi;
    double s = std::fmod(t, rolling_stone_period);
    if (s < 0.0) s += rolling_stone_period;
    if (s <= pi) return {1.0 + std::sin(s), std::cos(s)};
    if (s <= pi + 2.0) return {1.0 - (s - pi), -1.0};
    if (s <= 2.0 * pi + 2.0) return {-1.0 - std::sin(2.0 - s), std::cos(2.0 - s)};
    return {s - 3.0 - 2.0 * pi, 1.0};
}

/// x1' = x2, x2' = -x1 - |x1-1|/2 + |x1+1|/2, started on the planar
/// section at (1, 1). Switch order: x1-1 first, x1+1 second.
inline Problem rolling_stone() {
    TapeBuilder tb;
    NodeRef x1 = tb.input();
    NodeRef x2 = tb.input();
    NodeRef one = tb.constant(1.0);
    NodeRef a1 = tb.abs(tb.sub(x1, one));
    NodeRef a2 = tb.abs(tb.add(x1, one));
    NodeRef rhs = tb.add(tb.sub(tb.neg(x1), tb.scale(0.5, a1)), tb.scale(0.5, a2));
    tb.output(x2);
    tb.output(rhs);

    Problem p;
    p.name = "rolling_stone";
    p.tape = std::make_shared<const Tape>(tb.build());
    p.x0 = {1.0, 1.0};
    p.period = rolling_stone_period;
    p.t_end = rolling_stone_period;
    p.analytic = rolling_stone_analytic;
    p.energy = [](std::span<const double> x) {
        return rolling_stone_potential(x[0]) + 0.5 * x[1] * x[1];
    };
    p.reference = Problem::Reference::analytic;
    return p;
}

struct DiodeConstants {
    double L = 1e-6;
    double C = 1e-13;
    double omega = 3e9;
    double alpha = 2.0;
    double beta = 1e-5;
};

/// LC circuit with the resistor replaced by an ideal-ish diode
/// g(z) = (z+|z|)/(2 alpha) + (z-|z|)/(2 beta). State: (time, charge,
/// current); nonautonomous forcing enters through x1' = 1.
inline Problem diode_circuit(const DiodeConstants& k = {}) {
    TapeBuilder tb;
    NodeRef x1 = tb.input();
    NodeRef x2 = tb.input();
    NodeRef x3 = tb.input();
    NodeRef z = tb.scale(k.C, x3);
    NodeRef az = tb.abs(z);
    NodeRef g = tb.add(tb.scale(1.0 / (2.0 * k.alpha), tb.add(z, az)),
                       tb.scale(1.0 / (2.0 * k.beta), tb.sub(z, az)));
    NodeRef forcing = tb.scale(k.C, tb.sin(tb.scale(k.omega, x1)));
    NodeRef inner = tb.add(tb.sub(x2, forcing), g);
    NodeRef d3 = tb.scale(-1.0 / (k.L * k.C), inner);
    tb.output(tb.constant(1.0));
    tb.output(x3);
    tb.output(d3);

    Problem p;
    p.name = "diode";
    p.tape = std::make_shared<const Tape>(tb.build());
    p.x0 = {0.0, 0.0, 0.0};
    p.period = 2.0 * std::numbers::pi / k.omega;
    p.t_end = 3.0 * p.period;
    p.reference = Problem::Reference::fine_step;
    // States live at circuit scale (1e-13 .. 1e-9); the stock absolute
    // tolerance would stop the inner iteration before it has done anything.
    p.default_fp.atol = 1e-22;
    p.default_fp.rtol = 1e-13;
    return p;
}

/// Scalar model problem x' = a|x| + b x + 1.  The right hand side has slope
/// a + b on x >= 0 and b - a on x < 0; starting from x(0) = 0 the trajectory
/// crosses the kink exactly once, at t = 0.
inline Problem abslinear(double a = 2.25, double b = -1.25) {
    if (b - a == 0.0 || b + a == 0.0)
        throw std::invalid_argument("abslinear: degenerate branch slope");
    TapeBuilder tb;
    NodeRef x = tb.input();
    NodeRef rhs = tb.add(tb.add(tb.scale(a, tb.abs(x)), tb.scale(b, x)), tb.constant(1.0));
    tb.output(rhs);

    const double m_pos = a + b, m_neg = b - a;
    Problem p;
    p.name = "abslinear";
    p.tape = std::make_shared<const Tape>(tb.build());
    p.x0 = {0.0};
    p.t_end = 1.0;
    p.analytic = [m_pos, m_neg](double t) -> Vec {
        if (t >= 0.0) return {std::expm1(t * m_pos) / m_pos};
        return {std::expm1(t * m_neg) / m_neg};
    };
    p.reference = Problem::Reference::analytic;
    return p;
}

/// Exact flow of the abs-linear right hand side from an arbitrary start,
/// handling the branch switch at x = 0 (forward time only).
inline double abslinear_flow(double a, double b, double x0, double t) {
    double x = x0, rem = t;
    for (int guard = 0; guard < 64 && rem > 0.0; ++guard) {
        // at x = 0 the flow moves in the direction of xdot = 1 > 0
        double m = (x >= 0.0) ? a + b : b - a;
        if (m == 0.0) {
            double cross = x < 0.0 ? -x : std::numeric_limits<double>::infinity();
            if (cross < rem) {
                x = 0.0;
                rem -= cross;
                continue;
            }
            return x + rem;
        }
        // solution through x: (x + 1/m) e^{m s} - 1/m; zero at s* with
        // e^{m s*} = 1/(m x + 1)
        double u = m * x + 1.0;
        if (u > 0.0) {
            double s_star = -std::log(u) / m;
            if (s_star > 0.0 && s_star < rem) {
                x = 0.0;
                rem -= s_star;
                continue;
            }
        }
        return (x + 1.0 / m) * std::exp(m * rem) - 1.0 / m;
    }
    return x;
}

// ---------------------------------------------------------------------------
// Experiment drivers

struct ConvergenceRow {
    double h;
    double error;
    double order;  // pairwise order vs the previous level, NaN on the first
};

struct ConvergenceResult {
    std::vector<ConvergenceRow> rows;
    double fitted_order = 0.0;  // least-squares slope of log2 error vs log2 h
};

namespace detail {

inline double fit_order(const std::vector<ConvergenceRow>& rows) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (const auto& r : rows) {
        if (!(r.error > 0.0) || !std::isfinite(r.error)) continue;
        double lx = std::log2(r.h), ly = std::log2(r.error);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Reference states on the coarse grid times, either analytic or from one
// fine-step generalized run whose grid contains all requested times.
class ReferenceSolution {
public:
    ReferenceSolution(const Problem& p, double t_end, double h_ref, const FPOptions& fp) {
        if (p.analytic) {
            analytic_ = p.analytic;
            return;
        }
        h_ref_ = h_ref;
        Trajectory tr = integrate_fixed(p.ivp(t_end), h_ref, Method::generalized, false, fp);
        if (!tr.completed)
            throw std::runtime_error("reference solve failed: " + tr.diagnostic);
        states_ = std::move(tr.states);
    }

    Vec at(double t) const {
        if (analytic_) return analytic_(t);
        auto idx = static_cast<std::size_t>(std::llround(t / h_ref_));
        if (idx >= states_.size())
            throw std::runtime_error("reference lookup outside the solved range");
        return states_[idx];
    }

private:
    std::function<Vec(double)> analytic_;
    double h_ref_ = 0.0;
    std::vector<Vec> states_;
};

}  // namespace detail

/// Global-error convergence over a geometric list of step sizes. The
/// reference is the analytic solution when available, otherwise one
/// generalized run at h_min/64.
inline ConvergenceResult convergence_study(const Problem& problem, Method method,
                                           bool extrapolate, std::span<const double> h_list,
                                           double t_end = 0.0,
                                           const FPOptions* fp_opt = nullptr) {
    if (h_list.empty()) throw std::invalid_argument("convergence_study: empty h list");
    const FPOptions fp = fp_opt ? *fp_opt : problem.default_fp;
    if (t_end <= 0.0) t_end = problem.t_end;
    double h_min = h_list[0];
    for (double h : h_list) h_min = std::min(h_min, h);
    detail::ReferenceSolution ref(problem, t_end, h_min / 64.0, fp);

    ConvergenceResult res;
    for (double h : h_list) {
        Trajectory tr = integrate_fixed(problem.ivp(t_end), h, method, extrapolate, fp);
        if (!tr.completed)
            throw std::runtime_error("convergence run failed at h = " + std::to_string(h) +
                                     ": " + tr.diagnostic);
        double err = 0.0;
        for (std::size_t i = 0; i < tr.times.size(); ++i)
            err = std::max(err, dist_inf(tr.states[i], ref.at(tr.times[i])));
        ConvergenceRow row{h, err, std::numeric_limits<double>::quiet_NaN()};
        if (!res.rows.empty())
            row.order = std::log2(res.rows.back().error / err) /
                        std::log2(res.rows.back().h / h);
        res.rows.push_back(row);
    }
    res.fitted_order = detail::fit_order(res.rows);
    return res;
}

struct KinkStepRow {
    std::string method;
    double h;
    double error;
    double err_h2;
    double err_h3;
};

/// Local truncation error of a single step across the kink of the
/// abs-linear problem. The step starts on the negative branch at time
/// -theta h before the crossing, so the kink sits at fraction theta of
/// the step, and is measured against the exact state on the positive
/// branch at time (1-theta) h after the crossing.
inline std::vector<KinkStepRow> kink_step_study(double a, double b, double theta,
                                                std::span<const double> h_list,
                                                const FPOptions& fp = {}) {
    if (theta <= 0.0 || theta >= 1.0)
        throw std::invalid_argument("kink_step_study: theta must lie in (0,1)");
    Problem prob = abslinear(a, b);
    const Tape& tape = *prob.tape;
    const double m_pos = a + b, m_neg = b - a;

    std::vector<KinkStepRow> rows;
    for (double h : h_list) {
        double x_start = std::expm1(-theta * h * m_neg) / m_neg;
        double x_exact = std::expm1((1.0 - theta) * h * m_pos) / m_pos;
        if (!(x_start < 0.0 && x_exact > 0.0))
            throw std::runtime_error("kink_step_study: step does not cross the kink");
        Vec xs{x_start};

        auto emit = [&](const std::string& name, double x_end) {
            double err = std::fabs(x_end - x_exact);
            rows.push_back({name, h, err, err / (h * h), err / (h * h * h)});
        };
        auto one = [&](Method m) { return take_step(tape, xs, h, m, fp).x_end[0]; };
        auto two = [&](Method m) {
            Vec half = take_step(tape, xs, 0.5 * h, m, fp).x_end;
            return take_step(tape, half, 0.5 * h, m, fp).x_end[0];
        };

        for (Method m : {Method::classical, Method::generalized}) {
            double full = one(m);
            double fine = two(m);
            emit(method_name(m), full);
            emit(std::string(method_name(m)) + "_romberg",
                 (4.0 * fine - full) / 3.0);
        }
    }
    return rows;
}

struct EnergyStudyResult {
    double metric = 0.0;       // root sum square deviation from the initial energy
    Vec times;
    Vec energies;
    Vec deviations;            // per accepted step
};

/// Fixed-step run over n_periods periods, tracking the energy functional.
inline EnergyStudyResult energy_study(const Problem& problem, Method method, double h,
                                      double n_periods, const FPOptions& fp = {}) {
    if (!problem.energy)
        throw std::invalid_argument("energy_study: problem has no energy functional");
    double T = (problem.period > 0.0 ? problem.period : problem.t_end) * n_periods;
    Trajectory tr = integrate_fixed(problem.ivp(T), h, method, false, fp);
    if (!tr.completed)
        throw std::runtime_error("energy_study run failed: " + tr.diagnostic);

    EnergyStudyResult res;
    double e0 = problem.energy(tr.states.front());
    double acc = 0.0;
    for (std::size_t i = 0; i < tr.states.size(); ++i) {
        double e = problem.energy(tr.states[i]);
        res.times.push_back(tr.times[i]);
        res.energies.push_back(e);
        if (i > 0) {
            double dev = e - e0;
            res.deviations.push_back(dev);
            acc += dev * dev;
        }
    }
    res.metric = std::sqrt(acc);
    return res;
}

}  // namespace plode
