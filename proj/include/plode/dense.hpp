#pragma once

// Piecewise quadratic continuous output over one accepted step.
// On each kink subinterval [h*tau_i, h*tau_{i+1}] the interpolant is
//   p_i(t) = a_i t^2 + b_i t + c_i,  t in [0, h(tau_{i+1}-tau_i)]
// with c_i the kink state, b_i the kink slope and a_i the slope
// difference over twice the subinterval length. A classical step yields
// the familiar single quadratic.

#include <algorithm>
#include <span>
#include <stdexcept>
#include <vector>

#include "plode/step.hpp"

namespace plode {

struct DenseOutput {
    double h = 0.0;
    Vec tau;                // breakpoints including 0 and 1
    std::vector<Vec> a, b, c;  // one coefficient triple per subinterval

    /// Evaluate at t in [0, h].
    Vec eval(double t) const {
        if (t < 0.0 || t > h) throw std::out_of_range("dense output evaluated outside [0,h]");
        // Locate the subinterval: last i with h*tau_i <= t.
        auto it = std::upper_bound(tau.begin(), tau.end(), t / h);
        std::size_t i = static_cast<std::size_t>(it - tau.begin());
        i = std::min(std::max<std::size_t>(i, 1), tau.size() - 1) - 1;
        double tl = t - h * tau[i];
        Vec out(c[i].size());
        for (std::size_t k = 0; k < out.size(); ++k)
            out[k] = (a[i][k] * tl + b[i][k]) * tl + c[i][k];
        return out;
    }
};

inline DenseOutput dense_from_step(const StepResult& step) {
    if (step.params.size() < 2 || step.kink_states.size() != step.params.size() ||
        step.kink_slopes.size() != step.params.size())
        throw std::invalid_argument("dense_from_step: step carries no kink data");

    const double merge_eps = 1e-14;
    // Collapse degenerate subintervals first (keep the earlier node, but
    // never drop the final breakpoint at tau = 1).
    std::vector<std::size_t> keep{0};
    for (std::size_t i = 1; i < step.params.size(); ++i) {
        if (step.params[i] - step.params[keep.back()] < merge_eps) {
            if (i + 1 == step.params.size()) keep.back() = i;
            continue;
        }
        keep.push_back(i);
    }

    DenseOutput d;
    d.h = step.h;
    const std::size_t n = step.x_start.size();
    for (std::size_t j = 0; j < keep.size(); ++j) d.tau.push_back(step.params[keep[j]]);
    for (std::size_t j = 0; j + 1 < keep.size(); ++j) {
        std::size_t i0 = keep[j], i1 = keep[j + 1];
        double len = step.h * (step.params[i1] - step.params[i0]);
        Vec ai(n), bi(n), ci(n);
        for (std::size_t k = 0; k < n; ++k) {
            ci[k] = step.kink_states[i0][k];
            bi[k] = step.kink_slopes[i0][k];
            ai[k] = (step.kink_slopes[i1][k] - step.kink_slopes[i0][k]) / (2.0 * len);
        }
        d.a.push_back(std::move(ai));
        d.b.push_back(std::move(bi));
        d.c.push_back(std::move(ci));
    }
    return d;
}

}  // namespace plode
