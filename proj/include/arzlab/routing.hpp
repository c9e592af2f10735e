#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "arzlab/grid.hpp"
#include "arzlab/model.hpp"

namespace arzlab {

/// Routing-app feedback kernel a(y) on [0, L] plus its rescaled piecewise
/// form a_check(x) = (gamma p* - v*) a(mu* x) on [0, L/mu*], zero beyond.
struct RoutingGain {
    Field a;        ///< sampled a(y), units 1/m
    Field a_check;  ///< sampled rescaled kernel, zero past the breakpoint

    [[nodiscard]] double eval_a(double y) const { return lerp(a, y); }
    [[nodiscard]] double eval_a_check(double x) const { return lerp(a_check, x); }
    [[nodiscard]] bool is_zero() const { return max_abs(a) == 0.0; }
};

inline RoutingGain make_routing_gain(const std::function<double(double)>& a_fn,
                                     const Equilibrium& eq, int n_cells, double length) {
    RoutingGain g;
    g.a = sample_function(a_fn, n_cells, length);
    g.a_check = make_field(n_cells, length);
    const double breakpoint = length / eq.mu_star;
    for (std::size_t i = 0; i < g.a_check.nodes(); ++i) {
        const double x = g.a_check.x(i);
        g.a_check[i] = (x <= breakpoint) ? eq.lambda_v * a_fn(eq.mu_star * x) : 0.0;
    }
    return g;
}

inline RoutingGain zero_gain(const Equilibrium& eq, int n_cells, double length) {
    return make_routing_gain([](double) { return 0.0; }, eq, n_cells, length);
}

/// Integral of a(u + beta) w(u) over u in [0, L - beta]: trapezoid on whole
/// grid cells plus the cut cell, whose endpoint integrand a(L) w(L - beta) is
/// evaluated exactly. With beta = 0 this reduces to the plain trapezoid of
/// a * w over the grid, which is also how the routing inflow is computed.
inline double shifted_gain_integral(const RoutingGain& g, const Field& w, double beta) {
    const double len = w.length();
    const double upper = len - beta;
    if (upper <= 0.0) return 0.0;
    const double h = w.h;
    const auto full = static_cast<std::size_t>(std::floor(upper / h + 1e-12));
    double s = 0.0;
    double fa = g.eval_a(beta) * w[0];
    for (std::size_t j = 0; j < full; ++j) {
        const double fb = g.eval_a((j + 1) * h + beta) * w[j + 1];
        s += 0.5 * h * (fa + fb);
        fa = fb;
    }
    const double x0 = h * static_cast<double>(full);
    if (upper > x0 + 1e-12 * h)
        s += 0.5 * (upper - x0) * (fa + g.eval_a(len) * lerp(w, upper));
    return s;
}

/// Routing-app inflow: trapezoid of a * w over the road.
inline double routing_inflow(const RoutingGain& g, const Field& w) {
    return shifted_gain_integral(g, w, 0.0);
}

/// Accumulate scale * (nodal weights of shifted_gain_integral) into out, so
/// dot(out, w) reproduces the integral exactly. Lets the flattened gains use
/// the same quadrature as the transform-chain evaluation.
inline void accumulate_shifted_gain_weights(const RoutingGain& g, int n_cells, double h,
                                            double beta, double scale,
                                            std::vector<double>& out) {
    const double len = h * n_cells;
    const double upper = len - beta;
    if (upper <= 0.0) return;
    const auto full = static_cast<std::size_t>(std::floor(upper / h + 1e-12));
    for (std::size_t j = 0; j < full; ++j) {
        out[j] += scale * 0.5 * h * g.eval_a(j * h + beta);
        out[j + 1] += scale * 0.5 * h * g.eval_a((j + 1) * h + beta);
    }
    const double x0 = h * static_cast<double>(full);
    if (upper > x0 + 1e-12 * h) {
        const double du = upper - x0;
        const double t = du / h;  // lerp(w, upper) = (1-t) w[full] + t w[full+1]
        out[full] += scale * 0.5 * du * (g.eval_a(x0 + beta) + g.eval_a(len) * (1.0 - t));
        if (full + 1 < out.size()) out[full + 1] += scale * 0.5 * du * g.eval_a(len) * t;
    }
}

inline RoutingGain constant_gain(double amplitude, const Equilibrium& eq, int n_cells,
                                 double length) {
    return make_routing_gain([amplitude](double) { return amplitude; }, eq, n_cells, length);
}

inline RoutingGain gaussian_gain(double amplitude, double center, double width,
                                 const Equilibrium& eq, int n_cells, double length) {
    if (!(width > 0.0)) throw std::invalid_argument("gaussian gain width must be positive");
    auto fn = [=](double y) {
        const double z = (y - center) / width;
        return amplitude * std::exp(-0.5 * z * z);
    };
    return make_routing_gain(fn, eq, n_cells, length);
}

/// Piecewise-linear gain through (position, value) breakpoints.
inline RoutingGain table_gain(std::vector<std::pair<double, double>> pts,
                              const Equilibrium& eq, int n_cells, double length) {
    if (pts.size() < 2) throw std::invalid_argument("table gain needs at least two points");
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (!(pts[i].first > pts[i - 1].first))
            throw std::invalid_argument("table gain positions must be strictly increasing");
    auto fn = [pts = std::move(pts)](double y) {
        if (y <= pts.front().first) return pts.front().second;
        if (y >= pts.back().first) return pts.back().second;
        std::size_t i = 1;
        while (pts[i].first < y) ++i;
        const auto& [x0, f0] = pts[i - 1];
        const auto& [x1, f1] = pts[i];
        const double t = (y - x0) / (x1 - x0);
        return (1.0 - t) * f0 + t * f1;
    };
    return make_routing_gain(fn, eq, n_cells, length);
}

}  // namespace arzlab
