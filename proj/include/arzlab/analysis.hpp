#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "arzlab/grid.hpp"
#include "arzlab/model.hpp"

namespace arzlab {

struct Norms {
    double l2 = 0.0;
    double h1 = 0.0;
    double linf = 0.0;
};

namespace detail {

/// Nodal derivative: central in the interior, one-sided at the boundaries.
inline std::vector<double> node_derivative(const Field& f) {
    const std::size_t n = f.nodes();
    std::vector<double> d(n, 0.0);
    if (n < 2) return d;
    d[0] = (f[1] - f[0]) / f.h;
    d[n - 1] = (f[n - 1] - f[n - 2]) / f.h;
    for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (f[i + 1] - f[i - 1]) / (2.0 * f.h);
    return d;
}

inline double l2_sq(const Field& f) {
    std::vector<double> sq(f.nodes());
    for (std::size_t i = 0; i < f.nodes(); ++i) sq[i] = f[i] * f[i];
    return trapz(sq, f.h);
}

}  // namespace detail

/// Trapezoid L2, H1 (values plus nodal derivative), and max-abs of a field.
inline Norms discrete_norms(const Field& f) {
    Norms n;
    const double v2 = detail::l2_sq(f);
    const std::vector<double> d = detail::node_derivative(f);
    std::vector<double> dsq(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) dsq[i] = d[i] * d[i];
    n.l2 = std::sqrt(v2);
    n.h1 = std::sqrt(v2 + trapz(dsq, f.h));
    n.linf = max_abs(f);
    return n;
}

/// Norms of a pair, combined in quadrature (max for L-infinity).
inline Norms discrete_norms(const Field& a, const Field& b) {
    require_same_grid(a, b);
    const Norms na = discrete_norms(a);
    const Norms nb = discrete_norms(b);
    Norms n;
    n.l2 = std::sqrt(na.l2 * na.l2 + nb.l2 * nb.l2);
    n.h1 = std::sqrt(na.h1 * na.h1 + nb.h1 * nb.h1);
    n.linf = std::max(na.linf, nb.linf);
    return n;
}

/// H1 norm with the derivative taken one-sidedly per grid cell, so no
/// difference ever straddles a node. Safe for fields with kinks at nodes
/// (the snapped transform breakpoint in particular).
inline double h1_norm_piecewise(const Field& f) {
    double dsum = 0.0;
    for (int j = 0; j < f.cells(); ++j) {
        const double d = (f[j + 1] - f[j]) / f.h;
        dsum += f.h * d * d;
    }
    return std::sqrt(detail::l2_sq(f) + dsum);
}

inline double h1_norm_piecewise(const Field& a, const Field& b) {
    require_same_grid(a, b);
    const double na = h1_norm_piecewise(a);
    const double nb = h1_norm_piecewise(b);
    return std::sqrt(na * na + nb * nb);
}

/// Exponential weights of the target-system Lyapunov functional.
struct LyapunovSpec {
    double delta1 = 0.0, delta2 = 0.0, delta3 = 0.0, delta4 = 0.0;  // 1/m
    double d1 = 0.0;  ///< must exceed mu*
    double d2 = 0.0;  ///< must exceed 1/mu*

    void validate(const Equilibrium& eq) const {
        if (!(delta1 > 0.0 && delta2 > 0.0 && delta3 > 0.0 && delta4 > 0.0))
            throw std::invalid_argument("Lyapunov weights delta_i must be positive");
        if (!(d1 > eq.mu_star))
            throw std::invalid_argument("Lyapunov weight d1 must exceed mu*");
        if (!(d2 > 1.0 / eq.mu_star))
            throw std::invalid_argument("Lyapunov weight d2 must exceed 1/mu*");
    }

    static LyapunovSpec defaults(const Equilibrium& eq, double road_length) {
        LyapunovSpec s;
        s.delta1 = s.delta2 = s.delta3 = s.delta4 = 1.0 / road_length;
        s.d1 = eq.mu_star + 1.0;
        s.d2 = 1.0 / eq.mu_star + 1.0;
        return s;
    }
};

/// V = int e^{-d1 x} w^2 + d1 e^{d2 x} xi^2 + e^{-d3 x} (dx w)^2
///       + d2 e^{d4 x} (dx xi)^2, evaluated on the target variables.
inline double lyapunov_value(const Field& w, const Field& xi, const LyapunovSpec& spec,
                             const Equilibrium& eq) {
    spec.validate(eq);
    require_same_grid(w, xi);
    const std::vector<double> dw = detail::node_derivative(w);
    const std::vector<double> dxi = detail::node_derivative(xi);
    std::vector<double> integrand(w.nodes());
    for (std::size_t i = 0; i < w.nodes(); ++i) {
        const double x = w.x(i);
        integrand[i] = std::exp(-spec.delta1 * x) * w[i] * w[i] +
                       spec.d1 * std::exp(spec.delta2 * x) * xi[i] * xi[i] +
                       std::exp(-spec.delta3 * x) * dw[i] * dw[i] +
                       spec.d2 * std::exp(spec.delta4 * x) * dxi[i] * dxi[i];
    }
    return trapz(integrand, w.h);
}

/// Overshoot and decay-rate constants implied by a Lyapunov spec.
inline void theory_constants(const LyapunovSpec& spec, const Equilibrium& eq,
                             double road_length, double& m1, double& gamma_rate) {
    const double L = road_length;
    m1 = std::max(std::exp(spec.delta2 * L), std::exp(spec.delta4 * L)) /
         std::min(std::exp(-spec.delta1 * L), std::exp(-spec.delta3 * L));
    gamma_rate = 0.25 * std::min(std::min(spec.delta1 * eq.v_star, spec.delta3 * eq.v_star),
                                 std::min(spec.d1 * spec.delta2 * eq.lambda_v,
                                          spec.d2 * spec.delta4 * eq.lambda_v));
}

struct DecayFit {
    double m = 0.0;          ///< overshoot constant exp(intercept)/initial
    double gamma_fit = 0.0;  ///< fitted decay rate; +inf if series hit the floor
    bool converged_to_zero = false;
};

/// Least-squares log-linear fit of a norm series over the post-transient
/// window [0.2 t_final, t_final]. Samples below 1e-14 are excluded; if none
/// survive the series is reported as converged to zero.
inline DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& norm) {
    if (t.size() != norm.size() || t.size() < 10)
        throw std::invalid_argument("decay fit needs at least 10 aligned samples");
    const double t_final = t.back();
    const double t_min = 0.2 * t_final;
    const double floor = 1e-14;

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < t_min || norm[i] <= floor) continue;
        const double y = std::log(norm[i]);
        sx += t[i];
        sy += y;
        sxx += t[i] * t[i];
        sxy += t[i] * y;
        ++count;
    }
    DecayFit fit;
    if (count < 2) {
        fit.converged_to_zero = true;
        fit.gamma_fit = std::numeric_limits<double>::infinity();
        fit.m = 0.0;
        return fit;
    }
    const double denom = count * sxx - sx * sx;
    const double slope = (denom != 0.0) ? (count * sxy - sx * sy) / denom : 0.0;
    const double intercept = (sy - slope * sx) / count;
    fit.gamma_fit = -slope;
    const double initial = norm.front() > 0.0 ? norm.front() : 1.0;
    fit.m = std::exp(intercept) / initial;
    return fit;
}

/// Per-sample admissibility: the pointwise (v, w) box, its H1-ball
/// restriction, and the physical flow/velocity boxes after mapping back.
struct AdmissibilityFlags {
    bool linf_ok = true;       ///< pointwise box of radius eps
    bool h1_ok = true;         ///< H1 ball of radius sqrt(L) eps
    bool h1_strict_ok = true;  ///< strict ball eps / c_emb, implies linf_ok
    bool phys_ok = true;       ///< 0 < q < q_max, 0 < v < v_f pointwise
};

/// Stability verdict assembled from a recorded norm series.
struct StabilityReport {
    std::vector<double> t, l2, h1, linf;
    std::vector<AdmissibilityFlags> flags;
    DecayFit fit;
    bool fit_valid = false;  ///< false when the series is too short to fit
    double theory_m1 = 0.0;
    double theory_gamma = 0.0;
    double settling_time = -1.0;       ///< first t with H1 <= 1% of initial, -1 if never
    double first_violation_t = -1.0;   ///< first t with the pointwise flag down, -1 if never
    double admissible_fraction = 1.0;  ///< fraction of samples with all flags up
    bool stable = false;               ///< positive fitted rate (or floored to zero)
};

inline StabilityReport make_stability_report(std::vector<double> t, std::vector<double> l2,
                                             std::vector<double> h1, std::vector<double> linf,
                                             std::vector<AdmissibilityFlags> flags,
                                             const LyapunovSpec& spec, const Equilibrium& eq,
                                             double road_length) {
    StabilityReport rep;
    rep.t = std::move(t);
    rep.l2 = std::move(l2);
    rep.h1 = std::move(h1);
    rep.linf = std::move(linf);
    rep.flags = std::move(flags);
    theory_constants(spec, eq, road_length, rep.theory_m1, rep.theory_gamma);
    if (rep.t.size() >= 10) {
        rep.fit = fit_decay(rep.t, rep.h1);
        rep.fit_valid = true;
        rep.stable = rep.fit.converged_to_zero || rep.fit.gamma_fit > 0.0;
    }

    const double target = 0.01 * rep.h1.front();
    std::size_t ok = 0;
    for (std::size_t k = 0; k < rep.t.size(); ++k) {
        if (rep.settling_time < 0.0 && rep.h1[k] <= target) rep.settling_time = rep.t[k];
        const AdmissibilityFlags& f = rep.flags[k];
        if (rep.first_violation_t < 0.0 && !f.linf_ok) rep.first_violation_t = rep.t[k];
        if (f.linf_ok && f.h1_ok && f.phys_ok) ++ok;
    }
    rep.admissible_fraction =
        rep.t.empty() ? 1.0 : static_cast<double>(ok) / static_cast<double>(rep.t.size());
    return rep;
}

inline AdmissibilityFlags admissibility_monitor(const Field& v, const Field& w,
                                                const AdmissibilitySpec& spec,
                                                const Equilibrium& eq, const ModelParams& p) {
    AdmissibilityFlags flags;
    const Norms n = discrete_norms(v, w);
    flags.linf_ok = n.linf < spec.eps;
    flags.h1_ok = n.h1 < spec.eps_h1;
    flags.h1_strict_ok = n.h1 < spec.eps_h1_strict;
    const double q_max = p.rho_m * eq.v_star;
    for (std::size_t i = 0; i < v.nodes() && flags.phys_ok; ++i) {
        double v_tilde = 0.0, q_tilde = 0.0;
        riemann_inverse_at(v.x(i), v[i], w[i], eq, p, v_tilde, q_tilde);
        const double q_abs = eq.q_star + q_tilde;
        const double v_abs = eq.v_star + v_tilde;
        if (!(q_abs > 0.0 && q_abs < q_max && v_abs > 0.0 && v_abs < p.v_f))
            flags.phys_ok = false;
    }
    return flags;
}

}  // namespace arzlab
