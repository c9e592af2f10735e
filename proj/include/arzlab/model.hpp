#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "arzlab/grid.hpp"

namespace arzlab {

/// Physical road parameters (SI units: m, s, veh/m, veh/s).
struct ModelParams {
    double v_f = 0.0;     ///< free-flow speed (m/s)
    double rho_m = 0.0;   ///< maximum density (veh/m)
    double gamma = 0.0;   ///< driver-aggressiveness exponent
    double tau = 0.0;     ///< relaxation time (s)
    double L = 0.0;       ///< road length (m)

    friend bool operator==(const ModelParams&, const ModelParams&) = default;

    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw std::invalid_argument(std::string("model parameter ") + name +
                                            " must be strictly positive and finite");
        };
        positive(v_f, "v_f");
        positive(rho_m, "rho_m");
        positive(gamma, "gamma");
        positive(tau, "tau");
        positive(L, "L");
    }
};

/// Congested equilibrium of the Greenshield-closed model, with every
/// coefficient the linearized boundary-control problem needs.
struct Equilibrium {
    double v_star = 0.0;     ///< equilibrium speed (m/s)
    double q_star = 0.0;     ///< equilibrium flow (veh/s)
    double rho_star = 0.0;   ///< equilibrium density (veh/m)
    double p_star = 0.0;     ///< equilibrium pressure (m/s)
    double k1 = 0.0;         ///< inflow reflection coefficient
    double k2 = 0.0;         ///< outflow attenuation coefficient
    double mu_star = 0.0;    ///< transport-speed ratio lambda_w / lambda_v
    double lambda_w = 0.0;   ///< w transport speed, = v_star (m/s)
    double lambda_v = 0.0;   ///< v transport speed, = gamma*p_star - v_star (m/s)

    /// gamma * p_star, the recurring pressure-stiffness scale.
    [[nodiscard]] double gamma_p() const { return lambda_v + v_star; }
};

/// Perturbation bounds keeping the linearization and the physical box valid.
/// eps_h1 is the sqrt(L) eps ball; because that factor does not bound the
/// sup norm for every profile, the record also carries the measured embedding
/// constant c_emb (L-infinity <= c_emb * H1 for every field) and the strict
/// ball eps / c_emb that genuinely guarantees membership of the pointwise box.
struct AdmissibilitySpec {
    double eps0 = 0.0;           ///< box radius in (v~, q~) physical perturbations
    double eps = 0.0;            ///< box radius in diagonalized (v, w) coordinates
    double eps_h1 = 0.0;         ///< H1-ball radius sqrt(L) * eps
    double c_emb = 0.0;          ///< embedding constant sqrt(1 + 1/L)
    double eps_h1_strict = 0.0;  ///< H1 radius eps / c_emb implying the pointwise box
};

/// Equilibrium flow compatible with a chosen equilibrium speed.
inline double compatible_flow(const ModelParams& p, double v_star) {
    return p.rho_m * v_star * std::pow((p.v_f - v_star) / p.v_f, 1.0 / p.gamma);
}

inline Equilibrium compute_equilibrium(const ModelParams& p, double v_star) {
    p.validate();
    if (!(v_star > 0.0) || !std::isfinite(v_star))
        throw std::invalid_argument("equilibrium speed must be strictly positive");
    if (!(v_star < p.v_f))
        throw std::invalid_argument("equilibrium speed must lie below the free-flow speed");

    Equilibrium eq;
    eq.v_star = v_star;
    eq.p_star = p.v_f - v_star;  // Greenshield closure at equilibrium
    eq.q_star = compatible_flow(p, v_star);
    eq.rho_star = eq.q_star / v_star;
    const double gp = p.gamma * eq.p_star;
    eq.lambda_w = v_star;
    eq.lambda_v = gp - v_star;
    eq.k1 = (gp - v_star) / v_star;
    eq.k2 = std::exp(-p.L / (p.tau * v_star));
    eq.mu_star = eq.lambda_w / eq.lambda_v;
    return eq;
}

/// Congestion regime: 0 < v* < gamma/(gamma+1) * v_f (strict). Inside it both
/// transport speeds are positive and the diagonalized characteristics run in
/// opposite directions.
inline bool check_congestion(const Equilibrium& eq, const ModelParams& p) {
    return eq.v_star > 0.0 && eq.v_star < p.gamma / (p.gamma + 1.0) * p.v_f;
}

/// Interior coupling coefficient c(x) = -(1/tau) exp(-x / (tau v*)).
inline double coeff_c(double x, const Equilibrium& eq, const ModelParams& p) {
    return -std::exp(-x / (p.tau * eq.v_star)) / p.tau;
}

/// Weight turning the flow combination q~ - theta*v~ into an exactly
/// transported invariant; theta = q*(1/v* - 1/(gamma p*)).
inline double riemann_weight(double x, const Equilibrium& eq, const ModelParams& p) {
    return std::exp(x / (p.tau * eq.v_star));
}

inline double riemann_theta(const Equilibrium& eq) {
    return eq.q_star * (1.0 / eq.v_star - 1.0 / eq.gamma_p());
}

/// Diagonalizing change of variables at position x:
///   v = (q*/(gamma p*)) v~,   w = e^{x/(tau v*)} (q~ - theta v~).
/// The exponential weight is what makes w a pure transport invariant of the
/// linearized dynamics; at x = 0 the map reduces to the unweighted flow form.
inline void riemann_forward_at(double x, double v_tilde, double q_tilde,
                               const Equilibrium& eq, const ModelParams& p,
                               double& v, double& w) {
    const double theta = riemann_theta(eq);
    v = eq.q_star / eq.gamma_p() * v_tilde;
    w = riemann_weight(x, eq, p) * (q_tilde - theta * v_tilde);
}

inline void riemann_inverse_at(double x, double v, double w,
                               const Equilibrium& eq, const ModelParams& p,
                               double& v_tilde, double& q_tilde) {
    const double theta = riemann_theta(eq);
    v_tilde = eq.gamma_p() / eq.q_star * v;
    q_tilde = w / riemann_weight(x, eq, p) + theta * v_tilde;
}

/// Field version of the diagonalizing map. Forward maps (v~, q~) -> (v, w);
/// inverse recovers (v~, q~) exactly (the map is affine and lower-triangular).
inline void riemann_forward(const Field& v_tilde, const Field& q_tilde,
                            const Equilibrium& eq, const ModelParams& p,
                            Field& v, Field& w) {
    require_same_grid(v_tilde, q_tilde);
    v = v_tilde;
    w = q_tilde;
    for (std::size_t i = 0; i < v.nodes(); ++i)
        riemann_forward_at(v_tilde.x(i), v_tilde[i], q_tilde[i], eq, p, v[i], w[i]);
}

inline void riemann_inverse(const Field& v, const Field& w,
                            const Equilibrium& eq, const ModelParams& p,
                            Field& v_tilde, Field& q_tilde) {
    require_same_grid(v, w);
    v_tilde = v;
    q_tilde = w;
    for (std::size_t i = 0; i < v.nodes(); ++i)
        riemann_inverse_at(v.x(i), v[i], w[i], eq, p, v_tilde[i], q_tilde[i]);
}

/// Perturbation bounds: eps0 is the min-distance of the equilibrium to the
/// physical box walls (q_max frozen at its equilibrium value rho_m * v*);
/// eps divides out the worst row sum of the (v,w) -> (v~,q~) map over x, so
/// an eps-box in (v,w) stays inside the eps0-box in physical perturbations.
inline AdmissibilitySpec admissible_bounds(const Equilibrium& eq, const ModelParams& p) {
    AdmissibilitySpec spec;
    const double q_max = p.rho_m * eq.v_star;
    spec.eps0 = std::min(std::min(q_max - eq.q_star, eq.q_star),
                         std::min(p.v_f - eq.v_star, eq.v_star));
    const double gp = eq.gamma_p();
    // Row sums of the inverse map; the weight e^{-x/(tau v*)} <= 1 so x = 0
    // is the worst case for the q~ row.
    const double row_v = gp / eq.q_star;
    const double row_q = (gp / eq.v_star - 1.0) + 1.0;
    spec.eps = spec.eps0 / std::max(row_v, row_q);
    spec.eps_h1 = std::sqrt(p.L) * spec.eps;
    // 1-D Agmon bound: |f|_inf^2 <= |f|_2^2 / L + 2 |f|_2 |f'|_2 <= (1 + 1/L) |f|_H1^2
    spec.c_emb = std::sqrt(1.0 + 1.0 / p.L);
    spec.eps_h1_strict = spec.eps / spec.c_emb;
    return spec;
}

}  // namespace arzlab
