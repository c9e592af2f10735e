#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "arzlab/grid.hpp"
#include "arzlab/model.hpp"
#include "arzlab/routing.hpp"

namespace arzlab {

using CoeffFn = std::function<double(double)>;

/// Sampled backstepping kernels. k and l live on the lower triangle
/// {0 <= y <= x <= L} (row i holds columns j = 0..i), m on the upper triangle
/// {0 <= x <= y <= L} (row i holds columns j = i..N). n is the convolution
/// kernel of the final transform, sampled on [0, L].
struct KernelSet {
    std::vector<std::vector<double>> k;  ///< k(x_i, y_j), j <= i
    std::vector<std::vector<double>> l;  ///< l(x_i, y_j), j <= i
    std::vector<std::vector<double>> m;  ///< m(x_i, y_j), j >= i, stored at [i][j-i]
    std::vector<double> l_trace;         ///< l(x, 0)
    std::vector<double> n;               ///< convolution kernel n(x)
    double h = 0.0;

    [[nodiscard]] int cells() const { return static_cast<int>(l_trace.size()) - 1; }
    [[nodiscard]] double length() const { return h * cells(); }
    [[nodiscard]] double at_k(int i, int j) const { return k[i][j]; }
    [[nodiscard]] double at_l(int i, int j) const { return l[i][j]; }
    [[nodiscard]] double at_m(int i, int j) const { return m[i][j - i]; }

    [[nodiscard]] bool is_zero() const {
        return max_abs(l_trace) == 0.0 && max_abs(n) == 0.0;
    }
};

class KernelConvergenceError : public std::runtime_error {
  public:
    KernelConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what), final_residual(residual) {}
    double final_residual;
};

struct TraceSolution {
    std::vector<double> values;       ///< converged l(x, 0) samples
    std::vector<double> step_deltas;  ///< max-norm update per iteration
    int iterations = 0;
};

struct TraceSolveOptions {
    double tol = 1e-12;
    int max_iter = 200;
};

namespace detail {

/// Context for evaluating the characteristic-line integral representations.
struct KernelProblem {
    const Equilibrium& eq;
    const RoutingGain& gain;
    const CoeffFn& c;
    double h;       // grid spacing
    double length;  // road length L

    [[nodiscard]] double gp() const { return eq.gamma_p(); }
    [[nodiscard]] double vs() const { return eq.v_star; }
    [[nodiscard]] double lv() const { return eq.lambda_v; }
    [[nodiscard]] double mu() const { return eq.mu_star; }
    /// v*/(gamma p*), the slope of the diagonal foot map x -> sigma1(x, 0).
    [[nodiscard]] double mu_tilde() const { return eq.v_star / eq.gamma_p(); }
};

/// m(x, y) on the upper triangle from its two characteristic branches, split
/// along the characteristic through (0, L): feet land on the x = 0 edge when
/// y <= L - mu* x and on the y = L edge otherwise. Both edges carry zero data.
inline double eval_m(const KernelProblem& kp, double x, double y,
                     const std::vector<double>& trace) {
    const double vs = kp.vs();
    const double lv = kp.lv();
    if (y <= kp.length - kp.mu() * x) {
        const double s_max = x / lv;
        const double sigma2 = kp.mu() * x + y;
        auto f = [&](double s) {
            return vs * kp.gain.eval_a(sigma2 - vs * s) * lerp(trace, kp.h, lv * s);
        };
        return trapz_fn(f, 0.0, s_max, quad_intervals(x, kp.h));
    }
    const double s_max = (kp.length - y) / vs;
    const double sigma3 = x - (kp.length - y) / kp.mu();
    auto f = [&](double s) {
        return vs * kp.gain.eval_a(kp.length - vs * s) * lerp(trace, kp.h, lv * s + sigma3);
    };
    return trapz_fn(f, 0.0, s_max, quad_intervals(lv * s_max, kp.h));
}

/// l(x, y) on the lower triangle: datum carried from the diagonal foot
/// (sigma1, sigma1) through the transmission condition, plus the integral of
/// the c- and trace-forcing along the characteristic.
inline double eval_l(const KernelProblem& kp, double x, double y,
                     const std::vector<double>& trace) {
    const double vs = kp.vs();
    const double gp = kp.gp();
    const double lv = kp.lv();
    const double sigma1 = (vs * x + lv * y) / gp;
    double val = eval_m(kp, sigma1, sigma1, trace) - kp.c(sigma1) / gp;
    const double s_max = (x - y) / gp;
    const double k1mu = kp.eq.k1 * kp.mu();
    auto f = [&](double s) {
        const double arg = sigma1 - vs * s;
        return k1mu * kp.c(arg) * lerp(trace, kp.h, gp * s) +
               vs * kp.gain.eval_a(arg) * lerp(trace, kp.h, lv * s + sigma1);
    };
    val += trapz_fn(f, 0.0, s_max, quad_intervals(x - y, kp.h));
    return val;
}

/// Dense solve with partial pivoting; used by the collocation route only.
inline std::vector<double> solve_dense(std::vector<std::vector<double>> A,
                                       std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
        if (std::abs(A[piv][col]) < 1e-300)
            throw std::runtime_error("singular collocation system");
        std::swap(A[piv], A[col]);
        std::swap(b[piv], b[col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = A[r][col] / A[col][col];
            if (f == 0.0) continue;
            for (std::size_t cc = col; cc < n; ++cc) A[r][cc] -= f * A[col][cc];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t r = n; r-- > 0;) {
        double s = b[r];
        for (std::size_t cc = r + 1; cc < n; ++cc) s -= A[r][cc] * x[cc];
        x[r] = s / A[r][r];
    }
    return x;
}

}  // namespace detail

/// Successive approximations for the trace l(x, 0), the fixed point of the
/// piecewise characteristic integral equation. Starts from the inhomogeneous
/// term; only the downstream branch is exercised when mu* <= 1.
inline TraceSolution solve_l_trace(const Equilibrium& eq, const RoutingGain& gain,
                                   const CoeffFn& c, int n_cells,
                                   const TraceSolveOptions& opts = {}) {
    const double length = gain.a.length();
    const double h = length / n_cells;
    detail::KernelProblem kp{eq, gain, c, h, length};

    TraceSolution sol;
    sol.values.assign(n_cells + 1, 0.0);
    std::vector<double> next(n_cells + 1, 0.0);
    const std::vector<double> zero(n_cells + 1, 0.0);
    for (int i = 0; i <= n_cells; ++i) next[i] = detail::eval_l(kp, i * h, 0.0, zero);
    sol.values.swap(next);

    for (int it = 1; it <= opts.max_iter; ++it) {
        for (int i = 0; i <= n_cells; ++i) next[i] = detail::eval_l(kp, i * h, 0.0, sol.values);
        if (!all_finite(next))
            throw KernelConvergenceError(
                "trace iteration diverged; routing gain magnitude is pathological",
                std::numeric_limits<double>::infinity());
        double delta = 0.0;
        for (int i = 0; i <= n_cells; ++i) delta = std::max(delta, std::abs(next[i] - sol.values[i]));
        sol.values.swap(next);
        sol.step_deltas.push_back(delta);
        sol.iterations = it;
        if (delta < opts.tol) return sol;
    }
    throw KernelConvergenceError(
        "trace iteration did not converge after " + std::to_string(opts.max_iter) +
            " iterations (last update " + std::to_string(sol.step_deltas.back()) +
            "); routing gain magnitude is likely pathological",
        sol.step_deltas.back());
}

/// Independent route to the same trace: collocate the affine fixed-point
/// equation on the grid and solve the dense linear system directly.
inline std::vector<double> solve_l_trace_collocation(const Equilibrium& eq,
                                                     const RoutingGain& gain,
                                                     const CoeffFn& c, int n_cells) {
    const double length = gain.a.length();
    const double h = length / n_cells;
    detail::KernelProblem kp{eq, gain, c, h, length};
    const int n = n_cells + 1;

    std::vector<double> rhs(n, 0.0);
    const std::vector<double> zero(n, 0.0);
    for (int i = 0; i < n; ++i) rhs[i] = detail::eval_l(kp, i * h, 0.0, zero);

    // Column p of the integral operator = action on the p-th nodal hat function.
    std::vector<std::vector<double>> A(n, std::vector<double>(n, 0.0));
    std::vector<double> basis(n, 0.0);
    for (int p = 0; p < n; ++p) {
        basis[p] = 1.0;
        for (int i = 0; i < n; ++i) {
            const double op = detail::eval_l(kp, i * h, 0.0, basis) - rhs[i];
            A[i][p] = (i == p ? 1.0 : 0.0) - op;
        }
        basis[p] = 0.0;
    }
    return detail::solve_dense(std::move(A), std::move(rhs));
}

/// Assemble the kernel tables from a converged trace. k is constant along its
/// characteristics by construction; l and m are quadratures of their integral
/// representations; all four boundary conditions hold by construction.
inline KernelSet assemble_klm(const std::vector<double>& l_trace, const Equilibrium& eq,
                              const RoutingGain& gain, const CoeffFn& c, int n_cells) {
    const double length = gain.a.length();
    const double h = length / n_cells;
    detail::KernelProblem kp{eq, gain, c, h, length};
    const double k1mu = eq.k1 * eq.mu_star;

    KernelSet ks;
    ks.h = h;
    ks.l_trace = l_trace;
    ks.k.resize(n_cells + 1);
    ks.l.resize(n_cells + 1);
    ks.m.resize(n_cells + 1);
    for (int i = 0; i <= n_cells; ++i) {
        ks.k[i].resize(i + 1);
        ks.l[i].resize(i + 1);
        ks.m[i].resize(n_cells - i + 1);
        const double x = i * h;
        for (int j = 0; j <= i; ++j) {
            ks.k[i][j] = k1mu * l_trace[i - j];
            ks.l[i][j] = detail::eval_l(kp, x, j * h, l_trace);
        }
        for (int j = i; j <= n_cells; ++j)
            ks.m[i][j - i] = detail::eval_m(kp, x, j * h, l_trace);
    }
    return ks;
}

/// Causal convolution Volterra solve for n by forward substitution: the
/// second-kind structure makes every step explicit apart from the trapezoid
/// half-weight of the newest sample.
inline std::vector<double> solve_n(const RoutingGain& gain, const Equilibrium& eq,
                                   int n_cells) {
    const double length = gain.a.length();
    const double h = length / n_cells;
    if (gain.a_check.cells() != n_cells)
        throw std::invalid_argument("routing gain sampled on a different grid");
    const std::vector<double>& ac = gain.a_check.data;
    const double C = -1.0 / eq.lambda_v;  // (v* - gamma p*)^{-1}

    std::vector<double> n(n_cells + 1, 0.0);
    n[0] = C * ac[0];
    for (int i = 1; i <= n_cells; ++i) {
        double conv = 0.5 * ac[i] * n[0];  // y = x_i endpoint
        for (int j = 1; j < i; ++j) conv += ac[j] * n[i - j];
        const double denom = 1.0 - 0.5 * C * h * ac[0];
        n[i] = C * (ac[i] + h * conv) / denom;
    }
    return n;
}

/// Residual of the n-equation under an independent, twice-refined quadrature
/// with linearly interpolated samples.
inline double verify_n_residual(const std::vector<double>& n, const RoutingGain& gain,
                                const Equilibrium& eq) {
    const double h = gain.a_check.h;
    const double C = -1.0 / eq.lambda_v;
    double worst = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) {
        const double x = h * static_cast<double>(i);
        auto f = [&](double y) {
            return gain.eval_a_check(y) * lerp(n, h, x - y);
        };
        const double conv = trapz_fn(f, 0.0, x, std::max(1, 2 * static_cast<int>(i)));
        worst = std::max(worst, std::abs(n[i] - C * (gain.eval_a_check(x) + conv)));
    }
    return worst;
}

/// Interior finite-difference and boundary-condition residuals of the kernel
/// PDE system. Forward differences; stencils that straddle the derivative
/// seam mu* x + y = L (the characteristic through (0, L)) or, when mu* > 1,
/// the trace breakpoint x - y = L/mu* are excluded.
struct KernelResidualReport {
    double k_interior = 0.0;
    double l_interior = 0.0;
    double m_interior = 0.0;
    double bc_k = 0.0;      ///< k(x,0) vs k1 mu* l(x,0)
    double bc_diag = 0.0;   ///< l(x,x) - m(x,x) + c(x)/(gamma p*)
    double bc_m_top = 0.0;  ///< m(x,L)
    double bc_m_left = 0.0; ///< m(0,y)
    int k_points = 0;
    int l_points = 0;
    int m_points = 0;

    [[nodiscard]] double max_interior() const {
        return std::max(k_interior, std::max(l_interior, m_interior));
    }
    [[nodiscard]] double max_boundary() const {
        return std::max(std::max(bc_k, bc_diag), std::max(bc_m_top, bc_m_left));
    }
};

inline KernelResidualReport verify_kernel_residuals(const KernelSet& ks, const Equilibrium& eq,
                                                    const RoutingGain& gain, const CoeffFn& c) {
    const int N = ks.cells();
    const double h = ks.h;
    const double L = ks.length();
    const double lv = eq.lambda_v;
    const double vs = eq.v_star;
    const double mu = eq.mu_star;
    const double gp = eq.gamma_p();
    KernelResidualReport rep;

    const double seam_margin = 1.5 * h * (1.0 + mu);
    auto off_seam = [&](double x, double y) {
        const double s0 = mu * x + y - L;
        const double s1 = mu * (x + h) + y - L;
        const double s2 = mu * x + (y + h) - L;
        if (std::abs(s0) < seam_margin || std::abs(s1) < seam_margin || std::abs(s2) < seam_margin)
            return false;
        return (s0 > 0) == (s1 > 0) && (s0 > 0) == (s2 > 0);
    };
    const double trace_break = L / mu;  // inside [0, L] only when mu* > 1
    auto off_trace_break = [&](double d) {
        if (mu <= 1.0) return true;
        return std::abs(d - trace_break) > 1.5 * h;
    };

    for (int i = 1; i + 1 <= N; ++i) {
        const double x = i * h;
        for (int j = 1; j + 1 <= i; ++j) {
            const double y = j * h;
            const double d = x - y;
            if (off_trace_break(d) && off_trace_break(d + h) && off_trace_break(d - h)) {
                const double rk = (ks.k[i + 1][j] - ks.k[i][j]) / h +
                                  (ks.k[i][j + 1] - ks.k[i][j]) / h;
                rep.k_interior = std::max(rep.k_interior, std::abs(rk));
                ++rep.k_points;
            }
            if (off_seam(x, y) && off_trace_break(d)) {
                const double rl = lv * (ks.l[i + 1][j] - ks.l[i][j]) / h -
                                  vs * (ks.l[i][j + 1] - ks.l[i][j]) / h -
                                  c(y) * ks.k[i][j] - vs * ks.l_trace[i] * gain.eval_a(y);
                rep.l_interior = std::max(rep.l_interior, std::abs(rl));
                ++rep.l_points;
            }
        }
        for (int j = i + 1; j + 1 <= N; ++j) {
            const double y = j * h;
            if (!off_seam(x, y)) continue;
            const double rm = lv * (ks.at_m(i + 1, j) - ks.at_m(i, j)) / h -
                              vs * (ks.at_m(i, j + 1) - ks.at_m(i, j)) / h -
                              vs * ks.l_trace[i] * gain.eval_a(y);
            rep.m_interior = std::max(rep.m_interior, std::abs(rm));
            ++rep.m_points;
        }
    }

    const double k1mu = eq.k1 * eq.mu_star;
    for (int i = 0; i <= N; ++i) {
        rep.bc_k = std::max(rep.bc_k, std::abs(ks.k[i][0] - k1mu * ks.l[i][0]));
        rep.bc_diag = std::max(rep.bc_diag,
                               std::abs(ks.l[i][i] - ks.at_m(i, i) + c(i * h) / gp));
        rep.bc_m_top = std::max(rep.bc_m_top, std::abs(ks.at_m(i, N)));
        rep.bc_m_left = std::max(rep.bc_m_left, std::abs(ks.at_m(0, i)));
    }
    return rep;
}

/// Assembled feedback gains: U = alpha - k2 w(L) + <F_v, v> + <F_w, w> - tail(w).
struct ControllerGains {
    Field f_v;             ///< gain on v
    Field f_w;             ///< gain on w
    Field tail_gain;       ///< integrand coefficient of the routing-tail term, in shifted coordinates
    double tail_cut = 0.0; ///< upper limit of the tail integral, L - mu* L (0 if mu* >= 1)
    double tail_end_coeff = 0.0;  ///< integrand coefficient at the cut, a(L)/k1
    double k2 = 0.0;
    double k3 = 0.0;       ///< dynamic-extension decay rate (1/s)
    std::vector<double> k_boundary;  ///< k(L, .)
    std::vector<double> l_boundary;  ///< l(L, .)
    std::vector<double> n_flipped;   ///< n(L - .)
};

/// Routing-tail integral evaluated against a w field, with the cut cell at
/// tail_cut handled exactly (linear interpolation at the cut).
inline double eval_routing_tail(const ControllerGains& g, const Field& w) {
    if (g.tail_cut <= 0.0) return 0.0;
    const double h = w.h;
    const auto full = static_cast<std::size_t>(std::floor(g.tail_cut / h + 1e-12));
    double s = 0.0;
    for (std::size_t j = 0; j < full; ++j)
        s += 0.5 * h * (g.tail_gain[j] * w[j] + g.tail_gain[j + 1] * w[j + 1]);
    const double x0 = h * static_cast<double>(full);
    if (g.tail_cut > x0 + 1e-12 * h) {
        const double fa = g.tail_gain[full] * w[full];
        const double fb = g.tail_end_coeff * lerp(w, g.tail_cut);
        s += 0.5 * (g.tail_cut - x0) * (fa + fb);
    }
    return s;
}

/// Flatten the transform chain into state-feedback gains on (v, w).
inline ControllerGains compute_gains(const KernelSet& ks, const RoutingGain& gain,
                                     const Equilibrium& eq, double k3) {
    if (!(k3 > 0.0)) throw std::invalid_argument("dynamic-extension rate k3 must be positive");
    const int N = ks.cells();
    const double h = ks.h;
    const double L = ks.length();
    const double mu = eq.mu_star;

    ControllerGains g;
    g.k2 = eq.k2;
    g.k3 = k3;
    g.k_boundary = ks.k[N];
    g.l_boundary = ks.l[N];
    g.n_flipped.resize(N + 1);
    for (int i = 0; i <= N; ++i) g.n_flipped[i] = ks.n[N - i];

    // Routing contribution to F_w, assembled from the same shifted-integral
    // quadrature the decoupling transform uses, so the flattened controller
    // reproduces the transform-chain evaluation to rounding. The accumulated
    // nodal coefficients are divided by the outer trapezoid weight they will
    // pick up again when F_w is integrated against w.
    std::vector<double> a_part(N + 1, 0.0);
    if (!gain.is_zero()) {
        const int i_break =
            std::min(N, static_cast<int>(std::lround(L / (mu * h))));
        for (int i = 0; i <= i_break; ++i) {
            const double wt = h * ((i == 0 || i == N) ? 0.5 : 1.0) * ks.n[N - i] / eq.k1;
            if (wt != 0.0) accumulate_shifted_gain_weights(gain, N, h, mu * i * h, wt, a_part);
        }
        for (int j = 0; j <= N; ++j)
            a_part[j] /= h * ((j == 0 || j == N) ? 0.5 : 1.0);
    }

    g.f_v = make_field(N, L);
    g.f_w = make_field(N, L);
    for (int j = 0; j <= N; ++j) {
        // trapezoid over on-grid columns of the triangular tables; the p = j
        // endpoint weight mirrors the zero-length inner integral of the
        // transform chain, so j = 0 contributes nothing at p = 0
        double conv_k = 0.0, conv_l = 0.0, conv_m = 0.0;
        for (int p = j; p <= N; ++p) {
            double wgt = (p == j || p == N) ? 0.5 : 1.0;
            if (p == 0 && j == 0) wgt = 0.0;
            conv_k += wgt * ks.n[N - p] * ks.k[p][j];
            conv_l += wgt * ks.n[N - p] * ks.l[p][j];
        }
        for (int p = 0; p <= j; ++p) {
            const double wgt = (p == 0 || p == j) ? 0.5 : 1.0;
            conv_m += wgt * ks.n[N - p] * ks.at_m(p, j);
        }
        g.f_v[j] = ks.k[N][j] + ks.n[N - j] - h * conv_k;
        g.f_w[j] = ks.l[N][j] + a_part[j] - h * conv_l - h * conv_m;
    }

    g.tail_cut = (mu < 1.0) ? L - mu * L : 0.0;
    g.tail_gain = make_field(N, L);
    if (g.tail_cut > 0.0) {
        for (int j = 0; j <= N; ++j) {
            const double u = j * h;
            g.tail_gain[j] = (u <= g.tail_cut + 1e-12) ? gain.eval_a(u + mu * L) / eq.k1 : 0.0;
        }
        g.tail_end_coeff = gain.eval_a(L) / eq.k1;
    }
    return g;
}

/// Full kernel synthesis: trace fixed point, table assembly, Volterra solve.
inline KernelSet synthesize_kernels(const Equilibrium& eq, const RoutingGain& gain,
                                    const CoeffFn& c, int n_cells,
                                    const TraceSolveOptions& opts = {}) {
    TraceSolution trace = solve_l_trace(eq, gain, c, n_cells, opts);
    KernelSet ks = assemble_klm(trace.values, eq, gain, c, n_cells);
    ks.n = solve_n(gain, eq, n_cells);
    return ks;
}

}  // namespace arzlab
