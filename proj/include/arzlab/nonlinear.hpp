#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "arzlab/grid.hpp"
#include "arzlab/model.hpp"
#include "arzlab/routing.hpp"

namespace arzlab {

/// Absolute (flow, velocity) state of the quasilinear reference model.
struct NonlinearState {
    Field q;  ///< flow rate (veh/s)
    Field v;  ///< velocity (m/s)
    double t = 0.0;
};

struct NonlinearRun {
    std::vector<double> t;
    std::vector<Field> q, v;
    double dt = 0.0;
    int steps = 0;
    bool aborted = false;
    std::string diagnostic;
};

/// Absolute initial data matching a diagonalized perturbation snapshot.
inline NonlinearState nonlinear_initial_from_diag(const Field& v_diag, const Field& w_diag,
                                                  const Equilibrium& eq,
                                                  const ModelParams& p) {
    Field v_tilde, q_tilde;
    riemann_inverse(v_diag, w_diag, eq, p, v_tilde, q_tilde);
    NonlinearState s;
    s.q = q_tilde;
    s.v = v_tilde;
    for (std::size_t i = 0; i < s.q.nodes(); ++i) {
        s.q[i] += eq.q_star;
        s.v[i] += eq.v_star;
    }
    return s;
}

/// First-order upwind march of the nonlinear (q, v) system with relaxation,
/// characteristic speeds recomputed per cell per step. Flow convects
/// rightward at v (backward differences), velocity leftward at gamma p - v
/// (forward differences). Boundary closures reuse the linearized inflow
/// relations expressed in physical variables, an approximation valid at
/// small amplitude. Vacuum approach or density beyond rho_m aborts.
inline NonlinearRun run_nonlinear_reference(const ModelParams& p, const Equilibrium& eq,
                                            NonlinearState state, const RoutingGain& gain,
                                            bool routing_on, double t_final, double dt,
                                            int record_every, double u_ramp = 0.0) {
    const int N = state.q.cells();
    const double h = state.q.h;
    const double theta = riemann_theta(eq);
    const double pressure_scale = p.v_f / std::pow(p.rho_m, p.gamma);
    const double rho_floor = 1e-9 * p.rho_m;

    NonlinearRun run;
    run.dt = dt;
    run.steps = static_cast<int>(std::ceil(t_final / dt - 1e-9));

    auto record = [&](const NonlinearState& s) {
        run.t.push_back(s.t);
        run.q.push_back(s.q);
        run.v.push_back(s.v);
    };
    auto check = [&](const NonlinearState& s) {
        for (std::size_t i = 0; i < s.q.nodes(); ++i) {
            const double rho = s.q[i] / s.v[i];
            if (!(s.v[i] > 0.0) || !std::isfinite(rho)) {
                run.diagnostic = "velocity lost positivity at x = " + std::to_string(s.q.x(i));
                return false;
            }
            if (rho < rho_floor) {
                run.diagnostic = "density approached vacuum at x = " + std::to_string(s.q.x(i));
                return false;
            }
            if (rho > p.rho_m) {
                run.diagnostic =
                    "density exceeded the road maximum at x = " + std::to_string(s.q.x(i));
                return false;
            }
        }
        return true;
    };

    if (!check(state)) {
        run.aborted = true;
        record(state);
        return run;
    }
    record(state);

    std::vector<double> v_old(N + 1), pres(N + 1);
    for (int step = 1; step <= run.steps; ++step) {
        v_old = state.v.data;
        double max_speed = 0.0;
        for (int i = 0; i <= N; ++i) {
            pres[i] = pressure_scale * std::pow(state.q[i] / v_old[i], p.gamma);
            max_speed = std::max(max_speed,
                                 std::max(v_old[i], p.gamma * pres[i] - v_old[i]));
        }
        if (max_speed * dt / h > 1.0 + 1e-12) {
            run.aborted = true;
            run.diagnostic = "nonlinear CFL violated at t = " + std::to_string(state.t);
            break;
        }

        // q sweep first (descending, needs old q and old v throughout)
        for (int i = N; i >= 1; --i) {
            const double dv = (i < N ? v_old[i + 1] - v_old[i] : v_old[N] - v_old[N - 1]) / h;
            const double lam_v = p.gamma * pres[i] - v_old[i];
            const double relax = (p.v_f - pres[i] - v_old[i]) / (p.tau * v_old[i]);
            state.q[i] += dt * (-v_old[i] * (state.q[i] - state.q[i - 1]) / h +
                                state.q[i] * lam_v / v_old[i] * dv + relax * state.q[i]);
        }
        for (int i = 0; i < N; ++i) {
            const double lam_v = p.gamma * pres[i] - v_old[i];
            state.v[i] += dt * (lam_v * (v_old[i + 1] - v_old[i]) / h +
                                (p.v_f - pres[i] - v_old[i]) / p.tau);
        }
        state.t += dt;

        // routing inflow from the swept state mapped to the w invariant,
        // matching the linear stepper's boundary timing
        double u_rout = 0.0;
        if (routing_on) {
            Field w_map = state.q;
            for (int i = 0; i <= N; ++i) {
                const double v_t = state.v[i] - eq.v_star;
                const double q_t = state.q[i] - eq.q_star;
                w_map[i] = riemann_weight(w_map.x(i), eq, p) * (q_t - theta * v_t);
            }
            u_rout = routing_inflow(gain, w_map);
        }
        // inflow closures: the linearized boundary relations solved at the
        // new time level, algebraically identical to the diagonalized ones
        state.v[N] =
            eq.v_star + eq.v_star / eq.q_star * ((state.q[N] - eq.q_star) + u_ramp);
        state.q[0] =
            eq.q_star + 2.0 * theta * (state.v[0] - eq.v_star) + u_rout;

        if (!check(state)) {
            run.aborted = true;
            break;
        }
        if (step % record_every == 0) record(state);
    }
    return run;
}

}  // namespace arzlab
