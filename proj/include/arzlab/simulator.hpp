#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "arzlab/analysis.hpp"
#include "arzlab/grid.hpp"
#include "arzlab/kernels.hpp"
#include "arzlab/model.hpp"
#include "arzlab/routing.hpp"
#include "arzlab/transforms.hpp"

namespace arzlab {

class AdmissibilityError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class CflError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Diagonalized perturbation state plus the dynamic-extension scalar.
struct SimState {
    Field w;
    Field v;
    double alpha = 0.0;  ///< dynamic-extension state feeding the controller
    double t = 0.0;
};

struct SimConfig {
    int n_cells = 400;
    double cfl = 0.9;          ///< Courant number in (0, 1]
    double t_final = 100.0;    ///< horizon (s)
    bool controller_on = true;
    bool routing_on = true;
    int record_every = 10;     ///< steps per recorded sample

    friend bool operator==(const SimConfig&, const SimConfig&) = default;

    void validate() const {
        if (n_cells < 2) throw std::invalid_argument("simulation needs at least two cells");
        if (!(cfl > 0.0 && cfl <= 1.0)) throw std::invalid_argument("cfl must lie in (0, 1]");
        if (!(t_final > 0.0)) throw std::invalid_argument("t_final must be positive");
        if (record_every < 1) throw std::invalid_argument("record_every must be at least 1");
    }
};

/// Everything the linear stepper needs, with the interior coupling sampled
/// once. A custom coupling function may replace the model one.
struct LinearProblem {
    ModelParams params;
    Equilibrium eq;
    AdmissibilitySpec adm;
    RoutingGain gain;
    Field c;  ///< interior coupling c(x_i)
};

inline LinearProblem make_linear_problem(const ModelParams& params, const Equilibrium& eq,
                                         RoutingGain gain, int n_cells,
                                         const CoeffFn* c_override = nullptr) {
    LinearProblem prob{params, eq, admissible_bounds(eq, params), std::move(gain), {}};
    prob.c = sample_function(
        [&](double x) { return c_override ? (*c_override)(x) : coeff_c(x, eq, params); },
        n_cells, params.L);
    return prob;
}

enum class ProfileShape { Zero, Sine, Gaussian };

inline ProfileShape profile_shape_from_string(const std::string& s) {
    if (s == "zero") return ProfileShape::Zero;
    if (s == "sine") return ProfileShape::Sine;
    if (s == "gaussian") return ProfileShape::Gaussian;
    throw std::invalid_argument("unknown initial profile shape: " + s);
}

/// Named initial-data family for both components.
struct InitialProfile {
    ProfileShape w_shape = ProfileShape::Sine;
    double w_amplitude = 0.0;
    ProfileShape v_shape = ProfileShape::Zero;
    double v_amplitude = 0.0;
    double center = 0.5;  ///< gaussian center as a fraction of L
    double width = 0.1;   ///< gaussian width as a fraction of L

    friend bool operator==(const InitialProfile&, const InitialProfile&) = default;
};

inline Field sample_profile(ProfileShape shape, double amplitude, double center_frac,
                            double width_frac, int n_cells, double length) {
    switch (shape) {
        case ProfileShape::Zero:
            return make_field(n_cells, length);
        case ProfileShape::Sine:
            return sample_function(
                [&](double x) { return amplitude * std::sin(2.0 * M_PI * x / length); },
                n_cells, length);
        case ProfileShape::Gaussian: {
            const double c = center_frac * length;
            const double sg = width_frac * length;
            return sample_function(
                [&](double x) {
                    const double z = (x - c) / sg;
                    return amplitude * std::exp(-0.5 * z * z);
                },
                n_cells, length);
        }
    }
    throw std::logic_error("unreachable profile shape");
}

/// Evaluate the ramp control through the runtime transform-chain path:
/// z and eta fields, then the final-stage boundary value mapped back through
/// the two control reformulations.
inline double compute_control_chain(const SimState& s, const ControllerGains& g,
                                    const KernelSet& ks, const RoutingGain& gain,
                                    const Equilibrium& eq) {
    const Field z = backstep_forward(s.v, s.w, ks);
    const Field eta = decouple_forward(z, s.w, gain, eq);
    const std::size_t last = eta.nodes() - 1;
    const double w_ramp = trapz_product(g.n_flipped, eta.data, eta.h, 0, last);
    const double v_ramp = w_ramp / eq.k1 - eval_routing_tail(g, s.w);
    const double kv = trapz_product(g.k_boundary, s.v.data, s.v.h, 0, last);
    const double lw = trapz_product(g.l_boundary, s.w.data, s.w.h, 0, last);
    return s.alpha + v_ramp - g.k2 * s.w[last] + kv + lw;
}

/// Same control through the flattened state-feedback gains; used as the
/// cross-check of the chain evaluation.
inline double compute_control_flat(const SimState& s, const ControllerGains& g) {
    const std::size_t last = s.w.nodes() - 1;
    const double fv = trapz_product(g.f_v.data, s.v.data, s.v.h, 0, last);
    const double fw = trapz_product(g.f_w.data, s.w.data, s.w.h, 0, last);
    return s.alpha - g.k2 * s.w[last] + fv + fw - eval_routing_tail(g, s.w);
}

struct InitResult {
    SimState state;
    bool h1_warning = false;  ///< initial H1 norm exceeds the sqrt(L) eps ball
};

/// Build the initial state. Profiles whose pointwise norm reaches the
/// admissible box are rejected; the dynamic extension starts at the value
/// that makes the ramp boundary condition match the initial data at t = 0.
inline InitResult init_scenario(const InitialProfile& profile, const LinearProblem& prob,
                                int n_cells, const ControllerGains* gains = nullptr,
                                const KernelSet* ks = nullptr) {
    InitResult res;
    res.state.w = sample_profile(profile.w_shape, profile.w_amplitude, profile.center,
                                 profile.width, n_cells, prob.params.L);
    res.state.v = sample_profile(profile.v_shape, profile.v_amplitude, profile.center,
                                 profile.width, n_cells, prob.params.L);
    res.state.alpha = 0.0;
    res.state.t = 0.0;

    const Norms norms = discrete_norms(res.state.v, res.state.w);
    if (norms.linf >= prob.adm.eps)
        throw AdmissibilityError(
            "initial data leaves the admissible pointwise box: |(v0,w0)|_inf = " +
            std::to_string(norms.linf) + " >= eps = " + std::to_string(prob.adm.eps));
    res.h1_warning = norms.h1 >= prob.adm.eps_h1;

    if (gains != nullptr && ks != nullptr) {
        SimState probe = res.state;
        probe.alpha = 0.0;
        const double state_part = compute_control_chain(probe, *gains, *ks, prob.gain, prob.eq);
        const std::size_t last = res.state.v.nodes() - 1;
        res.state.alpha =
            res.state.v[last] - prob.eq.k2 * res.state.w[last] - state_part;
    }
    return res;
}

struct StepControls {
    double u_ramp = 0.0;
    double u_rout = 0.0;
};

/// One explicit upwind step. w convects rightward at v* (backward
/// differences), v leftward at gamma p* - v* (forward differences) with the
/// c(x) w source. Boundary values use the pre-step state.
inline StepControls step_linear(SimState& s, double dt, const LinearProblem& prob,
                                const ControllerGains* gains, const KernelSet* ks,
                                bool routing_on, bool controller_on) {
    const int N = s.w.cells();
    const double h = s.w.h;
    const double nu_w = prob.eq.lambda_w * dt / h;
    const double nu_v = prob.eq.lambda_v * dt / h;
    if (nu_w > 1.0 + 1e-12 || nu_v > 1.0 + 1e-12)
        throw CflError("CFL violation: lambda dt / h = " +
                       std::to_string(std::max(nu_w, nu_v)));

    if (controller_on && (gains == nullptr || ks == nullptr))
        throw std::invalid_argument("closed-loop step needs gains and kernels");

    // interior sweeps first; the boundary relations are then imposed at the
    // new time level, with the control functionals evaluated on the swept
    // state (the two boundary nodes inside the quadratures lag one step)
    for (int i = 0; i < N; ++i)
        s.v[i] += nu_v * (s.v[i + 1] - s.v[i]) + dt * prob.c[i] * s.w[i];
    for (int i = N; i >= 1; --i) s.w[i] -= nu_w * (s.w[i] - s.w[i - 1]);

    if (gains != nullptr) s.alpha *= std::exp(-gains->k3 * dt);
    s.t += dt;

    StepControls ctl;
    if (routing_on) ctl.u_rout = routing_inflow(prob.gain, s.w);
    if (controller_on) ctl.u_ramp = compute_control_chain(s, *gains, *ks, prob.gain, prob.eq);
    s.w[0] = prob.eq.k1 * s.v[0] + ctl.u_rout;
    s.v[N] = prob.eq.k2 * s.w[N] + ctl.u_ramp;
    return ctl;
}

struct SimRun {
    std::vector<double> t;
    std::vector<Field> w, v;
    std::vector<double> u_ramp, u_rout;
    std::vector<double> l2, h1, linf, lyapunov;
    std::vector<AdmissibilityFlags> flags;
    double dt = 0.0;
    int steps = 0;
    bool blew_up = false;
    double blowup_time = 0.0;
    std::string diagnostic;
};

/// Time-march a scenario, recording snapshots, norms, the Lyapunov value on
/// the target variables, and admissibility flags every record_every steps.
/// Instability beyond 1e6 * eps terminates the run with a diagnostic.
inline SimRun run_simulation(const SimConfig& cfg, const LinearProblem& prob,
                             SimState state, const ControllerGains* gains,
                             const KernelSet* ks, const LyapunovSpec* lyap_spec = nullptr,
                             double dt_override = 0.0) {
    cfg.validate();
    const double h = state.w.h;
    const double dt =
        dt_override > 0.0
            ? dt_override
            : cfg.cfl * h / std::max(prob.eq.lambda_w, prob.eq.lambda_v);
    const int steps = static_cast<int>(std::ceil(cfg.t_final / dt - 1e-9));
    const double blowup_threshold = 1e6 * prob.adm.eps;

    SimRun run;
    run.dt = dt;
    run.steps = steps;

    auto record = [&](const SimState& s) {
        StepControls ctl;
        if (cfg.routing_on) ctl.u_rout = routing_inflow(prob.gain, s.w);
        if (cfg.controller_on && gains != nullptr && ks != nullptr)
            ctl.u_ramp = compute_control_chain(s, *gains, *ks, prob.gain, prob.eq);
        run.t.push_back(s.t);
        run.w.push_back(s.w);
        run.v.push_back(s.v);
        run.u_ramp.push_back(ctl.u_ramp);
        run.u_rout.push_back(ctl.u_rout);
        const Norms n = discrete_norms(s.v, s.w);
        run.l2.push_back(n.l2);
        run.h1.push_back(n.h1);
        run.linf.push_back(n.linf);
        double lyap = 0.0;
        if (ks != nullptr && lyap_spec != nullptr) {
            Field z, eta, xi;
            transform_chain(s.v, s.w, *ks, prob.gain, prob.eq, z, eta, xi);
            lyap = lyapunov_value(s.w, xi, *lyap_spec, prob.eq);
        }
        run.lyapunov.push_back(lyap);
        run.flags.push_back(
            admissibility_monitor(s.v, s.w, prob.adm, prob.eq, prob.params));
    };

    record(state);

    for (int step = 1; step <= steps; ++step) {
        step_linear(state, dt, prob, gains, ks, cfg.routing_on, cfg.controller_on);
        const double amp = std::max(max_abs(state.w), max_abs(state.v));
        if (!all_finite(state.w.data) || !all_finite(state.v.data) ||
            amp > blowup_threshold) {
            run.blew_up = true;
            run.blowup_time = state.t;
            run.diagnostic = "state magnitude " + std::to_string(amp) +
                             " exceeded the instability threshold at t = " +
                             std::to_string(state.t);
            break;
        }
        if (step % cfg.record_every == 0) record(state);
    }
    return run;
}

}  // namespace arzlab
