#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "arzlab/analysis.hpp"
#include "arzlab/config.hpp"
#include "arzlab/kernels.hpp"
#include "arzlab/model.hpp"
#include "arzlab/nonlinear.hpp"
#include "arzlab/routing.hpp"
#include "arzlab/simulator.hpp"

namespace arzlab {

enum class RunMode { Open, Closed, Both, KernelsOnly };

inline RunMode run_mode_from_string(const std::string& s) {
    if (s == "open") return RunMode::Open;
    if (s == "closed") return RunMode::Closed;
    if (s == "both") return RunMode::Both;
    if (s == "kernels-only") return RunMode::KernelsOnly;
    throw ValidationError("unknown mode '" + s + "' (open|closed|both|kernels-only)");
}

// exit codes of the pipeline
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitBlowup = 2;
inline constexpr int kExitInadmissible = 3;

namespace detail {

inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ValidationError("cannot write output file: " + p.string());
    return f;
}

}  // namespace detail

/// Kernel tables as CSV: triangular tables as x,y,value rows (row-major),
/// the convolution kernel as x,value.
inline void export_kernels(const KernelSet& ks, const std::filesystem::path& dir) {
    const int N = ks.cells();
    const double h = ks.h;
    {
        auto f = detail::open_out(dir / "kernels_k.csv");
        f << "x,y,value\n";
        for (int i = 0; i <= N; ++i)
            for (int j = 0; j <= i; ++j)
                f << detail::num(i * h) << ',' << detail::num(j * h) << ','
                  << detail::num(ks.k[i][j]) << '\n';
    }
    {
        auto f = detail::open_out(dir / "kernels_l.csv");
        f << "x,y,value\n";
        for (int i = 0; i <= N; ++i)
            for (int j = 0; j <= i; ++j)
                f << detail::num(i * h) << ',' << detail::num(j * h) << ','
                  << detail::num(ks.l[i][j]) << '\n';
    }
    {
        auto f = detail::open_out(dir / "kernels_m.csv");
        f << "x,y,value\n";
        for (int i = 0; i <= N; ++i)
            for (int j = i; j <= N; ++j)
                f << detail::num(i * h) << ',' << detail::num(j * h) << ','
                  << detail::num(ks.at_m(i, j)) << '\n';
    }
    {
        auto f = detail::open_out(dir / "kernel_n.csv");
        f << "x,value\n";
        for (int i = 0; i <= N; ++i)
            f << detail::num(i * h) << ',' << detail::num(ks.n[i]) << '\n';
    }
}

inline void export_gains(const ControllerGains& g, const std::filesystem::path& dir) {
    auto f = detail::open_out(dir / "gains.csv");
    f << "x,f_v,f_w,tail_gain,k_boundary,l_boundary,n_flipped\n";
    for (std::size_t i = 0; i < g.f_v.nodes(); ++i)
        f << detail::num(g.f_v.x(i)) << ',' << detail::num(g.f_v[i]) << ','
          << detail::num(g.f_w[i]) << ',' << detail::num(g.tail_gain[i]) << ','
          << detail::num(g.k_boundary[i]) << ',' << detail::num(g.l_boundary[i]) << ','
          << detail::num(g.n_flipped[i]) << '\n';
}

/// Trajectory rows t-major, x-minor; controls repeat along each time block.
inline void export_trajectory(const SimRun& run, const std::filesystem::path& path) {
    auto f = detail::open_out(path);
    f << "t,x,v,w,u_ramp,u_rout\n";
    for (std::size_t k = 0; k < run.t.size(); ++k)
        for (std::size_t i = 0; i < run.w[k].nodes(); ++i)
            f << detail::num(run.t[k]) << ',' << detail::num(run.w[k].x(i)) << ','
              << detail::num(run.v[k][i]) << ',' << detail::num(run.w[k][i]) << ','
              << detail::num(run.u_ramp[k]) << ',' << detail::num(run.u_rout[k]) << '\n';
}

inline void export_norms(const SimRun& run, const std::filesystem::path& path) {
    auto f = detail::open_out(path);
    f << "t,l2,h1,linf,lyapunov\n";
    for (std::size_t k = 0; k < run.t.size(); ++k)
        f << detail::num(run.t[k]) << ',' << detail::num(run.l2[k]) << ','
          << detail::num(run.h1[k]) << ',' << detail::num(run.linf[k]) << ','
          << detail::num(run.lyapunov[k]) << '\n';
}

struct PipelineResult {
    int exit_code = kExitOk;
    std::vector<std::string> files;  ///< manifest of written files (names only)
};

namespace detail {

inline nlohmann::ordered_json run_summary(const SimRun& run, const StabilityReport& rep) {
    nlohmann::ordered_json j;
    j["initial_h1"] = run.h1.front();
    j["final_h1"] = run.h1.back();
    j["final_t"] = run.t.back();
    j["h1_ratio"] = run.h1.front() > 0.0 ? run.h1.back() / run.h1.front() : 0.0;
    j["settling_time"] = rep.settling_time;
    if (!rep.fit_valid) {
        j["fitted_gamma"] = "insufficient_samples";
    } else if (rep.fit.converged_to_zero) {
        j["fitted_gamma"] = "converged_to_zero";
    } else {
        j["fitted_gamma"] = rep.fit.gamma_fit;
        j["fitted_m"] = rep.fit.m;
    }
    j["stable"] = rep.stable;
    j["admissible_fraction"] = rep.admissible_fraction;
    j["first_pointwise_violation_t"] = rep.first_violation_t;
    double worst_lyap_increase = 0.0;
    for (std::size_t k = 1; k < run.lyapunov.size(); ++k)
        worst_lyap_increase = std::max(worst_lyap_increase,
                                       run.lyapunov[k] - run.lyapunov[k - 1]);
    j["lyapunov_initial"] = run.lyapunov.front();
    j["lyapunov_max_increase"] = worst_lyap_increase;
    j["blew_up"] = run.blew_up;
    if (run.blew_up) {
        j["blowup_time"] = run.blowup_time;
        j["diagnostic"] = run.diagnostic;
    }
    j["dt"] = run.dt;
    j["steps"] = run.steps;
    return j;
}

}  // namespace detail

/// Execute the full pipeline for a scenario: equilibrium, kernels, gains,
/// exports, and the requested simulations. Streams a short text report to
/// `out` and diagnostics to `err`. Returns the exit code and file manifest.
inline PipelineResult run_command(const Scenario& sc, RunMode mode, bool strict,
                                  std::ostream& out, std::ostream& err) {
    PipelineResult result;
    const std::filesystem::path dir(sc.out_dir);
    std::error_code fs_err;
    std::filesystem::create_directories(dir, fs_err);
    if (fs_err) {
        err << "error: cannot create output directory " << dir << ": " << fs_err.message()
            << "\n";
        result.exit_code = kExitError;
        return result;
    }

    const Equilibrium eq = compute_equilibrium(sc.params, sc.v_star);
    const AdmissibilitySpec adm = admissible_bounds(eq, sc.params);
    const RoutingGain gain = sc.make_gain(eq);
    const CoeffFn c = [eq, p = sc.params](double x) { return coeff_c(x, eq, p); };

    out << "equilibrium: q* = " << eq.q_star << " veh/s, p* = " << eq.p_star
        << " m/s, lambda_w = " << eq.lambda_w << ", lambda_v = " << eq.lambda_v
        << ", mu* = " << eq.mu_star << "\n";
    out << "admissibility: eps0 = " << adm.eps0 << ", eps = " << adm.eps
        << ", sqrt(L) eps = " << adm.eps_h1 << "\n";

    KernelSet ks;
    try {
        ks = synthesize_kernels(eq, gain, c, sc.sim.n_cells);
    } catch (const KernelConvergenceError& e) {
        err << "error: kernel synthesis failed: " << e.what() << "\n";
        result.exit_code = kExitError;
        return result;
    }
    const ControllerGains gains = compute_gains(ks, gain, eq, sc.k3);
    const KernelResidualReport resid = verify_kernel_residuals(ks, eq, gain, c);

    export_kernels(ks, dir);
    export_gains(gains, dir);
    result.files = {"kernels_k.csv", "kernels_l.csv", "kernels_m.csv", "kernel_n.csv",
                    "gains.csv"};

    out << "kernel residuals: interior max (k, l, m) = (" << resid.k_interior << ", "
        << resid.l_interior << ", " << resid.m_interior
        << "), boundary max = " << resid.max_boundary() << "\n";

    if (mode == RunMode::KernelsOnly) return result;

    const LinearProblem prob{sc.params, eq, adm, gain,
                             sample_function(c, sc.sim.n_cells, sc.params.L)};
    const LyapunovSpec lyap = sc.make_lyapunov(eq);
    lyap.validate(eq);

    InitResult init;
    try {
        init = init_scenario(sc.initial, prob, sc.sim.n_cells, &gains, &ks);
    } catch (const AdmissibilityError& e) {
        err << (strict ? "error" : "warning") << ": pointwise admissibility flag down at t = 0: "
            << e.what() << "\n";
        result.exit_code = strict ? kExitInadmissible : kExitError;
        return result;
    }
    if (init.h1_warning)
        err << "warning: initial H1 norm exceeds the sqrt(L) eps ball; the pointwise "
               "guarantee does not cover this run\n";

    nlohmann::ordered_json summary;
    summary["config"] = to_config_text(sc);
    summary["equilibrium"] = {{"v_star", eq.v_star},     {"q_star", eq.q_star},
                              {"rho_star", eq.rho_star}, {"p_star", eq.p_star},
                              {"k1", eq.k1},             {"k2", eq.k2},
                              {"mu_star", eq.mu_star},   {"lambda_w", eq.lambda_w},
                              {"lambda_v", eq.lambda_v}};
    summary["admissibility"] = {{"eps0", adm.eps0},
                                {"eps", adm.eps},
                                {"eps_h1", adm.eps_h1},
                                {"c_emb", adm.c_emb},
                                {"eps_h1_strict", adm.eps_h1_strict}};
    summary["kernel_residuals"] = {{"k_interior", resid.k_interior},
                                   {"l_interior", resid.l_interior},
                                   {"m_interior", resid.m_interior},
                                   {"boundary", resid.max_boundary()}};
    double m1 = 0.0, gamma_theory = 0.0;
    theory_constants(lyap, eq, sc.params.L, m1, gamma_theory);
    summary["theory"] = {{"m1", m1}, {"gamma", gamma_theory}};

    auto do_run = [&](bool closed, const std::string& tag) {
        SimConfig cfg = sc.sim;
        cfg.controller_on = closed;
        SimRun run = run_simulation(cfg, prob, init.state, closed ? &gains : nullptr, &ks,
                                    &lyap);
        const StabilityReport rep = make_stability_report(
            run.t, run.l2, run.h1, run.linf, run.flags, lyap, eq, sc.params.L);

        const std::string suffix = tag.empty() ? "" : "_" + tag;
        export_trajectory(run, dir / ("trajectory" + suffix + ".csv"));
        export_norms(run, dir / ("norms" + suffix + ".csv"));
        result.files.push_back("trajectory" + suffix + ".csv");
        result.files.push_back("norms" + suffix + ".csv");
        summary["runs"][tag.empty() ? (closed ? "closed" : "open") : tag] =
            detail::run_summary(run, rep);

        out << (closed ? "closed" : "open") << " loop: H1 " << run.h1.front() << " -> "
            << run.h1.back() << " at t = " << run.t.back();
        if (!rep.fit_valid) out << ", series too short to fit";
        else if (rep.fit.converged_to_zero) out << ", converged to zero";
        else out << ", fitted decay rate " << rep.fit.gamma_fit;
        out << (run.blew_up ? ", BLEW UP\n" : "\n");

        if (run.blew_up) {
            err << "error: " << run.diagnostic << "\n";
            result.exit_code = kExitBlowup;
        } else if (strict && rep.first_violation_t >= 0.0) {
            err << "error: pointwise admissibility flag down at t = " << rep.first_violation_t
                << " (strict mode)\n";
            if (result.exit_code == kExitOk) result.exit_code = kExitInadmissible;
        }
    };

    if (mode == RunMode::Open) do_run(false, "");
    else if (mode == RunMode::Closed) do_run(true, "");
    else {
        do_run(false, "open");
        do_run(true, "closed");
    }

    auto f = detail::open_out(dir / "summary.json");
    f << summary.dump(2) << "\n";
    result.files.push_back("summary.json");
    return result;
}

}  // namespace arzlab
