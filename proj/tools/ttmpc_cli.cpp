#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "ttmpc/linearization.hpp"
#include "ttmpc/mpc.hpp"
#include "ttmpc/sim.hpp"

using namespace ttmpc;

int main(int argc, char** argv) {
    CLI::App app{"Path-following MPC simulator for a tractor + dolly + semitrailer"};
    app.require_subcommand(1);

    // simulate
    std::string sim_config, sim_out = "out";
    auto* simulate = app.add_subcommand("simulate", "run one closed-loop scenario");
    simulate->add_option("--config", sim_config, "scenario config (json)")->required();
    simulate->add_option("--out", sim_out, "output directory");

    // sweep-stability
    std::string sweep_config, sweep_out = "stability.csv";
    double sweep_lo = -1.2, sweep_hi = 1.2, sweep_res = 0.1, sweep_cap = 200.0;
    int sweep_threads = 0;
    auto* sweep = app.add_subcommand("sweep-stability",
                                     "closed-loop convergence grid over initial joint angles");
    sweep->add_option("--config", sweep_config, "base scenario config (json)")->required();
    sweep->add_option("--out", sweep_out, "output grid csv");
    sweep->add_option("--lo", sweep_lo, "grid lower bound [rad]");
    sweep->add_option("--hi", sweep_hi, "grid upper bound [rad]");
    sweep->add_option("--resolution", sweep_res, "grid resolution [rad]");
    sweep->add_option("--duration-cap", sweep_cap, "per-cell duration cap [s]");
    sweep->add_option("--threads", sweep_threads, "worker threads (0 = all)");

    // fov-region
    std::string fov_params, fov_out = "fov.csv";
    double fov_res = 0.02, fov_eps = 1.0, fov_range = 1.2;
    bool fov_beta2 = false;
    auto* fov = app.add_subcommand("fov-region", "sensor-visibility grid over joint angles");
    fov->add_option("--params", fov_params, "vehicle params (json)")->required();
    fov->add_option("--resolution", fov_res, "grid resolution [rad]");
    fov->add_option("--epsilon", fov_eps, "half-space robustness margin [m]");
    fov->add_option("--half-range", fov_range, "grid half range [rad]");
    fov->add_flag("--beta2-variant", fov_beta2, "use the beta2 front-face offset variant");
    fov->add_option("--out", fov_out, "output grid csv");

    // fit-polytopes
    std::string fit_fov, fit_stab, fit_dir = ".";
    auto* fit = app.add_subcommand("fit-polytopes",
                                   "fit inner polytope approximations from region grids");
    fit->add_option("--fov", fit_fov, "fov grid csv")->required();
    fit->add_option("--stability", fit_stab, "stability grid csv")->required();
    fit->add_option("--out-dir", fit_dir, "output directory for region json files");

    // solve-dare
    std::string dare_params, dare_dir = "rev";
    auto* dare = app.add_subcommand("solve-dare", "terminal cost and LQ gain synthesis");
    dare->add_option("--params", dare_params, "vehicle params (json)")->required();
    dare->add_option("--dir", dare_dir, "motion direction: fwd or rev")
        ->check(CLI::IsMember({"fwd", "rev"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*simulate) {
            const SimConfig cfg = load_sim_config(sim_config);
            const SimResult result = run_closed_loop(cfg);
            export_result(result, sim_out);
            std::printf("outcome: %s\n", outcome_name(result.outcome).c_str());
            std::printf("max |z3 error|: %.3f m, max |theta3 error|: %.3f rad\n",
                        result.metrics.max_abs_z3, result.metrics.max_abs_th3);
            std::printf("cycles: %zu, solve ms (mean/median/max): %.2f/%.2f/%.2f\n",
                        result.metrics.cycles, result.metrics.solve_ms_mean,
                        result.metrics.solve_ms_median, result.metrics.solve_ms_max);
            if (result.outcome == Outcome::Jackknifed) return 2;
            if (result.outcome == Outcome::Faulted) return 3;
            return 0;
        }
        if (*sweep) {
            SimConfig base = load_sim_config(sweep_config);
            SweepSpec spec;
            spec.lo = sweep_lo;
            spec.hi = sweep_hi;
            spec.res = sweep_res;
            spec.duration_cap_s = sweep_cap;
            spec.threads = sweep_threads;
            const BoolGrid grid = stability_region_sweep(spec, base);
            grid.save_csv(sweep_out);
            std::printf("converged cells: %zu / %zu -> %s\n", grid.count_true(),
                        grid.cells.size(), sweep_out.c_str());
            return 0;
        }
        if (*fov) {
            const VehicleParams params = load_params_json(fov_params);
            FovSpec spec;
            spec.epsilon = fov_eps;
            spec.use_beta2_variant = fov_beta2;
            const BoolGrid grid = region_grid(spec, params, fov_res, fov_range);
            grid.save_csv(fov_out);
            std::printf("admissible cells: %zu / %zu -> %s\n", grid.count_true(),
                        grid.cells.size(), fov_out.c_str());
            return 0;
        }
        if (*fit) {
            const BoolGrid fov_grid = BoolGrid::load_csv(fit_fov);
            const BoolGrid stab_grid = BoolGrid::load_csv(fit_stab);
            const PolytopeFit result = fit_default_polytopes(fov_grid, stab_grid);
            namespace fs = std::filesystem;
            fs::create_directories(fit_dir);
            PolytopeUnion single;
            single.polys = {result.single};
            single.save_json(fit_dir + "/region_single.json");
            result.union2.save_json(fit_dir + "/region_union.json");
            PolytopeUnion rotated;
            rotated.polys = {result.rotated};
            rotated.save_json(fit_dir + "/region_rotated.json");
            std::printf("single area %.4f, union area %.4f + %.4f, rotated area %.4f\n",
                        result.single.area(), result.union2.polys[0].area(),
                        result.union2.polys[1].area(), result.rotated.area());
            return 0;
        }
        if (*dare) {
            const VehicleParams params = load_params_json(dare_params);
            const int dir = dare_dir == "fwd" ? 1 : -1;
            MpcConfig cfg;
            const CostDesign cost = build_cost(params, cfg.Q_bar);
            const TerminalCost tc =
                straight_path_terminal_cost(dir, cost.Q, cfg.delta_s, params);
            std::cout << "P_N =\n" << tc.P << "\n";
            std::cout << "K = " << tc.K << "\n";
            std::cout << "residual = " << tc.residual << "\n";
            const LinearizedModel m =
                discretize(linearize_nominal(0.0, 0.0, 0.0, dir, params), cfg.delta_s);
            const Eigen::Matrix4d closed = m.F - m.G * tc.K;
            std::cout << "closed-loop spectral radius = "
                      << closed.eigenvalues().cwiseAbs().maxCoeff() << "\n";
            return 0;
        }
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 1;
    }
    return 0;
}
