#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ttmpc/geometry.hpp"
#include "ttmpc/mpc.hpp"
#include "ttmpc/path.hpp"
#include "ttmpc/vehicle.hpp"

namespace ttmpc {

enum class Scenario { Straight, FigureEight, PathFile };
enum class Outcome { Converged, Jackknifed, Faulted };

struct SimConfig {
    Scenario scenario = Scenario::Straight;
    std::string path_file;
    int direction = -1;
    ControllerKind controller = ControllerKind::QP;
    double duration_s = 120.0;
    double f_s = 10.0;
    ErrorState initial_error;
    double s_start = 5.0;
    double straight_length = 0.0;  ///< 0 = sized from the duration
    double eight_length = 220.0;
    double convergence_tol = 0.1;
    double convergence_hold_s = 5.0;
    unsigned seed = 0;
    bool validate_nominal = true;
    VehicleParams params;
    MpcConfig mpc;
};

struct LogRow {
    double t = 0.0;
    double s = 0.0;
    VehicleState x;
    double u = 0.0;
    ErrorState e;
    double u_tilde = 0.0;
    double objective = 0.0;
    double gap = 0.0;
    long nodes = 0;
    double solve_ms = 0.0;
    double kkt_residual = 0.0;
};

struct Metrics {
    double max_abs_z3 = 0.0;
    double max_abs_th3 = 0.0;
    double convergence_time_s = -1.0;  ///< last exit from the tolerance band
    double violation_integral = 0.0;   ///< joint-angle excess outside the region, integrated
    double solve_ms_mean = 0.0;
    double solve_ms_median = 0.0;
    double solve_ms_max = 0.0;
    std::size_t cycles = 0;
};

struct SimResult {
    Outcome outcome = Outcome::Faulted;
    std::string fault_reason;
    std::vector<LogRow> log;
    Metrics metrics;
};

SimResult run_closed_loop(const SimConfig& cfg);

/// Builds the nominal path described by the scenario fields.
NominalPath build_scenario_path(const SimConfig& cfg);

struct SweepSpec {
    double lo = -0.6;
    double hi = 0.6;
    double res = 0.1;
    double duration_cap_s = 200.0;
    int threads = 0;  ///< 0 = hardware concurrency
};

/// Closed-loop convergence grid over initial joint-angle errors on a
/// straight path (the controller config comes from `base`).
BoolGrid stability_region_sweep(const SweepSpec& grid, const SimConfig& base);

/// Named campaign runs on the figure-eight path (both directions, all
/// controllers, plus the suboptimality-gap study).
std::map<std::string, SimResult> figure_eight_campaign(const SimConfig& base,
                                                        const PolytopeUnion& qp_region,
                                                        const PolytopeUnion& miqp_region);

void export_result(const SimResult& result, const std::string& out_dir);

/// Flat-key JSON loaders for configs.
VehicleParams load_params_json(const std::string& file);
SimConfig load_sim_config(const std::string& file);

std::string outcome_name(Outcome o);

}  // namespace ttmpc
