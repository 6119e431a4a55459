#include "ttmpc/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <thread>

#include "json.hpp"

namespace ttmpc {

std::string outcome_name(Outcome o) {
    switch (o) {
        case Outcome::Converged: return "Converged";
        case Outcome::Jackknifed: return "Jackknifed";
        default: return "Faulted";
    }
}

NominalPath build_scenario_path(const SimConfig& cfg) {
    switch (cfg.scenario) {
        case Scenario::Straight: {
            double length = cfg.straight_length;
            if (length <= 0.0)
                length = cfg.duration_s * 1.1 + cfg.s_start + cfg.mpc.N * cfg.mpc.delta_s + 20.0;
            return NominalPath::straight(length, cfg.direction, cfg.params);
        }
        case Scenario::FigureEight:
            return NominalPath::figure_eight(cfg.eight_length, cfg.direction, cfg.params);
        default:
            return NominalPath::from_csv(cfg.path_file, cfg.params);
    }
}

SimResult run_closed_loop(const SimConfig& cfg) {
    if (cfg.duration_s <= 0.0) throw std::invalid_argument("run_closed_loop: duration <= 0");
    if (cfg.f_s <= 0.0) throw std::invalid_argument("run_closed_loop: f_s <= 0");
    cfg.params.validate();

    const NominalPath path = build_scenario_path(cfg);
    if (cfg.validate_nominal) {
        if (path.max_feedforward_curvature() > cfg.params.u_max + 1e-12)
            throw InfeasibleReference("run_closed_loop: nominal curvature exceeds the bound");
        if (cfg.mpc.region) {
            for (const auto& smp : path.samples()) {
                if (!cfg.mpc.region->contains({smp.state.beta3, smp.state.beta2}, 1e-9))
                    throw InfeasibleReference(
                        "run_closed_loop: nominal joint angles leave the configured region");
            }
        }
    }

    SimResult result;
    const double dt = 1.0 / cfg.f_s;
    const std::size_t max_cycles = static_cast<std::size_t>(std::ceil(cfg.duration_s * cfg.f_s));
    result.log.reserve(max_cycles + 1);

    VehicleState x = error_to_global(cfg.s_start, cfg.initial_error, path);
    MpcController controller(cfg.controller, cfg.mpc, cfg.params, cfg.direction);
    controller.reset(cfg.s_start, path.sample_at(cfg.s_start).u_r);

    const double v = cfg.direction < 0 ? -1.0 : 1.0;
    double last_violation_t = 0.0;
    bool ever_outside = false;
    bool converged = false;

    auto classify_fault = [&](const std::string& why) {
        if (std::abs(x.beta2) > 1.0 || std::abs(x.beta3) > 1.0 || is_jackknifed(x)) {
            result.outcome = Outcome::Jackknifed;
        } else {
            result.outcome = Outcome::Faulted;
            result.fault_reason = why;
        }
    };

    for (std::size_t cycle = 0; cycle < max_cycles; ++cycle) {
        const double t = cycle * dt;
        ControlDiagnostics diag;
        try {
            diag = controller.control_step(x, path);
        } catch (const std::exception& ex) {
            classify_fault(ex.what());
            break;
        }

        LogRow row;
        row.t = t;
        row.s = diag.s;
        row.x = x;
        row.u = diag.u;
        row.e = diag.error;
        row.u_tilde = diag.u_tilde;
        row.objective = diag.objective;
        row.gap = diag.gap;
        row.nodes = diag.nodes;
        row.solve_ms = diag.solve_ms;
        row.kkt_residual = diag.kkt_residual;
        result.log.push_back(row);

        if (std::abs(diag.error.z3) > cfg.convergence_tol) {
            last_violation_t = t;
            ever_outside = true;
        }
        if (t - last_violation_t >= cfg.convergence_hold_s) {
            converged = true;
            result.outcome = Outcome::Converged;
            break;
        }

        try {
            const StepResult step = integrate_step(x, {diag.u, v}, dt, cfg.params);
            x = step.state;
            if (step.jackknifed) {
                result.outcome = Outcome::Jackknifed;
                break;
            }
        } catch (const SingularConfiguration&) {
            result.outcome = Outcome::Jackknifed;  // folding reaches the model singularity
            break;
        }
        if (diag.s + cfg.mpc.delta_s * 1.5 >= path.s_end()) {
            // path end reached; judge by the recent error history
            converged = !result.log.empty() &&
                        (result.log.back().t - last_violation_t >= cfg.convergence_hold_s ||
                         !ever_outside);
            result.outcome = converged ? Outcome::Converged : Outcome::Faulted;
            if (!converged) result.fault_reason = "path exhausted before convergence";
            break;
        }
    }
    if (result.log.size() >= max_cycles && !converged && result.outcome == Outcome::Faulted &&
        result.fault_reason.empty()) {
        // duration exhausted; converged if the tail stayed inside the band
        if (!ever_outside ||
            (result.log.back().t - last_violation_t >= cfg.convergence_hold_s)) {
            result.outcome = Outcome::Converged;
        } else {
            result.fault_reason = "no convergence within the duration";
        }
    }

    // Metrics.
    Metrics& m = result.metrics;
    for (const auto& row : result.log) {
        m.max_abs_z3 = std::max(m.max_abs_z3, std::abs(row.e.z3));
        m.max_abs_th3 = std::max(m.max_abs_th3, std::abs(row.e.th3));
        if (cfg.mpc.region) {
            const double viol =
                cfg.mpc.region->violation({row.x.beta3, row.x.beta2});
            if (viol > 0.0) m.violation_integral += viol * dt;
        }
    }
    m.cycles = result.log.size();
    if (!result.log.empty()) {
        std::vector<double> st;
        st.reserve(result.log.size());
        for (const auto& row : result.log) st.push_back(row.solve_ms);
        m.solve_ms_max = *std::max_element(st.begin(), st.end());
        double sum = 0.0;
        for (double v2 : st) sum += v2;
        m.solve_ms_mean = sum / st.size();
        std::nth_element(st.begin(), st.begin() + st.size() / 2, st.end());
        m.solve_ms_median = st[st.size() / 2];
    }
    m.convergence_time_s = ever_outside ? last_violation_t : 0.0;
    if (result.outcome != Outcome::Converged) m.convergence_time_s = -1.0;
    return result;
}

BoolGrid stability_region_sweep(const SweepSpec& grid, const SimConfig& base) {
    BoolGrid out;
    out.lo = grid.lo;
    out.res = grid.res;
    out.n = static_cast<int>(std::lround((grid.hi - grid.lo) / grid.res)) + 1;
    out.cells.assign(static_cast<std::size_t>(out.n) * out.n, 0);

    unsigned threads = grid.threads > 0 ? static_cast<unsigned>(grid.threads)
                                        : std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::pair<int, int>> cells;
    for (int i = 0; i < out.n; ++i)
        for (int j = 0; j < out.n; ++j) cells.emplace_back(i, j);

    std::atomic<std::size_t> next{0};
    std::vector<std::future<void>> workers;
    for (unsigned w = 0; w < threads; ++w) {
        workers.push_back(std::async(std::launch::async, [&]() {
            for (;;) {
                const std::size_t idx = next.fetch_add(1);
                if (idx >= cells.size()) return;
                const auto [i, j] = cells[idx];
                SimConfig cfg = base;
                cfg.scenario = Scenario::Straight;
                cfg.duration_s = grid.duration_cap_s;
                cfg.initial_error = ErrorState{0.0, 0.0, out.beta3(i), out.beta2(j)};
                bool ok = false;
                try {
                    ok = run_closed_loop(cfg).outcome == Outcome::Converged;
                } catch (const std::exception&) {
                    ok = false;
                }
                out.set(i, j, ok);
            }
        }));
    }
    for (auto& f : workers) f.get();
    return out;
}

std::map<std::string, SimResult> figure_eight_campaign(const SimConfig& base,
                                                        const PolytopeUnion& qp_region,
                                                        const PolytopeUnion& miqp_region) {
    std::map<std::string, SimResult> out;
    const ErrorState back_start{-4.0, 0.0, 0.9, 0.3};
    const ErrorState fwd_start{3.0, 0.4, -1.0, -0.7};

    auto make = [&](int dir, ControllerKind kind, const ErrorState& e0, double gap) {
        SimConfig cfg = base;
        cfg.scenario = Scenario::FigureEight;
        cfg.direction = dir;
        cfg.controller = kind;
        cfg.initial_error = e0;
        cfg.mpc.gap_delta = gap;
        if (kind == ControllerKind::QP) {
            cfg.mpc.region = qp_region;
            cfg.mpc.N = 40;
        } else if (kind == ControllerKind::MIQP) {
            cfg.mpc.region = miqp_region;
            cfg.mpc.N = 30;
        } else {
            cfg.mpc.region.reset();
        }
        if (kind == ControllerKind::LQ) cfg.validate_nominal = false;
        return cfg;
    };

    out["rev_lq"] = run_closed_loop(make(-1, ControllerKind::LQ, back_start, 0.02));
    out["rev_qp"] = run_closed_loop(make(-1, ControllerKind::QP, back_start, 0.02));
    out["rev_miqp"] = run_closed_loop(make(-1, ControllerKind::MIQP, back_start, 0.02));
    out["fwd_lq"] = run_closed_loop(make(1, ControllerKind::LQ, fwd_start, 0.02));
    out["fwd_qp"] = run_closed_loop(make(1, ControllerKind::QP, fwd_start, 0.02));
    out["fwd_miqp"] = run_closed_loop(make(1, ControllerKind::MIQP, fwd_start, 0.02));
    out["rev_miqp_gap10"] = run_closed_loop(make(-1, ControllerKind::MIQP, back_start, 0.10));
    out["rev_miqp_gap20"] = run_closed_loop(make(-1, ControllerKind::MIQP, back_start, 0.20));
    return out;
}

void export_result(const SimResult& result, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    {
        std::ofstream csv(out_dir + "/run.csv");
        if (!csv) throw std::runtime_error("export_result: cannot open run.csv");
        csv << "t,s,x3,y3,theta3,beta3,beta2,u,z3e,th3e,b3e,b2e,u_tilde,objective,gap,nodes,"
               "solve_ms\n";
        char line[1024];
        for (const auto& r : result.log) {
            std::snprintf(line, sizeof(line),
                          "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                          "%.17g,%.17g,%.17g,%.17g,%ld,%.17g\n",
                          r.t, r.s, r.x.x3, r.x.y3, r.x.theta3, r.x.beta3, r.x.beta2, r.u,
                          r.e.z3, r.e.th3, r.e.b3, r.e.b2, r.u_tilde, r.objective, r.gap,
                          r.nodes, r.solve_ms);
            csv << line;
        }
    }
    {
        nlohmann::json j;
        j["outcome"] = outcome_name(result.outcome);
        if (!result.fault_reason.empty()) j["fault_reason"] = result.fault_reason;
        j["max_abs_z3"] = result.metrics.max_abs_z3;
        j["max_abs_th3"] = result.metrics.max_abs_th3;
        j["convergence_time_s"] = result.metrics.convergence_time_s;
        j["violation_integral"] = result.metrics.violation_integral;
        j["solve_ms_mean"] = result.metrics.solve_ms_mean;
        j["solve_ms_median"] = result.metrics.solve_ms_median;
        j["solve_ms_max"] = result.metrics.solve_ms_max;
        j["cycles"] = result.metrics.cycles;
        std::ofstream out(out_dir + "/metrics.json");
        out << j.dump(2) << "\n";
    }
    {
        std::ofstream gp(out_dir + "/plot.gp");
        gp << "set datafile separator ','\n"
              "set key autotitle columnhead\n"
              "set terminal pngcairo size 1200,500\n"
              "set output 'run.png'\n"
              "set multiplot layout 1,2\n"
              "set xlabel 'x3 [m]'\nset ylabel 'y3 [m]'\n"
              "plot 'run.csv' using 3:4 with lines title 'semitrailer'\n"
              "set xlabel 't [s]'\nset ylabel 'z3 error [m]'\n"
              "plot 'run.csv' using 1:9 with lines title 'lateral error'\n"
              "unset multiplot\n";
    }
}

VehicleParams load_params_json(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("load_params_json: cannot open " + file);
    nlohmann::json j;
    in >> j;
    VehicleParams p;
    p.L1 = j.value("L1", p.L1);
    p.L2 = j.value("L2", p.L2);
    p.L3 = j.value("L3", p.L3);
    p.M1 = j.value("M1", p.M1);
    p.La = j.value("La", p.La);
    p.b = j.value("b", p.b);
    p.phi = j.value("phi", p.phi);
    p.u_max = j.value("u_max", p.u_max);
    p.du_max = j.value("du_max", p.du_max);
    p.validate();
    return p;
}

namespace {

ControllerKind controller_from_name(const std::string& name) {
    if (name == "lq") return ControllerKind::LQ;
    if (name == "qp") return ControllerKind::QP;
    if (name == "miqp") return ControllerKind::MIQP;
    throw std::runtime_error("unknown controller: " + name);
}

Scenario scenario_from_name(const std::string& name) {
    if (name == "straight") return Scenario::Straight;
    if (name == "figure-eight") return Scenario::FigureEight;
    if (name == "path-file") return Scenario::PathFile;
    throw std::runtime_error("unknown scenario: " + name);
}

}  // namespace

SimConfig load_sim_config(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("load_sim_config: cannot open " + file);
    nlohmann::json j;
    in >> j;
    SimConfig cfg;
    cfg.scenario = scenario_from_name(j.value("scenario", "straight"));
    cfg.path_file = j.value("path_file", "");
    cfg.direction = j.value("direction", -1);
    cfg.controller = controller_from_name(j.value("controller", "qp"));
    cfg.duration_s = j.value("duration_s", 120.0);
    cfg.f_s = j.value("f_s", 10.0);
    cfg.s_start = j.value("s_start", 5.0);
    cfg.straight_length = j.value("straight_length", 0.0);
    cfg.eight_length = j.value("eight_length", 220.0);
    cfg.convergence_tol = j.value("convergence_tol", 0.1);
    cfg.convergence_hold_s = j.value("convergence_hold_s", 5.0);
    cfg.seed = j.value("seed", 0u);
    if (j.contains("initial_error")) {
        const auto& e = j["initial_error"];
        cfg.initial_error = ErrorState{e.at(0), e.at(1), e.at(2), e.at(3)};
    }
    if (j.contains("params_file")) {
        cfg.params = load_params_json(j["params_file"].get<std::string>());
    } else if (j.contains("params")) {
        const auto& q = j["params"];
        VehicleParams p;
        p.L1 = q.value("L1", p.L1);
        p.L2 = q.value("L2", p.L2);
        p.L3 = q.value("L3", p.L3);
        p.M1 = q.value("M1", p.M1);
        p.La = q.value("La", p.La);
        p.b = q.value("b", p.b);
        p.phi = q.value("phi", p.phi);
        p.u_max = q.value("u_max", p.u_max);
        p.du_max = q.value("du_max", p.du_max);
        p.validate();
        cfg.params = p;
    }
    if (j.contains("mpc")) {
        const auto& q = j["mpc"];
        cfg.mpc.N = q.value("N", cfg.mpc.N);
        cfg.mpc.delta_s = q.value("delta_s", cfg.mpc.delta_s);
        cfg.mpc.z3_max = q.value("z3_max", cfg.mpc.z3_max);
        cfg.mpc.theta3_max = q.value("theta3_max", cfg.mpc.theta3_max);
        cfg.mpc.slack_weight = q.value("slack_weight", cfg.mpc.slack_weight);
        cfg.mpc.slack_damping = q.value("slack_damping", cfg.mpc.slack_damping);
        cfg.mpc.gap_delta = q.value("gap_delta", cfg.mpc.gap_delta);
        cfg.mpc.node_limit = q.value("node_limit", cfg.mpc.node_limit);
        cfg.mpc.v_abs = q.value("v_abs", cfg.mpc.v_abs);
        if (q.contains("Q_bar")) {
            const auto& w = q["Q_bar"];
            for (int i = 0; i < 8; ++i) cfg.mpc.Q_bar(i) = w.at(i);
        }
        if (q.contains("region_file") && !q["region_file"].get<std::string>().empty())
            cfg.mpc.region = PolytopeUnion::load_json(q["region_file"].get<std::string>());
    }
    return cfg;
}

}  // namespace ttmpc
