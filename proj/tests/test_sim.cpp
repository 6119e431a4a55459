#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ttmpc/sim.hpp"

using namespace ttmpc;

namespace {

SimConfig base_config() {
    SimConfig cfg;
    cfg.scenario = Scenario::Straight;
    cfg.direction = -1;
    cfg.controller = ControllerKind::QP;
    cfg.duration_s = 60.0;
    cfg.mpc.region.reset();
    return cfg;
}

std::string slurp(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("zero initial error stays on the path") {
    SimConfig cfg = base_config();
    cfg.duration_s = 20.0;
    const SimResult r = run_closed_loop(cfg);
    CHECK(r.outcome == Outcome::Converged);
    CHECK(r.metrics.max_abs_z3 <= 1e-3);
}

TEST_CASE("perturbed start converges and respects the input limits") {
    SimConfig cfg = base_config();
    cfg.duration_s = 120.0;
    cfg.initial_error = ErrorState{0.0, 0.0, 0.3, -0.3};
    const SimResult r = run_closed_loop(cfg);
    REQUIRE(r.outcome == Outcome::Converged);
    const double cmax_ds =
        cfg.params.du_max * cfg.mpc.delta_s;  // straight path: C1 = 1 at nominal
    for (std::size_t i = 0; i < r.log.size(); ++i) {
        CHECK(std::abs(r.log[i].u) <= cfg.params.u_max + 1e-9);
        if (i > 0)
            CHECK(std::abs(r.log[i].u - r.log[i - 1].u) <= cmax_ds + 1e-9);
    }
}

TEST_CASE("one-step prediction error decays with the step and the error size") {
    // Linearized one-step prediction vs the nonlinear spatial flow:
    // the defect is O(ds^2) + O(||e||^2), so halving either input shrinks it.
    const SimConfig cfg = base_config();
    const NominalPath path = NominalPath::figure_eight(220.0, -1, cfg.params);
    const double s0 = 40.0;
    auto defect = [&](double scale, double ds) {
        const ErrorState e0{1.0 * scale, 0.2 * scale, 0.3 * scale, -0.3 * scale};
        const double ut = 0.02 * scale;
        const LinearizedModel m = discretize(linearize_at(path, s0, cfg.params), ds);
        const Eigen::Vector4d pred = m.F * e0.vec() + m.G * ut;
        // nonlinear flow of the spatial model over [s0, s0 + ds]
        Eigen::Vector4d e = e0.vec();
        const int steps = 50;
        const double h = ds / steps;
        for (int i = 0; i < steps; ++i) {
            const double s = s0 + i * h;
            auto rhs = [&](double sc, const Eigen::Vector4d& ec) {
                return error_derivative_spatial(sc, ErrorState::from_vec(ec), ut, path,
                                                cfg.params);
            };
            const Eigen::Vector4d k1 = rhs(s, e);
            const Eigen::Vector4d k2 = rhs(s + 0.5 * h, e + 0.5 * h * k1);
            const Eigen::Vector4d k3 = rhs(s + 0.5 * h, e + 0.5 * h * k2);
            const Eigen::Vector4d k4 = rhs(s + h, e + h * k3);
            e += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        return (pred - e).lpNorm<Eigen::Infinity>();
    };
    const double base = defect(1.0, 0.2);
    CHECK(defect(0.5, 0.2) <= 0.6 * base);
    CHECK(defect(1.0, 0.1) <= 0.6 * base);
    CHECK(defect(0.25, 0.2) <= 0.2 * base);
}

TEST_CASE("the unconstrained LQ baseline jackknifes from the hard start") {
    SimConfig cfg = base_config();
    cfg.controller = ControllerKind::LQ;
    cfg.duration_s = 60.0;
    cfg.initial_error = ErrorState{0.0, 0.0, 0.6, -0.6};
    const SimResult r = run_closed_loop(cfg);
    CHECK(r.outcome == Outcome::Jackknifed);
}

TEST_CASE("export schema and round trip") {
    SimConfig cfg = base_config();
    cfg.duration_s = 10.0;
    cfg.initial_error = ErrorState{0.0, 0.0, 0.2, -0.2};
    const SimResult r = run_closed_loop(cfg);
    const std::string dir = "sim_export_test";
    export_result(r, dir);

    std::ifstream csv(dir + "/run.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header ==
          "t,s,x3,y3,theta3,beta3,beta2,u,z3e,th3e,b3e,b2e,u_tilde,objective,gap,nodes,solve_ms");
    // recompute a metric from the file
    double max_z3 = 0.0;
    std::string line;
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        std::stringstream ss(line);
        std::string tok;
        for (int c = 0; c <= 8; ++c) std::getline(ss, tok, ',');
        max_z3 = std::max(max_z3, std::abs(std::stod(tok)));
        ++rows;
    }
    CHECK(rows == r.log.size());
    CHECK(max_z3 == doctest::Approx(r.metrics.max_abs_z3).epsilon(1e-12));

    // empty result gives a header-only file
    export_result(SimResult{}, dir);
    std::ifstream csv2(dir + "/run.csv");
    std::string h2, rest;
    std::getline(csv2, h2);
    CHECK_FALSE(std::getline(csv2, rest));
    std::filesystem::remove_all(dir);
}

TEST_CASE("identical configs reproduce bit-identical logs") {
    SimConfig cfg = base_config();
    cfg.duration_s = 15.0;
    cfg.initial_error = ErrorState{0.0, 0.0, 0.25, -0.2};
    const SimResult a = run_closed_loop(cfg);
    const SimResult b = run_closed_loop(cfg);
    export_result(a, "repro_a");
    export_result(b, "repro_b");
    // bit-identical modulo the wall-clock column (solve_ms is last)
    auto strip_timing = [](const std::string& text) {
        std::stringstream in(text);
        std::string line, out;
        while (std::getline(in, line)) {
            const auto cut = line.rfind(',');
            out += line.substr(0, cut);
            out += '\n';
        }
        return out;
    };
    CHECK(strip_timing(slurp("repro_a/run.csv")) == strip_timing(slurp("repro_b/run.csv")));
    std::filesystem::remove_all("repro_a");
    std::filesystem::remove_all("repro_b");
}

TEST_CASE("config loader round trip") {
    const std::string tmp = "sim_cfg_test.json";
    {
        std::ofstream out(tmp);
        out << R"({
          "scenario": "straight",
          "direction": -1,
          "controller": "qp",
          "duration_s": 33.0,
          "f_s": 10.0,
          "initial_error": [0.1, 0.0, 0.2, -0.2],
          "params": {"L1": 4.62, "L2": 3.87, "L3": 8.0, "M1": 1.66,
                      "La": 1.73, "b": 2.45, "u_max": 0.18, "du_max": 0.13},
          "mpc": {"N": 25, "delta_s": 0.2, "slack_weight": 1000.0}
        })";
    }
    const SimConfig cfg = load_sim_config(tmp);
    CHECK(cfg.duration_s == 33.0);
    CHECK(cfg.mpc.N == 25);
    CHECK(cfg.initial_error.b3 == doctest::Approx(0.2));
    CHECK(cfg.params.L2 == doctest::Approx(3.87));
    std::filesystem::remove(tmp);
}
