#include <cmath>
#include <random>

#include "doctest.h"
#include "ttmpc/frenet.hpp"
#include "ttmpc/linearization.hpp"

using namespace ttmpc;

namespace {
const VehicleParams kParams;

ErrorState random_error(std::mt19937& rng, double scale) {
    std::uniform_real_distribution<double> d(-scale, scale);
    return {2.0 * d(rng), d(rng), d(rng), d(rng)};
}
}  // namespace

TEST_CASE("on-path state maps to zero error") {
    const NominalPath path = NominalPath::figure_eight(220.0, -1, kParams);
    const PathSample ref = path.sample_at(42.0);
    auto [s, e] = global_to_error(ref.state, path, 41.0);
    CHECK(s == doctest::Approx(42.0).epsilon(1e-9));
    CHECK(std::abs(e.z3) <= 1e-9);
    CHECK(std::abs(e.th3) <= 1e-9);
    CHECK(std::abs(e.b3) <= 1e-9);
    CHECK(std::abs(e.b2) <= 1e-9);
}

TEST_CASE("lateral sign: left of the nominal heading is positive") {
    const NominalPath line = NominalPath::straight(80.0, -1, kParams);
    VehicleState x{};
    x.x3 = -30.0;  // backward path runs along -x
    x.y3 = 2.0;
    auto [s, e] = global_to_error(x, line, 30.0);
    CHECK(s == doctest::Approx(30.0).epsilon(1e-9));
    CHECK(e.z3 == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("error/global round trips") {
    const NominalPath path = NominalPath::figure_eight(220.0, 1, kParams);
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> along(10.0, 200.0);
    for (int i = 0; i < 100; ++i) {
        const double s0 = along(rng);
        const ErrorState e0 = random_error(rng, 0.3);
        const VehicleState x = error_to_global(s0, e0, path);
        auto [s1, e1] = global_to_error(x, path, s0 + 0.7);
        CHECK(std::abs(s1 - s0) <= 1e-9 * 220.0);
        CHECK(std::abs(e1.z3 - e0.z3) <= 1e-9);
        CHECK(std::abs(e1.th3 - e0.th3) <= 1e-9);
        CHECK(std::abs(e1.b3 - e0.b3) <= 1e-9);
        CHECK(std::abs(e1.b2 - e0.b2) <= 1e-9);
    }
    // zero error reproduces the nominal state exactly
    const PathSample ref = path.sample_at(55.0);
    const VehicleState x = error_to_global(55.0, ErrorState{}, path);
    CHECK(x.x3 == doctest::Approx(ref.state.x3).epsilon(1e-14));
    CHECK(x.beta2 == doctest::Approx(ref.state.beta2).epsilon(1e-14));
    // a joint-angle-only error leaves the pose untouched
    ErrorState e{};
    e.b2 = 0.2;
    const VehicleState xb = error_to_global(55.0, e, path);
    CHECK(xb.x3 == doctest::Approx(ref.state.x3).epsilon(1e-14));
    CHECK(xb.theta3 == doctest::Approx(ref.state.theta3).epsilon(1e-14));
    CHECK(xb.beta2 == doctest::Approx(ref.state.beta2 + 0.2).epsilon(1e-14));
}

TEST_CASE("spatial dynamics vanish at the origin for all s") {
    const NominalPath path = NominalPath::figure_eight(220.0, -1, kParams);
    for (double s = 0.0; s <= 219.0; s += 7.3) {
        const Eigen::Vector4d d = error_derivative_spatial(s, ErrorState{}, 0.0, path, kParams);
        CHECK(d.lpNorm<Eigen::Infinity>() <= 1e-12);
    }
}

TEST_CASE("time-domain basics") {
    const NominalPath line = NominalPath::straight(60.0, -1, kParams);
    SUBCASE("zero error travels at |v3|") {
        const ErrorRates r = error_derivative_time(20.0, ErrorState{}, 0.0, -1.0, line, kParams);
        CHECK(r.s_dot == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.e_dot.lpNorm<Eigen::Infinity>() <= 1e-12);
    }
    SUBCASE("lateral rate follows the heading error") {
        ErrorState e{};
        e.th3 = 0.1;
        const ErrorRates r = error_derivative_time(20.0, e, 0.0, -1.0, line, kParams);
        CHECK(r.e_dot(0) == doctest::Approx(-std::sin(0.1)).epsilon(1e-12));
    }
    SUBCASE("direction mismatch is rejected") {
        CHECK_THROWS_AS(error_derivative_time(20.0, ErrorState{}, 0.0, +1.0, line, kParams),
                        DirectionMismatch);
    }
}

TEST_CASE("chain rule ties the spatial and time models") {
    const NominalPath path = NominalPath::figure_eight(220.0, -1, kParams);
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> along(5.0, 215.0), du(-0.05, 0.05);
    int checked = 0;
    for (int i = 0; i < 1000; ++i) {
        const double s = along(rng);
        const ErrorState e = random_error(rng, 0.25);
        const PathSample ref = path.sample_at(s);
        if (!frenet_valid(ref, e)) continue;
        const double ut = du(rng);
        const double v3 = -0.7;  // any speed with the right sign
        ErrorRates tr;
        try {
            tr = error_derivative_time(ref, e, ut, v3, kParams);
        } catch (const SingularConfiguration&) {
            continue;
        }
        const Eigen::Vector4d sp = error_derivative_spatial(ref, e, ut, kParams);
        const Eigen::Vector4d via_time = tr.e_dot / tr.s_dot;
        const double scale = std::max(1.0, sp.lpNorm<Eigen::Infinity>());
        CHECK((sp - via_time).lpNorm<Eigen::Infinity>() / scale <= 1e-9);
        ++checked;
    }
    CHECK(checked > 800);
}

TEST_CASE("small-error behavior matches the linearization") {
    const NominalPath line = NominalPath::straight(60.0, -1, kParams);
    const LinearizedModel lin = linearize_at(line, 30.0, kParams);
    const Eigen::Vector4d e_dir = Eigen::Vector4d(0.5, -0.3, 0.4, 0.6).normalized();
    const double u_dir = 0.3;
    double prev_ratio = 0.0;
    for (const double eps : {1e-2, 1e-3, 1e-4}) {
        const ErrorState e = ErrorState::from_vec(eps * e_dir);
        const Eigen::Vector4d nl = error_derivative_spatial(30.0, e, eps * u_dir, line, kParams);
        const Eigen::Vector4d li = lin.A * (eps * e_dir) + lin.B * (eps * u_dir);
        const double err = (nl - li).lpNorm<Eigen::Infinity>();
        CHECK(err <= 10.0 * eps * eps);  // quadratic remainder
        prev_ratio = err;
    }
    (void)prev_ratio;
}

TEST_CASE("frenet validity is enforced strictly") {
    const NominalPath path = NominalPath::figure_eight(220.0, -1, kParams);
    // find a sample with meaningful curvature
    double s_curved = 55.0;
    const PathSample ref = path.sample_at(s_curved);
    REQUIRE(std::abs(ref.kappa3r) > 1e-3);
    ErrorState bad{};
    bad.z3 = 1.0 / ref.kappa3r;  // exactly on the singular offset
    CHECK_THROWS_AS(error_derivative_spatial(s_curved, bad, 0.0, path, kParams), FrenetInvalid);
    ErrorState tilted{};
    tilted.th3 = kPi / 2.0;
    CHECK_THROWS_AS(error_derivative_time(s_curved, tilted, 0.0, -1.0, path, kParams),
                    FrenetInvalid);
}

TEST_CASE("co-simulation: global model vs time-domain error model") {
    // Integrate both representations under the same input signal and
    // compare the error coordinates along the way.
    const NominalPath path = NominalPath::figure_eight(240.0, 1, kParams);
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> pert(-0.15, 0.15);
    for (int trial = 0; trial < 5; ++trial) {
        const double s0 = 20.0 + 30.0 * trial;
        ErrorState e0{pert(rng) * 4.0, pert(rng), pert(rng), pert(rng)};
        VehicleState x = error_to_global(s0, e0, path);
        double s = s0;
        Eigen::Vector4d e = e0.vec();

        const double dt = 0.01;
        const double v = 1.0;
        double worst = 0.0;
        for (int step = 0; step < 1000; ++step) {
            const double t = step * dt;
            const PathSample ref = path.sample_at(s);
            const double u_cmd = ref.u_r + 0.02 * std::sin(0.4 * t);

            // advance the error model (RK4 on (s, e))
            auto rhs = [&](double s_cur, const Eigen::Vector4d& e_cur) {
                const PathSample rr = path.sample_at(s_cur);
                const double v3 = v * c1_factor(rr.state.beta2 + e_cur(3),
                                                rr.state.beta3 + e_cur(2), u_cmd, kParams);
                const ErrorRates r = error_derivative_time(rr, ErrorState::from_vec(e_cur),
                                                           u_cmd - rr.u_r, v3, kParams);
                return std::make_pair(r.s_dot, r.e_dot);
            };
            const auto k1 = rhs(s, e);
            const auto k2 = rhs(s + 0.5 * dt * k1.first, e + 0.5 * dt * k1.second);
            const auto k3 = rhs(s + 0.5 * dt * k2.first, e + 0.5 * dt * k2.second);
            const auto k4 = rhs(s + dt * k3.first, e + dt * k3.second);
            s += dt / 6.0 * (k1.first + 2.0 * k2.first + 2.0 * k3.first + k4.first);
            e += dt / 6.0 * (k1.second + 2.0 * k2.second + 2.0 * k3.second + k4.second);

            x = integrate_step(x, {u_cmd, v}, dt, kParams, 2).state;

            if (step % 50 == 0) {
                auto [s_chk, e_chk] = global_to_error(x, path, s);
                worst = std::max(worst, (e_chk.vec() - e).lpNorm<Eigen::Infinity>());
            }
        }
        CHECK(worst <= 1e-4);
    }
}
