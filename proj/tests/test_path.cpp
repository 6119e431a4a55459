#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "ttmpc/path.hpp"

using namespace ttmpc;

namespace {
const VehicleParams kParams;
}

TEST_CASE("straight path: zero curvature, exact grid") {
    const NominalPath path = NominalPath::straight(100.0, -1, kParams);
    CHECK(path.s_end() == doctest::Approx(100.0));
    CHECK(path.dir() == -1);
    for (const auto& smp : path.samples()) {
        CHECK(smp.u_r == 0.0);
        CHECK(smp.kappa3r == 0.0);
        CHECK(smp.state.beta3 == 0.0);
        CHECK(smp.state.beta2 == 0.0);
        CHECK(smp.state.y3 == 0.0);
    }
    // roundoff floor only: the stencils differentiate a linear coordinate
    CHECK(path.consistency_residual(kParams) <= 1e-12);
}

TEST_CASE("figure-eight: consistency, curvature bound, symmetry") {
    const double length = 220.0;
    const NominalPath path = NominalPath::figure_eight(length, 1, kParams);
    CHECK(path.consistency_residual(kParams) <= 1e-6);
    CHECK(path.max_feedforward_curvature() <= kParams.u_max);

    // point symmetry about the crossing (centered at the origin)
    const auto& s = path.samples();
    double sym = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto& a = s[i].state;
        const auto& b = s[s.size() - 1 - i].state;
        sym = std::max(sym, std::hypot(a.x3 + b.x3, a.y3 + b.y3));
    }
    CHECK(sym <= 1e-3);

    CHECK(std::hypot(s.front().state.x3 - s.back().state.x3,
                     s.front().state.y3 - s.back().state.y3) <= 1e-6);

    const NominalPath rev = NominalPath::figure_eight(length, -1, kParams);
    CHECK(rev.dir() == -1);
    CHECK(rev.consistency_residual(kParams) <= 1e-6);
}

TEST_CASE("figure-eight: infeasible when too tight") {
    CHECK_THROWS_AS(NominalPath::figure_eight(60.0, 1, kParams), InfeasibleReference);
}

TEST_CASE("sampling: exact at grid points, interpolated between") {
    const NominalPath path = NominalPath::figure_eight(220.0, 1, kParams);
    const auto& smp = path.samples()[123];
    const PathSample got = path.sample_at(smp.s);
    CHECK(got.state.x3 == doctest::Approx(smp.state.x3).epsilon(1e-14));
    CHECK(got.state.beta2 == doctest::Approx(smp.state.beta2).epsilon(1e-14));
    CHECK(got.kappa3r ==
          doctest::Approx(std::tan(got.state.beta3) / kParams.L3).epsilon(1e-12));

    const NominalPath line = NominalPath::straight(50.0, 1, kParams);
    const PathSample mid = line.sample_at(12.345);
    CHECK(mid.state.x3 == doctest::Approx(12.345));
    CHECK(mid.state.theta3 == 0.0);
    CHECK_THROWS_AS(line.sample_at(50.2), OutOfRange);
    CHECK_THROWS_AS(line.sample_at(-0.2), OutOfRange);
}

TEST_CASE("sampling is monotone along a straight path") {
    const NominalPath line = NominalPath::straight(40.0, 1, kParams);
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> pick(0.0, 40.0);
    for (int i = 0; i < 200; ++i) {
        double a = pick(rng), b = pick(rng);
        if (a > b) std::swap(a, b);
        CHECK(line.sample_at(a).state.x3 <= line.sample_at(b).state.x3 + 1e-12);
    }
}

TEST_CASE("projection: on-path points and lateral offsets") {
    const NominalPath line = NominalPath::straight(60.0, 1, kParams);
    CHECK(line.project(20.0, 0.0, 19.0) == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(line.project(31.5, 3.0, 30.0) == doctest::Approx(31.5).epsilon(1e-9));
    CHECK(line.project(31.5, -3.0, 30.0) == doctest::Approx(31.5).epsilon(1e-9));
}

TEST_CASE("projection beats a dense grid argmin near the figure-eight") {
    const NominalPath path = NominalPath::figure_eight(220.0, 1, kParams);
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> along(5.0, 210.0), lat(-2.0, 2.0);
    for (int i = 0; i < 50; ++i) {
        const double s_true = along(rng);
        const PathSample ref = path.sample_at(s_true);
        const double nx = -std::sin(ref.state.theta3), ny = std::cos(ref.state.theta3);
        const double off = lat(rng);
        const double px = ref.state.x3 + off * nx;
        const double py = ref.state.y3 + off * ny;
        const double s_hat = path.project(px, py, s_true + 0.5);

        double best_d2 = 1e300;
        double best_s = 0.0;
        for (const auto& smp : path.samples()) {
            if (std::abs(smp.s - (s_true + 0.5)) > 5.0) continue;
            const double d2 = std::hypot(px - smp.state.x3, py - smp.state.y3);
            if (d2 < best_d2) {
                best_d2 = d2;
                best_s = smp.s;
            }
        }
        CHECK(std::abs(s_hat - best_s) <= path.spacing() + 1e-9);
        const PathSample at = path.sample_at(s_hat);
        const double dx = px - at.state.x3, dy = py - at.state.y3;
        const double tang = dx * std::cos(at.state.theta3) + dy * std::sin(at.state.theta3);
        const double dist = std::hypot(dx, dy);
        if (dist > 1e-3) CHECK(std::abs(tang) / dist <= 1e-6);
    }
}

TEST_CASE("projection is idempotent") {
    const NominalPath path = NominalPath::figure_eight(220.0, -1, kParams);
    const double s0 = 77.3;
    const PathSample ref = path.sample_at(s0);
    const double s1 = path.project(ref.state.x3, ref.state.y3, s0 + 1.0);
    const double s2 = path.project(path.sample_at(s1).state.x3, path.sample_at(s1).state.y3, s1);
    CHECK(s1 == doctest::Approx(s0).epsilon(1e-9));
    CHECK(s2 == doctest::Approx(s1).epsilon(1e-9));
}

TEST_CASE("projection lost outside the window") {
    const NominalPath line = NominalPath::straight(100.0, 1, kParams);
    CHECK_THROWS_AS(line.project(80.0, 0.0, 20.0, 5.0), ProjectionLost);
}

TEST_CASE("consistency check flags a corrupted sample") {
    const NominalPath path = NominalPath::figure_eight(220.0, 1, kParams);
    const std::string tmp = "corrupted_path.csv";
    path.to_csv(tmp);
    CHECK(NominalPath::from_csv(tmp, kParams).consistency_residual(kParams) <= 1e-6);
    {
        std::vector<PathSample> rows = path.samples();
        rows[500].state.beta3 += 0.1;
        std::FILE* f = std::fopen(tmp.c_str(), "w");
        std::fputs("s,x3,y3,theta3,beta3,beta2,u_r,dir\n", f);
        for (const auto& r : rows)
            std::fprintf(f, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", r.s, r.state.x3,
                         r.state.y3, r.state.theta3, r.state.beta3, r.state.beta2, r.u_r, r.dir);
        std::fclose(f);
    }
    CHECK(NominalPath::from_csv(tmp, kParams).consistency_residual(kParams) > 1e-3);
    std::filesystem::remove(tmp);
}

TEST_CASE("csv round trip is exact") {
    const NominalPath path = NominalPath::figure_eight(220.0, -1, kParams);
    const std::string tmp = "roundtrip_path.csv";
    path.to_csv(tmp);
    const NominalPath back = NominalPath::from_csv(tmp, kParams);
    REQUIRE(back.size() == path.size());
    CHECK(back.dir() == path.dir());
    double worst = 0.0;
    for (std::size_t i = 0; i < path.size(); ++i) {
        worst = std::max(worst, std::abs(path.samples()[i].state.x3 - back.samples()[i].state.x3));
        worst = std::max(worst, std::abs(path.samples()[i].u_r - back.samples()[i].u_r));
    }
    CHECK(worst == 0.0);
    std::filesystem::remove(tmp);
}
