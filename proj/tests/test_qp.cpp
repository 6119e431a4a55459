#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "ttmpc/qp.hpp"

using namespace ttmpc;

namespace {

// Slow-but-sure oracle: accelerated projected gradient on the dual of
//   min 0.5 x'Hx + g'x  s.t.  Ax <= b   (H positive definite).
// Projection onto the nonnegative orthant is trivial, and the primal is
// recovered from the stationarity equation.
double dual_pg_objective(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                         const Eigen::MatrixXd& A, const Eigen::VectorXd& b, int iters = 20000) {
    const Eigen::LLT<Eigen::MatrixXd> llt(H);
    const Eigen::MatrixXd HiAt = llt.solve(A.transpose());
    const Eigen::VectorXd Hig = llt.solve(g);
    const Eigen::MatrixXd S = A * HiAt;  // dual Hessian
    const double L = S.operatorNorm() + 1e-12;
    Eigen::VectorXd lam = Eigen::VectorXd::Zero(A.rows());
    Eigen::VectorXd y = lam, lam_prev = lam;
    double t_acc = 1.0;
    for (int k = 0; k < iters; ++k) {
        // gradient of the negated dual: S*lam + (A*H^-1*g + b)
        const Eigen::VectorXd grad = S * y + (A * Hig + b);
        lam_prev = lam;
        lam = (y - grad / L).cwiseMax(0.0);
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_acc * t_acc));
        y = lam + ((t_acc - 1.0) / t_next) * (lam - lam_prev);
        t_acc = t_next;
    }
    const Eigen::VectorXd x = -llt.solve(g + A.transpose() * lam);
    return 0.5 * x.dot(H * x) + g.dot(x);
}

Eigen::MatrixXd random_spd(std::mt19937& rng, int n, double cond_lo = 0.2,
                           double cond_hi = 5.0) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) M(i, j) = gauss(rng);
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
    const Eigen::MatrixXd Q = qr.householderQ();
    std::uniform_real_distribution<double> ev(cond_lo, cond_hi);
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d(i) = ev(rng);
    return Q * d.asDiagonal() * Q.transpose();
}

}  // namespace

TEST_CASE("scalar box: minimum norm point above one") {
    DenseQp qp;
    qp.H.resize(1, 1);
    qp.H << 2.0;
    qp.g = Eigen::VectorXd::Zero(1);
    qp.Ain.resize(1, 1);
    qp.Ain << -1.0;  // -x <= -1  <=>  x >= 1
    qp.bin.resize(1);
    qp.bin << -1.0;
    qp.Aeq.resize(0, 1);
    qp.beq.resize(0);
    QpSolver solver;
    const QpResult res = solver.solve(qp);
    REQUIRE(res.status == QpStatus::Optimal);
    CHECK(res.x(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(res.objective == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(res.kkt_residual <= 1e-8);
}

TEST_CASE("unconstrained solve is the Newton step") {
    std::mt19937 rng(101);
    QpSolver solver;
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 8;
        DenseQp qp;
        qp.H = random_spd(rng, n);
        qp.g = Eigen::VectorXd::Random(n);
        qp.Ain.resize(0, n);
        qp.bin.resize(0);
        qp.Aeq.resize(0, n);
        qp.beq.resize(0);
        const QpResult res = solver.solve(qp);
        REQUIRE(res.status == QpStatus::Optimal);
        const Eigen::VectorXd x_star = -qp.H.ldlt().solve(qp.g);
        CHECK((res.x - x_star).lpNorm<Eigen::Infinity>() <= 1e-10);
    }
}

TEST_CASE("contradictory constraints are infeasible") {
    DenseQp qp;
    qp.H.resize(1, 1);
    qp.H << 2.0;
    qp.g = Eigen::VectorXd::Zero(1);
    qp.Ain.resize(2, 1);
    qp.Ain << 1.0, -1.0;  // x <= 0 and x >= 1
    qp.bin.resize(2);
    qp.bin << 0.0, -1.0;
    qp.Aeq.resize(0, 1);
    qp.beq.resize(0);
    QpSolver solver;
    CHECK(solver.solve(qp).status == QpStatus::Infeasible);
}

TEST_CASE("equality-constrained simplex centroid") {
    const int n = 5;
    DenseQp qp;
    qp.H = 2.0 * Eigen::MatrixXd::Identity(n, n);
    qp.g = Eigen::VectorXd::Zero(n);
    qp.Aeq = Eigen::MatrixXd::Ones(1, n);
    qp.beq = Eigen::VectorXd::Ones(1);
    qp.Ain = -Eigen::MatrixXd::Identity(n, n);
    qp.bin = Eigen::VectorXd::Zero(n);
    QpSolver solver;
    const QpResult res = solver.solve(qp);
    REQUIRE(res.status == QpStatus::Optimal);
    for (int i = 0; i < n; ++i) CHECK(res.x(i) == doctest::Approx(0.2).epsilon(1e-10));
    CHECK(res.kkt_residual <= 1e-8);
}

TEST_CASE("random feasible programs match the projected-gradient oracle") {
    std::mt19937 rng(2024);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> dim(2, 50);
    QpSolver solver;
    int solved = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const int n = dim(rng);
        const int m = std::uniform_int_distribution<int>(1, 2 * n)(rng);
        DenseQp qp;
        qp.H = random_spd(rng, n);
        qp.g = Eigen::VectorXd::NullaryExpr(n, [&]() { return gauss(rng); });
        qp.Ain = Eigen::MatrixXd::NullaryExpr(m, n, [&]() { return gauss(rng); });
        // guarantee feasibility through a slack interior point
        const Eigen::VectorXd x0 = Eigen::VectorXd::NullaryExpr(n, [&]() { return gauss(rng); });
        qp.bin = qp.Ain * x0 +
                 Eigen::VectorXd::NullaryExpr(m, [&]() { return 0.05 + std::abs(gauss(rng)); });
        qp.Aeq.resize(0, n);
        qp.beq.resize(0);

        const QpResult res = solver.solve(qp);
        REQUIRE(res.status == QpStatus::Optimal);
        CHECK(res.kkt_residual <= 1e-8);
        const double oracle = dual_pg_objective(qp.H, qp.g, qp.Ain, qp.bin);
        const double denom = std::max(1.0, std::abs(oracle));
        CHECK(std::abs(res.objective - oracle) / denom <= 1e-6);
        ++solved;
    }
    CHECK(solved == 500);
}

TEST_CASE("duality gap closes at the optimum") {
    std::mt19937 rng(77);
    std::normal_distribution<double> gauss(0.0, 1.0);
    QpSolver solver;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 12, m = 20;
        DenseQp qp;
        qp.H = random_spd(rng, n);
        qp.g = Eigen::VectorXd::NullaryExpr(n, [&]() { return gauss(rng); });
        qp.Ain = Eigen::MatrixXd::NullaryExpr(m, n, [&]() { return gauss(rng); });
        const Eigen::VectorXd x0 = Eigen::VectorXd::NullaryExpr(n, [&]() { return gauss(rng); });
        qp.bin = qp.Ain * x0 + Eigen::VectorXd::Constant(m, 0.3);
        qp.Aeq.resize(0, n);
        qp.beq.resize(0);
        const QpResult res = solver.solve(qp);
        REQUIRE(res.status == QpStatus::Optimal);
        // Lagrange dual value at the reported multipliers
        const Eigen::VectorXd r = qp.g + qp.Ain.transpose() * res.lam_in;
        const double dual_val =
            -0.5 * r.dot(qp.H.ldlt().solve(r)) - res.lam_in.dot(qp.bin);
        CHECK(std::abs(res.objective - dual_val) <=
              1e-7 * std::max(1.0, std::abs(res.objective)));
    }
}

TEST_CASE("warm start changes iterations, never the optimum") {
    std::mt19937 rng(31337);
    std::normal_distribution<double> gauss(0.0, 1.0);
    QpSolver solver;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 20, m = 35;
        DenseQp qp;
        qp.H = random_spd(rng, n);
        qp.g = Eigen::VectorXd::NullaryExpr(n, [&]() { return gauss(rng); });
        qp.Ain = Eigen::MatrixXd::NullaryExpr(m, n, [&]() { return gauss(rng); });
        const Eigen::VectorXd x0 = Eigen::VectorXd::NullaryExpr(n, [&]() { return gauss(rng); });
        qp.bin = qp.Ain * x0 + Eigen::VectorXd::Constant(m, 0.1);
        qp.Aeq.resize(0, n);
        qp.beq.resize(0);
        const QpResult cold = solver.solve(qp);
        REQUIRE(cold.status == QpStatus::Optimal);
        // perturb the gradient slightly and re-solve warm vs cold
        DenseQp qp2 = qp;
        qp2.g.array() += 0.01;
        const QpResult warm = solver.solve(qp2, &cold);
        const QpResult cold2 = solver.solve(qp2);
        REQUIRE(warm.status == QpStatus::Optimal);
        REQUIRE(cold2.status == QpStatus::Optimal);
        CHECK(std::abs(warm.objective - cold2.objective) <=
              1e-9 * std::max(1.0, std::abs(cold2.objective)));
    }
}

TEST_CASE("determinism: identical inputs produce identical outputs") {
    std::mt19937 rng(5150);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = 15, m = 25;
    DenseQp qp;
    qp.H = random_spd(rng, n);
    qp.g = Eigen::VectorXd::NullaryExpr(n, [&]() { return gauss(rng); });
    qp.Ain = Eigen::MatrixXd::NullaryExpr(m, n, [&]() { return gauss(rng); });
    const Eigen::VectorXd x0 = Eigen::VectorXd::NullaryExpr(n, [&]() { return gauss(rng); });
    qp.bin = qp.Ain * x0 + Eigen::VectorXd::Constant(m, 0.2);
    qp.Aeq.resize(0, n);
    qp.beq.resize(0);
    QpSolver solver;
    const QpResult a = solver.solve(qp);
    const QpResult b = solver.solve(qp);
    REQUIRE(a.status == QpStatus::Optimal);
    CHECK((a.x - b.x).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(a.iterations == b.iterations);
}

TEST_CASE("problem dump for offline reproduction") {
    DenseQp qp;
    qp.H = Eigen::MatrixXd::Identity(2, 2);
    qp.g = Eigen::VectorXd::Ones(2);
    qp.Ain = Eigen::MatrixXd::Identity(2, 2);
    qp.bin = Eigen::VectorXd::Ones(2);
    qp.Aeq.resize(0, 2);
    qp.beq.resize(0);
    const std::string tmp = "qp_dump.json";
    qp.dump_json(tmp);
    CHECK(std::filesystem::file_size(tmp) > 10);
    std::filesystem::remove(tmp);
}
