#include "ttmpc/linearization.hpp"

#include <cmath>

namespace ttmpc {

LinearizedModel linearize_nominal(double beta3r, double beta2r, double u_r, int dir,
                                  const VehicleParams& p) {
    const double c1 = c1_factor(beta2r, beta3r, u_r, p);
    if (c1 <= kSingularTol)
        throw SingularConfiguration("linearize_nominal: singular nominal configuration");

    const double vbar = dir < 0 ? -1.0 : 1.0;
    const double sb2 = std::sin(beta2r);
    const double cb2 = std::cos(beta2r);
    const double sb3 = std::sin(beta3r);
    const double cb3 = std::cos(beta3r);
    const double tb3 = std::tan(beta3r);
    const double L2 = p.L2, L3 = p.L3, M1 = p.M1;
    const double den = cb2 + u_r * M1 * sb2;  // C1 / cos(beta3r)

    const double a21 = -tb3 * tb3 / (L3 * L3);
    const double a23 = 1.0 / (L3 * cb3 * cb3);
    const double a31 =
        tb3 * (u_r * M1 * cb2 - sb2) / (L3 * L2 * cb3 * den) + tb3 * tb3 / (L3 * L3);
    const double a33 =
        sb3 * (sb2 - u_r * M1 * cb2) / (L2 * cb3 * cb3 * den) - 1.0 / (L3 * cb3 * cb3);
    const double a34 = (1.0 + u_r * u_r * M1 * M1) / (L2 * cb3 * den * den);
    const double a41 = -tb3 / (L2 * L3) * (u_r * L2 - sb2 + M1 * cb2 * u_r) / (cb3 * den);
    const double a43 = tb3 / L2 * (u_r * L2 + u_r * M1 * cb2 - sb2) / (cb3 * den);
    const double a44 = -(1.0 + u_r * u_r * M1 * M1 + u_r * u_r * L2 * M1 * cb2 -
                         u_r * L2 * sb2) /
                       (L2 * cb3 * den * den);
    const double b3 = -M1 / (L2 * cb3 * den * den);
    const double b4 = (M1 + L2 * cb2) / (L2 * cb3 * den * den);

    LinearizedModel m;
    m.A << 0.0, 1.0, 0.0, 0.0,
           a21, 0.0, a23, 0.0,
           a31, 0.0, a33, a34,
           a41, 0.0, a43, a44;
    m.A *= vbar;
    m.B << 0.0, 0.0, b3, b4;
    m.B *= vbar;
    return m;
}

LinearizedModel linearize_at(const NominalPath& path, double s, const VehicleParams& p) {
    const PathSample ref = path.sample_at(s);
    LinearizedModel m =
        linearize_nominal(ref.state.beta3, ref.state.beta2, ref.u_r, ref.dir, p);
    m.s = s;
    return m;
}

LinearizedModel discretize(LinearizedModel model, double delta_s) {
    if (delta_s <= 0.0) throw std::invalid_argument("discretize: delta_s must be positive");
    model.F = Eigen::Matrix4d::Identity() + delta_s * model.A;
    model.G = delta_s * model.B;
    return model;
}

TerminalCost solve_dare(const Eigen::MatrixXd& F, const Eigen::MatrixXd& G,
                        const Eigen::MatrixXd& Q, double R, double tol, int max_iter) {
    const Eigen::Index n = F.rows();
    if (F.cols() != n || G.rows() != n || Q.rows() != n || Q.cols() != n)
        throw std::invalid_argument("solve_dare: inconsistent dimensions");
    if (R <= 0.0) throw std::invalid_argument("solve_dare: R must be positive");

    const Eigen::Index m = G.cols();
    Eigen::MatrixXd P = Q;
    int it = 0;
    for (; it < max_iter; ++it) {
        const Eigen::MatrixXd GtP = G.transpose() * P;
        const Eigen::MatrixXd S = Eigen::MatrixXd::Identity(m, m) * R + GtP * G;
        const Eigen::MatrixXd K = S.ldlt().solve(GtP * F);
        const Eigen::MatrixXd Pn =
            F.transpose() * P * F - (F.transpose() * P * G) * K + Q;
        const double change = (Pn - P).norm() / std::max(1.0, Pn.norm());
        P = 0.5 * (Pn + Pn.transpose());
        if (change <= tol) break;
    }
    if (it >= max_iter) throw NoConvergence("solve_dare: iteration cap reached");

    TerminalCost out;
    const Eigen::MatrixXd GtP = G.transpose() * P;
    const Eigen::MatrixXd S = Eigen::MatrixXd::Identity(m, m) * R + GtP * G;
    Eigen::MatrixXd K = S.ldlt().solve(GtP * F);
    out.P = P;
    out.K = K.row(0);
    out.iterations = it + 1;
    out.residual =
        (F.transpose() * P * F - P - (F.transpose() * P * G) * K + Q).norm();
    return out;
}

TerminalCost straight_path_terminal_cost(int dir, const Eigen::Matrix4d& Q, double delta_s,
                                         const VehicleParams& p) {
    LinearizedModel m = discretize(linearize_nominal(0.0, 0.0, 0.0, dir, p), delta_s);
    TerminalCost tc = solve_dare(m.F, m.G, Q, 1.0);
    tc.dir = dir < 0 ? -1 : 1;
    return tc;
}

double lq_control(const ErrorState& e, const TerminalCost& terminal) {
    return -(terminal.K * e.vec())(0);
}

}  // namespace ttmpc
