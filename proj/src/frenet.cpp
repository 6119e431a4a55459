#include "ttmpc/frenet.hpp"

#include <cmath>

namespace ttmpc {

namespace {

// Joint-angle rate shares of the kinematic model per unit of v3:
//   p = contribution of the dolly heading rate, g = tractor curvature channel.
double p_share(double b2, double b3, double u, const VehicleParams& prm) {
    const double c1 = c1_factor(b2, b3, u, prm);
    if (c1 <= kSingularTol) throw SingularConfiguration("p_share: C1 <= tolerance");
    return (std::sin(b2) - prm.M1 * std::cos(b2) * u) / (prm.L2 * c1);
}

double g_share(double b2, double b3, double u, const VehicleParams& prm) {
    const double c1 = c1_factor(b2, b3, u, prm);
    if (c1 <= kSingularTol) throw SingularConfiguration("g_share: C1 <= tolerance");
    return (u - std::sin(b2) / prm.L2 + prm.M1 / prm.L2 * std::cos(b2) * u) / c1;
}

void check_valid(const PathSample& ref, const ErrorState& e) {
    if (!(ref.kappa3r * e.z3 < 1.0) || !(std::abs(e.th3) < kPi / 2.0)) {
        throw FrenetInvalid("kappa3r*z3 = " + std::to_string(ref.kappa3r * e.z3) +
                            ", |th3| = " + std::to_string(std::abs(e.th3)));
    }
}

}  // namespace

bool frenet_valid(const PathSample& ref, const ErrorState& e) {
    return ref.kappa3r * e.z3 < 1.0 && std::abs(e.th3) < kPi / 2.0;
}

std::pair<double, ErrorState> global_to_error(const VehicleState& x, const NominalPath& path,
                                              double s_hint, double window) {
    const double s = path.project(x.x3, x.y3, s_hint, window);
    const PathSample ref = path.sample_at(s);
    const double dx = x.x3 - ref.state.x3;
    const double dy = x.y3 - ref.state.y3;
    ErrorState e;
    // Signed lateral offset: cross product of the nominal heading with the
    // offset vector (left of the heading is positive).
    e.z3 = std::cos(ref.state.theta3) * dy - std::sin(ref.state.theta3) * dx;
    e.th3 = wrap_angle(x.theta3 - ref.state.theta3);
    e.b3 = wrap_angle(x.beta3 - ref.state.beta3);
    e.b2 = wrap_angle(x.beta2 - ref.state.beta2);
    check_valid(ref, e);
    return {s, e};
}

VehicleState error_to_global(double s, const ErrorState& e, const NominalPath& path) {
    const PathSample ref = path.sample_at(s);
    VehicleState x;
    x.x3 = ref.state.x3 - e.z3 * std::sin(ref.state.theta3);
    x.y3 = ref.state.y3 + e.z3 * std::cos(ref.state.theta3);
    x.theta3 = ref.state.theta3 + e.th3;
    x.beta3 = ref.state.beta3 + e.b3;
    x.beta2 = ref.state.beta2 + e.b2;
    return x;
}

Eigen::Vector4d error_derivative_spatial(const PathSample& ref, const ErrorState& e,
                                         double u_tilde, const VehicleParams& p) {
    check_valid(ref, e);
    const double vbar = static_cast<double>(ref.dir);
    const double k = ref.kappa3r;
    const double b3r = ref.state.beta3;
    const double b2r = ref.state.beta2;
    const double u_r = ref.u_r;
    const double b3 = b3r + e.b3;
    const double b2 = b2r + e.b2;
    const double u = u_r + u_tilde;
    const double stretch = 1.0 - k * e.z3;
    const double cth = std::cos(e.th3);

    const double p_cur = p_share(b2, b3, u, p);
    const double p_ref = p_share(b2r, b3r, u_r, p);
    const double g_cur = g_share(b2, b3, u, p);
    const double g_ref = g_share(b2r, b3r, u_r, p);

    Eigen::Vector4d d;
    d(0) = vbar * stretch * std::tan(e.th3);
    d(1) = vbar * (stretch * std::tan(b3) / (p.L3 * cth) - k);
    d(2) = vbar * (stretch / cth * (p_cur - std::tan(b3) / p.L3) - (p_ref - k));
    d(3) = vbar * (stretch / cth * g_cur - g_ref);
    return d;
}

Eigen::Vector4d error_derivative_spatial(double s, const ErrorState& e, double u_tilde,
                                         const NominalPath& path, const VehicleParams& p) {
    return error_derivative_spatial(path.sample_at(s), e, u_tilde, p);
}

ErrorRates error_derivative_time(const PathSample& ref, const ErrorState& e, double u_tilde,
                                 double v3, const VehicleParams& p) {
    check_valid(ref, e);
    if (v3 * ref.dir <= 0.0)
        throw DirectionMismatch("sign(v3) must match the path direction");
    const double vbar = static_cast<double>(ref.dir);
    const double k = ref.kappa3r;
    const double b3 = ref.state.beta3 + e.b3;
    const double b2 = ref.state.beta2 + e.b2;
    const double u = ref.u_r + u_tilde;
    const double stretch = 1.0 - k * e.z3;
    const double cth = std::cos(e.th3);

    ErrorRates out;
    out.s_dot = v3 * vbar * cth / stretch;
    out.e_dot(0) = v3 * std::sin(e.th3);
    out.e_dot(1) = v3 * (std::tan(b3) / p.L3 - k * cth / stretch);
    out.e_dot(2) = v3 * (p_share(b2, b3, u, p) - std::tan(b3) / p.L3 -
                         cth / stretch *
                             (p_share(ref.state.beta2, ref.state.beta3, ref.u_r, p) - k));
    out.e_dot(3) = v3 * (g_share(b2, b3, u, p) -
                         cth / stretch * g_share(ref.state.beta2, ref.state.beta3, ref.u_r, p));
    return out;
}

ErrorRates error_derivative_time(double s, const ErrorState& e, double u_tilde, double v3,
                                 const NominalPath& path, const VehicleParams& p) {
    return error_derivative_time(path.sample_at(s), e, u_tilde, v3, p);
}

}  // namespace ttmpc
