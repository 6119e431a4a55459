#include "ttmpc/vehicle.hpp"

#include <cmath>

namespace ttmpc {

void VehicleParams::validate() const {
    auto req = [](bool ok, const char* msg) {
        if (!ok) throw std::invalid_argument(msg);
    };
    req(L1 > 0.0, "L1 must be positive");
    req(L2 > 0.0, "L2 must be positive");
    req(L3 > 0.0, "L3 must be positive");
    req(b > 0.0, "b must be positive");
    req(La >= 0.0, "La must be non-negative");
    req(u_max > 0.0, "u_max must be positive");
    req(du_max > 0.0, "du_max must be positive");
    req(phi > 0.0 && phi < 2.0 * kPi, "phi must be in (0, 2*pi)");
}

double c1_factor(double beta2, double beta3, double u, const VehicleParams& p) {
    return std::cos(beta3) * (std::cos(beta2) + p.M1 * std::sin(beta2) * u);
}

VehicleState state_derivative(const VehicleState& x, const ControlInput& in,
                              const VehicleParams& p) {
    const double c1 = c1_factor(x.beta2, x.beta3, in.u, p);
    if (c1 <= kSingularTol) {
        throw SingularConfiguration("C1 <= tolerance at beta2=" + std::to_string(x.beta2) +
                                    " beta3=" + std::to_string(x.beta3));
    }
    const double v3 = in.v * c1;
    const double sb2 = std::sin(x.beta2);
    const double cb2 = std::cos(x.beta2);
    const double tb3 = std::tan(x.beta3);

    VehicleState d;
    d.x3 = v3 * std::cos(x.theta3);
    d.y3 = v3 * std::sin(x.theta3);
    d.theta3 = v3 * tb3 / p.L3;
    d.beta3 = v3 * ((sb2 - p.M1 * cb2 * in.u) / (p.L2 * c1) - tb3 / p.L3);
    d.beta2 = v3 * ((in.u - sb2 / p.L2 + p.M1 / p.L2 * cb2 * in.u) / c1);
    return d;
}

namespace {

VehicleState axpy(const VehicleState& x, const VehicleState& d, double h) {
    return {x.x3 + h * d.x3, x.y3 + h * d.y3, x.theta3 + h * d.theta3,
            x.beta3 + h * d.beta3, x.beta2 + h * d.beta2};
}

VehicleState rk4(const VehicleState& x, const ControlInput& in, double h,
                 const VehicleParams& p) {
    const VehicleState k1 = state_derivative(x, in, p);
    const VehicleState k2 = state_derivative(axpy(x, k1, 0.5 * h), in, p);
    const VehicleState k3 = state_derivative(axpy(x, k2, 0.5 * h), in, p);
    const VehicleState k4 = state_derivative(axpy(x, k3, h), in, p);
    VehicleState out = x;
    out.x3 += h / 6.0 * (k1.x3 + 2.0 * k2.x3 + 2.0 * k3.x3 + k4.x3);
    out.y3 += h / 6.0 * (k1.y3 + 2.0 * k2.y3 + 2.0 * k3.y3 + k4.y3);
    out.theta3 += h / 6.0 * (k1.theta3 + 2.0 * k2.theta3 + 2.0 * k3.theta3 + k4.theta3);
    out.beta3 += h / 6.0 * (k1.beta3 + 2.0 * k2.beta3 + 2.0 * k3.beta3 + k4.beta3);
    out.beta2 += h / 6.0 * (k1.beta2 + 2.0 * k2.beta2 + 2.0 * k3.beta2 + k4.beta2);
    return out;
}

}  // namespace

StepResult integrate_step(const VehicleState& x, const ControlInput& in, double dt,
                          const VehicleParams& p, int substeps) {
    if (dt <= 0.0) throw std::invalid_argument("integrate_step: dt must be positive");
    if (substeps < 1) substeps = 1;
    const double h = dt / substeps;
    VehicleState cur = x;
    for (int i = 0; i < substeps; ++i) cur = rk4(cur, in, h, p);
    return {cur, is_jackknifed(cur)};
}

bool is_jackknifed(const VehicleState& x) {
    return std::abs(x.beta2) > kJackknifeAngle || std::abs(x.beta3) > kJackknifeAngle;
}

SegmentPoses segment_poses(const VehicleState& x, const VehicleParams& p) {
    const double theta2 = x.theta3 + x.beta3;
    const double theta1 = theta2 + x.beta2;
    SegmentPoses out;
    out.dolly.x = x.x3 + p.L3 * std::cos(x.theta3);
    out.dolly.y = x.y3 + p.L3 * std::sin(x.theta3);
    out.dolly.heading = theta2;
    // off-axle hitch sits L2 ahead of the dolly axle, tractor axle M1 ahead of the hitch
    const double hx = out.dolly.x + p.L2 * std::cos(theta2);
    const double hy = out.dolly.y + p.L2 * std::sin(theta2);
    out.tractor.x = hx + p.M1 * std::cos(theta1);
    out.tractor.y = hy + p.M1 * std::sin(theta1);
    out.tractor.heading = theta1;
    return out;
}

double wrap_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a <= 0.0) a += 2.0 * kPi;
    return a - kPi;
}

}  // namespace ttmpc
