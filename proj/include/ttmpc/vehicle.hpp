#pragma once

#include <stdexcept>
#include <string>

namespace ttmpc {

/// Thrown when the kinematic chain reaches a configuration where the
/// velocity coupling factor C1 is non-positive and the model degenerates.
struct SingularConfiguration : std::runtime_error {
    explicit SingularConfiguration(const std::string& what) : std::runtime_error(what) {}
};

/// Geometric and actuation parameters of the tractor + dolly + semitrailer
/// combination. Lengths in meters, angles in radians.
struct VehicleParams {
    double L1 = 4.62;    ///< tractor wheelbase
    double L2 = 3.87;    ///< dolly drawbar length (axle to hitch)
    double L3 = 8.00;    ///< semitrailer axle to dolly axle
    double M1 = 1.66;    ///< signed off-axle hitch offset behind the tractor axle
    double La = 1.73;    ///< semitrailer front overhang ahead of the dolly axle
    double b = 2.45;     ///< width of the semitrailer front face
    double phi = 140.0 * 3.14159265358979323846 / 180.0;  ///< sensor scan-field angle
    double u_max = 0.18;   ///< max tractor curvature [1/m]
    double du_max = 0.13;  ///< max tractor curvature rate [1/(m s)]

    void validate() const;
};

/// Global configuration: semitrailer axle pose plus the two joint angles.
/// beta3 = dolly heading minus semitrailer heading,
/// beta2 = tractor heading minus dolly heading.
struct VehicleState {
    double x3 = 0.0;
    double y3 = 0.0;
    double theta3 = 0.0;
    double beta3 = 0.0;
    double beta2 = 0.0;
};

/// Tractor curvature and rear-axle longitudinal velocity.
struct ControlInput {
    double u = 0.0;
    double v = 0.0;
};

inline constexpr double kSingularTol = 1e-6;
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kJackknifeAngle = kPi / 2.0;

/// Velocity coupling between tractor rear axle and semitrailer axle:
/// v3 = v * c1_factor. Non-positive values mean the configuration is
/// singular (callers must reject result <= kSingularTol).
double c1_factor(double beta2, double beta3, double u, const VehicleParams& p);

/// Right-hand side of the kinematic model. Throws SingularConfiguration
/// when c1_factor(beta2, beta3, u) <= kSingularTol.
VehicleState state_derivative(const VehicleState& x, const ControlInput& in,
                              const VehicleParams& p);

struct StepResult {
    VehicleState state;
    bool jackknifed = false;  ///< |beta2| or |beta3| exceeded pi/2 after the step
};

/// Classical RK4 over one control period, subdivided internally.
StepResult integrate_step(const VehicleState& x, const ControlInput& in, double dt,
                          const VehicleParams& p, int substeps = 5);

struct Pose2 {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
};

struct SegmentPoses {
    Pose2 dolly;    ///< dolly axle
    Pose2 tractor;  ///< tractor rear axle
};

/// Recovers dolly and tractor rear-axle poses from the minimal state by
/// chaining L3, L2 and M1 along the joint angles.
SegmentPoses segment_poses(const VehicleState& x, const VehicleParams& p);

bool is_jackknifed(const VehicleState& x);

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

}  // namespace ttmpc
