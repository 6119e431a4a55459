#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

#include "ttmpc/path.hpp"
#include "ttmpc/vehicle.hpp"

namespace ttmpc {

/// Raised when the path-coordinate transformation degenerates
/// (kappa3r * z3 >= 1 or |theta3 error| >= pi/2).
struct FrenetInvalid : std::runtime_error {
    explicit FrenetInvalid(const std::string& what) : std::runtime_error(what) {}
};

struct DirectionMismatch : std::runtime_error {
    explicit DirectionMismatch(const std::string& what) : std::runtime_error(what) {}
};

/// Path-following error state [z3, theta3, beta3, beta2] deviations.
/// z3 is positive to the left of the nominal semitrailer heading.
struct ErrorState {
    double z3 = 0.0;
    double th3 = 0.0;
    double b3 = 0.0;
    double b2 = 0.0;

    Eigen::Vector4d vec() const { return {z3, th3, b3, b2}; }
    static ErrorState from_vec(const Eigen::Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }
};

/// True while the Frenet transformation is valid at this sample
/// (strict inequalities).
bool frenet_valid(const PathSample& ref, const ErrorState& e);

/// Projects the global state onto the path and expresses it in error
/// coordinates. Throws ProjectionLost or FrenetInvalid.
std::pair<double, ErrorState> global_to_error(const VehicleState& x, const NominalPath& path,
                                              double s_hint, double window = 5.0);

/// Inverse map: nominal state at s composed with the error offsets.
VehicleState error_to_global(double s, const ErrorState& e, const NominalPath& path);

/// Spatial error dynamics d(error)/ds at a nominal sample.
Eigen::Vector4d error_derivative_spatial(const PathSample& ref, const ErrorState& e,
                                         double u_tilde, const VehicleParams& p);

Eigen::Vector4d error_derivative_spatial(double s, const ErrorState& e, double u_tilde,
                                         const NominalPath& path, const VehicleParams& p);

struct ErrorRates {
    double s_dot = 0.0;
    Eigen::Vector4d e_dot = Eigen::Vector4d::Zero();
};

/// Time-domain error dynamics. v3 is the semitrailer longitudinal
/// velocity; its sign must match the path direction.
ErrorRates error_derivative_time(const PathSample& ref, const ErrorState& e, double u_tilde,
                                 double v3, const VehicleParams& p);

ErrorRates error_derivative_time(double s, const ErrorState& e, double u_tilde, double v3,
                                 const NominalPath& path, const VehicleParams& p);

}  // namespace ttmpc
