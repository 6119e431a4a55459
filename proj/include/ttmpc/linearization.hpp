#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

#include "ttmpc/frenet.hpp"
#include "ttmpc/path.hpp"
#include "ttmpc/vehicle.hpp"

namespace ttmpc {

struct NoConvergence : std::runtime_error {
    explicit NoConvergence(const std::string& what) : std::runtime_error(what) {}
};

/// Linearization of the spatial error dynamics about zero error at one
/// path station: continuous (per meter) A, B and the Euler-discretized
/// F = I + ds*A, G = ds*B.
struct LinearizedModel {
    Eigen::Matrix4d A = Eigen::Matrix4d::Zero();
    Eigen::Vector4d B = Eigen::Vector4d::Zero();
    Eigen::Matrix4d F = Eigen::Matrix4d::Identity();
    Eigen::Vector4d G = Eigen::Vector4d::Zero();
    double s = 0.0;
};

/// Closed-form Jacobians of the spatial error model at a nominal
/// configuration (continuous part only).
LinearizedModel linearize_nominal(double beta3r, double beta2r, double u_r, int dir,
                                  const VehicleParams& p);

LinearizedModel linearize_at(const NominalPath& path, double s, const VehicleParams& p);

/// Euler-forward discretization with sampling distance delta_s.
LinearizedModel discretize(LinearizedModel model, double delta_s);

/// Riccati solution for the terminal cost plus the associated LQ gain.
struct TerminalCost {
    Eigen::MatrixXd P;
    Eigen::RowVectorXd K;
    int dir = 1;
    double residual = 0.0;  ///< Frobenius norm of the equation residual
    int iterations = 0;
};

/// Fixed-point Riccati recursion for the discrete-time algebraic Riccati
/// equation with scalar input weight R. Throws NoConvergence.
TerminalCost solve_dare(const Eigen::MatrixXd& F, const Eigen::MatrixXd& G,
                        const Eigen::MatrixXd& Q, double R = 1.0, double tol = 1e-12,
                        int max_iter = 100000);

/// Terminal cost / LQ gain synthesized on the straight-path model for the
/// given motion direction.
TerminalCost straight_path_terminal_cost(int dir, const Eigen::Matrix4d& Q, double delta_s,
                                         const VehicleParams& p);

/// LQ feedback: u_tilde = -K e. The caller saturates to the curvature box.
double lq_control(const ErrorState& e, const TerminalCost& terminal);

}  // namespace ttmpc
