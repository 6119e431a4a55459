#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttmpc/frenet.hpp"
#include "ttmpc/geometry.hpp"
#include "ttmpc/linearization.hpp"
#include "ttmpc/path.hpp"
#include "ttmpc/qp.hpp"
#include "ttmpc/vehicle.hpp"

namespace ttmpc {

struct PathExhausted : std::runtime_error {
    explicit PathExhausted(const std::string& what) : std::runtime_error(what) {}
};

/// Controller tuning. Q_bar weighs the eight control measures
/// [z1, th1, z2, th2, b2, z3, th3, b3]; region is the joint-angle
/// constraint set (absent = unconstrained).
struct MpcConfig {
    int N = 40;
    double delta_s = 0.2;
    Eigen::Matrix<double, 8, 1> Q_bar =
        (Eigen::Matrix<double, 8, 1>() << 0.5, 1.0, 0.5, 1.0, 4.0, 0.5, 1.0, 4.0).finished() /
        35.0;
    std::optional<PolytopeUnion> region;
    double z3_max = 5.0;
    double theta3_max = 1.2;
    double slack_weight = 1e3;
    double slack_damping = 1e-3;  ///< small quadratic term keeping the Hessian well conditioned
    double gap_delta = 0.02;
    long node_limit = 200000;
    double v_abs = 1.0;  ///< speed magnitude used in the slew bound

    void validate() const;
};

/// Linear map from the error state to the eight control measures and the
/// induced stage-cost weight Q = M' Qbar M.
struct CostDesign {
    Eigen::Matrix<double, 8, 4> M;
    Eigen::Matrix4d Q;
};

CostDesign build_cost(const VehicleParams& p, const Eigen::Matrix<double, 8, 1>& Q_bar);

/// Receding-horizon memory carried between cycles.
struct CycleState {
    bool has_prev = false;
    double s = 0.0;             ///< last projection
    double u_prev = 0.0;        ///< previously applied curvature
    std::vector<int> prev_assignment;  ///< per-stage polytope choice (MIQP)
    QpResult warm;
    bool has_warm = false;
};

/// Condensed QP for one cycle, with bookkeeping to map the solution back
/// to predicted trajectories.
struct MpcProblem {
    DenseQp qp;
    int N = 0;        ///< effective horizon (truncated near the path end)
    int n_poly = 0;   ///< polytopes carried as binaries (0 when fixed or none)
    int nu = 0, nsa = 0, nsz = 0, nst = 0, nd = 0;
    double cost_offset = 0.0;  ///< constant state-cost term dropped from the QP
    std::vector<Eigen::Matrix4d> Phi;  ///< state transition from x0, size N+1
    Eigen::MatrixXd Gamma;             ///< 4(N+1) x N input-to-state map
    Eigen::Vector4d x0 = Eigen::Vector4d::Zero();

    int iu(int k) const { return k; }
    int isa(int k) const { return nu + k; }
    int isz(int k) const { return nu + nsa + (k - 1); }
    int ist(int k) const { return nu + nsa + nsz + (k - 1); }
    int idelta(int i, int k) const { return nu + nsa + nsz + nst + k * n_poly + i; }
};

/// Builds the condensed problem at (e0, s0). With `fixed_binaries` the
/// joint-angle rows keep only the selected polytope per stage and no
/// binary variables are emitted.
MpcProblem build_problem(const ErrorState& e0, double s0, const NominalPath& path,
                         const MpcConfig& config, const VehicleParams& p,
                         const CostDesign& cost, const TerminalCost& terminal,
                         const CycleState& cycle,
                         const std::vector<int>* fixed_binaries = nullptr);

enum class MpcStatus { Optimal, NodeLimit, Fault };

struct MpcSolution {
    MpcStatus status = MpcStatus::Optimal;
    Eigen::VectorXd u_tilde_seq;
    Eigen::Matrix<double, 4, Eigen::Dynamic> predicted;  ///< N+1 error states
    std::vector<int> binaries;  ///< chosen polytope per stage (MIQP)
    double objective = 0.0;
    double lower_bound = 0.0;
    double gap = 0.0;
    double solve_ms = 0.0;
    long nodes = 0;
    int qp_iterations = 0;
    double kkt_residual = 0.0;
};

MpcSolution solve_qp_mpc(const ErrorState& e0, double s0, const NominalPath& path,
                         const MpcConfig& config, const VehicleParams& p,
                         const CostDesign& cost, const TerminalCost& terminal,
                         CycleState& cycle);

MpcSolution solve_miqp_mpc(const ErrorState& e0, double s0, const NominalPath& path,
                           const MpcConfig& config, const VehicleParams& p,
                           const CostDesign& cost, const TerminalCost& terminal,
                           CycleState& cycle);

enum class ControllerKind { LQ, QP, MIQP };

struct ControlDiagnostics {
    double s = 0.0;
    ErrorState error;
    double u_tilde = 0.0;
    double u = 0.0;
    double objective = 0.0;
    double gap = 0.0;
    long nodes = 0;
    double solve_ms = 0.0;
    double kkt_residual = 0.0;
    MpcStatus status = MpcStatus::Optimal;
};

/// Full closed-loop policy: project, transform, solve, compose the
/// applied curvature u = u_r(s) + u_tilde.
class MpcController {
  public:
    MpcController(ControllerKind kind, MpcConfig config, VehicleParams params, int dir);

    ControlDiagnostics control_step(const VehicleState& x, const NominalPath& path);

    void reset(double s_hint, double u_initial);
    ControllerKind kind() const { return kind_; }
    const MpcConfig& config() const { return config_; }
    const TerminalCost& terminal() const { return terminal_; }
    const CostDesign& cost() const { return cost_; }

  private:
    ControllerKind kind_;
    MpcConfig config_;
    VehicleParams params_;
    CostDesign cost_;
    TerminalCost terminal_;
    CycleState cycle_;
    bool primed_ = false;
};

}  // namespace ttmpc
