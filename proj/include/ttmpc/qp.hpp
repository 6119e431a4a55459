#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace ttmpc {

/// Dense convex quadratic program
///   min 0.5 x'H x + g'x   s.t.  Aeq x = beq,  Ain x <= bin.
struct DenseQp {
    Eigen::MatrixXd H;
    Eigen::VectorXd g;
    Eigen::MatrixXd Ain;
    Eigen::VectorXd bin;
    Eigen::MatrixXd Aeq;
    Eigen::VectorXd beq;

    int n() const { return static_cast<int>(H.rows()); }
    int n_in() const { return static_cast<int>(Ain.rows()); }
    int n_eq() const { return static_cast<int>(Aeq.rows()); }

    /// Writes the problem to a JSON file for offline reproduction.
    void dump_json(const std::string& file) const;
};

enum class QpStatus { Optimal, Infeasible, IterLimit };

struct QpResult {
    QpStatus status = QpStatus::IterLimit;
    Eigen::VectorXd x;
    Eigen::VectorXd lam_in;  ///< multipliers of Ain x <= bin (nonnegative)
    Eigen::VectorXd lam_eq;
    double objective = 0.0;
    int iterations = 0;
    double kkt_residual = 0.0;
    std::vector<int> active_set;  ///< active inequality rows at the solution
};

/// Dual active-set solver (Goldfarb-Idnani) for strictly convex QPs.
/// The Hessian is symmetrized and ridge-regularized when its Cholesky
/// factorization fails. Warm data only biases the constraint selection
/// order; it never changes the optimum.
class QpSolver {
  public:
    QpResult solve(const DenseQp& qp, const QpResult* warm = nullptr, double tol = 1e-8);

  private:
    void polish(const DenseQp& qp, QpResult& res) const;
};

/// KKT residual (stationarity, feasibility, dual sign, complementarity)
/// of a candidate solution; used by the solver and by audits.
double kkt_residual(const DenseQp& qp, const Eigen::VectorXd& x, const Eigen::VectorXd& lam_in,
                    const Eigen::VectorXd& lam_eq);

}  // namespace ttmpc
