#include "ttmpc/qp.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace ttmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Givens rotation that zeroes `b` against `a`: returns (c, s) with
// c*a - s*b = r, s*a + c*b = 0.
inline std::pair<double, double> givens(double a, double b) {
    if (b == 0.0) return {1.0, 0.0};
    const double r = std::hypot(a, b);
    return {a / r, -b / r};
}

}  // namespace

void DenseQp::dump_json(const std::string& file) const {
    nlohmann::json j;
    auto mat = [](const Eigen::MatrixXd& M) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index r = 0; r < M.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
            rows.push_back(row);
        }
        return rows;
    };
    auto vec = [](const Eigen::VectorXd& v) {
        nlohmann::json out = nlohmann::json::array();
        for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
        return out;
    };
    j["H"] = mat(H);
    j["g"] = vec(g);
    j["Ain"] = mat(Ain);
    j["bin"] = vec(bin);
    j["Aeq"] = mat(Aeq);
    j["beq"] = vec(beq);
    std::ofstream out(file);
    if (!out) throw std::runtime_error("dump_json: cannot open " + file);
    out << j.dump() << "\n";
}

double kkt_residual(const DenseQp& qp, const Eigen::VectorXd& x, const Eigen::VectorXd& lam_in,
                    const Eigen::VectorXd& lam_eq) {
    Eigen::VectorXd stat = qp.H * x + qp.g;
    if (qp.n_in() > 0) stat += qp.Ain.transpose() * lam_in;
    if (qp.n_eq() > 0) stat += qp.Aeq.transpose() * lam_eq;
    double res = stat.lpNorm<Eigen::Infinity>();
    if (qp.n_in() > 0) {
        const Eigen::VectorXd slack = qp.Ain * x - qp.bin;
        res = std::max(res, slack.maxCoeff());
        res = std::max(res, -std::min(0.0, lam_in.minCoeff()));
        res = std::max(res, slack.cwiseProduct(lam_in).cwiseAbs().maxCoeff());
    }
    if (qp.n_eq() > 0) res = std::max(res, (qp.Aeq * x - qp.beq).lpNorm<Eigen::Infinity>());
    return res;
}

QpResult QpSolver::solve(const DenseQp& qp, const QpResult* warm, double tol) {
    const int n = qp.n();
    const int me = qp.n_eq();
    const int mi = qp.n_in();
    if (qp.g.size() != n || qp.H.cols() != n)
        throw std::invalid_argument("QpSolver: inconsistent H/g");

    Eigen::MatrixXd H = 0.5 * (qp.H + qp.H.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    double ridge = 1e-9 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
    for (int k = 0; llt.info() != Eigen::Success && k < 12; ++k) {
        H.diagonal().array() += ridge;
        ridge *= 10.0;
        llt.compute(H);
    }
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("QpSolver: Hessian could not be made positive definite");

    // J = L^-T; x starts at the unconstrained minimizer.
    Eigen::MatrixXd J = llt.matrixU().solve(Eigen::MatrixXd::Identity(n, n));
    Eigen::VectorXd x = llt.solve(-qp.g);

    // Normals point toward feasibility: n_c' x >= d_c. Equality rows keep
    // their stored sign (flipped on entry when needed) and are never dropped.
    std::vector<int> active;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n + 1);
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, n);
    int q = 0;

    std::vector<char> warm_pref(mi, 0);
    if (warm)
        for (int id : warm->active_set)
            if (id >= 0 && id < mi) warm_pref[id] = 1;
    std::vector<char> is_active(mi, 0);

    const int iter_cap = 50 * (n + me + mi) + 100;
    int iters = 0;
    QpStatus status = QpStatus::Optimal;

    auto add_to_factor = [&](Eigen::VectorXd d) {
        for (int i = n - 1; i > q; --i) {
            auto [c, s] = givens(d(i - 1), d(i));
            if (s != 0.0) {
                d(i - 1) = c * d(i - 1) - s * d(i);
                d(i) = 0.0;
                for (int r = 0; r < n; ++r) {
                    const double t1 = J(r, i - 1), t2 = J(r, i);
                    J(r, i - 1) = c * t1 - s * t2;
                    J(r, i) = s * t1 + c * t2;
                }
            }
        }
        R.col(q).head(q + 1) = d.head(q + 1);
        ++q;
    };

    auto delete_from_factor = [&](int l) {
        for (int i = l; i + 1 < q; ++i) R.col(i) = R.col(i + 1);
        --q;
        for (int i = l; i < q; ++i) {
            auto [c, s] = givens(R(i, i), R(i + 1, i));
            if (s != 0.0) {
                for (int col = i; col < q; ++col) {
                    const double t1 = R(i, col), t2 = R(i + 1, col);
                    R(i, col) = c * t1 - s * t2;
                    R(i + 1, col) = s * t1 + c * t2;
                }
                for (int r = 0; r < n; ++r) {
                    const double t1 = J(r, i), t2 = J(r, i + 1);
                    J(r, i) = c * t1 - s * t2;
                    J(r, i + 1) = s * t1 + c * t2;
                }
            }
        }
    };

    // Steps constraint `np' x >= d0` into the active set. `eq` suppresses
    // dropping restrictions only in bookkeeping (equalities are added while
    // no inequality is active, so drops cannot involve them).
    auto add_constraint = [&](const Eigen::VectorXd& np, double d0, int id) -> bool {
        double u_in = 0.0;
        while (true) {
            if (++iters > iter_cap) {
                status = QpStatus::IterLimit;
                return false;
            }
            const Eigen::VectorXd d = J.transpose() * np;
            Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
            if (q < n) z.noalias() = J.rightCols(n - q) * d.tail(n - q);
            Eigen::VectorXd r;
            if (q > 0)
                r = R.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(d.head(q));

            const double viol = np.dot(x) - d0;  // negative while violated

            double t1 = kInf;
            int drop = -1;
            for (int k = 0; k < q; ++k) {
                if (active[k] < me) continue;  // never drop an equality
                if (r(k) > 1e-12 && u(k) / r(k) < t1) {
                    t1 = u(k) / r(k);
                    drop = k;
                }
            }
            double t2 = kInf;
            const double zTn = z.dot(np);
            if (z.lpNorm<Eigen::Infinity>() > 1e-13 && zTn > 0.0) t2 = -viol / zTn;

            if (t1 == kInf && t2 == kInf) {
                status = QpStatus::Infeasible;
                return false;
            }
            const double t = std::min(t1, t2);

            if (t2 < kInf) x += t * z;
            if (q > 0) u.head(q) -= t * r;
            u_in += t;

            if (t2 <= t1) {
                u(q) = u_in;
                active.push_back(id);
                if (id >= me) is_active[id - me] = 1;
                add_to_factor(d);
                return true;
            }
            // partial step: remove the blocking constraint and retry
            if (active[drop] >= me) is_active[active[drop] - me] = 0;
            active.erase(active.begin() + drop);
            for (int k = drop; k < q - 1; ++k) u(k) = u(k + 1);
            delete_from_factor(drop);
        }
    };

    QpResult out;

    // Equality phase.
    for (int id = 0; id < me && status == QpStatus::Optimal; ++id) {
        Eigen::VectorXd np = qp.Aeq.row(id).transpose();
        double d0 = qp.beq(id);
        const double s0 = np.dot(x) - d0;
        if (s0 > 0.0) {
            np = -np;
            d0 = -d0;
        }
        // A dependent equality is acceptable only when already satisfied.
        const Eigen::VectorXd d = J.transpose() * np;
        const bool dependent = q >= n || d.tail(n - q).lpNorm<Eigen::Infinity>() <= 1e-12;
        if (dependent) {
            if (std::abs(np.dot(x) - d0) > 1e-9 * (1.0 + std::abs(d0)))
                status = QpStatus::Infeasible;
            continue;
        }
        if (!add_constraint(np, d0, id)) break;
    }

    // Inequality phase: repeatedly activate the most violated row,
    // preferring rows active in the warm-start data.
    while (status == QpStatus::Optimal) {
        if (iters > iter_cap) {
            status = QpStatus::IterLimit;
            break;
        }
        int pick = -1;
        double worst = tol;
        if (mi > 0) {
            const Eigen::VectorXd slack = qp.Ain * x - qp.bin;
            for (int pass = 0; pass < 2 && pick < 0; ++pass) {
                for (int i = 0; i < mi; ++i) {
                    if (is_active[i]) continue;
                    if (pass == 0 && !warm_pref[i]) continue;
                    if (slack(i) > worst) {
                        worst = slack(i);
                        pick = i;
                    }
                }
                worst = tol;
            }
        }
        if (pick < 0) break;  // optimal
        if (!add_constraint(-qp.Ain.row(pick).transpose(), -qp.bin(pick), me + pick)) break;
    }

    out.status = status;
    out.x = x;
    out.iterations = iters;
    out.lam_in = Eigen::VectorXd::Zero(mi);
    out.lam_eq = Eigen::VectorXd::Zero(me);
    for (int k = 0; k < q; ++k) {
        if (active[k] >= me) {
            out.lam_in(active[k] - me) = u(k);
            out.active_set.push_back(active[k] - me);
        }
    }
    if (me > 0) {
        // Signed equality multipliers from the stationarity equation.
        Eigen::VectorXd rhs = -(H * x + qp.g);
        if (mi > 0) rhs -= qp.Ain.transpose() * out.lam_in;
        out.lam_eq = qp.Aeq.transpose().colPivHouseholderQr().solve(rhs);
    }
    out.objective = 0.5 * x.dot(qp.H * x) + qp.g.dot(x);

    if (out.status == QpStatus::Optimal) {
        out.kkt_residual = kkt_residual(qp, out.x, out.lam_in, out.lam_eq);
        if (out.kkt_residual > tol) {
            polish(qp, out);
            out.kkt_residual = kkt_residual(qp, out.x, out.lam_in, out.lam_eq);
            out.objective = 0.5 * out.x.dot(qp.H * out.x) + qp.g.dot(out.x);
        }
    }
    return out;
}

void QpSolver::polish(const DenseQp& qp, QpResult& res) const {
    const int n = qp.n();
    const int me = qp.n_eq();
    const int ma = static_cast<int>(res.active_set.size());
    const int m = me + ma;
    if (m > n) return;

    Eigen::MatrixXd H = 0.5 * (qp.H + qp.H.transpose());
    Eigen::VectorXd x;
    Eigen::VectorXd lam;

    if (m == 0) {
        Eigen::LLT<Eigen::MatrixXd> llt(H);
        if (llt.info() != Eigen::Success) return;
        x = llt.solve(-qp.g);
        x += llt.solve(-(qp.g + H * x));
    } else {
        Eigen::MatrixXd A(m, n);
        Eigen::VectorXd b(m);
        for (int i = 0; i < me; ++i) {
            A.row(i) = qp.Aeq.row(i);
            b(i) = qp.beq(i);
        }
        for (int i = 0; i < ma; ++i) {
            A.row(me + i) = qp.Ain.row(res.active_set[i]);
            b(me + i) = qp.bin(res.active_set[i]);
        }
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(A.transpose());
        Eigen::MatrixXd Qfull = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
        Eigen::MatrixXd Rfac = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
        for (int i = 0; i < m; ++i)
            if (std::abs(Rfac(i, i)) < 1e-12) return;
        const Eigen::MatrixXd Q1 = Qfull.leftCols(m);
        const Eigen::MatrixXd Z = Qfull.rightCols(n - m);
        const Eigen::VectorXd xp =
            Q1 * Rfac.transpose().triangularView<Eigen::Lower>().solve(b);
        if (n == m) {
            x = xp;
        } else {
            Eigen::LLT<Eigen::MatrixXd> llt(Eigen::MatrixXd(Z.transpose() * H * Z));
            if (llt.info() != Eigen::Success) return;
            Eigen::VectorXd w = llt.solve(-Z.transpose() * (qp.g + H * xp));
            x = xp + Z * w;
            w = llt.solve(-Z.transpose() * (qp.g + H * x));
            x += Z * w;
        }
        lam = Rfac.triangularView<Eigen::Upper>().solve(Q1.transpose() * (-qp.g - H * x));
    }

    Eigen::VectorXd lam_in = Eigen::VectorXd::Zero(qp.n_in());
    Eigen::VectorXd lam_eq = Eigen::VectorXd::Zero(me);
    for (int i = 0; i < me; ++i) lam_eq(i) = lam(i);
    for (int i = 0; i < ma; ++i) {
        const double v = lam(me + i);
        if (v < -1e-7) return;
        lam_in(res.active_set[i]) = std::max(0.0, v);
    }
    if (qp.n_in() > 0 && (qp.Ain * x - qp.bin).maxCoeff() > 1e-7) return;
    if (me > 0 && (qp.Aeq * x - qp.beq).lpNorm<Eigen::Infinity>() > 1e-7) return;

    if (kkt_residual(qp, x, lam_in, lam_eq) < res.kkt_residual) {
        res.x = x;
        res.lam_in = lam_in;
        res.lam_eq = lam_eq;
    }
}

}  // namespace ttmpc
