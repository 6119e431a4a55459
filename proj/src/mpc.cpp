#include "ttmpc/mpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace ttmpc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}
}  // namespace

void MpcConfig::validate() const {
    if (N < 1) throw std::invalid_argument("MpcConfig: N >= 1 required");
    if (delta_s <= 0.0) throw std::invalid_argument("MpcConfig: delta_s must be positive");
    if (!(theta3_max < kPi / 2.0))
        throw std::invalid_argument("MpcConfig: theta3_max must be below pi/2");
    if (z3_max <= 0.0) throw std::invalid_argument("MpcConfig: z3_max must be positive");
    if (gap_delta < 0.0 || gap_delta >= 1.0)
        throw std::invalid_argument("MpcConfig: gap_delta in [0,1) required");
    if (slack_weight <= 0.0) throw std::invalid_argument("MpcConfig: slack_weight must be positive");
    if (v_abs <= 0.0) throw std::invalid_argument("MpcConfig: v_abs must be positive");
    if (region && region->count() < 1)
        throw std::invalid_argument("MpcConfig: region must hold at least one polytope");
}

CostDesign build_cost(const VehicleParams& p, const Eigen::Matrix<double, 8, 1>& Q_bar) {
    CostDesign c;
    c.M << 1.0, p.L3 + p.L2 + p.M1, p.L2 + p.M1, p.M1,
           0.0, 1.0, 1.0, 1.0,
           1.0, p.L3, 0.0, 0.0,
           0.0, 1.0, 1.0, 0.0,
           0.0, 0.0, 0.0, 1.0,
           1.0, 0.0, 0.0, 0.0,
           0.0, 1.0, 0.0, 0.0,
           0.0, 0.0, 1.0, 0.0;
    c.Q = c.M.transpose() * Q_bar.asDiagonal() * c.M;
    return c;
}

MpcProblem build_problem(const ErrorState& e0, double s0, const NominalPath& path,
                         const MpcConfig& config, const VehicleParams& p,
                         const CostDesign& cost, const TerminalCost& terminal,
                         const CycleState& cycle, const std::vector<int>* fixed_binaries) {
    config.validate();
    const double tol = 1e-9 * std::max(1.0, path.s_end());
    if (s0 + config.delta_s > path.s_end() + tol)
        throw PathExhausted("build_problem: horizon start too close to the path end");

    int N = config.N;
    while (N > 1 && s0 + N * config.delta_s > path.s_end() + tol) --N;

    MpcProblem prob;
    prob.N = N;
    prob.x0 = e0.vec();
    const bool has_region = config.region.has_value();
    const int n_poly = has_region ? config.region->count() : 0;
    const bool free_binaries = has_region && n_poly >= 2 && fixed_binaries == nullptr;
    prob.n_poly = free_binaries ? n_poly : 0;

    // Per-stage samples and discrete models.
    std::vector<PathSample> refs(N + 1);
    std::vector<LinearizedModel> models(N);
    for (int k = 0; k <= N; ++k) refs[k] = path.sample_at(s0 + k * config.delta_s);
    for (int k = 0; k < N; ++k) {
        models[k] = discretize(
            linearize_nominal(refs[k].state.beta3, refs[k].state.beta2, refs[k].u_r,
                              refs[k].dir, p),
            config.delta_s);
    }

    // Condensing: x_k = Phi_k x0 + Gamma_k u.
    prob.Phi.assign(N + 1, Eigen::Matrix4d::Identity());
    prob.Gamma = Eigen::MatrixXd::Zero(4 * (N + 1), N);
    for (int k = 0; k < N; ++k) {
        prob.Phi[k + 1] = models[k].F * prob.Phi[k];
        prob.Gamma.middleRows(4 * (k + 1), 4) = models[k].F * prob.Gamma.middleRows(4 * k, 4);
        prob.Gamma.block<4, 1>(4 * (k + 1), k) = models[k].G;
    }

    prob.nu = N;
    prob.nsa = has_region ? N : 0;
    prob.nsz = N - 1;
    prob.nst = N - 1;
    prob.nd = free_binaries ? n_poly * N : 0;
    const int nv = prob.nu + prob.nsa + prob.nsz + prob.nst + prob.nd;

    DenseQp& qp = prob.qp;
    qp.H = Eigen::MatrixXd::Zero(nv, nv);
    qp.g = Eigen::VectorXd::Zero(nv);

    // Quadratic cost in the inputs plus constant offset in x0.
    const Eigen::Matrix4d P = terminal.P;
    prob.cost_offset = 0.0;
    for (int k = 0; k <= N; ++k) {
        const Eigen::Matrix4d& Qk = (k < N) ? cost.Q : P;
        const auto Gk = prob.Gamma.middleRows(4 * k, 4);
        qp.H.topLeftCorner(N, N).noalias() += 2.0 * Gk.transpose() * Qk * Gk;
        const Eigen::Vector4d px = prob.Phi[k] * prob.x0;
        qp.g.head(N).noalias() += 2.0 * Gk.transpose() * (Qk * px);
        prob.cost_offset += px.dot(Qk * px);
    }
    qp.H.topLeftCorner(N, N).diagonal().array() += 2.0;
    for (int i = prob.nu; i < prob.nu + prob.nsa + prob.nsz + prob.nst; ++i) {
        qp.H(i, i) = 2.0 * config.slack_damping;
        qp.g(i) = config.slack_weight;
    }
    for (int i = nv - prob.nd; i < nv; ++i) qp.H(i, i) = 2e-8;

    // Shifted joint-angle polytopes per stage.
    std::vector<std::vector<Polytope>> shifted(has_region ? N : 0);
    for (int k = 0; k < N && has_region; ++k)
        shifted[k] = shift_polytopes(*config.region, refs[k].state.beta3, refs[k].state.beta2);

    int n_rows = 2 * N + 2 * N + 4 * (N - 1);
    if (has_region) {
        for (int k = 0; k < N; ++k) {
            if (fixed_binaries) {
                n_rows += shifted[k][(*fixed_binaries)[k]].rows();
            } else {
                for (const auto& poly : shifted[k]) n_rows += poly.rows();
            }
        }
    }
    n_rows += prob.nsa + prob.nsz + prob.nst;  // slack nonnegativity
    n_rows += 2 * prob.nd;                     // binary bounds

    qp.Ain = Eigen::MatrixXd::Zero(n_rows, nv);
    qp.bin = Eigen::VectorXd::Zero(n_rows);
    int row = 0;

    // Curvature box.
    for (int k = 0; k < N; ++k) {
        const Interval bounds = curvature_bounds(refs[k].u_r, p);
        qp.Ain(row, prob.iu(k)) = 1.0;
        qp.bin(row++) = bounds.hi;
        qp.Ain(row, prob.iu(k)) = -1.0;
        qp.bin(row++) = -bounds.lo;
    }
    // Slew rate; stage 0 references the previously applied curvature.
    for (int k = 0; k < N; ++k) {
        const double cmax = rate_bound(refs[k], config.v_abs, p) * config.delta_s;
        if (k == 0) {
            const double shift = cycle.u_prev - refs[0].u_r;
            qp.Ain(row, prob.iu(0)) = 1.0;
            qp.bin(row++) = cmax + shift;
            qp.Ain(row, prob.iu(0)) = -1.0;
            qp.bin(row++) = cmax - shift;
        } else {
            const double ubar = refs[k].u_r - refs[k - 1].u_r;
            qp.Ain(row, prob.iu(k)) = 1.0;
            qp.Ain(row, prob.iu(k - 1)) = -1.0;
            qp.bin(row++) = cmax + ubar;
            qp.Ain(row, prob.iu(k)) = -1.0;
            qp.Ain(row, prob.iu(k - 1)) = 1.0;
            qp.bin(row++) = cmax - ubar;
        }
    }
    // Soft lateral / orientation bounds on predicted states (stages 1..N-1).
    for (int k = 1; k < N; ++k) {
        const auto Gk = prob.Gamma.middleRows(4 * k, 4);
        const Eigen::Vector4d px = prob.Phi[k] * prob.x0;
        qp.Ain.row(row).head(N) = Gk.row(0);
        qp.Ain(row, prob.isz(k)) = -1.0;
        qp.bin(row++) = config.z3_max - px(0);
        qp.Ain.row(row).head(N) = -Gk.row(0);
        qp.Ain(row, prob.isz(k)) = -1.0;
        qp.bin(row++) = config.z3_max + px(0);
        qp.Ain.row(row).head(N) = Gk.row(1);
        qp.Ain(row, prob.ist(k)) = -1.0;
        qp.bin(row++) = config.theta3_max - px(1);
        qp.Ain.row(row).head(N) = -Gk.row(1);
        qp.Ain(row, prob.ist(k)) = -1.0;
        qp.bin(row++) = config.theta3_max + px(1);
    }
    // Joint-angle polytopes (soft, big-M gated when binaries are free).
    if (has_region) {
        for (int k = 0; k < N; ++k) {
            const auto Gk = prob.Gamma.middleRows(4 * k, 4);
            const Eigen::Vector4d px = prob.Phi[k] * prob.x0;
            for (int i = 0; i < static_cast<int>(shifted[k].size()); ++i) {
                if (fixed_binaries && (*fixed_binaries)[k] != i) continue;
                const Polytope& poly = shifted[k][i];
                for (int r = 0; r < poly.rows(); ++r) {
                    const double h1 = poly.H(r, 0), h2 = poly.H(r, 1);
                    qp.Ain.row(row).head(N) = h1 * Gk.row(2) + h2 * Gk.row(3);
                    qp.Ain(row, prob.isa(k)) = -1.0;
                    const double c0 = h1 * px(2) + h2 * px(3);
                    double rhs = poly.h(r) - c0;
                    if (free_binaries) {
                        const double big_m =
                            1.1 * std::max(0.0, 1.2 * (std::abs(h1) + std::abs(h2)) - poly.h(r));
                        qp.Ain(row, prob.idelta(i, k)) = big_m;
                        rhs += big_m;
                    }
                    qp.bin(row++) = rhs;
                }
            }
        }
    }
    // Slack nonnegativity.
    for (int i = prob.nu; i < prob.nu + prob.nsa + prob.nsz + prob.nst; ++i) {
        qp.Ain(row, i) = -1.0;
        qp.bin(row++) = 0.0;
    }
    // Binary box.
    for (int i = nv - prob.nd; i < nv; ++i) {
        qp.Ain(row, i) = 1.0;
        qp.bin(row++) = 1.0;
        qp.Ain(row, i) = -1.0;
        qp.bin(row++) = 0.0;
    }
    if (row != n_rows) throw std::logic_error("build_problem: row bookkeeping error");

    // One-hot equalities per stage when binaries are free.
    if (free_binaries) {
        qp.Aeq = Eigen::MatrixXd::Zero(N, nv);
        qp.beq = Eigen::VectorXd::Ones(N);
        for (int k = 0; k < N; ++k)
            for (int i = 0; i < n_poly; ++i) qp.Aeq(k, prob.idelta(i, k)) = 1.0;
    } else {
        qp.Aeq = Eigen::MatrixXd::Zero(0, nv);
        qp.beq = Eigen::VectorXd::Zero(0);
    }
    return prob;
}

namespace {

MpcSolution extract_solution(const MpcProblem& prob, const QpResult& res,
                             const std::vector<int>* fixed) {
    MpcSolution sol;
    sol.u_tilde_seq = res.x.head(prob.nu);
    sol.predicted.resize(4, prob.N + 1);
    for (int k = 0; k <= prob.N; ++k)
        sol.predicted.col(k) =
            prob.Phi[k] * prob.x0 + prob.Gamma.middleRows(4 * k, 4) * sol.u_tilde_seq;
    if (fixed) {
        sol.binaries.assign(fixed->begin(), fixed->begin() + prob.N);
    } else if (prob.nd > 0) {
        sol.binaries.resize(prob.N);
        for (int k = 0; k < prob.N; ++k) {
            int best = 0;
            double best_v = -kInf;
            for (int i = 0; i < prob.n_poly; ++i) {
                const double v = res.x(prob.idelta(i, k));
                if (v > best_v) {
                    best_v = v;
                    best = i;
                }
            }
            sol.binaries[k] = best;
        }
    }
    sol.objective = res.objective + prob.cost_offset;
    sol.lower_bound = sol.objective;
    sol.qp_iterations = res.iterations;
    sol.kkt_residual = res.kkt_residual;
    return sol;
}

// Default stage assignment: the polytope closest to containing the
// current absolute joint angles at each stage's nominal point.
std::vector<int> seed_assignment(const ErrorState& e0, double s0, const NominalPath& path,
                                 const MpcConfig& config, int N) {
    std::vector<int> assign(N, 0);
    for (int k = 0; k < N; ++k) {
        const PathSample ref = path.sample_at(s0 + k * config.delta_s);
        const Eigen::Vector2d q(ref.state.beta3 + e0.b3, ref.state.beta2 + e0.b2);
        int best = 0;
        double best_v = kInf;
        for (int i = 0; i < config.region->count(); ++i) {
            const double v = config.region->polys[i].max_violation(q);
            if (v < best_v) {
                best_v = v;
                best = i;
            }
        }
        assign[k] = best;
    }
    return assign;
}

}  // namespace

MpcSolution solve_qp_mpc(const ErrorState& e0, double s0, const NominalPath& path,
                         const MpcConfig& config, const VehicleParams& p,
                         const CostDesign& cost, const TerminalCost& terminal,
                         CycleState& cycle) {
    if (config.region && config.region->count() != 1)
        throw std::invalid_argument("solve_qp_mpc: region must be a single polytope (or absent)");
    const auto t0 = Clock::now();
    MpcProblem prob = build_problem(e0, s0, path, config, p, cost, terminal, cycle);
    QpSolver solver;
    const QpResult res = solver.solve(prob.qp, cycle.has_warm ? &cycle.warm : nullptr);
    MpcSolution sol;
    if (res.status != QpStatus::Optimal) {
        sol.status = MpcStatus::Fault;
        sol.solve_ms = ms_since(t0);
        return sol;
    }
    sol = extract_solution(prob, res, nullptr);
    sol.status = MpcStatus::Optimal;
    sol.gap = 0.0;
    sol.nodes = 1;
    sol.solve_ms = ms_since(t0);
    cycle.warm = res;
    cycle.has_warm = true;
    return sol;
}

MpcSolution solve_miqp_mpc(const ErrorState& e0, double s0, const NominalPath& path,
                           const MpcConfig& config, const VehicleParams& p,
                           const CostDesign& cost, const TerminalCost& terminal,
                           CycleState& cycle) {
    if (!config.region || config.region->count() < 2)
        throw std::invalid_argument("solve_miqp_mpc: region must hold >= 2 polytopes");
    const auto t0 = Clock::now();
    const int n_poly = config.region->count();

    MpcProblem base = build_problem(e0, s0, path, config, p, cost, terminal, cycle);
    const int N = base.N;
    QpSolver solver;

    // Previous-cycle assignment (shifted one stage) seeds the incumbent.
    std::vector<int> assign0;
    if (cycle.has_prev && !cycle.prev_assignment.empty()) {
        assign0.resize(N);
        const int len = static_cast<int>(cycle.prev_assignment.size());
        for (int k = 0; k < N; ++k) assign0[k] = cycle.prev_assignment[std::min(k + 1, len - 1)];
    } else {
        assign0 = seed_assignment(e0, s0, path, config, N);
    }

    double upper = kInf;
    MpcSolution incumbent;
    QpResult incumbent_qp;
    long nodes = 0;
    double best_bound = kInf;  // min over pruned/open bounds

    {
        MpcProblem fixp =
            build_problem(e0, s0, path, config, p, cost, terminal, cycle, &assign0);
        const QpResult res = solver.solve(fixp.qp, cycle.has_warm ? &cycle.warm : nullptr);
        ++nodes;
        if (res.status == QpStatus::Optimal) {
            incumbent = extract_solution(fixp, res, &assign0);
            upper = incumbent.objective;
            incumbent_qp = res;
        }
    }

    // Depth-first search over per-stage one-hot fixings.
    struct Node {
        std::vector<int8_t> fix;  // n_poly*N entries: -1 free, 0, 1
        double bound = -kInf;
    };
    auto propagate = [&](std::vector<int8_t>& fix) {
        for (int k = 0; k < N; ++k) {
            int ones = 0, zeros = 0;
            for (int i = 0; i < n_poly; ++i) {
                const int8_t v = fix[k * n_poly + i];
                ones += v == 1;
                zeros += v == 0;
            }
            if (ones == 1) {
                for (int i = 0; i < n_poly; ++i)
                    if (fix[k * n_poly + i] == -1) fix[k * n_poly + i] = 0;
            } else if (zeros == n_poly - 1) {
                for (int i = 0; i < n_poly; ++i)
                    if (fix[k * n_poly + i] == -1) fix[k * n_poly + i] = 1;
            }
        }
    };

    std::vector<Node> stack;
    stack.push_back({std::vector<int8_t>(static_cast<std::size_t>(n_poly) * N, -1), 0.0});

    bool node_limit_hit = false;
    const QpResult* warm_ptr = incumbent_qp.x.size() > 0 ? &incumbent_qp : nullptr;
    QpResult last_res;
    bool has_last = false;

    while (!stack.empty()) {
        if (nodes >= config.node_limit) {
            node_limit_hit = true;
            for (const auto& nd : stack) best_bound = std::min(best_bound, nd.bound);
            break;
        }
        Node node = std::move(stack.back());
        stack.pop_back();
        const double prune_at =
            upper < kInf ? upper - std::max(config.gap_delta * std::abs(upper),
                                            1e-9 * std::max(1.0, std::abs(upper)))
                         : kInf;
        if (node.bound >= prune_at) {
            best_bound = std::min(best_bound, node.bound);
            continue;
        }

        // Relaxation with the node's fixings as equalities.
        DenseQp relax = base.qp;
        int n_fixed = 0;
        for (int8_t v : node.fix) n_fixed += v >= 0;
        if (n_fixed > 0) {
            const int me0 = relax.n_eq();
            Eigen::MatrixXd Aeq(me0 + n_fixed, relax.n());
            Eigen::VectorXd beq(me0 + n_fixed);
            Aeq.topRows(me0) = relax.Aeq;
            beq.head(me0) = relax.beq;
            int r = me0;
            for (int k = 0; k < N; ++k)
                for (int i = 0; i < n_poly; ++i) {
                    const int8_t v = node.fix[k * n_poly + i];
                    if (v < 0) continue;
                    Aeq.row(r).setZero();
                    Aeq(r, base.idelta(i, k)) = 1.0;
                    beq(r) = v;
                    ++r;
                }
            relax.Aeq = std::move(Aeq);
            relax.beq = std::move(beq);
        }
        const QpResult res = solver.solve(relax, has_last ? &last_res : warm_ptr);
        ++nodes;
        if (res.status != QpStatus::Optimal) continue;  // infeasible subtree
        last_res = res;
        has_last = true;
        const double lb = res.objective + base.cost_offset;
        if (lb >= prune_at) {
            best_bound = std::min(best_bound, lb);
            continue;
        }

        // Integral?
        int frac_stage = -1;
        for (int k = 0; k < N && frac_stage < 0; ++k)
            for (int i = 0; i < n_poly; ++i) {
                const double v = res.x(base.idelta(i, k));
                if (std::abs(v - std::round(v)) > 1e-6) {
                    frac_stage = k;
                    break;
                }
            }
        if (frac_stage < 0) {
            if (lb < upper) {
                upper = lb;
                incumbent = extract_solution(base, res, nullptr);
                incumbent.objective = lb;
                incumbent_qp = res;
            }
            best_bound = std::min(best_bound, lb);
            continue;
        }

        // Branch on the seed polytope at the earliest fractional stage.
        int i_br = assign0[frac_stage];
        if (node.fix[frac_stage * n_poly + i_br] != -1) {
            double best_f = -1.0;
            for (int i = 0; i < n_poly; ++i) {
                if (node.fix[frac_stage * n_poly + i] != -1) continue;
                const double v = res.x(base.idelta(i, frac_stage));
                const double f = std::abs(v - std::round(v));
                if (f > best_f) {
                    best_f = f;
                    i_br = i;
                }
            }
        }
        Node zero = node, one = node;
        zero.bound = one.bound = lb;
        zero.fix[frac_stage * n_poly + i_br] = 0;
        one.fix[frac_stage * n_poly + i_br] = 1;
        propagate(zero.fix);
        propagate(one.fix);
        stack.push_back(std::move(zero));
        stack.push_back(std::move(one));  // popped first: previous assignment first

        // Early termination on gap.
        double open_lb = upper;
        for (const auto& nd : stack) open_lb = std::min(open_lb, nd.bound);
        const double gap_now =
            (upper - std::min(open_lb, best_bound)) / std::max(std::abs(upper), 1e-9);
        if (upper < kInf && gap_now <= config.gap_delta) {
            for (const auto& nd : stack) best_bound = std::min(best_bound, nd.bound);
            break;
        }
    }

    if (!(upper < kInf)) {
        MpcSolution sol;
        sol.status = MpcStatus::Fault;
        sol.solve_ms = ms_since(t0);
        sol.nodes = nodes;
        return sol;
    }
    if (best_bound == kInf) best_bound = upper;
    best_bound = std::min(best_bound, upper);

    incumbent.status = node_limit_hit ? MpcStatus::NodeLimit : MpcStatus::Optimal;
    incumbent.lower_bound = best_bound;
    incumbent.gap = std::max(0.0, (upper - best_bound) / std::max(std::abs(upper), 1e-9));
    incumbent.nodes = nodes;
    incumbent.solve_ms = ms_since(t0);

    cycle.prev_assignment = incumbent.binaries;
    cycle.warm = incumbent_qp;
    cycle.has_warm = true;
    return incumbent;
}

MpcController::MpcController(ControllerKind kind, MpcConfig config, VehicleParams params,
                             int dir)
    : kind_(kind), config_(std::move(config)), params_(std::move(params)) {
    params_.validate();
    config_.validate();
    cost_ = build_cost(params_, config_.Q_bar);
    terminal_ = straight_path_terminal_cost(dir, cost_.Q, config_.delta_s, params_);
    if (kind_ == ControllerKind::QP && config_.region && config_.region->count() != 1)
        throw std::invalid_argument("QP controller needs a single-polytope region");
    if (kind_ == ControllerKind::MIQP && (!config_.region || config_.region->count() < 2))
        throw std::invalid_argument("MIQP controller needs a polytope union (n >= 2)");
}

void MpcController::reset(double s_hint, double u_initial) {
    cycle_ = CycleState{};
    cycle_.s = s_hint;
    cycle_.u_prev = u_initial;
    primed_ = true;
}

ControlDiagnostics MpcController::control_step(const VehicleState& x, const NominalPath& path) {
    if (!primed_) throw std::logic_error("MpcController: call reset() first");
    auto [s, e] = global_to_error(x, path, cycle_.s);
    ControlDiagnostics diag;
    diag.s = s;
    diag.error = e;
    const PathSample ref = path.sample_at(s);

    if (kind_ == ControllerKind::LQ) {
        const auto t0 = Clock::now();
        double u_tilde = lq_control(e, terminal_);
        const Interval box = curvature_bounds(ref.u_r, params_);
        u_tilde = std::clamp(u_tilde, box.lo, box.hi);
        diag.u_tilde = u_tilde;
        diag.u = ref.u_r + u_tilde;
        diag.solve_ms = ms_since(t0);
    } else {
        MpcSolution sol =
            kind_ == ControllerKind::QP
                ? solve_qp_mpc(e, s, path, config_, params_, cost_, terminal_, cycle_)
                : solve_miqp_mpc(e, s, path, config_, params_, cost_, terminal_, cycle_);
        if (sol.status == MpcStatus::Fault)
            throw std::runtime_error("MpcController: solver fault");
        diag.u_tilde = sol.u_tilde_seq(0);
        diag.u = ref.u_r + diag.u_tilde;
        diag.objective = sol.objective;
        diag.gap = sol.gap;
        diag.nodes = sol.nodes;
        diag.solve_ms = sol.solve_ms;
        diag.kkt_residual = sol.kkt_residual;
        diag.status = sol.status;
    }
    cycle_.s = s;
    cycle_.u_prev = diag.u;
    cycle_.has_prev = true;
    return diag;
}

}  // namespace ttmpc
