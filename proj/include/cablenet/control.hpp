#pragma once

// Feasible-iterate Gauss-Newton SQP for steering the equilibrium form.
//
// Every iterate (r_F, u) is an equilibrium: directions come from the
// linearized equilibrium constraint, and each line-search trial re-solves the
// equilibrium at u + alpha du, so the merit function is the cost itself.

#include "equilibrium.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cablenet {

struct ControlProblem {
    Coords r_des;          // target free-node coordinates [m]
    Eigen::VectorXd q;     // diagonal of Q_r (length 3 n_F)
    double c_conv = 1e-6;  // bound on ||p_{k+1} - p_k||_inf over [r_F; u]
    int max_outer = 100;
    double wolfe_c1 = 1e-4;
    double wolfe_c2 = 0.9;
    int max_trials = 30;   // equilibrium solves per line search

    void validate(const CableNet& net) const {
        if (r_des.size() != net.dim()) throw DimensionError("r_des has wrong size");
        if (q.size() != net.dim()) throw DimensionError("q_r has wrong size");
        if ((q.array() < 0.0).any() || !q.allFinite()) throw InvalidNetError("q_r entries must be >= 0");
        if (!r_des.allFinite()) throw InvalidNetError("r_des has non-finite entries");
        if (!(c_conv > 0.0)) throw InvalidNetError("control.c_conv must be > 0");
        if (max_outer < 1) throw InvalidNetError("control.max_outer must be >= 1");
        if (!(wolfe_c1 > 0.0 && wolfe_c1 < wolfe_c2 && wolfe_c2 < 1.0))
            throw InvalidNetError("control: need 0 < wolfe_c1 < wolfe_c2 < 1");
        if (max_trials < 1) throw InvalidNetError("control.max_trials must be >= 1");
    }
};

/// A feasible control iterate: `r` is the equilibrium for `u`.
struct ControlIterate {
    Inputs u;
    Coords r;
    double cost = 0.0;
    double step_alpha = 0.0;
    Inputs delta_u;
    double residual_norm = 0.0;
};

/// One row of a run trace. Row 0 is the initial equilibrium; row k records the
/// state after outer iteration k together with the line-search certificate of
/// the step that produced it.
struct TraceEntry {
    int iter = 0;
    double cost = 0.0;          // f_ocp
    double alpha = 0.0;
    double delta_u_norm = 0.0;  // ||du||_inf of the direction
    double residual_norm = 0.0; // ||h||_inf at the iterate
    double kkt_measure = 0.0;
    Inputs u;

    double merit = 0.0;         // line-search objective (f_ocp, plus the l1 term for sparse runs)
    double directional0 = 0.0;  // grad f(r_k)^T (r_{k+1} - r_k), plus the l1 change for sparse runs
    double directional1 = 0.0;  // grad f(r_{k+1})^T (r_{k+1} - r_k)
    double descent = 0.0;       // du^T grad_u f at the previous iterate
    bool armijo_ok = true;
    bool curvature_checked = false;
    bool curvature_ok = true;
    int trials = 0;
};

struct RunTrace {
    std::vector<TraceEntry> entries;
    std::vector<std::string> warnings;
};

struct ControlResult {
    ControlIterate final;
    RunTrace trace;
    bool converged = false;
    int iterations = 0;
    double kkt_measure = 0.0;
};

/// A control run stopped on a solver or line-search failure. `partial()`
/// holds the last feasible iterate and the trace up to it.
class ControlError : public CableNetError {
public:
    ControlError(const std::string& what, ControlResult partial)
        : CableNetError(what), partial_(std::move(partial)) {}
    const ControlResult& partial() const { return partial_; }

private:
    ControlResult partial_;
};

inline ControlProblem make_problem(const Coords& r_des, double q = 1.0) {
    ControlProblem p;
    p.r_des = r_des;
    p.q = Eigen::VectorXd::Constant(r_des.size(), q);
    return p;
}

/// f_ocp(r) = 1/2 sum_i q_i (r_i - r_des,i)^2
inline double cost(const Coords& r, const ControlProblem& prob) {
    if (r.size() != prob.r_des.size() || prob.q.size() != r.size())
        throw DimensionError("cost: configuration and target sizes differ");
    return 0.5 * (prob.q.array() * (r - prob.r_des).array().square()).sum();
}

inline Eigen::VectorXd cost_gradient(const Coords& r, const ControlProblem& prob) {
    return prob.q.cwiseProduct(r - prob.r_des);
}

/// grad_u f_ocp,u = S^T Q_r (r_F - r_des)
inline Eigen::VectorXd reduced_gradient(const Eigen::MatrixXd& sens, const Coords& r, const ControlProblem& prob) {
    return sens.transpose() * cost_gradient(r, prob);
}

inline double kkt_measure(const Eigen::MatrixXd& sens, const Coords& r, const ControlProblem& prob) {
    return detail::inf_norm(reduced_gradient(sens, r, prob));
}

/// Gauss-Newton direction from the reduced sensitivity: minimizes
/// 1/2 ||r - r_des + S du||_Q^2 through a Cholesky factorization of S^T Q S.
inline Inputs gn_direction(const Eigen::MatrixXd& sens, const Coords& r, const ControlProblem& prob) {
    if (sens.rows() != r.size()) throw DimensionError("gn_direction: sensitivity rows differ from configuration");
    const Eigen::MatrixXd normal = sens.transpose() * prob.q.asDiagonal() * sens;
    const Eigen::VectorXd rhs = -reduced_gradient(sens, r, prob);
    if (normal.rows() == 0) return Inputs(0);
    Eigen::LLT<Eigen::MatrixXd> llt(normal);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-14)
        throw RankDeficiencyError("reduced normal matrix S^T Q S is singular: some input moves no weighted coordinate (slack boundary edge or zero q_r)");
    return llt.solve(rhs);
}

inline Inputs gn_direction(const ControlIterate& it, const CableNet& net, const ControlProblem& prob) {
    return gn_direction(reduced_sensitivity(net, it.r, it.u), it.r, prob);
}

struct LineSearchResult {
    double alpha = 0.0;
    EquilibriumResult next;
    double cost = 0.0;
    double merit = 0.0;
    double directional0 = 0.0;
    double directional1 = 0.0;
    bool armijo_ok = false;
    bool curvature_checked = false;
    bool curvature_ok = false;
    int trials = 0;
};

class LineSearchError : public CableNetError {
public:
    LineSearchError(const std::string& what, std::optional<LineSearchResult> best)
        : CableNetError(what), best_(std::move(best)) {}
    const std::optional<LineSearchResult>& best() const { return best_; }

private:
    std::optional<LineSearchResult> best_;
};

namespace detail {

// Additive non-smooth term of the merit, e.g. gamma * ||W u||_1. Empty = 0.
using Penalty = std::function<double(const Inputs&)>;

inline LineSearchResult feasible_line_search(const ControlIterate& it, const Inputs& du, const CableNet& net,
                                             const ControlProblem& prob, const EquilibriumConfig& eq_cfg,
                                             const Penalty& penalty, bool check_curvature,
                                             std::vector<std::string>* warnings) {
    const double f0 = cost(it.r, prob);
    const double p0 = penalty ? penalty(it.u) : 0.0;
    const double m0 = f0 + p0;
    const Eigen::VectorXd g0 = cost_gradient(it.r, prob);
    int trials = 0;
    std::optional<LineSearchResult> best;

    auto evaluate = [&](double alpha) -> std::optional<LineSearchResult> {
        ++trials;
        LineSearchResult t;
        t.alpha = alpha;
        t.trials = trials;
        const Inputs u_new = it.u + alpha * du;
        try {
            t.next = solve_equilibrium(net, u_new, it.r, eq_cfg);
        } catch (const CableNetError&) {
            return std::nullopt; // infeasible trial: treated as insufficient decrease
        }
        const Coords dr = t.next.r - it.r;
        t.cost = cost(t.next.r, prob);
        const double p = penalty ? penalty(u_new) : 0.0;
        t.merit = t.cost + p;
        t.directional0 = g0.dot(dr) + (p - p0);
        t.directional1 = cost_gradient(t.next.r, prob).dot(dr);
        t.armijo_ok = t.directional0 <= 0.0 && t.merit <= m0 + prob.wolfe_c1 * t.directional0;
        t.curvature_checked = check_curvature;
        t.curvature_ok = !check_curvature || t.directional1 >= prob.wolfe_c2 * (g0.dot(dr));
        if (!best || t.merit < best->merit) best = t;
        return t;
    };

    // Backtrack from alpha = 1 until sufficient decrease holds.
    double alpha = 1.0;
    std::optional<double> alpha_hi;
    std::optional<LineSearchResult> lo;
    while (trials < prob.max_trials) {
        auto t = evaluate(alpha);
        if (t && t->armijo_ok) {
            lo = t;
            break;
        }
        alpha_hi = alpha;
        alpha *= 0.5;
    }
    if (!lo) throw LineSearchError("line search: no step with sufficient decrease", best);
    if (lo->curvature_ok) return *lo;

    // Curvature fails: the step is too short. Bisect between lo and the
    // smallest rejected step.
    while (alpha_hi && trials < prob.max_trials) {
        const double mid = 0.5 * (lo->alpha + *alpha_hi);
        auto t = evaluate(mid);
        if (!t || !t->armijo_ok) {
            alpha_hi = mid;
        } else if (t->curvature_ok) {
            return *t;
        } else {
            lo = t;
        }
    }
    if (warnings)
        warnings->push_back("curvature condition not met within trial budget; accepted sufficient-decrease step alpha=" +
                            std::to_string(lo->alpha));
    return *lo;
}

struct StepModel {
    std::function<Inputs(const Eigen::MatrixXd& sens, const Coords& r, const Inputs& u)> direction;
    std::function<double(const Eigen::MatrixXd& sens, const Coords& r, const Inputs& u)> kkt;
    Penalty penalty;
    bool check_curvature = true;
};

inline ControlResult run_feasible_sqp(const CableNet& net, const Inputs& u0, const Coords& warm_start,
                                      const ControlProblem& prob, const EquilibriumConfig& eq_cfg,
                                      const StepModel& model) {
    prob.validate(net);
    ControlResult res;
    auto& trace = res.trace;

    const EquilibriumResult eq0 = solve_equilibrium(net, u0, warm_start, eq_cfg);
    ControlIterate it;
    it.u = u0;
    it.r = eq0.r;
    it.cost = cost(it.r, prob);
    it.residual_norm = eq0.residual_norm;
    it.delta_u = Inputs::Zero(u0.size());
    std::vector<Index> slack = eq0.slack_edges;

    Eigen::MatrixXd sens = reduced_sensitivity(net, it.r, it.u);
    TraceEntry first;
    first.cost = it.cost;
    first.merit = it.cost + (model.penalty ? model.penalty(it.u) : 0.0);
    first.residual_norm = it.residual_norm;
    first.kkt_measure = model.kkt(sens, it.r, it.u);
    first.u = it.u;
    trace.entries.push_back(first);

    auto fail = [&](const std::string& why) {
        res.final = it;
        res.kkt_measure = trace.entries.back().kkt_measure;
        throw ControlError(why, res);
    };

    for (int k = 1; k <= prob.max_outer; ++k) {
        Inputs du;
        try {
            du = model.direction(sens, it.r, it.u);
        } catch (const CableNetError& e) {
            fail(std::string("control: direction failed: ") + e.what());
        }
        const double descent = du.dot(reduced_gradient(sens, it.r, prob));

        LineSearchResult ls;
        try {
            ls = feasible_line_search(it, du, net, prob, eq_cfg, model.penalty, model.check_curvature,
                                      &trace.warnings);
        } catch (const LineSearchError& e) {
            // A direction shorter than the stopping bound cannot move p further.
            if (detail::inf_norm(du) < prob.c_conv) {
                res.converged = true;
                break;
            }
            fail(e.what());
        }

        const Inputs u_new = it.u + ls.alpha * du;
        const double step = std::max(detail::inf_norm(ls.next.r - it.r), detail::inf_norm(u_new - it.u));

        it.u = u_new;
        it.r = ls.next.r;
        it.cost = ls.cost;
        it.step_alpha = ls.alpha;
        it.delta_u = du;
        it.residual_norm = ls.next.residual_norm;
        res.iterations = k;

        try {
            sens = reduced_sensitivity(net, it.r, it.u);
        } catch (const CableNetError& e) {
            fail(std::string("control: ") + e.what());
        }

        TraceEntry row;
        row.iter = k;
        row.cost = it.cost;
        row.alpha = ls.alpha;
        row.delta_u_norm = detail::inf_norm(du);
        row.residual_norm = it.residual_norm;
        row.kkt_measure = model.kkt(sens, it.r, it.u);
        row.u = it.u;
        row.merit = ls.merit;
        row.directional0 = ls.directional0;
        row.directional1 = ls.directional1;
        row.descent = descent;
        row.armijo_ok = ls.armijo_ok;
        row.curvature_checked = ls.curvature_checked;
        row.curvature_ok = ls.curvature_ok;
        row.trials = ls.trials;
        trace.entries.push_back(std::move(row));

        if (ls.next.slack_edges != slack) {
            trace.warnings.push_back("iteration " + std::to_string(k) + ": tensioned edge set changed");
            slack = ls.next.slack_edges;
        }

        if (step < prob.c_conv) {
            res.converged = true;
            break;
        }
    }
    res.final = it;
    res.kkt_measure = trace.entries.back().kkt_measure;
    return res;
}

} // namespace detail

/// Line search along du satisfying
///   f(r(u + a du)) <= f(r(u)) + c1 grad f(r(u))^T dr
///   grad f(r(u + a du))^T dr >= c2 grad f(r(u))^T dr,   dr = r(u + a du) - r(u),
/// where every trial point is an equilibrium. Backtracks by halving from
/// a = 1, then bisects for the curvature condition; at most max_trials solves.
inline LineSearchResult wolfe_line_search(const ControlIterate& it, const Inputs& du, const CableNet& net,
                                          const ControlProblem& prob, const EquilibriumConfig& eq_cfg = {},
                                          std::vector<std::string>* warnings = nullptr) {
    return detail::feasible_line_search(it, du, net, prob, eq_cfg, {}, true, warnings);
}

/// Runs the feasible GN-SQP from u0 until the iterate change drops below
/// c_conv or max_outer is reached. Throws ControlError (carrying the last
/// feasible iterate) on solver or line-search failure.
inline ControlResult run_control(const CableNet& net, const Inputs& u0, const ControlProblem& prob,
                                 const EquilibriumConfig& eq_cfg = {}, std::optional<Coords> warm_start = {}) {
    detail::StepModel model;
    model.direction = [&](const Eigen::MatrixXd& s, const Coords& r, const Inputs&) {
        return gn_direction(s, r, prob);
    };
    model.kkt = [&](const Eigen::MatrixXd& s, const Coords& r, const Inputs&) { return kkt_measure(s, r, prob); };
    return detail::run_feasible_sqp(net, u0, warm_start ? *warm_start : prob.r_des, prob, eq_cfg, model);
}

} // namespace cablenet
