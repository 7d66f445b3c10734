#pragma once

// Sparse actuation by iteratively reweighted l1 regularization.
//
// The outer loop re-derives weights w_i = tau / (|u_i| + eps) from the last
// solution; each inner run is the feasible GN-SQP applied to
//     f_l1(u) = f_ocp(r_F(u)) + gamma * sum_i w_i |u_i|,
// whose subproblem is a weighted lasso in v = u + du.

#include "control.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

namespace cablenet {

struct SparseConfig {
    double gamma = 0.3;
    double tau = 1e-4;
    double epsilon = 1e-8;
    double c_w = 1e-6;            // reweight stopping bound, ||w_nu - w_{nu-1}||_inf
    int max_reweights = 20;
    double zero_threshold = 1e-6; // |u_i| below this counts as zero [m]
    int max_inner_iters = 5000;   // proximal-gradient cap per subproblem

    void validate() const {
        if (!(gamma >= 0.0)) throw InvalidNetError("sparse.gamma must be >= 0");
        if (!(tau > 0.0)) throw InvalidNetError("sparse.tau must be > 0");
        if (!(epsilon > 0.0)) throw InvalidNetError("sparse.epsilon must be > 0");
        if (!(c_w > 0.0)) throw InvalidNetError("sparse.c_w must be > 0");
        if (max_reweights < 1) throw InvalidNetError("sparse.max_reweights must be >= 1");
        if (!(zero_threshold > 0.0)) throw InvalidNetError("sparse.zero_threshold must be > 0");
        if (max_inner_iters < 1) throw InvalidNetError("sparse.max_inner_iters must be >= 1");
    }
};

inline Eigen::VectorXd update_weights(const Inputs& u, const SparseConfig& cfg) {
    return (cfg.tau / (u.array().abs() + cfg.epsilon)).matrix();
}

inline Index cardinality(const Inputs& u, double zero_threshold) {
    return static_cast<Index>((u.array().abs() > zero_threshold).count());
}

/// Weighted lasso  min_v 1/2 v^T G v - b^T v + sum_i pen_i |v_i|  (G SPD).
struct LassoProblem {
    Eigen::MatrixXd gram;
    Eigen::VectorXd linear;
    Eigen::VectorXd penalty;

    double objective(const Eigen::VectorXd& v) const {
        return 0.5 * v.dot(gram * v) - linear.dot(v) + penalty.dot(v.cwiseAbs());
    }

    /// Worst per-coordinate violation of the subgradient optimality
    /// condition, relative to ||b||_inf (the gradient size at v = 0).
    double certificate(const Eigen::VectorXd& v) const {
        const Eigen::VectorXd grad = gram * v - linear;
        double scale = detail::inf_norm(linear);
        if (!(scale > 0.0)) scale = std::max(detail::inf_norm(penalty), 1.0);
        double worst = 0.0;
        for (Index i = 0; i < v.size(); ++i) {
            const double viol = v[i] == 0.0 ? std::max(0.0, std::abs(grad[i]) - penalty[i])
                                            : std::abs(grad[i] + penalty[i] * (v[i] > 0.0 ? 1.0 : -1.0));
            worst = std::max(worst, viol);
        }
        return worst / scale;
    }
};

struct LassoSolution {
    Eigen::VectorXd v;
    int iterations = 0;
    double certificate = 0.0;
    bool polished = false; // exact solve on the detected support
};

class SubproblemNonConvergence : public CableNetError {
public:
    SubproblemNonConvergence(const std::string& what, double certificate)
        : CableNetError(what), certificate_(certificate) {}
    double certificate() const { return certificate_; }

private:
    double certificate_;
};

namespace detail {

inline Eigen::VectorXd soft_threshold(const Eigen::VectorXd& x, const Eigen::VectorXd& k) {
    return (x.array().sign() * (x.array().abs() - k.array()).max(0.0)).matrix();
}

// Solve the smooth system on the sign pattern of `guess`; succeeds only when
// the result keeps that pattern and satisfies the full optimality certificate.
// Unpenalized coordinates always belong to the support and may take any sign.
inline std::optional<Eigen::VectorXd> polish_on_support(const LassoProblem& lp, const Eigen::VectorXd& guess,
                                                        double tol) {
    const Index n = guess.size();
    std::vector<Index> support;
    for (Index i = 0; i < n; ++i)
        if (guess[i] != 0.0 || lp.penalty[i] == 0.0) support.push_back(i);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    if (!support.empty()) {
        const Index k = static_cast<Index>(support.size());
        Eigen::MatrixXd g(k, k);
        Eigen::VectorXd rhs(k);
        for (Index a = 0; a < k; ++a) {
            const Index i = support[static_cast<std::size_t>(a)];
            rhs[a] = lp.linear[i] - lp.penalty[i] * (guess[i] > 0.0 ? 1.0 : guess[i] < 0.0 ? -1.0 : 0.0);
            for (Index b = 0; b < k; ++b) g(a, b) = lp.gram(i, support[static_cast<std::size_t>(b)]);
        }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(g);
        if (ldlt.info() != Eigen::Success) return std::nullopt;
        const Eigen::VectorXd sol = ldlt.solve(rhs);
        for (Index a = 0; a < k; ++a) {
            const Index i = support[static_cast<std::size_t>(a)];
            if (lp.penalty[i] != 0.0 && !(sol[a] * guess[i] > 0.0)) return std::nullopt;
            v[i] = sol[a];
        }
    }
    if (lp.certificate(v) > tol) return std::nullopt;
    return v;
}

} // namespace detail

/// Accelerated proximal gradient (FISTA with backtracking and adaptive
/// restart). Every few iterations the current support is polished by an exact
/// solve, which terminates the search as soon as the sign pattern is right.
inline LassoSolution solve_weighted_lasso(const LassoProblem& lp, const Eigen::VectorXd& start, int max_iters,
                                          double tol = 1e-8) {
    const Index n = start.size();
    LassoSolution out;
    constexpr double polish_tol = 1e-10;
    if (n == 0) return out;

    if (auto v = detail::polish_on_support(lp, start, polish_tol)) {
        out.v = *v;
        out.certificate = lp.certificate(*v);
        out.polished = true;
        return out;
    }

    // Power iteration estimate of the Lipschitz constant; backtracking fixes underestimates.
    Eigen::VectorXd pv = Eigen::VectorXd::Ones(n);
    double lip = 1.0;
    for (int k = 0; k < 30; ++k) {
        const Eigen::VectorXd w = lp.gram * pv;
        lip = w.norm() / pv.norm();
        if (!(lip > 0.0)) break;
        pv = w / w.norm();
    }
    if (!(lip > 0.0)) lip = 1.0;

    auto smooth = [&](const Eigen::VectorXd& v) { return 0.5 * v.dot(lp.gram * v) - lp.linear.dot(v); };
    Eigen::VectorXd x = start, y = start;
    double t = 1.0;
    double fx = lp.objective(x);
    double vscale = std::max(detail::inf_norm(start), 1e-300);

    for (int it = 1; it <= max_iters; ++it) {
        out.iterations = it;
        const Eigen::VectorXd grad = lp.gram * y - lp.linear;
        const double fy = smooth(y);
        Eigen::VectorXd xn;
        for (;;) {
            xn = detail::soft_threshold(y - grad / lip, lp.penalty / lip);
            const Eigen::VectorXd d = xn - y;
            if (smooth(xn) <= fy + grad.dot(d) + 0.5 * lip * d.squaredNorm() + 1e-15 * std::abs(fy)) break;
            lip *= 2.0;
        }
        const double fxn = lp.objective(xn);
        const double fixed_point = detail::inf_norm(xn - y);
        vscale = std::max(vscale, detail::inf_norm(xn));

        if (fxn > fx) { // adaptive restart
            t = 1.0;
            y = x;
            continue;
        }
        const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = xn + ((t - 1.0) / tn) * (xn - x);
        x = xn;
        fx = fxn;
        t = tn;

        const bool done = fixed_point <= tol * vscale;
        if (done || it % 10 == 0) {
            if (auto v = detail::polish_on_support(lp, x, polish_tol)) {
                out.v = *v;
                out.certificate = lp.certificate(*v);
                out.polished = true;
                return out;
            }
        }
        if (done && lp.certificate(x) <= 1e-6) {
            out.v = x;
            out.certificate = lp.certificate(x);
            return out;
        }
    }
    if (lp.certificate(x) <= 1e-6) {
        out.v = x;
        out.certificate = lp.certificate(x);
        return out;
    }
    throw SubproblemNonConvergence("l1 subproblem: no convergence within " + std::to_string(max_iters) +
                                       " iterations (certificate " + detail::sci(lp.certificate(x)) + ")",
                                   lp.certificate(x));
}

/// Lasso form of the linearized sparse subproblem at (r, u):
///   min_du 1/2 ||r - r_des + S du||_Q^2 + gamma sum_i w_i |u_i + du_i|,
/// written in v = u + du.
inline LassoProblem l1_subproblem(const Eigen::MatrixXd& sens, const Coords& r, const Inputs& u,
                                  const ControlProblem& prob, const Eigen::VectorXd& weights, double gamma) {
    LassoProblem lp;
    const Eigen::MatrixXd qs = prob.q.asDiagonal() * sens;
    lp.gram = sens.transpose() * qs;
    lp.linear = qs.transpose() * (sens * u - (r - prob.r_des));
    lp.penalty = gamma * weights;
    return lp;
}

struct L1Direction {
    Inputs du;
    LassoSolution solution;
};

inline L1Direction solve_l1_subproblem(const Eigen::MatrixXd& sens, const Coords& r, const Inputs& u,
                                       const ControlProblem& prob, const Eigen::VectorXd& weights, double gamma,
                                       int max_iters = 5000) {
    const LassoProblem lp = l1_subproblem(sens, r, u, prob, weights, gamma);
    if (lp.gram.rows() > 0) {
        Eigen::LLT<Eigen::MatrixXd> llt(lp.gram);
        if (llt.info() != Eigen::Success || llt.rcond() < 1e-14)
            throw RankDeficiencyError("reduced normal matrix S^T Q S is singular; q_r does not weight every input");
    }
    L1Direction out;
    out.solution = solve_weighted_lasso(lp, u, max_iters);
    out.du = out.solution.v - u;
    return out;
}

inline L1Direction solve_l1_subproblem(const ControlIterate& it, const CableNet& net, const ControlProblem& prob,
                                       const Eigen::VectorXd& weights, const SparseConfig& cfg) {
    return solve_l1_subproblem(reduced_sensitivity(net, it.r, it.u), it.r, it.u, prob, weights, cfg.gamma,
                               cfg.max_inner_iters);
}

/// Stationarity residual of f_l1 at u: infinity-norm of the minimum-norm
/// element of grad_u f_ocp,u + gamma W d|u|.
inline double l1_kkt_measure(const Eigen::MatrixXd& sens, const Coords& r, const Inputs& u,
                             const ControlProblem& prob, const Eigen::VectorXd& weights, double gamma) {
    const Eigen::VectorXd g = reduced_gradient(sens, r, prob);
    double worst = 0.0;
    for (Index i = 0; i < u.size(); ++i) {
        const double pen = gamma * weights[i];
        const double v = u[i] == 0.0 ? std::max(0.0, std::abs(g[i]) - pen)
                                     : std::abs(g[i] + pen * (u[i] > 0.0 ? 1.0 : -1.0));
        worst = std::max(worst, v);
    }
    return worst;
}

/// One feasible-SQP run on f_l1 with fixed weights (Armijo-only line search).
inline ControlResult run_l1_control(const CableNet& net, const Inputs& u0, const ControlProblem& prob,
                                    const Eigen::VectorXd& weights, double gamma, const EquilibriumConfig& eq_cfg = {},
                                    std::optional<Coords> warm_start = {}, int max_inner_iters = 5000) {
    detail::StepModel model;
    model.direction = [&](const Eigen::MatrixXd& s, const Coords& r, const Inputs& u) {
        return solve_l1_subproblem(s, r, u, prob, weights, gamma, max_inner_iters).du;
    };
    model.kkt = [&](const Eigen::MatrixXd& s, const Coords& r, const Inputs& u) {
        return l1_kkt_measure(s, r, u, prob, weights, gamma);
    };
    model.penalty = [&](const Inputs& u) { return gamma * weights.dot(u.cwiseAbs()); };
    model.check_curvature = false;
    return detail::run_feasible_sqp(net, u0, warm_start ? *warm_start : prob.r_des, prob, eq_cfg, model);
}

struct SparseResult {
    ControlIterate final;
    ControlResult dense;          // fully actuated initializer
    std::vector<RunTrace> traces; // traces[0] is the dense run, then one per reweighting
    Eigen::VectorXd weights;
    int reweights = 0;
    bool converged = false;       // weight change fell below c_w
    Index cardinality = 0;
    double final_cost = 0.0;      // f_ocp at the sparse solution
    double kkt_measure = 0.0;
};

/// Iteratively reweighted l1 control: a fully actuated run, then repeated
/// {update weights; feasible SQP on f_l1} until the weights settle.
inline SparseResult run_sparse_control(const CableNet& net, const Inputs& u0, const ControlProblem& prob,
                                       const SparseConfig& cfg, const EquilibriumConfig& eq_cfg = {},
                                       std::optional<Coords> warm_start = {}) {
    cfg.validate();
    SparseResult out;
    out.dense = run_control(net, u0, prob, eq_cfg, warm_start);
    out.traces.push_back(out.dense.trace);

    ControlIterate cur = out.dense.final;
    Eigen::VectorXd w_prev = Eigen::VectorXd::Zero(u0.size());
    double kkt = out.dense.kkt_measure;
    for (int nu = 1; nu <= cfg.max_reweights; ++nu) {
        const Eigen::VectorXd w = update_weights(cur.u, cfg);
        ControlResult inner;
        try {
            inner = run_l1_control(net, cur.u, prob, w, cfg.gamma, eq_cfg, cur.r, cfg.max_inner_iters);
        } catch (const ControlError& e) {
            out.traces.push_back(e.partial().trace);
            out.final = cur;
            out.weights = w_prev;
            out.cardinality = cardinality(cur.u, cfg.zero_threshold);
            out.final_cost = cur.cost;
            throw ControlError(std::string("sparse control: ") + e.what(), e.partial());
        }
        out.traces.push_back(inner.trace);
        cur = inner.final;
        kkt = inner.kkt_measure;
        out.reweights = nu;
        out.weights = w;
        const double change = detail::inf_norm(w - w_prev);
        w_prev = w;
        // Without the l1 term the weights have no effect, so one pass is final.
        if (change < cfg.c_w || cfg.gamma == 0.0) {
            out.converged = true;
            break;
        }
    }
    out.final = cur;
    out.cardinality = cardinality(cur.u, cfg.zero_threshold);
    out.final_cost = cur.cost;
    out.kkt_measure = kkt;
    return out;
}

} // namespace cablenet
