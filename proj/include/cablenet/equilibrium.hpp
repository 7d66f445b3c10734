#pragma once

#include "model.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace cablenet {

struct EquilibriumConfig {
    double tol_force = 1e-8;  // residual infinity-norm [N]
    int max_iters = 200;
    double lambda_min = 1e-10; // Levenberg floor
    double armijo_c = 1e-4;
    double backtrack_ratio = 0.5;

    void validate() const {
        if (!(tol_force > 0.0)) throw InvalidNetError("equilibrium.tol_force must be > 0");
        if (max_iters < 1) throw InvalidNetError("equilibrium.max_iters must be >= 1");
        if (!(lambda_min > 0.0)) throw InvalidNetError("equilibrium.lambda_min must be > 0");
        if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw InvalidNetError("equilibrium.armijo_c must lie in (0,1)");
        if (!(backtrack_ratio > 0.0 && backtrack_ratio < 1.0))
            throw InvalidNetError("equilibrium.backtrack_ratio must lie in (0,1)");
    }
};

struct EquilibriumResult {
    Coords r;
    double residual_norm = 0.0; // ||h||_inf [N]
    double energy = 0.0;        // [J]
    int iterations = 0;
    std::vector<Index> slack_edges;
};

/// Damped Newton hit the iteration cap; `best()` is the lowest-energy iterate.
class NonConvergenceError : public CableNetError {
public:
    NonConvergenceError(const std::string& what, EquilibriumResult best)
        : CableNetError(what), best_(std::move(best)) {}
    const EquilibriumResult& best() const { return best_; }

private:
    EquilibriumResult best_;
};

/// Initial guess from the linear force-density problem with densities EA/l0:
/// each free node sits at the weighted mean of its neighbours.
inline Coords force_density_guess(const CableNet& net) {
    const Index nf = net.n_free();
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(nf, 3);
    for (const auto& e : net.edges()) {
        const double q = e.ea / e.l0;
        const bool fs = net.is_free(e.s), ft = net.is_free(e.t);
        if (fs) trip.emplace_back(e.s, e.s, q);
        if (ft) trip.emplace_back(e.t, e.t, q);
        if (fs && ft) {
            trip.emplace_back(e.s, e.t, -q);
            trip.emplace_back(e.t, e.s, -q);
        } else {
            const Index f = fs ? e.s : e.t;
            const Index b = fs ? e.t : e.s;
            rhs.row(f) += q * net.boundary_coords()[static_cast<std::size_t>(b - nf)].transpose();
        }
    }
    Eigen::SparseMatrix<double> lap(nf, nf);
    lap.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(lap);
    if (llt.info() != Eigen::Success) throw EquilibriumDegeneracyError("force-density system is singular");
    const Eigen::MatrixXd xyz = llt.solve(rhs);
    Coords r(3 * nf);
    for (Index s = 0; s < nf; ++s) r.segment<3>(3 * s) = xyz.row(s).transpose();
    return r;
}

namespace detail {

inline double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

} // namespace detail

/// Static equilibrium r_F(u) as the minimizer of the convex energy V.
///
/// Levenberg-damped Newton: (H + lambda I) d = -h, backtracking on V with the
/// Armijo condition. lambda is raised when the full step is rejected and
/// relaxed after a full step. Terminates when ||h||_inf <= tol_force.
inline EquilibriumResult solve_equilibrium(const CableNet& net, const Inputs& u, const Coords& warm_start,
                                           const EquilibriumConfig& cfg = {}) {
    cfg.validate();
    check_dims(net, warm_start, u);
    effective_rest_lengths(net, u); // throws on a nonpositive rest length

    Coords r = warm_start;
    double energy = total_energy(net, r, u);
    Eigen::VectorXd h = force_residual(net, r, u);
    double lambda = cfg.lambda_min;
    const Index n = net.dim();

    auto finish = [&](int it) {
        return EquilibriumResult{r, detail::inf_norm(h), energy, it, slack_edges(net, r, u)};
    };

    for (int it = 0; it < cfg.max_iters; ++it) {
        if (detail::inf_norm(h) <= cfg.tol_force) return finish(it);

        Eigen::SparseMatrix<double> hess = jacobian_rF(net, r, u);
        const double diag_max = std::max(hess.diagonal().cwiseAbs().maxCoeff(), 1e-300);
        Eigen::SparseMatrix<double> eye(n, n);
        eye.setIdentity();

        Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
        llt.analyzePattern(hess + eye);
        Eigen::VectorXd step;
        for (int attempt = 0;; ++attempt) {
            llt.factorize(hess + lambda * eye);
            if (llt.info() == Eigen::Success) {
                step = -llt.solve(h);
                if (step.allFinite()) break;
            }
            if (attempt > 60) throw EquilibriumDegeneracyError("equilibrium: damped Hessian cannot be factorized");
            lambda = std::max(10.0 * lambda, 1e-10 * diag_max);
        }

        const double slope = h.dot(step);
        double alpha = 1.0;
        bool accepted = false;
        Coords trial;
        double trial_energy = energy;
        Eigen::VectorXd trial_h;
        for (int bt = 0; bt < 60 && !accepted; ++bt, alpha *= cfg.backtrack_ratio) {
            trial = r + alpha * step;
            trial_energy = total_energy(net, trial, u);
            const double predicted = cfg.armijo_c * alpha * slope;
            if (trial_energy <= energy + predicted) {
                accepted = true;
            } else if (std::abs(predicted) <= 1e-13 * std::max(std::abs(energy), 1e-300) &&
                       trial_energy <= energy + 1e-13 * std::abs(energy)) {
                // Decrease is below the resolution of V; fall back to the residual.
                try {
                    if (detail::inf_norm(force_residual(net, trial, u)) < detail::inf_norm(h)) accepted = true;
                } catch (const DegenerateEdgeError&) {
                }
            }
            if (accepted) {
                try {
                    trial_h = force_residual(net, trial, u);
                } catch (const DegenerateEdgeError&) {
                    accepted = false;
                }
            }
            if (accepted) break;
        }

        if (!accepted) {
            lambda = std::max(10.0 * lambda, 1e-6 * diag_max);
            continue;
        }
        lambda = alpha == 1.0 ? std::max(cfg.lambda_min, 0.25 * lambda) : std::max(4.0 * lambda, 1e-10 * diag_max);
        r = std::move(trial);
        energy = trial_energy;
        h = std::move(trial_h);
    }
    if (detail::inf_norm(h) <= cfg.tol_force) return finish(cfg.max_iters);
    throw NonConvergenceError("equilibrium: no convergence within " + std::to_string(cfg.max_iters) +
                                  " iterations (residual " + detail::sci(detail::inf_norm(h)) + " N)",
                              finish(cfg.max_iters));
}

inline EquilibriumResult solve_equilibrium(const CableNet& net, const Inputs& u, const EquilibriumConfig& cfg = {}) {
    return solve_equilibrium(net, u, force_density_guess(net), cfg);
}

/// The equilibrium map u -> r_F(u), warm-started from a nearby configuration.
inline Coords response_map(const CableNet& net, const Inputs& u, const Coords& warm_start,
                           const EquilibriumConfig& cfg = {}) {
    return solve_equilibrium(net, u, warm_start, cfg).r;
}

/// Sensitivity of the equilibrium map, S = -(dh/dr_F)^{-1} dh/du (3 n_F x m_B).
inline Eigen::MatrixXd reduced_sensitivity(const CableNet& net, const Coords& r, const Inputs& u) {
    const Eigen::SparseMatrix<double> hess = jacobian_rF(net, r, u);
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(hess);
    if (llt.info() != Eigen::Success)
        throw EquilibriumDegeneracyError("force Jacobian is singular at this configuration");
    Eigen::MatrixXd s = -llt.solve(jacobian_u(net, r, u));
    if (!s.allFinite()) throw EquilibriumDegeneracyError("force Jacobian is singular at this configuration");
    return s;
}

struct EquivalenceReport {
    bool passed = false;
    double residual_norm = 0.0;
    Index worst_node = -1;    // node with the largest force imbalance
    int probes = 0;
    int failed_probes = 0;
    double min_energy_increase = std::numeric_limits<double>::infinity();
};

/// Checks that a configuration is both a force equilibrium and a local (hence,
/// by convexity, global) energy minimizer: ||h||_inf <= tol_force and V grows
/// along `probes` random perturbations of length `magnitude` (default
/// 1e-4 * net scale).
inline EquivalenceReport check_equivalence(const CableNet& net, const Inputs& u, const Coords& r, double tol_force,
                                           int probes = 50, std::uint64_t seed = 0, double magnitude = -1.0) {
    EquivalenceReport rep;
    const Eigen::VectorXd h = force_residual(net, r, u);
    rep.residual_norm = detail::inf_norm(h);
    double worst = -1.0;
    for (Index s = 0; s < net.n_free(); ++s) {
        const double f = h.segment<3>(3 * s).lpNorm<Eigen::Infinity>();
        if (f > worst) {
            worst = f;
            rep.worst_node = s;
        }
    }
    if (magnitude <= 0.0) magnitude = 1e-4 * net.scale();

    const double v0 = total_energy(net, r, u);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (int k = 0; k < probes; ++k) {
        Eigen::VectorXd d(net.dim());
        for (Index i = 0; i < d.size(); ++i) d[i] = normal(rng);
        d *= magnitude / d.norm();
        const double inc = total_energy(net, r + d, u) - v0;
        rep.min_energy_increase = std::min(rep.min_energy_increase, inc);
        if (!(inc > 0.0)) ++rep.failed_probes;
        ++rep.probes;
    }
    rep.passed = rep.residual_norm <= tol_force && rep.failed_probes == 0;
    return rep;
}

/// As check_equivalence, but throws EquivalenceError naming the worst node.
inline EquivalenceReport verify_equivalence(const CableNet& net, const Inputs& u, const EquilibriumResult& result,
                                            double tol_force, int probes = 50, std::uint64_t seed = 0) {
    auto rep = check_equivalence(net, u, result.r, tol_force, probes, seed);
    if (!rep.passed) {
        std::string why = rep.residual_norm > tol_force
                              ? "force residual " + detail::sci(rep.residual_norm) + " N exceeds tolerance"
                              : std::to_string(rep.failed_probes) + " perturbations lowered the energy";
        throw EquivalenceError("equivalence violated at node " + std::to_string(rep.worst_node) + ": " + why,
                               rep.worst_node);
    }
    return rep;
}

} // namespace cablenet
