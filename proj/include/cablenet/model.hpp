#pragma once

// Elastic model of a pin-jointed cable net with tension-only (hinge) edges.
//
// Energy:   V(r, u) = -sum_s p_z,s z_s + sum_e EA_e / (2 lbar_e) * max(0, l_e - lbar_e)^2
// Residual: h = dV/dr_F. The per-node elastic part is
//           sum_{tensioned e at s} EA_e (r_s - r_t) (1/lbar_e - 1/l_e),
//           and the z row also carries -p_z,s.
//
// An edge with l == lbar counts as tensioned for the derivatives; its
// contribution to V and h vanishes there, so the choice only affects the
// second-derivative branch.

#include "net.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace cablenet {

struct EdgeGeometry {
    Vec3 diff;      // r_s - r_t
    double length;  // ||r_s - r_t||
    Vec3 direction; // diff / length
};

inline void check_dims(const CableNet& net, const Coords& r) {
    if (r.size() != net.dim())
        throw DimensionError("configuration has " + std::to_string(r.size()) + " entries, expected " +
                             std::to_string(net.dim()));
    if (!r.allFinite()) throw DimensionError("configuration has non-finite coordinates");
}

inline void check_dims(const CableNet& net, const Coords& r, const Inputs& u) {
    check_dims(net, r);
    if (u.size() != net.n_inputs())
        throw DimensionError("input vector has " + std::to_string(u.size()) + " entries, expected " +
                             std::to_string(net.n_inputs()));
}

inline EdgeGeometry edge_geometry(const CableNet& net, const Coords& r, Index e) {
    const Edge& edge = net.edge(e);
    const Vec3 d = net.position(r, edge.s) - net.position(r, edge.t);
    const double l = d.norm();
    if (!(l > 0.0)) throw DegenerateEdgeError(e);
    return {d, l, d / l};
}

inline double edge_length(const CableNet& net, const Coords& r, Index e) {
    return edge_geometry(net, r, e).length;
}

/// l0 - u for boundary edges, l0 for free edges.
inline double effective_rest_length(const CableNet& net, const Inputs& u, Index e) {
    const Edge& edge = net.edge(e);
    double lbar = edge.l0;
    if (edge.input_index) lbar -= u[*edge.input_index];
    if (!(lbar > 0.0)) throw NonpositiveRestLengthError(e, lbar);
    return lbar;
}

inline Eigen::VectorXd effective_rest_lengths(const CableNet& net, const Inputs& u) {
    Eigen::VectorXd out(net.n_edges());
    for (Index e = 0; e < net.n_edges(); ++e) out[e] = effective_rest_length(net, u, e);
    return out;
}

struct Elongation {
    double delta; // l - lbar; negative means slack
    double slack_constraint() const { return -delta; }
    bool slack() const { return delta < 0.0; }
};

inline Elongation elongation(const CableNet& net, const Coords& r, const Inputs& u, Index e) {
    return {edge_length(net, r, e) - effective_rest_length(net, u, e)};
}

inline double total_energy(const CableNet& net, const Coords& r, const Inputs& u) {
    check_dims(net, r, u);
    double v = 0.0;
    for (Index s = 0; s < net.n_free(); ++s) v -= net.loads_z()[s] * r[3 * s + 2];
    for (Index e = 0; e < net.n_edges(); ++e) {
        const double lbar = effective_rest_length(net, u, e);
        const double dl = (net.position(r, net.edge(e).s) - net.position(r, net.edge(e).t)).norm() - lbar;
        if (dl > 0.0) v += 0.5 * net.edge(e).ea / lbar * dl * dl;
    }
    return v;
}

/// Variables of the second-order-cone form of the energy minimization:
/// w_e = max(0, sqrt(EA/lbar) (l - lbar)), v = ||w||^2, V = -p_z z + v/2.
struct SocpTerms {
    Eigen::VectorXd w;
    double v = 0.0;
    double energy = 0.0;
};

inline SocpTerms energy_via_socp_terms(const CableNet& net, const Coords& r, const Inputs& u) {
    check_dims(net, r, u);
    SocpTerms out;
    out.w.resize(net.n_edges());
    for (Index e = 0; e < net.n_edges(); ++e) {
        const double lbar = effective_rest_length(net, u, e);
        const double l = (net.position(r, net.edge(e).s) - net.position(r, net.edge(e).t)).norm();
        out.w[e] = std::max(0.0, std::sqrt(net.edge(e).ea) / std::sqrt(lbar) * (l - lbar));
    }
    out.v = out.w.squaredNorm();
    double load = 0.0;
    for (Index s = 0; s < net.n_free(); ++s) load -= net.loads_z()[s] * r[3 * s + 2];
    out.energy = load + 0.5 * out.v;

    const double direct = total_energy(net, r, u);
    const double tol = 1e-12 * std::max({std::abs(direct), std::abs(load), 0.5 * out.v, 1e-300});
    if (std::abs(direct - out.energy) > tol)
        throw std::logic_error("cone-form energy disagrees with direct energy evaluation");
    return out;
}

inline Eigen::VectorXd force_residual(const CableNet& net, const Coords& r, const Inputs& u) {
    check_dims(net, r, u);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(net.dim());
    for (Index s = 0; s < net.n_free(); ++s) h[3 * s + 2] -= net.loads_z()[s];
    for (Index e = 0; e < net.n_edges(); ++e) {
        const Edge& edge = net.edge(e);
        const double lbar = effective_rest_length(net, u, e);
        const auto g = edge_geometry(net, r, e);
        if (g.length < lbar) continue;
        const Vec3 f = edge.ea * (1.0 / lbar - 1.0 / g.length) * g.diff;
        if (net.is_free(edge.s)) h.segment<3>(3 * edge.s) += f;
        if (net.is_free(edge.t)) h.segment<3>(3 * edge.t) -= f;
    }
    return h;
}

/// d h / d r_F, i.e. the Hessian of V over the free coordinates. Symmetric
/// and positive semidefinite; assembled from 3x3 blocks per tensioned edge.
inline Eigen::SparseMatrix<double> jacobian_rF(const CableNet& net, const Coords& r, const Inputs& u) {
    check_dims(net, r, u);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(net.n_edges()) * 36);
    auto add_block = [&](Index a, Index b, const Eigen::Matrix3d& k) {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) trip.emplace_back(3 * a + i, 3 * b + j, k(i, j));
    };
    for (Index e = 0; e < net.n_edges(); ++e) {
        const Edge& edge = net.edge(e);
        const double lbar = effective_rest_length(net, u, e);
        const auto g = edge_geometry(net, r, e);
        if (g.length < lbar) continue;
        const Eigen::Matrix3d k =
            edge.ea * ((1.0 / lbar - 1.0 / g.length) * Eigen::Matrix3d::Identity() +
                       g.diff * g.diff.transpose() / (g.length * g.length * g.length));
        const bool fs = net.is_free(edge.s), ft = net.is_free(edge.t);
        if (fs) add_block(edge.s, edge.s, k);
        if (ft) add_block(edge.t, edge.t, k);
        if (fs && ft) {
            add_block(edge.s, edge.t, -k);
            add_block(edge.t, edge.s, -k);
        }
    }
    Eigen::SparseMatrix<double> jac(net.dim(), net.dim());
    jac.setFromTriplets(trip.begin(), trip.end());
    return jac;
}

inline Eigen::MatrixXd jacobian_rF_dense(const CableNet& net, const Coords& r, const Inputs& u) {
    return Eigen::MatrixXd(jacobian_rF(net, r, u));
}

/// d h / d u. Column i (boundary edge e with free end s) holds
/// EA (r_s - r_t) / lbar^2 in the rows of s; zero when the edge is slack.
inline Eigen::MatrixXd jacobian_u(const CableNet& net, const Coords& r, const Inputs& u) {
    check_dims(net, r, u);
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(net.dim(), net.n_inputs());
    for (Index i = 0; i < net.n_inputs(); ++i) {
        const Index e = net.input_edge(i);
        const Edge& edge = net.edge(e);
        const double lbar = effective_rest_length(net, u, e);
        const auto g = edge_geometry(net, r, e);
        if (g.length < lbar) continue;
        const Index s = net.free_end(edge);
        const Vec3 from_free = s == edge.s ? g.diff : Vec3(-g.diff);
        jac.block<3, 1>(3 * s, i) = edge.ea / (lbar * lbar) * from_free;
    }
    return jac;
}

struct EdgeForces {
    Eigen::VectorXd tension;  // EA max(0, dl) / lbar [N]
    std::vector<Index> slack; // edges with dl < 0
};

inline EdgeForces edge_forces(const CableNet& net, const Coords& r, const Inputs& u) {
    check_dims(net, r, u);
    EdgeForces out;
    out.tension.resize(net.n_edges());
    for (Index e = 0; e < net.n_edges(); ++e) {
        const double lbar = effective_rest_length(net, u, e);
        const double dl = edge_length(net, r, e) - lbar;
        out.tension[e] = net.edge(e).ea * std::max(0.0, dl) / lbar;
        if (dl < 0.0) out.slack.push_back(e);
    }
    return out;
}

inline std::vector<Index> slack_edges(const CableNet& net, const Coords& r, const Inputs& u) {
    std::vector<Index> out;
    for (Index e = 0; e < net.n_edges(); ++e)
        if (elongation(net, r, u, e).slack()) out.push_back(e);
    return out;
}

} // namespace cablenet
