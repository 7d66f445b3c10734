#pragma once

// Synthetic scenarios: a parametric saddle grid, the rest-length estimation
// rule, exact-recovery targets, measurement noise and error metrics.

#include "sparse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

namespace cablenet {

enum class Material { Elastic, Stiff };

/// Grid of nx x ny free nodes on the saddle z = sag ((x-cx)^2 - (y-cy)^2) / R^2,
/// R = max(cx, cy) + spacing. Each perimeter free node is tied to its own
/// anchor one spacing further out (corner nodes get two), so
/// m_B = 2 nx + 2 ny. Free edges come first (row-wise "right" edges, then
/// "up" edges), then boundary edges around the perimeter: bottom, right, top,
/// left. Every edge gets l0 = (1 - prestrain) * its length on the saddle.
struct GridSpec {
    Index nx = 5;
    Index ny = 3;
    double spacing = 0.25;  // [m]
    double sag = 0.1;       // [m]
    double ea = 15000.0;    // [N]
    double prestrain = 0.01;
};

inline double saddle_height(const GridSpec& g, double x, double y) {
    const double cx = 0.5 * g.spacing * static_cast<double>(g.nx - 1);
    const double cy = 0.5 * g.spacing * static_cast<double>(g.ny - 1);
    const double rad = std::max(cx, cy) + g.spacing;
    return g.sag * ((x - cx) * (x - cx) - (y - cy) * (y - cy)) / (rad * rad);
}

/// Saddle coordinates of the free nodes (the generator's reference geometry).
inline Coords grid_surface_coords(const GridSpec& g) {
    Coords r(3 * g.nx * g.ny);
    for (Index j = 0; j < g.ny; ++j)
        for (Index i = 0; i < g.nx; ++i) {
            const Index k = j * g.nx + i;
            const double x = g.spacing * static_cast<double>(i), y = g.spacing * static_cast<double>(j);
            r.segment<3>(3 * k) = Vec3(x, y, saddle_height(g, x, y));
        }
    return r;
}

inline CableNet build_grid_net(const GridSpec& g) {
    if (g.nx < 2 || g.ny < 2) throw InvalidNetError("grid: nx and ny must be >= 2");
    if (!(g.spacing > 0.0)) throw InvalidNetError("grid: spacing must be > 0");
    if (!(g.ea > 0.0)) throw InvalidNetError("grid: ea must be > 0");
    if (!(g.prestrain >= 0.0 && g.prestrain < 1.0)) throw InvalidNetError("grid: prestrain must lie in [0, 1)");
    if (!std::isfinite(g.sag)) throw InvalidNetError("grid: sag must be finite");

    const Index nf = g.nx * g.ny;
    const Coords r = grid_surface_coords(g);
    auto node = [&](Index i, Index j) { return j * g.nx + i; };
    std::vector<Edge> edges;
    std::vector<Vec3> anchors;
    auto at = [&](Index v) -> Vec3 { return v < nf ? Vec3(r.segment<3>(3 * v)) : anchors[static_cast<std::size_t>(v - nf)]; };
    auto add = [&](Index s, Index t, EdgeKind kind) {
        const double len = (at(s) - at(t)).norm();
        edges.push_back(Edge{s, t, kind, g.ea, (1.0 - g.prestrain) * len, std::nullopt});
    };

    for (Index j = 0; j < g.ny; ++j)
        for (Index i = 0; i + 1 < g.nx; ++i) add(node(i, j), node(i + 1, j), EdgeKind::Free);
    for (Index j = 0; j + 1 < g.ny; ++j)
        for (Index i = 0; i < g.nx; ++i) add(node(i, j), node(i, j + 1), EdgeKind::Free);

    auto anchor = [&](Index s, double dx, double dy) {
        const Vec3 p = at(s);
        const double x = p.x() + dx * g.spacing, y = p.y() + dy * g.spacing;
        anchors.emplace_back(x, y, saddle_height(g, x, y));
        add(s, nf + static_cast<Index>(anchors.size()) - 1, EdgeKind::Boundary);
    };
    for (Index i = 0; i < g.nx; ++i) anchor(node(i, 0), 0, -1);
    for (Index j = 0; j < g.ny; ++j) anchor(node(g.nx - 1, j), 1, 0);
    for (Index i = g.nx; i-- > 0;) anchor(node(i, g.ny - 1), 0, 1);
    for (Index j = g.ny; j-- > 0;) anchor(node(0, j), -1, 0);

    return CableNet(nf, std::move(anchors), std::move(edges));
}

inline double material_factor(Material m) { return m == Material::Elastic ? 0.990 : 0.999; }

/// Unstressed lengths from a measured form: 0.990 x measured length for
/// elastic edges, 0.999 x for stiff ones. `measured` holds the free nodes;
/// boundary nodes are read from the net.
inline Eigen::VectorXd estimate_l0(const CableNet& net, const Coords& measured, const std::vector<Material>& kinds) {
    if (measured.size() != net.dim())
        throw DimensionError("measured configuration does not cover every free node");
    if (static_cast<Index>(kinds.size()) != net.n_edges())
        throw DimensionError("one material kind per edge is required");
    Eigen::VectorXd l0(net.n_edges());
    for (Index e = 0; e < net.n_edges(); ++e) {
        const double len = (net.position(measured, net.edge(e).s) - net.position(measured, net.edge(e).t)).norm();
        if (!(len > 0.0)) throw DegenerateEdgeError(e);
        l0[e] = material_factor(kinds[static_cast<std::size_t>(e)]) * len;
    }
    return l0;
}

struct Scenario {
    CableNet net;
    ControlProblem problem;
    Inputs u0;
    std::optional<Inputs> u_true;
    std::optional<Coords> r_ini; // equilibrium at u0 (the "before" form for metrics)
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    SparseConfig sparse;
    EquilibriumConfig equilibrium;
};

/// Sparse input pattern: `n_short` shortened edges with u in [5, 20] mm and
/// `n_long` lengthened edges with u in [-13, -5] mm, all multiplied by
/// `scale`, on distinct randomly chosen boundary edges.
inline Inputs patterned_sparse_inputs(Index m_b, Index n_short, Index n_long, double scale, std::uint64_t seed) {
    if (n_short < 0 || n_long < 0 || n_short + n_long > m_b)
        throw InvalidNetError("sparse pattern needs more boundary edges than are available");
    std::mt19937_64 rng(seed);
    std::vector<Index> idx(static_cast<std::size_t>(m_b));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    std::uniform_real_distribution<double> shorten(5e-3, 20e-3), lengthen(-13e-3, -5e-3);
    Inputs u = Inputs::Zero(m_b);
    for (Index k = 0; k < n_short + n_long; ++k)
        u[idx[static_cast<std::size_t>(k)]] = scale * (k < n_short ? shorten(rng) : lengthen(rng));
    return u;
}

/// Every entry uniform in [-amplitude, amplitude].
inline Inputs dense_random_inputs(Index m_b, double amplitude, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-amplitude, amplitude);
    Inputs u(m_b);
    for (Index i = 0; i < m_b; ++i) u[i] = dist(rng);
    return u;
}

/// Target that is reachable by construction: r_des = R(u_true), start u0 = 0.
inline Scenario make_exact_recovery_scenario(const CableNet& net, const Inputs& u_true, std::uint64_t seed = 0,
                                             const EquilibriumConfig& eq_cfg = {}, double q = 1.0) {
    if (u_true.size() != net.n_inputs()) throw DimensionError("u_true has wrong size");
    Scenario sc;
    sc.net = net;
    sc.seed = seed;
    sc.equilibrium = eq_cfg;
    sc.u0 = Inputs::Zero(net.n_inputs());
    sc.u_true = u_true;
    sc.r_ini = solve_equilibrium(net, sc.u0, eq_cfg).r;
    const Coords r_des = solve_equilibrium(net, u_true, *sc.r_ini, eq_cfg).r;
    sc.problem = make_problem(r_des, q);
    return sc;
}

inline Coords add_measurement_noise(const Coords& r, const Eigen::VectorXd& sigma_per_node, std::uint64_t seed) {
    if (sigma_per_node.size() * 3 != r.size()) throw DimensionError("one sigma per node is required");
    if ((sigma_per_node.array() < 0.0).any()) throw InvalidNetError("noise sigma must be >= 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Coords out = r;
    for (Index i = 0; i < r.size(); ++i) out[i] += sigma_per_node[i / 3] * normal(rng);
    return out;
}

inline Coords add_measurement_noise(const Coords& r, double sigma, std::uint64_t seed) {
    return add_measurement_noise(r, Eigen::VectorXd::Constant(r.size() / 3, sigma), seed);
}

struct Metrics {
    double weighted_err = 0.0; // ||r_des - r||_Q^2
    double l2_err = 0.0;       // ||r_des - r||_2^2
    double rms = 0.0;          // ||r_des - r||_2 / n, n = all nodes
    Eigen::VectorXd per_node_err;
    double reduction_pct = 0.0;     // of weighted_err, initial -> r
    double l2_reduction_pct = 0.0;
    double rms_reduction_pct = 0.0;
};

/// 100 (before - after) / before; 100 when both vanish.
inline double reduction_percent(double before, double after) {
    if (!(before > 0.0)) return after > 0.0 ? 0.0 : 100.0;
    return 100.0 * (before - after) / before;
}

inline Metrics error_metrics(const Coords& r, const ControlProblem& prob, Index n_nodes) {
    if (r.size() != prob.r_des.size()) throw DimensionError("metrics: configuration and target sizes differ");
    Metrics m;
    const Eigen::VectorXd d = prob.r_des - r;
    m.weighted_err = (prob.q.array() * d.array().square()).sum();
    m.l2_err = d.squaredNorm();
    m.rms = std::sqrt(m.l2_err) / static_cast<double>(n_nodes);
    m.per_node_err.resize(r.size() / 3);
    for (Index s = 0; s < m.per_node_err.size(); ++s) m.per_node_err[s] = d.segment<3>(3 * s).norm();
    return m;
}

/// Errors of `r` plus reductions relative to the initial form `r_ini`.
inline Metrics compute_metrics(const Coords& r, const Coords& r_ini, const ControlProblem& prob, Index n_nodes) {
    Metrics m = error_metrics(r, prob, n_nodes);
    const Metrics before = error_metrics(r_ini, prob, n_nodes);
    m.reduction_pct = reduction_percent(before.weighted_err, m.weighted_err);
    m.l2_reduction_pct = reduction_percent(before.l2_err, m.l2_err);
    m.rms_reduction_pct = reduction_percent(before.rms, m.rms);
    return m;
}

inline Metrics compute_metrics(const Coords& r, const Scenario& sc) {
    const Coords r_ini = sc.r_ini ? *sc.r_ini : solve_equilibrium(sc.net, sc.u0, sc.equilibrium).r;
    return compute_metrics(r, r_ini, sc.problem, sc.net.n_nodes());
}

/// Counts per bin [k w, (k+1) w) for k = 0 .. floor(max / w).
inline std::vector<Index> histogram(const Eigen::VectorXd& values, double bin_width) {
    if (!(bin_width > 0.0)) throw InvalidNetError("histogram bin width must be > 0");
    if (values.size() == 0) return {};
    if ((values.array() < 0.0).any()) throw InvalidNetError("histogram values must be >= 0");
    const auto bins = static_cast<std::size_t>(std::floor(values.maxCoeff() / bin_width)) + 1;
    std::vector<Index> out(bins, 0);
    for (Index i = 0; i < values.size(); ++i)
        ++out[std::min(bins - 1, static_cast<std::size_t>(std::floor(values[i] / bin_width)))];
    return out;
}

} // namespace cablenet
