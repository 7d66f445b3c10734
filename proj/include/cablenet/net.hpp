#pragma once

#include "errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace cablenet {

using Vec3 = Eigen::Vector3d;

// Free-node coordinates stacked as [x0 y0 z0 x1 y1 z1 ...] (length 3 n_F).
using Coords = Eigen::VectorXd;

// Rest-length changes of the boundary edges, ordered by Edge::input_index.
// A positive entry shortens the edge (l0_eff = l0 - u).
using Inputs = Eigen::VectorXd;

enum class EdgeKind { Free, Boundary };

/// One cable segment. Node indices are global: free nodes occupy
/// [0, n_free), boundary node k has index n_free + k.
struct Edge {
    Index s = 0;
    Index t = 0;
    EdgeKind kind = EdgeKind::Free;
    double ea = 0.0; // axial stiffness EA [N]
    double l0 = 0.0; // unstressed length [m]
    std::optional<Index> input_index;

    friend bool operator==(const Edge&, const Edge&) = default;
};

/// Immutable cable-net description: topology, material parameters, fixed
/// boundary positions and vertical nodal loads. Construction validates every
/// structural invariant and throws InvalidNetError naming the offending item.
class CableNet {
public:
    CableNet() = default;

    /// `edges[i].input_index` is (re)assigned in edge order for boundary edges.
    CableNet(Index n_free, std::vector<Vec3> boundary_coords, std::vector<Edge> edges,
             Eigen::VectorXd loads_z = {})
        : n_free_(n_free), boundary_(std::move(boundary_coords)), edges_(std::move(edges)),
          loads_z_(std::move(loads_z)) {
        if (loads_z_.size() == 0) loads_z_ = Eigen::VectorXd::Zero(n_free_);
        validate();
    }

    Index n_free() const { return n_free_; }
    Index n_boundary() const { return static_cast<Index>(boundary_.size()); }
    Index n_nodes() const { return n_free() + n_boundary(); }
    Index n_edges() const { return static_cast<Index>(edges_.size()); }
    Index n_inputs() const { return static_cast<Index>(input_edges_.size()); }
    Index dim() const { return 3 * n_free_; }

    const std::vector<Edge>& edges() const { return edges_; }
    const Edge& edge(Index e) const { return edges_.at(static_cast<std::size_t>(e)); }
    const std::vector<Vec3>& boundary_coords() const { return boundary_; }
    const Eigen::VectorXd& loads_z() const { return loads_z_; }

    /// Edge index of the boundary edge driven by input i.
    Index input_edge(Index i) const { return input_edges_.at(static_cast<std::size_t>(i)); }

    bool is_free(Index node) const { return node >= 0 && node < n_free_; }

    /// Position of any node; free nodes are read from `r`.
    Vec3 position(const Coords& r, Index node) const {
        if (is_free(node)) return r.segment<3>(3 * node);
        return boundary_[static_cast<std::size_t>(node - n_free_)];
    }

    /// Free endpoint of a boundary edge (the one whose force row it drives).
    Index free_end(const Edge& e) const { return is_free(e.s) ? e.s : e.t; }

    /// Diagonal of the axis-aligned bounding box of all boundary nodes.
    double scale() const {
        if (boundary_.empty()) return 1.0;
        Vec3 lo = boundary_.front(), hi = boundary_.front();
        for (const auto& p : boundary_) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        const double d = (hi - lo).norm();
        return d > 0.0 ? d : 1.0;
    }

    double max_ea() const {
        double m = 0.0;
        for (const auto& e : edges_) m = std::max(m, e.ea);
        return m;
    }

    /// Copy with new unstressed lengths (one per edge).
    CableNet with_rest_lengths(const Eigen::VectorXd& l0) const {
        if (l0.size() != n_edges()) throw DimensionError("rest length vector has wrong size");
        auto edges = edges_;
        for (std::size_t i = 0; i < edges.size(); ++i) edges[i].l0 = l0[static_cast<Index>(i)];
        return CableNet(n_free_, boundary_, std::move(edges), loads_z_);
    }

    CableNet with_loads(Eigen::VectorXd loads_z) const {
        return CableNet(n_free_, boundary_, edges_, std::move(loads_z));
    }

    friend bool operator==(const CableNet& a, const CableNet& b) {
        return a.n_free_ == b.n_free_ && a.boundary_ == b.boundary_ && a.edges_ == b.edges_ &&
               a.loads_z_ == b.loads_z_;
    }

private:
    static std::string where(std::size_t e) { return "edge " + std::to_string(e) + ": "; }

    void validate() {
        if (n_free_ < 1) throw InvalidNetError("nodes_free must be >= 1");
        if (loads_z_.size() != n_free_)
            throw InvalidNetError("loads_z: expected " + std::to_string(n_free_) + " entries, got " +
                                  std::to_string(loads_z_.size()));
        for (std::size_t k = 0; k < boundary_.size(); ++k)
            if (!boundary_[k].allFinite())
                throw InvalidNetError("boundary_coords " + std::to_string(k) + ": non-finite coordinate");
        if (!loads_z_.allFinite()) throw InvalidNetError("loads_z: non-finite entry");

        const Index n = n_nodes();
        std::set<std::pair<Index, Index>> seen;
        input_edges_.clear();
        for (std::size_t i = 0; i < edges_.size(); ++i) {
            auto& e = edges_[i];
            if (e.s < 0 || e.s >= n || e.t < 0 || e.t >= n)
                throw InvalidNetError(where(i) + "endpoint index out of range");
            if (e.s == e.t) throw InvalidNetError(where(i) + "self-loop");
            if (!(e.ea > 0.0) || !std::isfinite(e.ea)) throw InvalidNetError(where(i) + "ea must be > 0");
            if (!(e.l0 > 0.0) || !std::isfinite(e.l0)) throw InvalidNetError(where(i) + "l0 must be > 0");
            const bool fs = is_free(e.s), ft = is_free(e.t);
            if (e.kind == EdgeKind::Free) {
                if (!fs || !ft) throw InvalidNetError(where(i) + "free edge must connect two free nodes");
                e.input_index.reset();
            } else {
                if (fs == ft)
                    throw InvalidNetError(where(i) + "boundary edge must connect one free and one boundary node");
                e.input_index = static_cast<Index>(input_edges_.size());
                input_edges_.push_back(static_cast<Index>(i));
            }
            const auto key = std::minmax(e.s, e.t);
            if (!seen.insert(key).second) throw InvalidNetError(where(i) + "duplicate edge");
        }
        check_connected();
    }

    // Every free node must reach a boundary node through the edge graph.
    void check_connected() const {
        const Index n = n_nodes();
        std::vector<std::vector<Index>> adj(static_cast<std::size_t>(n));
        for (const auto& e : edges_) {
            adj[static_cast<std::size_t>(e.s)].push_back(e.t);
            adj[static_cast<std::size_t>(e.t)].push_back(e.s);
        }
        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        std::queue<Index> q;
        for (Index b = n_free_; b < n; ++b) {
            seen[static_cast<std::size_t>(b)] = 1;
            q.push(b);
        }
        while (!q.empty()) {
            const Index v = q.front();
            q.pop();
            for (Index w : adj[static_cast<std::size_t>(v)])
                if (!seen[static_cast<std::size_t>(w)]) {
                    seen[static_cast<std::size_t>(w)] = 1;
                    q.push(w);
                }
        }
        for (Index v = 0; v < n_free_; ++v)
            if (!seen[static_cast<std::size_t>(v)])
                throw InvalidNetError("node " + std::to_string(v) + ": not connected to the boundary");
    }

    Index n_free_ = 0;
    std::vector<Vec3> boundary_;
    std::vector<Edge> edges_;
    Eigen::VectorXd loads_z_;
    std::vector<Index> input_edges_;
};

} // namespace cablenet
