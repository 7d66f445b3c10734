#pragma once

#include <Eigen/Core>

#include <cstdio>
#include <stdexcept>
#include <string>

namespace cablenet {

using Index = Eigen::Index;

/// Base class for every error raised by the library.
class CableNetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A net, scenario or argument violates a structural invariant.
class InvalidNetError : public CableNetError {
public:
    using CableNetError::CableNetError;
};

class DimensionError : public CableNetError {
public:
    using CableNetError::CableNetError;
};

/// Edge with coincident endpoints; its direction is undefined.
class DegenerateEdgeError : public CableNetError {
public:
    DegenerateEdgeError(Index edge)
        : CableNetError("edge " + std::to_string(edge) + ": coincident endpoints (zero length)"),
          edge_(edge) {}
    Index edge() const { return edge_; }

private:
    Index edge_;
};

/// Effective rest length l0 - u dropped to zero or below.
class NonpositiveRestLengthError : public CableNetError {
public:
    NonpositiveRestLengthError(Index edge, double value)
        : CableNetError("edge " + std::to_string(edge) + ": effective rest length " +
                        std::to_string(value) + " must be > 0"),
          edge_(edge), value_(value) {}
    Index edge() const { return edge_; }
    double value() const { return value_; }

private:
    Index edge_;
    double value_;
};

/// The Hessian of the energy is singular at the queried configuration.
class EquilibriumDegeneracyError : public CableNetError {
public:
    using CableNetError::CableNetError;
};

/// The reduced normal matrix S^T Q S is singular (Q_r rank condition violated).
class RankDeficiencyError : public CableNetError {
public:
    using CableNetError::CableNetError;
};

/// Force residual and energy minimum disagree at a claimed equilibrium.
class EquivalenceError : public CableNetError {
public:
    EquivalenceError(const std::string& what, Index node) : CableNetError(what), node_(node) {}
    Index node() const { return node_; }

private:
    Index node_;
};

namespace detail {

/// Short scientific rendering for error messages.
inline std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

} // namespace detail

} // namespace cablenet
