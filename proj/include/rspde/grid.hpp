#pragma once

#include "rspde/error.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace rspde {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Point or gradient in R^d, d <= 2. Never heap-allocates.
template <typename Scalar>
using SmallVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, Eigen::ColMajor, 2, 1>;

/// Nodal values on all grid nodes; boundary entries are held at zero.
template <typename Scalar>
using Field = VectorX<Scalar>;

/// Uniform tensor grid on an interval (d = 1) or rectangle (d = 2).
///
/// Nodes sit at lo + i * spacing, i = 0..counts, and are numbered
/// lexicographically with the first axis running fastest. Nodes on the
/// outer faces form the boundary set; the rest are interior.
template <typename Scalar>
class Grid {
public:
    using Index = Eigen::Index;

    Grid() = default;

    int dim() const { return dim_; }
    Scalar lower(int axis) const { return lo_[axis]; }
    Scalar upper(int axis) const { return hi_[axis]; }
    int count(int axis) const { return counts_[axis]; }
    Scalar spacing(int axis) const { return spacing_[axis]; }
    Index nodes_per_axis(int axis) const { return counts_[axis] + 1; }
    Index node_count() const { return node_count_; }
    Index interior_count() const { return static_cast<Index>(interior_.size()); }

    /// Product of the spacings (length^dim).
    Scalar cell_measure() const { return cell_measure_; }

    /// Lebesgue measure of the whole domain.
    Scalar volume() const {
        Scalar v(1);
        for (int a = 0; a < dim_; ++a) v *= hi_[a] - lo_[a];
        return v;
    }

    std::span<const Index> interior_nodes() const { return interior_; }
    std::span<const Index> boundary_nodes() const { return boundary_; }
    bool is_boundary(Index node) const { return boundary_flag_[node]; }

    /// Position of a node within interior_nodes(), or -1 for boundary nodes.
    Index interior_position(Index node) const { return interior_position_[node]; }

    /// Per-axis integer coordinates of a node.
    std::array<Index, 2> multi_index(Index node) const {
        const Index nx = nodes_per_axis(0);
        return {node % nx, dim_ == 2 ? node / nx : 0};
    }

    Index node_at(Index i, Index j = 0) const { return i + nodes_per_axis(0) * j; }

    SmallVector<Scalar> coordinate(Index node) const {
        const auto ij = multi_index(node);
        SmallVector<Scalar> x(dim_);
        for (int a = 0; a < dim_; ++a) x[a] = lo_[a] + static_cast<Scalar>(ij[a]) * spacing_[a];
        return x;
    }

    /// Trapezoidal quadrature weights: cell_measure on interior nodes, halved
    /// once per boundary face a node lies on.
    const VectorX<Scalar>& quadrature_weights() const { return weights_; }

    bool same_as(const Grid& other) const {
        if (dim_ != other.dim_) return false;
        for (int a = 0; a < dim_; ++a) {
            if (counts_[a] != other.counts_[a] || lo_[a] != other.lo_[a] || hi_[a] != other.hi_[a])
                return false;
        }
        return true;
    }

    /// Restriction of a nodal field to the interior nodes.
    VectorX<Scalar> restrict_interior(const Field<Scalar>& u) const {
        VectorX<Scalar> out(interior_count());
        for (Index k = 0; k < interior_count(); ++k) out[k] = u[interior_[k]];
        return out;
    }

    /// Extension of interior values by zero boundary values.
    Field<Scalar> extend_by_zero(const VectorX<Scalar>& interior_values) const {
        Field<Scalar> u = Field<Scalar>::Zero(node_count_);
        for (Index k = 0; k < interior_count(); ++k) u[interior_[k]] = interior_values[k];
        return u;
    }

    /// Samples fn at interior nodes; boundary nodes are set to zero.
    template <typename Fn>
    Field<Scalar> sample(Fn&& fn) const {
        Field<Scalar> u = Field<Scalar>::Zero(node_count_);
        for (Index node : interior_) u[node] = static_cast<Scalar>(fn(coordinate(node)));
        return u;
    }

    /// Sets the boundary entries of a field to zero.
    void clear_boundary(Field<Scalar>& u) const {
        for (Index node : boundary_) u[node] = Scalar(0);
    }

    template <typename S>
    friend Grid<S> build_grid(int dim, std::span<const S> extent, std::span<const int> counts);

private:
    int dim_ = 0;
    std::array<Scalar, 2> lo_{};
    std::array<Scalar, 2> hi_{};
    std::array<int, 2> counts_{};
    std::array<Scalar, 2> spacing_{};
    Index node_count_ = 0;
    Scalar cell_measure_ = Scalar(0);
    std::vector<Index> interior_;
    std::vector<Index> boundary_;
    std::vector<bool> boundary_flag_;
    std::vector<Index> interior_position_;
    VectorX<Scalar> weights_;
};

/// Builds a uniform grid.
///
/// `extent` holds (lo, hi) pairs per axis, `counts` the number of cells per
/// axis. Throws ConfigurationError for d outside {1, 2}, fewer than three
/// cells on an axis, or a degenerate interval.
template <typename Scalar>
Grid<Scalar> build_grid(int dim, std::span<const Scalar> extent, std::span<const int> counts) {
    if (dim != 1 && dim != 2)
        throw ConfigurationError("grid dimension must be 1 or 2, got " + std::to_string(dim));
    if (extent.size() != static_cast<std::size_t>(2 * dim) ||
        counts.size() != static_cast<std::size_t>(dim))
        throw ConfigurationError("grid extent/counts do not match the dimension");

    Grid<Scalar> g;
    g.dim_ = dim;
    g.cell_measure_ = Scalar(1);
    g.node_count_ = 1;
    for (int a = 0; a < dim; ++a) {
        const Scalar lo = extent[2 * a];
        const Scalar hi = extent[2 * a + 1];
        if (!(std::isfinite(static_cast<double>(lo)) && std::isfinite(static_cast<double>(hi)) && hi > lo))
            throw ConfigurationError("degenerate extent on axis " + std::to_string(a));
        if (counts[a] < 3)
            throw ConfigurationError("axis " + std::to_string(a) + " needs at least 3 cells, got " +
                                     std::to_string(counts[a]));
        g.lo_[a] = lo;
        g.hi_[a] = hi;
        g.counts_[a] = counts[a];
        g.spacing_[a] = (hi - lo) / static_cast<Scalar>(counts[a]);
        g.cell_measure_ *= g.spacing_[a];
        g.node_count_ *= counts[a] + 1;
    }

    g.boundary_flag_.assign(static_cast<std::size_t>(g.node_count_), false);
    g.interior_position_.assign(static_cast<std::size_t>(g.node_count_), -1);
    g.weights_.resize(g.node_count_);
    for (Eigen::Index node = 0; node < g.node_count_; ++node) {
        const auto ij = g.multi_index(node);
        bool on_boundary = false;
        Scalar w = g.cell_measure_;
        for (int a = 0; a < dim; ++a) {
            if (ij[a] == 0 || ij[a] == counts[a]) {
                on_boundary = true;
                w /= Scalar(2);
            }
        }
        g.weights_[node] = w;
        g.boundary_flag_[node] = on_boundary;
        if (on_boundary) {
            g.boundary_.push_back(node);
        } else {
            g.interior_position_[node] = static_cast<Eigen::Index>(g.interior_.size());
            g.interior_.push_back(node);
        }
    }
    return g;
}

template <typename Scalar>
Grid<Scalar> build_grid(int dim, std::initializer_list<Scalar> extent, std::initializer_list<int> counts) {
    return build_grid<Scalar>(dim, std::span<const Scalar>(extent.begin(), extent.size()),
                              std::span<const int>(counts.begin(), counts.size()));
}

}  // namespace rspde
