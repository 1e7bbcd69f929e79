#pragma once

#include "rspde/elliptic_operator.hpp"

#include <cmath>
#include <string>

namespace rspde {

/// Spatial quadrature for a family of sampled (possibly vector-valued)
/// functions: one weight per sample point, `components` values per point.
template <typename Scalar>
struct Layout {
    VectorX<Scalar> weights;
    int components = 1;

    Eigen::Index points() const { return weights.size(); }
    Eigen::Index rows() const { return weights.size() * components; }

    bool compatible(const Layout& other) const {
        return components == other.components && weights.size() == other.weights.size() &&
               (weights.size() == 0 || weights == other.weights);
    }
};

/// Nodal layout with trapezoidal weights.
template <typename Scalar>
Layout<Scalar> nodal_layout(const Grid<Scalar>& grid, int components = 1) {
    return {grid.quadrature_weights(), components};
}

/// Element layout (one d-vector per flux element) for gradients and fluxes.
template <typename Scalar>
Layout<Scalar> element_layout(const EllipticOperator<Scalar>& op) {
    return {op.element_weights(), op.dim()};
}

/// Space-time samples on a uniform time grid t_k = k * dt, k = 0..frames-1.
/// Column k of `data` holds the frame at t_k, row i * components + c the
/// c-th component at point i.
template <typename Scalar>
struct Path {
    Layout<Scalar> layout;
    Scalar dt = Scalar(0);
    MatrixX<Scalar> data;

    Path() = default;
    Path(Layout<Scalar> l, Scalar step, Eigen::Index frames)
        : layout(std::move(l)), dt(step), data(MatrixX<Scalar>::Zero(layout.rows(), frames)) {}

    Eigen::Index frames() const { return data.cols(); }
    Eigen::Index steps() const { return data.cols() - 1; }
    Scalar time(Eigen::Index k) const { return dt * static_cast<Scalar>(k); }
    Scalar horizon() const { return dt * static_cast<Scalar>(steps()); }

    auto frame(Eigen::Index k) { return data.col(k); }
    auto frame(Eigen::Index k) const { return data.col(k); }

    /// Same layout, uniform step, and frame count.
    bool matches(const Path& other) const {
        return layout.compatible(other.layout) && dt == other.dt && frames() == other.frames();
    }
};

/// Time-indexed nodal fields on a grid (u, S, S', w, ...).
template <typename Scalar>
using FieldPath = Path<Scalar>;

template <typename Scalar>
FieldPath<Scalar> make_field_path(const Grid<Scalar>& grid, Scalar dt, Eigen::Index steps) {
    if (!(dt > Scalar(0))) throw ConfigurationError("time step must be positive");
    return FieldPath<Scalar>(nodal_layout(grid), dt, steps + 1);
}

/// Samples fn(t, x) at every interior node and time stamp; boundary rows stay zero.
template <typename Scalar, typename Fn>
FieldPath<Scalar> sample_path(const Grid<Scalar>& grid, Scalar dt, Eigen::Index steps, Fn&& fn) {
    FieldPath<Scalar> p = make_field_path(grid, dt, steps);
    for (Eigen::Index k = 0; k <= steps; ++k) {
        const Scalar t = p.time(k);
        p.frame(k) = grid.sample([&](const SmallVector<Scalar>& x) { return fn(t, x); });
    }
    return p;
}

/// Element gradients of every frame of a nodal path.
template <typename Scalar>
Path<Scalar> gradient_path(const EllipticOperator<Scalar>& op, const FieldPath<Scalar>& u) {
    if (u.layout.points() != op.grid().node_count() || u.layout.components != 1)
        throw DiscretizationMismatch("gradient_path needs a scalar nodal path on the operator grid");
    Path<Scalar> g(element_layout(op), u.dt, u.frames());
    g.data = op.gradient_matrix() * u.data;
    return g;
}

/// Pointwise positive part.
template <typename Scalar>
Path<Scalar> positive_part(Path<Scalar> p) {
    p.data = p.data.cwiseMax(Scalar(0));
    return p;
}

template <typename Scalar>
Path<Scalar> operator-(Path<Scalar> a, const Path<Scalar>& b) {
    if (!a.matches(b)) throw DiscretizationMismatch("path difference needs matching discretizations");
    a.data -= b.data;
    return a;
}

template <typename Scalar>
Path<Scalar> operator+(Path<Scalar> a, const Path<Scalar>& b) {
    if (!a.matches(b)) throw DiscretizationMismatch("path sum needs matching discretizations");
    a.data += b.data;
    return a;
}

template <typename Scalar>
Path<Scalar> operator*(Scalar c, Path<Scalar> a) {
    a.data *= c;
    return a;
}

/// The first `steps` steps of a path.
template <typename Scalar>
Path<Scalar> truncate(const Path<Scalar>& p, Eigen::Index steps) {
    Path<Scalar> out = p;
    out.data = p.data.leftCols(steps + 1);
    return out;
}

}  // namespace rspde
