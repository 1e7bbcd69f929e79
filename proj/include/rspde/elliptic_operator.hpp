#pragma once

#include "rspde/grid.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace rspde {

/// Symmetric d x d coefficient a(x), d <= 2.
template <typename Scalar>
using CoefficientMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 2, 2>;

template <typename Scalar>
using CoefficientField = std::function<CoefficientMatrix<Scalar>(const SmallVector<Scalar>&)>;

template <typename Scalar>
using SparseMatrix = Eigen::SparseMatrix<Scalar>;

/// Constant coefficient a(x) = a0.
template <typename Scalar>
CoefficientField<Scalar> constant_coefficient(CoefficientMatrix<Scalar> a0) {
    return [a0](const SmallVector<Scalar>&) { return a0; };
}

template <typename Scalar>
CoefficientField<Scalar> identity_coefficient(int dim) {
    return constant_coefficient<Scalar>(CoefficientMatrix<Scalar>::Identity(dim, dim));
}

/// One flux element: an edge (d = 1) or a triangle (d = 2). Gradients are
/// constant on an element; a(x) is sampled at the enclosing cell centre.
template <typename Scalar>
struct FluxElement {
    std::array<Eigen::Index, 3> nodes{};
    int vertex_count = 0;
    Scalar weight = Scalar(0);                               // length or area
    Eigen::Matrix<Scalar, 2, 3> shape_gradients = Eigen::Matrix<Scalar, 2, 3>::Zero();
    CoefficientMatrix<Scalar> a;
    SmallVector<Scalar> centre;
};

namespace detail {

template <typename Scalar>
void push_element(std::vector<FluxElement<Scalar>>& out, const Grid<Scalar>& grid,
                  std::array<Eigen::Index, 3> nodes, const CoefficientMatrix<Scalar>& a,
                  const SmallVector<Scalar>& cell_centre) {
    const SmallVector<Scalar> p0 = grid.coordinate(nodes[0]);
    Eigen::Matrix<Scalar, 2, 2> basis;
    basis.col(0) = grid.coordinate(nodes[1]) - p0;
    basis.col(1) = grid.coordinate(nodes[2]) - p0;
    const Eigen::Matrix<Scalar, 2, 2> inv = basis.inverse();

    FluxElement<Scalar> e;
    e.nodes = nodes;
    e.vertex_count = 3;
    e.weight = std::abs(basis.determinant()) / Scalar(2);
    e.shape_gradients.col(1) = inv.row(0).transpose();
    e.shape_gradients.col(2) = inv.row(1).transpose();
    e.shape_gradients.col(0) = -(e.shape_gradients.col(1) + e.shape_gradients.col(2));
    e.a = a;
    e.centre = cell_centre;
    out.push_back(std::move(e));
}

/// Edges in 1D; in 2D every cell is split into two right triangles along the
/// diagonal whose direction matches the sign of a^{12}, which keeps the
/// off-diagonal stiffness entries nonpositive for diagonally dominant a.
template <typename Scalar>
std::vector<FluxElement<Scalar>> build_elements(const Grid<Scalar>& grid, const CoefficientField<Scalar>& a_field) {
    std::vector<FluxElement<Scalar>> elements;
    if (grid.dim() == 1) {
        const Scalar h = grid.spacing(0);
        for (int i = 0; i < grid.count(0); ++i) {
            FluxElement<Scalar> e;
            e.nodes = {i, i + 1, 0};
            e.vertex_count = 2;
            e.weight = h;
            e.shape_gradients(0, 0) = -Scalar(1) / h;
            e.shape_gradients(0, 1) = Scalar(1) / h;
            e.centre = SmallVector<Scalar>::Constant(1, grid.lower(0) + (Scalar(i) + Scalar(0.5)) * h);
            e.a = a_field(e.centre);
            elements.push_back(std::move(e));
        }
        return elements;
    }

    for (int j = 0; j < grid.count(1); ++j) {
        for (int i = 0; i < grid.count(0); ++i) {
            SmallVector<Scalar> centre(2);
            centre << grid.lower(0) + (Scalar(i) + Scalar(0.5)) * grid.spacing(0),
                grid.lower(1) + (Scalar(j) + Scalar(0.5)) * grid.spacing(1);
            const CoefficientMatrix<Scalar> a = a_field(centre);
            const auto sw = grid.node_at(i, j);
            const auto se = grid.node_at(i + 1, j);
            const auto nw = grid.node_at(i, j + 1);
            const auto ne = grid.node_at(i + 1, j + 1);
            if (a.rows() == 2 && a(0, 1) < Scalar(0)) {
                push_element<Scalar>(elements, grid, {sw, se, nw}, a, centre);
                push_element<Scalar>(elements, grid, {se, ne, nw}, a, centre);
            } else {
                push_element<Scalar>(elements, grid, {sw, se, ne}, a, centre);
                push_element<Scalar>(elements, grid, {sw, ne, nw}, a, centre);
            }
        }
    }
    return elements;
}

}  // namespace detail

/// Discrete divergence-form operator A = -d_i(a^{ij} d_j .) with null
/// Dirichlet condition.
///
/// The bilinear form is E(u, v) = sum_e |e| (grad_e u)^T a_e (grad_e v) over
/// flux elements; with lumped nodal mass the nodal operator is
/// A_h = K_II / cell_measure, where K_II is the interior block of that form.
template <typename Scalar>
class EllipticOperator {
public:
    using Index = Eigen::Index;

    const Grid<Scalar>& grid() const { return grid_; }
    int dim() const { return grid_.dim(); }
    Scalar lambda() const { return lambda_; }
    Scalar Lambda() const { return Lambda_; }

    /// A_h on interior nodes (symmetric, positive definite, M-matrix).
    const SparseMatrix<Scalar>& stiffness() const { return stiffness_; }

    const std::vector<FluxElement<Scalar>>& elements() const { return elements_; }
    Index element_count() const { return static_cast<Index>(elements_.size()); }

    /// |e| per flux element (quadrature weight for element-based fields).
    const VectorX<Scalar>& element_weights() const { return element_weights_; }

    /// Maps nodal values to element gradients, row e * d + c.
    const SparseMatrix<Scalar>& gradient_matrix() const { return gradient_; }

    /// Maps nodal values to per-element vertex averages.
    const SparseMatrix<Scalar>& average_matrix() const { return average_; }

    /// Maps nodal values to nodal gradients (weighted mean of the adjacent
    /// element gradients), row node * d + c.
    const SparseMatrix<Scalar>& nodal_gradient_matrix() const { return nodal_gradient_; }

    template <typename S>
    friend EllipticOperator<S> assemble_operator(const Grid<S>& grid, const CoefficientField<S>& a_field,
                                                 S lambda, S Lambda);

private:
    Grid<Scalar> grid_;
    Scalar lambda_ = Scalar(0);
    Scalar Lambda_ = Scalar(0);
    std::vector<FluxElement<Scalar>> elements_;
    VectorX<Scalar> element_weights_;
    SparseMatrix<Scalar> gradient_;
    SparseMatrix<Scalar> average_;
    SparseMatrix<Scalar> nodal_gradient_;
    SparseMatrix<Scalar> stiffness_;
};

/// Number of unit directions probed per cell in the ellipticity check.
inline constexpr int kEllipticityProbeDirections = 16;

/// Assembles A_h from a sampled coefficient field.
///
/// Rejects (ConfigurationError) an asymmetric a, a cell where the probed
/// Rayleigh quotients leave [lambda, Lambda], and a stiffness matrix that is
/// not an M-matrix (positive off-diagonal entry or negative row sum).
template <typename Scalar>
EllipticOperator<Scalar> assemble_operator(const Grid<Scalar>& grid, const CoefficientField<Scalar>& a_field,
                                           Scalar lambda, Scalar Lambda) {
    using Index = Eigen::Index;
    if (!(lambda > Scalar(0)) || !(Lambda >= lambda))
        throw ConfigurationError("ellipticity bounds must satisfy 0 < lambda <= Lambda");

    const int d = grid.dim();
    const Scalar tol = Scalar(64) * std::numeric_limits<Scalar>::epsilon();

    EllipticOperator<Scalar> op;
    op.grid_ = grid;
    op.lambda_ = lambda;
    op.Lambda_ = Lambda;
    op.elements_ = detail::build_elements(grid, a_field);

    for (std::size_t k = 0; k < op.elements_.size(); ++k) {
        const auto& e = op.elements_[k];
        if (e.a.rows() != d || e.a.cols() != d)
            throw ConfigurationError("coefficient matrix has wrong shape");
        const Scalar scale = std::max(Scalar(1), e.a.cwiseAbs().maxCoeff());
        if (d == 2 && std::abs(e.a(0, 1) - e.a(1, 0)) > tol * scale) {
            std::ostringstream msg;
            msg << "coefficient a is not symmetric at cell centre (" << e.centre.transpose()
                << "): a12=" << e.a(0, 1) << " a21=" << e.a(1, 0);
            throw ConfigurationError(msg.str());
        }
        for (int m = 0; m < (d == 1 ? 1 : kEllipticityProbeDirections); ++m) {
            SmallVector<Scalar> dir(d);
            if (d == 1) {
                dir[0] = Scalar(1);
            } else {
                const Scalar theta = std::numbers::pi_v<Scalar> * Scalar(m) / Scalar(kEllipticityProbeDirections);
                dir << std::cos(theta), std::sin(theta);
            }
            const Scalar q = dir.dot(e.a * dir);
            if (q < lambda * (Scalar(1) - tol) || q > Lambda * (Scalar(1) + tol)) {
                std::ostringstream msg;
                msg << "ellipticity probe failed at cell centre (" << e.centre.transpose() << "), direction ("
                    << dir.transpose() << "): quotient " << q << " outside [" << lambda << ", " << Lambda << "]";
                throw ConfigurationError(msg.str());
            }
        }
    }

    const Index n = grid.node_count();
    const Index ne = op.element_count();
    op.element_weights_.resize(ne);

    std::vector<Eigen::Triplet<Scalar>> grad_t, avg_t, stiff_t;
    VectorX<Scalar> nodal_weight_sum = VectorX<Scalar>::Zero(n);
    for (Index k = 0; k < ne; ++k) {
        const auto& e = op.elements_[static_cast<std::size_t>(k)];
        op.element_weights_[k] = e.weight;
        for (int v = 0; v < e.vertex_count; ++v) {
            avg_t.emplace_back(k, e.nodes[v], Scalar(1) / Scalar(e.vertex_count));
            nodal_weight_sum[e.nodes[v]] += e.weight;
            for (int c = 0; c < d; ++c) grad_t.emplace_back(k * d + c, e.nodes[v], e.shape_gradients(c, v));
        }
        for (int v = 0; v < e.vertex_count; ++v) {
            const Index iv = grid.interior_position(e.nodes[v]);
            if (iv < 0) continue;
            for (int w = 0; w < e.vertex_count; ++w) {
                const Index iw = grid.interior_position(e.nodes[w]);
                if (iw < 0) continue;
                const Scalar kvw = e.weight *
                                   e.shape_gradients.col(v).head(d).dot(e.a * e.shape_gradients.col(w).head(d));
                stiff_t.emplace_back(iv, iw, kvw / grid.cell_measure());
            }
        }
    }
    op.gradient_.resize(ne * d, n);
    op.gradient_.setFromTriplets(grad_t.begin(), grad_t.end());
    op.average_.resize(ne, n);
    op.average_.setFromTriplets(avg_t.begin(), avg_t.end());
    op.stiffness_.resize(grid.interior_count(), grid.interior_count());
    op.stiffness_.setFromTriplets(stiff_t.begin(), stiff_t.end());
    op.stiffness_.prune(Scalar(0));

    std::vector<Eigen::Triplet<Scalar>> ng_t;
    for (Index k = 0; k < ne; ++k) {
        const auto& e = op.elements_[static_cast<std::size_t>(k)];
        for (int v = 0; v < e.vertex_count; ++v) {
            const Index node = e.nodes[v];
            const Scalar share = e.weight / nodal_weight_sum[node];
            for (int w = 0; w < e.vertex_count; ++w)
                for (int c = 0; c < d; ++c)
                    ng_t.emplace_back(node * d + c, e.nodes[w], share * e.shape_gradients(c, w));
        }
    }
    op.nodal_gradient_.resize(n * d, n);
    op.nodal_gradient_.setFromTriplets(ng_t.begin(), ng_t.end());

    // M-matrix structure on the interior block.
    const SparseMatrix<Scalar>& A = op.stiffness_;
    const Scalar diag_scale = VectorX<Scalar>(A.diagonal()).cwiseAbs().maxCoeff();
    for (Index col = 0; col < A.outerSize(); ++col) {
        for (typename SparseMatrix<Scalar>::InnerIterator it(A, col); it; ++it) {
            if (it.row() != it.col() && it.value() > tol * diag_scale) {
                std::ostringstream msg;
                msg << "stiffness is not an M-matrix: entry (" << it.row() << ", " << it.col()
                    << ") = " << it.value() << " > 0; reduce the anisotropy of a";
                throw ConfigurationError(msg.str());
            }
        }
    }
    const VectorX<Scalar> row_sums = A * VectorX<Scalar>::Ones(A.cols());
    for (Index i = 0; i < row_sums.size(); ++i) {
        if (row_sums[i] < -tol * diag_scale) {
            std::ostringstream msg;
            msg << "stiffness is not an M-matrix: row " << i << " sums to " << row_sums[i];
            throw ConfigurationError(msg.str());
        }
    }
    return op;
}

template <typename Scalar>
void require_same_grid(const Grid<Scalar>& grid, const Field<Scalar>& u) {
    if (u.size() != grid.node_count())
        throw DiscretizationMismatch("field has " + std::to_string(u.size()) + " entries, grid has " +
                                     std::to_string(grid.node_count()) + " nodes");
}

/// Energy form E(u, v) = cell_measure * u_I^T A_h v_I.
template <typename Scalar>
Scalar energy(const EllipticOperator<Scalar>& op, const Field<Scalar>& u, const Field<Scalar>& v) {
    require_same_grid(op.grid(), u);
    require_same_grid(op.grid(), v);
    const VectorX<Scalar> ui = op.grid().restrict_interior(u);
    const VectorX<Scalar> vi = op.grid().restrict_interior(v);
    return op.grid().cell_measure() * ui.dot(op.stiffness() * vi);
}

template <typename Scalar>
Scalar energy(const EllipticOperator<Scalar>& op, const Field<Scalar>& u) {
    return energy(op, u, u);
}

/// Element gradients, entry e * d + c.
template <typename Scalar>
VectorX<Scalar> gradient(const EllipticOperator<Scalar>& op, const Field<Scalar>& u) {
    require_same_grid(op.grid(), u);
    return op.gradient_matrix() * u;
}

/// ||grad u||_2^2 by element quadrature.
template <typename Scalar>
Scalar gradient_norm_squared(const EllipticOperator<Scalar>& op, const Field<Scalar>& u) {
    const VectorX<Scalar> g = gradient(op, u);
    const int d = op.dim();
    Scalar s(0);
    for (Eigen::Index e = 0; e < op.element_count(); ++e)
        s += op.element_weights()[e] * g.segment(e * d, d).squaredNorm();
    return s;
}

/// Discrete divergence of an element flux g (entry e * d + c): the nodal
/// field with (div_h g, phi) = -(g, grad_h phi) for every zero-boundary phi.
template <typename Scalar>
Field<Scalar> divergence(const EllipticOperator<Scalar>& op, const VectorX<Scalar>& g) {
    const int d = op.dim();
    if (g.size() != op.element_count() * d)
        throw DiscretizationMismatch("flux has the wrong number of element entries");
    VectorX<Scalar> weighted(g.size());
    for (Eigen::Index e = 0; e < op.element_count(); ++e)
        weighted.segment(e * d, d) = op.element_weights()[e] * g.segment(e * d, d);
    Field<Scalar> div = -(op.gradient_matrix().transpose() * weighted) / op.grid().cell_measure();
    op.grid().clear_boundary(div);
    return div;
}

/// Operator built with a = identity and lambda = Lambda = 1; carries the
/// plain discrete gradient.
template <typename Scalar>
EllipticOperator<Scalar> laplacian(const Grid<Scalar>& grid) {
    return assemble_operator<Scalar>(grid, identity_coefficient<Scalar>(grid.dim()), Scalar(1), Scalar(1));
}

/// Sobolev exponent 2* for the supported dimensions: infinity for d = 1,
/// the configured finite value (default 4) for d = 2.
template <typename Scalar>
Scalar sobolev_exponent(int dim, Scalar two_star_2d = Scalar(4)) {
    if (dim == 1) return std::numeric_limits<Scalar>::infinity();
    if (!(two_star_2d > Scalar(2)) || !std::isfinite(static_cast<double>(two_star_2d)))
        throw ConfigurationError("the d = 2 Sobolev exponent must lie in (2, inf)");
    return two_star_2d;
}

/// Spatial L^p norm by nodal trapezoidal quadrature; p = inf gives max |u|.
template <typename Scalar>
Scalar lp_norm(const Grid<Scalar>& grid, const Field<Scalar>& u, Scalar p) {
    require_same_grid(grid, u);
    if (std::isinf(static_cast<double>(p))) return u.cwiseAbs().maxCoeff();
    const auto& w = grid.quadrature_weights();
    Scalar s(0);
    for (Eigen::Index i = 0; i < u.size(); ++i) s += w[i] * std::pow(std::abs(u[i]), p);
    return std::pow(s, Scalar(1) / p);
}

/// ||u||_{2*} / ||grad u||_2 for a zero-boundary field.
template <typename Scalar>
Scalar sobolev_ratio(const Grid<Scalar>& grid, const Field<Scalar>& u, Scalar two_star_2d = Scalar(4)) {
    require_same_grid(grid, u);
    if (u.cwiseAbs().maxCoeff() == Scalar(0)) throw std::domain_error("Sobolev ratio of the zero field is undefined");
    const auto op = laplacian(grid);
    const Scalar num = lp_norm(grid, u, sobolev_exponent<Scalar>(grid.dim(), two_star_2d));
    return num / std::sqrt(gradient_norm_squared(op, u));
}

}  // namespace rspde
