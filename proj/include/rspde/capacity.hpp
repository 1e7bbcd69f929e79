#pragma once

#include "rspde/solver.hpp"

#include <utility>
#include <vector>

namespace rspde {

/// Compact space-time set as an indicator over (node, time index). Column k
/// is the time stamp t_k; valid sets use interior nodes and 1 <= k < steps
/// (t_0 is excluded since the potential starts from zero).
template <typename Scalar>
struct CompactSet {
    Grid<Scalar> grid;
    Scalar dt = Scalar(0);
    Eigen::Index steps = 0;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> indicator;  // node_count x steps

    Eigen::Index size() const { return indicator.count(); }
    bool contains(Eigen::Index node, Eigen::Index k) const { return indicator(node, k); }
};

template <typename Scalar>
CompactSet<Scalar> empty_set(const Grid<Scalar>& grid, Scalar dt, Eigen::Index steps) {
    CompactSet<Scalar> K{grid, dt, steps, {}};
    K.indicator.setConstant(grid.node_count(), steps, false);
    return K;
}

/// {t_k} x box, the box given per axis as [lo, hi] (closed, node-wise).
template <typename Scalar>
CompactSet<Scalar> time_slice(const Grid<Scalar>& grid, Scalar dt, Eigen::Index steps, Eigen::Index k,
                              const std::vector<std::pair<Scalar, Scalar>>& box) {
    if (static_cast<int>(box.size()) != grid.dim()) throw ConfigurationError("slice box needs one interval per axis");
    if (k < 0 || k >= steps) throw ConfigurationError("slice time index outside [0, steps)");
    auto K = empty_set(grid, dt, steps);
    const Scalar eps = Scalar(1e-9) * grid.spacing(0);
    for (Eigen::Index node : grid.interior_nodes()) {
        const auto x = grid.coordinate(node);
        bool inside = true;
        for (int a = 0; a < grid.dim(); ++a)
            inside = inside && x[a] >= box[static_cast<std::size_t>(a)].first - eps &&
                     x[a] <= box[static_cast<std::size_t>(a)].second + eps;
        K.indicator(node, k) = inside;
    }
    return K;
}

template <typename Scalar>
void require_same_frame(const CompactSet<Scalar>& a, const CompactSet<Scalar>& b) {
    if (!a.grid.same_as(b.grid) || a.dt != b.dt || a.steps != b.steps)
        throw DiscretizationMismatch("compact sets live on different space-time grids");
}

template <typename Scalar>
CompactSet<Scalar> unite(const CompactSet<Scalar>& a, const CompactSet<Scalar>& b) {
    require_same_frame(a, b);
    CompactSet<Scalar> u = a;
    u.indicator = a.indicator || b.indicator;
    return u;
}

/// a is a subset of b.
template <typename Scalar>
bool is_subset(const CompactSet<Scalar>& a, const CompactSet<Scalar>& b) {
    require_same_frame(a, b);
    return !(a.indicator && !b.indicator).any();
}

template <typename Scalar>
void validate_compact_set(const CompactSet<Scalar>& K) {
    if (K.steps < 2 || !(K.dt > Scalar(0))) throw ConfigurationError("compact set needs a time grid with >= 2 steps");
    if (K.indicator.rows() != K.grid.node_count() || K.indicator.cols() != K.steps)
        throw DiscretizationMismatch("compact set indicator does not match its grid");
    if (K.size() == 0) throw ConfigurationError("compact set is empty");
    if (K.indicator.col(0).any())
        throw ConfigurationError("compact set touches t = 0, where the potential is pinned to zero");
    for (Eigen::Index node : K.grid.boundary_nodes())
        if (K.indicator.row(node).any())
            throw ConfigurationError("compact set touches the boundary at node " + std::to_string(node));
}

/// Obstacle problem defining v_K: xi = 0, f = g = h = 0, S = 1 on K and
/// -1e6 elsewhere.
template <typename Scalar>
ProblemData<Scalar> capacity_problem(const EllipticOperator<Scalar>& op, const CompactSet<Scalar>& K) {
    validate_compact_set(K);
    if (!op.grid().same_as(K.grid)) throw DiscretizationMismatch("operator and compact set use different grids");
    const auto& grid = op.grid();
    ProblemData<Scalar> d;
    d.op = op;
    d.xi = Field<Scalar>::Zero(grid.node_count());
    d.coeffs = zero_coefficients<Scalar>(1, grid.dim());
    d.obstacle = make_field_path(grid, K.dt, K.steps);
    d.obstacle.data.setConstant(Scalar(-1e6));
    for (Eigen::Index k = 0; k < K.steps; ++k)
        for (Eigen::Index node = 0; node < grid.node_count(); ++node)
            if (K.indicator(node, k)) d.obstacle.data(node, k) = Scalar(1);
    d.noise = zero_noise<Scalar>(1, K.dt, K.steps);
    return d;
}

/// Smallest potential above 1 on K: the projected solution of the capacity
/// problem (the LCP solution is the least discrete supersolution).
template <typename Scalar>
SolveResult<Scalar> smallest_potential(const EllipticOperator<Scalar>& op, const CompactSet<Scalar>& K,
                                       const SolveOptions& options = {}) {
    return solve_projected(capacity_problem(op, K), options);
}

/// cap(K) = total mass of the measure of v_K.
template <typename Scalar>
Scalar capacity(const EllipticOperator<Scalar>& op, const CompactSet<Scalar>& K, const SolveOptions& options = {}) {
    return smallest_potential(op, K, options).measure.total_mass();
}

/// sum_k [ -(phi_{k+1} - phi_k, v_{k+1}) + dt E(phi_k, v_{k+1}) ] for a test
/// path phi vanishing at T. Nonnegative for phi >= 0 iff v is a potential;
/// equals the pairing sum_k dt (nu_k, phi_k).
template <typename Scalar>
Scalar potential_inequality(const EllipticOperator<Scalar>& op, const FieldPath<Scalar>& v,
                            const FieldPath<Scalar>& phi) {
    if (!v.matches(phi)) throw DiscretizationMismatch("test path does not match the potential");
    const auto& W = op.grid().quadrature_weights();
    Scalar acc(0);
    for (Eigen::Index k = 0; k < v.steps(); ++k) {
        const Field<Scalar> v1 = v.frame(k + 1);
        const Field<Scalar> phi0 = phi.frame(k);
        acc += -(W.array() * (phi.frame(k + 1) - phi.frame(k)).array() * v1.array()).sum() +
               v.dt * energy(op, phi0, v1);
    }
    return acc;
}

}  // namespace rspde
