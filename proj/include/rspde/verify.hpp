#pragma once

#include "rspde/norms.hpp"
#include "rspde/solver.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace rspde {

/// Residual of a discrete identity along a stored path.
///
/// `per_step[k]` is the contribution of [t_k, t_{k+1}], `cumulative[k]` the
/// residual of the identity at t_{k+1}.
struct ResidualReport {
    std::string identity;
    std::vector<double> per_step;
    std::vector<double> cumulative;
    double max_step = 0.0;  // max_k |per_step[k]|
    double max_abs = 0.0;   // max_k |cumulative[k]|
    double terminal = 0.0;  // cumulative.back()
    double spacing = 0.0;
    double dt = 0.0;
    Eigen::Index steps = 0;
};

namespace detail {

template <typename Scalar>
Scalar nodal_inner(const Grid<Scalar>& grid, const Field<Scalar>& a, const Field<Scalar>& b) {
    return (grid.quadrature_weights().array() * a.array() * b.array()).sum();
}

template <typename Scalar>
Scalar element_inner(const EllipticOperator<Scalar>& op, const VectorX<Scalar>& a, const VectorX<Scalar>& b) {
    const int d = op.dim();
    Scalar s(0);
    for (Eigen::Index e = 0; e < op.element_count(); ++e)
        s += op.element_weights()[e] * a.segment(e * d, d).dot(b.segment(e * d, d));
    return s;
}

template <typename Scalar>
ResidualReport finish_report(std::string name, std::vector<double> steps, const Grid<Scalar>& grid, Scalar dt) {
    ResidualReport r;
    r.identity = std::move(name);
    r.per_step = std::move(steps);
    r.cumulative.reserve(r.per_step.size());
    double acc = 0.0;
    for (double v : r.per_step) {
        acc += v;
        r.cumulative.push_back(acc);
        r.max_step = std::max(r.max_step, std::abs(v));
        r.max_abs = std::max(r.max_abs, std::abs(acc));
    }
    r.terminal = acc;
    r.spacing = static_cast<double>(grid.spacing(0));
    r.dt = static_cast<double>(dt);
    r.steps = static_cast<Eigen::Index>(r.per_step.size());
    return r;
}

template <typename Scalar>
void require_result_matches(const SolveResult<Scalar>& result, const ProblemData<Scalar>& data) {
    if (result.u.data.rows() != data.grid().node_count() || result.u.steps() != data.steps() ||
        result.u.dt != data.dt() || result.measure.steps() != data.steps())
        throw DiscretizationMismatch("stored result does not match the problem discretization");
    if (data.noise.steps() < data.steps()) throw DiscretizationMismatch("noise path shorter than the stored result");
}

/// Shared engine of the y^2 and (y^+)^2 identities. With `positive` the
/// state is replaced by its positive part and the quadratic-variation term
/// restricted to {u_k > 0}.
template <typename Scalar>
ResidualReport square_identity(const SolveResult<Scalar>& result, const ProblemData<Scalar>& data, bool positive) {
    require_result_matches(result, data);
    const auto& op = data.op;
    const auto& grid = data.grid();
    const Scalar dt = data.dt();
    const auto& W = grid.quadrature_weights();
    auto part = [&](const Field<Scalar>& u) { return positive ? Field<Scalar>(u.cwiseMax(Scalar(0))) : u; };

    std::vector<double> steps;
    steps.reserve(static_cast<std::size_t>(data.steps()));
    for (Eigen::Index k = 0; k < data.steps(); ++k) {
        const Scalar t = result.u.time(k);
        const Field<Scalar> u0 = result.u.frame(k);
        const Field<Scalar> u1 = result.u.frame(k + 1);
        const Field<Scalar> p0 = part(u0);
        const Field<Scalar> p1 = part(u1);
        const Field<Scalar> noise = noise_increment(evaluate_sources(op, data.coeffs, t, u0).h, data.noise, k);
        const auto at_next = evaluate_sources(op, data.coeffs, t, u1);
        const Field<Scalar> drift = u1 - u0 - noise;
        // realized quadratic variation minus the squared drift increment
        Scalar q(0);
        for (Eigen::Index i = 0; i < grid.node_count(); ++i) {
            if (positive && !(u0[i] > Scalar(0))) continue;
            q += W[i] * (noise[i] * noise[i] - drift[i] * drift[i]);
        }
        const Field<Scalar> nu = result.measure.nodal(k);
        const Scalar r = nodal_inner(grid, p1, p1) - nodal_inner(grid, p0, p0) + Scalar(2) * dt * energy(op, p1) -
                         Scalar(2) * dt * nodal_inner(grid, p1, at_next.f) +
                         Scalar(2) * dt * element_inner(op, gradient(op, p1), at_next.g) -
                         Scalar(2) * nodal_inner(grid, p0, noise) - q - Scalar(2) * dt * nodal_inner(grid, p1, nu);
        steps.push_back(static_cast<double>(r));
    }
    return finish_report(positive ? "positive_part" : "ito_square", std::move(steps), grid, dt);
}

}  // namespace detail

/// Discrete weak-form balance tested against phi (zero on the boundary):
/// (u_m, phi_m) - (xi, phi_0) - sum_{k<m} [ (u_{k+1}, phi_{k+1} - phi_k)
///   - dt E(u_{k+1}, phi_k) - dt (g, grad phi_k) + dt (f, phi_k)
///   + (sum_j h_j dB^j_k, phi_k) + dt (nu_k, phi_k) ].
/// f and g are evaluated on u_{k+1} (time t_k), h on u_k. The balance is
/// exact for state-independent coefficients and O(dt) otherwise.
template <typename Scalar>
ResidualReport weak_form_residual(const SolveResult<Scalar>& result, const ProblemData<Scalar>& data,
                                  const FieldPath<Scalar>& phi) {
    detail::require_result_matches(result, data);
    const auto& op = data.op;
    const auto& grid = data.grid();
    if (!phi.matches(result.u)) throw DiscretizationMismatch("test functions do not match the solution path");
    for (Eigen::Index node : grid.boundary_nodes())
        if ((phi.data.row(node).array() != Scalar(0)).any())
            throw std::invalid_argument("test function does not vanish on the boundary");
    const Scalar dt = data.dt();

    std::vector<double> steps;
    steps.reserve(static_cast<std::size_t>(data.steps()));
    for (Eigen::Index k = 0; k < data.steps(); ++k) {
        const Scalar t = result.u.time(k);
        const Field<Scalar> u0 = result.u.frame(k);
        const Field<Scalar> u1 = result.u.frame(k + 1);
        const Field<Scalar> phi0 = phi.frame(k);
        const Field<Scalar> phi1 = phi.frame(k + 1);
        const Field<Scalar> noise = noise_increment(evaluate_sources(op, data.coeffs, t, u0).h, data.noise, k);
        const auto at_next = evaluate_sources(op, data.coeffs, t, u1);
        const Field<Scalar> nu = result.measure.nodal(k);
        using detail::nodal_inner;
        const Scalar lhs = nodal_inner(grid, u1, phi1) - nodal_inner(grid, u0, phi0);
        const Scalar rhs = nodal_inner(grid, u1, Field<Scalar>(phi1 - phi0)) - dt * energy(op, u1, phi0) -
                           dt * detail::element_inner(op, at_next.g, gradient(op, phi0)) +
                           dt * nodal_inner(grid, at_next.f, phi0) + nodal_inner(grid, noise, phi0) +
                           dt * nodal_inner(grid, nu, phi0);
        steps.push_back(static_cast<double>(lhs - rhs));
    }
    return detail::finish_report("weak_form", std::move(steps), grid, dt);
}

/// Discrete Ito formula for ||u||^2, per step:
///   ||u_{k+1}||^2 - ||u_k||^2 + 2 dt E(u_{k+1}) - 2 dt (u_{k+1}, f) + 2 dt (grad u_{k+1}, g)
///   - 2 (u_k, N_k) - Q_k - 2 dt (u_{k+1}, nu_k),
/// with N_k = sum_j h_j(u_k) dB^j_k, Q_k = ||N_k||^2 - ||u_{k+1} - u_k - N_k||^2
/// (the discrete quadratic variation) and f, g evaluated on u_{k+1}.
template <typename Scalar>
ResidualReport ito_square_residual(const SolveResult<Scalar>& result, const ProblemData<Scalar>& data) {
    return detail::square_identity(result, data, false);
}

/// The same identity for u^+: ||u^+||^2, E(u^+), pairings with u^+, and the
/// quadratic-variation term restricted to {u_k > 0}.
template <typename Scalar>
ResidualReport positive_part_residual(const SolveResult<Scalar>& result, const ProblemData<Scalar>& data) {
    return detail::square_identity(result, data, true);
}

/// One realization of an estimate: lhs and named rhs ingredients.
struct EstimateSample {
    double lhs = 0.0;
    std::vector<std::pair<std::string, double>> ingredients;
};

struct EstimateIngredient {
    std::string name;
    double mean = 0.0;
    double standard_error = 0.0;
};

/// Sample-mean form of an a priori estimate, lhs <= factor * k(t) * sum(rhs).
struct EstimateReport {
    std::string name;
    double t = 0.0;
    std::size_t samples = 0;
    double lhs = 0.0;
    double lhs_stderr = 0.0;
    std::vector<EstimateIngredient> ingredients;
    double rhs_sum = 0.0;
    double factor = 1.0;
    /// lhs / (factor * rhs_sum); empty when the rhs vanishes.
    std::optional<double> implied_constant;
};

inline EstimateReport aggregate_estimate(std::string name, double t, double factor,
                                         const std::vector<EstimateSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("estimate needs at least one sample");
    EstimateReport r;
    r.name = std::move(name);
    r.t = t;
    r.factor = factor;
    r.samples = samples.size();
    const double n = static_cast<double>(samples.size());
    auto stats = [&](auto get) {
        double s = 0, s2 = 0;
        for (const auto& x : samples) {
            const double v = get(x);
            s += v;
            s2 += v * v;
        }
        const double mean = s / n;
        const double var = n > 1 ? std::max(0.0, (s2 - n * mean * mean) / (n - 1)) : 0.0;
        return std::pair<double, double>{mean, std::sqrt(var / n)};
    };
    std::tie(r.lhs, r.lhs_stderr) = stats([](const EstimateSample& x) { return x.lhs; });
    for (std::size_t i = 0; i < samples.front().ingredients.size(); ++i) {
        const auto [mean, se] = stats([i](const EstimateSample& x) { return x.ingredients[i].second; });
        r.ingredients.push_back({samples.front().ingredients[i].first, mean, se});
        r.rhs_sum += mean;
    }
    if (r.rhs_sum > 0.0) r.implied_constant = r.lhs / (factor * r.rhs_sum);
    return r;
}

namespace detail {

/// Zero-point data shifted along the dominator, f-bar^0 = f(S', grad S') - f'
/// and likewise for g and h, together with the dominator sources themselves.
template <typename Scalar>
struct ShiftedData {
    FieldPath<Scalar> f_bar, f_dom;
    Path<Scalar> g_bar, g_dom;
    Path<Scalar> h_bar, h_dom;
};

template <typename Scalar>
ShiftedData<Scalar> shifted_zero_data(const ProblemData<Scalar>& data, const FieldPath<Scalar>& dominator) {
    if (!data.dominator) throw ConfigurationError("estimate checks need dominator data");
    if (!dominator.matches(data.obstacle)) throw DiscretizationMismatch("dominator path does not match the problem");
    const auto& op = data.op;
    const auto& grid = data.grid();
    const auto& dom = *data.dominator;
    const int J = data.coeffs.modes;
    const Scalar dt = data.dt();
    const Eigen::Index frames = data.steps() + 1;
    ShiftedData<Scalar> s{make_field_path(grid, dt, data.steps()), make_field_path(grid, dt, data.steps()),
                          Path<Scalar>(element_layout(op), dt, frames), Path<Scalar>(element_layout(op), dt, frames),
                          Path<Scalar>(nodal_layout(grid, J), dt, frames), Path<Scalar>(nodal_layout(grid, J), dt, frames)};
    if (dom.f.frames() > 0) s.f_dom.data = dom.f.data.leftCols(frames);
    if (dom.g.frames() > 0) s.g_dom.data = dom.g.data.leftCols(frames);
    if (dom.h.frames() > 0) s.h_dom.data = dom.h.data.leftCols(frames);
    for (Eigen::Index k = 0; k < frames; ++k) {
        const auto src = evaluate_sources(op, data.coeffs, dominator.time(k), Field<Scalar>(dominator.frame(k)));
        s.f_bar.frame(k) = src.f - s.f_dom.frame(k);
        s.g_bar.frame(k) = src.g - s.g_dom.frame(k);
        for (Eigen::Index node = 0; node < grid.node_count(); ++node)
            s.h_bar.data.col(k).segment(node * J, J) = src.h.row(node).transpose();
        s.h_bar.frame(k) -= s.h_dom.frame(k);
    }
    return s;
}

/// Zeroes the entries of a nodal (or element) path outside a mask; `mask`
/// has one row per point and one column per frame.
template <typename Scalar>
Path<Scalar> restrict_to(Path<Scalar> p, const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& mask) {
    const int m = p.layout.components;
    for (Eigen::Index k = 0; k < p.frames(); ++k)
        for (Eigen::Index i = 0; i < p.layout.points(); ++i)
            if (!mask(i, k)) p.data.col(k).segment(i * m, m).setZero();
    return p;
}

template <typename Scalar>
Scalar squared_l2(const Grid<Scalar>& grid, const Field<Scalar>& u) {
    return nodal_inner(grid, u, u);
}

}  // namespace detail

/// One realization of the energy estimate at time t:
///   lhs = ||u||^2_{2,inf;t} + ||grad u||^2_{2,2;t}
///   rhs = ||xi - S'_0||^2 + (||f-bar^0||*_#)^2 + ||g-bar^0||^2_{2,2} + ||h-bar^0||^2_{2,2}
///       + ||S'_0||^2 + (||f'||*_#)^2 + ||g'||^2_{2,2} + ||h'||^2_{2,2}.
/// The dual #-norm enters through its upper bound, so the implied constant
/// is a lower bound on the one the estimate needs.
template <typename Scalar>
EstimateSample apriori_sample(const SolveResult<Scalar>& result, const ProblemData<Scalar>& data,
                              const FieldPath<Scalar>& dominator, Scalar t, const NormToolbox<Scalar>& tb) {
    detail::require_result_matches(result, data);
    const auto& grid = data.grid();
    const auto s = detail::shifted_zero_data(data, dominator);
    const Scalar inf = infinity<Scalar>();
    const Scalar u_sup = mixed_norm(result.u, Scalar(2), inf, t);
    const Scalar grad = mixed_norm(gradient_path(data.op, result.u), Scalar(2), Scalar(2), t);
    auto sq = [](Scalar v) { return static_cast<double>(v * v); };
    const Field<Scalar> s0 = dominator.frame(0);
    Field<Scalar> start = data.xi - s0;
    grid.clear_boundary(start);

    EstimateSample e;
    e.lhs = sq(u_sup) + sq(grad);
    e.ingredients = {
        {"xi - S'_0", static_cast<double>(detail::squared_l2(grid, start))},
        {"f-bar^0 (dual #)", sq(dual_sharp_upper(s.f_bar, t, tb))},
        {"g-bar^0", sq(mixed_norm(s.g_bar, Scalar(2), Scalar(2), t))},
        {"h-bar^0", sq(mixed_norm(s.h_bar, Scalar(2), Scalar(2), t))},
        {"S'_0", static_cast<double>(detail::squared_l2(grid, s0))},
        {"f' (dual #)", sq(dual_sharp_upper(s.f_dom, t, tb))},
        {"g'", sq(mixed_norm(s.g_dom, Scalar(2), Scalar(2), t))},
        {"h'", sq(mixed_norm(s.h_dom, Scalar(2), Scalar(2), t))},
    };
    return e;
}

/// One realization of the positive-part estimate at time t:
///   lhs = ||u^+||^2_{2,inf;t}, bound 2 k(t) times
///   ||(xi - S'_0)^+||^2 + (||1_{u>S'} (f-bar^0)^+||*_#)^2 + ||1_{u>S'} g-bar^0||^2 + ||1_{u>S'} h-bar^0||^2
///   + ||(S'_0)^+||^2 + (||1_{S'>0} (f')^+||*_#)^2 + ||1_{S'>0} g'||^2 + ||1_{S'>0} h'||^2.
/// On elements the indicator uses the element mean of the nodal values.
template <typename Scalar>
EstimateSample positive_part_sample(const SolveResult<Scalar>& result, const ProblemData<Scalar>& data,
                                    const FieldPath<Scalar>& dominator, Scalar t, const NormToolbox<Scalar>& tb,
                                    Scalar tolerance = Scalar(1e-12)) {
    using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
    detail::require_result_matches(result, data);
    const auto& op = data.op;
    const auto& grid = data.grid();
    const auto s = detail::shifted_zero_data(data, dominator);

    const MatrixX<Scalar> excess = result.u.data - dominator.data;
    const MatrixX<Scalar> excess_el = op.average_matrix() * excess;
    const MatrixX<Scalar> dom_el = op.average_matrix() * dominator.data;
    const Mask above = excess.array() > tolerance;
    const Mask above_el = excess_el.array() > tolerance;
    const Mask dom_pos = dominator.data.array() > tolerance;
    const Mask dom_pos_el = dom_el.array() > tolerance;

    auto pos = [](FieldPath<Scalar> p) {
        p.data = p.data.cwiseMax(Scalar(0));
        return p;
    };
    auto sq = [](Scalar v) { return static_cast<double>(v * v); };
    const Scalar two(2);

    Field<Scalar> start = (data.xi - Field<Scalar>(dominator.frame(0))).cwiseMax(Scalar(0));
    grid.clear_boundary(start);
    const Field<Scalar> s0 = Field<Scalar>(dominator.frame(0)).cwiseMax(Scalar(0));

    EstimateSample e;
    e.lhs = sq(mixed_norm(positive_part(result.u), two, infinity<Scalar>(), t));
    e.ingredients = {
        {"(xi - S'_0)^+", static_cast<double>(detail::squared_l2(grid, start))},
        {"1_{u>S'} (f-bar^0)^+ (dual #)", sq(dual_sharp_upper(detail::restrict_to(pos(s.f_bar), above), t, tb))},
        {"1_{u>S'} g-bar^0", sq(mixed_norm(detail::restrict_to(s.g_bar, above_el), two, two, t))},
        {"1_{u>S'} h-bar^0", sq(mixed_norm(detail::restrict_to(s.h_bar, above), two, two, t))},
        {"(S'_0)^+", static_cast<double>(detail::squared_l2(grid, s0))},
        {"1_{S'>0} (f')^+ (dual #)", sq(dual_sharp_upper(detail::restrict_to(pos(s.f_dom), dom_pos), t, tb))},
        {"1_{S'>0} g'", sq(mixed_norm(detail::restrict_to(s.g_dom, dom_pos_el), two, two, t))},
        {"1_{S'>0} h'", sq(mixed_norm(detail::restrict_to(s.h_dom, dom_pos), two, two, t))},
    };
    return e;
}

inline EstimateReport apriori_report(double t, const std::vector<EstimateSample>& samples) {
    return aggregate_estimate("apriori", t, 1.0, samples);
}

inline EstimateReport positive_part_report(double t, const std::vector<EstimateSample>& samples) {
    return aggregate_estimate("positive_part_bound", t, 2.0, samples);
}

/// Pathwise comparison of two obstacle problems driven by the same noise.
struct ComparisonReport {
    double min_gap = std::numeric_limits<double>::infinity();  // min over samples, steps, nodes of u2 - u1
    std::vector<double> sample_min_gap;
};

namespace detail {

template <typename Scalar>
void require_comparable(const ProblemData<Scalar>& lower, const ProblemData<Scalar>& upper, Scalar tolerance) {
    auto refuse = [](const std::string& what) { throw AssumptionError("comparison precondition violated: " + what); };
    if (!lower.grid().same_as(upper.grid())) refuse("problems live on different grids");
    if (lower.dt() != upper.dt() || lower.steps() != upper.steps()) refuse("problems use different time grids");
    if (lower.coeffs.modes != upper.coeffs.modes) refuse("noise dimensions differ");
    const SparseMatrix<Scalar> diff = lower.op.stiffness() - upper.op.stiffness();
    if (diff.cwiseAbs().sum() > tolerance) refuse("operators differ");
    for (Eigen::Index node : lower.grid().interior_nodes())
        if (lower.xi[node] > upper.xi[node] + tolerance)
            refuse("xi1 > xi2 at node " + std::to_string(node));
    if ((lower.obstacle.data.array() > upper.obstacle.data.array() + tolerance).any()) refuse("S1 > S2 somewhere");
}

/// Probes f1 <= f2, g1 = g2, h1 = h2 along a trajectory.
template <typename Scalar>
void probe_ordering(const ProblemData<Scalar>& lower, const ProblemData<Scalar>& upper, const FieldPath<Scalar>& u,
                    Scalar tolerance) {
    auto refuse = [](const std::string& what, Eigen::Index k) {
        throw AssumptionError("comparison precondition violated: " + what + " at step " + std::to_string(k));
    };
    for (Eigen::Index k = 0; k < u.frames(); ++k) {
        const Field<Scalar> state = u.frame(k);
        const auto a = evaluate_sources(lower.op, lower.coeffs, u.time(k), state);
        const auto b = evaluate_sources(upper.op, upper.coeffs, u.time(k), state);
        if ((a.f.array() > b.f.array() + tolerance).any()) refuse("f1 > f2", k);
        if ((a.g - b.g).cwiseAbs().maxCoeff() > tolerance) refuse("g1 != g2", k);
        if ((a.h - b.h).cwiseAbs().maxCoeff() > tolerance) refuse("h1 != h2", k);
    }
}

}  // namespace detail

/// Solves both problems (projected scheme) for each seed with a shared noise
/// path and records min(u2 - u1). Refuses with AssumptionError when the
/// ordering of the data fails; the coefficient ordering is probed along both
/// trajectories.
template <typename Scalar>
ComparisonReport comparison_experiment(ProblemData<Scalar> lower, ProblemData<Scalar> upper,
                                       const std::vector<std::uint64_t>& seeds, const SolveOptions& options = {},
                                       Scalar tolerance = Scalar(1e-12)) {
    detail::require_comparable(lower, upper, tolerance);
    ComparisonReport r;
    r.sample_min_gap.reserve(seeds.size());
    for (std::uint64_t seed : seeds) {
        lower.noise = sample_noise(lower.coeffs.modes, lower.dt(), lower.steps(), seed);
        upper.noise = lower.noise;
        const auto a = solve_projected(lower, options);
        const auto b = solve_projected(upper, options);
        detail::probe_ordering(lower, upper, a.u, tolerance);
        detail::probe_ordering(lower, upper, b.u, tolerance);
        const double gap = static_cast<double>((b.u.data - a.u.data).minCoeff());
        r.sample_min_gap.push_back(gap);
        r.min_gap = std::min(r.min_gap, gap);
    }
    return r;
}

}  // namespace rspde
