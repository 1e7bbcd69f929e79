#pragma once

#include "rspde/coefficients.hpp"
#include "rspde/lcp.hpp"
#include "rspde/noise.hpp"

#include <Eigen/SparseCholesky>

#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace rspde {

/// Data of the linear dominating equation
///   dS' + A S' dt = f' dt + div g' dt + sum_j h'_j dB^j,  S'(0) = S'_0.
/// Empty paths (zero frames) stand for zero sources.
template <typename Scalar>
struct DominatorData {
    Field<Scalar> initial;
    FieldPath<Scalar> f;  // nodal
    Path<Scalar> g;       // per flux element, d components
    Path<Scalar> h;       // nodal, J components
};

/// One realization of the obstacle problem.
template <typename Scalar>
struct ProblemData {
    EllipticOperator<Scalar> op;
    Field<Scalar> xi;
    CoefficientSet<Scalar> coeffs;
    FieldPath<Scalar> obstacle;  // frames t_0..t_K, fixes dt and the step count
    std::optional<DominatorData<Scalar>> dominator;
    NoisePath<Scalar> noise;

    Scalar dt() const { return obstacle.dt; }
    Eigen::Index steps() const { return obstacle.steps(); }
    const Grid<Scalar>& grid() const { return op.grid(); }
};

/// Reflection measure as a density per space-time cell: weight (i, k) is the
/// mass density at interior node i over [t_k, t_{k+1}).
template <typename Scalar>
struct DiscreteMeasure {
    Grid<Scalar> grid;
    Scalar dt = Scalar(0);
    MatrixX<Scalar> weights;  // interior_count x steps

    Eigen::Index steps() const { return weights.cols(); }

    Scalar total_mass() const { return weights.sum() * grid.cell_measure() * dt; }

    /// Step k as a nodal field (zero on the boundary).
    Field<Scalar> nodal(Eigen::Index k) const { return grid.extend_by_zero(weights.col(k)); }
};

template <typename Scalar>
DiscreteMeasure<Scalar> zero_measure(const Grid<Scalar>& grid, Scalar dt, Eigen::Index steps) {
    return {grid, dt, MatrixX<Scalar>::Zero(grid.interior_count(), steps)};
}

struct SolveDiagnostics {
    std::vector<long> iterations;   // per step
    std::vector<double> residuals;  // per step
    std::vector<std::string> warnings;
};

template <typename Scalar>
struct SolveResult {
    FieldPath<Scalar> u;
    DiscreteMeasure<Scalar> measure;
    SolveDiagnostics diagnostics;
};

struct SolveOptions {
    bool validate = true;
    ProbeOptions probe;
    PsorOptions psor;
    double newton_tolerance = 1e-12;
    int newton_max_iterations = 200;
};

/// Coefficients evaluated on a nodal state: f and h at the nodes with the
/// nodal gradient, g at element centres with the element mean and gradient.
template <typename Scalar>
struct SourceTerms {
    Field<Scalar> f;
    VectorX<Scalar> g;  // entry e * d + c
    MatrixX<Scalar> h;  // node x mode
};

template <typename Scalar>
SourceTerms<Scalar> evaluate_sources(const EllipticOperator<Scalar>& op, const CoefficientSet<Scalar>& c, Scalar t,
                                     const Field<Scalar>& u) {
    using Point = SmallVector<Scalar>;
    const auto& grid = op.grid();
    const int d = grid.dim();
    const VectorX<Scalar> nodal_grad = op.nodal_gradient_matrix() * u;
    const VectorX<Scalar> elem_grad = op.gradient_matrix() * u;
    const VectorX<Scalar> elem_mean = op.average_matrix() * u;

    SourceTerms<Scalar> s;
    s.f = Field<Scalar>::Zero(grid.node_count());
    s.h = MatrixX<Scalar>::Zero(grid.node_count(), c.modes);
    VectorX<Scalar> hv(c.modes);
    for (Eigen::Index node : grid.interior_nodes()) {
        const Point x = grid.coordinate(node);
        const Point z = nodal_grad.segment(node * d, d);
        s.f[node] = c.f(t, x, u[node], z);
        c.h(t, x, u[node], z, hv);
        s.h.row(node) = hv.transpose();
    }
    s.g.resize(op.element_count() * d);
    for (Eigen::Index e = 0; e < op.element_count(); ++e) {
        const Point z = elem_grad.segment(e * d, d);
        s.g.segment(e * d, d) = c.g(t, op.elements()[static_cast<std::size_t>(e)].centre, elem_mean[e], z);
    }
    return s;
}

/// Factorization of I + dt A_h on the interior nodes.
template <typename Scalar>
class ImplicitStepper {
public:
    ImplicitStepper(const EllipticOperator<Scalar>& op, Scalar dt) : op_(&op), dt_(dt) {
        if (!(dt > Scalar(0))) throw ConfigurationError("time step must be positive");
        SparseMatrix<Scalar> I(op.grid().interior_count(), op.grid().interior_count());
        I.setIdentity();
        system_ = I + dt * op.stiffness();
        system_.makeCompressed();
        ldlt_.compute(system_);
        if (ldlt_.info() != Eigen::Success) throw SolverError("I + dt A_h is not symmetric positive definite");
    }

    Scalar dt() const { return dt_; }
    const SparseMatrix<Scalar>& system() const { return system_; }

    /// Interior solve; returns interior values.
    VectorX<Scalar> solve_interior(const VectorX<Scalar>& rhs) const {
        VectorX<Scalar> x = ldlt_.solve(rhs);
        if (ldlt_.info() != Eigen::Success) throw SolverError("linear solve failed");
        return x;
    }

    Field<Scalar> solve(const Field<Scalar>& rhs) const {
        return op_->grid().extend_by_zero(solve_interior(op_->grid().restrict_interior(rhs)));
    }

private:
    const EllipticOperator<Scalar>* op_;
    Scalar dt_;
    SparseMatrix<Scalar> system_;
    Eigen::SimplicialLDLT<SparseMatrix<Scalar>> ldlt_;
};

/// state + dt f + dt div_h g + noise, boundary cleared.
template <typename Scalar>
Field<Scalar> explicit_rhs(const EllipticOperator<Scalar>& op, Scalar dt, const Field<Scalar>& state,
                           const Field<Scalar>& f, const VectorX<Scalar>& g, const Field<Scalar>& noise) {
    Field<Scalar> rhs = state + dt * f + dt * divergence(op, g) + noise;
    op.grid().clear_boundary(rhs);
    return rhs;
}

/// One semi-implicit step: (I + dt A_h) next = state + dt f + dt div_h g + noise.
template <typename Scalar>
Field<Scalar> step_linear(const ImplicitStepper<Scalar>& stepper, const EllipticOperator<Scalar>& op,
                          const Field<Scalar>& state, const Field<Scalar>& f, const VectorX<Scalar>& g,
                          const Field<Scalar>& noise) {
    return stepper.solve(explicit_rhs(op, stepper.dt(), state, f, g, noise));
}

template <typename Scalar>
Field<Scalar> step_linear(const EllipticOperator<Scalar>& op, Scalar dt, const Field<Scalar>& state,
                          const Field<Scalar>& f, const VectorX<Scalar>& g, const Field<Scalar>& noise) {
    return step_linear(ImplicitStepper<Scalar>(op, dt), op, state, f, g, noise);
}

/// Sum_j h_j dB^j for a node x mode matrix.
template <typename Scalar>
Field<Scalar> noise_increment(const MatrixX<Scalar>& h, const NoisePath<Scalar>& w, Eigen::Index k) {
    return h * w.increments.col(k);
}

/// Reshapes frame k of a nodal J-component path into a node x mode matrix.
template <typename Scalar>
MatrixX<Scalar> mode_matrix(const Path<Scalar>& h, Eigen::Index k) {
    const int J = h.layout.components;
    MatrixX<Scalar> m(h.layout.points(), J);
    for (Eigen::Index i = 0; i < h.layout.points(); ++i) m.row(i) = h.data.col(k).segment(i * J, J).transpose();
    return m;
}

/// Energy balance of a linear solve: lhs = ||S'||^2_{2,inf;T} + int E(S') dt,
/// data = ||S'_0||^2 + (||f'||*_#)^2 + ||g'||^2_{2,2} + ||h'||^2_{2,2}.
struct LinearEstimate {
    double lhs = 0.0;
    double data = 0.0;
    /// lhs / data, or NaN when the data vanish.
    double ratio = 0.0;
};

template <typename Scalar>
struct LinearSolveResult {
    FieldPath<Scalar> path;
    LinearEstimate estimate;
};

/// Marches the linear equation with given source paths (empty path = zero).
template <typename Scalar>
FieldPath<Scalar> march_linear(const EllipticOperator<Scalar>& op, const Field<Scalar>& initial,
                               const FieldPath<Scalar>& f, const Path<Scalar>& g, const Path<Scalar>& h,
                               const NoisePath<Scalar>& noise, Scalar dt, Eigen::Index steps) {
    const auto& grid = op.grid();
    require_same_grid(grid, initial);
    auto check = [&](const Path<Scalar>& p, Eigen::Index rows, const char* name) {
        if (p.frames() == 0) return;
        if (p.data.rows() != rows || p.frames() < steps || p.dt != dt)
            throw DiscretizationMismatch(std::string("source path ") + name + " does not match the time grid");
    };
    check(f, grid.node_count(), "f");
    check(g, op.element_count() * op.dim(), "g");
    if (h.frames() > 0) {
        check(h, grid.node_count() * h.layout.components, "h");
        if (h.layout.components != noise.modes) throw DiscretizationMismatch("h has a different mode count than the noise");
    }
    if (h.frames() > 0 && (noise.steps() < steps || noise.dt != dt))
        throw DiscretizationMismatch("noise does not cover the time grid");

    const ImplicitStepper<Scalar> stepper(op, dt);
    FieldPath<Scalar> out = make_field_path(grid, dt, steps);
    Field<Scalar> u = initial;
    grid.clear_boundary(u);
    out.frame(0) = u;
    const Field<Scalar> zero_f = Field<Scalar>::Zero(grid.node_count());
    const VectorX<Scalar> zero_g = VectorX<Scalar>::Zero(op.element_count() * op.dim());
    for (Eigen::Index k = 0; k < steps; ++k) {
        Field<Scalar> dw = Field<Scalar>::Zero(grid.node_count());
        if (h.frames() > 0) dw = noise_increment(mode_matrix(h, k), noise, k);
        u = step_linear(stepper, op, u, f.frames() > 0 ? Field<Scalar>(f.frame(k)) : zero_f,
                        g.frames() > 0 ? VectorX<Scalar>(g.frame(k)) : zero_g, dw);
        out.frame(k + 1) = u;
    }
    return out;
}

/// Int_0^t E(u_s) ds by the left-endpoint rule.
template <typename Scalar>
Scalar energy_integral(const EllipticOperator<Scalar>& op, const FieldPath<Scalar>& u, Scalar t) {
    Scalar acc(0);
    for (Eigen::Index k = 0; k < u.steps(); ++k) {
        const Scalar w = detail::left_rectangle_weight(u, k, t);
        if (w == Scalar(0)) break;
        acc += w * energy(op, Field<Scalar>(u.frame(k)));
    }
    return acc;
}

/// Solves the dominating linear SPDE and records its energy balance.
template <typename Scalar>
LinearSolveResult<Scalar> solve_linear_spde(const ProblemData<Scalar>& data, Scalar two_star_2d = Scalar(4)) {
    if (!data.dominator) throw ConfigurationError("problem has no dominator data");
    const auto& dom = *data.dominator;
    LinearSolveResult<Scalar> r;
    r.path = march_linear(data.op, dom.initial, dom.f, dom.g, dom.h, data.noise, data.dt(), data.steps());

    const Scalar T = r.path.horizon();
    const auto tb = make_toolbox(data.grid(), two_star_2d);
    const double sup = static_cast<double>(mixed_norm(r.path, Scalar(2), infinity<Scalar>(), T));
    r.estimate.lhs = sup * sup + static_cast<double>(energy_integral(data.op, r.path, T));
    const double s0 = static_cast<double>(lp_norm(data.grid(), dom.initial, Scalar(2)));
    double rhs = s0 * s0;
    auto add = [&](double v) { rhs += v * v; };
    if (dom.f.frames() > 0) add(static_cast<double>(dual_sharp_upper(dom.f, T, tb)));
    if (dom.g.frames() > 0) add(static_cast<double>(mixed_norm(dom.g, Scalar(2), Scalar(2), T)));
    if (dom.h.frames() > 0) add(static_cast<double>(mixed_norm(dom.h, Scalar(2), Scalar(2), T)));
    r.estimate.data = rhs;
    r.estimate.ratio = rhs > 0.0 ? r.estimate.lhs / rhs : std::numeric_limits<double>::quiet_NaN();
    return r;
}

/// Noise-free linear equation dw + A w dt = f0 dt, w(0) = 0.
template <typename Scalar>
FieldPath<Scalar> solve_random_pde(const EllipticOperator<Scalar>& op, const FieldPath<Scalar>& f0) {
    const Field<Scalar> zero = Field<Scalar>::Zero(op.grid().node_count());
    return march_linear(op, zero, f0, Path<Scalar>{}, Path<Scalar>{}, NoisePath<Scalar>{}, f0.dt, f0.steps());
}

/// Shape checks and Assumption (O): S_0 <= xi at every node.
template <typename Scalar>
void check_problem(const ProblemData<Scalar>& data) {
    const auto& grid = data.grid();
    require_same_grid(grid, data.xi);
    if (data.obstacle.data.rows() != grid.node_count() || data.obstacle.layout.components != 1)
        throw DiscretizationMismatch("obstacle path is not a nodal path on the operator grid");
    if (data.obstacle.frames() < 2) throw ConfigurationError("obstacle path needs at least one time step");
    if (data.noise.modes != data.coeffs.modes)
        throw DiscretizationMismatch("noise has " + std::to_string(data.noise.modes) + " modes, coefficients expect " +
                                     std::to_string(data.coeffs.modes));
    if (data.noise.steps() != data.steps() || data.noise.dt != data.dt())
        throw DiscretizationMismatch("noise and obstacle use different time grids");
    for (Eigen::Index node : grid.interior_nodes()) {
        if (data.obstacle.data(node, 0) > data.xi[node]) {
            std::ostringstream msg;
            msg << "initial obstacle exceeds the initial condition at node " << node << " (S0 = "
                << data.obstacle.data(node, 0) << " > xi = " << data.xi[node] << ")";
            throw AssumptionError(msg.str());
        }
    }
}

/// Nodes/steps where S > S' (a warning, not an error, since S' is random).
template <typename Scalar>
std::optional<std::string> check_dominated(const FieldPath<Scalar>& obstacle, const FieldPath<Scalar>& dominator,
                                           Scalar tolerance = Scalar(1e-12)) {
    if (!obstacle.matches(dominator)) throw DiscretizationMismatch("obstacle and dominator paths differ in shape");
    Eigen::Index count = 0;
    Scalar worst(0);
    for (Eigen::Index k = 0; k < obstacle.frames(); ++k) {
        for (Eigen::Index i = 0; i < obstacle.data.rows(); ++i) {
            const Scalar excess = obstacle.data(i, k) - dominator.data(i, k);
            if (excess > tolerance) {
                ++count;
                worst = std::max(worst, excess);
            }
        }
    }
    if (count == 0) return std::nullopt;
    std::ostringstream msg;
    msg << "obstacle exceeds the dominator at " << count << " space-time nodes (max excess " << worst << ")";
    return msg.str();
}

namespace detail {

/// Marches the nonlinear scheme; `constrain(k, rhs_I, s_I, u_I, nu_I)`
/// performs the implicit solve of step k and returns (iterations, residual).
template <typename Scalar, typename Constrain>
SolveResult<Scalar> march(const ProblemData<Scalar>& data, const SolveOptions& options, Constrain&& constrain) {
    check_problem(data);
    if (options.validate) {
        ProbeOptions probe = options.probe;
        probe.horizon = static_cast<double>(data.obstacle.horizon());
        require_assumptions(validate_assumptions(data.coeffs, data.op.lambda(), data.grid(), probe));
    }
    const auto& op = data.op;
    const auto& grid = data.grid();
    const Scalar dt = data.dt();
    const Eigen::Index K = data.steps();

    SolveResult<Scalar> r;
    r.u = make_field_path(grid, dt, K);
    r.measure = zero_measure(grid, dt, K);
    r.diagnostics.iterations.reserve(static_cast<std::size_t>(K));
    r.diagnostics.residuals.reserve(static_cast<std::size_t>(K));

    Field<Scalar> u = data.xi;
    grid.clear_boundary(u);
    r.u.frame(0) = u;
    VectorX<Scalar> u_int = grid.restrict_interior(u);
    VectorX<Scalar> nu(grid.interior_count());
    for (Eigen::Index k = 0; k < K; ++k) {
        const Scalar t = r.u.time(k);
        const auto src = evaluate_sources(op, data.coeffs, t, u);
        const Field<Scalar> rhs = explicit_rhs(op, dt, u, src.f, src.g, noise_increment(src.h, data.noise, k));
        const VectorX<Scalar> s = grid.restrict_interior(Field<Scalar>(data.obstacle.frame(k + 1)));
        nu.setZero();
        const auto [iterations, residual] = constrain(k, grid.restrict_interior(rhs), s, u_int, nu);
        u = grid.extend_by_zero(u_int);
        r.u.frame(k + 1) = u;
        r.measure.weights.col(k) = nu;
        r.diagnostics.iterations.push_back(iterations);
        r.diagnostics.residuals.push_back(residual);
    }
    return r;
}

}  // namespace detail

/// The scheme without constraint (zero measure).
template <typename Scalar>
SolveResult<Scalar> solve_unconstrained(const ProblemData<Scalar>& data, const SolveOptions& options = {}) {
    const ImplicitStepper<Scalar> stepper(data.op, data.dt());
    return detail::march(data, options,
                         [&](Eigen::Index, const VectorX<Scalar>& rhs, const VectorX<Scalar>&, VectorX<Scalar>& u,
                             VectorX<Scalar>&) {
                             u = stepper.solve_interior(rhs);
                             return std::pair<long, double>{1, 0.0};
                         });
}

/// Penalized scheme: (I + dt A_h) u - dt n (u - S)^- = rhs per step, solved
/// by semismooth Newton on the active set {u < S}. nu^n = n (u - S)^-.
template <typename Scalar>
SolveResult<Scalar> solve_penalized(const ProblemData<Scalar>& data, Scalar n, const SolveOptions& options = {}) {
    if (!(n >= Scalar(1))) throw ConfigurationError("penalty parameter must be >= 1");
    const ImplicitStepper<Scalar> stepper(data.op, data.dt());
    const SparseMatrix<Scalar>& M = stepper.system();
    const Scalar dt = data.dt();
    const Scalar penalty = dt * n;
    SparseMatrix<Scalar> Mp = M;
    Eigen::SimplicialLDLT<SparseMatrix<Scalar>> ldlt;
    ldlt.analyzePattern(Mp);
    const Scalar tol = static_cast<Scalar>(options.newton_tolerance);

    auto residual = [&](const VectorX<Scalar>& rhs, const VectorX<Scalar>& s, const VectorX<Scalar>& u) {
        return static_cast<double>((M * u - penalty * (s - u).cwiseMax(Scalar(0)) - rhs).cwiseAbs().maxCoeff());
    };

    auto result = detail::march(
        data, options,
        [&](Eigen::Index k, const VectorX<Scalar>& rhs, const VectorX<Scalar>& s, VectorX<Scalar>& u,
            VectorX<Scalar>& nu) {
            u = stepper.solve_interior(rhs);
            std::vector<bool> active(static_cast<std::size_t>(u.size()));
            for (Eigen::Index i = 0; i < u.size(); ++i) active[i] = u[i] < s[i];
            long it = 0;
            bool converged = std::none_of(active.begin(), active.end(), [](bool a) { return a; });
            while (!converged) {
                if (++it > options.newton_max_iterations)
                    throw SolverError("penalty iteration did not converge at step " + std::to_string(k), k);
                VectorX<Scalar> b = rhs;
                for (Eigen::Index j = 0; j < Mp.outerSize(); ++j) {
                    for (typename SparseMatrix<Scalar>::InnerIterator p(Mp, j); p; ++p)
                        if (p.row() == j) p.valueRef() = M.coeff(j, j) + (active[j] ? penalty : Scalar(0));
                    if (active[j]) b[j] += penalty * s[j];
                }
                ldlt.factorize(Mp);
                if (ldlt.info() != Eigen::Success) throw SolverError("penalized system is not SPD", k);
                const VectorX<Scalar> next = ldlt.solve(b);
                const Scalar change = (next - u).cwiseAbs().maxCoeff();
                u = next;
                bool same = true;
                for (Eigen::Index i = 0; i < u.size(); ++i) {
                    const bool a = u[i] < s[i];
                    same = same && a == active[i];
                    active[i] = a;
                }
                converged = same || change <= tol * std::max(Scalar(1), u.cwiseAbs().maxCoeff());
            }
            nu = n * (s - u).cwiseMax(Scalar(0));
            return std::pair<long, double>{it, residual(rhs, s, u)};
        });
    return result;
}

/// Projected scheme: per step the LCP u >= S, r = (I + dt A_h) u - rhs >= 0,
/// r^T (u - S) = 0, by PSOR with active-set polish. nu = r / dt on contact.
template <typename Scalar>
SolveResult<Scalar> solve_projected(const ProblemData<Scalar>& data, const SolveOptions& options = {}) {
    const ImplicitStepper<Scalar> stepper(data.op, data.dt());
    const SparseMatrix<Scalar>& M = stepper.system();
    ProjectedSor<Scalar> lcp(M, options.psor);
    const Scalar dt = data.dt();
    const Scalar contact_tol = Scalar(10) * static_cast<Scalar>(options.psor.tolerance);

    return detail::march(data, options,
                         [&](Eigen::Index k, const VectorX<Scalar>& rhs, const VectorX<Scalar>& s, VectorX<Scalar>& u,
                             VectorX<Scalar>& nu) {
                             const LcpReport rep = lcp.solve(rhs, s, u);
                             if (!rep.converged)
                                 throw SolverError("PSOR did not converge in " + std::to_string(options.psor.max_sweeps) +
                                                       " sweeps at step " + std::to_string(k),
                                                   k);
                             const VectorX<Scalar> r = M * u - rhs;
                             for (Eigen::Index i = 0; i < u.size(); ++i) {
                                 const bool contact = rep.polished ? u[i] == s[i] : u[i] - s[i] <= contact_tol;
                                 nu[i] = contact ? std::max(r[i], Scalar(0)) / dt : Scalar(0);
                             }
                             return std::pair<long, double>{rep.sweeps, rep.residual};
                         });
}

/// |sum_{k,i} (u - S)(t_{k+1}, x_i) nu_{k,i} cell_measure dt|: the discrete
/// int (u - S) dnu. Each measure step pairs with the state it produced.
template <typename Scalar>
Scalar skorokhod_defect(const FieldPath<Scalar>& u, const FieldPath<Scalar>& S, const DiscreteMeasure<Scalar>& nu) {
    if (!u.matches(S)) throw DiscretizationMismatch("solution and obstacle paths differ in shape");
    if (nu.steps() != u.steps() || nu.grid.node_count() != u.data.rows())
        throw DiscretizationMismatch("measure does not match the solution path");
    const auto& grid = nu.grid;
    Scalar acc(0);
    for (Eigen::Index k = 0; k < nu.steps(); ++k) {
        for (Eigen::Index p = 0; p < grid.interior_count(); ++p) {
            const Eigen::Index node = grid.interior_nodes()[static_cast<std::size_t>(p)];
            acc += (u.data(node, k + 1) - S.data(node, k + 1)) * nu.weights(p, k);
        }
    }
    return std::abs(acc) * grid.cell_measure() * nu.dt;
}

}  // namespace rspde
