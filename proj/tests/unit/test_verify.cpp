#include "rspde/verify.hpp"
#include "support/problems.hpp"

#include <gtest/gtest.h>

using namespace rspde;
using namespace rspde::testing;

namespace {

SolveOptions unchecked() {
    SolveOptions o;
    o.validate = false;
    return o;
}

FieldPath<double> interior_test_function(const ProblemData<double>& d) {
    auto phi = sample_path(d.grid(), d.dt(), d.steps(),
                           [](double t, const Point& x) { return std::sin(kPi * x[0]) * (1 + t * x[0]); });
    for (Eigen::Index b : d.grid().boundary_nodes()) phi.data.row(b).setZero();
    return phi;
}

/// Mean |terminal| of an identity at K and 2K steps (shared noise), 1D.
template <typename Make, typename Solve, typename Identity>
double refinement_factor(int seeds, Make make, Solve solve, Identity identity) {
    double coarse = 0, fine = 0;
    for (int seed = 1; seed <= seeds; ++seed) {
        auto f = make(seed, true);
        auto c = make(seed, false);
        c.noise = coarsen(f.noise, 2);
        coarse += std::abs(identity(solve(c), c).terminal);
        fine += std::abs(identity(solve(f), f).terminal);
    }
    return coarse / fine;
}

CoefficientSet<double> comparison_set(double offset) {
    CoefficientSet<double> c;
    c.modes = 2;
    c.C = 0.5;
    c.f = [offset](double, const Point&, double y, const Point&) { return 0.5 * std::sin(y) - 0.2 + offset; };
    c.g = [](double, const Point&, double, const Point&) { return Point(Point::Zero(1)); };
    c.h = [](double, const Point& x, double, const Point&, Eigen::Ref<VectorX<double>> out) {
        for (int j = 0; j < out.size(); ++j) out[j] = 0.4 * std::sin((j + 1) * kPi * x[0]) / (j + 1);
    };
    return c;
}

std::vector<std::uint64_t> seed_range(int n) {
    std::vector<std::uint64_t> s;
    for (int i = 1; i <= n; ++i) s.push_back(static_cast<std::uint64_t>(i));
    return s;
}

}  // namespace

TEST(ItoSquare, ExactForStateIndependentCoefficients) {
    const auto d = make_problem(32, 50, 0.25, 0.2, 3, state_independent_set());
    const auto r = solve_projected(d, unchecked());
    const auto rep = ito_square_residual(r, d);
    EXPECT_EQ(rep.steps, 50);
    EXPECT_LE(rep.max_step, 1e-9);
    EXPECT_NEAR(rep.terminal, rep.cumulative.back(), 0.0);
}

TEST(ItoSquare, ExactUnconstrained2D) {
    const auto grid = build_grid<double>(2, {0.0, 1.0, 0.0, 1.0}, {8, 8});
    ProblemData<double> d;
    d.op = laplacian(grid);
    d.xi = grid.sample([](const Point& x) { return x[0] * (1 - x[0]) * x[1]; });
    d.coeffs = zero_coefficients<double>(1, 2);
    d.coeffs.f = [](double, const Point& x, double, const Point&) { return x[1] - 0.5; };
    d.coeffs.h = [](double, const Point& x, double, const Point&, Eigen::Ref<VectorX<double>> out) { out[0] = x[0]; };
    d.obstacle = sample_path(grid, 0.01, 20, [](double, const Point&) { return -1e6; });
    d.noise = sample_noise(1, 0.01, 20, 5);
    EXPECT_LE(ito_square_residual(solve_unconstrained(d), d).max_step, 1e-9);
}

TEST(ItoSquare, NonlinearResidualHalvesWithStep) {
    auto make = [](int seed, bool fine) { return make_problem(64, fine ? 128 : 64, 0.25, 0.2, seed, nonlinear_set()); };
    const double factor = refinement_factor(
        8, make, [](const ProblemData<double>& d) { return solve_projected(d); },
        [](const auto& r, const auto& d) { return ito_square_residual(r, d); });
    EXPECT_GE(factor, 1.5);
    EXPECT_LE(factor, 3.0);
}

TEST(PositivePart, ExactWhenSolutionStaysPositive) {
    const auto d = make_problem(32, 50, 0.25, 0.2, 4, state_independent_set());
    const auto r = solve_projected(d, unchecked());
    ASSERT_GE(r.u.data.minCoeff(), 0.0);
    EXPECT_LE(positive_part_residual(r, d).max_step, 1e-9);
}

TEST(PositivePart, VanishesWhenSolutionNonpositive) {
    auto d = make_problem(32, 40, 0.25, -1e6, 4, zero_coefficients<double>(1, 1), 0.0);
    d.xi = -d.xi;
    d.coeffs.f = [](double, const Point&, double, const Point&) { return -1.0; };
    const auto r = solve_projected(d);
    const auto rep = positive_part_residual(r, d);
    EXPECT_EQ(rep.max_abs, 0.0);
}

TEST(PositivePart, SignChangingJointRefinement) {
    auto make = [](int seed, bool fine) {
        auto d = make_problem(fine ? 64 : 32, fine ? 128 : 64, 0.25, -1e6, seed, nonlinear_set());
        d.xi = d.grid().sample([](const Point& x) { return std::sin(2 * kPi * x[0]); });
        return d;
    };
    const double factor = refinement_factor(
        8, make, [](const ProblemData<double>& d) { return solve_unconstrained(d); },
        [](const auto& r, const auto& d) { return positive_part_residual(r, d); });
    EXPECT_GE(factor, 1.3);
    EXPECT_LE(factor, 3.0);
}

TEST(WeakForm, ExactForStateIndependentCoefficients) {
    const auto d = make_problem(32, 40, 0.25, 0.2, 6, state_independent_set());
    const auto r = solve_projected(d, unchecked());
    const auto rep = weak_form_residual(r, d, interior_test_function(d));
    EXPECT_LE(rep.max_abs, 1e-12);
    EXPECT_EQ(rep.cumulative.size(), 40u);
}

TEST(WeakForm, NonlinearResidualIsSmall) {
    const auto d = make_problem(32, 200, 0.25, 0.2, 6, nonlinear_set());
    const auto rep = weak_form_residual(solve_projected(d), d, interior_test_function(d));
    EXPECT_LT(rep.max_abs, 1e-2);
    EXPECT_GT(rep.max_abs, 0.0);
}

TEST(WeakForm, RejectsBadTestFunctions) {
    const auto d = make_problem(16, 10, 0.1, 0.2, 6, state_independent_set());
    const auto r = solve_projected(d, unchecked());
    auto phi = make_field_path(d.grid(), d.dt(), d.steps());
    phi.data.setOnes();
    EXPECT_THROW(weak_form_residual(r, d, phi), std::invalid_argument);
    const auto short_phi = make_field_path(d.grid(), d.dt(), 5);
    EXPECT_THROW(weak_form_residual(r, d, short_phi), DiscretizationMismatch);
}

TEST(Residual, MismatchedResultThrows) {
    const auto d = make_problem(16, 10, 0.1, 0.2, 6, state_independent_set());
    const auto other = make_problem(16, 12, 0.1, 0.2, 6, state_independent_set());
    EXPECT_THROW(ito_square_residual(solve_projected(other, unchecked()), d), DiscretizationMismatch);
}

TEST(Estimate, AggregateMeansAndErrors) {
    std::vector<EstimateSample> s(2);
    s[0].lhs = 1.0;
    s[0].ingredients = {{"a", 1.0}, {"b", 0.0}};
    s[1].lhs = 3.0;
    s[1].ingredients = {{"a", 3.0}, {"b", 2.0}};
    const auto r = aggregate_estimate("x", 1.0, 2.0, s);
    EXPECT_DOUBLE_EQ(r.lhs, 2.0);
    EXPECT_DOUBLE_EQ(r.lhs_stderr, 1.0);  // sample sd sqrt(2) over sqrt(2)
    EXPECT_DOUBLE_EQ(r.rhs_sum, 3.0);
    ASSERT_TRUE(r.implied_constant);
    EXPECT_DOUBLE_EQ(*r.implied_constant, 2.0 / 6.0);
    EXPECT_THROW(aggregate_estimate("x", 1.0, 1.0, {}), std::invalid_argument);
}

TEST(Estimate, PositivePartVanishesForNonpositiveData) {
    auto d = make_problem(32, 40, 0.25, -1.0, 8, zero_coefficients<double>(1, 1), 0.0);
    d.xi = -d.xi;
    d.obstacle.frame(0) = d.obstacle.frame(0).cwiseMin(d.xi);
    d.coeffs.f = [](double, const Point&, double, const Point&) { return -1.0; };
    DominatorData<double> dom;
    dom.initial = Field<double>::Zero(d.grid().node_count());
    d.dominator = dom;
    const auto S = solve_linear_spde(d).path;
    const auto tb = make_toolbox(d.grid());
    const auto e = positive_part_sample(solve_projected(d), d, S, 0.25, tb);
    EXPECT_LE(e.lhs, 1e-12);
    const auto rep = positive_part_report(0.25, {e});
    EXPECT_LE(rep.rhs_sum, 1e-12);
    EXPECT_FALSE(rep.implied_constant);
}

TEST(Estimate, AprioriBoundedByDataOnLinearProblem) {
    auto d = make_problem(32, 64, 0.25, -1e6, 9, state_independent_set());
    DominatorData<double> dom;
    dom.initial = Field<double>::Zero(d.grid().node_count());
    d.dominator = dom;
    const auto S = solve_linear_spde(d).path;
    const auto tb = make_toolbox(d.grid());
    const auto e = apriori_sample(solve_unconstrained(d, unchecked()), d, S, 0.25, tb);
    EXPECT_EQ(e.ingredients.size(), 8u);
    EXPECT_GT(e.lhs, 0.0);
    const auto rep = apriori_report(0.25, {e});
    ASSERT_TRUE(rep.implied_constant);
    EXPECT_LT(*rep.implied_constant, 50.0);
}

TEST(Estimate, NeedsDominator) {
    const auto d = make_problem(16, 10, 0.1, 0.2, 6, state_independent_set());
    const auto r = solve_projected(d, unchecked());
    EXPECT_THROW(apriori_sample(r, d, r.u, 0.1, make_toolbox(d.grid())), ConfigurationError);
}

TEST(Comparison, OrderedDataGiveOrderedSolutions) {
    const auto seeds = seed_range(10);
    const auto base = make_problem(32, 64, 0.25, 0.2, 1, comparison_set(0.0));
    {
        auto up = base;
        up.xi = up.xi.array() + 0.1;
        EXPECT_GE(comparison_experiment(base, up, seeds).min_gap, -1e-6);
    }
    {
        auto up = make_problem(32, 64, 0.25, 0.2, 1, comparison_set(0.3));
        EXPECT_GE(comparison_experiment(base, up, seeds).min_gap, -1e-6);
    }
    {
        auto up = base;
        up.obstacle.data.array() += 0.1;
        up.obstacle.frame(0) = up.obstacle.frame(0).cwiseMin(up.xi);
        const auto r = comparison_experiment(base, up, seeds);
        EXPECT_GE(r.min_gap, -1e-6);
        EXPECT_EQ(r.sample_min_gap.size(), 10u);
    }
}

TEST(Comparison, RefusesUnorderedData) {
    const auto seeds = seed_range(2);
    const auto base = make_problem(16, 16, 0.1, 0.2, 1, comparison_set(0.0));
    auto low_xi = base;
    low_xi.xi = low_xi.xi.array() - 0.1;
    EXPECT_THROW(comparison_experiment(base, low_xi, seeds), AssumptionError);
    const auto low_f = make_problem(16, 16, 0.1, 0.2, 1, comparison_set(-0.1));
    EXPECT_THROW(comparison_experiment(base, low_f, seeds), AssumptionError);
    auto other_h = base;
    other_h.coeffs = nonlinear_set();
    EXPECT_THROW(comparison_experiment(base, other_h, seeds), AssumptionError);
}
