#include "rspde/coefficients.hpp"
#include "rspde/noise.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <memory>

using namespace rspde;
using Point = SmallVector<double>;

namespace {

CoefficientSet<double> lipschitz_set(double C, double alpha, double beta, int modes = 2) {
    CoefficientSet<double> c;
    c.modes = modes;
    c.C = C;
    c.alpha = alpha;
    c.beta = beta;
    c.f = [C](double, const Point& x, double y, const Point&) { return C * std::sin(y) + x[0]; };
    c.g = [alpha](double, const Point&, double, const Point& z) {
        Point out(z.size());
        for (int i = 0; i < z.size(); ++i) out[i] = alpha * std::tanh(z[i]);
        return out;
    };
    c.h = [beta](double, const Point&, double, const Point& z, Eigen::Ref<VectorX<double>> out) {
        out.setZero();
        out[0] = beta * std::tanh(z[0]);
    };
    return c;
}

}  // namespace

TEST(Noise, SameSeedIsBitIdentical) {
    const auto a = sample_noise(4, 0.01, 100, 42);
    const auto b = sample_noise(4, 0.01, 100, 42);
    EXPECT_TRUE((a.increments.array() == b.increments.array()).all());
    const auto c = sample_noise(4, 0.01, 100, 43);
    EXPECT_FALSE((a.increments.array() == c.increments.array()).all());
}

TEST(Noise, UnitVarianceAndIndependentModes) {
    const double dt = 0.001;
    const auto w = sample_noise(2, dt, 100000, 7);
    const double var = w.increments.row(0).squaredNorm() / (dt * 100000.0);
    EXPECT_GE(var, 0.98);
    EXPECT_LE(var, 1.02);
    const VectorX<double> a = w.increments.row(0).transpose() / std::sqrt(dt);
    const VectorX<double> b = w.increments.row(1).transpose() / std::sqrt(dt);
    const double ma = a.mean(), mb = b.mean();
    const double corr = ((a.array() - ma) * (b.array() - mb)).sum() /
                        std::sqrt((a.array() - ma).square().sum() * (b.array() - mb).square().sum());
    EXPECT_GE(corr, -0.02);
    EXPECT_LE(corr, 0.02);
}

TEST(Noise, TruncationIsPrefix) {
    const auto full = sample_noise(3, 0.02, 200, 99);
    const auto half = sample_noise(3, 0.02, 100, 99);
    EXPECT_TRUE((full.increments.leftCols(100).array() == half.increments.array()).all());
}

TEST(Noise, CoarsenSumsIncrements) {
    const auto fine = sample_noise(2, 0.01, 8, 5);
    const auto coarse = coarsen(fine, 2);
    EXPECT_DOUBLE_EQ(coarse.dt, 0.02);
    EXPECT_EQ(coarse.steps(), 4);
    EXPECT_DOUBLE_EQ(coarse.increments(1, 2), fine.increments(1, 4) + fine.increments(1, 5));
    EXPECT_THROW(coarsen(fine, 3), ConfigurationError);
}

TEST(Noise, BinaryRoundTrip) {
    const auto w = sample_noise(3, 0.125, 17, 12345);
    const auto file = (std::filesystem::temp_directory_path() / "rspde_noise_roundtrip.bin").string();
    write_noise(file, w);
    EXPECT_EQ(std::filesystem::file_size(file), 32u + 8u * 3u * 17u);
    const auto r = read_noise<double>(file);
    std::filesystem::remove(file);
    EXPECT_EQ(r.modes, 3);
    EXPECT_EQ(r.seed, 12345u);
    EXPECT_DOUBLE_EQ(r.dt, 0.125);
    EXPECT_TRUE((r.increments.array() == w.increments.array()).all());
}

TEST(Noise, RejectsBadArguments) {
    EXPECT_THROW(sample_noise(0, 0.1, 10, 1), ConfigurationError);
    EXPECT_THROW(sample_noise(1, 0.0, 10, 1), ConfigurationError);
}

TEST(Validate, ContractionArithmetic) {
    const auto g = build_grid<double>(1, {0.0, 1.0}, {8});
    EXPECT_TRUE(validate_assumptions(lipschitz_set(1.0, 0.1, 0.5), 0.5, g).passed());
    // alpha = lambda, beta = 0: 2 lambda < 2 lambda is false
    const auto r = validate_assumptions(lipschitz_set(1.0, 0.5, 0.0), 0.5, g);
    EXPECT_FALSE(r.passed());
    EXPECT_FALSE(r.find("H4 contraction")->passed);
    EXPECT_TRUE(r.find("H2 g Lipschitz in z (alpha)")->passed);
}

TEST(Validate, ProbeDetectsUnderstatedConstant) {
    const auto g = build_grid<double>(1, {0.0, 1.0}, {8});
    auto c = zero_coefficients<double>(1, 1);
    c.f = [](double, const Point&, double y, const Point&) { return y; };
    const auto r = validate_assumptions(c, 1.0, g);
    EXPECT_FALSE(r.passed());
    const auto* item = r.find("H1 f Lipschitz (C)");
    ASSERT_NE(item, nullptr);
    EXPECT_FALSE(item->passed);
    EXPECT_NEAR(item->worst_observed, 1.0, 1e-9);
    EXPECT_THROW(require_assumptions(r), AssumptionError);
}

TEST(Validate, DetectsImpureCoefficient) {
    const auto g = build_grid<double>(1, {0.0, 1.0}, {8});
    auto c = zero_coefficients<double>(1, 1);
    auto counter = std::make_shared<int>(0);
    c.f = [counter](double, const Point&, double, const Point&) { return 1e-3 * (++*counter % 2); };
    c.C = 1e6;
    const auto r = validate_assumptions(c, 1.0, g);
    EXPECT_FALSE(r.find("purity")->passed);
}

TEST(Validate, MonotoneInLipschitzConstants) {
    const auto g = build_grid<double>(1, {0.0, 1.0}, {8});
    auto c = lipschitz_set(0.7, 0.1, 0.3);
    ASSERT_TRUE(validate_assumptions(c, 1.0, g).passed());
    for (double C : {0.8, 2.0, 50.0}) {
        c.C = C;
        EXPECT_TRUE(validate_assumptions(c, 1.0, g).passed());
    }
}

TEST(Integrability, DeterministicDataSingleSample) {
    const auto g = build_grid<double>(1, {0.0, 1.0}, {16});
    const auto op = laplacian(g);
    const auto tb = make_toolbox(g);
    const auto zp = zero_point_data(op, lipschitz_set(1.0, 0.1, 0.3), 0.05, 20);
    IntegrabilitySample<double> s{g.sample([](const Point& x) { return x[0]; }), zp.f0, zp.g0, zp.h0};
    const auto one = check_integrability<double>({s}, g, tb, 1.0);
    const auto two = check_integrability<double>({s, s}, g, tb, 1.0);
    ASSERT_EQ(one.terms.size(), 4u);
    EXPECT_TRUE(one.all_finite());
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(one.terms[i].mean, two.terms[i].mean, 1e-14);
    const double xi = lp_norm(g, s.xi, 2.0);
    EXPECT_NEAR(one.terms[0].mean, xi * xi, 1e-14);
    // f0 = x, g0 = 0, h0 = 0
    EXPECT_GT(one.terms[1].mean, 0.0);
    EXPECT_EQ(one.terms[2].mean, 0.0);
    EXPECT_EQ(one.terms[3].mean, 0.0);
}

TEST(Integrability, ZeroSourceGivesZeroDualTerm) {
    const auto g = build_grid<double>(1, {0.0, 1.0}, {16});
    const auto op = laplacian(g);
    const auto zp = zero_point_data(op, zero_coefficients<double>(2, 1), 0.1, 10);
    const auto r = check_integrability<double>({{Field<double>::Zero(g.node_count()), zp.f0, zp.g0, zp.h0}}, g,
                                               make_toolbox(g), 1.0);
    EXPECT_EQ(r.terms[1].mean, 0.0);
}

TEST(Integrability, SingularInTimeSourceIsDualIntegrable) {
    // f0 = t^(-1/4) phi(x): the (2,1) norm stays finite while sup-in-time blows up.
    const auto g = build_grid<double>(1, {0.0, 1.0}, {32});
    const double dt = 1e-4;
    const Eigen::Index steps = 10000;
    const auto phi = [](const Point& x) { return std::sin(std::numbers::pi * x[0]); };
    // Evaluate the time factor at the cell midpoint so the left rule sees a finite value.
    const auto f0 = sample_path(g, dt, steps, [&](double t, const Point& x) {
        return std::pow(t + 0.5 * dt, -0.25) * phi(x);
    });
    const double phi_l2 = lp_norm(g, g.sample(phi), 2.0);
    // int_0^1 t^(-1/4) dt = 4/3
    EXPECT_NEAR(mixed_norm(f0, 2.0, 1.0, 1.0), 4.0 / 3.0 * phi_l2, 2e-3);
    const auto tb = make_toolbox(g);
    EXPECT_LE(dual_sharp_upper(f0, 1.0, tb), 4.0 / 3.0 * phi_l2 * (1 + 2e-3));
    EXPECT_GT(mixed_norm(f0, 2.0, std::numeric_limits<double>::infinity(), 1.0), 8.0 * phi_l2);
}
