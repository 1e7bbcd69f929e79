#include "rspde/elliptic_operator.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace rspde;
using Grid1 = Grid<double>;

namespace {

Field<double> random_field(const Grid1& g, std::mt19937_64& gen) {
    std::normal_distribution<double> n(0.0, 1.0);
    return g.sample([&](const SmallVector<double>&) { return n(gen); });
}

}  // namespace

TEST(BuildGrid, OneDimensionalSpacing) {
    const auto g = build_grid<double>(1, {0.0, 1.0}, {4});
    EXPECT_DOUBLE_EQ(g.spacing(0), 0.25);
    EXPECT_EQ(g.interior_count(), 3);
    EXPECT_EQ(g.node_count(), 5);
    EXPECT_DOUBLE_EQ(g.cell_measure(), 0.25);
}

TEST(BuildGrid, TwoDimensionalInteriorCount) {
    const auto g = build_grid<double>(2, {0.0, 1.0, 0.0, 1.0}, {4, 4});
    EXPECT_EQ(g.interior_count(), 9);
    EXPECT_EQ(g.interior_count() + static_cast<Eigen::Index>(g.boundary_nodes().size()), g.node_count());
    EXPECT_DOUBLE_EQ(g.cell_measure(), 1.0 / 16.0);
    // x runs fastest
    EXPECT_DOUBLE_EQ(g.coordinate(1)[0], 0.25);
    EXPECT_DOUBLE_EQ(g.coordinate(5)[1], 0.25);
}

TEST(BuildGrid, RejectsBadInput) {
    EXPECT_THROW(build_grid<double>(1, {0.0, 1.0}, {2}), ConfigurationError);
    EXPECT_THROW(build_grid<double>(1, {1.0, 1.0}, {8}), ConfigurationError);
    EXPECT_THROW(build_grid<double>(3, {0.0, 1.0, 0.0, 1.0, 0.0, 1.0}, {4, 4, 4}), ConfigurationError);
}

TEST(BuildGrid, TrapezoidWeightsIntegrateOne) {
    const auto g = build_grid<double>(2, {0.0, 2.0, -1.0, 0.5}, {5, 7});
    EXPECT_NEAR(g.quadrature_weights().sum(), g.volume(), 1e-14);
}

TEST(AssembleOperator, LaplacianStencil1D) {
    const auto g = build_grid<double>(1, {0.0, 1.0}, {8});
    const auto op = laplacian(g);
    const double h = g.spacing(0);
    const MatrixX<double> A(op.stiffness());
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        EXPECT_NEAR(A(i, i), 2.0 / (h * h), 1e-10);
        if (i + 1 < A.rows()) { EXPECT_NEAR(A(i, i + 1), -1.0 / (h * h), 1e-10); }
        if (i + 2 < A.rows()) { EXPECT_EQ(A(i, i + 2), 0.0); }
    }
}

TEST(AssembleOperator, LaplacianStencil2DIsFivePoint) {
    const auto g = build_grid<double>(2, {0.0, 1.0, 0.0, 1.0}, {6, 6});
    const auto op = laplacian(g);
    const MatrixX<double> A(op.stiffness());
    const double h2 = g.spacing(0) * g.spacing(0);
    const auto centre = g.interior_position(g.node_at(3, 3));
    EXPECT_NEAR(A(centre, centre), 4.0 / h2, 1e-9);
    EXPECT_NEAR(A(centre, g.interior_position(g.node_at(2, 3))), -1.0 / h2, 1e-9);
    EXPECT_NEAR(A(centre, g.interior_position(g.node_at(3, 4))), -1.0 / h2, 1e-9);
    EXPECT_NEAR(A(centre, g.interior_position(g.node_at(4, 4))), 0.0, 1e-9);
}

TEST(AssembleOperator, IdentityProbePasses) {
    const auto g = build_grid<double>(2, {0.0, 1.0, 0.0, 1.0}, {4, 4});
    EXPECT_NO_THROW(assemble_operator<double>(g, identity_coefficient<double>(2), 1.0, 1.0));
}

TEST(AssembleOperator, RejectsAsymmetricCoefficient) {
    const auto g = build_grid<double>(2, {0.0, 1.0, 0.0, 1.0}, {4, 4});
    CoefficientMatrix<double> a(2, 2);
    a << 1.0, 0.1, 0.2, 1.0;
    EXPECT_THROW(assemble_operator<double>(g, constant_coefficient<double>(a), 0.5, 2.0), ConfigurationError);
}

TEST(AssembleOperator, RejectsEllipticityViolation) {
    const auto g = build_grid<double>(1, {0.0, 1.0}, {8});
    CoefficientMatrix<double> a(1, 1);
    a << 0.4;
    EXPECT_THROW(assemble_operator<double>(g, constant_coefficient<double>(a), 0.5, 1.0), ConfigurationError);
}

TEST(AssembleOperator, RejectsStrongAnisotropyBreakingMMatrix) {
    const auto g = build_grid<double>(2, {0.0, 1.0, 0.0, 1.0}, {4, 4});
    CoefficientMatrix<double> a(2, 2);
    a << 0.5, 0.8, 0.8, 2.0;
    EXPECT_THROW(assemble_operator<double>(g, constant_coefficient<double>(a), 0.1, 2.5), ConfigurationError);
}

TEST(AssembleOperator, CrossTermsKeepMMatrixForEitherSign) {
    const auto g = build_grid<double>(2, {0.0, 1.0, 0.0, 1.0}, {5, 5});
    for (double c : {-0.3, 0.3}) {
        CoefficientMatrix<double> a(2, 2);
        a << 1.0, c, c, 1.0;
        const auto op = assemble_operator<double>(g, constant_coefficient<double>(a), 0.6, 1.4);
        const MatrixX<double> A(op.stiffness());
        for (Eigen::Index i = 0; i < A.rows(); ++i)
            for (Eigen::Index j = 0; j < A.cols(); ++j)
                if (i != j) { EXPECT_LE(A(i, j), 1e-12); }
        EXPECT_LT((A - A.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(AssembleOperator, OnesGiveBoundaryFluxOnly) {
    const auto g = build_grid<double>(2, {0.0, 1.0, 0.0, 1.0}, {6, 6});
    const auto op = laplacian(g);
    const VectorX<double> flux = op.stiffness() * VectorX<double>::Ones(g.interior_count());
    for (Eigen::Index p = 0; p < g.interior_count(); ++p) {
        const auto ij = g.multi_index(g.interior_nodes()[static_cast<std::size_t>(p)]);
        const bool next_to_boundary = ij[0] == 1 || ij[0] == 5 || ij[1] == 1 || ij[1] == 5;
        if (next_to_boundary)
            EXPECT_GT(flux[p], 0.0);
        else
            EXPECT_NEAR(flux[p], 0.0, 1e-9);
    }
}

TEST(Energy, ZeroAndHat) {
    const auto g = build_grid<double>(1, {0.0, 1.0}, {10});
    const auto op = laplacian(g);
    const Field<double> zero = Field<double>::Zero(g.node_count());
    EXPECT_EQ(energy(op, zero, zero), 0.0);
    Field<double> hat = zero;
    hat[5] = 1.0;
    EXPECT_NEAR(energy(op, hat), 2.0 / g.spacing(0), 1e-10);
}

TEST(Energy, SymmetricAndBetweenEllipticityBounds) {
    const auto g = build_grid<double>(2, {0.0, 1.0, 0.0, 1.0}, {7, 6});
    const double lambda = 0.5, Lambda = 2.5;
    CoefficientField<double> a = [](const SmallVector<double>& x) {
        CoefficientMatrix<double> m(2, 2);
        m << 1.5 + 0.5 * std::sin(3 * x[0]), 0.2 * x[1], 0.2 * x[1], 1.0 + 0.3 * x[0];
        return m;
    };
    const auto op = assemble_operator<double>(g, a, lambda, Lambda);
    const auto plain = laplacian(g);
    std::mt19937_64 gen(7);
    for (int s = 0; s < 200; ++s) {
        const Field<double> u = random_field(g, gen);
        const Field<double> v = random_field(g, gen);
        EXPECT_NEAR(energy(op, u, v), energy(op, v, u), 1e-9 * (1 + std::abs(energy(op, u, v))));
        const double grad2 = gradient_norm_squared(plain, u);
        EXPECT_GE(energy(op, u), lambda * grad2 * (1 - 1e-12));
        EXPECT_LE(energy(op, u), Lambda * grad2 * (1 + 1e-12));
    }
}

TEST(Energy, GridMismatchThrows) {
    const auto g = build_grid<double>(1, {0.0, 1.0}, {10});
    const auto op = laplacian(g);
    EXPECT_THROW(energy(op, Field<double>(Field<double>::Zero(5)), Field<double>(Field<double>::Zero(11))), DiscretizationMismatch);
}

TEST(Divergence, AdjointOfGradient) {
    const auto g = build_grid<double>(2, {0.0, 1.0, 0.0, 1.0}, {5, 4});
    const auto op = laplacian(g);
    std::mt19937_64 gen(3);
    std::normal_distribution<double> n(0.0, 1.0);
    VectorX<double> flux(op.element_count() * 2);
    for (auto& v : flux) v = n(gen);
    const Field<double> phi = random_field(g, gen);
    const Field<double> div = divergence(op, flux);
    const VectorX<double> grad = gradient(op, phi);
    double lhs = 0, rhs = 0;
    for (Eigen::Index i = 0; i < g.node_count(); ++i) lhs += g.quadrature_weights()[i] * div[i] * phi[i];
    for (Eigen::Index e = 0; e < op.element_count(); ++e)
        rhs -= op.element_weights()[e] * flux.segment(2 * e, 2).dot(grad.segment(2 * e, 2));
    EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(SobolevRatio, HatMatchesHandQuadrature) {
    const auto g = build_grid<double>(1, {0.0, 1.0}, {16});
    Field<double> hat = Field<double>::Zero(g.node_count());
    hat[8] = 1.0;
    // sup |u| = 1, int |u'|^2 = 2 / h
    EXPECT_NEAR(sobolev_ratio(g, hat), std::sqrt(g.spacing(0) / 2.0), 1e-14);
}

TEST(SobolevRatio, BoundedByHalfAndScaleInvariant) {
    const auto g = build_grid<double>(1, {0.0, 1.0}, {64});
    std::mt19937_64 gen(11);
    for (int s = 0; s < 200; ++s) {
        const Field<double> u = random_field(g, gen);
        const double r = sobolev_ratio(g, u);
        EXPECT_LE(r, 0.5 * (1 + 1e-6));
        EXPECT_NEAR(sobolev_ratio(g, Field<double>(-3.5 * u)), r, 1e-13);
    }
}

TEST(SobolevRatio, ZeroFieldIsUndefined) {
    const auto g = build_grid<double>(1, {0.0, 1.0}, {8});
    EXPECT_THROW(sobolev_ratio(g, Field<double>(Field<double>::Zero(g.node_count()))), std::domain_error);
}

TEST(SobolevRatio, TwoDimensionalUsesConfiguredExponent) {
    const auto g = build_grid<double>(2, {0.0, 1.0, 0.0, 1.0}, {8, 8});
    const Field<double> u = g.sample([](const SmallVector<double>& x) { return x[0] * (1 - x[0]) * x[1] * (1 - x[1]); });
    const auto op = laplacian(g);
    EXPECT_NEAR(sobolev_ratio(g, u, 6.0), lp_norm(g, u, 6.0) / std::sqrt(gradient_norm_squared(op, u)), 1e-14);
    EXPECT_THROW(sobolev_ratio(g, u, 2.0), ConfigurationError);
}
