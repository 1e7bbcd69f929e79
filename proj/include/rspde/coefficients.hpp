#pragma once

#include "rspde/norms.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace rspde {

/// Random-field coefficients of the equation, evaluated pointwise at
/// (t, x, y, z) with y = u(t, x) and z = grad u(t, x).
///
/// f is scalar, g is R^d-valued, h writes its J noise components into `out`.
/// C, alpha, beta are the declared Lipschitz constants: C in y for all three
/// maps (and in z for f), alpha for g in z, beta (l^2) for h in z.
template <typename Scalar>
struct CoefficientSet {
    using Point = SmallVector<Scalar>;
    using ScalarMap = std::function<Scalar(Scalar, const Point&, Scalar, const Point&)>;
    using FluxMap = std::function<Point(Scalar, const Point&, Scalar, const Point&)>;
    using NoiseMap = std::function<void(Scalar, const Point&, Scalar, const Point&, Eigen::Ref<VectorX<Scalar>>)>;

    int modes = 1;
    ScalarMap f;
    FluxMap g;
    NoiseMap h;
    Scalar C = Scalar(0);
    Scalar alpha = Scalar(0);
    Scalar beta = Scalar(0);
};

/// f = g = h = 0.
template <typename Scalar>
CoefficientSet<Scalar> zero_coefficients(int modes, int dim) {
    using Point = SmallVector<Scalar>;
    CoefficientSet<Scalar> c;
    c.modes = modes;
    c.f = [](Scalar, const Point&, Scalar, const Point&) { return Scalar(0); };
    c.g = [dim](Scalar, const Point&, Scalar, const Point&) { return Point(Point::Zero(dim)); };
    c.h = [](Scalar, const Point&, Scalar, const Point&, Eigen::Ref<VectorX<Scalar>> out) { out.setZero(); };
    return c;
}

struct AssumptionItem {
    std::string name;
    bool passed = true;
    double declared = 0.0;
    double worst_observed = 0.0;
    std::string detail;
};

/// Outcome of the (H1)-(H4) checks plus the purity probe.
struct ValidationReport {
    std::vector<AssumptionItem> items;

    bool passed() const {
        return std::all_of(items.begin(), items.end(), [](const AssumptionItem& i) { return i.passed; });
    }

    const AssumptionItem* find(const std::string& name) const {
        for (const auto& i : items)
            if (i.name == name) return &i;
        return nullptr;
    }

    std::string failures() const {
        std::string out;
        for (const auto& i : items) {
            if (i.passed) continue;
            if (!out.empty()) out += "; ";
            out += i.name + ": " + i.detail;
        }
        return out;
    }
};

struct ProbeOptions {
    int samples = 2000;
    std::uint64_t seed = 0x5eedull;
    double y_range = 10.0;
    double z_range = 10.0;
    double horizon = 1.0;
    double relative_slack = 1e-6;
};

namespace detail {

template <typename Scalar>
struct ProbeQuotients {
    double f_y = 0, f_z = 0, g_y = 0, g_z = 0, h_y = 0, h_z = 0;
    bool pure = true;
};

template <typename Scalar>
ProbeQuotients<Scalar> probe_lipschitz(const CoefficientSet<Scalar>& c, const Grid<Scalar>& grid,
                                       const ProbeOptions& opt) {
    using Point = SmallVector<Scalar>;
    const int d = grid.dim();
    std::mt19937_64 gen(opt.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return static_cast<Scalar>(lo + (hi - lo) * unit(gen)); };

    ProbeQuotients<Scalar> q;
    VectorX<Scalar> h1(c.modes), h2(c.modes), h3(c.modes);
    for (int s = 0; s < opt.samples; ++s) {
        const Scalar t = uniform(0.0, opt.horizon);
        Point x(d), z(d), z2(d);
        for (int a = 0; a < d; ++a) {
            x[a] = uniform(static_cast<double>(grid.lower(a)), static_cast<double>(grid.upper(a)));
            z[a] = uniform(-opt.z_range, opt.z_range);
        }
        const Scalar y = uniform(-opt.y_range, opt.y_range);
        // Alternate wide and local perturbations.
        const double scale = (s % 3 == 0) ? 1.0 : std::pow(10.0, -1.0 - 5.0 * unit(gen));
        const Scalar dy = static_cast<Scalar>(scale * (2.0 * unit(gen) - 1.0) * opt.y_range);
        for (int a = 0; a < d; ++a) z2[a] = z[a] + static_cast<Scalar>(scale * (2.0 * unit(gen) - 1.0) * opt.z_range);
        const double dz = static_cast<double>((z2 - z).norm());

        const Scalar f0 = c.f(t, x, y, z);
        const Point g0 = c.g(t, x, y, z);
        c.h(t, x, y, z, h1);
        if (c.f(t, x, y, z) != f0) q.pure = false;
        c.h(t, x, y, z, h3);
        if (h3 != h1) q.pure = false;

        if (dy != Scalar(0)) {
            const double ady = std::abs(static_cast<double>(dy));
            q.f_y = std::max(q.f_y, std::abs(static_cast<double>(c.f(t, x, y + dy, z) - f0)) / ady);
            q.g_y = std::max(q.g_y, static_cast<double>((c.g(t, x, y + dy, z) - g0).norm()) / ady);
            c.h(t, x, y + dy, z, h2);
            q.h_y = std::max(q.h_y, static_cast<double>((h2 - h1).norm()) / ady);
        }
        if (dz > 0.0) {
            q.f_z = std::max(q.f_z, std::abs(static_cast<double>(c.f(t, x, y, z2) - f0)) / dz);
            q.g_z = std::max(q.g_z, static_cast<double>((c.g(t, x, y, z2) - g0).norm()) / dz);
            c.h(t, x, y, z2, h2);
            q.h_z = std::max(q.h_z, static_cast<double>((h2 - h1).norm()) / dz);
        }
    }
    return q;
}

inline AssumptionItem lipschitz_item(std::string name, double declared, double worst, double slack) {
    AssumptionItem item;
    item.name = std::move(name);
    item.declared = declared;
    item.worst_observed = worst;
    item.passed = worst <= declared * (1.0 + slack) + 1e-12;
    if (!item.passed)
        item.detail = "observed difference quotient " + std::to_string(worst) + " exceeds declared " +
                      std::to_string(declared);
    return item;
}

}  // namespace detail

/// Probes the declared Lipschitz constants on random point pairs and checks
/// the contraction property 2 alpha + beta^2 < 2 lambda (strict).
template <typename Scalar>
ValidationReport validate_assumptions(const CoefficientSet<Scalar>& c, Scalar lambda, const Grid<Scalar>& grid,
                                      const ProbeOptions& opt = {}) {
    ValidationReport r;
    if (!c.f || !c.g || !c.h) {
        r.items.push_back({"coefficients", false, 0, 0, "f, g and h must all be set"});
        return r;
    }
    if (c.C < Scalar(0) || c.alpha < Scalar(0) || c.beta < Scalar(0)) {
        r.items.push_back({"constants", false, 0, 0, "Lipschitz constants must be nonnegative"});
        return r;
    }
    const auto q = detail::probe_lipschitz(c, grid, opt);
    const double C = static_cast<double>(c.C);
    const double s = opt.relative_slack;
    // (H1): |df| <= C (|dy| + |dz|)
    const double f_worst = std::max(q.f_y, q.f_z);
    r.items.push_back(detail::lipschitz_item("H1 f Lipschitz (C)", C, f_worst, s));
    // (H2): |dg| <= C |dy| + alpha |dz|
    auto g_item = detail::lipschitz_item("H2 g Lipschitz in y (C)", C, q.g_y, s);
    auto g_item_z = detail::lipschitz_item("H2 g Lipschitz in z (alpha)", static_cast<double>(c.alpha), q.g_z, s);
    r.items.push_back(g_item);
    r.items.push_back(g_item_z);
    // (H3): |dh| <= C |dy| + beta |dz|
    r.items.push_back(detail::lipschitz_item("H3 h Lipschitz in y (C)", C, q.h_y, s));
    r.items.push_back(detail::lipschitz_item("H3 h Lipschitz in z (beta)", static_cast<double>(c.beta), q.h_z, s));

    AssumptionItem contraction;
    contraction.name = "H4 contraction";
    const double lhs = 2.0 * static_cast<double>(c.alpha) + static_cast<double>(c.beta * c.beta);
    const double rhs = 2.0 * static_cast<double>(lambda);
    contraction.declared = rhs;
    contraction.worst_observed = lhs;
    contraction.passed = lhs < rhs;
    if (!contraction.passed)
        contraction.detail = "2 alpha + beta^2 = " + std::to_string(lhs) + " is not < 2 lambda = " + std::to_string(rhs);
    r.items.push_back(contraction);

    AssumptionItem purity;
    purity.name = "purity";
    purity.passed = q.pure;
    if (!q.pure) purity.detail = "repeated evaluation returned different values";
    r.items.push_back(purity);
    return r;
}

/// Throws AssumptionError unless every item passed.
inline void require_assumptions(const ValidationReport& r) {
    if (!r.passed()) throw AssumptionError("assumption check failed: " + r.failures());
}

/// Zero-point data f0 = f(., ., 0, 0) (nodal), g0 (per flux element, d
/// components) and h0 (nodal, J components) sampled on a time grid.
template <typename Scalar>
struct ZeroPointData {
    FieldPath<Scalar> f0;
    Path<Scalar> g0;
    Path<Scalar> h0;
};

template <typename Scalar>
ZeroPointData<Scalar> zero_point_data(const EllipticOperator<Scalar>& op, const CoefficientSet<Scalar>& c, Scalar dt,
                                      Eigen::Index steps) {
    using Point = SmallVector<Scalar>;
    const auto& grid = op.grid();
    const int d = grid.dim();
    const Point zero = Point::Zero(d);
    ZeroPointData<Scalar> z;
    z.f0 = make_field_path(grid, dt, steps);
    z.g0 = Path<Scalar>(element_layout(op), dt, steps + 1);
    z.h0 = Path<Scalar>(nodal_layout(grid, c.modes), dt, steps + 1);
    VectorX<Scalar> hv(c.modes);
    for (Eigen::Index k = 0; k <= steps; ++k) {
        const Scalar t = z.f0.time(k);
        for (Eigen::Index node : grid.interior_nodes()) {
            const Point x = grid.coordinate(node);
            z.f0.data(node, k) = c.f(t, x, Scalar(0), zero);
            c.h(t, x, Scalar(0), zero, hv);
            z.h0.data.col(k).segment(node * c.modes, c.modes) = hv;
        }
        for (Eigen::Index e = 0; e < op.element_count(); ++e)
            z.g0.data.col(k).segment(e * d, d) = c.g(t, op.elements()[static_cast<std::size_t>(e)].centre, Scalar(0), zero);
    }
    return z;
}

/// One realization of the data entering the (HI#) condition.
template <typename Scalar>
struct IntegrabilitySample {
    Field<Scalar> xi;
    FieldPath<Scalar> f0;
    Path<Scalar> g0;
    Path<Scalar> h0;
};

struct IntegrabilityTerm {
    std::string name;
    double mean = 0.0;
    bool finite = true;
};

/// Sample means of E||xi||^2, E(||f0||*_{#;t})^2, E||g0||^2_{2,2;t} and
/// E||h0||^2_{2,2;t}. The dual-norm term is the toolbox upper bound.
struct IntegrabilityReport {
    std::size_t samples = 0;
    std::vector<IntegrabilityTerm> terms;

    bool all_finite() const {
        return std::all_of(terms.begin(), terms.end(), [](const IntegrabilityTerm& t) { return t.finite; });
    }
};

template <typename Scalar>
IntegrabilityReport check_integrability(const std::vector<IntegrabilitySample<Scalar>>& data,
                                        const Grid<Scalar>& grid, const NormToolbox<Scalar>& tb, Scalar t,
                                        double ceiling = 1e12) {
    if (data.empty()) throw std::invalid_argument("check_integrability needs at least one sample");
    double xi = 0, f = 0, g = 0, h = 0;
    for (const auto& s : data) {
        const double a = static_cast<double>(lp_norm(grid, s.xi, Scalar(2)));
        const double b = static_cast<double>(dual_sharp_upper(s.f0, t, tb));
        const double c = static_cast<double>(mixed_norm(s.g0, Scalar(2), Scalar(2), t));
        const double e = static_cast<double>(mixed_norm(s.h0, Scalar(2), Scalar(2), t));
        xi += a * a;
        f += b * b;
        g += c * c;
        h += e * e;
    }
    const double n = static_cast<double>(data.size());
    IntegrabilityReport r;
    r.samples = data.size();
    auto term = [&](std::string name, double v) {
        return IntegrabilityTerm{std::move(name), v / n, std::isfinite(v / n) && v / n < ceiling};
    };
    r.terms = {term("xi_l2_sq", xi), term("f0_dual_sharp_sq", f), term("g0_l22_sq", g), term("h0_l22_sq", h)};
    return r;
}

}  // namespace rspde
