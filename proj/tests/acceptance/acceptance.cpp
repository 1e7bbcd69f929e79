// Desk-scale acceptance run: one PASS/FAIL line per criterion, nonzero exit
// status if any criterion fails.

#include "rspde/capacity.hpp"
#include "rspde/verify.hpp"
#include "support/problems.hpp"

#include <chrono>
#include <cstdio>
#include <random>
#include <string>

using namespace rspde;
using namespace rspde::testing;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail, double seconds) {
    std::printf("%s [%2d] %-34s %s (%.1fs)\n", ok ? "PASS" : "FAIL", id, name, detail.c_str(), seconds);
    std::fflush(stdout);
    if (!ok) ++failures;
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
    char buf[320];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

template <typename Fn>
void criterion(int id, const char* name, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    bool ok = false;
    std::string detail;
    try {
        std::tie(ok, detail) = fn();
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    report(id, name, ok, detail, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
}

/// The standard problem: 1D, a = 1, nonlinear presets, S = 0.2,
/// xi = sin(pi x) + 0.3, 32 cells, T = 0.25.
ProblemData<double> standard(int cells, int steps, std::uint64_t seed) {
    auto d = make_problem(cells, steps, 0.25, 0.2, seed, nonlinear_set());
    d.obstacle.frame(0) = d.obstacle.frame(0).cwiseMin(d.xi);
    return d;
}

double sup_l2(const FieldPath<double>& a, const FieldPath<double>& b) {
    return mixed_norm(a - b, 2.0, kInf, a.horizon());
}

void attach_dominator(ProblemData<double>& d) {
    DominatorData<double> dom;
    dom.initial = d.xi;
    d.grid().clear_boundary(dom.initial);
    dom.f = sample_path(d.grid(), d.dt(), d.steps(), [](double, const Point&) { return 1.0; });
    dom.h = Path<double>(nodal_layout(d.grid(), d.coeffs.modes), d.dt(), d.steps() + 1);
    for (Eigen::Index node : d.grid().interior_nodes())
        for (int j = 0; j < d.coeffs.modes; ++j)
            dom.h.data.row(node * d.coeffs.modes + j)
                .setConstant(0.4 * std::sin((j + 1) * kPi * d.grid().coordinate(node)[0]) / (j + 1));
    d.dominator = dom;
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

}  // namespace

int main() {
    const std::vector<double> penalties = {10, 100, 1000, 10000};
    constexpr int kSeeds = 20;
    // shared by criteria 1 and 2: [seed][penalty]
    std::vector<std::vector<double>> dist(kSeeds), pen_defect(kSeeds);
    std::vector<double> proj_defect(kSeeds);

    criterion(1, "penalization convergence", [&] {
        int monotone = 0, tenfold = 0;
        double worst = 0;
        for (int s = 0; s < kSeeds; ++s) {
            const auto k = static_cast<std::size_t>(s);
            const auto d = standard(32, 128, static_cast<std::uint64_t>(s + 1));
            const auto oracle = solve_projected(d);
            proj_defect[k] = skorokhod_defect(oracle.u, d.obstacle, oracle.measure);
            for (double n : penalties) {
                const auto r = solve_penalized(d, n);
                dist[k].push_back(sup_l2(r.u, oracle.u));
                pen_defect[k].push_back(skorokhod_defect(r.u, d.obstacle, r.measure));
            }
            bool dec = true;
            for (std::size_t j = 1; j < dist[k].size(); ++j) dec = dec && dist[k][j] < dist[k][j - 1];
            monotone += dec;
            tenfold += dist[k].back() <= dist[k].front() / 10;
            worst = std::max(worst, dist[k].back() / dist[k].front());
        }
        return std::pair{monotone == kSeeds && tenfold == kSeeds,
                         fmt("decreasing in %d/%d seeds, worst d(1e4)/d(10) = %.4f (need <= 0.1)", monotone, kSeeds,
                             worst)};
    });

    criterion(2, "Skorokhod condition", [&] {
        if (dist.front().size() != penalties.size()) return std::pair{false, std::string("criterion 1 did not run")};
        double worst_proj = 0, worst_ratio = 0;
        for (int s = 0; s < kSeeds; ++s) {
            const auto k = static_cast<std::size_t>(s);
            worst_proj = std::max(worst_proj, proj_defect[k]);
            worst_ratio = std::max(worst_ratio, pen_defect[k].back() / dist[k].back());
        }
        return std::pair{worst_proj <= 1e-8 && worst_ratio <= 10.0,
                         fmt("projected defect max %.2e (<= 1e-8), penalized defect / d at n=1e4 max %.2f (<= 10)",
                             worst_proj, worst_ratio)};
    });

    criterion(3, "comparison theorem", [&] {
        std::vector<std::uint64_t> seeds;
        for (std::uint64_t s = 1; s <= 100; ++s) seeds.push_back(s);
        const auto base = make_problem(64, 128, 0.25, 0.2, 1, comparison_set(0.0));
        auto xi_up = base;
        xi_up.xi.array() += 0.1;
        const auto f_up = make_problem(64, 128, 0.25, 0.2, 1, comparison_set(0.3));
        auto s_up = base;
        s_up.obstacle.data.array() += 0.1;
        s_up.obstacle.frame(0) = s_up.obstacle.frame(0).cwiseMin(s_up.xi);
        const double gx = comparison_experiment(base, xi_up, seeds).min_gap;
        const double gf = comparison_experiment(base, f_up, seeds).min_gap;
        const double gs = comparison_experiment(base, s_up, seeds).min_gap;
        const double g = std::min({gx, gf, gs});
        return std::pair{g >= -1e-6, fmt("min_gap xi %.2e, f %.2e, S %.2e over 100 seeds (>= -1e-6)", gx, gf, gs)};
    });

    criterion(4, "Ito identity for y^2", [&] {
        double exact = 0;
        for (std::uint64_t s = 1; s <= 5; ++s) {
            const auto d = make_problem(32, 100, 0.25, 0.2, s, state_independent_set());
            SolveOptions o;
            o.validate = false;
            exact = std::max(exact, ito_square_residual(solve_projected(d, o), d).max_step);
        }
        double coarse = 0, fine = 0;
        for (int s = 1; s <= kSeeds; ++s) {
            auto f = standard(32, 256, static_cast<std::uint64_t>(s));
            auto c = standard(32, 128, static_cast<std::uint64_t>(s));
            c.noise = coarsen(f.noise, 2);
            coarse += std::abs(ito_square_residual(solve_projected(c), c).terminal);
            fine += std::abs(ito_square_residual(solve_projected(f), f).terminal);
        }
        const double factor = coarse / fine;
        return std::pair{exact <= 1e-9 && factor >= 1.5 && factor <= 3.0,
                         fmt("linear max step residual %.1e (<= 1e-9), halving dt reduces |terminal| by %.3f "
                             "(in [1.5, 3])",
                             exact, factor)};
    });

    criterion(5, "positive-part identity", [&] {
        double exact = 0;
        for (std::uint64_t s = 1; s <= 5; ++s) {
            const auto d = make_problem(32, 100, 0.25, 0.2, s, state_independent_set());
            SolveOptions o;
            o.validate = false;
            const auto r = solve_projected(d, o);
            if (r.u.data.minCoeff() < 0) return std::pair{false, std::string("one-sign run changed sign")};
            exact = std::max(exact, positive_part_residual(r, d).max_step);
        }
        double coarse = 0, fine = 0;
        for (int s = 1; s <= kSeeds; ++s) {
            auto mk = [s](int cells, int steps) {
                auto d = make_problem(cells, steps, 0.25, -1e6, static_cast<std::uint64_t>(s), nonlinear_set());
                d.xi = d.grid().sample([](const Point& x) { return std::sin(2 * kPi * x[0]); });
                return d;
            };
            auto f = mk(64, 256);
            auto c = mk(32, 128);
            c.noise = coarsen(f.noise, 2);
            coarse += std::abs(positive_part_residual(solve_unconstrained(c), c).terminal);
            fine += std::abs(positive_part_residual(solve_unconstrained(f), f).terminal);
        }
        const double factor = coarse / fine;
        return std::pair{exact <= 1e-9 && factor >= 1.3 && factor <= 3.0,
                         fmt("one-sign max step residual %.1e (<= 1e-9), sign-changing refinement factor %.3f "
                             "(in [1.3, 3])",
                             exact, factor)};
    });

    criterion(6, "capacity of a time slice", [&] {
        const auto grid = build_grid<double>(1, {0.0, 1.0}, {128});
        const auto op = laplacian(grid);
        const double dt = 0.1 / 1024;
        auto cap = [&](double lo, double hi) {
            return capacity(op, time_slice(grid, dt, 1024, 512, {std::pair{lo, hi}}));
        };
        const double half = cap(0.25, 0.75);
        const std::vector<double> widths = {0.125, 0.25, 0.5, 0.75};
        std::vector<double> caps;
        for (double w : widths) caps.push_back(cap(0.5 - w / 2, 0.5 + w / 2));
        bool monotone = true;
        for (std::size_t i = 1; i < caps.size(); ++i) monotone = monotone && caps[i] > caps[i - 1];
        // least-squares line through (width, cap)
        const double n = static_cast<double>(widths.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
        for (std::size_t i = 0; i < widths.size(); ++i) {
            sx += widths[i];
            sy += caps[i];
            sxx += widths[i] * widths[i];
            sxy += widths[i] * caps[i];
            syy += caps[i] * caps[i];
        }
        const double cov = sxy - sx * sy / n, vx = sxx - sx * sx / n, vy = syy - sy * sy / n;
        const double r2 = cov * cov / (vx * vy);
        return std::pair{std::abs(half - 0.5) <= 0.05 && monotone && r2 >= 0.99,
                         fmt("cap([0.25,0.75]) = %.4f (|. - 0.5| <= 0.05), monotone %s, R^2 = %.6f (>= 0.99)", half,
                             monotone ? "yes" : "no", r2)};
    });

    criterion(7, "Sobolev bound in 1D", [&] {
        const auto grid = build_grid<double>(1, {0.0, 1.0}, {128});
        std::mt19937_64 gen(2024);
        std::normal_distribution<double> normal;
        double worst = 0;
        for (int s = 0; s < 200; ++s) {
            Field<double> u = grid.sample([&](const Point&) { return normal(gen); });
            grid.clear_boundary(u);
            worst = std::max(worst, sobolev_ratio(grid, u));
        }
        return std::pair{worst <= 0.5 * (1 + 1e-6), fmt("max ratio over 200 fields %.6f (<= 0.5)", worst)};
    });

    criterion(8, "estimate stability", [&] {
        double k[2][2];
        for (int level = 0; level < 2; ++level) {
            const int cells = 32 << level, steps = 128 << level;
            std::vector<EstimateSample> a, p;
            for (int s = 1; s <= 50; ++s) {
                auto d = standard(cells, steps, static_cast<std::uint64_t>(s));
                attach_dominator(d);
                const auto S = solve_linear_spde(d).path;
                const auto r = solve_projected(d);
                const auto tb = make_toolbox(d.grid());
                a.push_back(apriori_sample(r, d, S, 0.25, tb));
                p.push_back(positive_part_sample(r, d, S, 0.25, tb));
            }
            const auto ra = apriori_report(0.25, a), rp = positive_part_report(0.25, p);
            if (!ra.implied_constant || !rp.implied_constant)
                return std::pair{false, std::string("estimate with vanishing data")};
            k[level][0] = *ra.implied_constant;
            k[level][1] = *rp.implied_constant;
        }
        auto change = [](double x, double y) { return std::max(x / y, y / x); };
        const double ca = change(k[0][0], k[1][0]), cp = change(k[0][1], k[1][1]);
        return std::pair{ca <= 2 && cp <= 2,
                         fmt("energy k %.3f -> %.3f (x%.3f), positive-part k %.3f -> %.3f (x%.3f), limit x2", k[0][0],
                             k[1][0], ca, k[0][1], k[1][1], cp)};
    });

    criterion(9, "contraction gate", [&] {
        auto set = [](double alpha, double beta) {
            CoefficientSet<double> c = zero_coefficients<double>(1, 1);
            c.C = 0.5;
            c.alpha = alpha;
            c.beta = beta;
            c.g = [alpha](double, const Point&, double, const Point& z) { return Point(Point::Constant(1, alpha * std::tanh(z[0]))); };
            c.h = [beta](double, const Point&, double, const Point& z, Eigen::Ref<VectorX<double>> out) {
                out[0] = beta * std::tanh(z[0]);
            };
            return c;
        };
        auto refused = [&](double alpha, double beta) {
            auto d = make_problem(16, 8, 0.1, 0.2, 1, set(alpha, beta));
            try {
                solve_projected(d);
            } catch (const AssumptionError&) {
                return true;
            }
            return false;
        };
        const bool above = refused(0.9, 0.5);      // 2.05 > 2
        const bool boundary = refused(0.5, 1.0);   // exactly 2
        const bool below = !refused(0.4, 0.5);     // 1.05 < 2
        return std::pair{above && boundary && below,
                         fmt("2a+b^2 = 2.05 refused: %s, = 2 refused: %s, = 1.05 accepted: %s", above ? "yes" : "no",
                             boundary ? "yes" : "no", below ? "yes" : "no")};
    });

    criterion(10, "unconstrained reduction", [&] {
        double diff = 0, mass = 0;
        for (std::uint64_t s = 1; s <= 5; ++s) {
            const auto d = make_problem(64, 128, 0.25, -1e6, s, nonlinear_set());
            const auto a = solve_projected(d);
            const auto b = solve_unconstrained(d);
            diff = std::max(diff, (a.u.data - b.u.data).cwiseAbs().maxCoeff());
            mass = std::max(mass, a.measure.total_mass());
        }
        return std::pair{diff <= 1e-10 && mass <= 1e-10,
                         fmt("max |u_obstacle - u_free| %.1e (<= 1e-10), mass %.1e (<= 1e-10)", diff, mass)};
    });

    std::printf("%s: %d criterion(s) failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
    return failures == 0 ? 0 : 1;
}
