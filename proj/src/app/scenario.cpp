#include "scenario.hpp"

#include <cmath>
#include <numbers>

namespace rspde::app {

namespace {

using Point = SmallVector<double>;
constexpr double kPi = std::numbers::pi;

/// Product of sin(m pi x_a) over the axes, x rescaled to [0, 1].
double product_sine(const Grid<double>& g, const Point& x, double m) {
    double v = 1.0;
    for (int a = 0; a < g.dim(); ++a) v *= std::sin(m * kPi * (x[a] - g.lower(a)) / (g.upper(a) - g.lower(a)));
    return v;
}

void reject(const std::string& key, const std::string& value) {
    throw ConfigurationError("unknown preset '" + value + "' for " + key);
}

EllipticOperator<double> build_operator(const Config& c, const Grid<double>& grid) {
    const int d = grid.dim();
    const std::string profile = c.text("operator.profile", "identity");
    if (profile == "identity")
        return assemble_operator<double>(grid, identity_coefficient<double>(d), c.number("operator.lambda", 1.0),
                                         c.number("operator.Lambda", 1.0));
    if (profile == "constant") {
        const auto m = c.numbers("operator.matrix", {});
        if (static_cast<int>(m.size()) != d * d)
            throw ConfigurationError("operator.matrix needs " + std::to_string(d * d) + " entries");
        CoefficientMatrix<double> a(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) a(i, j) = m[static_cast<std::size_t>(i * d + j)];
        return assemble_operator<double>(grid, constant_coefficient<double>(a), c.number("operator.lambda"),
                                         c.number("operator.Lambda"));
    }
    if (profile == "smooth") {
        const double amp = c.number("operator.amplitude", 0.5);
        if (!(amp >= 0.0 && amp < 1.0)) throw ConfigurationError("operator.amplitude must lie in [0, 1)");
        CoefficientField<double> a = [d, amp, grid](const Point& x) {
            const double s = 1.0 + amp * std::sin(2 * kPi * (x[0] - grid.lower(0)) / (grid.upper(0) - grid.lower(0)));
            return CoefficientMatrix<double>(s * CoefficientMatrix<double>::Identity(d, d));
        };
        return assemble_operator<double>(grid, a, c.number("operator.lambda", 1.0 - amp),
                                         c.number("operator.Lambda", 1.0 + amp));
    }
    reject("operator.profile", profile);
    return laplacian(grid);
}

CoefficientSet<double> build_coefficients(const Config& c, const Grid<double>& grid, int modes) {
    CoefficientSet<double> s = zero_coefficients<double>(modes, grid.dim());
    s.C = c.number("coefficients.C", 0.0);
    s.alpha = c.number("coefficients.alpha", 0.0);
    s.beta = c.number("coefficients.beta", 0.0);
    const int d = grid.dim();

    const std::string f = c.text("f.preset", "zero");
    const double fa = c.number("f.amplitude", 0.0), fs = c.number("f.slope", 0.0), fo = c.number("f.offset", 0.0);
    if (f == "constant")
        s.f = [fo](double, const Point&, double, const Point&) { return fo; };
    else if (f == "sine")
        s.f = [fa, fo](double, const Point&, double y, const Point&) { return fa * std::sin(y) + fo; };
    else if (f == "sine_tanh")
        s.f = [fa, fs, fo](double, const Point&, double y, const Point& z) {
            return fa * std::sin(y) + fs * std::tanh(z[0]) + fo;
        };
    else if (f == "profile")  // state independent
        s.f = [fa, fo](double t, const Point& x, double, const Point&) { return fa * std::cos(3 * x[0]) - t + fo; };
    else if (f != "zero")
        reject("f.preset", f);

    const std::string g = c.text("g.preset", "zero");
    const double ga = c.number("g.amplitude", 0.0), gs = c.number("g.slope", 0.0);
    if (g == "linear_x")
        s.g = [ga, d](double, const Point& x, double, const Point&) { return Point(Point::Constant(d, ga * x[0])); };
    else if (g == "sine_tanh")
        s.g = [ga, gs, d](double, const Point&, double y, const Point& z) {
            Point out(d);
            for (int a = 0; a < d; ++a) out[a] = gs * std::tanh(z[a]) + ga * std::sin(y);
            return out;
        };
    else if (g != "zero")
        reject("g.preset", g);

    const std::string h = c.text("h.preset", "zero");
    const double sigma = c.number("h.sigma", 0.0), ha = c.number("h.amplitude", 0.0), hs = c.number("h.slope", 0.0);
    if (h == "additive")
        s.h = [sigma, grid](double, const Point& x, double, const Point&, Eigen::Ref<VectorX<double>> out) {
            for (int j = 0; j < out.size(); ++j) out[j] = sigma * product_sine(grid, x, j + 1) / (j + 1);
        };
    else if (h == "multiplicative")
        s.h = [sigma, ha, hs, grid](double, const Point& x, double y, const Point& z,
                                     Eigen::Ref<VectorX<double>> out) {
            for (int j = 0; j < out.size(); ++j) {
                const double psi = product_sine(grid, x, j + 1) / (j + 1);
                out[j] = sigma * psi * (1 + ha * std::sin(y)) + hs * psi * std::tanh(z[0]);
            }
        };
    else if (h != "zero")
        reject("h.preset", h);
    return s;
}

Field<double> build_initial(const Config& c, const Grid<double>& grid) {
    const std::string p = c.text("initial.profile", "sine");
    const double amp = c.number("initial.amplitude", 1.0), shift = c.number("initial.shift", 0.0);
    double mode = 1.0;
    if (p == "zero") return Field<double>::Zero(grid.node_count());
    if (p == "constant") return grid.sample([shift](const Point&) { return shift; });
    if (p == "two_mode")
        mode = 2.0;
    else if (p != "sine")
        reject("initial.profile", p);
    return grid.sample([&](const Point& x) { return amp * product_sine(grid, x, mode) + shift; });
}

FieldPath<double> build_obstacle(const Config& c, const Grid<double>& grid, double dt, Eigen::Index steps,
                                 const Field<double>& xi) {
    const std::string p = c.text("obstacle.profile", "constant");
    const double value = c.number("obstacle.value", 0.0), amp = c.number("obstacle.amplitude", 0.0);
    FieldPath<double> S = make_field_path(grid, dt, steps);
    if (p == "none") {
        S.data.setConstant(-1e6);
        return S;
    }
    if (p == "constant")
        S.data.setConstant(value);
    else if (p == "sine")
        S = sample_path(grid, dt, steps, [&](double, const Point& x) { return value + amp * product_sine(grid, x, 1); });
    else
        reject("obstacle.profile", p);
    // S_0 <= xi is required; lowering frame 0 does not change the scheme, which only reads S_{k+1}
    if (c.flag("obstacle.clamp_initial", true)) S.frame(0) = S.frame(0).cwiseMin(xi);
    return S;
}

std::optional<DominatorData<double>> build_dominator(const Config& c, const Grid<double>& grid, double dt,
                                                     Eigen::Index steps, int modes, const Field<double>& xi) {
    const std::string p = c.text("dominator.profile", "none");
    if (p == "none") return std::nullopt;
    if (p != "linear") reject("dominator.profile", p);
    DominatorData<double> dom;
    const std::string init = c.text("dominator.initial", "xi");
    if (init == "xi")
        dom.initial = xi;
    else if (init == "zero")
        dom.initial = Field<double>::Zero(grid.node_count());
    else
        reject("dominator.initial", init);
    grid.clear_boundary(dom.initial);
    const double f = c.number("dominator.f", 0.0), sigma = c.number("dominator.sigma", 0.0);
    if (f != 0.0) dom.f = sample_path(grid, dt, steps, [f](double, const Point&) { return f; });
    if (sigma != 0.0) {
        dom.h = Path<double>(nodal_layout(grid, modes), dt, steps + 1);
        for (Eigen::Index node : grid.interior_nodes())
            for (int j = 0; j < modes; ++j)
                dom.h.data.row(node * modes + j)
                    .setConstant(sigma * product_sine(grid, grid.coordinate(node), j + 1) / (j + 1));
    }
    return dom;
}

}  // namespace

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "grid.dim", "grid.extent", "grid.counts",
        "operator.profile", "operator.matrix", "operator.lambda", "operator.Lambda", "operator.amplitude",
        "time.T", "time.steps",
        "noise.modes", "noise.seed", "noise.samples",
        "coefficients.C", "coefficients.alpha", "coefficients.beta",
        "f.preset", "f.amplitude", "f.slope", "f.offset",
        "g.preset", "g.amplitude", "g.slope",
        "h.preset", "h.sigma", "h.amplitude", "h.slope",
        "initial.profile", "initial.amplitude", "initial.shift",
        "obstacle.profile", "obstacle.value", "obstacle.amplitude", "obstacle.clamp_initial",
        "dominator.profile", "dominator.initial", "dominator.f", "dominator.sigma",
        "solver.mode", "solver.penalty", "solver.omega", "solver.tolerance", "solver.max_sweeps",
        "verify.checks", "verify.t", "verify.test_function",
        "sweep.penalties",
        "compare.shift", "compare.amount",
        "capacity.time_index", "capacity.box",
        "output.dir", "output.write_noise",
    };
    return keys;
}

Scenario build_scenario(const Config& c) {
    c.require_known(known_keys());
    Scenario s;
    const int dim = static_cast<int>(c.integer("grid.dim", 1));
    std::vector<double> extent = c.numbers("grid.extent", {});
    if (extent.empty())
        for (int a = 0; a < dim; ++a) extent.insert(extent.end(), {0.0, 1.0});
    std::vector<int> counts;
    for (double v : c.numbers("grid.counts", {64.0})) counts.push_back(static_cast<int>(v));
    if (counts.size() == 1 && dim == 2) counts.push_back(counts.front());
    const auto grid = build_grid<double>(dim, std::span<const double>(extent), std::span<const int>(counts));
    s.op = build_operator(c, grid);

    s.T = c.number("time.T", 0.25);
    s.steps = c.integer("time.steps", 64);
    if (!(s.T > 0.0) || s.steps < 1) throw ConfigurationError("time.T must be positive and time.steps >= 1");
    s.modes = static_cast<int>(c.integer("noise.modes", 1));
    if (s.modes < 1) throw ConfigurationError("noise.modes must be >= 1");
    s.seed = static_cast<std::uint64_t>(c.integer("noise.seed", 1));
    s.samples = static_cast<int>(c.integer("noise.samples", 1));
    if (s.samples < 1) throw ConfigurationError("noise.samples must be >= 1");

    s.coeffs = build_coefficients(c, s.op.grid(), s.modes);
    s.xi = build_initial(c, s.op.grid());
    s.obstacle = build_obstacle(c, s.op.grid(), s.dt(), s.steps, s.xi);
    s.dominator = build_dominator(c, s.op.grid(), s.dt(), s.steps, s.modes, s.xi);

    s.solver.mode = c.text("solver.mode", "projected");
    if (s.solver.mode != "projected" && s.solver.mode != "penalized" && s.solver.mode != "unconstrained")
        reject("solver.mode", s.solver.mode);
    s.solver.penalty = c.number("solver.penalty", 1e4);
    s.solver.options.psor.relaxation = c.number("solver.omega", 1.5);
    s.solver.options.psor.tolerance = c.number("solver.tolerance", 1e-10);
    s.solver.options.psor.max_sweeps = c.integer("solver.max_sweeps", 100000);
    // the gate runs once per scenario, not once per sample
    s.solver.options.validate = false;
    return s;
}

ProblemData<double> Scenario::problem(NoisePath<double> noise) const {
    ProblemData<double> d;
    d.op = op;
    d.xi = xi;
    d.coeffs = coeffs;
    d.obstacle = obstacle;
    d.dominator = dominator;
    d.noise = std::move(noise);
    return d;
}

NoisePath<double> Scenario::noise(std::uint64_t sample_seed) const {
    return sample_noise(modes, dt(), steps, sample_seed);
}

void gate_assumptions(const Scenario& s) {
    ProbeOptions probe;
    probe.horizon = s.T;
    require_assumptions(validate_assumptions(s.coeffs, s.op.lambda(), s.grid(), probe));
}

SolveResult<double> solve(const ProblemData<double>& data, const SolverChoice& choice) {
    if (choice.mode == "penalized") return solve_penalized(data, choice.penalty, choice.options);
    if (choice.mode == "unconstrained") return solve_unconstrained(data, choice.options);
    return solve_projected(data, choice.options);
}

CompactSet<double> capacity_set(const Config& c, const Scenario& s) {
    const auto box = c.numbers("capacity.box", {});
    const int d = s.grid().dim();
    if (static_cast<int>(box.size()) != 2 * d) throw ConfigurationError("capacity.box needs lo, hi per axis");
    std::vector<std::pair<double, double>> intervals;
    for (int a = 0; a < d; ++a) intervals.emplace_back(box[static_cast<std::size_t>(2 * a)], box[static_cast<std::size_t>(2 * a + 1)]);
    const Eigen::Index k = c.integer("capacity.time_index", s.steps / 2);
    auto K = time_slice(s.grid(), s.dt(), s.steps, k, intervals);
    validate_compact_set(K);
    return K;
}

double capacity_box_measure(const Config& c, const Scenario& s) {
    const auto box = c.numbers("capacity.box", {});
    double m = 1.0;
    for (int a = 0; a < s.grid().dim(); ++a)
        m *= box[static_cast<std::size_t>(2 * a + 1)] - box[static_cast<std::size_t>(2 * a)];
    return m;
}

}  // namespace rspde::app
