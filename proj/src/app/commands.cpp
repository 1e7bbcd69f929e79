#include "commands.hpp"

#include "artifacts.hpp"
#include "config.hpp"
#include "scenario.hpp"

#include "rspde/verify.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <iomanip>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <thread>

namespace rspde::app {

namespace {

const std::vector<std::string> kAllChecks = {"ito_square", "positive_part", "weak_form",
                                             "skorokhod",  "apriori",       "positive_part_bound"};

struct Context {
    RunRequest request;
    Config config;
    Scenario scenario;
    fs::path out;
    std::string hash;
    std::string stage = "config";
};

/// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the
/// first failure after all threads stopped.
template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex lock;
    auto work = [&] {
        for (;;) {
            const int i = next++;
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> guard(lock);
                if (!error) error = std::current_exception();
                next = n;
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < std::min(workers, n); ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

Json stats(const std::vector<double>& v) {
    if (v.empty()) return Json{{"mean", nullptr}, {"stderr", nullptr}, {"min", nullptr}, {"max", nullptr}};
    const double n = static_cast<double>(v.size());
    double s = 0, s2 = 0, lo = v.front(), hi = v.front();
    for (double x : v) {
        s += x;
        s2 += x * x;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const double mean = s / n;
    const double var = v.size() > 1 ? std::max(0.0, (s2 - n * mean * mean) / (n - 1)) : 0.0;
    return Json{{"mean", mean}, {"stderr", std::sqrt(var / n)}, {"min", lo}, {"max", hi}};
}

fs::path sample_dir(const fs::path& out, int i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%04d", i);
    return out / name;
}

Json grid_json(const Grid<double>& g) {
    Json extent = Json::array(), counts = Json::array();
    for (int a = 0; a < g.dim(); ++a) {
        extent.push_back(g.lower(a));
        extent.push_back(g.upper(a));
        counts.push_back(g.count(a));
    }
    return Json{{"dim", g.dim()}, {"extent", extent}, {"counts", counts}};
}

Json residual_json(const ResidualReport& r) {
    return Json{{"identity", r.identity}, {"steps", r.steps},       {"dt", r.dt},
                {"spacing", r.spacing},   {"max_step", r.max_step}, {"max_abs", r.max_abs},
                {"terminal", r.terminal}, {"per_step", r.per_step}, {"cumulative", r.cumulative}};
}

Json estimate_json(const EstimateReport& r) {
    Json parts = Json::array();
    for (const auto& i : r.ingredients) parts.push_back({{"name", i.name}, {"mean", i.mean}, {"stderr", i.standard_error}});
    Json j{{"name", r.name},       {"t", r.t},         {"samples", r.samples}, {"lhs", r.lhs},
           {"lhs_stderr", r.lhs_stderr}, {"ingredients", parts}, {"rhs_sum", r.rhs_sum}, {"factor", r.factor}};
    j["implied_constant"] = r.implied_constant ? Json(*r.implied_constant) : Json(nullptr);
    return j;
}

std::vector<std::string> requested_checks(const Config& c, const std::vector<std::string>& fallback) {
    auto checks = c.words("verify.checks", fallback);
    if (checks.size() == 1 && checks.front() == "all") checks = kAllChecks;
    if (checks.size() == 1 && checks.front() == "none") checks.clear();
    for (const auto& name : checks)
        if (std::find(kAllChecks.begin(), kAllChecks.end(), name) == kAllChecks.end())
            throw ConfigurationError("unknown check '" + name + "' in verify.checks");
    return checks;
}

bool wants(const std::vector<std::string>& checks, const std::string& name) {
    return std::find(checks.begin(), checks.end(), name) != checks.end();
}

/// Outcome of the per-sample checks.
struct SampleChecks {
    Json report = Json::object();
    std::map<std::string, double> metrics;
    std::optional<EstimateSample> apriori, positive;
    std::vector<std::string> warnings;
};

FieldPath<double> weak_form_test_function(const Grid<double>& grid, double dt, Eigen::Index steps) {
    auto phi = sample_path(grid, dt, steps, [&grid](double t, const SmallVector<double>& x) {
        double v = 1.0 + t;
        for (int a = 0; a < grid.dim(); ++a)
            v *= std::sin(std::numbers::pi * (x[a] - grid.lower(a)) / (grid.upper(a) - grid.lower(a)));
        return v;
    });
    for (Eigen::Index b : grid.boundary_nodes()) phi.data.row(b).setZero();
    return phi;
}

SampleChecks run_checks(const Context& ctx, const ProblemData<double>& data, const SolveResult<double>& result,
                        const std::vector<std::string>& checks) {
    SampleChecks out;
    auto residual = [&](const ResidualReport& r) {
        out.report[r.identity] = residual_json(r);
        out.metrics[r.identity + ".max_step"] = r.max_step;
        out.metrics[r.identity + ".terminal_abs"] = std::abs(r.terminal);
    };
    if (wants(checks, "ito_square")) residual(ito_square_residual(result, data));
    if (wants(checks, "positive_part")) residual(positive_part_residual(result, data));
    if (wants(checks, "weak_form"))
        residual(weak_form_residual(result, data, weak_form_test_function(data.grid(), data.dt(), data.steps())));
    if (wants(checks, "skorokhod")) {
        const double d = skorokhod_defect(result.u, data.obstacle, result.measure);
        out.report["skorokhod_defect"] = d;
        out.metrics["skorokhod_defect"] = d;
    }
    const bool apriori = wants(checks, "apriori"), positive = wants(checks, "positive_part_bound");
    if (apriori || positive) {
        if (!data.dominator) {
            out.warnings.push_back("estimate checks skipped: no dominator configured");
            return out;
        }
        const auto S = solve_linear_spde(data).path;
        if (auto w = check_dominated(data.obstacle, S)) out.warnings.push_back(*w);
        const double t = ctx.config.number("verify.t", ctx.scenario.T);
        const auto tb = make_toolbox(data.grid());
        if (apriori) out.apriori = apriori_sample(result, data, S, t, tb);
        if (positive) out.positive = positive_part_sample(result, data, S, t, tb);
    }
    return out;
}

/// Aggregates per-sample checks into the summary fields.
void summarize_checks(const std::vector<SampleChecks>& all, double t, Json& summary) {
    std::map<std::string, std::vector<double>> metrics;
    std::vector<EstimateSample> apriori, positive;
    std::set<std::string> warnings;
    for (const auto& s : all) {
        for (const auto& [k, v] : s.metrics) metrics[k].push_back(v);
        if (s.apriori) apriori.push_back(*s.apriori);
        if (s.positive) positive.push_back(*s.positive);
        warnings.insert(s.warnings.begin(), s.warnings.end());
    }
    for (const auto& [k, v] : metrics) summary["metrics"][k] = stats(v);
    Json estimates = Json::array();
    if (!apriori.empty()) estimates.push_back(estimate_json(apriori_report(t, apriori)));
    if (!positive.empty()) estimates.push_back(estimate_json(positive_part_report(t, positive)));
    summary["estimates"] = estimates;
    for (const auto& w : warnings) summary["warnings"].push_back(w);
}

Json metadata(const Context& ctx, int sample, std::uint64_t seed) {
    const auto& sc = ctx.scenario;
    return Json{{"config_hash", ctx.hash},
                {"command", ctx.request.command},
                {"sample", sample},
                {"seed", seed},
                {"grid", grid_json(sc.grid())},
                {"T", sc.T},
                {"dt", sc.dt()},
                {"steps", sc.steps},
                {"modes", sc.modes},
                {"solver", {{"mode", sc.solver.mode}, {"penalty", sc.solver.penalty}}}};
}

Json summary_head(const Context& ctx) {
    return Json{{"command", ctx.request.command},
                {"config_hash", ctx.hash},
                {"seed", ctx.scenario.seed},
                {"samples", ctx.scenario.samples},
                {"solver", ctx.scenario.solver.mode},
                {"metrics", Json::object()},
                {"warnings", Json::array()}};
}

void write_norms(const fs::path& file, const Context& ctx, int sample, const ProblemData<double>& data,
                 const SolveResult<double>& r) {
    auto out = open_csv(file, ctx.hash, "run_id,norm_name,p,q,t,value");
    const double T = ctx.scenario.T, inf = infinity<double>();
    const auto tb = make_toolbox(data.grid());
    const double star = tb.sobolev_exponent;
    const auto grad = gradient_path(data.op, r.u);
    auto row = [&](const std::string& name, double p, double q, double v) {
        out << sample << ',' << name << ',' << p << ',' << q << ',' << T << ',' << std::setprecision(17) << v << '\n';
    };
    row("u", 2, inf, mixed_norm(r.u, 2.0, inf, T));
    row("u", 2, 2, mixed_norm(r.u, 2.0, 2.0, T));
    row("u", star, 2, mixed_norm(r.u, star, 2.0, T));
    row("u_sharp", 2, inf, sharp_norm(r.u, T, tb));
    row("grad_u", 2, 2, mixed_norm(grad, 2.0, 2.0, T));
    row("u_plus", 2, inf, mixed_norm(positive_part(r.u), 2.0, inf, T));
}

int simulate(Context& ctx, std::ostream& log) {
    const auto& sc = ctx.scenario;
    const auto checks = requested_checks(ctx.config, {"skorokhod"});
    ctx.stage = "validate";
    gate_assumptions(sc);
    ctx.stage = "solve";
    const bool keep_noise = ctx.config.flag("output.write_noise", true);
    const int n = sc.samples;
    std::vector<SampleChecks> all(static_cast<std::size_t>(n));
    std::vector<double> sup(all.size()), mass(all.size()), energy(all.size()), iterations(all.size());
    log << "simulate: " << n << " sample(s), " << ctx.request.workers << " worker(s), config " << ctx.hash << '\n';
    parallel_for(n, ctx.request.workers, [&](int i) {
        const auto seed = sample_seed(sc.seed, i);
        const auto data = sc.problem(sc.noise(seed));
        const auto r = solve(data, sc.solver);
        auto checked = run_checks(ctx, data, r, checks);
        const auto dir = sample_dir(ctx.out, i);
        fs::create_directories(dir);
        write_u_csv(dir / "u.csv", ctx.hash, data.grid(), r.u);
        write_measure_csv(dir / "measure.csv", ctx.hash, r.measure);
        if (keep_noise) write_noise_file(dir / "noise.bin", ctx.config.hash(), data.noise);
        write_norms(dir / "norms.csv", ctx, i, data, r);
        const auto k = static_cast<std::size_t>(i);
        sup[k] = mixed_norm(r.u, 2.0, infinity<double>(), sc.T);
        mass[k] = r.measure.total_mass();
        energy[k] = energy_integral(data.op, r.u, sc.T);
        iterations[k] = static_cast<double>(*std::max_element(r.diagnostics.iterations.begin(), r.diagnostics.iterations.end()));
        Json meta = metadata(ctx, i, seed);
        meta["total_mass"] = mass[k];
        meta["max_iterations"] = iterations[k];
        meta["checks"] = checked.report;
        meta["warnings"] = checked.warnings;
        for (const auto& w : r.diagnostics.warnings) meta["warnings"].push_back(w);
        write_json(dir / "metadata.json", meta);
        all[k] = std::move(checked);
    });
    ctx.stage = "persist";
    Json summary = summary_head(ctx);
    summary["metrics"]["sup_l2"] = stats(sup);
    summary["metrics"]["energy_integral"] = stats(energy);
    summary["metrics"]["total_mass"] = stats(mass);
    summary["metrics"]["max_iterations"] = stats(iterations);
    summarize_checks(all, ctx.config.number("verify.t", sc.T), summary);
    write_json(ctx.out / "summary.json", summary);
    log << "mean sup_l2 " << summary["metrics"]["sup_l2"]["mean"].get<double>() << ", mean total mass "
        << summary["metrics"]["total_mass"]["mean"].get<double>() << '\n';
    return kOk;
}

int penalize_sweep(Context& ctx, std::ostream& log) {
    const auto& sc = ctx.scenario;
    const auto penalties = ctx.config.numbers("sweep.penalties", {10, 100, 1000, 10000});
    if (penalties.empty()) throw ConfigurationError("sweep.penalties is empty");
    ctx.stage = "validate";
    gate_assumptions(sc);
    ctx.stage = "solve";
    const int n = sc.samples;
    const std::size_t m = penalties.size();
    // [sample][penalty]
    std::vector<std::vector<double>> dist(static_cast<std::size_t>(n), std::vector<double>(m)), defect = dist, mass = dist;
    std::vector<double> oracle_defect(static_cast<std::size_t>(n));
    parallel_for(n, ctx.request.workers, [&](int i) {
        const auto k = static_cast<std::size_t>(i);
        const auto data = sc.problem(sc.noise(sample_seed(sc.seed, i)));
        const auto oracle = solve_projected(data, sc.solver.options);
        oracle_defect[k] = skorokhod_defect(oracle.u, data.obstacle, oracle.measure);
        for (std::size_t j = 0; j < m; ++j) {
            const auto r = solve_penalized(data, penalties[j], sc.solver.options);
            dist[k][j] = mixed_norm(r.u - oracle.u, 2.0, infinity<double>(), sc.T);
            defect[k][j] = skorokhod_defect(r.u, data.obstacle, r.measure);
            mass[k][j] = r.measure.total_mass();
        }
    });
    ctx.stage = "persist";
    fs::create_directories(ctx.out);
    {
        auto out = open_csv(ctx.out / "sweep.csv", ctx.hash,
                            "n,distance_mean,distance_stderr,defect_mean,defect_stderr,mass_mean");
        out << std::setprecision(17);
        for (std::size_t j = 0; j < m; ++j) {
            std::vector<double> d, s, w;
            for (int i = 0; i < n; ++i) {
                d.push_back(dist[static_cast<std::size_t>(i)][j]);
                s.push_back(defect[static_cast<std::size_t>(i)][j]);
                w.push_back(mass[static_cast<std::size_t>(i)][j]);
            }
            const Json a = stats(d), b = stats(s), c = stats(w);
            out << penalties[j] << ',' << a["mean"].get<double>() << ',' << a["stderr"].get<double>() << ','
                << b["mean"].get<double>() << ',' << b["stderr"].get<double>() << ',' << c["mean"].get<double>() << '\n';
            log << "n = " << penalties[j] << ": distance " << a["mean"].get<double>() << '\n';
        }
    }
    {
        auto out = open_csv(ctx.out / "sweep_samples.csv", ctx.hash, "sample,seed,n,distance,defect,mass");
        out << std::setprecision(17);
        for (int i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                const auto k = static_cast<std::size_t>(i);
                out << i << ',' << sample_seed(sc.seed, i) << ',' << penalties[j] << ',' << dist[k][j] << ','
                    << defect[k][j] << ',' << mass[k][j] << '\n';
            }
    }
    int monotone = 0;
    for (const auto& row : dist)
        if (std::is_sorted(row.rbegin(), row.rend(), std::less_equal<double>())) ++monotone;
    Json summary = summary_head(ctx);
    summary["penalties"] = penalties;
    summary["metrics"]["projected_skorokhod_defect"] = stats(oracle_defect);
    summary["strictly_decreasing_samples"] = monotone;
    write_json(ctx.out / "summary.json", summary);
    return kOk;
}

ProblemData<double> shifted_problem(const Config& c, const Scenario& sc) {
    const std::string shift = c.text("compare.shift", "xi");
    const double a = c.number("compare.amount", 0.1);
    auto d = sc.problem(zero_noise<double>(sc.modes, sc.dt(), sc.steps));
    if (shift == "xi") {
        d.xi.array() += a;
    } else if (shift == "f") {
        auto f = d.coeffs.f;
        d.coeffs.f = [f, a](double t, const SmallVector<double>& x, double y, const SmallVector<double>& z) {
            return f(t, x, y, z) + a;
        };
    } else if (shift == "S") {
        d.obstacle.data.array() += a;
        if (c.flag("obstacle.clamp_initial", true)) d.obstacle.frame(0) = d.obstacle.frame(0).cwiseMin(d.xi);
    } else {
        throw ConfigurationError("compare.shift must be xi, f or S");
    }
    return d;
}

int compare(Context& ctx, std::ostream& log) {
    const auto& sc = ctx.scenario;
    const auto lower = sc.problem(zero_noise<double>(sc.modes, sc.dt(), sc.steps));
    const auto upper = shifted_problem(ctx.config, sc);
    ctx.stage = "validate";
    gate_assumptions(sc);
    const int n = sc.samples;
    std::vector<double> gaps(static_cast<std::size_t>(n));
    ctx.stage = "solve";
    parallel_for(n, ctx.request.workers, [&](int i) {
        gaps[static_cast<std::size_t>(i)] =
            comparison_experiment(lower, upper, {sample_seed(sc.seed, i)}, sc.solver.options).min_gap;
    });
    ctx.stage = "persist";
    fs::create_directories(ctx.out);
    auto out = open_csv(ctx.out / "compare.csv", ctx.hash, "sample,seed,min_gap");
    out << std::setprecision(17);
    for (int i = 0; i < n; ++i) out << i << ',' << sample_seed(sc.seed, i) << ',' << gaps[static_cast<std::size_t>(i)] << '\n';
    Json summary = summary_head(ctx);
    summary["shift"] = ctx.config.text("compare.shift", "xi");
    summary["amount"] = ctx.config.number("compare.amount", 0.1);
    summary["metrics"]["min_gap"] = stats(gaps);
    write_json(ctx.out / "summary.json", summary);
    log << "min_gap over " << n << " sample(s): " << *std::min_element(gaps.begin(), gaps.end()) << '\n';
    return kOk;
}

int capacity_command(Context& ctx, std::ostream& log) {
    const auto& sc = ctx.scenario;
    const auto K = capacity_set(ctx.config, sc);
    const double lebesgue = capacity_box_measure(ctx.config, sc);
    ctx.stage = "solve";
    const auto v = smallest_potential(sc.op, K, sc.solver.options);
    const double cap = v.measure.total_mass();
    ctx.stage = "persist";
    fs::create_directories(ctx.out);
    const Eigen::Index k = ctx.config.integer("capacity.time_index", sc.steps / 2);
    const double node_measure = static_cast<double>(K.size()) * sc.grid().cell_measure();
    auto out = open_csv(ctx.out / "capacity.csv", ctx.hash, "time_index,time,cap,lebesgue,node_measure");
    out << std::setprecision(17) << k << ',' << sc.dt() * static_cast<double>(k) << ',' << cap << ',' << lebesgue
        << ',' << node_measure << '\n';
    Json summary = summary_head(ctx);
    summary["capacity"] = {{"time_index", k}, {"cap", cap}, {"lebesgue", lebesgue}, {"node_measure", node_measure}};
    write_json(ctx.out / "summary.json", summary);
    log << "cap = " << cap << ", lambda(K) = " << lebesgue << '\n';
    return kOk;
}

int verify(Context& ctx, std::ostream& log) {
    const auto& sc = ctx.scenario;
    const auto checks = requested_checks(ctx.config, kAllChecks);
    ctx.stage = "load";
    int n = 0;
    while (fs::exists(sample_dir(ctx.out, n))) ++n;
    if (n == 0) throw ArtifactError("no stored samples under " + ctx.out.string() + " (run simulate first)");
    std::vector<SampleChecks> all(static_cast<std::size_t>(n));
    ctx.stage = "verify";
    parallel_for(n, ctx.request.workers, [&](int i) {
        const auto dir = sample_dir(ctx.out, i);
        const Json meta = read_json(dir / "metadata.json");
        if (meta.value("config_hash", std::string()) != ctx.hash)
            throw ArtifactError(dir.string() + " was produced by config " + meta.value("config_hash", std::string("?")) +
                                    ", not " + ctx.hash,
                                "hash-mismatch");
        auto noise = read_noise_file(dir / "noise.bin", ctx.config.hash());
        const auto data = sc.problem(std::move(noise));
        SolveResult<double> r;
        r.u = read_u_csv(dir / "u.csv", ctx.hash, sc.grid(), sc.dt(), sc.steps);
        r.measure = read_measure_csv(dir / "measure.csv", ctx.hash, sc.grid(), sc.dt(), sc.steps);
        all[static_cast<std::size_t>(i)] = run_checks(ctx, data, r, checks);
    });
    ctx.stage = "persist";
    Json report = summary_head(ctx);
    report["samples"] = n;
    report["checks"] = checks;
    summarize_checks(all, ctx.config.number("verify.t", sc.T), report);
    Json per = Json::array();
    for (const auto& s : all) per.push_back(s.report);
    report["per_sample"] = per;
    write_json(ctx.out / "verify.json", report);

    log << std::left << std::setw(34) << "metric" << std::right << std::setw(14) << "mean" << std::setw(14) << "stderr"
        << std::setw(14) << "max" << '\n';
    for (const auto& [name, s] : report["metrics"].items())
        log << std::left << std::setw(34) << name << std::right << std::scientific << std::setprecision(4)
            << std::setw(14) << s["mean"].get<double>() << std::setw(14) << s["stderr"].get<double>() << std::setw(14)
            << s["max"].get<double>() << std::defaultfloat << '\n';
    for (const auto& e : report["estimates"]) {
        log << e["name"].get<std::string>() << ": lhs " << e["lhs"].get<double>() << ", rhs " << e["rhs_sum"].get<double>()
            << ", implied k ";
        if (e["implied_constant"].is_null())
            log << "n/a\n";
        else
            log << e["implied_constant"].get<double>() << '\n';
    }
    return kOk;
}

struct Failure {
    int code;
    std::string status;
};

void write_error(const Context& ctx, const Failure& f, const std::string& message, std::ostream& log) {
    log << "error [" << f.status << " during " << ctx.stage << "]: " << message << '\n';
    try {
        fs::create_directories(ctx.out);
        Json j{{"status", f.status}, {"stage", ctx.stage}, {"message", message}, {"command", ctx.request.command}};
        j["config_hash"] = ctx.hash.empty() ? Json(nullptr) : Json(ctx.hash);
        write_json(ctx.out / "error.json", j);
    } catch (const std::exception& e) {
        log << "could not write error.json: " << e.what() << '\n';
    }
}

}  // namespace

int run(const RunRequest& request, std::ostream& log) {
    Context ctx;
    ctx.request = request;
    ctx.out = request.out.empty() ? fs::path("out") : fs::path(request.out);
    try {
        ctx.config = Config::load(request.config);
        ctx.hash = ctx.config.hash_hex();
        if (request.out.empty()) ctx.out = ctx.config.text("output.dir", "out");
        ctx.scenario = build_scenario(ctx.config);
        if (request.seed) ctx.scenario.seed = *request.seed;
        if (request.samples) {
            if (*request.samples < 1) throw ConfigurationError("--samples must be >= 1");
            ctx.scenario.samples = *request.samples;
        }
        if (request.workers < 1) throw ConfigurationError("--workers must be >= 1");
        if (request.command == "simulate") return simulate(ctx, log);
        if (request.command == "penalize-sweep") return penalize_sweep(ctx, log);
        if (request.command == "compare") return compare(ctx, log);
        if (request.command == "capacity") return capacity_command(ctx, log);
        if (request.command == "verify") return verify(ctx, log);
        throw ConfigurationError("unknown command '" + request.command + "'");
    } catch (const ConfigurationError& e) {
        write_error(ctx, {kConfiguration, "configuration-error"}, e.what(), log);
        return kConfiguration;
    } catch (const AssumptionError& e) {
        write_error(ctx, {kAssumption, "assumption-failure"}, e.what(), log);
        return kAssumption;
    } catch (const SolverError& e) {
        write_error(ctx, {kSolver, "solver-failure"}, e.what(), log);
        return kSolver;
    } catch (const ArtifactError& e) {
        write_error(ctx, {kArtifact, e.status()}, e.what(), log);
        return kArtifact;
    } catch (const DiscretizationMismatch& e) {
        write_error(ctx, {kArtifact, "discretization-mismatch"}, e.what(), log);
        return kArtifact;
    } catch (const std::exception& e) {
        write_error(ctx, {kInternal, "internal-error"}, e.what(), log);
        return kInternal;
    }
}

}  // namespace rspde::app
