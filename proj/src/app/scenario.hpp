#pragma once

#include "config.hpp"

#include "rspde/capacity.hpp"
#include "rspde/solver.hpp"

#include <optional>
#include <set>
#include <string>

namespace rspde::app {

/// Keys the application understands; anything else in a config is an error.
const std::set<std::string>& known_keys();

struct SolverChoice {
    std::string mode = "projected";  // projected | penalized | unconstrained
    double penalty = 1e4;
    SolveOptions options;
};

/// Everything a sample needs except its noise path.
struct Scenario {
    EllipticOperator<double> op;
    double T = 0.0;
    Eigen::Index steps = 0;
    int modes = 1;
    CoefficientSet<double> coeffs;
    Field<double> xi;
    FieldPath<double> obstacle;
    std::optional<DominatorData<double>> dominator;
    SolverChoice solver;
    std::uint64_t seed = 1;
    int samples = 1;

    double dt() const { return T / static_cast<double>(steps); }
    const Grid<double>& grid() const { return op.grid(); }
    ProblemData<double> problem(NoisePath<double> noise) const;
    NoisePath<double> noise(std::uint64_t sample_seed) const;
};

Scenario build_scenario(const Config& c);

/// Validates (H1)-(H4) for the scenario's coefficients; throws AssumptionError.
void gate_assumptions(const Scenario& s);

SolveResult<double> solve(const ProblemData<double>& data, const SolverChoice& choice);

/// Seed of sample i.
inline std::uint64_t sample_seed(std::uint64_t base, int i) { return base + static_cast<std::uint64_t>(i); }

/// The compact set of the capacity block: {t_k} x box.
CompactSet<double> capacity_set(const Config& c, const Scenario& s);

/// Lebesgue measure of the capacity box.
double capacity_box_measure(const Config& c, const Scenario& s);

}  // namespace rspde::app
