#pragma once

#include "calabi/io.hpp"

namespace calabi {

struct ExperimentResult {
    std::string name;
    bool pass = false;
    std::vector<std::pair<std::string, double>> measured;
    std::vector<std::string> notes;   // one line per sub-check
    std::string fail_reason;          // first failing check
    double wall_seconds = 0.0;
    std::vector<std::pair<std::string, std::vector<DiagnosticsRow>>> run_rows;

    void check(bool ok, const std::string& label);
    void record(const std::string& key, double value) { measured.emplace_back(key, value); }
};

/** Fixed corpus of small band-limited potentials for the consistency
 *  suites: a handful of random modes per field, rescaled so the metric
 *  perturbation stays well inside the positivity cone and products stay
 *  below the aliasing band. Deterministic in the seed. */
std::vector<ScalarField> forcing_corpus(const TorusLattice& lat, int count, unsigned long seed);

/// Runs the exactness and dual-route consistency checks (transforms,
/// semigroup algebra, quadrature, forcing formulas, file round trips).
ExperimentResult verify_suite(unsigned long seed);

/// Decay rates of single low modes against the symbol eigenvalues (2%).
ExperimentResult experiment_linear_spectrum(const RunConfig& config);

/// Small-data run to the constant-curvature limit: exponential decay of
/// max |R| and a flat final potential.
ExperimentResult experiment_stability(const RunConfig& config);

/// sqrt(t)-weighted fourth-order norm against the initial second-order
/// norm, stable under grid refinement N: 32 -> 64.
ExperimentResult experiment_smoothing(const RunConfig& config);

/// Picard contraction ratios down a step-size ladder tau0 / 2^j.
ExperimentResult experiment_contraction_ladder(const RunConfig& config);

/// Surface run (n = 2): metric bounds stay in band, curvature maximum
/// bounded, energy dissipates; a consistency monitor, not a proof.
ExperimentResult experiment_extension_monitor(const RunConfig& config);

} // namespace calabi
