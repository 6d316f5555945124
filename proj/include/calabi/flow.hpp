#pragma once

#include "calabi/curvature.hpp"
#include "calabi/norms.hpp"
#include "calabi/semigroup.hpp"
#include "calabi/trajectory.hpp"

#include <optional>
#include <string>

namespace calabi {

enum class FlowStatus {
    Running,
    Converged,
    PositivityBreakdown,
    ContractionFailure,
    MaxStepsReached,
};

const char* to_string(FlowStatus s);

/** Per-accepted-step diagnostics. Column order matches the CSV schema. */
struct DiagnosticsRow {
    double t = 0.0;
    double tau = 0.0;
    double calabi_energy = 0.0;
    double max_abs_R = 0.0;
    double rbar = 0.0;
    double volume = 0.0;
    double c1_bound = 0.0;
    double c2_bound = 0.0;
    double max_riemann = 0.0;
    double holder_2a = 0.0;
    double holder_4a = 0.0;
    double weighted_norm = 0.0;
    int picard_iters = 0;
    double picard_last_ratio = 0.0;
    double phi_mean = 0.0;
};

struct StepReport {
    int picard_iters = 0;
    std::vector<double> picard_ratios; // successive-difference ratios
    bool accepted = false;
    std::string reject_reason;         // empty when accepted
    double stabilization = 1.0;        // majorant scale applied to the splitting operator
};

struct FlowState {
    double t = 0.0;
    double tau = 0.0;
    ScalarField phi;
    FlowStatus status = FlowStatus::Running;
    long step_index = 0;
    DiagnosticsRow last_diag;
    int consecutive_accepts = 0;
    std::string last_reject_reason;
};

struct StepControls {
    double picard_tol = 1e-10;
    int picard_max_iters = 400;
    double convergence_tol = 1e-8;
    double energy_slack = 1e-10;
    double tau_min = 1e-12;
    double tau_max = 0.0; // <= 0: resolved to 1 / lambda_min_pos
    long max_steps = 100000;
    bool dealias = false; // two-thirds-rule truncation of the forcing
};

struct FlowSetup {
    ReferenceGeometry ref;
    BilaplacianSymbol symbol;
    ScalarField phi0;
    StepControls controls;
    double tau0 = 1e-3;
    double t_end = 1.0;
    int snapshot_every = 10;
    HolderParams holder;
    double rbar = 0.0;               // average scalar curvature of the reference metric
    HermitianMetricField ref_metric; // cached ref.metric()
};

/// Resolves derived quantities (rbar, automatic tau_max) and validates.
FlowSetup make_flow_setup(ReferenceGeometry ref, BilaplacianSymbol symbol, ScalarField phi0,
                          StepControls controls, double tau0, double t_end, int snapshot_every,
                          HolderParams holder);

/** Splitting forcing f(phi) = A phi + R_phi - rbar, with A the flat
 *  bilaplacian of the symbol. The flow is phi_dot = -A phi + f(phi), which
 *  equals R_phi - rbar identically. */
ScalarField forcing(const ReferenceGeometry& ref, const ScalarField& phi,
                    const BilaplacianSymbol& symbol, double rbar);

/** The same forcing with the stiff part taken as the bilaplacian of the
 *  full reference metric, fully expanded by the chain rule into inverse
 *  metric contractions against derivative fields of phi (quadratic in the
 *  third derivatives) and of the reference metric. Coincides with
 *  forcing() when the reference background psi vanishes. */
ScalarField forcing_expanded(const ReferenceGeometry& ref, const ScalarField& phi, double rbar);

/** Relative sup-norm residual of the pointwise identity rewriting the
 *  fourth-order difference (g^-2 - g_v^-2) contracted with d^4 phi as
 *  inverse-product factors against the Hessian of phi. */
double identity_e210_residual(const ReferenceGeometry& ref, const ScalarField& phi);

/** Expanded form of forcing(phi1) - forcing_expanded(phi2)'s difference:
 *  linear reference terms applied to phi1 - phi2 plus differences of the
 *  curvature contractions. Agrees with direct subtraction to discretization
 *  accuracy and is exactly antisymmetric. */
ScalarField forcing_difference(const ReferenceGeometry& ref, const ScalarField& phi1,
                               const ScalarField& phi2, double rbar);

/** One fixed-point solve of the exponential-Euler step at state.tau:
 *  iterates v -> exp(-tau sA) x + tau phi1(tau sA) f_s(v) from
 *  v0 = exp(-tau sA) x until the sup-norm update is below
 *  tol * (1 + |x|_inf), where s >= 1 scales the splitting operator to a
 *  majorant of the perturbed symbol (s = 1 near the flat metric). Returns
 *  the new potential (or x unchanged on failure) and the iteration report. */
std::pair<ScalarField, StepReport> picard_step(const FlowState& state, const BilaplacianSymbol& symbol,
                                               const ReferenceGeometry& ref, double rbar, double tol,
                                               int max_iters, bool dealias = false);

/** One adaptive attempt: runs picard_step at the current step size, accepts
 *  when the iteration converged, the metric stays positive-definite and the
 *  Calabi energy does not increase beyond the slack; otherwise halves tau.
 *  Terminal failures are reported through state.status. */
void advance(FlowState& state, const FlowSetup& setup);

struct FlowRunResult {
    std::vector<FlowSnapshot> trajectory;
    std::vector<DiagnosticsRow> rows; // row 0 is the initial state
    FlowState final_state;
};

FlowRunResult run_flow(const FlowSetup& setup);

} // namespace calabi
