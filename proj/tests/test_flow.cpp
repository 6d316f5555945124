#include "calabi/flow.hpp"
#include "calabi/experiments.hpp"

#include <doctest.h>

#include <cmath>

using namespace calabi;

namespace {

const double pi = M_PI;
const std::array<cplx, 4> kIdentity{cplx{1, 0}, cplx{0, 0}, cplx{0, 0}, cplx{1, 0}};

ScalarField cosine_mode(const TorusLattice& lat, std::array<int, 4> k, double amp, double phase = 0.0) {
    return synthesize_modes(lat, std::vector<ModeSpec>{ModeSpec{k, amp, phase}});
}

double l2(const ScalarField& f) {
    double s = 0.0;
    for (double x : f.v) s += x * x;
    return std::sqrt(s);
}

/// Complex Laplacian of the metric g applied pointwise via the trace of the
/// inverse against the Hessian; used to compose the reference bilaplacian
/// independently of the expanded formula.
ScalarField laplacian_of(const HermitianMetricField& g, const ScalarField& w) {
    const InverseDet id = inverse_and_det(g);
    const HermitianMetricField hess = dd_bar(w);
    ScalarField out(w.lat);
    for (std::size_t p = 0; p < w.size(); ++p) {
        cplx s{0.0, 0.0};
        for (int i = 0; i < w.lat.n; ++i)
            for (int j = 0; j < w.lat.n; ++j) s += id.inv.at(p, i, j) * hess.at(p, j, i);
        out[p] = s.real();
    }
    return out;
}

FlowSetup quick_setup(const ReferenceGeometry& ref, const BilaplacianSymbol& sym, const ScalarField& phi0,
                      double tau0, double t_end, StepControls ctl = {}) {
    return make_flow_setup(ref, sym, phi0, ctl, tau0, t_end, 1, HolderParams::defaults_for(ref.lat));
}

} // namespace

TEST_CASE("splitting identity: -A phi + f(phi) = R - rbar") {
    for (int n : {1, 2}) {
        const TorusLattice lat = TorusLattice::make(n, n == 1 ? 64 : 16, 1.0);
        const ReferenceGeometry ref = ReferenceGeometry::flat(lat);
        const BilaplacianSymbol sym = build_symbol(lat, kIdentity);
        const double rbar = average_scalar(ref.metric());
        const ScalarField phi = forcing_corpus(lat, 1, 5150)[0];

        const ScalarField f = forcing(ref, phi, sym, rbar);
        const ScalarField r = scalar_curvature(assemble_metric(ref, phi));
        // A phi recomputed through the public semigroup symbol
        SpectralCoeffs spec = forward_transform(phi);
        for (std::size_t p = 0; p < spec.c.size(); ++p) spec.c[p] *= sym.lambda[p];
        const ScalarField a_phi = inverse_transform(spec);

        double worst = 0.0;
        for (std::size_t p = 0; p < phi.size(); ++p)
            worst = std::max(worst, std::abs(-a_phi[p] + f[p] - (r[p] - rbar)));
        CHECK(worst < 1e-12 * std::max(1.0, a_phi.max_abs()));
    }
}

TEST_CASE("forcing basics") {
    const TorusLattice lat = TorusLattice::make(1, 64, 1.0);
    const ReferenceGeometry ref = ReferenceGeometry::flat(lat);
    const BilaplacianSymbol sym = build_symbol(lat, kIdentity);
    const double rbar = average_scalar(ref.metric());

    SUBCASE("vanishes at the flat equilibrium") {
        CHECK(forcing(ref, ScalarField(lat), sym, rbar).max_abs() < 1e-12);
    }

    SUBCASE("quadratic smallness in the data (Richardson)") {
        const ScalarField mode = cosine_mode(lat, {1, 0, 0, 0}, 1.0);
        const double f1 = forcing(ref, 1e-3 * mode, sym, rbar).max_abs();
        const double f2 = forcing(ref, 5e-4 * mode, sym, rbar).max_abs();
        CHECK(f1 / f2 == doctest::Approx(4.0).epsilon(0.15));
    }

    SUBCASE("non-PD data is rejected") {
        const ScalarField bad = cosine_mode(lat, {1, 0, 0, 0}, 1.5 / (pi * pi));
        CHECK_THROWS_AS(forcing(ref, bad, sym, rbar), InvalidMetricError);
    }
}

TEST_CASE("expanded forcing with a curved reference") {
    const TorusLattice lat = TorusLattice::make(1, 64, 1.0);
    const ScalarField psi = cosine_mode(lat, {0, 1, 0, 0}, 0.015, 0.3);
    const ReferenceGeometry ref = ReferenceGeometry::make(lat, kIdentity, psi);
    const HermitianMetricField gref = ref.metric();
    const double rbar = average_scalar(gref);

    SUBCASE("zero potential reduces to the reference curvature residual") {
        const ScalarField f = forcing_expanded(ref, ScalarField(lat), rbar);
        const ScalarField r = scalar_curvature(gref);
        double worst = 0.0;
        for (std::size_t p = 0; p < f.size(); ++p)
            worst = std::max(worst, std::abs(f[p] - (r[p] - rbar)));
        CHECK(worst < 1e-9 * std::max(1.0, r.max_abs()));
    }

    SUBCASE("matches the nested-Laplacian composition") {
        const ScalarField phi = cosine_mode(lat, {1, 0, 0, 0}, 0.008, 1.1);
        const ScalarField f = forcing_expanded(ref, phi, rbar);

        // independent route: two nested variable-coefficient Laplacians
        // plus the curvature of the perturbed metric
        const ScalarField bilap = laplacian_of(gref, laplacian_of(gref, phi));
        const ScalarField r = scalar_curvature(assemble_metric(ref, phi));
        ScalarField oracle(lat);
        for (std::size_t p = 0; p < oracle.size(); ++p) oracle[p] = bilap[p] + r[p] - rbar;

        CHECK(l2(f - oracle) / l2(oracle) < 1e-6);
    }
}

TEST_CASE("dual forcing routes agree on the flat-reference corpus") {
    for (int n : {1, 2}) {
        const TorusLattice lat = TorusLattice::make(n, n == 1 ? 64 : 16, 1.0);
        const ReferenceGeometry ref = ReferenceGeometry::flat(lat);
        const BilaplacianSymbol sym = build_symbol(lat, kIdentity);
        const double rbar = average_scalar(ref.metric());
        for (const ScalarField& phi : forcing_corpus(lat, 3, 2024)) {
            const ScalarField direct = forcing(ref, phi, sym, rbar);
            const ScalarField expanded = forcing_expanded(ref, phi, rbar);
            CHECK(l2(expanded - direct) / l2(direct) < 1e-6);
        }
    }
}

TEST_CASE("inverse-product identity residual") {
    const TorusLattice lat1 = TorusLattice::make(1, 64, 1.0);
    const TorusLattice lat2 = TorusLattice::make(2, 16, 1.0);
    const ReferenceGeometry ref1 = ReferenceGeometry::flat(lat1);
    const ReferenceGeometry ref2 = ReferenceGeometry::flat(lat2);

    CHECK(identity_e210_residual(ref1, ScalarField(lat1)) == 0.0);
    for (const ScalarField& phi : forcing_corpus(lat1, 3, 31))
        CHECK(identity_e210_residual(ref1, phi) < 1e-9);
    for (const ScalarField& phi : forcing_corpus(lat2, 3, 32))
        CHECK(identity_e210_residual(ref2, phi) < 1e-8);
}

TEST_CASE("forcing difference") {
    const TorusLattice lat = TorusLattice::make(1, 64, 1.0);
    const ScalarField psi = cosine_mode(lat, {0, 1, 0, 0}, 0.01);
    const ReferenceGeometry ref = ReferenceGeometry::make(lat, kIdentity, psi);
    const double rbar = average_scalar(ref.metric());
    const ScalarField phi1 = cosine_mode(lat, {1, 0, 0, 0}, 0.006, 0.2);
    const ScalarField phi2 = cosine_mode(lat, {2, 0, 0, 0}, 0.002, 1.0);

    SUBCASE("vanishes on equal arguments") {
        CHECK(forcing_difference(ref, phi1, phi1, rbar).max_abs() < 1e-14);
    }

    SUBCASE("antisymmetry") {
        const ScalarField ab = forcing_difference(ref, phi1, phi2, rbar);
        const ScalarField ba = forcing_difference(ref, phi2, phi1, rbar);
        CHECK((ab + ba).max_abs() <= 1e-12 * std::max(1.0, ab.max_abs()));
    }

    SUBCASE("matches direct subtraction of the expanded forcing") {
        const ScalarField fd = forcing_difference(ref, phi1, phi2, rbar);
        const ScalarField direct = forcing_expanded(ref, phi1, rbar) - forcing_expanded(ref, phi2, rbar);
        CHECK(l2(fd - direct) / std::max(1e-300, l2(direct)) < 1e-6);
    }
}

TEST_CASE("picard step") {
    const TorusLattice lat = TorusLattice::make(1, 64, 1.0);
    const ReferenceGeometry ref = ReferenceGeometry::flat(lat);
    const BilaplacianSymbol sym = build_symbol(lat, kIdentity);
    const double rbar = average_scalar(ref.metric());

    SUBCASE("flat equilibrium converges in one iteration") {
        FlowState st;
        st.tau = 1e-3;
        st.phi = ScalarField(lat);
        auto [phi, rep] = picard_step(st, sym, ref, rbar, 1e-10, 30);
        CHECK(rep.accepted);
        CHECK(rep.picard_iters == 1);
        CHECK(rep.picard_ratios.empty());
        CHECK(phi.max_abs() < 1e-12);
    }

    SUBCASE("small single mode contracts quickly") {
        FlowState st;
        st.tau = 0.1 / std::pow(pi, 4.0);
        st.phi = cosine_mode(lat, {1, 0, 0, 0}, 1e-4);
        auto [phi, rep] = picard_step(st, sym, ref, rbar, 1e-13, 30);
        CHECK(rep.accepted);
        CHECK(rep.picard_iters <= 6);
        for (double r : rep.picard_ratios) CHECK(r < 0.5);
    }

    SUBCASE("agrees with a forward-Euler micro-integrator to O(tau^2)") {
        // N = 8 keeps the explicit micro-stepper inside its stability region.
        const TorusLattice lat8 = TorusLattice::make(1, 8, 1.0);
        const ReferenceGeometry ref8 = ReferenceGeometry::flat(lat8);
        const BilaplacianSymbol sym8 = build_symbol(lat8, kIdentity);
        const double rbar8 = average_scalar(ref8.metric());
        const ScalarField phi0 = cosine_mode(lat8, {1, 0, 0, 0}, 2e-3);

        auto euler_chain = [&](double tau, int steps) {
            ScalarField phi = phi0;
            const double dt = tau / steps;
            for (int s = 0; s < steps; ++s) {
                const ScalarField r = scalar_curvature(assemble_metric(ref8, phi));
                for (std::size_t p = 0; p < phi.size(); ++p) phi[p] += dt * (r[p] - rbar8);
            }
            return phi;
        };
        auto gap = [&](double tau) {
            FlowState st;
            st.tau = tau;
            st.phi = phi0;
            auto [phi, rep] = picard_step(st, sym8, ref8, rbar8, 1e-14, 40);
            REQUIRE(rep.accepted);
            return (phi - euler_chain(tau, 1000)).max_abs();
        };

        const double g1 = gap(2e-4);
        const double g2 = gap(1e-4);
        CHECK(g1 / g2 > 3.2); // second-order local accuracy
        CHECK(g1 / g2 < 4.8);
        CHECK(g1 < 1e-7);
    }
}

TEST_CASE("advance and run_flow") {
    const TorusLattice lat = TorusLattice::make(1, 32, 1.0);
    const ReferenceGeometry ref = ReferenceGeometry::flat(lat);
    const BilaplacianSymbol sym = build_symbol(lat, kIdentity);

    SUBCASE("flat start is a fixed point") {
        StepControls ctl;
        ctl.convergence_tol = 0.0; // keep it stepping
        FlowSetup setup = quick_setup(ref, sym, ScalarField(lat), 1e-3, 8e-3, ctl);
        const FlowRunResult rr = run_flow(setup);
        CHECK(rr.final_state.phi.max_abs() < 1e-13);
        CHECK(rr.final_state.step_index >= 5);
    }

    SUBCASE("zero horizon returns only the initial snapshot") {
        FlowSetup setup = quick_setup(ref, sym, cosine_mode(lat, {1, 0, 0, 0}, 1e-3), 1e-3, 0.0);
        const FlowRunResult rr = run_flow(setup);
        CHECK(rr.trajectory.size() == 1);
        CHECK(rr.rows.size() == 1);
        CHECK(rr.final_state.t == 0.0);
    }

    SUBCASE("converged immediately when already constant-curvature") {
        FlowSetup setup = quick_setup(ref, sym, ScalarField(lat), 1e-3, 1.0);
        const FlowRunResult rr = run_flow(setup);
        CHECK(rr.final_state.status == FlowStatus::Converged);
        CHECK(rr.final_state.step_index == 0);
    }

    SUBCASE("non-PD initial data breaks down immediately") {
        const ScalarField bad = cosine_mode(lat, {1, 0, 0, 0}, 1.5 / (pi * pi));
        FlowSetup setup = quick_setup(ref, sym, bad, 1e-3, 1.0);
        const FlowRunResult rr = run_flow(setup);
        CHECK(rr.final_state.status == FlowStatus::PositivityBreakdown);
        CHECK(rr.final_state.step_index == 0);
        CHECK(rr.rows.empty());
        CHECK(rr.final_state.phi.all_finite());
    }

    SUBCASE("small data converges with dissipating energy") {
        FlowSetup setup = quick_setup(ref, sym, cosine_mode(lat, {1, 0, 0, 0}, 0.02), 1e-3, 2.0);
        const FlowRunResult rr = run_flow(setup);
        CHECK(rr.final_state.status == FlowStatus::Converged);
        for (std::size_t i = 1; i < rr.rows.size(); ++i) {
            const double prev = rr.rows[i - 1].calabi_energy;
            CHECK(rr.rows[i].calabi_energy <= prev + setup.controls.energy_slack * (1.0 + prev));
        }
        // class invariants along the way
        for (const DiagnosticsRow& row : rr.rows) {
            CHECK(std::abs(row.volume - rr.rows[0].volume) <= 1e-8 * rr.rows[0].volume);
            CHECK(std::abs(row.rbar) <= 1e-8);
            CHECK(row.c1_bound <= row.c2_bound);
            CHECK(row.calabi_energy >= 0.0);
        }
    }

    SUBCASE("near-degenerate start never produces silent NaNs") {
        // metric minimum around 0.05: the run either makes progress or
        // halts with an explicit breakdown status
        const TorusLattice lat2 = TorusLattice::make(2, 8, 1.0);
        const ReferenceGeometry ref2 = ReferenceGeometry::flat(lat2);
        const std::array<cplx, 4> id{cplx{1, 0}, cplx{0, 0}, cplx{0, 0}, cplx{1, 0}};
        const ScalarField phi0 = synthesize_modes(
            lat2, std::vector<ModeSpec>{ModeSpec{{1, 0, 0, 0}, 0.95 / (pi * pi), 0.0}});
        StepControls ctl;
        ctl.max_steps = 60;
        FlowSetup setup = make_flow_setup(ref2, build_symbol(lat2, id), phi0, ctl, 1e-5, 1.0, 1,
                                          HolderParams::defaults_for(lat2));
        const FlowRunResult rr = run_flow(setup);
        CHECK(rr.final_state.phi.all_finite());
        for (const DiagnosticsRow& row : rr.rows) {
            CHECK(std::isfinite(row.calabi_energy));
            CHECK(std::isfinite(row.max_riemann));
            CHECK(row.c1_bound <= row.c2_bound);
        }
        const FlowStatus st = rr.final_state.status;
        const bool explained = st == FlowStatus::Running || st == FlowStatus::Converged ||
                               st == FlowStatus::PositivityBreakdown ||
                               st == FlowStatus::ContractionFailure || st == FlowStatus::MaxStepsReached;
        CHECK(explained);
    }

    SUBCASE("two-thirds dealiasing is a small perturbation on smooth data") {
        const ScalarField phi0 = cosine_mode(lat, {1, 0, 0, 0}, 5e-3);
        auto final_phi = [&](bool dealias) {
            StepControls ctl;
            ctl.dealias = dealias;
            FlowSetup setup = quick_setup(ref, sym, phi0, 1e-3, 0.02, ctl);
            return run_flow(setup).final_state.phi;
        };
        const ScalarField plain = final_phi(false);
        const ScalarField cut = final_phi(true);
        CHECK((plain - cut).max_abs() < 1e-8 * std::max(1e-300, plain.max_abs()));
    }

    SUBCASE("first-order step-size robustness at fixed horizon") {
        const ScalarField phi0 = cosine_mode(lat, {1, 0, 0, 0}, 0.01);
        auto final_phi = [&](double tau, double t_end) {
            StepControls ctl;
            ctl.tau_max = tau; // pin the step
            ctl.convergence_tol = 0.0;
            FlowSetup setup = quick_setup(ref, sym, phi0, tau, t_end, ctl);
            return run_flow(setup).final_state.phi;
        };
        const double tau = 2e-3, t_end = 8 * tau;
        const ScalarField a = final_phi(tau, t_end);
        const ScalarField b = final_phi(tau / 2, t_end);
        const ScalarField c = final_phi(tau / 4, t_end);
        const double r = (a - b).max_abs() / (b - c).max_abs();
        CHECK(r >= 1.8);
    }
}
