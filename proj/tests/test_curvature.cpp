#include "calabi/curvature.hpp"
#include "calabi/io.hpp"

#include <doctest.h>

#include <cmath>

using namespace calabi;

namespace {

const double pi = M_PI;
const std::array<cplx, 4> kIdentity{cplx{1, 0}, cplx{0, 0}, cplx{0, 0}, cplx{1, 0}};

ScalarField cosine_mode(const TorusLattice& lat, std::array<int, 4> k, double amp, double phase = 0.0) {
    return synthesize_modes(lat, std::vector<ModeSpec>{ModeSpec{k, amp, phase}});
}

/// Independent route for the n = 1 Ricci component: -(1/4) (dxx + dyy) of
/// log g with fourth-order periodic stencils.
ScalarField fd_ricci_n1(const HermitianMetricField& g) {
    const TorusLattice& lat = g.lat;
    const int N = lat.N;
    const double h = lat.spacing();
    ScalarField logg(lat);
    for (std::size_t p = 0; p < lat.points(); ++p) logg[p] = std::log(g.at(p, 0, 0).real());

    ScalarField out(lat);
    auto wrap = [N](int i) { return ((i % N) + N) % N; };
    for (int x = 0; x < N; ++x)
        for (int y = 0; y < N; ++y) {
            auto v = [&](int dx, int dy) {
                return logg[static_cast<std::size_t>(wrap(x + dx) * N + wrap(y + dy))];
            };
            const double dxx =
                (-v(2, 0) + 16.0 * v(1, 0) - 30.0 * v(0, 0) + 16.0 * v(-1, 0) - v(-2, 0)) / (12.0 * h * h);
            const double dyy =
                (-v(0, 2) + 16.0 * v(0, 1) - 30.0 * v(0, 0) + 16.0 * v(0, -1) - v(0, -2)) / (12.0 * h * h);
            out[static_cast<std::size_t>(x * N + y)] = -0.25 * (dxx + dyy);
        }
    return out;
}

} // namespace

TEST_CASE("flat metric has vanishing curvature") {
    const TorusLattice lat = TorusLattice::make(2, 8, 1.0);
    const HermitianMetricField g = constant_metric(lat, kIdentity);
    CHECK(scalar_curvature(g).max_abs() < 1e-12);
    CHECK(riemann_norm(g).max_abs() < 1e-12);
    CHECK(average_scalar(g) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(calabi_energy(g, 0.0) == doctest::Approx(0.0).epsilon(1e-14));

    HermitianMetricField ric = ricci(g);
    double worst = 0.0;
    for (const cplx& x : ric.m) worst = std::max(worst, std::abs(x));
    CHECK(worst < 1e-12);
}

TEST_CASE("ricci against the finite-difference oracle, n = 1") {
    const TorusLattice lat = TorusLattice::make(1, 64, 1.0);
    const ReferenceGeometry ref = ReferenceGeometry::flat(lat);
    const double eps = 0.01;
    const HermitianMetricField g = assemble_metric(ref, cosine_mode(lat, {1, 0, 0, 0}, eps));

    const HermitianMetricField ric = ricci(g);
    const ScalarField oracle = fd_ricci_n1(g);
    double worst = 0.0;
    for (std::size_t p = 0; p < lat.points(); ++p)
        worst = std::max(worst, std::abs(ric.at(p, 0, 0).real() - oracle[p]));
    // stencil truncation ~ h^4 |d^6 log g| / 90 with log g ~ eps pi^2 cos(2 pi x)
    const double bound = std::pow(1.0 / 64, 4.0) * eps * pi * pi * std::pow(2.0 * pi, 6.0) / 90.0;
    CHECK(worst < 10.0 * bound);
    CHECK(ric.hermitian_residual() < 1e-10);
}

TEST_CASE("scalar curvature linearization with Richardson halving") {
    const TorusLattice lat = TorusLattice::make(1, 64, 1.0);
    const ReferenceGeometry ref = ReferenceGeometry::flat(lat);
    const ScalarField mode = cosine_mode(lat, {1, 0, 0, 0}, 1.0);
    const double lambda = pi * pi * pi * pi;

    auto lin_error = [&](double eps) {
        const ScalarField r = scalar_curvature(assemble_metric(ref, eps * mode));
        double worst = 0.0;
        for (std::size_t p = 0; p < lat.points(); ++p)
            worst = std::max(worst, std::abs(r[p] + eps * lambda * mode[p]));
        return worst;
    };
    const double e1 = lin_error(1e-3);
    const double e2 = lin_error(5e-4);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.15)); // quadratic remainder
}

TEST_CASE("product metric curvature splits into factors, n = 2") {
    const TorusLattice lat2 = TorusLattice::make(2, 16, 1.0);
    const TorusLattice lat1 = TorusLattice::make(1, 16, 1.0);
    const ReferenceGeometry ref2 = ReferenceGeometry::flat(lat2);
    const ReferenceGeometry ref1 = ReferenceGeometry::flat(lat1);

    // phi(z1, z2) = phi_a(z1) + phi_b(z2) keeps the metric block-diagonal
    const double amp_a = 0.01, amp_b = 0.004;
    const ScalarField phi2 = synthesize_modes(
        lat2, std::vector<ModeSpec>{ModeSpec{{1, 0, 0, 0}, amp_a, 0.0}, ModeSpec{{0, 0, 0, 1}, amp_b, 0.0}});
    const HermitianMetricField g2 = assemble_metric(ref2, phi2);
    const ScalarField r2 = scalar_curvature(g2);

    const ScalarField ra = scalar_curvature(assemble_metric(ref1, cosine_mode(lat1, {1, 0, 0, 0}, amp_a)));
    const ScalarField rb = scalar_curvature(assemble_metric(ref1, cosine_mode(lat1, {0, 1, 0, 0}, amp_b)));

    double worst = 0.0;
    const int N = 16;
    for (int x1 = 0; x1 < N; ++x1)
        for (int y1 = 0; y1 < N; ++y1)
            for (int x2 = 0; x2 < N; ++x2)
                for (int y2 = 0; y2 < N; ++y2) {
                    const std::size_t p2 = static_cast<std::size_t>(((x1 * N + y1) * N + x2) * N + y2);
                    const double expect = ra[static_cast<std::size_t>(x1 * N + y1)] +
                                          rb[static_cast<std::size_t>(x2 * N + y2)];
                    worst = std::max(worst, std::abs(r2[p2] - expect));
                }
    CHECK(worst < 1e-9 * std::max(1.0, r2.max_abs()));

    // off-diagonal blocks of a separable potential vanish
    const HermitianMetricField h = dd_bar(phi2);
    double offdiag = 0.0;
    for (std::size_t p = 0; p < lat2.points(); ++p) offdiag = std::max(offdiag, std::abs(h.at(p, 0, 1)));
    CHECK(offdiag < 1e-13);
}

TEST_CASE("average scalar curvature vanishes on the flat class") {
    for (int n : {1, 2}) {
        const TorusLattice lat = TorusLattice::make(n, n == 1 ? 64 : 16, 1.0);
        const ReferenceGeometry ref = ReferenceGeometry::flat(lat);
        std::vector<ModeSpec> modes{ModeSpec{{1, 0, 0, 0}, 0.02, 0.3}};
        if (n == 2) modes.push_back(ModeSpec{{0, 1, -1, 0}, 0.008, 1.0});
        const HermitianMetricField g = assemble_metric(ref, synthesize_modes(lat, modes));
        CHECK(std::abs(average_scalar(g)) < 1e-8);
    }
}

TEST_CASE("calabi energy") {
    const TorusLattice lat = TorusLattice::make(1, 64, 1.0);
    const ReferenceGeometry ref = ReferenceGeometry::flat(lat);

    SUBCASE("leading order of a single mode") {
        const double eps = 1e-4;
        const HermitianMetricField g = assemble_metric(ref, cosine_mode(lat, {1, 0, 0, 0}, eps));
        const double expect = std::pow(pi, 8.0) * eps * eps / 2.0;
        CHECK(calabi_energy(g, 0.0) == doctest::Approx(expect).epsilon(1e-2));
    }

    SUBCASE("minimized at the volume-weighted average") {
        const HermitianMetricField g = assemble_metric(ref, cosine_mode(lat, {2, 0, 0, 0}, 0.005));
        const double rbar = average_scalar(g);
        const double at_min = calabi_energy(g, rbar);
        for (double shift : {1e-3, -1e-3, 0.1})
            CHECK(calabi_energy(g, rbar + shift) > at_min);
    }
}

TEST_CASE("riemann norm conventions") {
    const TorusLattice lat = TorusLattice::make(1, 64, 1.0);
    const ReferenceGeometry ref = ReferenceGeometry::flat(lat);
    const HermitianMetricField g = assemble_metric(ref, cosine_mode(lat, {1, 0, 0, 0}, 0.02));

    SUBCASE("|Rm|^2 proportional to R^2 with unit constant, n = 1") {
        const ScalarField r = scalar_curvature(g);
        const ScalarField rm = riemann_norm(g);
        const double floor = 0.1 * r.max_abs();
        double worst = 0.0;
        for (std::size_t p = 0; p < lat.points(); ++p)
            if (std::abs(r[p]) > floor)
                worst = std::max(worst, std::abs(rm[p] * rm[p] / (r[p] * r[p]) - 1.0));
        CHECK(worst < 1e-8);
    }

    SUBCASE("metric scaling sends |Rm| to |Rm| / scale") {
        const ScalarField rm1 = riemann_norm(g);
        const ScalarField rm3 = riemann_norm(3.0 * g);
        double worst = 0.0;
        for (std::size_t p = 0; p < lat.points(); ++p)
            worst = std::max(worst, std::abs(rm3[p] - rm1[p] / 3.0));
        CHECK(worst < 1e-10 * rm1.max_abs());
    }

    SUBCASE("nonzero curvature implies nonzero norm") {
        CHECK(riemann_norm(g).max_abs() > 0.0);
    }
}

TEST_CASE("curvature report invariants") {
    const TorusLattice lat = TorusLattice::make(2, 8, 1.0);
    const ReferenceGeometry ref = ReferenceGeometry::flat(lat);
    const ScalarField phi = synthesize_modes(
        lat, std::vector<ModeSpec>{ModeSpec{{1, 0, 0, 0}, 0.01, 0.0}, ModeSpec{{0, 1, 1, 0}, 0.004, 0.7}});
    const CurvatureReport rep = curvature_report(assemble_metric(ref, phi));
    CHECK(rep.calabi_energy >= 0.0);
    CHECK(rep.max_riemann >= 0.0);
    CHECK(rep.scalar_imag_residual < 1e-10);
    CHECK(rep.ricci.hermitian_residual() < 1e-10);
    CHECK(std::isfinite(rep.rbar));

    const HermitianMetricField bad = constant_metric(
        lat, {cplx{1.0, 0}, cplx{2.0, 0}, cplx{2.0, 0}, cplx{1.0, 0}});
    CHECK_THROWS_AS(scalar_curvature(bad), InvalidMetricError);
    CHECK_THROWS_AS(ricci(bad), InvalidMetricError);
    CHECK_THROWS_AS(riemann_norm(bad), InvalidMetricError);
}
