#include "calabi/semigroup.hpp"
#include "calabi/io.hpp"

#include <doctest.h>

#include <cmath>

using namespace calabi;

namespace {

const double pi = M_PI;
const std::array<cplx, 4> kIdentity{cplx{1, 0}, cplx{0, 0}, cplx{0, 0}, cplx{1, 0}};

ScalarField cosine_mode(const TorusLattice& lat, std::array<int, 4> k, double amp = 1.0) {
    return synthesize_modes(lat, std::vector<ModeSpec>{ModeSpec{k, amp, 0.0}});
}

std::size_t mode_index(const TorusLattice& lat, std::array<int, 4> k) {
    std::size_t p = 0;
    for (int a = 0; a < lat.axes(); ++a) {
        const int m = ((k[static_cast<std::size_t>(a)] % lat.N) + lat.N) % lat.N;
        p = p * static_cast<std::size_t>(lat.N) + static_cast<std::size_t>(m);
    }
    return p;
}

} // namespace

TEST_CASE("symbol eigenvalues") {
    const TorusLattice lat = TorusLattice::make(1, 64, 1.0);
    const BilaplacianSymbol sym = build_symbol(lat, kIdentity);

    CHECK(sym.lambda[0] == 0.0);
    CHECK(sym.lambda[mode_index(lat, {1, 0, 0, 0})] == doctest::Approx(std::pow(pi, 4.0)));
    CHECK(sym.lambda[mode_index(lat, {0, 1, 0, 0})] == doctest::Approx(std::pow(pi, 4.0)));
    CHECK(sym.lambda[mode_index(lat, {2, 0, 0, 0})] == doctest::Approx(16.0 * std::pow(pi, 4.0)));
    CHECK(sym.lambda_min_pos == doctest::Approx(std::pow(pi, 4.0)));
    for (double l : sym.lambda) CHECK(l >= 0.0);

    // doubling g0 halves the Laplacian and quarters the eigenvalues
    const BilaplacianSymbol sym2 =
        build_symbol(lat, {cplx{2, 0}, cplx{0, 0}, cplx{0, 0}, cplx{2, 0}});
    CHECK(sym2.lambda[mode_index(lat, {1, 0, 0, 0})] == doctest::Approx(std::pow(pi, 4.0) / 4.0));

    const std::array<cplx, 4> bad{cplx{1, 0}, cplx{2, 0}, cplx{2, 0}, cplx{1, 0}};
    const TorusLattice lat2 = TorusLattice::make(2, 8, 1.0);
    CHECK_THROWS_AS(build_symbol(lat2, bad), InvalidMetricError);
}

TEST_CASE("symbol against a second-order stencil on low modes") {
    // lambda(k) should match a 5-point discrete bilaplacian within O(N^-2).
    const TorusLattice lat = TorusLattice::make(1, 64, 1.0);
    const BilaplacianSymbol sym = build_symbol(lat, kIdentity);
    const int N = lat.N;
    const double h = lat.spacing();
    for (int k : {1, 2, 3}) {
        // one-dimensional mode along x: discrete Laplacian eigenvalue
        const double lap_fd = (2.0 * std::cos(2.0 * pi * k / N) - 2.0) / (h * h) / 4.0;
        const double lam_fd = lap_fd * lap_fd;
        const double lam = sym.lambda[mode_index(lat, {k, 0, 0, 0})];
        CHECK(std::abs(lam - lam_fd) / lam < 10.0 * std::pow(2.0 * pi * k / N, 2.0));
    }
}

TEST_CASE("semigroup action") {
    const TorusLattice lat = TorusLattice::make(1, 64, 1.0);
    const BilaplacianSymbol sym = build_symbol(lat, kIdentity);

    SUBCASE("constants are fixed") {
        ScalarField c(lat);
        for (double& x : c.v) x = 2.5;
        CHECK((semigroup_apply(sym, c, 0.7) - c).max_abs() < 1e-13);
    }

    SUBCASE("single mode decays at exp(-pi^4 t)") {
        const ScalarField x = cosine_mode(lat, {1, 0, 0, 0});
        const double t = 3e-3;
        const ScalarField out = semigroup_apply(sym, x, t);
        const double factor = std::exp(-std::pow(pi, 4.0) * t);
        double worst = 0.0;
        for (std::size_t p = 0; p < x.size(); ++p)
            worst = std::max(worst, std::abs(out[p] - factor * x[p]));
        CHECK(worst < 1e-13);
    }

    SUBCASE("semigroup law and identity at t = 0") {
        const ScalarField x = cosine_mode(lat, {2, 1, 0, 0}, 0.8) + cosine_mode(lat, {0, 3, 0, 0}, 0.1);
        const ScalarField ab = semigroup_apply(sym, semigroup_apply(sym, x, 1.3e-3), 0.7e-3);
        const ScalarField once = semigroup_apply(sym, x, 2e-3);
        CHECK((ab - once).max_abs() < 1e-13);
        CHECK((semigroup_apply(sym, x, 0.0) - x).max_abs() < 1e-14);
    }

    SUBCASE("mode magnitudes never grow") {
        const ScalarField x = cosine_mode(lat, {1, 2, 0, 0}, 0.3) + cosine_mode(lat, {3, 0, 0, 0}, 0.2);
        const SpectralCoeffs before = forward_transform(x);
        const SpectralCoeffs after = forward_transform(semigroup_apply(sym, x, 1e-4));
        for (std::size_t p = 0; p < before.c.size(); ++p)
            CHECK(std::abs(after.c[p]) <= std::abs(before.c[p]) + 1e-15);
    }

    SUBCASE("negative time is rejected") {
        CHECK_THROWS_AS(semigroup_apply(sym, cosine_mode(lat, {1, 0, 0, 0}), -1.0), std::invalid_argument);
    }
}

TEST_CASE("endpoint-frozen Duhamel factor") {
    const TorusLattice lat = TorusLattice::make(1, 64, 1.0);
    const BilaplacianSymbol sym = build_symbol(lat, kIdentity);

    SUBCASE("zero mode integrates exactly") {
        ScalarField c(lat);
        for (double& x : c.v) x = 4.0;
        const double tau = 0.37;
        const ScalarField out = duhamel_phi1(sym, c, tau);
        double worst = 0.0;
        for (double x : out.v) worst = std::max(worst, std::abs(x - 4.0 * tau));
        CHECK(worst < 1e-13);
    }

    SUBCASE("single mode against composite Simpson") {
        const double tau = 2e-3;
        const double lam = std::pow(pi, 4.0);
        const int segments = 10000;
        const double h = tau / segments;
        double integral = 0.0;
        auto g = [&](double s) { return std::exp(-(tau - s) * lam); };
        for (int i = 0; i < segments; i += 2)
            integral += h / 3.0 * (g(i * h) + 4.0 * g((i + 1) * h) + g((i + 2) * h));

        const ScalarField x = cosine_mode(lat, {1, 0, 0, 0});
        const ScalarField out = duhamel_phi1(sym, x, tau);
        double worst = 0.0;
        for (std::size_t p = 0; p < x.size(); ++p)
            worst = std::max(worst, std::abs(out[p] - integral * x[p]));
        CHECK(worst / integral < 1e-10);
    }

    SUBCASE("small-argument series branch") {
        CHECK(phi1(0.0) == 1.0);
        // expm1 as the independent cancellation-free route; the direct
        // branch above the threshold carries ~eps/z of cancellation
        for (double z : {1e-9, 1e-7, 1e-6})
            CHECK(phi1(z) == doctest::Approx(-std::expm1(-z) / z).epsilon(1e-14));
        for (double z : {3e-5, 1e-3, 0.5})
            CHECK(phi1(z) == doctest::Approx(-std::expm1(-z) / z).epsilon(1e-10));
        // continuity across the branch threshold
        CHECK(phi1(1.0000001e-5) == doctest::Approx(phi1(0.9999999e-5)).epsilon(1e-10));
    }

    SUBCASE("nonpositive tau is rejected") {
        CHECK_THROWS_AS(duhamel_phi1(sym, cosine_mode(lat, {1, 0, 0, 0}), 0.0), std::invalid_argument);
        CHECK_THROWS_AS(duhamel_phi1(sym, cosine_mode(lat, {1, 0, 0, 0}), -0.5), std::invalid_argument);
    }
}

TEST_CASE("fractional-norm surrogate") {
    const TorusLattice lat = TorusLattice::make(1, 64, 1.0);
    const BilaplacianSymbol sym = build_symbol(lat, kIdentity);

    SUBCASE("zero field maps to zero") {
        CHECK(smoothing_constant(sym, ScalarField(lat)) == 0.0);
    }

    SUBCASE("single mode stays within the calculus bound") {
        const double amp = 0.8;
        const double lam = std::pow(pi, 4.0);
        const double bound = amp * std::sqrt(lam) * std::sqrt(0.5) * std::exp(-0.5);
        const double value = smoothing_constant(sym, cosine_mode(lat, {1, 0, 0, 0}, amp));
        CHECK(value <= bound * (1.0 + 1e-12));
        CHECK(value >= 0.9 * bound); // the 32-point ladder lands near s * lambda = 1/2
    }

    SUBCASE("homogeneity") {
        const ScalarField x = cosine_mode(lat, {2, 1, 0, 0}, 0.3);
        const double base = smoothing_constant(sym, x);
        CHECK(smoothing_constant(sym, -2.5 * x) == doctest::Approx(2.5 * base).epsilon(1e-12));
    }
}
