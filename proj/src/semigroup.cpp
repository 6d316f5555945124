#include "calabi/semigroup.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace calabi {

BilaplacianSymbol build_symbol(const TorusLattice& lat, const std::array<cplx, 4>& g0) {
    if (!positivity_check(constant_metric(lat, g0)).is_pd)
        throw InvalidMetricError("build_symbol: g0 is not positive-definite");

    // Inverse of the constant n x n block.
    std::array<cplx, 4> inv{};
    if (lat.n == 1) {
        inv[0] = cplx{1.0, 0.0} / g0[0];
    } else {
        const cplx det = g0[0] * g0[3] - g0[1] * g0[2];
        inv[0] = g0[3] / det;
        inv[1] = -g0[1] / det;
        inv[2] = -g0[2] / det;
        inv[3] = g0[0] / det;
    }

    BilaplacianSymbol sym;
    sym.lat = lat;
    sym.lambda.assign(lat.points(), 0.0);
    sym.lambda_min_pos = std::numeric_limits<double>::infinity();

    const int axes = lat.axes();
    const int N = lat.N;
    std::vector<int> idx(axes, 0), k(axes, 0);
    std::array<cplx, 2> zeta{};
    for (std::size_t p = 0; p < lat.points(); ++p) {
        for (int a = 0; a < axes; ++a) k[a] = wrap_frequency(idx[a], N);
        for (int i = 0; i < lat.n; ++i) zeta[static_cast<std::size_t>(i)] = holo_symbol(lat, i, k);
        // sigma = g0^{i jbar} zeta_i conj(zeta_j) with g0^{i jbar} = inv[j][i]:
        // a nonnegative Hermitian form; the flat Laplacian symbol is -sigma.
        cplx sigma{0.0, 0.0};
        for (int i = 0; i < lat.n; ++i)
            for (int j = 0; j < lat.n; ++j)
                sigma += inv[static_cast<std::size_t>(j * lat.n + i)] * zeta[static_cast<std::size_t>(i)] *
                         std::conj(zeta[static_cast<std::size_t>(j)]);
        const double s = sigma.real();
        sym.lambda[p] = s * s;
        sym.lambda_max = std::max(sym.lambda_max, sym.lambda[p]);
        if (sym.lambda[p] > 0.0) sym.lambda_min_pos = std::min(sym.lambda_min_pos, sym.lambda[p]);
        for (int a = axes - 1; a >= 0; --a) {
            if (++idx[a] < N) break;
            idx[a] = 0;
        }
    }
    return sym;
}

SpectralCoeffs semigroup_apply_spectral(const BilaplacianSymbol& sym, const SpectralCoeffs& x, double t) {
    if (t < 0.0) throw std::invalid_argument("semigroup_apply: t must be nonnegative");
    SpectralCoeffs out(x.lat);
    for (std::size_t p = 0; p < out.c.size(); ++p) out.c[p] = std::exp(-t * sym.lambda[p]) * x.c[p];
    return out;
}

ScalarField semigroup_apply(const BilaplacianSymbol& sym, const ScalarField& x, double t) {
    return inverse_transform(semigroup_apply_spectral(sym, forward_transform(x), t));
}

double phi1(double z) {
    if (std::abs(z) < 1e-5)
        return 1.0 - z / 2.0 + z * z / 6.0 - z * z * z / 24.0;
    return (1.0 - std::exp(-z)) / z;
}

SpectralCoeffs duhamel_phi1_spectral(const BilaplacianSymbol& sym, const SpectralCoeffs& f, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("duhamel_phi1: tau must be positive");
    SpectralCoeffs out(f.lat);
    for (std::size_t p = 0; p < out.c.size(); ++p)
        out.c[p] = tau * phi1(tau * sym.lambda[p]) * f.c[p];
    return out;
}

ScalarField duhamel_phi1(const BilaplacianSymbol& sym, const ScalarField& f, double tau) {
    return inverse_transform(duhamel_phi1_spectral(sym, forward_transform(f), tau));
}

double smoothing_constant(const BilaplacianSymbol& sym, const ScalarField& x) {
    const SpectralCoeffs spec = forward_transform(x);
    const double s_lo = 1.0 / sym.lambda_max;
    const double s_hi = 10.0 / sym.lambda_min_pos;
    constexpr int ladder = 32;

    double best = 0.0;
    for (int r = 0; r < ladder; ++r) {
        const double s = s_lo * std::pow(s_hi / s_lo, static_cast<double>(r) / (ladder - 1));
        SpectralCoeffs scaled(spec.lat);
        for (std::size_t p = 0; p < spec.c.size(); ++p)
            scaled.c[p] = sym.lambda[p] * std::exp(-s * sym.lambda[p]) * spec.c[p];
        best = std::max(best, std::sqrt(s) * inverse_transform(scaled).max_abs());
    }
    return best;
}

} // namespace calabi
