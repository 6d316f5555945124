#pragma once

#include "calabi/metric.hpp"

namespace calabi {

/** Fourier symbol of the squared flat complex Laplacian A = (g0^{i jbar}
 *  d_i d_jbar)^2: one nonnegative eigenvalue per mode, lambda(0) = 0.
 *  Realizes the stiff linear part of the flow splitting exactly. */
struct BilaplacianSymbol {
    TorusLattice lat;
    std::vector<double> lambda;   // wrap-around mode order
    double lambda_max = 0.0;
    double lambda_min_pos = 0.0;  // smallest nonzero eigenvalue
};

BilaplacianSymbol build_symbol(const TorusLattice& lat, const std::array<cplx, 4>& g0);

/// exp(-t A) applied per mode; t = 0 is the identity.
ScalarField semigroup_apply(const BilaplacianSymbol& sym, const ScalarField& x, double t);
SpectralCoeffs semigroup_apply_spectral(const BilaplacianSymbol& sym, const SpectralCoeffs& x, double t);

/// One-point (endpoint-frozen) quadrature of the Duhamel integral
/// int_0^tau exp(-(tau - s) A) f ds for time-constant f: per-mode factor
/// (1 - exp(-tau lambda)) / lambda, with a series branch for small
/// tau * lambda and the limit tau at lambda = 0.
ScalarField duhamel_phi1(const BilaplacianSymbol& sym, const ScalarField& f, double tau);
SpectralCoeffs duhamel_phi1_spectral(const BilaplacianSymbol& sym, const SpectralCoeffs& f, double tau);

/// Numerically stable (1 - exp(-z))/z.
double phi1(double z);

/// Discrete surrogate of the fractional-power equivalent norm:
/// max over a 32-point logarithmic s-ladder spanning
/// [1/lambda_max, 10/lambda_min_pos] of s^(1/2) * max_grid |A exp(-sA) x|.
double smoothing_constant(const BilaplacianSymbol& sym, const ScalarField& x);

} // namespace calabi
