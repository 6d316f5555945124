#pragma once

#include "calabi/metric.hpp"

namespace calabi {

/** Ricci tensor R_{i jbar} = -d_i d_jbar log det(g), spectral derivatives. */
HermitianMetricField ricci(const HermitianMetricField& g);

/// Scalar curvature R = trace of the inverse metric against the Ricci
/// tensor, pointwise. Returns the real part; the imaginary residue of the
/// spectral computation is below 1e-10 for smooth PD metrics.
ScalarField scalar_curvature(const HermitianMetricField& g);

/// Volume-weighted average of the scalar curvature (zero on the flat torus
/// class up to discretization noise).
double average_scalar(const HermitianMetricField& g);

/// Integral of (R - rbar)^2 against the volume element det(g) (L/N)^(2n).
double calabi_energy(const HermitianMetricField& g, double rbar);

/** Pointwise norm |Rm| of the Kaehler curvature tensor
 *      R_{i jbar k lbar} = -d_i d_jbar g_{k lbar}
 *                          + g^{p qbar} (d_i g_{k qbar}) (d_jbar g_{p lbar}),
 *  fully contracted with the inverse metric on all four index pairs. With
 *  this convention |Rm|^2 = R^2 when n = 1.
 */
ScalarField riemann_norm(const HermitianMetricField& g);

struct CurvatureReport {
    HermitianMetricField ricci;
    ScalarField scalar;
    double rbar = 0.0;
    double calabi_energy = 0.0;
    double max_riemann = 0.0;
    double scalar_imag_residual = 0.0;
};

CurvatureReport curvature_report(const HermitianMetricField& g);

} // namespace calabi
