#pragma once

#include "calabi/lattice.hpp"

#include <array>

namespace calabi {

/// Raised on operations that require a positive-definite metric.
struct InvalidMetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/** Pointwise n x n Hermitian matrix field g_{i jbar}; entry (i, j) holds the
 *  component with holomorphic index i and antiholomorphic index j. */
struct HermitianMetricField {
    TorusLattice lat;
    std::vector<cplx> m; // points * n * n, row-major per point

    HermitianMetricField() = default;
    explicit HermitianMetricField(const TorusLattice& l)
        : lat(l), m(l.points() * static_cast<std::size_t>(l.n) * static_cast<std::size_t>(l.n), cplx{0.0, 0.0}) {}

    cplx& at(std::size_t p, int i, int j) {
        const auto n = static_cast<std::size_t>(lat.n);
        return m[(p * n + static_cast<std::size_t>(i)) * n + static_cast<std::size_t>(j)];
    }
    const cplx& at(std::size_t p, int i, int j) const {
        const auto n = static_cast<std::size_t>(lat.n);
        return m[(p * n + static_cast<std::size_t>(i)) * n + static_cast<std::size_t>(j)];
    }

    /// Largest |g_ij - conj(g_ji)| over the grid.
    double hermitian_residual() const;
};

HermitianMetricField operator+(const HermitianMetricField& a, const HermitianMetricField& b);
HermitianMetricField operator-(const HermitianMetricField& a, const HermitianMetricField& b);
HermitianMetricField operator*(double c, const HermitianMetricField& a);

/// Constant matrix extended over the grid. Only the leading n x n block of
/// g0 is read (row-major, entries {g11, g12, g21, g22} for n = 2).
HermitianMetricField constant_metric(const TorusLattice& lat, const std::array<cplx, 4>& g0);

/// The matrix field d_i d_jbar(phi), exact spectral derivatives.
HermitianMetricField dd_bar(const ScalarField& phi);

/** Flat constant metric g0 plus an optional background potential psi; the
 *  reference metric is g = g0 + dd_bar(psi). A potential phi is a real grid
 *  function (alias below); it parametrizes g_phi = g0 + dd_bar(psi + phi). */
struct ReferenceGeometry {
    TorusLattice lat;
    std::array<cplx, 4> g0{cplx{1.0, 0.0}, cplx{0.0, 0.0}, cplx{0.0, 0.0}, cplx{1.0, 0.0}};
    ScalarField psi;

    static ReferenceGeometry flat(const TorusLattice& lat);
    static ReferenceGeometry make(const TorusLattice& lat, const std::array<cplx, 4>& g0, ScalarField psi);

    bool has_background() const;
    HermitianMetricField metric() const; // g0 + dd_bar(psi)
};

using KahlerPotential = ScalarField;

/// g0 + dd_bar(psi + phi).
HermitianMetricField assemble_metric(const ReferenceGeometry& ref, const ScalarField& phi);

struct PositivityResult {
    bool is_pd = false;
    double min_eig = 0.0;
};

/// Minimum over the grid of the smallest eigenvalue; positive-definite iff
/// min_eig > pd_floor.
PositivityResult positivity_check(const HermitianMetricField& g, double pd_floor = 1e-10);

struct MetricBounds {
    double c1 = 0.0;
    double c2 = 0.0;
};

/// Sharp constants with c1 * g_ref <= g <= c2 * g_ref pointwise (extremes of
/// the generalized eigenvalues of the pencil (g, g_ref)).
MetricBounds metric_bounds(const HermitianMetricField& g, const HermitianMetricField& g_ref);

struct InverseDet {
    HermitianMetricField inv;
    ScalarField det;
};

/// Pointwise matrix inverse and determinant; throws on non-PD input.
InverseDet inverse_and_det(const HermitianMetricField& g);

/// Grid sum of det(g) times the cell volume (L/N)^(2n); exact for
/// trigonometric-polynomial integrands.
double total_volume(const HermitianMetricField& g);

} // namespace calabi
