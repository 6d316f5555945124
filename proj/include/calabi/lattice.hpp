#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace calabi {

using cplx = std::complex<double>;

/** Periodic grid on a flat complex torus of complex dimension n (1 or 2).
 *
 * Each complex coordinate z^j = x^j + i*y^j contributes two real axes with
 * N points spanning [0, L). Axis order is (x^1, y^1, ..., x^n, y^n); fields
 * are stored row-major with the last axis fastest. Total points: N^(2n).
 */
struct TorusLattice {
    int n = 1;
    int N = 8;
    double L = 1.0;

    static TorusLattice make(int n, int N, double L);

    int axes() const { return 2 * n; }
    std::size_t points() const;
    double spacing() const { return L / N; }

    bool operator==(const TorusLattice&) const = default;
};

/// Integer frequency of grid index m in wrap-around order, k in (-N/2, N/2].
int wrap_frequency(int m, int N);

/** Real grid function. Values row-major over (x^1, y^1, ..., x^n, y^n). */
struct ScalarField {
    TorusLattice lat;
    std::vector<double> v;

    ScalarField() = default;
    explicit ScalarField(const TorusLattice& l) : lat(l), v(l.points(), 0.0) {}

    std::size_t size() const { return v.size(); }
    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }

    double max_abs() const;
    double mean() const;
    bool all_finite() const;
};

ScalarField operator+(const ScalarField& a, const ScalarField& b);
ScalarField operator-(const ScalarField& a, const ScalarField& b);
ScalarField operator*(double c, const ScalarField& a);

/** Complex grid function (e.g. a mixed complex derivative of a real field). */
struct ComplexField {
    TorusLattice lat;
    std::vector<cplx> v;

    ComplexField() = default;
    explicit ComplexField(const TorusLattice& l) : lat(l), v(l.points(), cplx{0.0, 0.0}) {}

    std::size_t size() const { return v.size(); }
    cplx& operator[](std::size_t i) { return v[i]; }
    const cplx& operator[](std::size_t i) const { return v[i]; }

    ScalarField real_part() const;
    ScalarField imag_part() const;
    double max_abs() const;
};

/** Fourier coefficients, one complex number per integer frequency vector
 *  k in (-N/2, N/2]^(2n), stored in wrap-around order with the same layout
 *  as grid fields. Convention: f(x) = sum_k c(k) exp(2*pi*i k.x / L).
 */
struct SpectralCoeffs {
    TorusLattice lat;
    std::vector<cplx> c;

    SpectralCoeffs() = default;
    explicit SpectralCoeffs(const TorusLattice& l) : lat(l), c(l.points(), cplx{0.0, 0.0}) {}
};

SpectralCoeffs forward_transform(const ScalarField& f);
SpectralCoeffs forward_transform(const ComplexField& f);
ScalarField inverse_transform(const SpectralCoeffs& c);          // real part of the synthesis
ComplexField inverse_transform_complex(const SpectralCoeffs& c);

/// Largest deviation from Hermitian symmetry c(-k) = conj(c(k)), relative
/// to the largest coefficient magnitude. Zero field reports 0.
double hermitian_symmetry_residual(const SpectralCoeffs& c);

/** One factor of a mixed complex derivative: d/dz^index (bar = false) or
 *  d/dzbar^index (bar = true); index is 0-based, < n. */
struct DerivFactor {
    int index = 0;
    bool bar = false;
};

/// Multiply coefficients by the exact spectral symbol of the given factors.
/// Total order (factors.size()) at most 4; Nyquist-axis components of the
/// symbol are zero.
SpectralCoeffs apply_complex_derivative(const SpectralCoeffs& c, std::span<const DerivFactor> factors);

/// Exact spectral mixed complex derivative of a real field. Result is
/// complex in general; use real_part()/imag_part() to split.
ComplexField complex_derivative(const ScalarField& f, std::span<const DerivFactor> factors);
ComplexField complex_derivative(const ComplexField& f, std::span<const DerivFactor> factors);

/// Real-axis spectral derivative with per-axis orders beta (size 2n,
/// total order <= 4). Real fields map to real fields.
ScalarField axis_derivative(const SpectralCoeffs& c, std::span<const int> beta);

/// Two-thirds-rule truncation: zero every mode with |k| > N/3 on any axis.
/// Optional guard against aliasing from products of derivative fields.
SpectralCoeffs truncate_two_thirds(const SpectralCoeffs& c);

/// Spectral multiplier of d/dz^index on frequency vector k (size 2n).
cplx holo_symbol(const TorusLattice& lat, int index, std::span<const int> k);

/// Grid coordinates of flat index p, written into coords (size 2n).
void unflatten(const TorusLattice& lat, std::size_t p, std::span<int> coords);

/// Cap on worker threads used in data-parallel loops, from CALABI_THREADS
/// (defaults to the hardware/OpenMP maximum).
int worker_threads();

} // namespace calabi
