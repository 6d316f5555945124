#include "calabi/lattice.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace calabi {

namespace {

bool is_power_of_two(int x) { return x > 0 && (x & (x - 1)) == 0; }

/** Cached FFTW plans per (rank, N). Plans are created unaligned so they can
 *  run directly on caller storage (out-of-place c2c preserves its input);
 *  only plan creation is serialized. */
class FftEngine {
public:
    static FftEngine& get(const TorusLattice& lat) {
        static std::map<std::pair<int, int>, FftEngine*> cache;
        static std::mutex cache_mutex;
        std::lock_guard<std::mutex> lock(cache_mutex);
        auto key = std::make_pair(lat.axes(), lat.N);
        auto it = cache.find(key);
        if (it == cache.end())
            it = cache.emplace(key, new FftEngine(lat.axes(), lat.N)).first;
        return *it->second;
    }

    void forward(const cplx* in, cplx* out) const { execute(plan_fwd_, in, out); }
    void backward(const cplx* in, cplx* out) const { execute(plan_bck_, in, out); }

private:
    FftEngine(int rank, int N) {
        std::vector<int> dims(rank, N);
        std::size_t total = 1;
        for (int a = 0; a < rank; ++a) total *= static_cast<std::size_t>(N);
        std::vector<cplx> probe_in(total), probe_out(total);
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        auto* pin = reinterpret_cast<fftw_complex*>(probe_in.data());
        auto* pout = reinterpret_cast<fftw_complex*>(probe_out.data());
        plan_fwd_ = fftw_plan_dft(rank, dims.data(), pin, pout, FFTW_FORWARD, flags);
        plan_bck_ = fftw_plan_dft(rank, dims.data(), pin, pout, FFTW_BACKWARD, flags);
    }

    static void execute(fftw_plan plan, const cplx* in, cplx* out) {
        fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in)),
                         reinterpret_cast<fftw_complex*>(out));
    }

    fftw_plan plan_fwd_ = nullptr;
    fftw_plan plan_bck_ = nullptr;
};

} // namespace

TorusLattice TorusLattice::make(int n, int N, double L) {
    if (n != 1 && n != 2)
        throw std::invalid_argument("lattice: complex dimension n must be 1 or 2");
    if (N < 8 || !is_power_of_two(N))
        throw std::invalid_argument("lattice: N must be a power of two >= 8");
    if (!(L > 0.0) || !std::isfinite(L))
        throw std::invalid_argument("lattice: period L must be positive and finite");
    return TorusLattice{n, N, L};
}

std::size_t TorusLattice::points() const {
    std::size_t p = 1;
    for (int a = 0; a < axes(); ++a) p *= static_cast<std::size_t>(N);
    return p;
}

int wrap_frequency(int m, int N) { return m <= N / 2 ? m : m - N; }

double ScalarField::max_abs() const {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double ScalarField::mean() const {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

bool ScalarField::all_finite() const {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

ScalarField operator+(const ScalarField& a, const ScalarField& b) {
    ScalarField r(a.lat);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

ScalarField operator-(const ScalarField& a, const ScalarField& b) {
    ScalarField r(a.lat);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

ScalarField operator*(double c, const ScalarField& a) {
    ScalarField r(a.lat);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = c * a[i];
    return r;
}

ScalarField ComplexField::real_part() const {
    ScalarField r(lat);
    for (std::size_t i = 0; i < v.size(); ++i) r[i] = v[i].real();
    return r;
}

ScalarField ComplexField::imag_part() const {
    ScalarField r(lat);
    for (std::size_t i = 0; i < v.size(); ++i) r[i] = v[i].imag();
    return r;
}

double ComplexField::max_abs() const {
    double m = 0.0;
    for (const cplx& x : v) m = std::max(m, std::abs(x));
    return m;
}

SpectralCoeffs forward_transform(const ComplexField& f) {
    SpectralCoeffs out(f.lat);
    FftEngine::get(f.lat).forward(f.v.data(), out.c.data());
    const double scale = 1.0 / static_cast<double>(f.lat.points());
    for (cplx& c : out.c) c *= scale;
    return out;
}

SpectralCoeffs forward_transform(const ScalarField& f) {
    ComplexField tmp(f.lat);
    for (std::size_t i = 0; i < f.size(); ++i) tmp[i] = cplx{f[i], 0.0};
    return forward_transform(tmp);
}

ComplexField inverse_transform_complex(const SpectralCoeffs& c) {
    ComplexField out(c.lat);
    FftEngine::get(c.lat).backward(c.c.data(), out.v.data());
    return out;
}

ScalarField inverse_transform(const SpectralCoeffs& c) {
    return inverse_transform_complex(c).real_part();
}

namespace {

/// Frequency component with the Nyquist mode removed (its odd-derivative
/// symbol is ambiguous on a real grid).
double nyquist_safe(int k, int N) { return k == N / 2 ? 0.0 : static_cast<double>(k); }

} // namespace

double hermitian_symmetry_residual(const SpectralCoeffs& sc) {
    const TorusLattice& lat = sc.lat;
    const int N = lat.N;
    const int axes = lat.axes();
    double max_mag = 0.0;
    for (const cplx& c : sc.c) max_mag = std::max(max_mag, std::abs(c));
    if (max_mag == 0.0) return 0.0;

    double worst = 0.0;
    std::vector<int> idx(axes, 0), mirror(axes, 0);
    const std::size_t total = lat.points();
    for (std::size_t p = 0; p < total; ++p) {
        std::size_t q = 0;
        for (int a = 0; a < axes; ++a) {
            mirror[a] = idx[a] == 0 ? 0 : N - idx[a];
            q = q * static_cast<std::size_t>(N) + static_cast<std::size_t>(mirror[a]);
        }
        worst = std::max(worst, std::abs(sc.c[p] - std::conj(sc.c[q])));
        for (int a = axes - 1; a >= 0; --a) {
            if (++idx[a] < N) break;
            idx[a] = 0;
        }
    }
    return worst / max_mag;
}

cplx holo_symbol(const TorusLattice& lat, int index, std::span<const int> k) {
    const double f = M_PI / lat.L;
    const double kx = nyquist_safe(k[2 * index], lat.N);
    const double ky = nyquist_safe(k[2 * index + 1], lat.N);
    // d/dz = (d/dx - i d/dy)/2 acting on exp(2*pi*i k.x / L)
    return cplx{0.0, f} * cplx{kx, -ky};
}

SpectralCoeffs apply_complex_derivative(const SpectralCoeffs& c, std::span<const DerivFactor> factors) {
    if (factors.size() > 4)
        throw std::invalid_argument("complex_derivative: total order above 4 is unsupported");
    for (const DerivFactor& f : factors)
        if (f.index < 0 || f.index >= c.lat.n)
            throw std::invalid_argument("complex_derivative: coordinate index out of range");

    const int N = c.lat.N;
    const int n = c.lat.n;
    const std::size_t nn = static_cast<std::size_t>(N) * static_cast<std::size_t>(N);

    // The symbol factorizes over complex coordinates: one (kx, ky) table per
    // coordinate, with all factors for that coordinate multiplied in.
    std::vector<std::vector<cplx>> tab(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::vector<cplx>& t = tab[static_cast<std::size_t>(i)];
        t.assign(nn, cplx{1.0, 0.0});
        for (const DerivFactor& f : factors) {
            if (f.index != i) continue;
            const double scale = M_PI / c.lat.L;
            for (int mx = 0; mx < N; ++mx) {
                const double kx = nyquist_safe(wrap_frequency(mx, N), N);
                for (int my = 0; my < N; ++my) {
                    const double ky = nyquist_safe(wrap_frequency(my, N), N);
                    const cplx z = cplx{0.0, scale} * cplx{kx, -ky};
                    t[static_cast<std::size_t>(mx) * N + my] *= f.bar ? -std::conj(z) : z;
                }
            }
        }
    }

    SpectralCoeffs out(c.lat);
    if (n == 1) {
        for (std::size_t p = 0; p < nn; ++p) out.c[p] = tab[0][p] * c.c[p];
    } else {
        for (std::size_t a = 0; a < nn; ++a) {
            const cplx za = tab[0][a];
            const std::size_t base = a * nn;
            for (std::size_t b = 0; b < nn; ++b) out.c[base + b] = za * tab[1][b] * c.c[base + b];
        }
    }
    return out;
}

ComplexField complex_derivative(const ScalarField& f, std::span<const DerivFactor> factors) {
    return inverse_transform_complex(apply_complex_derivative(forward_transform(f), factors));
}

ComplexField complex_derivative(const ComplexField& f, std::span<const DerivFactor> factors) {
    return inverse_transform_complex(apply_complex_derivative(forward_transform(f), factors));
}

ScalarField axis_derivative(const SpectralCoeffs& c, std::span<const int> beta) {
    const int axes = c.lat.axes();
    if (static_cast<int>(beta.size()) != axes)
        throw std::invalid_argument("axis_derivative: beta must have one entry per real axis");
    int order = 0;
    for (int b : beta) {
        if (b < 0) throw std::invalid_argument("axis_derivative: negative order");
        order += b;
    }
    if (order > 4)
        throw std::invalid_argument("axis_derivative: total order above 4 is unsupported");

    const int N = c.lat.N;
    const double f = 2.0 * M_PI / c.lat.L;
    std::vector<std::vector<cplx>> tab(static_cast<std::size_t>(axes),
                                       std::vector<cplx>(static_cast<std::size_t>(N), cplx{1.0, 0.0}));
    for (int a = 0; a < axes; ++a)
        for (int m = 0; m < N; ++m) {
            const cplx za{0.0, f * nyquist_safe(wrap_frequency(m, N), N)};
            for (int r = 0; r < beta[static_cast<std::size_t>(a)]; ++r)
                tab[static_cast<std::size_t>(a)][static_cast<std::size_t>(m)] *= za;
        }

    SpectralCoeffs out(c.lat);
    std::size_t p = 0;
    if (axes == 2) {
        for (int m0 = 0; m0 < N; ++m0) {
            const cplx s0 = tab[0][static_cast<std::size_t>(m0)];
            for (int m1 = 0; m1 < N; ++m1, ++p) out.c[p] = s0 * tab[1][static_cast<std::size_t>(m1)] * c.c[p];
        }
    } else {
        for (int m0 = 0; m0 < N; ++m0)
            for (int m1 = 0; m1 < N; ++m1) {
                const cplx s01 = tab[0][static_cast<std::size_t>(m0)] * tab[1][static_cast<std::size_t>(m1)];
                for (int m2 = 0; m2 < N; ++m2) {
                    const cplx s012 = s01 * tab[2][static_cast<std::size_t>(m2)];
                    for (int m3 = 0; m3 < N; ++m3, ++p)
                        out.c[p] = s012 * tab[3][static_cast<std::size_t>(m3)] * c.c[p];
                }
            }
    }
    return inverse_transform(out);
}

SpectralCoeffs truncate_two_thirds(const SpectralCoeffs& c) {
    const int N = c.lat.N;
    const int axes = c.lat.axes();
    const int cutoff = N / 3;
    std::vector<bool> keep(static_cast<std::size_t>(N));
    for (int m = 0; m < N; ++m) keep[static_cast<std::size_t>(m)] = std::abs(wrap_frequency(m, N)) <= cutoff;

    SpectralCoeffs out = c;
    std::vector<int> idx(static_cast<std::size_t>(axes), 0);
    for (std::size_t p = 0; p < out.c.size(); ++p) {
        for (int a = 0; a < axes; ++a)
            if (!keep[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])]) {
                out.c[p] = cplx{0.0, 0.0};
                break;
            }
        int a = axes - 1;
        while (a >= 0 && ++idx[static_cast<std::size_t>(a)] >= N) idx[static_cast<std::size_t>(a--)] = 0;
    }
    return out;
}

void unflatten(const TorusLattice& lat, std::size_t p, std::span<int> coords) {
    const int axes = lat.axes();
    for (int a = axes - 1; a >= 0; --a) {
        coords[a] = static_cast<int>(p % static_cast<std::size_t>(lat.N));
        p /= static_cast<std::size_t>(lat.N);
    }
}

int worker_threads() {
    static const int cached = [] {
        int hw = 1;
#ifdef _OPENMP
        hw = omp_get_max_threads();
#endif
        if (const char* env = std::getenv("CALABI_THREADS")) {
            char* end = nullptr;
            long cap = std::strtol(env, &end, 10);
            if (end != env && cap >= 1) hw = std::min<long>(hw, cap);
        }
        return std::max(1, hw);
    }();
    return cached;
}

} // namespace calabi
