#include "calabi/norms.hpp"

#include "calabi/curvature.hpp"

#include <algorithm>
#include <cmath>

namespace calabi {

namespace {

void enumerate_multi_indices(int axes, int order, std::vector<int>& beta, int axis,
                             std::vector<std::vector<int>>& out) {
    if (axis == axes - 1) {
        beta[static_cast<std::size_t>(axis)] = order;
        out.push_back(beta);
        return;
    }
    for (int b = order; b >= 0; --b) {
        beta[static_cast<std::size_t>(axis)] = b;
        enumerate_multi_indices(axes, order - b, beta, axis + 1, out);
    }
}

std::vector<std::vector<int>> multi_indices(int axes, int order) {
    std::vector<std::vector<int>> out;
    std::vector<int> beta(static_cast<std::size_t>(axes), 0);
    enumerate_multi_indices(axes, order, beta, 0, out);
    return out;
}

struct Offset {
    std::vector<int> d;
    double dist;
    double weight; // dist^(-alpha)
};

/// Half-box offsets (first nonzero component positive) with per-axis
/// separation at most max_sep, sorted by torus distance.
std::vector<Offset> build_offsets(const TorusLattice& lat, int max_sep, double alpha) {
    const int axes = lat.axes();
    const double h = lat.spacing();
    std::vector<Offset> offsets;
    std::vector<int> d(static_cast<std::size_t>(axes), -max_sep);
    while (true) {
        bool nonzero = false, lead_positive = false;
        for (int a = 0; a < axes; ++a) {
            if (d[static_cast<std::size_t>(a)] != 0) {
                nonzero = true;
                lead_positive = d[static_cast<std::size_t>(a)] > 0;
                break;
            }
        }
        if (nonzero && lead_positive) {
            double s2 = 0.0;
            for (int a = 0; a < axes; ++a) {
                const double da = h * d[static_cast<std::size_t>(a)];
                s2 += da * da;
            }
            const double dist = std::sqrt(s2);
            offsets.push_back({d, dist, std::pow(dist, -alpha)});
        }
        int a = axes - 1;
        while (a >= 0 && ++d[static_cast<std::size_t>(a)] > max_sep) d[static_cast<std::size_t>(a--)] = -max_sep;
        if (a < 0) break;
    }
    std::sort(offsets.begin(), offsets.end(), [](const Offset& x, const Offset& y) { return x.dist < y.dist; });
    return offsets;
}

/// Scan the innermost axis in the two wrap-free segments so the compiler can
/// vectorize; returns the running max of |v[p + c] - v[q + shifted c]|.
inline double scan_last_axis(const double* v, std::size_t p, std::size_t q, int N, int d, int stride,
                             double local) {
    if (stride == 1) {
        const double* a = v + p;
        const double* b = v + q + static_cast<std::size_t>(d);
        for (int c = 0; c < N - d; ++c) local = std::max(local, std::abs(a[c] - b[c]));
        a += N - d;
        b += N - d - N;
        for (int c = 0; c < d; ++c) local = std::max(local, std::abs(a[c] - b[c]));
        return local;
    }
    for (int c = 0; c < N; c += stride)
        local = std::max(local, std::abs(v[p + static_cast<std::size_t>(c)] -
                                         v[q + static_cast<std::size_t>((c + d) % N)]));
    return local;
}

/// Largest |f(p) - f(p + d)| over the strided base points for one offset.
double max_delta_for_offset(const ScalarField& f, int stride, std::span<const int> d) {
    const TorusLattice& lat = f.lat;
    const int N = lat.N;
    const int axes = lat.axes();

    // Per-axis shifted index contribution, with the row stride baked in.
    std::array<std::vector<std::size_t>, 4> qoff;
    std::size_t row = 1;
    for (int a = axes - 1; a >= 0; --a) {
        qoff[static_cast<std::size_t>(a)].resize(static_cast<std::size_t>(N));
        for (int c = 0; c < N; ++c)
            qoff[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)] =
                static_cast<std::size_t>((c + d[static_cast<std::size_t>(a)] + N) % N) * row;
        row *= static_cast<std::size_t>(N);
    }
    const int dlast = ((d[static_cast<std::size_t>(axes - 1)] % N) + N) % N;

    const double* v = f.v.data();
    double out = 0.0;
    if (axes == 2) {
        const std::size_t rows = static_cast<std::size_t>(N);
#ifdef _OPENMP
#pragma omp parallel for reduction(max : out) num_threads(worker_threads()) schedule(static)
#endif
        for (int c0 = 0; c0 < N; c0 += stride) {
            const std::size_t p0 = static_cast<std::size_t>(c0) * rows;
            const std::size_t q0 = qoff[0][static_cast<std::size_t>(c0)];
            out = std::max(out, scan_last_axis(v, p0, q0, N, dlast, stride, out));
        }
    } else {
        const std::size_t n3 = static_cast<std::size_t>(N) * N * N;
        const std::size_t n2 = static_cast<std::size_t>(N) * N;
#ifdef _OPENMP
#pragma omp parallel for reduction(max : out) num_threads(worker_threads()) schedule(static)
#endif
        for (int c0 = 0; c0 < N; c0 += stride) {
            double local = 0.0;
            const std::size_t p0 = static_cast<std::size_t>(c0) * n3;
            const std::size_t q0 = qoff[0][static_cast<std::size_t>(c0)];
            for (int c1 = 0; c1 < N; c1 += stride) {
                const std::size_t p1 = p0 + static_cast<std::size_t>(c1) * n2;
                const std::size_t q1 = q0 + qoff[1][static_cast<std::size_t>(c1)];
                for (int c2 = 0; c2 < N; c2 += stride) {
                    const std::size_t p2 = p1 + static_cast<std::size_t>(c2) * static_cast<std::size_t>(N);
                    const std::size_t q2 = q1 + qoff[2][static_cast<std::size_t>(c2)];
                    local = scan_last_axis(v, p2, q2, N, dlast, stride, local);
                }
            }
            out = std::max(out, local);
        }
    }
    return out;
}

/// Max over sampled pairs of max-component |f(p) - f(q)| / dist^alpha.
/// Offsets are pruned with two rigorous bounds on |f(p) - f(q)|: the value
/// range and the lattice-path Lipschitz estimate sum_a |d_a| M1_a built from
/// unit-shift max differences.
double seminorm_of(const std::vector<ScalarField>& comps, const TorusLattice& lat, const HolderParams& params) {
    if (comps.empty()) return 0.0;

    const int axes = lat.axes();
    const int stride = std::max(1, params.pair_stride);
    const int max_sep = std::min(params.max_separation, lat.N / 2);
    std::vector<Offset> offsets = build_offsets(lat, max_sep, params.alpha);
    // Descending distance: the far offsets seed a strong running max that
    // the Lipschitz bound then uses to skip the near field.
    std::reverse(offsets.begin(), offsets.end());

    struct Comp {
        double range;
        std::array<double, 4> unit_shift;
        const ScalarField* f;
    };
    std::vector<Comp> ranked;
    for (const ScalarField& f : comps) {
        const auto [mn, mx] = std::minmax_element(f.v.begin(), f.v.end());
        Comp comp{*mx - *mn, {}, &f};
        for (int a = 0; a < axes; ++a) {
            std::array<int, 4> unit{};
            unit[static_cast<std::size_t>(a)] = 1;
            comp.unit_shift[static_cast<std::size_t>(a)] =
                max_delta_for_offset(f, 1, std::span<const int>(unit.data(), static_cast<std::size_t>(axes)));
        }
        ranked.push_back(std::move(comp));
    }
    std::sort(ranked.begin(), ranked.end(), [](const Comp& x, const Comp& y) { return x.range > y.range; });

    double best = 0.0;
    for (const Comp& comp : ranked) {
        for (const Offset& off : offsets) {
            double lipschitz = 0.0;
            for (int a = 0; a < axes; ++a)
                lipschitz += std::abs(off.d[static_cast<std::size_t>(a)]) *
                             comp.unit_shift[static_cast<std::size_t>(a)];
            if (std::min(comp.range, lipschitz) * off.weight <= best) continue;
            best = std::max(best, max_delta_for_offset(*comp.f, stride, off.d) * off.weight);
        }
    }
    return best;
}

std::vector<ScalarField> order_k_derivatives(const SpectralCoeffs& spec, int k) {
    std::vector<ScalarField> out;
    for (const std::vector<int>& beta : multi_indices(spec.lat.axes(), k))
        out.push_back(axis_derivative(spec, beta));
    return out;
}

} // namespace

double holder_seminorm(const ScalarField& f, int k, const HolderParams& params) {
    if (k < 0 || k > 4) throw std::invalid_argument("holder_seminorm: order must be in 0..4");
    const SpectralCoeffs spec = forward_transform(f);
    return seminorm_of(order_k_derivatives(spec, k), f.lat, params);
}

double holder_norm(const ScalarField& f, int k, const HolderParams& params) {
    if (k < 0 || k > 4) throw std::invalid_argument("holder_norm: order must be in 0..4");
    if (!(params.alpha > 0.0 && params.alpha < 1.0))
        throw std::invalid_argument("holder_norm: alpha must be in (0,1)");

    const SpectralCoeffs spec = forward_transform(f);
    double total = 0.0;
    std::vector<ScalarField> top;
    for (int m = 0; m <= k; ++m) {
        std::vector<ScalarField> derivs = order_k_derivatives(spec, m);
        for (const ScalarField& d : derivs) total += d.max_abs();
        if (m == k) top = std::move(derivs);
    }
    return total + seminorm_of(top, f.lat, params);
}

double interpolation_ratio(const ScalarField& f, const HolderParams& params) {
    if (f.max_abs() == 0.0)
        throw std::domain_error("interpolation_ratio: undefined for the zero field");
    const double n2 = holder_norm(f, 2, params);
    const double n3 = holder_norm(f, 3, params);
    const double n4 = holder_norm(f, 4, params);
    return n3 * n3 / (n2 * n4);
}

TrajectoryNorms weighted_trajectory_norm(const ReferenceGeometry& ref,
                                         std::span<const FlowSnapshot> traj,
                                         const HolderParams& params) {
    if (traj.size() < 2)
        throw std::invalid_argument("weighted_trajectory_norm: need at least two snapshots");

    const double rbar = average_scalar(ref.metric());
    TrajectoryNorms out;
    for (const FlowSnapshot& snap : traj) {
        SnapshotNorms row;
        row.t = snap.t;
        row.phi_2a = holder_norm(snap.phi, 2, params);
        row.phi_4a = holder_norm(snap.phi, 4, params);
        ScalarField dot = scalar_curvature(assemble_metric(ref, snap.phi));
        for (double& x : dot.v) x -= rbar;
        row.dot_0a = holder_norm(dot, 0, params);
        row.weighted = std::sqrt(std::max(0.0, snap.t)) * (row.dot_0a + row.phi_4a);
        if (snap.t > 0.0) out.sup_weighted = std::max(out.sup_weighted, row.weighted);
        out.rows.push_back(row);
    }
    out.initial_2a = out.rows.front().phi_2a;
    out.c_measured = out.initial_2a > 0.0 ? out.sup_weighted / out.initial_2a : 0.0;
    return out;
}

DecayFit fit_exponential_decay(std::span<const std::pair<double, double>> series) {
    if (series.size() < 5)
        throw std::invalid_argument("fit_exponential_decay: need at least 5 points");
    for (const auto& [t, v] : series)
        if (!(v > 0.0))
            throw std::domain_error("fit_exponential_decay: values must be positive");

    const double m = static_cast<double>(series.size());
    double st = 0.0, sy = 0.0;
    for (const auto& [t, v] : series) {
        st += t;
        sy += std::log(v);
    }
    const double tbar = st / m, ybar = sy / m;
    double sxx = 0.0, sxy = 0.0, stot = 0.0;
    for (const auto& [t, v] : series) {
        const double dt = t - tbar, dy = std::log(v) - ybar;
        sxx += dt * dt;
        sxy += dt * dy;
        stot += dy * dy;
    }
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    double sres = 0.0;
    for (const auto& [t, v] : series) {
        const double r = std::log(v) - (ybar + slope * (t - tbar));
        sres += r * r;
    }
    DecayFit fit;
    fit.rate = -slope;
    fit.r_squared = stot > 0.0 ? 1.0 - sres / stot : 1.0;
    return fit;
}

} // namespace calabi
