#include "calabi/curvature.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace calabi {

namespace {

ScalarField log_det(const InverseDet& id) {
    ScalarField out(id.det.lat);
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = std::log(id.det[p]);
    return out;
}

HermitianMetricField ricci_impl(const InverseDet& id) {
    HermitianMetricField r = dd_bar(log_det(id));
    for (cplx& x : r.m) x = -x;
    return r;
}

/// tr(ginv * a) pointwise: the contraction g^{i jbar} a_{i jbar}.
cplx trace_against_inverse(const HermitianMetricField& ginv, const HermitianMetricField& a, std::size_t p) {
    cplx s{0.0, 0.0};
    const int n = ginv.lat.n;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            s += ginv.at(p, i, j) * a.at(p, j, i);
    return s;
}

ScalarField scalar_impl(const InverseDet& id, const HermitianMetricField& ric, double* imag_residual) {
    ScalarField out(id.det.lat);
    double worst = 0.0;
    for (std::size_t p = 0; p < out.size(); ++p) {
        const cplx tr = trace_against_inverse(id.inv, ric, p);
        out[p] = tr.real();
        worst = std::max(worst, std::abs(tr.imag()));
    }
    if (imag_residual) *imag_residual = worst;
    return out;
}

double average_impl(const InverseDet& id, const ScalarField& r) {
    double num = 0.0, den = 0.0;
    for (std::size_t p = 0; p < r.size(); ++p) {
        num += r[p] * id.det[p];
        den += id.det[p];
    }
    return num / den;
}

double energy_impl(const InverseDet& id, const ScalarField& r, double rbar) {
    const TorusLattice& lat = r.lat;
    double cell = 1.0;
    for (int a = 0; a < lat.axes(); ++a) cell *= lat.spacing();
    double sum = 0.0;
    for (std::size_t p = 0; p < r.size(); ++p) {
        const double d = r[p] - rbar;
        sum += d * d * id.det[p];
    }
    return sum * cell;
}

ScalarField riemann_impl(const HermitianMetricField& g, const InverseDet& id) {
    const TorusLattice& lat = g.lat;
    const int n = lat.n;
    const std::size_t pts = lat.points();

    // Spectra of the metric entries, then first and mixed second derivatives.
    std::vector<SpectralCoeffs> entry_spec(static_cast<std::size_t>(n * n));
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
            ComplexField e(lat);
            for (std::size_t p = 0; p < pts; ++p) e[p] = g.at(p, k, l);
            entry_spec[static_cast<std::size_t>(k * n + l)] = forward_transform(e);
        }

    auto first = std::vector<ComplexField>(static_cast<std::size_t>(n * n * n));  // d_i g_{k lbar}
    auto second = std::vector<ComplexField>(static_cast<std::size_t>(n * n * n * n)); // d_i d_jbar g_{k lbar}
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
            const SpectralCoeffs& es = entry_spec[static_cast<std::size_t>(k * n + l)];
            for (int i = 0; i < n; ++i) {
                const DerivFactor f1[1] = {{i, false}};
                first[static_cast<std::size_t>((i * n + k) * n + l)] =
                    inverse_transform_complex(apply_complex_derivative(es, f1));
                for (int j = 0; j < n; ++j) {
                    const DerivFactor f2[2] = {{i, false}, {j, true}};
                    second[static_cast<std::size_t>(((i * n + j) * n + k) * n + l)] =
                        inverse_transform_complex(apply_complex_derivative(es, f2));
                }
            }
        }

    auto dg = [&](int i, int k, int l, std::size_t p) -> const cplx& {
        return first[static_cast<std::size_t>((i * n + k) * n + l)][p];
    };
    auto ddg = [&](int i, int j, int k, int l, std::size_t p) -> const cplx& {
        return second[static_cast<std::size_t>(((i * n + j) * n + k) * n + l)][p];
    };

    ScalarField out(lat);
    std::array<cplx, 16> curv{}, t1{}, t2{};
    for (std::size_t p = 0; p < pts; ++p) {
        auto W = [&](int r, int c) { return id.inv.at(p, r, c); };
        auto idx = [n](int a, int b, int c, int d) {
            return static_cast<std::size_t>(((a * n + b) * n + c) * n + d);
        };

        // R_{i jbar k lbar} = -dd g + g^{p qbar} (d_i g_{k qbar})(d_jbar g_{p lbar}),
        // with d_jbar g_{p lbar} = conj(d_j g_{l pbar}).
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l) {
                        cplx s = -ddg(i, j, k, l, p);
                        for (int q = 0; q < n; ++q)
                            for (int r = 0; r < n; ++r)
                                s += W(q, r) * dg(i, k, q, p) * std::conj(dg(j, l, r, p));
                        curv[idx(i, j, k, l)] = s;
                    }

        // Raise all four indices with the inverse metric, then contract with
        // the conjugate tensor.
        for (int a = 0; a < n; ++a)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l) {
                        cplx s{0.0, 0.0};
                        for (int i = 0; i < n; ++i) s += W(a, i) * curv[idx(i, j, k, l)];
                        t1[idx(a, j, k, l)] = s;
                    }
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l) {
                        cplx s{0.0, 0.0};
                        for (int j = 0; j < n; ++j) s += t1[idx(a, j, k, l)] * W(j, b);
                        t2[idx(a, b, k, l)] = s;
                    }
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                for (int c = 0; c < n; ++c)
                    for (int l = 0; l < n; ++l) {
                        cplx s{0.0, 0.0};
                        for (int k = 0; k < n; ++k) s += t2[idx(a, b, k, l)] * W(c, k);
                        t1[idx(a, b, c, l)] = s;
                    }
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                for (int c = 0; c < n; ++c)
                    for (int d = 0; d < n; ++d) {
                        cplx s{0.0, 0.0};
                        for (int l = 0; l < n; ++l) s += t1[idx(a, b, c, l)] * W(l, d);
                        t2[idx(a, b, c, d)] = s;
                    }
        cplx norm2{0.0, 0.0};
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                for (int c = 0; c < n; ++c)
                    for (int d = 0; d < n; ++d)
                        norm2 += t2[idx(a, b, c, d)] * std::conj(curv[idx(a, b, c, d)]);
        out[p] = std::sqrt(std::max(0.0, norm2.real()));
    }
    return out;
}

} // namespace

HermitianMetricField ricci(const HermitianMetricField& g) {
    return ricci_impl(inverse_and_det(g));
}

ScalarField scalar_curvature(const HermitianMetricField& g) {
    const InverseDet id = inverse_and_det(g);
    return scalar_impl(id, ricci_impl(id), nullptr);
}

double average_scalar(const HermitianMetricField& g) {
    const InverseDet id = inverse_and_det(g);
    return average_impl(id, scalar_impl(id, ricci_impl(id), nullptr));
}

double calabi_energy(const HermitianMetricField& g, double rbar) {
    const InverseDet id = inverse_and_det(g);
    return energy_impl(id, scalar_impl(id, ricci_impl(id), nullptr), rbar);
}

ScalarField riemann_norm(const HermitianMetricField& g) {
    return riemann_impl(g, inverse_and_det(g));
}

CurvatureReport curvature_report(const HermitianMetricField& g) {
    const InverseDet id = inverse_and_det(g);
    CurvatureReport rep;
    rep.ricci = ricci_impl(id);
    rep.scalar = scalar_impl(id, rep.ricci, &rep.scalar_imag_residual);
    rep.rbar = average_impl(id, rep.scalar);
    rep.calabi_energy = energy_impl(id, rep.scalar, rep.rbar);
    rep.max_riemann = riemann_impl(g, id).max_abs();
    return rep;
}

} // namespace calabi
