#include "calabi/metric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace calabi {

namespace {

/// Eigenvalues of a 1x1 or 2x2 Hermitian matrix, ascending.
std::array<double, 2> herm_eigs(const HermitianMetricField& g, std::size_t p) {
    if (g.lat.n == 1) {
        const double a = g.at(p, 0, 0).real();
        return {a, a};
    }
    const double a = g.at(p, 0, 0).real();
    const double d = g.at(p, 1, 1).real();
    const double b2 = std::norm(g.at(p, 0, 1));
    const double tr = a + d;
    const double disc = std::sqrt(std::max(0.0, (a - d) * (a - d) + 4.0 * b2));
    return {(tr - disc) / 2.0, (tr + disc) / 2.0};
}

} // namespace

double HermitianMetricField::hermitian_residual() const {
    double worst = 0.0;
    const std::size_t pts = lat.points();
    for (std::size_t p = 0; p < pts; ++p)
        for (int i = 0; i < lat.n; ++i)
            for (int j = 0; j < lat.n; ++j)
                worst = std::max(worst, std::abs(at(p, i, j) - std::conj(at(p, j, i))));
    return worst;
}

HermitianMetricField operator+(const HermitianMetricField& a, const HermitianMetricField& b) {
    HermitianMetricField r(a.lat);
    for (std::size_t i = 0; i < r.m.size(); ++i) r.m[i] = a.m[i] + b.m[i];
    return r;
}

HermitianMetricField operator-(const HermitianMetricField& a, const HermitianMetricField& b) {
    HermitianMetricField r(a.lat);
    for (std::size_t i = 0; i < r.m.size(); ++i) r.m[i] = a.m[i] - b.m[i];
    return r;
}

HermitianMetricField operator*(double c, const HermitianMetricField& a) {
    HermitianMetricField r(a.lat);
    for (std::size_t i = 0; i < r.m.size(); ++i) r.m[i] = c * a.m[i];
    return r;
}

HermitianMetricField constant_metric(const TorusLattice& lat, const std::array<cplx, 4>& g0) {
    HermitianMetricField g(lat);
    const std::size_t pts = lat.points();
    for (std::size_t p = 0; p < pts; ++p)
        for (int i = 0; i < lat.n; ++i)
            for (int j = 0; j < lat.n; ++j)
                g.at(p, i, j) = g0[static_cast<std::size_t>(i * lat.n + j)];
    return g;
}

HermitianMetricField dd_bar(const ScalarField& phi) {
    const TorusLattice& lat = phi.lat;
    HermitianMetricField h(lat);
    const SpectralCoeffs spec = forward_transform(phi);
    for (int i = 0; i < lat.n; ++i) {
        for (int j = 0; j < lat.n; ++j) {
            const DerivFactor fac[2] = {{i, false}, {j, true}};
            const ComplexField dij = inverse_transform_complex(apply_complex_derivative(spec, fac));
            const std::size_t pts = lat.points();
            for (std::size_t p = 0; p < pts; ++p) h.at(p, i, j) = dij[p];
        }
    }
    return h;
}

ReferenceGeometry ReferenceGeometry::flat(const TorusLattice& lat) {
    ReferenceGeometry ref;
    ref.lat = lat;
    ref.psi = ScalarField(lat);
    return ref;
}

ReferenceGeometry ReferenceGeometry::make(const TorusLattice& lat, const std::array<cplx, 4>& g0, ScalarField psi) {
    ReferenceGeometry ref;
    ref.lat = lat;
    ref.g0 = g0;
    ref.psi = psi.v.empty() ? ScalarField(lat) : std::move(psi);
    const PositivityResult g0_pd = positivity_check(constant_metric(lat, g0));
    if (!g0_pd.is_pd)
        throw InvalidMetricError("reference geometry: g0 is not positive-definite");
    const PositivityResult ref_pd = positivity_check(ref.metric());
    if (!ref_pd.is_pd)
        throw InvalidMetricError("reference geometry: g0 + dd_bar(psi) is not positive-definite");
    return ref;
}

bool ReferenceGeometry::has_background() const {
    for (double x : psi.v)
        if (x != 0.0) return true;
    return false;
}

HermitianMetricField ReferenceGeometry::metric() const {
    HermitianMetricField g = constant_metric(lat, g0);
    if (has_background()) g = g + dd_bar(psi);
    return g;
}

HermitianMetricField assemble_metric(const ReferenceGeometry& ref, const ScalarField& phi) {
    return ref.metric() + dd_bar(phi);
}

PositivityResult positivity_check(const HermitianMetricField& g, double pd_floor) {
    double min_eig = std::numeric_limits<double>::infinity();
    const std::size_t pts = g.lat.points();
    for (std::size_t p = 0; p < pts; ++p) min_eig = std::min(min_eig, herm_eigs(g, p)[0]);
    return {min_eig > pd_floor && std::isfinite(min_eig), min_eig};
}

MetricBounds metric_bounds(const HermitianMetricField& g, const HermitianMetricField& g_ref) {
    if (!positivity_check(g).is_pd || !positivity_check(g_ref).is_pd)
        throw InvalidMetricError("metric_bounds: inputs must be positive-definite");

    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    const std::size_t pts = g.lat.points();
    if (g.lat.n == 1) {
        for (std::size_t p = 0; p < pts; ++p) {
            const double mu = g.at(p, 0, 0).real() / g_ref.at(p, 0, 0).real();
            lo = std::min(lo, mu);
            hi = std::max(hi, mu);
        }
    } else {
        // Generalized eigenvalues of (g, g_ref): roots of
        // mu^2 det(R) - mu * mix(g, R) + det(g), with mix the mixed 2x2
        // determinant expansion.
        for (std::size_t p = 0; p < pts; ++p) {
            const double detR = (g_ref.at(p, 0, 0) * g_ref.at(p, 1, 1)).real() - std::norm(g_ref.at(p, 0, 1));
            const double detG = (g.at(p, 0, 0) * g.at(p, 1, 1)).real() - std::norm(g.at(p, 0, 1));
            const double mix = (g.at(p, 0, 0) * g_ref.at(p, 1, 1) + g_ref.at(p, 0, 0) * g.at(p, 1, 1)).real() -
                               2.0 * (g.at(p, 0, 1) * std::conj(g_ref.at(p, 0, 1))).real();
            const double disc = std::sqrt(std::max(0.0, mix * mix - 4.0 * detR * detG));
            lo = std::min(lo, (mix - disc) / (2.0 * detR));
            hi = std::max(hi, (mix + disc) / (2.0 * detR));
        }
    }
    return {lo, hi};
}

InverseDet inverse_and_det(const HermitianMetricField& g) {
    const PositivityResult pd = positivity_check(g);
    if (!pd.is_pd)
        throw InvalidMetricError("inverse_and_det: metric is not positive-definite");

    InverseDet out{HermitianMetricField(g.lat), ScalarField(g.lat)};
    const std::size_t pts = g.lat.points();
    if (g.lat.n == 1) {
        for (std::size_t p = 0; p < pts; ++p) {
            const double a = g.at(p, 0, 0).real();
            out.det[p] = a;
            out.inv.at(p, 0, 0) = cplx{1.0 / a, 0.0};
        }
    } else {
        for (std::size_t p = 0; p < pts; ++p) {
            const cplx a = g.at(p, 0, 0), b = g.at(p, 0, 1);
            const cplx c = g.at(p, 1, 0), d = g.at(p, 1, 1);
            const double det = (a * d).real() - std::norm(b);
            out.det[p] = det;
            out.inv.at(p, 0, 0) = d / det;
            out.inv.at(p, 0, 1) = -b / det;
            out.inv.at(p, 1, 0) = -c / det;
            out.inv.at(p, 1, 1) = a / det;
        }
    }
    return out;
}

double total_volume(const HermitianMetricField& g) {
    const std::size_t pts = g.lat.points();
    double cell = 1.0;
    for (int a = 0; a < g.lat.axes(); ++a) cell *= g.lat.spacing();
    double sum = 0.0;
    if (g.lat.n == 1) {
        for (std::size_t p = 0; p < pts; ++p) sum += g.at(p, 0, 0).real();
    } else {
        for (std::size_t p = 0; p < pts; ++p)
            sum += (g.at(p, 0, 0) * g.at(p, 1, 1)).real() - std::norm(g.at(p, 0, 1));
    }
    return sum * cell;
}

} // namespace calabi
