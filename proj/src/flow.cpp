#include "calabi/flow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace calabi {

const char* to_string(FlowStatus s) {
    switch (s) {
        case FlowStatus::Running: return "Running";
        case FlowStatus::Converged: return "Converged";
        case FlowStatus::PositivityBreakdown: return "PositivityBreakdown";
        case FlowStatus::ContractionFailure: return "ContractionFailure";
        case FlowStatus::MaxStepsReached: return "MaxStepsReached";
    }
    return "?";
}

namespace {

using Mat = std::array<cplx, 4>; // n x n, row-major, n <= 2

Mat mat_at(const HermitianMetricField& f, std::size_t p) {
    Mat m{};
    const int n = f.lat.n;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            m[static_cast<std::size_t>(i * n + j)] = f.at(p, i, j);
    return m;
}

Mat matmul(int n, const Mat& a, const Mat& b) {
    Mat r{};
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            cplx s{0.0, 0.0};
            for (int k = 0; k < n; ++k)
                s += a[static_cast<std::size_t>(i * n + k)] * b[static_cast<std::size_t>(k * n + j)];
            r[static_cast<std::size_t>(i * n + j)] = s;
        }
    return r;
}

Mat mat_neg(int n, const Mat& a) {
    Mat r{};
    for (int i = 0; i < n * n; ++i) r[static_cast<std::size_t>(i)] = -a[static_cast<std::size_t>(i)];
    return r;
}

Mat mat_add3(int n, const Mat& a, const Mat& b, const Mat& c) {
    Mat r{};
    for (int i = 0; i < n * n; ++i)
        r[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i)] + b[static_cast<std::size_t>(i)] +
                                         c[static_cast<std::size_t>(i)];
    return r;
}

/// Third and fourth complex derivative tensors of a potential.
struct PotentialDerivs {
    HermitianMetricField hess;      // d_i d_jbar f
    std::vector<ComplexField> d3;   // [((i n + p) n + q)]: d_i d_p d_qbar f
    std::vector<ComplexField> d4;   // [(((i n + j) n + k) n + l)]: d_i d_jbar d_k d_lbar f
};

PotentialDerivs potential_derivs(const ScalarField& f) {
    const TorusLattice& lat = f.lat;
    const int n = lat.n;
    const SpectralCoeffs spec = forward_transform(f);

    PotentialDerivs out;
    out.hess = HermitianMetricField(lat);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const DerivFactor fac[2] = {{i, false}, {j, true}};
            const ComplexField d = inverse_transform_complex(apply_complex_derivative(spec, fac));
            for (std::size_t p = 0; p < lat.points(); ++p) out.hess.at(p, i, j) = d[p];
        }

    out.d3.resize(static_cast<std::size_t>(n * n * n));
    for (int i = 0; i < n; ++i)
        for (int p = 0; p < n; ++p)
            for (int q = 0; q < n; ++q) {
                const DerivFactor fac[3] = {{i, false}, {p, false}, {q, true}};
                out.d3[static_cast<std::size_t>((i * n + p) * n + q)] =
                    inverse_transform_complex(apply_complex_derivative(spec, fac));
            }

    out.d4.resize(static_cast<std::size_t>(n * n * n * n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l) {
                    const DerivFactor fac[4] = {{i, false}, {j, true}, {k, false}, {l, true}};
                    out.d4[static_cast<std::size_t>(((i * n + j) * n + k) * n + l)] =
                        inverse_transform_complex(apply_complex_derivative(spec, fac));
                }
    return out;
}

/// Reference-side data shared by the expanded formulas.
struct RefDerivs {
    HermitianMetricField gref;
    InverseDet ref_inv;
    bool varies = false;
    PotentialDerivs psi; // derivative tensors of the background potential
};

RefDerivs reference_derivs(const ReferenceGeometry& ref) {
    RefDerivs out;
    out.gref = ref.metric();
    out.ref_inv = inverse_and_det(out.gref);
    out.varies = ref.has_background();
    if (out.varies) out.psi = potential_derivs(ref.psi);
    return out;
}

ScalarField apply_bilaplacian(const BilaplacianSymbol& sym, const SpectralCoeffs& spec) {
    SpectralCoeffs out(spec.lat);
    for (std::size_t p = 0; p < out.c.size(); ++p) out.c[p] = sym.lambda[p] * spec.c[p];
    return inverse_transform(out);
}

ScalarField forcing_from_spectrum(const ReferenceGeometry& ref, const ScalarField& phi,
                                  const SpectralCoeffs& phi_spec, const BilaplacianSymbol& symbol,
                                  double rbar) {
    const HermitianMetricField g = assemble_metric(ref, phi);
    if (!positivity_check(g).is_pd)
        throw InvalidMetricError("forcing: metric is not positive-definite");
    const ScalarField r = scalar_curvature(g);
    ScalarField f = apply_bilaplacian(symbol, phi_spec);
    for (std::size_t p = 0; p < f.size(); ++p) f[p] += r[p] - rbar;
    return f;
}

} // namespace

FlowSetup make_flow_setup(ReferenceGeometry ref, BilaplacianSymbol symbol, ScalarField phi0,
                          StepControls controls, double tau0, double t_end, int snapshot_every,
                          HolderParams holder) {
    if (!(phi0.lat == ref.lat))
        throw std::invalid_argument("flow setup: phi0 lattice does not match the reference geometry");
    if (!(tau0 > 0.0)) throw std::invalid_argument("flow setup: tau0 must be positive");
    if (t_end < 0.0) throw std::invalid_argument("flow setup: t_end must be nonnegative");
    if (controls.tau_max <= 0.0) controls.tau_max = 1.0 / symbol.lambda_min_pos;

    FlowSetup setup;
    setup.ref = std::move(ref);
    setup.symbol = std::move(symbol);
    setup.phi0 = std::move(phi0);
    setup.controls = controls;
    setup.tau0 = std::min(tau0, controls.tau_max);
    setup.t_end = t_end;
    setup.snapshot_every = snapshot_every;
    setup.holder = holder;
    setup.ref_metric = setup.ref.metric();
    setup.rbar = average_scalar(setup.ref_metric);
    return setup;
}

ScalarField forcing(const ReferenceGeometry& ref, const ScalarField& phi,
                    const BilaplacianSymbol& symbol, double rbar) {
    return forcing_from_spectrum(ref, phi, forward_transform(phi), symbol, rbar);
}

namespace {

/** Pointwise evaluation of the expanded forcing pieces at one grid point.
 *
 *  T1..T4 are the chain-rule expansion of the reference bilaplacian; B1,
 *  B2a, B2b are the curvature contractions of the perturbed metric. All
 *  contractions follow g^{i jbar} = Minv[jbar][i] with Minv the plain
 *  matrix inverse.
 */
struct ExpandedTerms {
    cplx t1{}, t2{}, t3{}, t4{}, b1{}, b2a{}, b2b{};
};

class ExpandedEvaluator {
public:
    ExpandedEvaluator(const RefDerivs& rd, const PotentialDerivs& pd, const InverseDet& gv_inv)
        : rd_(rd), pd_(pd), gv_inv_(gv_inv), n_(rd.gref.lat.n) {}

    ExpandedTerms eval(std::size_t p) const {
        const int n = n_;
        const Mat Mr = mat_at(rd_.ref_inv.inv, p);
        const Mat Mv = mat_at(gv_inv_.inv, p);

        auto d4 = [&](int i, int j, int k, int l) {
            return pd_.d4[static_cast<std::size_t>(((i * n + j) * n + k) * n + l)][p];
        };
        auto phi3 = [&](int i, int a, int b) {
            return pd_.d3[static_cast<std::size_t>((i * n + a) * n + b)][p];
        };
        auto psi3 = [&](int i, int a, int b) {
            return rd_.varies ? rd_.psi.d3[static_cast<std::size_t>((i * n + a) * n + b)][p] : cplx{0.0, 0.0};
        };
        auto psi4 = [&](int i, int j, int a, int b) {
            return rd_.psi.d4[static_cast<std::size_t>(((i * n + j) * n + a) * n + b)][p];
        };
        auto mr = [&](int r, int c) { return Mr[static_cast<std::size_t>(r * n + c)]; };
        auto mv = [&](int r, int c) { return Mv[static_cast<std::size_t>(r * n + c)]; };
        // total first derivative of the perturbed metric: d_i (g_v)_{a bbar}
        auto dgv = [&](int i, int a, int b) { return psi3(i, a, b) + phi3(i, a, b); };

        ExpandedTerms out;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l) {
                        const cplx d = d4(i, j, k, l);
                        out.t1 += mr(j, i) * mr(l, k) * d;
                        out.b2a += mv(j, i) * mv(l, k) * d;
                    }

        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    for (int q = 0; q < n; ++q) {
                        const cplx pref = mv(j, i) * mv(q, k);
                        for (int pp = 0; pp < n; ++pp)
                            for (int l = 0; l < n; ++l)
                                out.b1 += pref * mv(l, pp) * dgv(i, pp, q) * std::conj(dgv(j, l, k));
                    }

        if (rd_.varies) {
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k)
                        for (int l = 0; l < n; ++l)
                            out.b2b += mv(j, i) * mv(l, k) * psi4(i, j, k, l);

            // Derivatives of the inverse reference metric via the chain rule,
            // as matrices: dMinv_i = -Mr DG_i Mr,
            // ddMinv_ij = Mr DGbar_j Mr DG_i Mr - Mr DDG_ij Mr + Mr DG_i Mr DGbar_j Mr.
            std::array<Mat, 2> DG{}, DGbar{}, dMinv{};
            for (int i = 0; i < n; ++i) {
                Mat dgm{}, dgb{};
                for (int a = 0; a < n; ++a)
                    for (int b = 0; b < n; ++b) {
                        dgm[static_cast<std::size_t>(a * n + b)] = psi3(i, a, b);
                        dgb[static_cast<std::size_t>(a * n + b)] = std::conj(psi3(i, b, a));
                    }
                DG[static_cast<std::size_t>(i)] = dgm;
                DGbar[static_cast<std::size_t>(i)] = dgb;
                dMinv[static_cast<std::size_t>(i)] = mat_neg(n, matmul(n, Mr, matmul(n, dgm, Mr)));
            }

            auto hphi = [&](int a, int b) { return pd_.hess.at(p, a, b); };
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    const cplx pref = mr(j, i);

                    Mat DDG{};
                    for (int a = 0; a < n; ++a)
                        for (int b = 0; b < n; ++b)
                            DDG[static_cast<std::size_t>(a * n + b)] = psi4(i, j, a, b);
                    const Mat left = matmul(n, Mr, matmul(n, DGbar[static_cast<std::size_t>(j)],
                                                          matmul(n, Mr, matmul(n, DG[static_cast<std::size_t>(i)], Mr))));
                    const Mat mid = matmul(n, Mr, matmul(n, DDG, Mr));
                    const Mat right = matmul(n, Mr, matmul(n, DG[static_cast<std::size_t>(i)],
                                                           matmul(n, Mr, matmul(n, DGbar[static_cast<std::size_t>(j)], Mr))));
                    const Mat ddMinv = mat_add3(n, left, mat_neg(n, mid), right);

                    for (int k = 0; k < n; ++k)
                        for (int l = 0; l < n; ++l) {
                            // T2: (d_i g^{k lbar}) d_jbar phi_{k lbar}; T3: barred mirror;
                            // T4: (d_i d_jbar g^{k lbar}) phi_{k lbar}
                            out.t2 += pref * dMinv[static_cast<std::size_t>(i)][static_cast<std::size_t>(l * n + k)] *
                                      std::conj(phi3(j, l, k));
                            out.t3 += pref *
                                      std::conj(dMinv[static_cast<std::size_t>(j)][static_cast<std::size_t>(k * n + l)]) *
                                      phi3(i, k, l);
                            out.t4 += pref * ddMinv[static_cast<std::size_t>(l * n + k)] * hphi(k, l);
                        }
                }
        }
        return out;
    }

private:
    const RefDerivs& rd_;
    const PotentialDerivs& pd_;
    const InverseDet& gv_inv_;
    int n_;
};

} // namespace

ScalarField forcing_expanded(const ReferenceGeometry& ref, const ScalarField& phi, double rbar) {
    const RefDerivs rd = reference_derivs(ref);
    const PotentialDerivs pd = potential_derivs(phi);
    const HermitianMetricField gv = rd.gref + pd.hess;
    if (!positivity_check(gv).is_pd)
        throw InvalidMetricError("forcing_expanded: metric is not positive-definite");
    const InverseDet gv_inv = inverse_and_det(gv);

    const ExpandedEvaluator ev(rd, pd, gv_inv);
    ScalarField f(phi.lat);
    const long pts = static_cast<long>(phi.lat.points());
#ifdef _OPENMP
#pragma omp parallel for num_threads(worker_threads()) schedule(static)
#endif
    for (long p = 0; p < pts; ++p) {
        const ExpandedTerms t = ev.eval(static_cast<std::size_t>(p));
        f[static_cast<std::size_t>(p)] =
            (t.t1 + t.t2 + t.t3 + t.t4 + t.b1 - t.b2a - t.b2b).real() - rbar;
    }
    return f;
}

double identity_e210_residual(const ReferenceGeometry& ref, const ScalarField& phi) {
    const RefDerivs rd = reference_derivs(ref);
    const PotentialDerivs pd = potential_derivs(phi);
    const HermitianMetricField gv = rd.gref + pd.hess;
    if (!positivity_check(gv).is_pd)
        throw InvalidMetricError("identity_e210_residual: metric is not positive-definite");
    const InverseDet gv_inv = inverse_and_det(gv);
    const int n = phi.lat.n;

    double worst = 0.0, scale = 0.0;
    const std::size_t pts = phi.lat.points();
    for (std::size_t p = 0; p < pts; ++p) {
        const Mat Mr = mat_at(rd.ref_inv.inv, p);
        const Mat Mv = mat_at(gv_inv.inv, p);
        auto mr = [&](int r, int c) { return Mr[static_cast<std::size_t>(r * n + c)]; };
        auto mv = [&](int r, int c) { return Mv[static_cast<std::size_t>(r * n + c)]; };
        auto d4 = [&](int i, int j, int k, int l) {
            return pd.d4[static_cast<std::size_t>(((i * n + j) * n + k) * n + l)][p];
        };
        auto hphi = [&](int a, int b) { return pd.hess.at(p, a, b); };

        cplx lhs{0.0, 0.0}, rhs{0.0, 0.0};
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l) {
                        const cplx d = d4(i, j, k, l);
                        lhs += (mr(j, i) * mr(l, k) - mv(j, i) * mv(l, k)) * d;
                        for (int pp = 0; pp < n; ++pp)
                            for (int q = 0; q < n; ++q) {
                                const cplx factor = mr(l, k) * mr(q, i) * mv(j, pp) +
                                                    mv(j, i) * mr(q, k) * mv(l, pp);
                                rhs += factor * hphi(pp, q) * d;
                            }
                    }
        worst = std::max(worst, std::abs(lhs - rhs));
        scale = std::max(scale, std::max(std::abs(lhs), std::abs(rhs)));
    }
    return scale > 0.0 ? worst / scale : 0.0;
}

ScalarField forcing_difference(const ReferenceGeometry& ref, const ScalarField& phi1,
                               const ScalarField& phi2, double rbar) {
    (void)rbar; // cancels in the difference
    const RefDerivs rd = reference_derivs(ref);
    const PotentialDerivs pd1 = potential_derivs(phi1);
    const PotentialDerivs pd2 = potential_derivs(phi2);
    const HermitianMetricField gv1 = rd.gref + pd1.hess;
    const HermitianMetricField gv2 = rd.gref + pd2.hess;
    if (!positivity_check(gv1).is_pd || !positivity_check(gv2).is_pd)
        throw InvalidMetricError("forcing_difference: metric is not positive-definite");
    const InverseDet inv1 = inverse_and_det(gv1);
    const InverseDet inv2 = inverse_and_det(gv2);

    const ExpandedEvaluator ev1(rd, pd1, inv1);
    const ExpandedEvaluator ev2(rd, pd2, inv2);
    ScalarField out(phi1.lat);
    const long pts = static_cast<long>(phi1.lat.points());
#ifdef _OPENMP
#pragma omp parallel for num_threads(worker_threads()) schedule(static)
#endif
    for (long p = 0; p < pts; ++p) {
        const ExpandedTerms a = ev1.eval(static_cast<std::size_t>(p));
        const ExpandedTerms b = ev2.eval(static_cast<std::size_t>(p));
        // Linear reference terms act on phi1 - phi2; curvature contractions
        // enter as differences.
        const cplx diff = (a.t1 - b.t1) + (a.t2 - b.t2) + (a.t3 - b.t3) + (a.t4 - b.t4) +
                          (a.b1 - b.b1) - (a.b2a - b.b2a) - (a.b2b - b.b2b);
        out[static_cast<std::size_t>(p)] = diff.real();
    }
    return out;
}

std::pair<ScalarField, StepReport> picard_step(const FlowState& state, const BilaplacianSymbol& symbol,
                                               const ReferenceGeometry& ref, double rbar, double tol,
                                               int max_iters, bool dealias) {
    const double tau = state.tau;
    if (!(tau > 0.0)) throw std::invalid_argument("picard_step: step size must be positive");

    const ScalarField& x = state.phi;
    const double xnorm = x.max_abs();
    const double stop = tol * (1.0 + xnorm);
    const double ratio_floor = 1e3 * std::numeric_limits<double>::epsilon() * (1.0 + xnorm);

    StepReport rep;
    const HermitianMetricField gref = ref.metric();
    const HermitianMetricField g_x = gref + dd_bar(x);
    if (!positivity_check(g_x).is_pd) {
        rep.reject_reason = "positivity";
        return {x, rep};
    }

    // Adaptive scaling of the splitting operator. From c1 g0 <= g <= c2 g0
    // the perturbed symbol satisfies sigma_g^2 / lambda in [1/c2^2, 1/c1^2];
    // running the semigroup and Duhamel factors on s * lambda with s the
    // midpoint of that interval keeps every mode of the step map inside the
    // unit disc for any tau (minimax over the coefficient range). s -> 1 as
    // the data approaches the flat metric.
    const MetricBounds pencil = metric_bounds(g_x, constant_metric(x.lat, ref.g0));
    const double s = 0.5 * (1.0 / (pencil.c1 * pencil.c1) + 1.0 / (pencil.c2 * pencil.c2));
    rep.stabilization = s;

    SpectralCoeffs base = forward_transform(x);
    for (std::size_t p = 0; p < base.c.size(); ++p)
        base.c[p] *= std::exp(-tau * s * symbol.lambda[p]);
    SpectralCoeffs v_spec = base;
    ScalarField v = inverse_transform(v_spec);

    double prev_diff = -1.0;
    int consecutive_expanding = 0;

    for (int m = 1; m <= max_iters; ++m) {
        rep.picard_iters = m;

        const HermitianMetricField g = gref + dd_bar(v);
        if (!positivity_check(g).is_pd) {
            rep.reject_reason = "positivity";
            return {x, rep};
        }
        const ScalarField r = scalar_curvature(g);

        // f(v) = s A v + R_v - rbar against the scaled operator
        SpectralCoeffs f_spec(x.lat);
        for (std::size_t p = 0; p < f_spec.c.size(); ++p)
            f_spec.c[p] = s * symbol.lambda[p] * v_spec.c[p];
        ScalarField f = inverse_transform(f_spec);
        for (std::size_t p = 0; p < f.size(); ++p) f[p] += r[p] - rbar;

        SpectralCoeffs v_new_spec = forward_transform(f);
        if (dealias) v_new_spec = truncate_two_thirds(v_new_spec);
        for (std::size_t p = 0; p < v_new_spec.c.size(); ++p) {
            const double factor = tau * phi1(tau * s * symbol.lambda[p]);
            v_new_spec.c[p] = base.c[p] + factor * v_new_spec.c[p];
        }
        const ScalarField v_new = inverse_transform(v_new_spec);

        const ScalarField delta = v_new - v;
        const double diff = delta.max_abs();
        v = v_new;
        v_spec = v_new_spec;

        if (prev_diff > ratio_floor && diff > 0.0) {
            const double ratio = diff / prev_diff;
            rep.picard_ratios.push_back(ratio);
            consecutive_expanding = ratio >= 1.0 ? consecutive_expanding + 1 : 0;
        }
        if (diff <= stop) {
            rep.accepted = true;
            return {v, rep};
        }
        if (consecutive_expanding >= 3) {
            rep.reject_reason = "contraction-failure";
            return {x, rep};
        }
        prev_diff = diff;
    }

    rep.reject_reason = "picard-max-iters";
    return {x, rep};
}

namespace {

struct AcceptData {
    HermitianMetricField g;
    ScalarField scalar;
    double calabi = 0.0;
    double max_dev = 0.0; // max |R - rbar|
};

/// Requires a positive-definite metric.
AcceptData evaluate_candidate(const FlowSetup& setup, HermitianMetricField g) {
    AcceptData d;
    d.g = std::move(g);
    const InverseDet id = inverse_and_det(d.g);
    d.scalar = scalar_curvature(d.g);
    double cell = 1.0;
    for (int a = 0; a < d.g.lat.axes(); ++a) cell *= d.g.lat.spacing();
    double sum = 0.0;
    for (std::size_t p = 0; p < d.scalar.size(); ++p) {
        const double dev = d.scalar[p] - setup.rbar;
        d.max_dev = std::max(d.max_dev, std::abs(dev));
        sum += dev * dev * id.det[p];
    }
    d.calabi = sum * cell;
    return d;
}

DiagnosticsRow make_row(const FlowSetup& setup, const ScalarField& phi, const AcceptData& data,
                        double t, double tau, const StepReport* rep) {
    DiagnosticsRow row;
    row.t = t;
    row.tau = tau;
    row.calabi_energy = data.calabi;
    row.max_abs_R = data.scalar.max_abs();
    row.rbar = average_scalar(data.g);
    row.volume = total_volume(data.g);
    const MetricBounds mb = metric_bounds(data.g, setup.ref_metric);
    row.c1_bound = mb.c1;
    row.c2_bound = mb.c2;
    row.max_riemann = riemann_norm(data.g).max_abs();
    row.holder_2a = holder_norm(phi, 2, setup.holder);
    row.holder_4a = holder_norm(phi, 4, setup.holder);
    ScalarField dot = data.scalar;
    for (double& x : dot.v) x -= setup.rbar;
    row.weighted_norm = std::sqrt(std::max(0.0, t)) * (holder_norm(dot, 0, setup.holder) + row.holder_4a);
    if (rep) {
        row.picard_iters = rep->picard_iters;
        row.picard_last_ratio = rep->picard_ratios.empty() ? 0.0 : rep->picard_ratios.back();
    }
    row.phi_mean = phi.mean();
    return row;
}

} // namespace

void advance(FlowState& state, const FlowSetup& setup) {
    if (state.status != FlowStatus::Running) return;

    if (!positivity_check(setup.ref_metric + dd_bar(state.phi)).is_pd) {
        state.status = FlowStatus::PositivityBreakdown;
        state.last_reject_reason = "positivity";
        return;
    }

    auto [phi_new, rep] = picard_step(state, setup.symbol, setup.ref, setup.rbar,
                                      setup.controls.picard_tol, setup.controls.picard_max_iters,
                                      setup.controls.dealias);

    std::string reject = rep.reject_reason;
    if (rep.accepted) {
        HermitianMetricField g_new = setup.ref_metric + dd_bar(phi_new);
        if (!positivity_check(g_new).is_pd) {
            reject = "positivity";
        } else {
            const AcceptData cand = evaluate_candidate(setup, std::move(g_new));
            const double ca_prev = state.last_diag.calabi_energy;
            if (cand.calabi > ca_prev + setup.controls.energy_slack * (1.0 + ca_prev)) {
                reject = "energy-increase";
            } else {
                state.phi = std::move(phi_new);
                state.t += state.tau;
                state.step_index += 1;
                rep.accepted = true;
                state.last_diag = make_row(setup, state.phi, cand, state.t, state.tau, &rep);
                state.consecutive_accepts += 1;
                if (state.consecutive_accepts >= 5) {
                    state.tau = std::min(2.0 * state.tau, setup.controls.tau_max);
                    state.consecutive_accepts = 0;
                }
                if (cand.max_dev < setup.controls.convergence_tol) state.status = FlowStatus::Converged;
                return;
            }
        }
    }

    // Rejected: shrink the step; exhaustion is terminal with the cause kept.
    state.consecutive_accepts = 0;
    state.last_reject_reason = reject;
    const double tau_new = state.tau / 2.0;
    if (tau_new < setup.controls.tau_min) {
        if (reject == "positivity")
            state.status = FlowStatus::PositivityBreakdown;
        else if (reject == "contraction-failure")
            state.status = FlowStatus::ContractionFailure;
        else
            state.status = FlowStatus::MaxStepsReached;
        return;
    }
    state.tau = tau_new;
}

FlowRunResult run_flow(const FlowSetup& setup) {
    FlowRunResult result;
    FlowState state;
    state.tau = setup.tau0;
    state.phi = setup.phi0;

    HermitianMetricField g_init = setup.ref_metric + dd_bar(state.phi);
    if (!positivity_check(g_init).is_pd) {
        state.status = FlowStatus::PositivityBreakdown;
        state.last_reject_reason = "positivity";
        result.trajectory.push_back({0.0, state.phi});
        result.final_state = std::move(state);
        return result;
    }

    const AcceptData init = evaluate_candidate(setup, std::move(g_init));
    state.last_diag = make_row(setup, state.phi, init, 0.0, state.tau, nullptr);
    result.rows.push_back(state.last_diag);
    result.trajectory.push_back({0.0, state.phi});
    if (init.max_dev < setup.controls.convergence_tol) state.status = FlowStatus::Converged;

    long attempts = 0;
    while (state.status == FlowStatus::Running && state.t < setup.t_end) {
        if (attempts++ >= setup.controls.max_steps) {
            state.status = FlowStatus::MaxStepsReached;
            break;
        }
        const long before = state.step_index;
        advance(state, setup);
        if (state.step_index > before) {
            result.rows.push_back(state.last_diag);
            const bool keep = setup.snapshot_every > 0 && state.step_index % setup.snapshot_every == 0;
            if (keep) result.trajectory.push_back({state.t, state.phi});
        }
    }

    if (result.trajectory.back().t != state.t) result.trajectory.push_back({state.t, state.phi});
    result.final_state = std::move(state);
    return result;
}

} // namespace calabi
