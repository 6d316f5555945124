#pragma once

#include "calabi/metric.hpp"
#include "calabi/trajectory.hpp"

#include <utility>

namespace calabi {

/** Sampling parameters for the discrete Hoelder seminorm.
 *
 *  The seminorm of a field set is the max over sampled point pairs (p, q)
 *  of max-component |f(p) - f(q)| / dist(p, q)^alpha, with dist the flat
 *  torus distance. Base points are subsampled with pair_stride per axis;
 *  pair offsets run over the full box of at most max_separation cells per
 *  axis. pair_stride = 1 is the exhaustive pair set.
 */
struct HolderParams {
    double alpha = 0.5;
    int pair_stride = 1;
    int max_separation = 2;

    static HolderParams defaults_for(const TorusLattice& lat) {
        return {0.5, std::max(1, lat.N / 32), std::max(1, lat.N / 4)};
    }
};

/** Discrete c^{k,alpha} surrogate: the sum of sup norms of all real-axis
 *  spectral derivatives of order <= k plus the alpha seminorm of the
 *  order-k derivatives. k at most 4. */
double holder_norm(const ScalarField& f, int k, const HolderParams& params);

/// Seminorm part only (order-k derivatives).
double holder_seminorm(const ScalarField& f, int k, const HolderParams& params);

/// |f|_{3,a}^2 / (|f|_{2,a} |f|_{4,a}); throws on the zero field.
double interpolation_ratio(const ScalarField& f, const HolderParams& params);

struct SnapshotNorms {
    double t = 0.0;
    double phi_2a = 0.0;   // |phi|_{2,alpha}
    double phi_4a = 0.0;   // |phi|_{4,alpha}
    double dot_0a = 0.0;   // |R - rbar|_{0,alpha}
    double weighted = 0.0; // sqrt(t) * (dot_0a + phi_4a)
};

struct TrajectoryNorms {
    std::vector<SnapshotNorms> rows;
    double sup_weighted = 0.0;
    double initial_2a = 0.0;
    double c_measured = 0.0; // sup_weighted / initial_2a
};

/** Weighted-in-time norms along a trajectory: per snapshot the potential
 *  norms and sqrt(t) * (|phi_dot|_{0,alpha} + |phi|_{4,alpha}) with
 *  phi_dot = R - rbar computed from the snapshot metric. Needs at least
 *  two snapshots with positive time past the initial one. */
TrajectoryNorms weighted_trajectory_norm(const ReferenceGeometry& ref,
                                         std::span<const FlowSnapshot> traj,
                                         const HolderParams& params);

struct DecayFit {
    double rate = 0.0;
    double r_squared = 0.0;
};

/// Least squares on (t, log value); rate is the negated slope. Requires at
/// least 5 points, all values positive.
DecayFit fit_exponential_decay(std::span<const std::pair<double, double>> series);

} // namespace calabi
