#pragma once

#include "calabi/lattice.hpp"

namespace calabi {

/// Potential at a flow time, as stored along a trajectory.
struct FlowSnapshot {
    double t = 0.0;
    ScalarField phi;
};

} // namespace calabi
