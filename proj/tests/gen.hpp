#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "dhn/hydraulics.hpp"

namespace dhn::test {

// Random q_r >= 0 (m^3/s) inside the loop inequalities: a random sparse
// direction scaled to a random fraction of the largest feasible length.
inline Eigen::VectorXd feasible_cycle_flows(const HydraulicModel& hm, std::mt19937_64& rng) {
    const int m = hm.m_r();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::VectorXd q = Eigen::VectorXd::Zero(m);
    while (q.sum() <= 0.0)
        for (int i = 0; i < m; ++i)
            if (u(rng) < 0.5) q[i] = u(rng);
    // q' Z^i q is homogeneous of degree 2
    double worst = 0.0;
    for (int i = 0; i < m; ++i) {
        double use = q.dot(hm.Z[static_cast<std::size_t>(i)] * q);
        if (use <= 0.0) continue;
        double cap = hm.loop_capacity[i];
        worst = std::max(worst, cap > 0.0 ? use / cap : 1e300);
    }
    double scale = worst > 0.0 ? std::sqrt(1.0 / worst) : 1.0;
    return q * (scale * (0.05 + 0.94 * u(rng)));
}

}  // namespace dhn::test
