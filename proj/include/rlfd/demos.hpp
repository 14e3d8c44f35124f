#pragma once

#include "rlfd/dmp.hpp"
#include "rlfd/quaternion.hpp"

#include <vector>

namespace rlfd {

/// Minimum-jerk blend 10u^3 - 15u^4 + 6u^5 and its first two derivatives (w.r.t. u).
double min_jerk(double u);
double min_jerk_d1(double u);
double min_jerk_d2(double u);

/// Point-to-point minimum-jerk demo with analytic velocities and accelerations.
Trajectory minimum_jerk_demo(const Eigen::VectorXd& start, const Eigen::VectorXd& goal, double duration, double dt);

struct SpiralSpec {
    double turns = 3.0;
    double final_radius = 0.03;  // m
    double descent = 0.02;       // m along -z over the demo
    double duration = 5.0;       // s
    double dt = 0.01;            // s
};

/// Archimedean spiral r = b * theta traced outward with a minimum-jerk time law, while the
/// third coordinate descends.  Starts and ends at rest.
Trajectory archimedean_spiral_demo(const SpiralSpec& spec = {});

/// Slerp from a to b with a minimum-jerk time law, sampled every dt (inclusive of both ends).
std::vector<UnitQuaternion> slerp_demo(const UnitQuaternion& a, const UnitQuaternion& b, double duration, double dt);

}  // namespace rlfd
