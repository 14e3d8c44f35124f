#include "rlfd/demos.hpp"

#include "rlfd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rlfd {

double min_jerk(double u) {
    u = std::clamp(u, 0.0, 1.0);
    return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
}

double min_jerk_d1(double u) {
    if (u <= 0.0 || u >= 1.0) return 0.0;
    return 30.0 * u * u * (1.0 - u) * (1.0 - u);
}

double min_jerk_d2(double u) {
    if (u <= 0.0 || u >= 1.0) return 0.0;
    return 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u);
}

Trajectory minimum_jerk_demo(const Eigen::VectorXd& start, const Eigen::VectorXd& goal, double duration, double dt) {
    if (!(duration > 0.0) || !(dt > 0.0)) throw InvalidArgument("minimum_jerk_demo: bad duration or dt");
    const int n = static_cast<int>(std::llround(duration / dt)) + 1;
    const Eigen::VectorXd delta = goal - start;
    Trajectory out;
    out.time = Eigen::VectorXd::LinSpaced(n, 0.0, dt * (n - 1));
    out.position.resize(n, start.size());
    out.velocity.resize(n, start.size());
    out.acceleration.resize(n, start.size());
    for (int k = 0; k < n; ++k) {
        const double u = out.time(k) / duration;
        out.position.row(k) = (start + min_jerk(u) * delta).transpose();
        out.velocity.row(k) = (min_jerk_d1(u) / duration * delta).transpose();
        out.acceleration.row(k) = (min_jerk_d2(u) / (duration * duration) * delta).transpose();
    }
    return out;
}

Trajectory archimedean_spiral_demo(const SpiralSpec& spec) {
    const int n = static_cast<int>(std::llround(spec.duration / spec.dt)) + 1;
    const double theta_max = 2.0 * std::numbers::pi * spec.turns;
    const double b = spec.final_radius / theta_max;
    Eigen::MatrixXd pos(n, 3);
    for (int k = 0; k < n; ++k) {
        const double u = min_jerk(k * spec.dt / spec.duration);
        const double theta = theta_max * u;
        const double r = b * theta;
        pos(k, 0) = r * std::cos(theta);
        pos(k, 1) = r * std::sin(theta);
        pos(k, 2) = -spec.descent * u;
    }
    return differentiate_demo(pos, spec.dt);
}

std::vector<UnitQuaternion> slerp_demo(const UnitQuaternion& a, const UnitQuaternion& b, double duration, double dt) {
    const int n = static_cast<int>(std::llround(duration / dt)) + 1;
    std::vector<UnitQuaternion> out;
    out.reserve(n);
    for (int k = 0; k < n; ++k) out.push_back(slerp(a, b, min_jerk(k * dt / duration)));
    return out;
}

}  // namespace rlfd
