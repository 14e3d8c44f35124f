#pragma once

#include "rlfd/dmp.hpp"
#include "rlfd/quaternion.hpp"

#include <optional>
#include <vector>

namespace rlfd {

/// Orientation transformation system acting on the log-space goal error e = log(g o conj(q)):
///   d(omega)/dt = (alpha_v (beta_v e - tau omega) + s f(s)) / tau^2
///   q <- quat_exp(omega dt) o q
struct OrientationDmpParams {
    double alpha_v = 25.0;
    double beta_v = 25.0 / 4.0;
    double alpha_s = 4.6;
    double tau = 1.0;
    UnitQuaternion q0;
    UnitQuaternion goal;
    Eigen::MatrixXd weights;  // n_basis x 3
    BasisSet basis;
};

struct OrientationState {
    UnitQuaternion q;
    Eigen::Vector3d omega = Eigen::Vector3d::Zero();  // rad/s
    CanonicalState phase;
    /// Orientation handed to the controller: the residual pre-composed onto q.
    UnitQuaternion setpoint;
};

OrientationState initial_orientation_state(const OrientationDmpParams& params, const UnitQuaternion& start);

struct OrientationFitOptions {
    int n_basis = 70;
    DmpGains gains;
    double ridge = 1e-8;
    double overlap = 1.0;
};

/// Fits the forcing weights of an orientation DMP to a uniformly sampled quaternion demo
/// (goal = last sample, tau = demo duration).
OrientationDmpParams fit_orientation_dmp(const std::vector<UnitQuaternion>& demo, double dt,
                                         const OrientationFitOptions& options = {});

Eigen::Vector3d orientation_acceleration(const OrientationState& state, const OrientationDmpParams& params);

OrientationState orientation_dmp_step(const OrientationState& state, const OrientationDmpParams& params, double dt,
                                      const std::optional<AngleAxisResidual>& residual = std::nullopt);

struct OrientationTrajectory {
    std::vector<double> time;
    std::vector<UnitQuaternion> q;
    std::vector<Eigen::Vector3d> omega;
};

OrientationTrajectory rollout_orientation(const OrientationDmpParams& params, const UnitQuaternion& start,
                                          const UnitQuaternion& goal, double duration, double dt);

}  // namespace rlfd
