#pragma once

#include <Eigen/Dense>

namespace rlfd {

/// Unit quaternion [w, x, y, z], scalar first.
///
/// Composition follows Shuster's convention:
///   a o b = [a_w b_w - a_v . b_v,  a_w b_v + b_w a_v - a_v x b_v]
/// which makes the attitude matrix a homomorphism, A(a o b) = A(a) A(b), with
///   A(q) = (w^2 - |v|^2) I + 2 v v^T - 2 w [v]x.
/// A(q) is the transpose of the Hamilton rotation matrix of the same four numbers.
struct UnitQuaternion {
    double w = 1.0;
    Eigen::Vector3d xyz = Eigen::Vector3d::Zero();

    static UnitQuaternion identity() { return {}; }
    /// Normalizes and folds into the w >= 0 hemisphere.
    static UnitQuaternion from_raw(double w, const Eigen::Vector3d& xyz);

    double norm() const { return std::sqrt(w * w + xyz.squaredNorm()); }
    UnitQuaternion conjugate() const { return {w, -xyz}; }
    Eigen::Vector4d coeffs() const { return {w, xyz.x(), xyz.y(), xyz.z()}; }
};

constexpr double kUnitTolerance = 1e-6;
constexpr double kAxisDegeneracyFloor = 1e-8;

UnitQuaternion quat_compose(const UnitQuaternion& a, const UnitQuaternion& b);

/// Full rotation vector: 2 acos(w) * v / |v|, so |log q| is the rotation angle.
Eigen::Vector3d quat_log(const UnitQuaternion& q);

/// Inverse of quat_log on the w >= 0 hemisphere.
UnitQuaternion quat_exp(const Eigen::Vector3d& v);

/// Attitude matrix of q under the Shuster convention.
Eigen::Matrix3d rotation_matrix(const UnitQuaternion& q);

/// Rotation angle of a o conj(b) in [0, pi].
double geodesic_distance(const UnitQuaternion& a, const UnitQuaternion& b);

/// Residual rotation {alpha, r} as produced by a policy; r need not be normalized.
struct AngleAxisResidual {
    double alpha = 0.0;
    Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
};

/// Q_delta = [cos(alpha/2), r/|r| sin(alpha/2)].  alpha must lie in [-pi, pi].
UnitQuaternion angle_axis_to_quat(const AngleAxisResidual& residual);

/// Q_f = Q_delta o Q_b (residual pre-composed in the world frame).
UnitQuaternion apply_orientation_residual(const UnitQuaternion& base, const AngleAxisResidual& residual);

/// log(target o conj(current)) / dt, so that quat_exp(omega dt) o current == target.
Eigen::Vector3d quat_error_to_angular_velocity(const UnitQuaternion& target, const UnitQuaternion& current, double dt);

/// Integrates a constant angular velocity for dt: quat_exp(omega dt) o q.
UnitQuaternion integrate_angular_velocity(const UnitQuaternion& q, const Eigen::Vector3d& omega, double dt);

/// Spherical linear interpolation along the shorter arc.
UnitQuaternion slerp(const UnitQuaternion& a, const UnitQuaternion& b, double u);

}  // namespace rlfd
