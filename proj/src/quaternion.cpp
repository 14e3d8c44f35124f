#include "rlfd/quaternion.hpp"

#include "rlfd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rlfd {

namespace {

void require_unit(const UnitQuaternion& q, const char* where) {
    if (!std::isfinite(q.w) || !q.xyz.allFinite() || std::abs(q.norm() - 1.0) > kUnitTolerance)
        throw InvalidArgument(std::string(where) + ": quaternion is not unit-norm");
}

}  // namespace

UnitQuaternion UnitQuaternion::from_raw(double w, const Eigen::Vector3d& xyz) {
    const double n = std::sqrt(w * w + xyz.squaredNorm());
    if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("UnitQuaternion: cannot normalize");
    UnitQuaternion q{w / n, xyz / n};
    if (q.w < 0.0) {
        q.w = -q.w;
        q.xyz = -q.xyz;
    }
    return q;
}

UnitQuaternion quat_compose(const UnitQuaternion& a, const UnitQuaternion& b) {
    require_unit(a, "quat_compose");
    require_unit(b, "quat_compose");
    const double w = a.w * b.w - a.xyz.dot(b.xyz);
    const Eigen::Vector3d v = a.w * b.xyz + b.w * a.xyz - a.xyz.cross(b.xyz);
    return UnitQuaternion::from_raw(w, v);
}

Eigen::Vector3d quat_log(const UnitQuaternion& q) {
    // Fold into the w >= 0 hemisphere so the angle is the short one.
    const double sign = q.w < 0.0 ? -1.0 : 1.0;
    const double w = std::clamp(sign * q.w, -1.0, 1.0);
    const Eigen::Vector3d v = sign * q.xyz;
    const double vn = v.norm();
    if (vn < 1e-15) return Eigen::Vector3d::Zero();
    // atan2 is better conditioned than acos near the identity.
    const double angle = 2.0 * std::atan2(vn, w);
    return angle * v / vn;
}

UnitQuaternion quat_exp(const Eigen::Vector3d& v) {
    const double angle = v.norm();
    if (angle < 1e-15) return UnitQuaternion::identity();
    const Eigen::Vector3d axis = v / angle;
    UnitQuaternion q{std::cos(angle / 2.0), std::sin(angle / 2.0) * axis};
    if (q.w < 0.0) {
        q.w = -q.w;
        q.xyz = -q.xyz;
    }
    return q;
}

Eigen::Matrix3d rotation_matrix(const UnitQuaternion& q) {
    const Eigen::Vector3d& v = q.xyz;
    Eigen::Matrix3d skew;
    skew << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return (q.w * q.w - v.squaredNorm()) * Eigen::Matrix3d::Identity() + 2.0 * v * v.transpose() - 2.0 * q.w * skew;
}

double geodesic_distance(const UnitQuaternion& a, const UnitQuaternion& b) {
    // Relative rotation a o conj(b); atan2 keeps precision at both small and large angles.
    const double w = a.w * b.w + a.xyz.dot(b.xyz);
    const Eigen::Vector3d v = b.w * a.xyz - a.w * b.xyz + a.xyz.cross(b.xyz);
    return 2.0 * std::atan2(v.norm(), std::abs(w));
}

UnitQuaternion angle_axis_to_quat(const AngleAxisResidual& residual) {
    const double alpha = residual.alpha;
    if (!std::isfinite(alpha) || !residual.axis.allFinite())
        throw InvalidArgument("angle_axis_to_quat: non-finite residual");
    if (std::abs(alpha) > std::numbers::pi + 1e-12)
        throw InvalidArgument("angle_axis_to_quat: angle outside [-pi, pi]");
    if (alpha == 0.0) return UnitQuaternion::identity();
    const double rn = residual.axis.norm();
    if (rn < kAxisDegeneracyFloor) throw DegenerateAxisError("angle_axis_to_quat: degenerate rotation axis");
    UnitQuaternion q;
    q.w = std::cos(alpha / 2.0);
    q.xyz = residual.axis / rn * std::sin(alpha / 2.0);
    q.w = std::max(q.w, 0.0);
    return q;
}

UnitQuaternion apply_orientation_residual(const UnitQuaternion& base, const AngleAxisResidual& residual) {
    if (residual.alpha == 0.0) return base;
    return quat_compose(angle_axis_to_quat(residual), base);
}

Eigen::Vector3d quat_error_to_angular_velocity(const UnitQuaternion& target, const UnitQuaternion& current,
                                               double dt) {
    if (!(dt > 0.0)) throw InvalidArgument("quat_error_to_angular_velocity: dt must be positive");
    return quat_log(quat_compose(target, current.conjugate())) / dt;
}

UnitQuaternion integrate_angular_velocity(const UnitQuaternion& q, const Eigen::Vector3d& omega, double dt) {
    return quat_compose(quat_exp(omega * dt), q);
}

UnitQuaternion slerp(const UnitQuaternion& a, const UnitQuaternion& b, double u) {
    const Eigen::Vector3d delta = quat_log(quat_compose(b, a.conjugate()));
    return quat_compose(quat_exp(u * delta), a);
}

}  // namespace rlfd
