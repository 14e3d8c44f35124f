#include "rlfd/orientation_dmp.hpp"

#include "rlfd/errors.hpp"

#include <cmath>

namespace rlfd {

OrientationState initial_orientation_state(const OrientationDmpParams& params, const UnitQuaternion& start) {
    OrientationState state;
    state.q = start;
    state.setpoint = start;
    state.phase = CanonicalState{1.0, params.alpha_s, params.tau};
    return state;
}

OrientationDmpParams fit_orientation_dmp(const std::vector<UnitQuaternion>& demo, double dt,
                                         const OrientationFitOptions& options) {
    const int n = static_cast<int>(demo.size());
    if (n < 3) throw InvalidArgument("fit_orientation_dmp: need at least 3 samples");
    if (!(dt > 0.0)) throw InvalidArgument("fit_orientation_dmp: dt must be positive");
    for (const auto& q : demo) {
        if (std::abs(q.norm() - 1.0) > kUnitTolerance) throw InvalidArgument("fit_orientation_dmp: non-unit sample");
    }

    OrientationDmpParams params;
    params.alpha_v = options.gains.alpha_v;
    params.beta_v = options.gains.beta_v;
    params.alpha_s = options.gains.alpha_s;
    params.tau = dt * (n - 1);
    params.q0 = demo.front();
    params.goal = demo.back();
    params.basis = make_basis(options.n_basis, params.alpha_s, options.overlap);

    // Angular velocity such that q_{k+1} = exp(omega dt) o q_k, differentiated once more for
    // the angular acceleration.
    Eigen::MatrixXd omega(n, 3);
    for (int k = 1; k + 1 < n; ++k) {
        omega.row(k) = quat_error_to_angular_velocity(demo[k + 1], demo[k - 1], 2.0 * dt).transpose();
    }
    omega.row(0) = quat_error_to_angular_velocity(demo[1], demo[0], dt).transpose();
    omega.row(n - 1) = quat_error_to_angular_velocity(demo[n - 1], demo[n - 2], dt).transpose();
    const Trajectory omega_traj = differentiate_demo(omega, dt);

    double extent = 0.0;
    for (const auto& q : demo) extent = std::max(extent, geodesic_distance(q, params.goal));

    const double tau = params.tau;
    Eigen::MatrixXd target(n, 3);
    for (int k = 0; k < n; ++k) {
        const Eigen::Vector3d e = quat_log(quat_compose(params.goal, demo[k].conjugate()));
        const Eigen::Vector3d w = omega.row(k).transpose();
        const Eigen::Vector3d wd = omega_traj.velocity.row(k).transpose();
        target.row(k) = (tau * tau * wd - params.alpha_v * (params.beta_v * e - tau * w)).transpose();
    }
    if (extent < 1e-12) {
        // A constant orientation is a valid demo: nothing to fit.
        params.weights = Eigen::MatrixXd::Zero(options.n_basis, 3);
        return params;
    }
    params.weights =
        regress_forcing_weights(omega_traj.time, target, params.basis, params.alpha_s, tau, options.ridge, extent);
    return params;
}

Eigen::Vector3d orientation_acceleration(const OrientationState& state, const OrientationDmpParams& params) {
    const Eigen::Vector3d e = quat_log(quat_compose(params.goal, state.q.conjugate()));
    const double s = state.phase.s;
    const Eigen::Vector3d f = forcing_term(s, params.basis, params.weights);
    return (params.alpha_v * (params.beta_v * e - params.tau * state.omega) + f) / (params.tau * params.tau);
}

OrientationState orientation_dmp_step(const OrientationState& state, const OrientationDmpParams& params, double dt,
                                      const std::optional<AngleAxisResidual>& residual) {
    if (!(dt > 0.0)) throw InvalidArgument("orientation_dmp_step: dt must be positive");
    if (!state.omega.allFinite()) throw InvalidArgument("orientation_dmp_step: non-finite angular velocity");

    const Eigen::Vector3d acc = orientation_acceleration(state, params);
    OrientationState next;
    next.q = integrate_angular_velocity(state.q, state.omega, dt);  // renormalized by quat_compose
    next.omega = state.omega + dt * acc;
    next.phase = canonical_step(state.phase, dt);
    next.setpoint = residual ? apply_orientation_residual(next.q, *residual) : next.q;
    return next;
}

OrientationTrajectory rollout_orientation(const OrientationDmpParams& params, const UnitQuaternion& start,
                                          const UnitQuaternion& goal, double duration, double dt) {
    if (!(duration > 0.0) || !(dt > 0.0)) throw InvalidArgument("rollout_orientation: bad duration or dt");
    OrientationDmpParams p = params;
    p.goal = goal;
    const int steps = static_cast<int>(std::llround(duration / dt));
    OrientationTrajectory out;
    out.time.reserve(steps + 1);
    out.q.reserve(steps + 1);
    out.omega.reserve(steps + 1);
    OrientationState state = initial_orientation_state(p, start);
    for (int k = 0; k <= steps; ++k) {
        out.time.push_back(k * dt);
        out.q.push_back(state.q);
        out.omega.push_back(state.omega);
        if (k < steps) state = orientation_dmp_step(state, p, dt);
    }
    return out;
}

}  // namespace rlfd
