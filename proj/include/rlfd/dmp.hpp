#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>

namespace rlfd {

/// Phase variable of the canonical system, s(t) = exp(-alpha_s * t / tau).
struct CanonicalState {
    double s = 1.0;
    double alpha_s = 4.6;
    double tau = 1.0;
};

CanonicalState canonical_step(const CanonicalState& state, double dt);

/// Gaussian radial basis over phase.  Centers are strictly decreasing.
struct BasisSet {
    Eigen::VectorXd centers;
    Eigen::VectorXd widths;

    int count() const { return static_cast<int>(centers.size()); }
};

/// Centers equi-spaced in time (log-spaced in phase) between s = 1 and s = exp(-alpha_s);
/// widths h_i = overlap / (c_{i+1} - c_i)^2.
BasisSet make_basis(int n_basis, double alpha_s = 4.6, double overlap = 1.0);

/// Normalized activations psi_i(s) / sum_j psi_j(s).
Eigen::VectorXd basis_activations(double s, const BasisSet& basis);

struct DmpGains {
    double alpha_v = 25.0;
    double beta_v = 25.0 / 4.0;
    double alpha_s = 4.6;
};

struct DmpParams {
    double alpha_v = 25.0;
    double beta_v = 25.0 / 4.0;
    double alpha_s = 4.6;
    double tau = 1.0;
    Eigen::VectorXd y0;
    Eigen::VectorXd goal;
    Eigen::MatrixXd weights;  // n_basis x dofs
    BasisSet basis;

    int dofs() const { return static_cast<int>(goal.size()); }
};

/// f_d(s) = s * sum_i psi_i(s) w_{i,d} / sum_i psi_i(s).  No (g - y0) scaling.
Eigen::VectorXd forcing_term(double s, const DmpParams& params);
Eigen::VectorXd forcing_term(double s, const BasisSet& basis, const Eigen::MatrixXd& weights);

struct DmpState {
    Eigen::VectorXd x;  // position
    Eigen::VectorXd v;  // velocity (y = dx/dt)
    CanonicalState phase;
};

DmpState initial_state(const DmpParams& params, const Eigen::VectorXd& start);

/// The three places an exploration / correction signal can enter the transformation system.
/// Empty members are treated as zero.
struct Injection {
    Eigen::MatrixXd param_noise;  // added to the forcing weights (n_basis x dofs)
    Eigen::VectorXd coupling;     // C_t, inside the 1/tau^2 bracket
    Eigen::VectorXd task;         // added to dy/dt outside the bracket

    bool empty() const { return param_noise.size() == 0 && coupling.size() == 0 && task.size() == 0; }
};

/// dy/dt = (alpha_v (beta_v (g - x) - tau y) + s f_{w + eta_w} + C_t) / tau^2 + eta_task
Eigen::VectorXd dmp_acceleration(const DmpState& state, const DmpParams& params, const Injection& injection = {});

/// One explicit Euler step of (x, y, s).
DmpState dmp_step(const DmpState& state, const DmpParams& params, double dt, const Injection& injection = {});

/// Uniformly sampled kinematic trajectory, one row per sample.
struct Trajectory {
    Eigen::VectorXd time;
    Eigen::MatrixXd position;
    Eigen::MatrixXd velocity;
    Eigen::MatrixXd acceleration;

    int samples() const { return static_cast<int>(time.size()); }
    int dofs() const { return static_cast<int>(position.cols()); }
    double dt() const;
    double duration() const { return samples() > 1 ? time(samples() - 1) - time(0) : 0.0; }
};

/// Checks the row counts and uniform spacing; throws InvalidArgument otherwise.
void validate(const Trajectory& trajectory);

/// Central differences inside, second-order one-sided differences at the ends.
Trajectory differentiate_demo(const Eigen::MatrixXd& positions, double dt, double t0 = 0.0);

struct FitOptions {
    int n_basis = 40;
    DmpGains gains;
    double ridge = 1e-8;
    double overlap = 1.0;
    std::optional<Eigen::VectorXd> goal;  // defaults to the final demo sample
};

/// Global ridge regression of the forcing weights onto
/// f_target = tau^2 xdd - alpha_v (beta_v (g - x) - tau xd), with tau = demo duration.
DmpParams fit_from_demo(const Trajectory& demo, const FitOptions& options = {});

/// Ridge solve of phase-gated RBF weights against per-sample forcing targets.  Shared by the
/// translational and orientation fits; throws FitError when the normal matrix is singular.
Eigen::MatrixXd regress_forcing_weights(const Eigen::VectorXd& time, const Eigen::MatrixXd& targets,
                                        const BasisSet& basis, double alpha_s, double tau, double ridge,
                                        double spatial_extent);

/// Called every `hook_period` integration steps; its result is held until the next call.
using InjectionHook = std::function<Injection(double t, const DmpState& state)>;

struct RolloutOptions {
    double duration = 1.0;
    double dt = 1e-3;
    int hook_period = 10;
};

Trajectory rollout(const DmpParams& params, const Eigen::VectorXd& start, const Eigen::VectorXd& goal,
                   const RolloutOptions& options, const InjectionHook& hook = {});

}  // namespace rlfd
