#pragma once

#include "rlfd/dmp.hpp"
#include "rlfd/quaternion.hpp"

#include <random>
#include <string>
#include <vector>

namespace rlfd {

struct Observation {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
    UnitQuaternion orientation;
    Eigen::Vector3d angular_velocity = Eigen::Vector3d::Zero();
    Eigen::Vector3d force = Eigen::Vector3d::Zero();
    double phase = 1.0;
    Eigen::Vector3d goal_offset = Eigen::Vector3d::Zero();  // goal minus position
};

constexpr int kObservationFeatures = 3 + 3 + 4 + 3 + 3 + 1 + 3;

/// Flat observation vector (no bias).  Throws InvalidArgument on non-finite entries.
Eigen::VectorXd observation_vector(const Observation& obs);

/// observation_vector plus a trailing bias of 1.
Eigen::VectorXd linear_features(const Observation& obs);

struct ActionBounds {
    double a_max = 0.005;     // m/s per axis
    double alpha_max = 0.1;   // rad per decision
};

struct ResidualAction {
    Eigen::Vector3d d_translation = Eigen::Vector3d::Zero();
    double alpha = 0.0;
    Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();

    static ResidualAction zero() { return {}; }
    AngleAxisResidual rotation() const { return {alpha, axis}; }
    bool within(const ActionBounds& bounds, double slack = 1e-12) const;
};

/// Builds an action from a rotation vector (alpha = |r| clamped, axis = r / |r|).
ResidualAction action_from_vectors(const Eigen::Vector3d& translation, const Eigen::Vector3d& rotation_vector,
                                   const ActionBounds& bounds);

enum class ExplorationLocus { None, CouplingTerm, ParameterSpace, TaskSpace };

std::string to_string(ExplorationLocus locus);
/// Accepts none | coupling | coupling-term | parameter | parameter-space | task | task-space.
ExplorationLocus parse_locus(const std::string& name);

/// Translational velocity command plus orientation set-point.
struct PoseCommand {
    Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
    UnitQuaternion orientation;
};

/// Velocity added component-wise; orientation Q_delta o Q_b.
PoseCommand compose_full_pose(const PoseCommand& base, const ResidualAction& residual);

/// Uniform in the bounds box, axis uniform on the unit sphere.
ResidualAction random_policy(std::mt19937_64& rng, const ActionBounds& bounds);

/// Recursive least-squares linear map from linear_features to a target vector.  The first three
/// outputs are the translation correction, optional outputs 3..5 a rotation vector.
struct LinearPolicyState {
    Eigen::MatrixXd weights;     // outputs x features
    Eigen::MatrixXd covariance;  // features x features
    double forgetting = 1.0;
    double initial_covariance = 1e3;
    ActionBounds bounds;
    int covariance_resets = 0;
};

LinearPolicyState make_linear_policy(int n_features, int n_outputs, const ActionBounds& bounds = {},
                                     double forgetting = 1.0, double initial_covariance = 1e3);

Eigen::VectorXd linear_policy_output(const LinearPolicyState& state, const Eigen::VectorXd& features);
ResidualAction linear_policy_act(const LinearPolicyState& state, const Observation& obs);

/// One RLS step.  When the covariance condition number exceeds 1e12 it is reset to
/// initial_covariance * I and covariance_resets is incremented.
LinearPolicyState linear_policy_update(const LinearPolicyState& state, const Eigen::VectorXd& features,
                                       const Eigen::VectorXd& target);
LinearPolicyState linear_policy_update(const LinearPolicyState& state, const Observation& obs,
                                       const Eigen::VectorXd& target);

/// Goal-directed regression target for the linear baseline: gain * (goal - position).
Eigen::VectorXd goal_directed_target(const Observation& obs, double gain = 1.0);

/// Routes eta into exactly one Injection slot.
///   ParameterSpace: eta reshaped to weight noise.  eta may have n_basis * dofs entries, or
///     groups * dofs entries that are spread over contiguous blocks of basis functions.
///   CouplingTerm: C_t = s * eta.
///   TaskSpace: eta added to dy/dt.
/// None requires eta to be empty or zero.
Injection inject_exploration(ExplorationLocus locus, const Eigen::VectorXd& eta, double phase,
                             const DmpParams& params);

/// 1 once t has reached activation_fraction * episode_length, else 0.
double residual_schedule(double t, double episode_length, double activation_fraction);

struct Knot {
    Eigen::VectorXd position;
    Eigen::VectorXd velocity;
    Eigen::VectorXd acceleration;
    Eigen::VectorXd residual;
};

struct SubstepCommand {
    Eigen::VectorXd position;
    Eigen::VectorXd residual;
};

/// Quintic interpolation of knot positions (matching position, velocity and acceleration at the
/// knots) at K substeps per interval; each knot's residual is repeated over its interval.
/// Returns (knots - 1) * K + 1 commands.
std::vector<SubstepCommand> hold_and_interpolate(const std::vector<Knot>& knots, double knot_dt, int K);

/// Rollout of a fitted DMP with one exploration locus active.  Parameter noise is drawn once;
/// coupling and task noise are redrawn every `period` steps.  Noise is N(0, sigma^2) per entry.
Trajectory perturbed_rollout(const DmpParams& params, ExplorationLocus locus, double sigma, std::mt19937_64& rng,
                             const RolloutOptions& options, int parameter_groups = 0);

/// Largest |third difference of position| / dt^3 over the trajectory.
double max_step_jerk(const Trajectory& trajectory);

}  // namespace rlfd
