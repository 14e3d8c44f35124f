#pragma once

#include "rlfd/learners.hpp"
#include "rlfd/quaternion.hpp"
#include "rlfd/residual.hpp"

#include <limits>
#include <random>
#include <string>

namespace rlfd {

enum class CrossSection { Round, Square, Keyed };

std::string to_string(CrossSection section);

/// The nominal hole (where the demonstration inserts) has its mouth at the origin and its axis
/// along +z.  The true hole may be displaced by a latent offset the base policy does not know.
struct SocketGeometry {
    CrossSection cross_section = CrossSection::Round;
    double half_width = 0.014;  // m
    double clearance = 0.0004;  // m
    double depth = 0.01;        // m
    double tilt = 0.0;          // rad, surface slope about the x axis
    double mu = 0.3;
    double stiffness = 2000.0;  // N/m
    Eigen::Vector2d hole_offset = Eigen::Vector2d::Zero();  // true mouth minus nominal mouth
    double hole_jitter = 0.0;   // per-episode uniform +- jitter on each lateral axis
    double socket_yaw = 0.0;    // rad, socket rotation about z relative to the demo orientation
    double yaw_jitter = 0.0;    // per-episode uniform +- jitter on the socket yaw

    /// Largest rotation that still fits: w (cos t + sin t) = w + c.  Infinite for round sections.
    double alignment_tolerance() const;
};

struct StartDistribution {
    Eigen::Vector3d center = Eigen::Vector3d(-0.06, 0.0, 0.05);
    double radius = 0.0;           // per axis, m
    double max_orientation = 0.0;  // rad, geodesic cone around the demo orientation
};

struct EnvConfig {
    std::string name = "custom";
    SocketGeometry geometry;
    double dt = 0.01;
    double episode_length = 10.0;
    int decision_period = 10;
    StartDistribution start;
    RewardSpec reward;
    double break_force = std::numeric_limits<double>::infinity();  // N
};

void validate(const EnvConfig& config);

struct EnvState {
    Eigen::Vector3d setpoint = Eigen::Vector3d::Zero();
    Eigen::Vector3d position = Eigen::Vector3d::Zero();  // peg tip
    UnitQuaternion orientation;
    Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
    Eigen::Vector3d angular_velocity = Eigen::Vector3d::Zero();
    Eigen::Vector3d force = Eigen::Vector3d::Zero();  // contact force on the peg
    Eigen::Vector2d hole = Eigen::Vector2d::Zero();   // true mouth for this episode
    double socket_yaw = 0.0;
    double depth = 0.0;
    double penetration = 0.0;
    double friction = 0.0;
    double normal_force = 0.0;
    double elapsed = 0.0;
    int steps = 0;
    bool inside = false;
    bool success = false;
    bool broken = false;
};

struct StepInfo {
    bool success = false;
    bool broken = false;
    double penetration = 0.0;
    double force_magnitude = 0.0;
};

struct StepResult {
    Observation observation;
    double reward = 0.0;
    bool done = false;
    StepInfo info;
};

/// Samples a start pose; the true hole for the episode is drawn from the same generator.
EnvState env_reset(const EnvConfig& config, std::mt19937_64& rng);

/// Start pose at an explicit position and orientation (no sampling of the start); the hole
/// jitter is still drawn from `rng`.
EnvState env_reset_at(const EnvConfig& config, const Eigen::Vector3d& start, const UnitQuaternion& orientation,
                      std::mt19937_64& rng);

Observation observe(const EnvState& state, const EnvConfig& config);

/// Distances from the peg tip to the fully inserted pose.
double insertion_distance_l2(const EnvState& state, const EnvConfig& config);
double insertion_distance_l1(const EnvState& state, const EnvConfig& config);

/// Surface height at a lateral position.
double surface_height(const SocketGeometry& geometry, double y);

/// Yaw (about z) and tilt (of the peg axis) of `q` relative to the socket.
struct Misalignment {
    double yaw = 0.0;
    double tilt = 0.0;
};
Misalignment misalignment(const UnitQuaternion& q, const SocketGeometry& geometry, double socket_yaw);
/// Yaw within the cross-section's tolerance (always true for round sections).
bool aligned(const UnitQuaternion& q, const SocketGeometry& geometry, double socket_yaw);

/// Integrates the commanded twist for one dt, then projects through the contact model.
/// The reward is the dense reward for dense specs and the sparse indicator on the final step
/// for sparse specs (zero on other steps).
StepResult env_step(EnvState& state, const PoseCommand& action, const EnvConfig& config);

struct ForceStats {
    double peak = 0.0;
    double mean = 0.0;
    double impulse = 0.0;
};

ForceStats measure_forces(const EpisodeRecord& episode);

/// Elapsed time at first success, or the episode length.
double measure_insertion_time(const EpisodeRecord& episode, double episode_length);

/// easy | hard | peg | gear | rj45
EnvConfig make_task(const std::string& preset);

/// Normalized policy input built from an observation plus the episode time fraction.
Eigen::VectorXd policy_features(const Observation& obs, const EnvConfig& config, double time_fraction);
constexpr int kPolicyFeatures = kObservationFeatures + 1;

}  // namespace rlfd
