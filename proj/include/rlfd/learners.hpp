#pragma once

#include "rlfd/nn.hpp"

#include <Eigen/Dense>

#include <random>
#include <string>
#include <vector>

namespace rlfd {

/// Sum_t discount^t r_t.
double compute_return(const std::vector<double>& rewards, double discount);

/// 1 iff l2 <= kappa (inclusive).
double sparse_reward(double distance_l2, double kappa);

struct DenseRewardSpec {
    double alpha = 10.0;
    double beta = 0.002;
    double epsilon = 0.0001;
};

/// -(alpha * l1 + beta / (l2 - epsilon)).  Throws SingularityError when l2 <= epsilon.
double dense_reward(double l1, double l2, const DenseRewardSpec& spec);

/// dense_reward clipped from below at `floor`; returns `floor` where dense_reward would throw.
double dense_reward_guarded(double l1, double l2, const DenseRewardSpec& spec, double floor = -100.0,
                            bool* floor_engaged = nullptr);

/// exp(-L1 / scale), paid once at the end of the episode.
double exp_l1_reward(double l1, double scale);

enum class RewardKind { Sparse, Dense, ExpL1 };

struct RewardSpec {
    RewardKind kind = RewardKind::Sparse;
    double kappa = 0.002;
    DenseRewardSpec dense;
    double floor = -100.0;
    double l1_scale = 0.01;  // m
};

std::string to_string(RewardKind kind);
RewardKind parse_reward(const std::string& name);

// ---------------------------------------------------------------------------------------------

constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;

/// Tanh-squashed diagonal Gaussian.  The network outputs [mean; raw log-std]; log-std is clamped
/// to [kLogStdMin, kLogStdMax].  Actions are bound .* tanh(u), u ~ N(mean, std^2).
struct GaussianPolicy {
    Mlp net;
    Eigen::VectorXd bound;

    int action_dim() const { return static_cast<int>(bound.size()); }
    int obs_dim() const { return net.inputs(); }
};

GaussianPolicy make_policy(int obs_dim, const Eigen::VectorXd& bound, const std::vector<int>& hidden,
                           Activation activation, std::mt19937_64& rng, double init_log_std = -0.5);

struct PolicyHeads {
    Eigen::MatrixXd mean;     // A x B
    Eigen::MatrixXd log_std;  // A x B, clamped
    Eigen::MatrixXd clamp_mask;  // 1 where the raw log-std was inside the clamp range
};

PolicyHeads policy_heads(const GaussianPolicy& policy, const Eigen::MatrixXd& obs, MlpCache* cache = nullptr);

struct PolicySample {
    Eigen::VectorXd action;
    Eigen::VectorXd u;  // pre-squash sample
    double log_prob = 0.0;
};

/// Stochastic sample; with `deterministic` the action is bound .* tanh(mean).
PolicySample policy_act(const GaussianPolicy& policy, const Eigen::VectorXd& obs, std::mt19937_64& rng,
                        bool deterministic = false);

/// Density of a = bound .* tanh(u) in action space, including the change of variables.
double tanh_gaussian_log_prob(const Eigen::VectorXd& u, const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std,
                              const Eigen::VectorXd& bound);

/// Same density evaluated at an action (|a| < bound).
double tanh_gaussian_log_prob_action(const Eigen::VectorXd& action, const Eigen::VectorXd& mean,
                                     const Eigen::VectorXd& log_std, const Eigen::VectorXd& bound);

/// Gradient of tanh_gaussian_log_prob with respect to mean and log_std (the squash term does not
/// depend on either).
void tanh_gaussian_log_prob_grad(const Eigen::VectorXd& u, const Eigen::VectorXd& mean,
                                 const Eigen::VectorXd& log_std, Eigen::VectorXd& d_mean,
                                 Eigen::VectorXd& d_log_std);

// ---------------------------------------------------------------------------------------------

struct EpisodeRecord {
    std::vector<Eigen::VectorXd> observations;
    std::vector<Eigen::VectorXd> actions;
    std::vector<Eigen::VectorXd> pre_squash;
    std::vector<double> rewards;
    std::vector<double> log_probs;
    std::vector<double> values;
    Eigen::VectorXd final_observation;
    bool terminal = false;  // true when the episode ended in an absorbing state (no bootstrap)
    bool success = false;
    bool broken = false;
    std::vector<double> force_magnitudes;  // per environment step
    double dt = 0.01;
    double peak_force = 0.0;
    double mean_force = 0.0;
    double insertion_time = 0.0;

    int steps() const { return static_cast<int>(rewards.size()); }
};

/// Throws InvalidArgument when the per-step vectors disagree in length or a reward is not finite.
void validate(const EpisodeRecord& episode);

struct GaeResult {
    Eigen::VectorXd advantages;
    Eigen::VectorXd returns;
};

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values, double last_value,
                      double discount, double lambda);

struct CurriculumConfig {
    double threshold = 0.8;
    double increment = 0.0025;
    double cap = 0.015;
};

double curriculum_step(double current_radius, double success_rate_window, const CurriculumConfig& config = {});

// ---------------------------------------------------------------------------------------------

/// FNV-1a 64-bit, used for config fingerprints in checkpoint manifests.
std::string fingerprint(const std::string& text);

/// Writes `path` (JSON manifest) and a sibling `<stem>.bin` of little-endian doubles.
/// `extra_json` is stored verbatim under "extra" and must be a JSON document.
void save_policy_checkpoint(const std::string& path, const GaussianPolicy& policy, const std::string& extra_json = "{}");

struct LoadedPolicy {
    GaussianPolicy policy;
    std::string extra_json;
};

LoadedPolicy load_policy_checkpoint(const std::string& path);

}  // namespace rlfd
