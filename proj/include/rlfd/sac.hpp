#pragma once

#include "rlfd/learners.hpp"
#include "rlfd/ppo.hpp"

namespace rlfd {

struct SacConfig {
    int capacity = 100000;
    int batch = 128;
    double discount = 0.99;
    double rho = 0.005;  // soft target update rate
    double lr = 3e-4;
    double alpha_lr = 3e-4;
    double init_alpha = 0.1;
    double target_entropy = -1.0;  // per action dimension; total is this times the action dim
    int updates_per_iteration = 32;
};

/// Actions are stored normalized to [-1, 1] (action ./ bound).
struct Transition {
    Eigen::VectorXd obs;
    Eigen::VectorXd action;
    double reward = 0.0;
    Eigen::VectorXd next_obs;
    bool done = false;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(int capacity = 100000);
    void add(Transition t);
    int size() const { return static_cast<int>(data_.size()); }
    int capacity() const { return capacity_; }
    std::vector<const Transition*> sample(int n, std::mt19937_64& rng) const;

private:
    int capacity_;
    std::size_t next_ = 0;
    std::vector<Transition> data_;
};

struct SacLearner {
    GaussianPolicy policy;
    Mlp q1, q2, q1_target, q2_target;
    double log_alpha = 0.0;
    Adam policy_opt, q1_opt, q2_opt, alpha_opt;
    SacConfig config;
    ReplayBuffer replay;
    long gradient_steps = 0;
};

SacLearner make_sac(int obs_dim, const Eigen::VectorXd& bound, const std::vector<int>& hidden, Activation activation,
                    const SacConfig& config, std::mt19937_64& rng);

/// Pushes every step of an episode into the replay buffer.
void store_episode(SacLearner& learner, const EpisodeRecord& episode);

/// 0.5 mean((Q([obs; action]) - y)^2).
double sac_critic_loss(const Mlp& q, const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions,
                       const Eigen::VectorXd& targets, Eigen::VectorXd* grad = nullptr);

/// mean(alpha log pi(a~|s) - min(Q1, Q2)(s, a~)) with a~ = tanh(mean + std .* noise) in normalized
/// action space.  `noise` is A x B.
double sac_actor_loss(const GaussianPolicy& policy, const Mlp& q1, const Mlp& q2, const Eigen::MatrixXd& obs,
                      const Eigen::MatrixXd& noise, double alpha, Eigen::VectorXd* grad = nullptr,
                      Eigen::VectorXd* log_probs = nullptr);

/// Exactly config.updates_per_iteration gradient steps.  Requires at least config.batch
/// transitions in the replay buffer.
UpdateDiagnostics sac_update(SacLearner& learner, std::mt19937_64& rng);

}  // namespace rlfd
