#pragma once

#include "rlfd/learners.hpp"

namespace rlfd {

struct PpoConfig {
    double clip = 0.2;
    int epochs = 10;
    int minibatch = 64;
    double lr = 3e-4;
    double value_lr = 1e-3;
    double discount = 0.99;
    double gae_lambda = 0.95;
    int episodes_per_update = 20;
    double max_grad_norm = 0.5;
    bool normalize_advantages = true;
};

struct PpoLearner {
    GaussianPolicy policy;
    Mlp value;
    Adam policy_opt;
    Adam value_opt;
    PpoConfig config;
    int updates = 0;
};

PpoLearner make_ppo(int obs_dim, const Eigen::VectorXd& bound, const std::vector<int>& hidden, Activation activation,
                    const PpoConfig& config, std::mt19937_64& rng);

/// Flattened on-policy samples; columns are samples.
struct PpoSamples {
    Eigen::MatrixXd obs;
    Eigen::MatrixXd u;
    Eigen::VectorXd old_log_prob;
    Eigen::VectorXd advantages;
    Eigen::VectorXd returns;

    int size() const { return static_cast<int>(obs.cols()); }
};

/// Negative clipped surrogate, -mean(min(rho A, clip(rho, 1 - c, 1 + c) A)).  When `grad` is
/// non-null it receives the gradient with respect to the policy parameters.
double ppo_surrogate_loss(const GaussianPolicy& policy, const PpoSamples& samples, double clip,
                          Eigen::VectorXd* grad = nullptr, Eigen::VectorXd* ratios = nullptr);

/// 0.5 mean((f(x) - target)^2) for a single-output network.
double value_loss(const Mlp& value, const Eigen::MatrixXd& obs, const Eigen::VectorXd& targets,
                  Eigen::VectorXd* grad = nullptr);

/// Fills values (when missing) and computes GAE advantages and returns for a batch of episodes.
PpoSamples build_ppo_samples(const PpoLearner& learner, const std::vector<EpisodeRecord>& batch);

struct UpdateDiagnostics {
    bool aborted = false;
    std::string reason;
    int gradient_steps = 0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double clip_fraction = 0.0;
};

UpdateDiagnostics ppo_update(PpoLearner& learner, const std::vector<EpisodeRecord>& batch, std::mt19937_64& rng);

}  // namespace rlfd
