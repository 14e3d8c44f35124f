#include "rlfd/ppo.hpp"

#include "rlfd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rlfd {

PpoLearner make_ppo(int obs_dim, const Eigen::VectorXd& bound, const std::vector<int>& hidden, Activation activation,
                    const PpoConfig& config, std::mt19937_64& rng) {
    if (!(config.clip > 0.0 && config.clip < 1.0)) throw InvalidArgument("ppo: clip must be in (0, 1)");
    if (!(config.discount > 0.0 && config.discount <= 1.0)) throw InvalidArgument("ppo: discount must be in (0, 1]");
    PpoLearner l;
    l.config = config;
    l.policy = make_policy(obs_dim, bound, hidden, activation, rng);
    std::vector<int> vs{obs_dim};
    vs.insert(vs.end(), hidden.begin(), hidden.end());
    vs.push_back(1);
    l.value = make_mlp(vs, activation, rng);
    l.policy_opt.lr = config.lr;
    l.value_opt.lr = config.value_lr;
    return l;
}

double ppo_surrogate_loss(const GaussianPolicy& policy, const PpoSamples& s, double clip, Eigen::VectorXd* grad,
                          Eigen::VectorXd* ratios) {
    const int n = s.size();
    if (n == 0) throw InvalidArgument("ppo_surrogate_loss: empty batch");
    MlpCache cache;
    const PolicyHeads h = policy_heads(policy, s.obs, grad ? &cache : nullptr);
    const int a = policy.action_dim();
    Eigen::MatrixXd g_out = Eigen::MatrixXd::Zero(2 * a, n);
    if (ratios) ratios->resize(n);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd mean = h.mean.col(i), log_std = h.log_std.col(i), u = s.u.col(i);
        const double lp = tanh_gaussian_log_prob(u, mean, log_std, policy.bound);
        const double rho = std::exp(lp - s.old_log_prob(i));
        const double adv = s.advantages(i);
        const double clipped = std::clamp(rho, 1.0 - clip, 1.0 + clip);
        loss -= std::min(rho * adv, clipped * adv) / n;
        if (ratios) (*ratios)(i) = rho;
        if (!grad) continue;
        // The clipped branch is flat where the ratio has left the band in the direction the
        // advantage pushes it.
        const bool flat = (adv > 0.0 && rho > 1.0 + clip) || (adv < 0.0 && rho < 1.0 - clip);
        if (flat) continue;
        Eigen::VectorXd dm, dls;
        tanh_gaussian_log_prob_grad(u, mean, log_std, dm, dls);
        const double coeff = -adv * rho / n;
        g_out.col(i).head(a) = coeff * dm;
        g_out.col(i).tail(a) = coeff * dls.cwiseProduct(h.clamp_mask.col(i));
    }
    if (grad) {
        *grad = Eigen::VectorXd::Zero(policy.net.parameter_count());
        mlp_backward(policy.net, cache, g_out, grad);
    }
    return loss;
}

double value_loss(const Mlp& value, const Eigen::MatrixXd& obs, const Eigen::VectorXd& targets, Eigen::VectorXd* grad) {
    const Eigen::Index n = obs.cols();
    if (n == 0) throw InvalidArgument("value_loss: empty batch");
    MlpCache cache;
    const Eigen::MatrixXd v = mlp_forward(value, obs, grad ? &cache : nullptr);
    const Eigen::RowVectorXd err = v.row(0) - targets.transpose();
    if (grad) {
        *grad = Eigen::VectorXd::Zero(value.parameter_count());
        mlp_backward(value, cache, err / static_cast<double>(n), grad);
    }
    return 0.5 * err.squaredNorm() / static_cast<double>(n);
}

PpoSamples build_ppo_samples(const PpoLearner& learner, const std::vector<EpisodeRecord>& batch) {
    int total = 0;
    for (const auto& e : batch) {
        validate(e);
        if (e.pre_squash.size() != e.rewards.size() || e.log_probs.size() != e.rewards.size())
            throw InvalidArgument("ppo: episodes must carry pre-squash samples and log-probs");
        total += e.steps();
    }
    const int obs_dim = learner.policy.obs_dim(), a = learner.policy.action_dim();
    PpoSamples s;
    s.obs.resize(obs_dim, total);
    s.u.resize(a, total);
    s.old_log_prob.resize(total);
    s.advantages.resize(total);
    s.returns.resize(total);
    int col = 0;
    for (const auto& e : batch) {
        const int n = e.steps();
        if (n == 0) continue;
        Eigen::MatrixXd obs(obs_dim, n);
        for (int t = 0; t < n; ++t) obs.col(t) = e.observations[t];
        std::vector<double> values = e.values;
        if (values.empty()) {
            const Eigen::MatrixXd v = mlp_forward(learner.value, obs);
            values.assign(v.data(), v.data() + n);
        }
        double last = 0.0;
        if (!e.terminal && e.final_observation.size() == obs_dim)
            last = mlp_forward(learner.value, e.final_observation)(0, 0);
        const GaeResult gae = compute_gae(e.rewards, values, last, learner.config.discount, learner.config.gae_lambda);
        for (int t = 0; t < n; ++t, ++col) {
            s.obs.col(col) = obs.col(t);
            s.u.col(col) = e.pre_squash[t];
            s.old_log_prob(col) = e.log_probs[t];
            s.advantages(col) = gae.advantages(t);
            s.returns(col) = gae.returns(t);
        }
    }
    return s;
}

namespace {

void clip_norm(Eigen::VectorXd& g, double max_norm) {
    const double n = g.norm();
    if (max_norm > 0.0 && n > max_norm) g *= max_norm / n;
}

PpoSamples select(const PpoSamples& s, const std::vector<int>& idx, std::size_t begin, std::size_t end) {
    const int m = static_cast<int>(end - begin);
    PpoSamples out;
    out.obs.resize(s.obs.rows(), m);
    out.u.resize(s.u.rows(), m);
    out.old_log_prob.resize(m);
    out.advantages.resize(m);
    out.returns.resize(m);
    for (int k = 0; k < m; ++k) {
        const int i = idx[begin + k];
        out.obs.col(k) = s.obs.col(i);
        out.u.col(k) = s.u.col(i);
        out.old_log_prob(k) = s.old_log_prob(i);
        out.advantages(k) = s.advantages(i);
        out.returns(k) = s.returns(i);
    }
    return out;
}

}  // namespace

UpdateDiagnostics ppo_update(PpoLearner& learner, const std::vector<EpisodeRecord>& batch, std::mt19937_64& rng) {
    if (batch.empty()) throw InvalidArgument("ppo_update: empty batch");
    UpdateDiagnostics diag;
    PpoSamples samples = build_ppo_samples(learner, batch);
    const int n = samples.size();
    if (n == 0) throw InvalidArgument("ppo_update: batch has no steps");
    if (learner.config.normalize_advantages && n > 1) {
        const double mean = samples.advantages.mean();
        const double sd = std::sqrt((samples.advantages.array() - mean).square().mean());
        if (sd > 1e-12) samples.advantages = ((samples.advantages.array() - mean) / sd).matrix();
    }

    const PpoConfig& c = learner.config;
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    const GaussianPolicy policy_backup = learner.policy;
    const Mlp value_backup = learner.value;
    const Adam popt_backup = learner.policy_opt, vopt_backup = learner.value_opt;
    double clipped = 0.0;
    int counted = 0;
    for (int epoch = 0; epoch < c.epochs; ++epoch) {
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t mb = static_cast<std::size_t>(std::max(1, c.minibatch));
        for (std::size_t b = 0; b < idx.size(); b += mb) {
            const PpoSamples m = select(samples, idx, b, std::min(idx.size(), b + mb));
            Eigen::VectorXd gp, gv, ratios;
            diag.policy_loss = ppo_surrogate_loss(learner.policy, m, c.clip, &gp, &ratios);
            diag.value_loss = value_loss(learner.value, m.obs, m.returns, &gv);
            if (!gp.allFinite() || !gv.allFinite() || !std::isfinite(diag.policy_loss)) {
                learner.policy = policy_backup;
                learner.value = value_backup;
                learner.policy_opt = popt_backup;
                learner.value_opt = vopt_backup;
                diag.aborted = true;
                diag.reason = "non-finite gradient";
                return diag;
            }
            clipped += ((ratios.array() - 1.0).abs() > c.clip).cast<double>().sum();
            counted += static_cast<int>(ratios.size());
            clip_norm(gp, c.max_grad_norm);
            clip_norm(gv, c.max_grad_norm);
            adam_step(learner.policy.net, learner.policy_opt, gp);
            adam_step(learner.value, learner.value_opt, gv);
            ++diag.gradient_steps;
        }
    }
    if (!learner.policy.net.parameters().allFinite() || !learner.value.parameters().allFinite()) {
        learner.policy = policy_backup;
        learner.value = value_backup;
        learner.policy_opt = popt_backup;
        learner.value_opt = vopt_backup;
        diag.aborted = true;
        diag.reason = "non-finite parameters";
        return diag;
    }
    diag.clip_fraction = counted ? clipped / counted : 0.0;
    ++learner.updates;
    return diag;
}

}  // namespace rlfd
