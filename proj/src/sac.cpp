#include "rlfd/sac.hpp"

#include "rlfd/errors.hpp"

#include <cmath>

namespace rlfd {

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw InvalidArgument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::add(Transition t) {
    if (static_cast<int>(data_.size()) < capacity_) {
        data_.push_back(std::move(t));
    } else {
        data_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % static_cast<std::size_t>(capacity_);
}

std::vector<const Transition*> ReplayBuffer::sample(int n, std::mt19937_64& rng) const {
    if (data_.empty()) throw InvalidArgument("ReplayBuffer::sample: empty buffer");
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    std::vector<const Transition*> out(n);
    for (auto& p : out) p = &data_[pick(rng)];
    return out;
}

SacLearner make_sac(int obs_dim, const Eigen::VectorXd& bound, const std::vector<int>& hidden, Activation activation,
                    const SacConfig& config, std::mt19937_64& rng) {
    if (!(config.discount > 0.0 && config.discount <= 1.0)) throw InvalidArgument("sac: discount must be in (0, 1]");
    if (!(config.rho > 0.0 && config.rho <= 1.0)) throw InvalidArgument("sac: rho must be in (0, 1]");
    if (config.updates_per_iteration < 1 || config.batch < 1) throw InvalidArgument("sac: bad update counts");
    SacLearner l;
    l.replay = ReplayBuffer(config.capacity);
    l.config = config;
    l.policy = make_policy(obs_dim, bound, hidden, activation, rng, 0.0);
    std::vector<int> qs{obs_dim + static_cast<int>(bound.size())};
    qs.insert(qs.end(), hidden.begin(), hidden.end());
    qs.push_back(1);
    l.q1 = make_mlp(qs, activation, rng);
    l.q2 = make_mlp(qs, activation, rng);
    l.q1_target = l.q1;
    l.q2_target = l.q2;
    l.log_alpha = std::log(config.init_alpha);
    l.policy_opt.lr = l.q1_opt.lr = l.q2_opt.lr = config.lr;
    l.alpha_opt.lr = config.alpha_lr;
    return l;
}

void store_episode(SacLearner& learner, const EpisodeRecord& e) {
    validate(e);
    const int n = e.steps();
    for (int t = 0; t < n; ++t) {
        Transition tr;
        tr.obs = e.observations[t];
        tr.action = e.actions[t].cwiseQuotient(learner.policy.bound.cwiseMax(1e-300));
        tr.reward = e.rewards[t];
        const bool last = t + 1 == n;
        tr.next_obs = last ? (e.final_observation.size() ? e.final_observation : e.observations[t])
                           : e.observations[t + 1];
        tr.done = last && e.terminal;
        learner.replay.add(std::move(tr));
    }
}

namespace {

Eigen::MatrixXd stack(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
    Eigen::MatrixXd out(top.rows() + bottom.rows(), top.cols());
    out << top, bottom;
    return out;
}

}  // namespace

double sac_critic_loss(const Mlp& q, const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions,
                       const Eigen::VectorXd& targets, Eigen::VectorXd* grad) {
    return value_loss(q, stack(obs, actions), targets, grad);
}

double sac_actor_loss(const GaussianPolicy& policy, const Mlp& q1, const Mlp& q2, const Eigen::MatrixXd& obs,
                      const Eigen::MatrixXd& noise, double alpha, Eigen::VectorXd* grad, Eigen::VectorXd* log_probs) {
    const Eigen::Index n = obs.cols();
    const int a = policy.action_dim();
    MlpCache pc;
    const PolicyHeads h = policy_heads(policy, obs, grad ? &pc : nullptr);
    const Eigen::MatrixXd sd = h.log_std.array().exp().matrix();
    const Eigen::MatrixXd u = h.mean + sd.cwiseProduct(noise);
    const Eigen::MatrixXd act = u.array().tanh().matrix();

    // log pi in normalized action space.
    Eigen::VectorXd lp(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < a; ++j) {
            const double x = std::abs(u(j, i));
            const double log1mt2 = 2.0 * (std::log(2.0) - x - std::log1p(std::exp(-2.0 * x)));
            s += -0.5 * noise(j, i) * noise(j, i) - h.log_std(j, i) - 0.91893853320467274178 - log1mt2;
        }
        lp(i) = s;
    }
    if (log_probs) *log_probs = lp;

    MlpCache c1, c2;
    const Eigen::MatrixXd in = stack(obs, act);
    const Eigen::MatrixXd v1 = mlp_forward(q1, in, grad ? &c1 : nullptr);
    const Eigen::MatrixXd v2 = mlp_forward(q2, in, grad ? &c2 : nullptr);
    double loss = 0.0;
    Eigen::RowVectorXd pick1(n), pick2(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool first = v1(0, i) <= v2(0, i);
        pick1(i) = first ? 1.0 : 0.0;
        pick2(i) = first ? 0.0 : 1.0;
        loss += (alpha * lp(i) - std::min(v1(0, i), v2(0, i))) / static_cast<double>(n);
    }
    if (!grad) return loss;

    // dQmin/daction through whichever critic is smaller.
    const Eigen::MatrixXd g1 = mlp_backward(q1, c1, pick1, nullptr);
    const Eigen::MatrixXd g2 = mlp_backward(q2, c2, pick2, nullptr);
    const Eigen::MatrixXd dq_da = (g1 + g2).bottomRows(a);
    const Eigen::ArrayXXd t = act.array();
    const Eigen::ArrayXXd dq_du = dq_da.array() * (1.0 - t.square());
    const double inv_n = 1.0 / static_cast<double>(n);
    // d(log pi)/du = 2 tanh(u) from the squash term; d u/d mean = 1, d u/d log_std = sd .* noise.
    const Eigen::ArrayXXd dl_du = alpha * 2.0 * t - dq_du;
    Eigen::MatrixXd g_out(2 * a, n);
    g_out.topRows(a) = (dl_du * inv_n).matrix();
    g_out.bottomRows(a) =
        ((dl_du * sd.array() * noise.array() - alpha) * inv_n * h.clamp_mask.array()).matrix();
    *grad = Eigen::VectorXd::Zero(policy.net.parameter_count());
    mlp_backward(policy.net, pc, g_out, grad);
    return loss;
}

UpdateDiagnostics sac_update(SacLearner& l, std::mt19937_64& rng) {
    const SacConfig& c = l.config;
    if (l.replay.size() < c.batch) throw InvalidArgument("sac_update: replay holds fewer transitions than a batch");
    UpdateDiagnostics diag;
    const int a = l.policy.action_dim();
    const int obs_dim = l.policy.obs_dim();
    const double target_entropy = c.target_entropy * a;
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw_noise = [&](int rows, int cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = normal(rng);
        return m;
    };

    // Snapshot everything but the replay buffer, which an abort leaves untouched.
    ReplayBuffer replay = std::move(l.replay);
    const SacLearner backup = l;
    l.replay = std::move(replay);
    for (int step = 0; step < c.updates_per_iteration; ++step) {
        const auto batch = l.replay.sample(c.batch, rng);
        const int n = c.batch;
        Eigen::MatrixXd obs(obs_dim, n), next(obs_dim, n), act(a, n);
        Eigen::VectorXd rew(n), notdone(n);
        for (int i = 0; i < n; ++i) {
            obs.col(i) = batch[i]->obs;
            next.col(i) = batch[i]->next_obs;
            act.col(i) = batch[i]->action;
            rew(i) = batch[i]->reward;
            notdone(i) = batch[i]->done ? 0.0 : 1.0;
        }
        const double alpha = std::exp(l.log_alpha);

        // Soft Bellman target from the target critics and the current policy.
        const PolicyHeads nh = policy_heads(l.policy, next);
        const Eigen::MatrixXd nnoise = draw_noise(a, n);
        const Eigen::MatrixXd nu = nh.mean + nh.log_std.array().exp().matrix().cwiseProduct(nnoise);
        Eigen::MatrixXd nact = nu.array().tanh().matrix();
        Eigen::VectorXd nlp(n);
        for (int i = 0; i < n; ++i)
            nlp(i) = tanh_gaussian_log_prob(nu.col(i), nh.mean.col(i), nh.log_std.col(i), Eigen::VectorXd::Ones(a));
        const Eigen::MatrixXd nin = stack(next, nact);
        const Eigen::MatrixXd t1 = mlp_forward(l.q1_target, nin), t2 = mlp_forward(l.q2_target, nin);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i)
            y(i) = rew(i) + c.discount * notdone(i) * (std::min(t1(0, i), t2(0, i)) - alpha * nlp(i));

        Eigen::VectorXd g1, g2;
        const double l1 = sac_critic_loss(l.q1, obs, act, y, &g1);
        const double l2 = sac_critic_loss(l.q2, obs, act, y, &g2);
        adam_step(l.q1, l.q1_opt, g1);
        adam_step(l.q2, l.q2_opt, g2);

        Eigen::VectorXd gp, lps;
        diag.policy_loss = sac_actor_loss(l.policy, l.q1, l.q2, obs, draw_noise(a, n), alpha, &gp, &lps);
        adam_step(l.policy.net, l.policy_opt, gp);

        Eigen::VectorXd la(1);
        la(0) = l.log_alpha;
        Eigen::VectorXd ga(1);
        ga(0) = -(lps.array() + target_entropy).mean();
        l.alpha_opt.step(la, ga);
        l.log_alpha = la(0);

        soft_update(l.q1_target, l.q1, c.rho);
        soft_update(l.q2_target, l.q2, c.rho);
        diag.value_loss = 0.5 * (l1 + l2);
        ++diag.gradient_steps;
        ++l.gradient_steps;

        if (!g1.allFinite() || !g2.allFinite() || !gp.allFinite() || !std::isfinite(l.log_alpha)) {
            ReplayBuffer keep = std::move(l.replay);
            l = backup;
            l.replay = std::move(keep);
            diag.aborted = true;
            diag.reason = "non-finite gradient";
            return diag;
        }
    }
    return diag;
}

}  // namespace rlfd
