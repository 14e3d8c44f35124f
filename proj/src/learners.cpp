#include "rlfd/learners.hpp"

#include "rlfd/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace rlfd {

double compute_return(const std::vector<double>& rewards, double discount) {
    double total = 0.0, g = 1.0;
    for (double r : rewards) {
        if (!std::isfinite(r)) throw InvalidArgument("compute_return: non-finite reward");
        total += g * r;
        g *= discount;
    }
    return total;
}

double sparse_reward(double distance_l2, double kappa) {
    if (!(distance_l2 >= 0.0)) throw InvalidArgument("sparse_reward: distance must be non-negative");
    if (!(kappa > 0.0)) throw InvalidArgument("sparse_reward: kappa must be positive");
    return distance_l2 <= kappa ? 1.0 : 0.0;
}

double dense_reward(double l1, double l2, const DenseRewardSpec& spec) {
    if (!(spec.epsilon > 0.0) || !(spec.beta > 0.0)) throw InvalidArgument("dense_reward: bad constants");
    if (!(l2 > spec.epsilon)) throw SingularityError("dense_reward: l2 <= epsilon");
    return -(spec.alpha * l1 + spec.beta / (l2 - spec.epsilon));
}

double dense_reward_guarded(double l1, double l2, const DenseRewardSpec& spec, double floor, bool* floor_engaged) {
    double r = floor;
    bool engaged = true;
    if (l2 > spec.epsilon) {
        r = dense_reward(l1, l2, spec);
        engaged = r < floor;
        r = std::max(r, floor);
    }
    if (floor_engaged) *floor_engaged = engaged;
    return r;
}

double exp_l1_reward(double l1, double scale) {
    if (!(l1 >= 0.0)) throw InvalidArgument("exp_l1_reward: distance must be non-negative");
    if (!(scale > 0.0)) throw InvalidArgument("exp_l1_reward: scale must be positive");
    return std::exp(-l1 / scale);
}

std::string to_string(RewardKind kind) {
    switch (kind) {
        case RewardKind::Sparse: return "sparse";
        case RewardKind::Dense: return "dense";
        case RewardKind::ExpL1: return "exp-l1";
    }
    return "?";
}

RewardKind parse_reward(const std::string& name) {
    if (name == "sparse") return RewardKind::Sparse;
    if (name == "dense") return RewardKind::Dense;
    if (name == "exp-l1") return RewardKind::ExpL1;
    throw InvalidArgument("unknown reward: " + name);
}

GaussianPolicy make_policy(int obs_dim, const Eigen::VectorXd& bound, const std::vector<int>& hidden,
                           Activation activation, std::mt19937_64& rng, double init_log_std) {
    if (bound.size() < 1 || !(bound.array() >= 0.0).all()) throw InvalidArgument("make_policy: bad bounds");
    std::vector<int> sizes{obs_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2 * static_cast<int>(bound.size()));
    GaussianPolicy p;
    p.net = make_mlp(sizes, activation, rng, 0.01);
    p.net.biases.back().tail(bound.size()).setConstant(init_log_std);
    p.bound = bound;
    return p;
}

PolicyHeads policy_heads(const GaussianPolicy& policy, const Eigen::MatrixXd& obs, MlpCache* cache) {
    const Eigen::MatrixXd out = mlp_forward(policy.net, obs, cache);
    const int a = policy.action_dim();
    PolicyHeads h;
    h.mean = out.topRows(a);
    const Eigen::MatrixXd raw = out.bottomRows(a);
    h.log_std = raw.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
    h.clamp_mask = ((raw.array() >= kLogStdMin) && (raw.array() <= kLogStdMax)).cast<double>().matrix();
    return h;
}

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

// log(1 - tanh(u)^2), stable for large |u|.
double log_one_minus_tanh2(double u) {
    const double x = -2.0 * std::abs(u);
    return 2.0 * (std::numbers::ln2 - std::abs(u) - std::log1p(std::exp(x)));
}

}  // namespace

double tanh_gaussian_log_prob(const Eigen::VectorXd& u, const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std,
                              const Eigen::VectorXd& bound) {
    double lp = 0.0;
    for (Eigen::Index j = 0; j < u.size(); ++j) {
        const double z = (u(j) - mean(j)) * std::exp(-log_std(j));
        lp += -0.5 * z * z - log_std(j) - kHalfLog2Pi;
        lp -= std::log(bound(j)) + log_one_minus_tanh2(u(j));
    }
    return lp;
}

double tanh_gaussian_log_prob_action(const Eigen::VectorXd& action, const Eigen::VectorXd& mean,
                                     const Eigen::VectorXd& log_std, const Eigen::VectorXd& bound) {
    Eigen::VectorXd u(action.size());
    for (Eigen::Index j = 0; j < action.size(); ++j) {
        const double x = action(j) / bound(j);
        if (!(std::abs(x) < 1.0)) throw InvalidArgument("tanh_gaussian_log_prob_action: action on the bound");
        u(j) = std::atanh(x);
    }
    return tanh_gaussian_log_prob(u, mean, log_std, bound);
}

void tanh_gaussian_log_prob_grad(const Eigen::VectorXd& u, const Eigen::VectorXd& mean,
                                 const Eigen::VectorXd& log_std, Eigen::VectorXd& d_mean,
                                 Eigen::VectorXd& d_log_std) {
    const Eigen::ArrayXd inv_var = (-2.0 * log_std.array()).exp();
    const Eigen::ArrayXd diff = (u - mean).array();
    d_mean = (diff * inv_var).matrix();
    d_log_std = (diff.square() * inv_var - 1.0).matrix();
}

PolicySample policy_act(const GaussianPolicy& policy, const Eigen::VectorXd& obs, std::mt19937_64& rng,
                        bool deterministic) {
    if (!obs.allFinite()) throw InvalidArgument("policy_act: non-finite observation");
    const PolicyHeads h = policy_heads(policy, obs);
    const Eigen::VectorXd mean = h.mean.col(0), log_std = h.log_std.col(0);
    PolicySample s;
    s.u = mean;
    if (!deterministic) {
        std::normal_distribution<double> n(0.0, 1.0);
        for (Eigen::Index j = 0; j < s.u.size(); ++j) s.u(j) += std::exp(log_std(j)) * n(rng);
    }
    s.action = policy.bound.cwiseProduct(s.u.array().tanh().matrix());
    s.log_prob = tanh_gaussian_log_prob(s.u, mean, log_std, policy.bound.cwiseMax(1e-300));
    return s;
}

void validate(const EpisodeRecord& e) {
    const std::size_t n = e.rewards.size();
    if (e.observations.size() != n || e.actions.size() != n)
        throw InvalidArgument("EpisodeRecord: misaligned observations/actions");
    if (!e.pre_squash.empty() && e.pre_squash.size() != n) throw InvalidArgument("EpisodeRecord: misaligned u");
    if (!e.log_probs.empty() && e.log_probs.size() != n) throw InvalidArgument("EpisodeRecord: misaligned log-probs");
    if (!e.values.empty() && e.values.size() != n) throw InvalidArgument("EpisodeRecord: misaligned values");
    for (double r : e.rewards)
        if (!std::isfinite(r)) throw InvalidArgument("EpisodeRecord: non-finite reward");
}

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values, double last_value,
                      double discount, double lambda) {
    const std::size_t n = rewards.size();
    if (values.size() != n) throw InvalidArgument("compute_gae: rewards and values differ in length");
    GaeResult out;
    out.advantages.resize(static_cast<Eigen::Index>(n));
    out.returns.resize(static_cast<Eigen::Index>(n));
    double next_value = last_value, running = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        const double delta = rewards[i] + discount * next_value - values[i];
        running = delta + discount * lambda * running;
        out.advantages(static_cast<Eigen::Index>(i)) = running;
        out.returns(static_cast<Eigen::Index>(i)) = running + values[i];
        next_value = values[i];
    }
    return out;
}

double curriculum_step(double current_radius, double success_rate_window, const CurriculumConfig& config) {
    if (!(current_radius >= 0.0)) throw InvalidArgument("curriculum_step: radius must be non-negative");
    if (success_rate_window >= config.threshold) return std::min(current_radius + config.increment, config.cap);
    return current_radius;
}

std::string fingerprint(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

std::uint64_t to_little(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return r;
}

std::filesystem::path binary_path(const std::filesystem::path& manifest) {
    std::filesystem::path p = manifest;
    p.replace_extension(".bin");
    return p;
}

}  // namespace

void save_policy_checkpoint(const std::string& path, const GaussianPolicy& policy, const std::string& extra_json) {
    using nlohmann::json;
    const std::filesystem::path manifest(path);
    const std::filesystem::path bin = binary_path(manifest);
    const Eigen::VectorXd params = policy.net.parameters();

    json j;
    j["format"] = "rlfd-policy-1";
    j["sizes"] = policy.net.sizes;
    j["activation"] = to_string(policy.net.activation);
    j["bound"] = std::vector<double>(policy.bound.data(), policy.bound.data() + policy.bound.size());
    j["parameter_count"] = params.size();
    j["binary"] = bin.filename().string();
    j["extra"] = json::parse(extra_json);
    j["config_hash"] = fingerprint(j["extra"].dump());

    std::ofstream b(bin, std::ios::binary);
    if (!b) throw std::runtime_error("cannot write " + bin.string());
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &params(i), 8);
        bits = to_little(bits);
        b.write(reinterpret_cast<const char*>(&bits), 8);
    }
    std::ofstream m(manifest);
    if (!m) throw std::runtime_error("cannot write " + manifest.string());
    m << j.dump(2) << '\n';
    if (!b || !m) throw std::runtime_error("checkpoint write failed: " + path);
}

LoadedPolicy load_policy_checkpoint(const std::string& path) {
    using nlohmann::json;
    std::ifstream m(path);
    if (!m) throw std::runtime_error("cannot read " + path);
    const json j = json::parse(m);
    if (j.value("format", "") != "rlfd-policy-1") throw InvalidArgument("not a policy checkpoint: " + path);

    LoadedPolicy out;
    GaussianPolicy& p = out.policy;
    std::mt19937_64 unused(0);
    const auto sizes = j.at("sizes").get<std::vector<int>>();
    p.net = make_mlp(sizes, parse_activation(j.at("activation").get<std::string>()), unused);
    const auto bound = j.at("bound").get<std::vector<double>>();
    p.bound = Eigen::Map<const Eigen::VectorXd>(bound.data(), static_cast<Eigen::Index>(bound.size()));

    const std::filesystem::path bin = std::filesystem::path(path).parent_path() / j.at("binary").get<std::string>();
    std::ifstream b(bin, std::ios::binary);
    if (!b) throw std::runtime_error("cannot read " + bin.string());
    Eigen::VectorXd params(j.at("parameter_count").get<Eigen::Index>());
    if (params.size() != p.net.parameter_count()) throw InvalidArgument("checkpoint parameter count mismatch");
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        std::uint64_t bits;
        b.read(reinterpret_cast<char*>(&bits), 8);
        if (!b) throw std::runtime_error("truncated checkpoint binary: " + bin.string());
        bits = to_little(bits);
        std::memcpy(&params(i), &bits, 8);
    }
    p.net.set_parameters(params);
    out.extra_json = j.at("extra").dump();
    return out;
}

}  // namespace rlfd
