#include "doctest.h"

#include "rlfd/errors.hpp"
#include "rlfd/learners.hpp"
#include "rlfd/nn.hpp"

#include <cmath>
#include <filesystem>

using namespace rlfd;

TEST_CASE("compute_return") {
    CHECK(compute_return({0, 0, 1}, 1.0) == 1.0);
    CHECK(compute_return({1, 1}, 0.99) == doctest::Approx(1.99).epsilon(1e-15));
    CHECK(compute_return({}, 0.9) == 0.0);
    CHECK(compute_return({1, 2, 3}, 0.5) == doctest::Approx(1 + 1 + 0.75));
    CHECK_THROWS_AS(compute_return({1, NAN}, 0.9), InvalidArgument);
}

TEST_CASE("sparse reward") {
    CHECK(sparse_reward(0.005, 0.01) == 1.0);
    CHECK(sparse_reward(0.01, 0.01) == 1.0);
    CHECK(sparse_reward(0.02, 0.01) == 0.0);
    CHECK(sparse_reward(0.0, 0.01) == 1.0);
    CHECK_THROWS_AS(sparse_reward(-1e-3, 0.01), InvalidArgument);
}

TEST_CASE("dense reward") {
    const DenseRewardSpec spec{10.0, 0.002, 0.0001};
    CHECK(std::abs(dense_reward(0.1, 0.05, spec) - (-1.0400802)) < 1e-6);
    CHECK(dense_reward(0.0, 1e9, spec) < 0.0);
    CHECK(dense_reward(0.0, 1e9, spec) > -1e-11);

    // Slope -alpha in L1 at fixed L2.
    const double a = dense_reward(0.10, 0.05, spec), b = dense_reward(0.11, 0.05, spec);
    CHECK((b - a) / 0.01 == doctest::Approx(-10.0).epsilon(1e-9));
    for (double l1 = 0.0; l1 < 0.5; l1 += 0.01) CHECK(dense_reward(l1 + 0.01, 0.05, spec) < dense_reward(l1, 0.05, spec));
    // Decreasing as L2 approaches epsilon from above.
    double prev = dense_reward(0.0, 0.01, spec);
    for (double l2 = 0.009; l2 > 0.00011; l2 *= 0.8) {
        const double r = dense_reward(0.0, l2, spec);
        CHECK(r < prev);
        prev = r;
    }

    CHECK_THROWS_AS(dense_reward(0.0, 0.0001, spec), SingularityError);
    CHECK_THROWS_AS(dense_reward(0.0, 0.00005, spec), SingularityError);
    bool engaged = false;
    CHECK(dense_reward_guarded(0.0, 0.0001, spec, -50.0, &engaged) == -50.0);
    CHECK(engaged);
    CHECK(dense_reward_guarded(0.0, 0.0001 + 1e-9, spec, -50.0, &engaged) == -50.0);
    CHECK(engaged);
    CHECK(dense_reward_guarded(0.1, 0.05, spec, -50.0, &engaged) == doctest::Approx(-1.0400802));
    CHECK_FALSE(engaged);
}

TEST_CASE("compute_gae matches the discounted return when lambda = 1 and values are zero") {
    const std::vector<double> r{0.5, -1.0, 2.0, 0.25};
    const GaeResult g = compute_gae(r, {0, 0, 0, 0}, 0.0, 0.9, 1.0);
    for (int t = 0; t < 4; ++t) {
        const std::vector<double> tail(r.begin() + t, r.end());
        CHECK(g.returns(t) == doctest::Approx(compute_return(tail, 0.9)));
    }
    // lambda = 0 gives one-step TD errors.
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    const GaeResult td = compute_gae(r, v, 5.0, 0.9, 0.0);
    CHECK(td.advantages(0) == doctest::Approx(0.5 + 0.9 * 2.0 - 1.0));
    CHECK(td.advantages(3) == doctest::Approx(0.25 + 0.9 * 5.0 - 4.0));
}

TEST_CASE("curriculum_step") {
    const CurriculumConfig cfg{0.8, 0.0025, 0.015};
    CHECK(curriculum_step(0.005, 0.9, cfg) == doctest::Approx(0.0075));
    CHECK(curriculum_step(0.005, 0.5, cfg) == 0.005);
    CHECK(curriculum_step(0.015, 1.0, cfg) == 0.015);
    CHECK(curriculum_step(0.014, 1.0, cfg) == 0.015);
    CHECK(CurriculumConfig{}.cap == 0.015);
    CHECK_THROWS_AS(curriculum_step(-0.1, 1.0, cfg), InvalidArgument);
}

TEST_CASE("policy_act bounds and determinism") {
    std::mt19937_64 rng(1);
    const Eigen::VectorXd bound = Eigen::Vector3d(0.005, 0.005, 0.1);
    GaussianPolicy p = make_policy(4, bound, {8, 8}, Activation::Tanh, rng, 1.5);
    const Eigen::VectorXd obs = Eigen::Vector4d(0.1, -0.2, 0.3, 1.0);

    const PolicySample det = policy_act(p, obs, rng, true);
    const PolicyHeads h = policy_heads(p, obs);
    CHECK((det.action - bound.cwiseProduct(h.mean.col(0).array().tanh().matrix())).norm() == 0.0);

    // Log-std at its floor: samples stay within a few floor standard deviations of the deterministic action.
    GaussianPolicy tight = p;
    tight.net.weights.back().bottomRows(3).setZero();
    tight.net.biases.back().tail(3).setConstant(-50.0);
    const PolicySample s = policy_act(tight, obs, rng);
    const Eigen::VectorXd gap = (s.action - policy_act(tight, obs, rng, true).action).cwiseAbs();
    CHECK((gap.array() <= 5.0 * std::exp(kLogStdMin) * bound.array()).all());

    for (int i = 0; i < 1000000; ++i) {
        const PolicySample a = policy_act(p, obs, rng);
        if (!((a.action.array().abs() <= bound.array()).all())) REQUIRE(false);
    }
}

TEST_CASE("tanh-Gaussian density matches a Monte-Carlo histogram") {
    std::mt19937_64 rng(11);
    const Eigen::VectorXd mean = Eigen::VectorXd::Constant(1, 0.3);
    const Eigen::VectorXd log_std = Eigen::VectorXd::Constant(1, -0.2);
    const Eigen::VectorXd bound = Eigen::VectorXd::Constant(1, 2.0);
    std::normal_distribution<double> n(0.0, 1.0);
    const int samples = 1000000, bins = 100;
    std::vector<double> hist(bins, 0.0);
    for (int i = 0; i < samples; ++i) {
        const double a = 2.0 * std::tanh(0.3 + std::exp(-0.2) * n(rng));
        const int b = std::clamp(static_cast<int>((a + 2.0) / 4.0 * bins), 0, bins - 1);
        hist[b] += 1.0 / samples;
    }
    double kl = 0.0, mass = 0.0;
    for (int b = 0; b < bins; ++b) {
        const double lo = -2.0 + 4.0 * b / bins, width = 4.0 / bins;
        double q = 0.0;
        for (int k = 0; k < 20; ++k) {
            const double a = lo + (k + 0.5) * width / 20;
            q += std::exp(tanh_gaussian_log_prob_action(Eigen::VectorXd::Constant(1, a), mean, log_std, bound)) *
                 width / 20;
        }
        mass += q;
        if (hist[b] > 0.0) kl += hist[b] * std::log(hist[b] / q);
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(kl < 1e-3);
    MESSAGE("histogram KL = " << kl);
}

namespace {

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

template <class F>
Eigen::VectorXd numeric_gradient(const Eigen::VectorXd& x, F f, double h = 1e-6) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd p = x, m = x;
        p(i) += h;
        m(i) -= h;
        g(i) = (f(p) - f(m)) / (2 * h);
    }
    return g;
}

}  // namespace

TEST_CASE("tanh-Gaussian log-prob gradient") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd u(3), mean(3), ls(3), bound = Eigen::Vector3d(1.0, 0.5, 2.0);
        for (int j = 0; j < 3; ++j) {
            u(j) = n(rng);
            mean(j) = n(rng);
            ls(j) = 0.5 * n(rng);
        }
        Eigen::VectorXd dm, dls;
        tanh_gaussian_log_prob_grad(u, mean, ls, dm, dls);
        const Eigen::VectorXd fm =
            numeric_gradient(mean, [&](const Eigen::VectorXd& x) { return tanh_gaussian_log_prob(u, x, ls, bound); });
        const Eigen::VectorXd fl =
            numeric_gradient(ls, [&](const Eigen::VectorXd& x) { return tanh_gaussian_log_prob(u, mean, x, bound); });
        REQUIRE(relative_error(dm, fm) < 1e-4);
        REQUIRE(relative_error(dls, fl) < 1e-4);
    }
}

TEST_CASE("mlp backprop matches finite differences") {
    std::mt19937_64 rng(5);
    for (Activation act : {Activation::Tanh, Activation::Relu}) {
        Mlp net = make_mlp({3, 4, 2}, act, rng);
        for (auto& b : net.biases) b.setConstant(0.1);
        REQUIRE(net.parameter_count() <= 32);
        Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 5);
        const Eigen::MatrixXd w = Eigen::MatrixXd::Random(2, 5);
        auto loss = [&](const Eigen::VectorXd& p) {
            Mlp m = net;
            m.set_parameters(p);
            return mlp_forward(m, x).cwiseProduct(w).sum();
        };
        MlpCache cache;
        mlp_forward(net, x, &cache);
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.parameter_count());
        const Eigen::MatrixXd gx = mlp_backward(net, cache, w, &grad);
        CHECK(relative_error(grad, numeric_gradient(net.parameters(), loss)) < 1e-4);

        auto loss_x = [&](const Eigen::VectorXd& xv) {
            return mlp_forward(net, xv.reshaped(3, 5)).cwiseProduct(w).sum();
        };
        CHECK(relative_error(gx.reshaped(), numeric_gradient(x.reshaped(), loss_x)) < 1e-4);
    }
}

TEST_CASE("soft update and Adam") {
    std::mt19937_64 rng(9);
    Mlp a = make_mlp({2, 3, 1}, Activation::Relu, rng), b = make_mlp({2, 3, 1}, Activation::Relu, rng);
    const Eigen::VectorXd pa = a.parameters(), pb = b.parameters();
    soft_update(b, a, 0.005);
    CHECK((b.parameters() - (0.005 * pa + 0.995 * pb)).cwiseAbs().maxCoeff() == 0.0);

    // Adam minimizes a quadratic.
    Adam opt;
    opt.lr = 0.05;
    Eigen::VectorXd x = Eigen::Vector2d(3.0, -2.0);
    for (int i = 0; i < 2000; ++i) opt.step(x, 2.0 * x);
    CHECK(x.norm() < 1e-3);
}

TEST_CASE("policy checkpoint round trip") {
    std::mt19937_64 rng(12);
    const GaussianPolicy p = make_policy(5, Eigen::Vector3d(0.005, 0.005, 0.005), {16, 16}, Activation::Relu, rng);
    const auto dir = std::filesystem::temp_directory_path() / "rlfd_ckpt_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "policy.json").string();
    save_policy_checkpoint(path, p, R"({"task":"easy","seed":3})");
    CHECK(std::filesystem::exists(dir / "policy.bin"));
    CHECK(std::filesystem::file_size(dir / "policy.bin") == 8u * p.net.parameter_count());
    const LoadedPolicy q = load_policy_checkpoint(path);
    CHECK(q.policy.net.sizes == p.net.sizes);
    CHECK(q.policy.bound == p.bound);
    CHECK((q.policy.net.parameters() - p.net.parameters()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(q.extra_json.find("\"easy\"") != std::string::npos);
    CHECK(fingerprint("abc") == fingerprint("abc"));
    CHECK(fingerprint("abc") != fingerprint("abd"));
    std::filesystem::remove_all(dir);
    CHECK_THROWS(load_policy_checkpoint((dir / "missing.json").string()));
}

TEST_CASE("exp-l1 reward") {
    CHECK(exp_l1_reward(0.0, 0.01) == 1.0);
    CHECK(exp_l1_reward(0.01, 0.01) == doctest::Approx(std::exp(-1.0)));
    CHECK_THROWS_AS(exp_l1_reward(-1.0, 0.01), InvalidArgument);
    CHECK(parse_reward("exp-l1") == RewardKind::ExpL1);
    CHECK(to_string(RewardKind::ExpL1) == "exp-l1");
}
