#include "doctest.h"

#include "rlfd/demos.hpp"
#include "rlfd/dmp.hpp"
#include "rlfd/errors.hpp"

#include <cmath>
#include <random>

using namespace rlfd;

namespace {

// Independent replay of a fitted DMP: plain Euler on the textbook second-order form,
// evaluating the Gaussian kernels inline rather than through basis_activations.
Eigen::MatrixXd euler_replay(const DmpParams& p, const Eigen::VectorXd& start, double duration, double dt) {
    const int steps = static_cast<int>(std::llround(duration / dt));
    const int d = p.dofs();
    Eigen::MatrixXd out(steps + 1, d);
    Eigen::VectorXd x = start, xd = Eigen::VectorXd::Zero(d);
    for (int k = 0; k <= steps; ++k) {
        out.row(k) = x.transpose();
        const double s = std::exp(-p.alpha_s * k * dt / p.tau);
        double num_total = 0.0;
        Eigen::VectorXd weighted = Eigen::VectorXd::Zero(d);
        for (int i = 0; i < p.basis.count(); ++i) {
            const double psi = std::exp(-p.basis.widths(i) * (s - p.basis.centers(i)) * (s - p.basis.centers(i)));
            num_total += psi;
            weighted += psi * p.weights.row(i).transpose();
        }
        const Eigen::VectorXd f = s * weighted / num_total;
        const Eigen::VectorXd xdd =
            (p.alpha_v * p.beta_v * (p.goal - x) - p.alpha_v * p.tau * xd + f) / (p.tau * p.tau);
        x += dt * xd;
        xd += dt * xdd;
    }
    return out;
}

double rmse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return std::sqrt((a - b).rowwise().squaredNorm().mean());
}

Eigen::MatrixXd resample(const Trajectory& demo, int stride) {
    Eigen::MatrixXd out((demo.samples() - 1) / stride + 1, demo.dofs());
    for (int k = 0; k < out.rows(); ++k) out.row(k) = demo.position.row(k * stride);
    return out;
}

}  // namespace

TEST_CASE("canonical_step decays exponentially") {
    const CanonicalState s0{1.0, 4.6, 1.0};
    const CanonicalState s1 = canonical_step(s0, 1.0);
    CHECK(s1.s == doctest::Approx(0.0100518).epsilon(1e-6));

    // Euler oracle on ds/dt = -alpha_s s / tau.
    double euler = 1.0;
    for (int i = 0; i < 100000; ++i) euler -= 1e-5 * 4.6 * euler;
    CHECK(std::abs(euler - s1.s) / s1.s < 1e-3);

    CHECK(canonical_step({0.5, 4.6, 1.0}, 1e-12).s == doctest::Approx(0.5));

    const double dt = 0.037;
    const double twice = canonical_step(canonical_step(s0, dt), dt).s;
    CHECK(twice == doctest::Approx(canonical_step(s0, 2 * dt).s).epsilon(1e-14));

    CHECK_THROWS_AS(canonical_step(s0, 0.0), InvalidArgument);
    CHECK_THROWS_AS(canonical_step(s0, -1.0), InvalidArgument);
}

TEST_CASE("phase is monotone and stays in (0, 1]") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> step(1e-5, 0.2);
    CanonicalState s{1.0, 4.6, 2.0};
    for (int i = 0; i < 2000; ++i) {
        const CanonicalState next = canonical_step(s, step(rng));
        CHECK(next.s <= s.s);
        CHECK(next.s > 0.0);
        s = next;
    }
}

TEST_CASE("basis activations") {
    const BasisSet basis = make_basis(10);
    CHECK(basis.count() == 10);
    for (int i = 0; i + 1 < basis.count(); ++i) CHECK(basis.centers(i) > basis.centers(i + 1));
    CHECK((basis.widths.array() > 0).all());

    for (int k = 0; k < basis.count(); ++k) {
        const Eigen::VectorXd a = basis_activations(basis.centers(k), basis);
        Eigen::Index best = 0;
        a.maxCoeff(&best);
        CHECK(best == k);
    }
    for (double s : {1.0, 0.7, 0.3, 0.05, 0.01, 1e-4}) {
        const Eigen::VectorXd a = basis_activations(s, basis);
        CHECK(std::abs(a.sum() - 1.0) < 1e-12);
        CHECK((a.array() >= 0.0).all());
        CHECK((a.array() <= 1.0).all());
    }

    BasisSet two;
    two.centers = Eigen::Vector2d(1.0, 0.5);
    two.widths = Eigen::Vector2d(10.0, 10.0);
    const Eigen::VectorXd a = basis_activations(0.75, two);
    CHECK(a(0) == doctest::Approx(0.5));
    CHECK(a(1) == doctest::Approx(0.5));

    CHECK_THROWS_AS(basis_activations(0.5, BasisSet{}), InvalidArgument);
}

TEST_CASE("forcing term") {
    DmpParams p;
    p.basis = make_basis(8);
    p.goal = Eigen::Vector2d::Zero();
    p.weights = Eigen::MatrixXd::Zero(8, 2);
    CHECK(forcing_term(0.6, p).norm() == 0.0);

    p.weights = Eigen::MatrixXd::Constant(8, 2, 50.0);
    CHECK(forcing_term(1e-9, p).norm() < 1e-6);

    BasisSet single;
    single.centers = Eigen::VectorXd::Constant(1, 1.0);
    single.widths = Eigen::VectorXd::Constant(1, 5.0);
    CHECK(forcing_term(1.0, single, Eigen::MatrixXd::Constant(1, 1, 2.0))(0) == doctest::Approx(2.0));
}

TEST_CASE("differentiate_demo") {
    const double dt = 0.01;
    Eigen::MatrixXd constant = Eigen::MatrixXd::Constant(20, 2, 3.0);
    const Trajectory c = differentiate_demo(constant, dt);
    CHECK(c.velocity.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(c.acceleration.cwiseAbs().maxCoeff() < 1e-6);

    Eigen::MatrixXd linear(30, 1), quad(30, 1);
    for (int k = 0; k < 30; ++k) {
        linear(k, 0) = k * dt;
        quad(k, 0) = (k * dt) * (k * dt);
    }
    const Trajectory l = differentiate_demo(linear, dt);
    for (int k = 1; k < 29; ++k) CHECK(l.velocity(k, 0) == doctest::Approx(1.0).epsilon(1e-12));
    const Trajectory q = differentiate_demo(quad, dt);
    for (int k = 1; k < 29; ++k) CHECK(std::abs(q.acceleration(k, 0) - 2.0) < 1e-6);
    CHECK_NOTHROW(validate(q));

    CHECK_THROWS_AS(differentiate_demo(Eigen::MatrixXd::Zero(2, 1), dt), InvalidArgument);
}

TEST_CASE("dmp_step arithmetic and fixed point") {
    DmpParams p;
    p.tau = 1.0;
    p.basis = make_basis(5);
    p.weights = Eigen::MatrixXd::Zero(5, 1);
    p.goal = Eigen::VectorXd::Constant(1, 1.0);

    DmpState s = initial_state(p, Eigen::VectorXd::Zero(1));
    const DmpState next = dmp_step(s, p, 0.01);
    CHECK(next.v(0) == doctest::Approx(1.5625));
    CHECK(dmp_acceleration(s, p)(0) == doctest::Approx(156.25));

    DmpState at_goal = initial_state(p, p.goal);
    const DmpState still = dmp_step(at_goal, p, 0.01);
    CHECK(still.x(0) == p.goal(0));
    CHECK(still.v(0) == 0.0);

    // Explicit zero injections take the same arithmetic path as no injection.
    p.weights = Eigen::MatrixXd::Random(5, 1) * 10.0;
    Injection zeros;
    zeros.param_noise = Eigen::MatrixXd::Zero(5, 1);
    zeros.coupling = Eigen::VectorXd::Zero(1);
    zeros.task = Eigen::VectorXd::Zero(1);
    DmpState a = s, b = s;
    for (int i = 0; i < 500; ++i) {
        a = dmp_step(a, p, 0.002);
        b = dmp_step(b, p, 0.002, zeros);
        REQUIRE(a.x(0) == b.x(0));
        REQUIRE(a.v(0) == b.v(0));
    }

    CHECK_THROWS_AS(dmp_step(s, p, 0.0), InvalidArgument);
    DmpState bad = s;
    bad.x(0) = std::nan("");
    CHECK_THROWS_AS(dmp_step(bad, p, 0.01), InvalidArgument);
    Injection inf;
    inf.task = Eigen::VectorXd::Constant(1, INFINITY);
    CHECK_THROWS_AS(dmp_step(s, p, 0.01, inf), InvalidArgument);
}

TEST_CASE("rollout with zero forcing matches the critically damped spring") {
    DmpParams p;
    p.tau = 1.0;
    p.basis = make_basis(5);
    p.weights = Eigen::MatrixXd::Zero(5, 1);
    p.goal = Eigen::VectorXd::Constant(1, 1.0);
    const Trajectory traj = rollout(p, Eigen::VectorXd::Zero(1), p.goal, {1.0, 1e-3, 10});
    const double wn = std::sqrt(p.alpha_v * p.beta_v) / p.tau;
    for (int k = 0; k < traj.samples(); k += 50) {
        const double t = traj.time(k);
        const double closed = 1.0 - (1.0 + wn * t) * std::exp(-wn * t);
        CHECK(std::abs(traj.position(k, 0) - closed) < 1e-2);
    }
    CHECK(std::abs(traj.position(traj.samples() - 1, 0) - 1.0) < 1e-2);

    const Trajectory flat = rollout(p, p.goal, p.goal, {1.0, 1e-3, 10});
    CHECK((flat.position.array() == 1.0).all());
}

TEST_CASE("goal convergence for arbitrary weights") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        DmpParams p;
        p.tau = 0.5 + std::abs(u(rng));
        p.basis = make_basis(20);
        p.weights = Eigen::MatrixXd::NullaryExpr(20, 3, [&] { return 50.0 * u(rng); });
        const Eigen::Vector3d start(u(rng), u(rng), u(rng));
        const Eigen::Vector3d goal(u(rng), u(rng), u(rng));
        p.goal = goal;
        const Trajectory traj = rollout(p, start, goal, {2.0 * p.tau, 1e-3, 10});
        const Eigen::VectorXd end = traj.position.row(traj.samples() - 1).transpose();
        CHECK((end - goal).norm() <= 1e-2 * (start - goal).norm() + 1e-6);
    }
}

TEST_CASE("fit_from_demo reproduces a minimum-jerk demo") {
    const Trajectory demo =
        minimum_jerk_demo(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 1.0), 1.0, 1e-3);
    const DmpParams p = fit_from_demo(demo, {.n_basis = 40});
    const Eigen::MatrixXd replay = euler_replay(p, p.y0, 1.0, 1e-3);
    CHECK(rmse(replay, demo.position) < 1e-3);

    const Trajectory lib = rollout(p, p.y0, p.goal, {1.0, 1e-3, 10});
    CHECK(rmse(lib.position, replay) < 1e-9);
}

TEST_CASE("fit_from_demo reproduces the Archimedean spiral") {
    const Trajectory demo = archimedean_spiral_demo();
    const DmpParams p = fit_from_demo(demo, {.n_basis = 40});
    const Eigen::MatrixXd replay = euler_replay(p, p.y0, demo.duration(), 1e-3);
    const Eigen::MatrixXd sampled = resample(demo, 1);
    const Eigen::MatrixXd replay_at_demo = [&] {
        Eigen::MatrixXd r(sampled.rows(), 3);
        for (int k = 0; k < r.rows(); ++k) r.row(k) = replay.row(k * 10);
        return r;
    }();
    const double extent = (demo.position.colwise().maxCoeff() - demo.position.colwise().minCoeff()).maxCoeff();
    CHECK(rmse(replay_at_demo, sampled) <= 0.01 * extent);
    const Eigen::VectorXd end = replay.row(replay.rows() - 1).transpose();
    CHECK((end - demo.position.row(demo.samples() - 1).transpose()).norm() < 1e-3);
}

TEST_CASE("rollout endpoint converges at first order in dt on the spiral") {
    const Trajectory demo = archimedean_spiral_demo();
    const DmpParams p = fit_from_demo(demo, {.n_basis = 40});
    auto endpoint = [&](double dt) {
        const Trajectory t = rollout(p, p.y0, p.goal, {demo.duration(), dt, 10});
        return Eigen::VectorXd(t.position.row(t.samples() - 1).transpose());
    };
    const Eigen::VectorXd e1 = endpoint(4e-3), e2 = endpoint(2e-3), e3 = endpoint(1e-3);
    const double ratio = (e1 - e2).norm() / (e2 - e3).norm();
    CHECK(ratio >= 1.8);
}

TEST_CASE("fit_from_demo on an unforced spring relaxation yields zero weights") {
    // Analytic relaxation x(t) = g + (y0 - g)(1 + wn t) exp(-wn t) with its exact derivatives.
    const double duration = 1.0, dt = 1e-3, g = 0.4, y0 = -0.3;
    const double wn = std::sqrt(25.0 * 6.25) / duration;
    const int n = static_cast<int>(duration / dt) + 1;
    Trajectory demo;
    demo.time = Eigen::VectorXd::LinSpaced(n, 0.0, duration);
    demo.position.resize(n, 1);
    demo.velocity.resize(n, 1);
    demo.acceleration.resize(n, 1);
    for (int k = 0; k < n; ++k) {
        const double t = demo.time(k), e = std::exp(-wn * t);
        demo.position(k, 0) = g + (y0 - g) * (1.0 + wn * t) * e;
        demo.velocity(k, 0) = -(y0 - g) * wn * wn * t * e;
        demo.acceleration(k, 0) = (y0 - g) * wn * wn * (wn * t - 1.0) * e;
    }
    const DmpParams p = fit_from_demo(demo, {.n_basis = 40, .goal = Eigen::VectorXd::Constant(1, g)});
    CHECK(p.weights.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("fit_from_demo rejects degenerate demos") {
    Trajectory flat = differentiate_demo(Eigen::MatrixXd::Constant(50, 2, 0.1), 0.01);
    try {
        fit_from_demo(flat);
        FAIL("expected FitError");
    } catch (const FitError& e) {
        CHECK(e.spatial_extent() == 0.0);
    }
    CHECK_THROWS_AS(fit_from_demo(minimum_jerk_demo(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), 1.0, 0.01),
                                  {.n_basis = 1}),
                    InvalidArgument);
}
