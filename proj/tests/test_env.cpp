#include "rlfd/env.hpp"
#include "rlfd/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace rlfd;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

EnvConfig flat_round(double mu) {
    EnvConfig c;
    c.geometry.cross_section = CrossSection::Round;
    c.geometry.clearance = 0.0005;
    c.geometry.mu = mu;
    c.geometry.tilt = 0.0;
    return c;
}

PoseCommand command(const Eigen::Vector3d& v, const UnitQuaternion& q = {}) { return {v, q}; }

UnitQuaternion yaw(double angle) { return quat_exp(Eigen::Vector3d(0, 0, angle)); }

}  // namespace

TEST_CASE("reset with zero radius and cone returns the start exactly") {
    EnvConfig c = flat_round(0.3);
    c.start.center = Eigen::Vector3d(0.01, -0.02, 0.07);
    std::mt19937_64 rng(1);
    const EnvState s = env_reset(c, rng);
    CHECK(s.position == c.start.center);
    CHECK(s.setpoint == c.start.center);
    CHECK(s.orientation.w == 1.0);
    CHECK(s.elapsed == 0.0);
    CHECK(s.force.norm() == 0.0);
}

TEST_CASE("reset order statistics at 12 cm") {
    EnvConfig c = make_task("easy");
    std::mt19937_64 rng(7);
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(1e9), hi = Eigen::Vector3d::Constant(-1e9);
    for (int i = 0; i < 10000; ++i) {
        const Eigen::Vector3d d = env_reset(c, rng).position - c.start.center;
        lo = lo.cwiseMin(d);
        hi = hi.cwiseMax(d);
    }
    for (int a = 0; a < 3; ++a) {
        CHECK(lo(a) >= -0.12);
        CHECK(lo(a) <= -0.10);
        CHECK(hi(a) >= 0.10);
        CHECK(hi(a) <= 0.12);
    }
}

TEST_CASE("reset orientation stays inside the 40 degree cone") {
    EnvConfig c = make_task("peg");
    std::mt19937_64 rng(3);
    double worst = 0.0;
    for (int i = 0; i < 5000; ++i) worst = std::max(worst, geodesic_distance(env_reset(c, rng).orientation, {}));
    CHECK(worst <= 40.0 * kDeg + 1e-12);
    CHECK(worst > 35.0 * kDeg);
}

TEST_CASE("centered frictionless descent is unobstructed") {
    const EnvConfig c = flat_round(0.0);
    std::mt19937_64 rng(0);
    EnvState s = env_reset_at(c, Eigen::Vector3d::Zero(), {}, rng);
    const double vz = 0.02;
    for (int i = 1; i <= 5; ++i) {
        const StepResult r = env_step(s, command({0, 0, -vz}), c);
        CHECK(s.depth == doctest::Approx(i * vz * c.dt).epsilon(1e-12));
        CHECK(r.info.force_magnitude == 0.0);
        CHECK_FALSE(r.done);
    }
}

TEST_CASE("lateral offset of twice the clearance jams on the surface") {
    const EnvConfig c = flat_round(0.3);
    const SocketGeometry& g = c.geometry;
    std::mt19937_64 rng(0);
    const Eigen::Vector3d start(2.0 * g.clearance, 0.0, 0.0);
    EnvState s = env_reset_at(c, start, {}, rng);

    // Pure downward: all normal, no friction.
    const double vz = 0.01;
    StepResult r = env_step(s, command({0, 0, -vz}), c);
    const double pen = vz * c.dt;
    CHECK(s.depth == 0.0);
    CHECK(s.normal_force == doctest::Approx(g.stiffness * pen));
    CHECK(s.friction <= g.mu * s.normal_force + 1e-12);
    CHECK(r.info.force_magnitude == doctest::Approx(g.stiffness * pen));

    // Add a sideways push away from the hole: slip with the peg lagging by mu N / k.
    const double vx = 0.05;
    r = env_step(s, command({vx, 0, -vz}), c);
    const double pen2 = 2.0 * pen;
    const double n2 = g.stiffness * pen2;
    CHECK(s.normal_force == doctest::Approx(n2));
    CHECK(s.friction == doctest::Approx(g.mu * n2));
    CHECK(s.position.x() == doctest::Approx(start.x() + vx * c.dt - g.mu * pen2));
    CHECK(s.position.z() == 0.0);
    CHECK(s.depth == 0.0);
    CHECK(r.info.force_magnitude == doctest::Approx(std::hypot(n2, g.mu * n2)));
}

TEST_CASE("square peg misaligned by 10 degrees gains no depth until corrected") {
    EnvConfig c = flat_round(0.3);
    c.geometry.cross_section = CrossSection::Square;
    // Tolerance of 2 degrees: c / w = sqrt(2) sin(47 deg) - 1.
    c.geometry.clearance = c.geometry.half_width * (std::sqrt(2.0) * std::sin(47.0 * kDeg) - 1.0);
    CHECK(c.geometry.alignment_tolerance() == doctest::Approx(2.0 * kDeg).epsilon(1e-9));
    std::mt19937_64 rng(0);
    EnvState s = env_reset_at(c, Eigen::Vector3d::Zero(), yaw(10.0 * kDeg), rng);
    for (int i = 0; i < 20; ++i) {
        env_step(s, command({0, 0, -0.02}, yaw(10.0 * kDeg)), c);
        CHECK(s.depth == 0.0);
    }
    // 90 degrees away from the socket is aligned again for a square section.
    CHECK(aligned(yaw(90.5 * kDeg), c.geometry, 0.0));
    env_step(s, command({0, 0, -0.02}, yaw(1.0 * kDeg)), c);
    CHECK(s.depth > 0.0);
}

TEST_CASE("force statistics") {
    EpisodeRecord free;
    free.force_magnitudes.assign(50, 0.0);
    ForceStats f = measure_forces(free);
    CHECK(f.peak == 0.0);
    CHECK(f.mean == 0.0);
    CHECK(f.impulse == 0.0);

    EpisodeRecord constant;
    constant.dt = 0.01;
    constant.force_magnitudes.assign(100, 5.0);
    f = measure_forces(constant);
    CHECK(f.peak == 5.0);
    CHECK(f.mean == doctest::Approx(5.0));
    CHECK(f.impulse == doctest::Approx(5.0));

    CHECK_THROWS_AS(measure_forces(EpisodeRecord{}), InvalidArgument);
}

TEST_CASE("jamming peak force equals stiffness times the deepest attempted penetration") {
    const EnvConfig c = flat_round(0.3);
    std::mt19937_64 rng(0);
    EnvState s = env_reset_at(c, Eigen::Vector3d(2.0 * c.geometry.clearance, 0, 0), {}, rng);
    EpisodeRecord e;
    e.dt = c.dt;
    double max_pen = 0.0;
    for (int i = 0; i < 30; ++i) {
        const StepResult r = env_step(s, command({0, 0, -0.01}), c);
        e.force_magnitudes.push_back(r.info.force_magnitude);
        max_pen = std::max(max_pen, -s.setpoint.z());
    }
    CHECK(measure_forces(e).peak == doctest::Approx(c.geometry.stiffness * max_pen));
}

TEST_CASE("insertion time") {
    EpisodeRecord e;
    e.success = true;
    e.insertion_time = 510 * 0.01;
    CHECK(measure_insertion_time(e, 10.0) == doctest::Approx(5.1));
    e.success = false;
    CHECK(measure_insertion_time(e, 10.0) == 10.0);
    e.success = true;
    e.insertion_time = 0.0;
    CHECK(measure_insertion_time(e, 10.0) == 0.0);
}

TEST_CASE("success terminates the episode with the sparse reward") {
    EnvConfig c = flat_round(0.0);
    std::mt19937_64 rng(0);
    EnvState s = env_reset_at(c, Eigen::Vector3d::Zero(), {}, rng);
    StepResult r;
    int steps = 0;
    do {
        r = env_step(s, command({0, 0, -0.01}), c);
        ++steps;
    } while (!r.done);
    CHECK(r.info.success);
    CHECK(r.reward == 1.0);
    CHECK(s.depth >= c.geometry.depth - c.reward.kappa);
    CHECK(steps == 80);
}

TEST_CASE("timeout gives a done flag without success") {
    EnvConfig c = flat_round(0.3);
    c.episode_length = 0.2;
    std::mt19937_64 rng(0);
    EnvState s = env_reset_at(c, Eigen::Vector3d(0, 0, 0.05), {}, rng);
    StepResult r;
    for (int i = 0; i < 20; ++i) {
        CHECK_FALSE(r.done);
        r = env_step(s, command({0, 0, 0}), c);
    }
    CHECK(r.done);
    CHECK_FALSE(r.info.success);
    CHECK(r.reward == doctest::Approx(sparse_reward(insertion_distance_l2(s, c), c.reward.kappa)));
}

TEST_CASE("presets") {
    CHECK(make_task("peg").geometry.clearance == doctest::Approx(0.0004));
    CHECK(make_task("easy").geometry.clearance > make_task("hard").geometry.clearance);
    CHECK(make_task("gear").geometry.cross_section == CrossSection::Square);
    CHECK(make_task("rj45").geometry.cross_section == CrossSection::Keyed);
    CHECK(std::isfinite(make_task("rj45").break_force));
    CHECK_THROWS_AS(make_task("sprocket"), InvalidArgument);
    for (const char* p : {"easy", "hard", "peg", "gear", "rj45"}) CHECK_NOTHROW(validate(make_task(p)));
}

TEST_CASE("rj45 breaks when pressed past the threshold") {
    EnvConfig c = make_task("rj45");
    c.geometry.hole_jitter = 0.0;
    std::mt19937_64 rng(0);
    EnvState s = env_reset_at(c, Eigen::Vector3d(0.01, 0.0, 0.0), {}, rng);
    StepResult r;
    double peak = 0.0;
    while (!r.done) {
        r = env_step(s, command({0, 0, -0.05}), c);
        peak = std::max(peak, r.info.force_magnitude);
    }
    CHECK(peak > c.break_force);
    CHECK(r.info.broken);
    CHECK_FALSE(r.info.success);
}

TEST_CASE("non-finite actions are rejected") {
    const EnvConfig c = flat_round(0.3);
    std::mt19937_64 rng(0);
    EnvState s = env_reset_at(c, Eigen::Vector3d::Zero(), {}, rng);
    CHECK_THROWS_AS(env_step(s, command({std::nan(""), 0, 0}), c), InvalidArgument);
}

TEST_CASE("contact invariants over random action sequences") {
    for (const char* preset : {"easy", "hard", "peg", "gear", "rj45"}) {
        EnvConfig c = make_task(preset);
        c.break_force = std::numeric_limits<double>::infinity();
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int episode = 0; episode < 20; ++episode) {
            // Start right above the true hole so that many steps are in contact.
            EnvState s = env_reset_at(c, Eigen::Vector3d::Zero(), {}, rng);
            s.position = s.setpoint = Eigen::Vector3d(s.hole.x() + 0.002 * u(rng), s.hole.y() + 0.002 * u(rng), 0.001);
            const double bias = episode % 2 ? 0.5 : 2.0;
            for (int t = 0; t < 300; ++t) {
                const Eigen::Vector3d v(0.02 * u(rng), 0.02 * u(rng), 0.01 * (u(rng) - bias * 0.5));
                const UnitQuaternion q = quat_exp(Eigen::Vector3d(0.02 * u(rng), 0.02 * u(rng), 0.1 * u(rng)));
                const Eigen::Vector3d before = s.position;
                const double depth_before = s.depth;
                const StepResult r = env_step(s, command(v, q), c);
                CHECK(s.normal_force >= 0.0);
                CHECK(s.friction <= c.geometry.mu * s.normal_force + 1e-12);
                CHECK(s.force.allFinite());
                CHECK(s.depth >= 0.0);
                CHECK(s.depth <= c.geometry.depth);
                if (s.inside) CHECK((s.position.head<2>() - s.hole).norm() <= c.geometry.clearance + 1e-12);
                if (!aligned(s.orientation, c.geometry, s.socket_yaw)) CHECK(s.depth <= depth_before + 1e-15);
                CHECK((s.position - before).norm() <= (s.setpoint - before).norm() + 1e-9);
                if (r.done) break;
            }
        }
    }
}

TEST_CASE("same seed and actions reproduce the same trajectory") {
    const EnvConfig c = make_task("gear");
    auto run = [&](std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        EnvState s = env_reset(c, rng);
        std::mt19937_64 act(99);
        std::uniform_real_distribution<double> u(-0.02, 0.02);
        std::vector<double> trace;
        for (int t = 0; t < 200; ++t) {
            const StepResult r = env_step(s, command({u(act), u(act), u(act) - 0.02}), c);
            trace.push_back(r.reward);
            trace.push_back(r.info.force_magnitude);
            for (int i = 0; i < 3; ++i) trace.push_back(s.position(i));
        }
        return trace;
    };
    CHECK(run(5) == run(5));
    CHECK(run(5) != run(6));
}

TEST_CASE("policy features are bounded and finite") {
    const EnvConfig c = make_task("easy");
    std::mt19937_64 rng(2);
    const EnvState s = env_reset(c, rng);
    const Eigen::VectorXd f = policy_features(observe(s, c), c, 0.0);
    CHECK(f.size() == kPolicyFeatures);
    CHECK(f.allFinite());
    CHECK(f.cwiseAbs().maxCoeff() <= 10.0);
}
