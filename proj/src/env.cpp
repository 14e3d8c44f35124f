#include "rlfd/env.hpp"

#include "rlfd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rlfd {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double wrap_angle(double a) {
    return std::remainder(a, 2.0 * std::numbers::pi);
}

double fold_yaw(double yaw, CrossSection section) {
    if (section == CrossSection::Square) return std::remainder(yaw, std::numbers::pi / 2.0);
    return wrap_angle(yaw);
}

Eigen::Vector2d lateral(const Eigen::Vector3d& p) { return p.head<2>(); }

// Closest point to `c` on the segment a-b.
Eigen::Vector2d closest_on_segment(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    const Eigen::Vector2d d = b - a;
    const double len2 = d.squaredNorm();
    if (len2 <= 0.0) return a;
    const double u = std::clamp((c - a).dot(d) / len2, 0.0, 1.0);
    return a + u * d;
}

double mouth_height(const EnvState& s, const SocketGeometry& g) { return surface_height(g, s.hole.y()); }

void draw_socket(EnvState& s, const SocketGeometry& g, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const double jx = unit(rng), jy = unit(rng), jyaw = unit(rng);
    s.hole = g.hole_offset + g.hole_jitter * Eigen::Vector2d(jx, jy);
    s.socket_yaw = g.socket_yaw + g.yaw_jitter * jyaw;
}

struct Contact {
    Eigen::Vector3d position;
    Eigen::Vector3d force = Eigen::Vector3d::Zero();
    double normal = 0.0;
    double friction = 0.0;
    double penetration = 0.0;
};

// Peg inside the hole: lateral clamp to the clearance, wall friction opposing axial motion.
Contact inside_projection(const EnvState& s, const Eigen::Vector3d& target, const SocketGeometry& g, bool is_aligned) {
    Contact c;
    const double k = g.stiffness;
    const Eigen::Vector2d r = lateral(target) - s.hole;
    const double rn = r.norm();
    const double excess = std::max(0.0, rn - g.clearance);
    Eigen::Vector2d xy = lateral(target);
    Eigen::Vector2d wall_dir = Eigen::Vector2d::Zero();
    if (excess > 0.0) {
        wall_dir = r / rn;
        xy = s.hole + wall_dir * g.clearance;
    }
    const double wall = k * excess;
    const double zt = target.z();
    const double z0 = s.position.z();
    const double floor = mouth_height(s, g) - g.depth;
    double z = z0;
    double friction = 0.0;
    double axial_normal = 0.0;
    const double pull = k * std::abs(z0 - zt);
    if (zt < z0) {
        if (pull > g.mu * wall) {
            z = zt + g.mu * excess;
            friction = g.mu * wall;
        } else {
            friction = pull;
        }
        if (!is_aligned && z < z0) {
            z = z0;
            friction = std::min(pull, g.mu * wall);
            axial_normal = pull - friction;
        }
        if (z < floor) {
            z = floor;
            friction = 0.0;
            axial_normal = k * (floor - zt);
        }
        c.force.z() = friction + axial_normal;
        c.penetration = std::max(0.0, z - zt);
    } else if (zt > z0) {
        if (pull > g.mu * wall) {
            z = zt - g.mu * excess;
            friction = g.mu * wall;
        } else {
            friction = pull;
        }
        c.force.z() = -friction;
    }
    c.force.head<2>() = -wall * wall_dir;
    c.position = Eigen::Vector3d(xy.x(), xy.y(), z);
    c.normal = wall + axial_normal;
    c.friction = friction;
    c.penetration = std::max(c.penetration, excess);
    return c;
}

// Peg outside the hole: free above the tilted surface, stick/slip on it.
Contact surface_projection(const EnvState& s, const Eigen::Vector3d& target, const SocketGeometry& g) {
    Contact c;
    const double pen = surface_height(g, target.y()) - target.z();
    if (pen <= 0.0) {
        c.position = target;
        return c;
    }
    const double k = g.stiffness;
    const double n = k * pen;
    // Touch-down point: where the path from the peg to the target meets the surface.
    Eigen::Vector2d start = lateral(s.position);
    const double above = s.position.z() - surface_height(g, s.position.y());
    if (above > 0.0) {
        const double u = above / (above + pen);
        start = lateral(s.position) + u * (lateral(target) - lateral(s.position));
    }
    const Eigen::Vector2d d = lateral(target) - start;
    const double dn = d.norm();
    Eigen::Vector2d xy = start;
    double friction = k * dn;
    if (k * dn > g.mu * n) {
        xy = lateral(target) - d / dn * (g.mu * n / k);
        friction = g.mu * n;
    }
    c.position = Eigen::Vector3d(xy.x(), xy.y(), surface_height(g, xy.y()));
    if (dn > 0.0) c.force.head<2>() = -friction * d / dn;
    c.force.z() = n;
    c.normal = n;
    c.friction = friction;
    c.penetration = pen;
    return c;
}

}  // namespace

std::string to_string(CrossSection section) {
    switch (section) {
        case CrossSection::Round: return "round";
        case CrossSection::Square: return "square";
        case CrossSection::Keyed: return "keyed";
    }
    return "?";
}

double SocketGeometry::alignment_tolerance() const {
    if (cross_section == CrossSection::Round) return std::numeric_limits<double>::infinity();
    const double s = std::min(1.0, (1.0 + clearance / half_width) / std::numbers::sqrt2);
    return std::asin(s) - std::numbers::pi / 4.0;
}

void validate(const EnvConfig& c) {
    const SocketGeometry& g = c.geometry;
    if (!(g.clearance > 0.0)) throw InvalidArgument("env: clearance must be positive");
    if (!(g.depth > 0.0)) throw InvalidArgument("env: depth must be positive");
    if (!(g.half_width > 0.0)) throw InvalidArgument("env: half width must be positive");
    if (!(g.mu >= 0.0)) throw InvalidArgument("env: friction coefficient must be non-negative");
    if (!(g.stiffness > 0.0)) throw InvalidArgument("env: stiffness must be positive");
    if (!(g.tilt >= 0.0 && g.tilt <= 5.0 * kDeg + 1e-12)) throw InvalidArgument("env: tilt must lie in [0, 5] degrees");
    if (!(g.hole_jitter >= 0.0 && g.yaw_jitter >= 0.0)) throw InvalidArgument("env: jitter must be non-negative");
    if (!(c.dt > 0.0)) throw InvalidArgument("env: dt must be positive");
    if (!(c.episode_length > 0.0)) throw InvalidArgument("env: episode length must be positive");
    if (c.decision_period < 1) throw InvalidArgument("env: decision period must be at least 1");
    if (!(c.start.radius >= 0.0 && c.start.max_orientation >= 0.0 && c.start.max_orientation <= std::numbers::pi))
        throw InvalidArgument("env: bad start distribution");
    if (!c.start.center.allFinite()) throw InvalidArgument("env: non-finite start center");
    if (!(c.break_force > 0.0)) throw InvalidArgument("env: break force must be positive");
}

double surface_height(const SocketGeometry& g, double y) { return std::tan(g.tilt) * y; }

Misalignment misalignment(const UnitQuaternion& q, const SocketGeometry& g, double socket_yaw) {
    // Swing-twist split about z.
    const double twist_norm = std::hypot(q.w, q.xyz.z());
    Misalignment m;
    m.tilt = 2.0 * std::atan2(q.xyz.head<2>().norm(), twist_norm);
    const double yaw = twist_norm > 1e-12 ? 2.0 * std::atan2(q.xyz.z(), q.w) : 0.0;
    m.yaw = fold_yaw(yaw - socket_yaw, g.cross_section);
    return m;
}

bool aligned(const UnitQuaternion& q, const SocketGeometry& g, double socket_yaw) {
    if (g.cross_section == CrossSection::Round) return true;
    const Misalignment m = misalignment(q, g, socket_yaw);
    const double tol = g.alignment_tolerance();
    return std::abs(m.yaw) <= tol;
}

EnvState env_reset_at(const EnvConfig& config, const Eigen::Vector3d& start, const UnitQuaternion& orientation,
                      std::mt19937_64& rng) {
    validate(config);
    if (!start.allFinite()) throw InvalidArgument("env_reset_at: non-finite start");
    EnvState s;
    draw_socket(s, config.geometry, rng);
    s.position = s.setpoint = start;
    s.orientation = orientation;
    return s;
}

EnvState env_reset(const EnvConfig& config, std::mt19937_64& rng) {
    validate(config);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Eigen::Vector3d p = config.start.center;
    for (int i = 0; i < 3; ++i) p(i) += config.start.radius * unit(rng);
    UnitQuaternion q;
    if (config.start.max_orientation > 0.0) {
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::Vector3d axis;
        do {
            axis = Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
        } while (axis.norm() < 1e-9);
        const double angle = config.start.max_orientation * 0.5 * (unit(rng) + 1.0);
        q = quat_exp(axis.normalized() * angle);
    }
    return env_reset_at(config, p, q, rng);
}

Observation observe(const EnvState& s, const EnvConfig& config) {
    Observation o;
    o.position = s.position;
    o.velocity = s.velocity;
    o.orientation = s.orientation;
    o.angular_velocity = s.angular_velocity;
    o.force = s.force;
    o.phase = std::max(0.0, 1.0 - s.elapsed / config.episode_length);
    o.goal_offset = Eigen::Vector3d(0.0, 0.0, -config.geometry.depth) - s.position;
    return o;
}

namespace {

Eigen::Vector3d bottom(const EnvState& s, const EnvConfig& c) {
    return Eigen::Vector3d(s.hole.x(), s.hole.y(), mouth_height(s, c.geometry) - c.geometry.depth);
}

}  // namespace

double insertion_distance_l2(const EnvState& s, const EnvConfig& c) { return (s.position - bottom(s, c)).norm(); }

double insertion_distance_l1(const EnvState& s, const EnvConfig& c) {
    return (s.position - bottom(s, c)).lpNorm<1>();
}

StepResult env_step(EnvState& s, const PoseCommand& action, const EnvConfig& config) {
    if (!action.velocity.allFinite() || !action.orientation.coeffs().allFinite())
        throw InvalidArgument("env_step: non-finite action");
    const SocketGeometry& g = config.geometry;
    const double dt = config.dt;
    const Eigen::Vector3d old = s.position;
    const UnitQuaternion old_q = s.orientation;

    s.setpoint += action.velocity * dt;
    s.orientation = UnitQuaternion::from_raw(action.orientation.w, action.orientation.xyz);
    const bool is_aligned = aligned(s.orientation, g, s.socket_yaw);
    const double mouth = mouth_height(s, g);

    Contact c;
    if (!s.inside) {
        c = surface_projection(s, s.setpoint, g);
        // Drop into the hole when the lateral path passes within the clearance of its axis.
        const Eigen::Vector2d near = closest_on_segment(lateral(old), lateral(c.position), s.hole);
        const bool reaches = s.setpoint.z() < mouth;
        if (reaches && is_aligned && (near - s.hole).norm() <= g.clearance) {
            s.inside = true;
            s.position = Eigen::Vector3d(near.x(), near.y(), std::min(old.z(), mouth));
            c = inside_projection(s, s.setpoint, g, is_aligned);
        }
    } else {
        c = inside_projection(s, s.setpoint, g, is_aligned);
        if (c.position.z() > mouth) {
            s.inside = false;
            s.position = Eigen::Vector3d(c.position.x(), c.position.y(), mouth);
            c = surface_projection(s, s.setpoint, g);
        }
    }

    s.position = c.position;
    s.velocity = (s.position - old) / dt;
    s.angular_velocity = quat_error_to_angular_velocity(s.orientation, old_q, dt);
    s.force = c.force;
    s.normal_force = c.normal;
    s.friction = c.friction;
    s.penetration = c.penetration;
    s.depth = s.inside ? std::clamp(mouth - s.position.z(), 0.0, g.depth) : 0.0;
    s.elapsed += dt;
    ++s.steps;

    StepResult r;
    const double fmag = s.force.norm();
    if (fmag > config.break_force) s.broken = true;
    if (!s.broken && s.inside && s.depth >= g.depth - config.reward.kappa) s.success = true;
    const int horizon = static_cast<int>(std::lround(config.episode_length / dt));
    r.done = s.success || s.broken || s.steps >= horizon;
    r.info = {s.success, s.broken, s.penetration, fmag};
    r.observation = observe(s, config);

    const double l2 = insertion_distance_l2(s, config);
    if (config.reward.kind == RewardKind::Dense) {
        r.reward = dense_reward_guarded(insertion_distance_l1(s, config), l2, config.reward.dense, config.reward.floor);
    } else if (config.reward.kind == RewardKind::ExpL1) {
        if (r.done) r.reward = exp_l1_reward(insertion_distance_l1(s, config), config.reward.l1_scale);
    } else if (r.done) {
        r.reward = s.success ? 1.0 : (s.broken ? 0.0 : sparse_reward(l2, config.reward.kappa));
    }
    return r;
}

ForceStats measure_forces(const EpisodeRecord& e) {
    if (e.force_magnitudes.empty()) throw InvalidArgument("measure_forces: empty episode");
    ForceStats f;
    double sum = 0.0;
    for (double v : e.force_magnitudes) {
        f.peak = std::max(f.peak, v);
        sum += v;
    }
    f.mean = sum / static_cast<double>(e.force_magnitudes.size());
    f.impulse = sum * e.dt;
    return f;
}

double measure_insertion_time(const EpisodeRecord& e, double episode_length) {
    return e.success ? e.insertion_time : episode_length;
}

EnvConfig make_task(const std::string& preset) {
    EnvConfig c;
    c.name = preset;
    SocketGeometry& g = c.geometry;
    if (preset == "easy" || preset == "hard") {
        g.cross_section = CrossSection::Round;
        g.clearance = preset == "easy" ? 0.0015 : 0.0005;
        g.hole_offset = Eigen::Vector2d(0.0015, 0.0010);
        g.hole_jitter = 0.001;
        c.start.center = Eigen::Vector3d(0.0, 0.0, 0.16);
        c.start.radius = 0.12;
        return c;
    }
    if (preset == "peg" || preset == "gear" || preset == "rj45") {
        g.clearance = 0.0004;
        g.tilt = 1.0 * kDeg;
        g.hole_offset = Eigen::Vector2d(0.0006, 0.0004);
        g.hole_jitter = 0.0005;
        c.start.center = Eigen::Vector3d(-0.05, 0.0, 0.06);
        c.start.radius = 0.03;
        c.start.max_orientation = 40.0 * kDeg;
        if (preset == "gear") {
            g.cross_section = CrossSection::Square;
            g.socket_yaw = 4.0 * kDeg;
            g.yaw_jitter = 2.0 * kDeg;
        } else if (preset == "rj45") {
            g.cross_section = CrossSection::Keyed;
            g.socket_yaw = 4.0 * kDeg;
            g.yaw_jitter = 2.0 * kDeg;
            c.break_force = 2.0 * g.stiffness * g.depth;
        }
        return c;
    }
    throw InvalidArgument("make_task: unknown preset '" + preset + "'");
}

Eigen::VectorXd policy_features(const Observation& obs, const EnvConfig& config, double time_fraction) {
    const double fscale = config.geometry.stiffness * config.geometry.depth;
    Eigen::VectorXd f(kPolicyFeatures);
    f << obs.position / 0.05, obs.velocity / 0.05, obs.orientation.coeffs(), obs.angular_velocity, obs.force / fscale,
        obs.phase, obs.goal_offset / 0.05, time_fraction;
    if (!f.allFinite()) throw InvalidArgument("policy_features: non-finite observation");
    return f.cwiseMax(-10.0).cwiseMin(10.0);
}

}  // namespace rlfd
