#include "rlfd/residual.hpp"

#include "rlfd/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace rlfd {

Eigen::VectorXd observation_vector(const Observation& obs) {
    Eigen::VectorXd v(kObservationFeatures);
    v << obs.position, obs.velocity, obs.orientation.coeffs(), obs.angular_velocity, obs.force, obs.phase,
        obs.goal_offset;
    if (!v.allFinite()) throw InvalidArgument("observation: non-finite entry");
    return v;
}

Eigen::VectorXd linear_features(const Observation& obs) {
    Eigen::VectorXd f(kObservationFeatures + 1);
    f << observation_vector(obs), 1.0;
    return f;
}

bool ResidualAction::within(const ActionBounds& bounds, double slack) const {
    return (d_translation.array().abs() <= bounds.a_max + slack).all() && std::abs(alpha) <= bounds.alpha_max + slack;
}

ResidualAction action_from_vectors(const Eigen::Vector3d& translation, const Eigen::Vector3d& rotation_vector,
                                   const ActionBounds& bounds) {
    ResidualAction a;
    a.d_translation = translation.cwiseMax(-bounds.a_max).cwiseMin(bounds.a_max);
    const double n = rotation_vector.norm();
    if (n > kAxisDegeneracyFloor) {
        a.alpha = std::min(n, bounds.alpha_max);
        a.axis = rotation_vector / n;
    }
    return a;
}

std::string to_string(ExplorationLocus locus) {
    switch (locus) {
        case ExplorationLocus::None: return "none";
        case ExplorationLocus::CouplingTerm: return "coupling-term";
        case ExplorationLocus::ParameterSpace: return "parameter-space";
        case ExplorationLocus::TaskSpace: return "task-space";
    }
    return "none";
}

ExplorationLocus parse_locus(const std::string& name) {
    if (name == "none") return ExplorationLocus::None;
    if (name == "coupling" || name == "coupling-term") return ExplorationLocus::CouplingTerm;
    if (name == "parameter" || name == "parameter-space") return ExplorationLocus::ParameterSpace;
    if (name == "task" || name == "task-space") return ExplorationLocus::TaskSpace;
    throw InvalidArgument("unknown exploration locus: " + name);
}

PoseCommand compose_full_pose(const PoseCommand& base, const ResidualAction& residual) {
    PoseCommand out;
    out.velocity = base.velocity + residual.d_translation;
    out.orientation = apply_orientation_residual(base.orientation, residual.rotation());
    return out;
}

ResidualAction random_policy(std::mt19937_64& rng, const ActionBounds& bounds) {
    ResidualAction a;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 3; ++i) a.d_translation(i) = bounds.a_max * u(rng);
    a.alpha = bounds.alpha_max * u(rng);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Vector3d axis;
    do {
        axis = Eigen::Vector3d(n(rng), n(rng), n(rng));
    } while (axis.norm() < 1e-6);
    a.axis = axis.normalized();
    return a;
}

LinearPolicyState make_linear_policy(int n_features, int n_outputs, const ActionBounds& bounds, double forgetting,
                                     double initial_covariance) {
    if (n_features < 1 || (n_outputs != 3 && n_outputs != 6)) throw InvalidArgument("linear policy: bad shape");
    if (!(forgetting > 0.0 && forgetting <= 1.0)) throw InvalidArgument("linear policy: forgetting in (0, 1]");
    if (!(initial_covariance > 0.0)) throw InvalidArgument("linear policy: initial covariance must be positive");
    LinearPolicyState s;
    s.weights = Eigen::MatrixXd::Zero(n_outputs, n_features);
    s.covariance = initial_covariance * Eigen::MatrixXd::Identity(n_features, n_features);
    s.forgetting = forgetting;
    s.initial_covariance = initial_covariance;
    s.bounds = bounds;
    return s;
}

Eigen::VectorXd linear_policy_output(const LinearPolicyState& state, const Eigen::VectorXd& features) {
    if (features.size() != state.weights.cols()) throw InvalidArgument("linear policy: feature size mismatch");
    if (!features.allFinite()) throw InvalidArgument("linear policy: non-finite features");
    return state.weights * features;
}

ResidualAction linear_policy_act(const LinearPolicyState& state, const Observation& obs) {
    const Eigen::VectorXd y = linear_policy_output(state, linear_features(obs));
    const Eigen::Vector3d rot = y.size() == 6 ? Eigen::Vector3d(y.tail<3>()) : Eigen::Vector3d::Zero();
    return action_from_vectors(y.head<3>(), rot, state.bounds);
}

LinearPolicyState linear_policy_update(const LinearPolicyState& state, const Eigen::VectorXd& phi,
                                       const Eigen::VectorXd& target) {
    if (target.size() != state.weights.rows()) throw InvalidArgument("linear policy: target size mismatch");
    if (!target.allFinite()) throw InvalidArgument("linear policy: non-finite target");
    LinearPolicyState next = state;
    const Eigen::VectorXd error = target - linear_policy_output(state, phi);
    const Eigen::VectorXd p_phi = state.covariance * phi;
    const Eigen::VectorXd gain = p_phi / (state.forgetting + phi.dot(p_phi));
    next.weights += error * gain.transpose();
    next.covariance = (state.covariance - gain * p_phi.transpose()) / state.forgetting;
    next.covariance = 0.5 * (next.covariance + next.covariance.transpose());

    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(next.covariance, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > 1e12) {
        next.covariance = state.initial_covariance * Eigen::MatrixXd::Identity(phi.size(), phi.size());
        ++next.covariance_resets;
    }
    return next;
}

LinearPolicyState linear_policy_update(const LinearPolicyState& state, const Observation& obs,
                                       const Eigen::VectorXd& target) {
    return linear_policy_update(state, linear_features(obs), target);
}

Eigen::VectorXd goal_directed_target(const Observation& obs, double gain) {
    return gain * obs.goal_offset;
}

Injection inject_exploration(ExplorationLocus locus, const Eigen::VectorXd& eta, double phase,
                             const DmpParams& params) {
    if (!eta.allFinite()) throw InvalidArgument("inject_exploration: non-finite eta");
    Injection out;
    const int d = params.dofs();
    const int n = params.basis.count();
    switch (locus) {
        case ExplorationLocus::None:
            if (eta.size() > 0 && eta.cwiseAbs().maxCoeff() > 0.0)
                throw InvalidArgument("inject_exploration: locus none with nonzero eta");
            return out;
        case ExplorationLocus::TaskSpace:
            if (eta.size() != d) throw InvalidArgument("inject_exploration: task eta must have dofs entries");
            out.task = eta;
            return out;
        case ExplorationLocus::CouplingTerm:
            if (eta.size() != d) throw InvalidArgument("inject_exploration: coupling eta must have dofs entries");
            out.coupling = phase * eta;
            return out;
        case ExplorationLocus::ParameterSpace: {
            if (d == 0 || eta.size() % d != 0) throw InvalidArgument("inject_exploration: bad parameter eta size");
            const int groups = static_cast<int>(eta.size()) / d;
            if (groups < 1 || groups > n) throw InvalidArgument("inject_exploration: bad parameter group count");
            out.param_noise.resize(n, d);
            // Row-major grouping: eta = [group 0 dofs..., group 1 dofs..., ...].
            for (int i = 0; i < n; ++i) {
                const int g = static_cast<int>(static_cast<long>(i) * groups / n);
                out.param_noise.row(i) = eta.segment(g * d, d).transpose();
            }
            return out;
        }
    }
    return out;
}

double residual_schedule(double t, double episode_length, double activation_fraction) {
    if (!(activation_fraction >= 0.0 && activation_fraction <= 1.0))
        throw InvalidArgument("residual_schedule: activation fraction outside [0, 1]");
    const double start = activation_fraction * episode_length;
    // Relative slack so that e.g. 0.39 * 10 switches at t = 3.9.
    return t >= start - 1e-9 * std::max(1.0, std::abs(start)) ? 1.0 : 0.0;
}

namespace {

// Quintic coefficients on u in [0, 1] for one dof, derivatives given per unit u.
Eigen::Matrix<double, 6, 1> quintic(double p0, double v0, double a0, double p1, double v1, double a1) {
    Eigen::Matrix<double, 6, 1> c;
    c(0) = p0;
    c(1) = v0;
    c(2) = a0 / 2.0;
    const double r0 = p1 - p0 - v0 - a0 / 2.0;
    const double r1 = v1 - v0 - a0;
    const double r2 = a1 - a0;
    c(3) = 10.0 * r0 - 4.0 * r1 + r2 / 2.0;
    c(4) = -15.0 * r0 + 7.0 * r1 - r2;
    c(5) = 6.0 * r0 - 3.0 * r1 + r2 / 2.0;
    return c;
}

}  // namespace

std::vector<SubstepCommand> hold_and_interpolate(const std::vector<Knot>& knots, double knot_dt, int K) {
    if (K < 1) throw InvalidArgument("hold_and_interpolate: K must be at least 1");
    if (!(knot_dt > 0.0)) throw InvalidArgument("hold_and_interpolate: knot_dt must be positive");
    std::vector<SubstepCommand> out;
    if (knots.empty()) return out;
    const Eigen::Index d = knots.front().position.size();
    auto deriv = [d](const Eigen::VectorXd& v) { return v.size() == 0 ? Eigen::VectorXd::Zero(d).eval() : v; };
    out.reserve((knots.size() - 1) * K + 1);
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
        const Knot& a = knots[k];
        const Knot& b = knots[k + 1];
        const Eigen::VectorXd va = deriv(a.velocity) * knot_dt, vb = deriv(b.velocity) * knot_dt;
        const Eigen::VectorXd aa = deriv(a.acceleration) * knot_dt * knot_dt;
        const Eigen::VectorXd ab = deriv(b.acceleration) * knot_dt * knot_dt;
        std::vector<Eigen::Matrix<double, 6, 1>> coeffs(d);
        for (Eigen::Index i = 0; i < d; ++i)
            coeffs[i] = quintic(a.position(i), va(i), aa(i), b.position(i), vb(i), ab(i));
        for (int j = 0; j < K; ++j) {
            const double u = static_cast<double>(j) / K;
            SubstepCommand cmd;
            cmd.position.resize(d);
            for (Eigen::Index i = 0; i < d; ++i) {
                const auto& c = coeffs[i];
                cmd.position(i) = c(0) + u * (c(1) + u * (c(2) + u * (c(3) + u * (c(4) + u * c(5)))));
            }
            if (j == 0) cmd.position = a.position;
            cmd.residual = a.residual;
            out.push_back(std::move(cmd));
        }
    }
    out.push_back({knots.back().position, knots.back().residual});
    return out;
}

Trajectory perturbed_rollout(const DmpParams& params, ExplorationLocus locus, double sigma, std::mt19937_64& rng,
                             const RolloutOptions& options, int parameter_groups) {
    std::normal_distribution<double> n(0.0, 1.0);
    auto draw = [&](Eigen::Index size) {
        Eigen::VectorXd v(size);
        for (Eigen::Index i = 0; i < size; ++i) v(i) = sigma * n(rng);
        return v;
    };
    const int d = params.dofs();
    const int groups = parameter_groups > 0 ? parameter_groups : params.basis.count();
    const Eigen::VectorXd episodic = locus == ExplorationLocus::ParameterSpace ? draw(groups * d) : Eigen::VectorXd();
    InjectionHook hook;
    if (locus != ExplorationLocus::None) {
        hook = [&, locus](double, const DmpState& state) {
            const Eigen::VectorXd eta = locus == ExplorationLocus::ParameterSpace ? episodic : draw(d);
            return inject_exploration(locus, eta, state.phase.s, params);
        };
    }
    return rollout(params, params.y0, params.goal, options, hook);
}

double max_step_jerk(const Trajectory& trajectory) {
    const int n = trajectory.samples();
    if (n < 4) return 0.0;
    const double dt = trajectory.dt();
    const Eigen::MatrixXd& x = trajectory.position;
    double best = 0.0;
    for (int k = 0; k + 3 < n; ++k) {
        const Eigen::VectorXd j = (x.row(k + 3) - 3.0 * x.row(k + 2) + 3.0 * x.row(k + 1) - x.row(k)).transpose();
        best = std::max(best, j.norm() / (dt * dt * dt));
    }
    return best;
}

}  // namespace rlfd
