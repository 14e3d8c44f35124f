#include "rlfd/dmp.hpp"

#include "rlfd/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <string>

namespace rlfd {

namespace {

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

CanonicalState canonical_step(const CanonicalState& state, double dt) {
    if (!(dt > 0.0)) throw InvalidArgument("canonical_step: dt must be positive");
    CanonicalState next = state;
    next.s = state.s * std::exp(-state.alpha_s * dt / state.tau);
    return next;
}

BasisSet make_basis(int n_basis, double alpha_s, double overlap) {
    if (n_basis < 2) throw InvalidArgument("make_basis: need at least two basis functions");
    BasisSet basis;
    basis.centers.resize(n_basis);
    basis.widths.resize(n_basis);
    for (int i = 0; i < n_basis; ++i) {
        const double t = static_cast<double>(i) / (n_basis - 1);
        basis.centers(i) = std::exp(-alpha_s * t);
    }
    for (int i = 0; i < n_basis - 1; ++i) {
        const double d = basis.centers(i + 1) - basis.centers(i);
        basis.widths(i) = overlap / (d * d);
    }
    basis.widths(n_basis - 1) = basis.widths(n_basis - 2);
    return basis;
}

Eigen::VectorXd basis_activations(double s, const BasisSet& basis) {
    if (basis.count() == 0) throw InvalidArgument("basis_activations: empty basis");
    const Eigen::ArrayXd d = s - basis.centers.array();
    Eigen::ArrayXd psi = (-basis.widths.array() * d * d).exp();
    double total = psi.sum();
    if (!(total > 1e-300)) {
        // Far outside every kernel: fall back to the nearest center.
        psi.setZero();
        Eigen::Index nearest = 0;
        d.abs().minCoeff(&nearest);
        psi(nearest) = 1.0;
        total = 1.0;
    }
    return psi / total;
}

Eigen::VectorXd forcing_term(double s, const BasisSet& basis, const Eigen::MatrixXd& weights) {
    const Eigen::VectorXd psi = basis_activations(s, basis);
    return s * (weights.transpose() * psi);
}

Eigen::VectorXd forcing_term(double s, const DmpParams& params) {
    return forcing_term(s, params.basis, params.weights);
}

DmpState initial_state(const DmpParams& params, const Eigen::VectorXd& start) {
    DmpState state;
    state.x = start;
    state.v = Eigen::VectorXd::Zero(start.size());
    state.phase = CanonicalState{1.0, params.alpha_s, params.tau};
    return state;
}

Eigen::VectorXd dmp_acceleration(const DmpState& state, const DmpParams& params, const Injection& injection) {
    const double s = state.phase.s;
    const double tau = params.tau;
    Eigen::VectorXd bracket =
        params.alpha_v * (params.beta_v * (params.goal - state.x) - tau * state.v);
    if (injection.param_noise.size() != 0) {
        bracket += forcing_term(s, params.basis, params.weights + injection.param_noise);
    } else {
        bracket += forcing_term(s, params);
    }
    if (injection.coupling.size() != 0) bracket += injection.coupling;
    Eigen::VectorXd acc = bracket / (tau * tau);
    if (injection.task.size() != 0) acc += injection.task;
    return acc;
}

DmpState dmp_step(const DmpState& state, const DmpParams& params, double dt, const Injection& injection) {
    if (!(dt > 0.0)) throw InvalidArgument("dmp_step: dt must be positive");
    if (!all_finite(state.x) || !all_finite(state.v) || !std::isfinite(state.phase.s))
        throw InvalidArgument("dmp_step: non-finite state");
    if (!all_finite(injection.param_noise) || !all_finite(injection.coupling) || !all_finite(injection.task))
        throw InvalidArgument("dmp_step: non-finite injection");

    const Eigen::VectorXd acc = dmp_acceleration(state, params, injection);
    DmpState next;
    next.x = state.x + dt * state.v;
    next.v = state.v + dt * acc;
    next.phase = canonical_step(state.phase, dt);
    return next;
}

double Trajectory::dt() const {
    if (samples() < 2) return 0.0;
    return (time(samples() - 1) - time(0)) / (samples() - 1);
}

void validate(const Trajectory& trajectory) {
    const int n = trajectory.samples();
    if (n < 3) throw InvalidArgument("trajectory: need at least 3 samples");
    if (trajectory.position.rows() != n || trajectory.velocity.rows() != n || trajectory.acceleration.rows() != n)
        throw InvalidArgument("trajectory: row count mismatch");
    const double dt = trajectory.dt();
    if (!(dt > 0.0)) throw InvalidArgument("trajectory: non-increasing time stamps");
    for (int i = 1; i < n; ++i) {
        if (std::abs(trajectory.time(i) - trajectory.time(i - 1) - dt) > 1e-9)
            throw InvalidArgument("trajectory: non-uniform time spacing at sample " + std::to_string(i));
    }
}

Trajectory differentiate_demo(const Eigen::MatrixXd& positions, double dt, double t0) {
    const Eigen::Index n = positions.rows();
    if (n < 3) throw InvalidArgument("differentiate_demo: need at least 3 samples");
    if (!(dt > 0.0)) throw InvalidArgument("differentiate_demo: dt must be positive");

    Trajectory out;
    out.time = Eigen::VectorXd::LinSpaced(n, t0, t0 + dt * static_cast<double>(n - 1));
    out.position = positions;
    out.velocity.resize(n, positions.cols());
    out.acceleration.resize(n, positions.cols());

    const double inv2 = 1.0 / (2.0 * dt);
    const double invsq = 1.0 / (dt * dt);
    for (Eigen::Index i = 1; i + 1 < n; ++i) {
        out.velocity.row(i) = (positions.row(i + 1) - positions.row(i - 1)) * inv2;
        out.acceleration.row(i) = (positions.row(i + 1) - 2.0 * positions.row(i) + positions.row(i - 1)) * invsq;
    }
    out.velocity.row(0) = (-3.0 * positions.row(0) + 4.0 * positions.row(1) - positions.row(2)) * inv2;
    out.velocity.row(n - 1) =
        (3.0 * positions.row(n - 1) - 4.0 * positions.row(n - 2) + positions.row(n - 3)) * inv2;
    if (n >= 4) {
        out.acceleration.row(0) = (2.0 * positions.row(0) - 5.0 * positions.row(1) + 4.0 * positions.row(2) -
                                   positions.row(3)) * invsq;
        out.acceleration.row(n - 1) = (2.0 * positions.row(n - 1) - 5.0 * positions.row(n - 2) +
                                       4.0 * positions.row(n - 3) - positions.row(n - 4)) * invsq;
    } else {
        out.acceleration.row(0) = out.acceleration.row(1);
        out.acceleration.row(n - 1) = out.acceleration.row(1);
    }
    return out;
}

DmpParams fit_from_demo(const Trajectory& demo, const FitOptions& options) {
    validate(demo);
    if (options.n_basis < 2) throw InvalidArgument("fit_from_demo: need at least two basis functions");

    const int n = demo.samples();
    const int dofs = demo.dofs();
    const double extent = (demo.position.colwise().maxCoeff() - demo.position.colwise().minCoeff()).maxCoeff();

    DmpParams params;
    params.alpha_v = options.gains.alpha_v;
    params.beta_v = options.gains.beta_v;
    params.alpha_s = options.gains.alpha_s;
    params.tau = demo.duration();
    params.y0 = demo.position.row(0).transpose();
    params.goal = options.goal ? *options.goal : Eigen::VectorXd(demo.position.row(n - 1).transpose());
    params.basis = make_basis(options.n_basis, params.alpha_s, options.overlap);
    if (params.goal.size() != dofs) throw InvalidArgument("fit_from_demo: goal dimension mismatch");

    if (!(extent > 1e-12)) {
        throw FitError("fit_from_demo: demonstration has zero spatial extent", std::numeric_limits<double>::infinity(),
                       extent);
    }

    const double tau = params.tau;
    Eigen::MatrixXd target(n, dofs);
    for (int k = 0; k < n; ++k) {
        const Eigen::VectorXd x = demo.position.row(k).transpose();
        const Eigen::VectorXd xd = demo.velocity.row(k).transpose();
        const Eigen::VectorXd xdd = demo.acceleration.row(k).transpose();
        target.row(k) = (tau * tau * xdd - params.alpha_v * (params.beta_v * (params.goal - x) - tau * xd)).transpose();
    }
    params.weights =
        regress_forcing_weights(demo.time, target, params.basis, params.alpha_s, tau, options.ridge, extent);
    return params;
}

Eigen::MatrixXd regress_forcing_weights(const Eigen::VectorXd& time, const Eigen::MatrixXd& targets,
                                        const BasisSet& basis, double alpha_s, double tau, double ridge,
                                        double spatial_extent) {
    const Eigen::Index n = time.size();
    Eigen::MatrixXd design(n, basis.count());
    for (Eigen::Index k = 0; k < n; ++k) {
        const double s = std::exp(-alpha_s * (time(k) - time(0)) / tau);
        design.row(k) = s * basis_activations(s, basis).transpose();
    }

    Eigen::MatrixXd normal = design.transpose() * design;
    normal.diagonal().array() += ridge;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    const double condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!std::isfinite(condition) || condition > 1e15) {
        throw FitError("forcing regression is numerically singular", condition, spatial_extent);
    }

    Eigen::MatrixXd weights = normal.ldlt().solve(design.transpose() * targets);
    if (!weights.allFinite()) throw FitError("forcing regression produced non-finite weights", condition, spatial_extent);
    return weights;
}

Trajectory rollout(const DmpParams& params, const Eigen::VectorXd& start, const Eigen::VectorXd& goal,
                   const RolloutOptions& options, const InjectionHook& hook) {
    if (!(options.duration > 0.0)) throw InvalidArgument("rollout: duration must be positive");
    if (!(options.dt > 0.0)) throw InvalidArgument("rollout: dt must be positive");
    if (options.hook_period < 1) throw InvalidArgument("rollout: hook period must be >= 1");

    DmpParams p = params;
    p.goal = goal;
    const int steps = static_cast<int>(std::llround(options.duration / options.dt));
    const int dofs = static_cast<int>(goal.size());

    Trajectory out;
    out.time.resize(steps + 1);
    out.position.resize(steps + 1, dofs);
    out.velocity.resize(steps + 1, dofs);
    out.acceleration.resize(steps + 1, dofs);

    DmpState state = initial_state(p, start);
    Injection held;
    for (int k = 0; k <= steps; ++k) {
        const double t = k * options.dt;
        if (hook && k % options.hook_period == 0) held = hook(t, state);
        out.time(k) = t;
        out.position.row(k) = state.x.transpose();
        out.velocity.row(k) = state.v.transpose();
        out.acceleration.row(k) = dmp_acceleration(state, p, held).transpose();
        if (k < steps) state = dmp_step(state, p, options.dt, held);
    }
    return out;
}

}  // namespace rlfd
