#include "rlfd/harness.hpp"

#include "rlfd/demos.hpp"
#include "rlfd/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

namespace rlfd {

namespace {

enum StreamTag : std::uint64_t { kInit = 1, kTrainEnv, kTrainAction, kUpdate, kEvalEnv, kEvalAction, kSpiral };

std::uint64_t hash_label(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::mt19937_64 stream(std::uint64_t seed, StreamTag tag, const std::string& label) {
    const std::uint64_t h = hash_label(label);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(h),
                      static_cast<std::uint32_t>(h >> 32)};
    return std::mt19937_64(seq);
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw InvalidArgument("config: '" + key + "' expects a number, got '" + v + "'");
    }
}

int to_int(const std::string& key, const std::string& v) {
    const double d = to_double(key, v);
    if (d != std::floor(d) || std::abs(d) > 1e9) throw InvalidArgument("config: '" + key + "' expects an integer");
    return static_cast<int>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw InvalidArgument("config: '" + key + "' expects true or false");
}

std::string fmt(double v, int precision = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    std::string s = buf;
    if (s == "-0." + std::string(precision, '0')) s.erase(0, 1);
    return s;
}

// Runs jobs [0, n) on up to `threads` workers; each job writes only its own slot.
void parallel_for(int n, int threads, const std::function<void(int)>& job) {
    int workers = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) job(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    job(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

std::string to_string(Controller c) {
    switch (c) {
        case Controller::None: return "none";
        case Controller::Random: return "random";
        case Controller::Linear: return "linear";
        case Controller::Ppo: return "ppo";
        case Controller::Sac: return "sac";
    }
    return "?";
}

Controller parse_controller(const std::string& name) {
    for (Controller c : {Controller::None, Controller::Random, Controller::Linear, Controller::Ppo, Controller::Sac})
        if (name == to_string(c)) return c;
    throw InvalidArgument("unknown residual kind: " + name);
}

std::string to_string(ControlMode m) {
    switch (m) {
        case ControlMode::Residual: return "residual";
        case ControlMode::Hybrid: return "hybrid";
        case ControlMode::PureRl: return "pure-rl";
    }
    return "?";
}

void apply_setting(HarnessSettings& s, const std::string& key, const std::string& value) {
    const std::string& v = value;
    if (key == "seeds") s.seeds = to_int(key, v);
    else if (key == "eval_episodes") s.eval_episodes = to_int(key, v);
    else if (key == "budget" || key == "episodes") s.budget = to_int(key, v);
    else if (key == "sac_budget") s.sac_budget = to_int(key, v);
    else if (key == "pure_rl_budget") s.pure_rl_budget = to_int(key, v);
    else if (key == "transfer_updates") s.transfer_updates = to_int(key, v);
    else if (key == "gate") s.gate = to_double(key, v);
    else if (key == "residual_speed") s.residual_speed = to_double(key, v);
    else if (key == "rotation_bound") s.rotation_bound = to_double(key, v);
    else if (key == "pure_speed") s.pure_speed = to_double(key, v);
    else if (key == "parameter_scale") s.parameter_scale = to_double(key, v);
    else if (key == "parameter_groups") s.parameter_groups = to_int(key, v);
    else if (key == "linear_gain") s.linear_gain = to_double(key, v);
    else if (key == "activation") s.activation = parse_activation(v);
    else if (key == "equalize_rewards") s.equalize_rewards = to_bool(key, v);
    else if (key == "bins") s.bins = to_int(key, v);
    else if (key == "curve_window") s.curve_window = to_int(key, v);
    else if (key == "threads") s.threads = to_int(key, v);
    else if (key == "hidden") {
        std::vector<int> h;
        std::stringstream ss(v);
        for (std::string item; std::getline(ss, item, ',');) h.push_back(to_int(key, trim(item)));
        if (h.empty()) throw InvalidArgument("config: hidden must list at least one layer");
        s.hidden = h;
    } else if (key == "ppo.clip") s.ppo.clip = to_double(key, v);
    else if (key == "ppo.epochs") s.ppo.epochs = to_int(key, v);
    else if (key == "ppo.minibatch") s.ppo.minibatch = to_int(key, v);
    else if (key == "ppo.lr") s.ppo.lr = to_double(key, v);
    else if (key == "ppo.value_lr") s.ppo.value_lr = to_double(key, v);
    else if (key == "ppo.discount") s.ppo.discount = to_double(key, v);
    else if (key == "ppo.gae_lambda") s.ppo.gae_lambda = to_double(key, v);
    else if (key == "ppo.episodes_per_update") s.ppo.episodes_per_update = to_int(key, v);
    else if (key == "ppo.max_grad_norm") s.ppo.max_grad_norm = to_double(key, v);
    else if (key == "sac.capacity") s.sac.capacity = to_int(key, v);
    else if (key == "sac.batch") s.sac.batch = to_int(key, v);
    else if (key == "sac.discount") s.sac.discount = to_double(key, v);
    else if (key == "sac.rho") s.sac.rho = to_double(key, v);
    else if (key == "sac.lr") s.sac.lr = to_double(key, v);
    else if (key == "sac.init_alpha") s.sac.init_alpha = to_double(key, v);
    else if (key == "sac.updates_per_iteration") s.sac.updates_per_iteration = to_int(key, v);
    else throw InvalidArgument("config: unknown key '" + key + "'");

    if (s.seeds < 1 || s.eval_episodes < 1 || s.budget < 0 || s.sac_budget < 0 || s.pure_rl_budget < 0 ||
        s.transfer_updates < 0 || s.bins < 1 || s.curve_window < 1 || s.parameter_groups < 1)
        throw InvalidArgument("config: '" + key + "' out of range");
    if (!(s.gate >= 0.0 && s.gate <= 1.0)) throw InvalidArgument("config: gate must lie in [0, 1]");
    if (!(s.residual_speed > 0.0 && s.rotation_bound > 0.0 && s.pure_speed > 0.0 && s.parameter_scale > 0.0))
        throw InvalidArgument("config: bounds must be positive");
}

void apply_config(HarnessSettings& s, const std::map<std::string, std::string>& values) {
    for (const auto& [k, v] : values) apply_setting(s, k, v);
}

std::map<std::string, std::string> read_flat_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config: " + path);
    std::map<std::string, std::string> out;
    std::string section;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidArgument(path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        if (value.size() >= 2 && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
        out[section.empty() ? key : section + "." + key] = value;
    }
    return out;
}

void validate(const ConditionSpec& c) {
    const bool rot_learned = c.rotation == Controller::Ppo || c.rotation == Controller::Sac;
    if (rot_learned && c.rotation != c.translation)
        throw InvalidArgument("condition: a learned rotation residual shares the translation learner");
    if (c.rotation == Controller::Linear && c.translation != Controller::Linear)
        throw InvalidArgument("condition: a linear rotation residual requires a linear translation residual");
    if (c.mode == ControlMode::Residual && c.locus != ExplorationLocus::TaskSpace && c.rotation != Controller::None)
        throw InvalidArgument("condition: rotation residuals act in task space only");
    if (c.mode != ControlMode::Residual && !c.learned())
        throw InvalidArgument("condition: hybrid and pure RL modes need a learned policy");
    if (c.mode == ControlMode::Residual && c.locus == ExplorationLocus::None && c.translation != Controller::None)
        throw InvalidArgument("condition: locus none takes no residual");
    if ((c.locus == ExplorationLocus::ParameterSpace || c.locus == ExplorationLocus::CouplingTerm) &&
        c.mode == ControlMode::Residual && !(c.translation == Controller::None || c.learned()))
        throw InvalidArgument("condition: parameter and coupling loci take a learned residual");
    if (!(c.gate >= 0.0 && c.gate <= 1.0)) throw InvalidArgument("condition: gate must lie in [0, 1]");
    if (c.budget < 0) throw InvalidArgument("condition: negative budget");
}

Trajectory synthesize_demo(const EnvConfig& env, double dt) {
    const Eigen::Vector3d start = env.start.center;
    const Eigen::Vector3d above(0.0, 0.0, 0.01);
    const Eigen::Vector3d bottom(0.0, 0.0, -env.geometry.depth);
    const Trajectory a = minimum_jerk_demo(start, above, 2.5, dt);
    const Trajectory b = minimum_jerk_demo(above, bottom, 1.5, dt);
    const int na = a.samples(), nb = b.samples();
    Trajectory out;
    const int n = na + nb - 1;
    out.time = Eigen::VectorXd::LinSpaced(n, 0.0, (n - 1) * dt);
    out.position.resize(n, 3);
    out.velocity.resize(n, 3);
    out.acceleration.resize(n, 3);
    out.position << a.position, b.position.bottomRows(nb - 1);
    out.velocity << a.velocity, b.velocity.bottomRows(nb - 1);
    out.acceleration << a.acceleration, b.acceleration.bottomRows(nb - 1);
    return out;
}

BasePolicy make_base_policy(const EnvConfig& env, int n_basis) {
    BasePolicy b;
    b.demo = synthesize_demo(env, env.dt);
    FitOptions opts;
    opts.n_basis = n_basis;
    b.position = fit_from_demo(b.demo, opts);
    const std::vector<UnitQuaternion> still(b.demo.samples(), UnitQuaternion::identity());
    b.orientation = fit_orientation_dmp(still, env.dt);
    return b;
}

namespace {

Eigen::VectorXd parameter_bounds(const DmpParams& p, int groups, double scale) {
    const int n = p.basis.count();
    const int d = p.dofs();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(groups), count = Eigen::VectorXd::Zero(groups);
    for (int i = 0; i < n; ++i) {
        const int g = static_cast<int>(static_cast<long>(i) * groups / n);
        sum(g) += p.basis.centers(i);
        count(g) += 1.0;
    }
    const double b = p.alpha_v * p.beta_v * scale;
    Eigen::VectorXd out(groups * d);
    for (int g = 0; g < groups; ++g) out.segment(g * d, d).setConstant(b * count(g) / sum(g));
    return out;
}

}  // namespace

Agent make_agent(const ConditionSpec& spec, const EnvConfig& env, const BasePolicy& base,
                 const HarnessSettings& settings, std::mt19937_64& rng) {
    validate(spec);
    Agent a;
    a.spec = spec;
    a.bounds = {settings.residual_speed, settings.rotation_bound};
    a.linear_gain = settings.linear_gain;
    const bool full = spec.rotation == spec.translation && spec.learned();
    if (spec.mode != ControlMode::Residual) {
        a.bound = Eigen::VectorXd::Constant(3, settings.pure_speed);
    } else {
        switch (spec.locus) {
            case ExplorationLocus::None: break;
            case ExplorationLocus::TaskSpace:
                a.bound.resize(full ? 6 : 3);
                a.bound.head<3>().setConstant(settings.residual_speed);
                if (full) a.bound.tail<3>().setConstant(settings.rotation_bound);
                break;
            case ExplorationLocus::CouplingTerm: {
                const double tau = base.position.tau;
                a.bound = Eigen::VectorXd::Constant(3, settings.residual_speed * tau * tau / (env.decision_period * env.dt));
                break;
            }
            case ExplorationLocus::ParameterSpace:
                a.bound = parameter_bounds(base.position, settings.parameter_groups, settings.parameter_scale);
                break;
        }
    }
    a.action_dim = static_cast<int>(a.bound.size());
    if (spec.translation == Controller::Ppo) {
        a.ppo = make_ppo(kPolicyFeatures, a.bound, settings.hidden, settings.activation, settings.ppo, rng);
    } else if (spec.translation == Controller::Sac) {
        a.sac = make_sac(kPolicyFeatures, a.bound, settings.hidden, settings.activation, settings.sac, rng);
    } else if (spec.translation == Controller::Linear) {
        a.linear = make_linear_policy(kObservationFeatures + 1, spec.rotation == Controller::Linear ? 6 : 3, a.bounds);
    }
    return a;
}

namespace {

bool decision_active(const ConditionSpec& c, int step, double t, double length) {
    if (c.mode == ControlMode::PureRl) return true;
    if (c.mode == ControlMode::Hybrid) return residual_schedule(t, length, c.gate) > 0.0;
    switch (c.locus) {
        case ExplorationLocus::None: return false;
        case ExplorationLocus::ParameterSpace: return step == 0;
        case ExplorationLocus::CouplingTerm: return true;
        case ExplorationLocus::TaskSpace: return residual_schedule(t, length, c.gate) > 0.0;
    }
    return false;
}

Eigen::Vector3d linear_target(const Observation& obs, double gain, int outputs, Eigen::VectorXd* full) {
    Eigen::VectorXd y(outputs);
    y.head<3>() = goal_directed_target(obs, gain);
    if (outputs == 6) y.tail<3>() = -gain * quat_log(obs.orientation);
    *full = y;
    return y.head<3>();
}

}  // namespace

EpisodeRollout run_episode(Agent& a, const EnvConfig& env, const BasePolicy& base, std::mt19937_64& env_rng,
                           std::mt19937_64& action_rng, bool deterministic, bool trace) {
    const ConditionSpec& c = a.spec;
    EnvConfig cfg = env;
    cfg.reward = c.reward;
    EnvState s = env_reset(cfg, env_rng);
    EpisodeRollout out;
    out.start = s.position;
    out.start_angle = geodesic_distance(s.orientation, UnitQuaternion::identity());
    const UnitQuaternion start_q = s.orientation;

    DmpState d = initial_state(base.position, s.position);
    OrientationState o = initial_orientation_state(base.orientation, s.orientation);
    const int horizon = static_cast<int>(std::lround(cfg.episode_length / cfg.dt));
    const int K = cfg.decision_period;
    EpisodeRecord& rec = out.record;
    rec.dt = cfg.dt;

    Eigen::VectorXd eta;                     // current learned action
    ResidualAction residual;                 // task-space residual
    Injection injection;                     // parameter-space injection (episode-long)
    bool open = false;
    double acc_reward = 0.0;
    double force_sum = 0.0;
    bool policy_in_control = false;

    for (int step = 0; step < horizon; ++step) {
        const double t = step * cfg.dt;
        if (step % K == 0 && decision_active(c, step, t, cfg.episode_length)) {
            Observation obs = observe(s, cfg);
            if (c.mode != ControlMode::PureRl) obs.phase = d.phase.s;
            if (open) {
                rec.rewards.push_back(acc_reward);
                acc_reward = 0.0;
                open = false;
            }
            if (c.learned()) {
                const Eigen::VectorXd f = policy_features(obs, cfg, t / cfg.episode_length);
                const GaussianPolicy& pol = a.ppo ? a.ppo->policy : a.sac->policy;
                const PolicySample ps = policy_act(pol, f, action_rng, deterministic);
                eta = ps.action;
                rec.observations.push_back(f);
                rec.actions.push_back(ps.action);
                rec.pre_squash.push_back(ps.u);
                rec.log_probs.push_back(ps.log_prob);
                open = true;
            }
            policy_in_control = true;
            if (c.mode == ControlMode::Residual) {
                switch (c.locus) {
                    case ExplorationLocus::TaskSpace: {
                        ResidualAction r;
                        if (c.learned()) {
                            const Eigen::Vector3d rot =
                                eta.size() == 6 ? Eigen::Vector3d(eta.tail<3>()) : Eigen::Vector3d::Zero();
                            r = action_from_vectors(eta.head<3>(), rot, a.bounds);
                        } else if (c.translation == Controller::Random) {
                            r = random_policy(action_rng, a.bounds);
                            if (c.rotation == Controller::None) r.alpha = 0.0;
                        } else if (c.translation == Controller::Linear) {
                            r = linear_policy_act(*a.linear, obs);
                            Eigen::VectorXd target;
                            linear_target(obs, a.linear_gain, static_cast<int>(a.linear->weights.rows()), &target);
                            a.linear = linear_policy_update(*a.linear, obs, target);
                        }
                        if (c.translation != Controller::Random && c.rotation == Controller::Random) {
                            const ResidualAction rr = random_policy(action_rng, a.bounds);
                            r.alpha = rr.alpha;
                            r.axis = rr.axis;
                        }
                        residual = r;
                        break;
                    }
                    case ExplorationLocus::ParameterSpace:
                        if (c.learned()) injection = inject_exploration(ExplorationLocus::ParameterSpace, eta, 1.0, base.position);
                        break;
                    default: break;
                }
            }
        }

        // Base policy.
        PoseCommand cmd;
        const bool base_active =
            c.mode == ControlMode::Residual || (c.mode == ControlMode::Hybrid && !policy_in_control);
        if (base_active) {
            Injection inj = injection;
            if (c.mode == ControlMode::Residual && c.locus == ExplorationLocus::CouplingTerm && eta.size() == 3)
                inj = inject_exploration(ExplorationLocus::CouplingTerm, eta, d.phase.s, base.position);
            const DmpState next = dmp_step(d, base.position, cfg.dt, inj);
            cmd.velocity = (next.x - d.x) / cfg.dt;
            d = next;
        } else {
            d.phase = canonical_step(d.phase, cfg.dt);
        }
        if (c.mode == ControlMode::PureRl) {
            cmd.orientation = start_q;
        } else {
            o = orientation_dmp_step(o, base.orientation, cfg.dt);
            cmd.orientation = o.q;
        }
        if (c.mode == ControlMode::Residual && c.locus == ExplorationLocus::TaskSpace) {
            cmd = compose_full_pose(cmd, residual);
        } else if (c.mode != ControlMode::Residual && policy_in_control) {
            cmd.velocity = eta;
        }

        const StepResult r = env_step(s, cmd, cfg);
        acc_reward += r.reward;
        out.env_return += r.reward;
        rec.force_magnitudes.push_back(r.info.force_magnitude);
        rec.peak_force = std::max(rec.peak_force, r.info.force_magnitude);
        force_sum += r.info.force_magnitude;
        if (trace) out.positions.push_back(s.position);
        if (r.done) break;
    }
    if (open) rec.rewards.push_back(acc_reward);
    rec.success = s.success;
    rec.broken = s.broken;
    rec.terminal = true;
    rec.mean_force = force_sum / static_cast<double>(std::max<std::size_t>(1, rec.force_magnitudes.size()));
    rec.insertion_time = s.success ? s.elapsed : cfg.episode_length;
    Observation fin = observe(s, cfg);
    if (c.mode != ControlMode::PureRl) fin.phase = d.phase.s;
    rec.final_observation = policy_features(fin, cfg, std::min(1.0, s.elapsed / cfg.episode_length));
    return out;
}

int episodes_to_reach(const std::vector<CurvePoint>& curve, double threshold) {
    for (const CurvePoint& p : curve)
        if (p.success >= threshold) return p.episodes;
    return -1;
}

TrainResult train_agent(Agent& a, const EnvConfig& env, const BasePolicy& base, int budget, std::uint64_t seed,
                        const HarnessSettings& settings, int max_updates) {
    TrainResult out;
    if (!a.spec.learned()) return out;
    const std::string label = env.name + "/" + a.spec.label + "/" + std::to_string(a.episodes);
    std::mt19937_64 env_rng = stream(seed, kTrainEnv, label);
    std::mt19937_64 act_rng = stream(seed, kTrainAction, label);
    std::mt19937_64 upd_rng = stream(seed, kUpdate, label);
    struct Sample {
        int ok;
        double ret, peak;
    };
    std::deque<Sample> window;
    int window_sum = 0;
    double ret_sum = 0.0, peak_sum = 0.0;
    auto point = [&] {
        const double n = static_cast<double>(window.size());
        return CurvePoint{out.episodes, window_sum / n, ret_sum / n, peak_sum / n};
    };
    int since_update = 0;
    for (int ep = 0; ep < budget; ++ep) {
        if (max_updates >= 0 && out.updates >= max_updates) break;
        EpisodeRollout roll = run_episode(a, env, base, env_rng, act_rng, false);
        ++a.episodes;
        ++out.episodes;
        const Sample smp{roll.record.success ? 1 : 0, roll.env_return, roll.record.peak_force};
        window.push_back(smp);
        window_sum += smp.ok;
        ret_sum += smp.ret;
        peak_sum += smp.peak;
        if (static_cast<int>(window.size()) > settings.curve_window) {
            window_sum -= window.front().ok;
            ret_sum -= window.front().ret;
            peak_sum -= window.front().peak;
            window.pop_front();
        }
        if (a.ppo) {
            if (roll.record.steps() > 0) a.pending.push_back(std::move(roll.record));
            if (++since_update >= a.ppo->config.episodes_per_update) {
                since_update = 0;
                if (!a.pending.empty()) {
                    const UpdateDiagnostics diag = ppo_update(*a.ppo, a.pending, upd_rng);
                    if (diag.aborted) ++a.aborted_updates;
                }
                a.pending.clear();
                ++a.updates;
                ++out.updates;
            }
        } else if (a.sac) {
            if (roll.record.steps() > 0) store_episode(*a.sac, roll.record);
            if (a.sac->replay.size() >= a.sac->config.batch) {
                const UpdateDiagnostics diag = sac_update(*a.sac, upd_rng);
                if (diag.aborted) ++a.aborted_updates;
                ++a.updates;
                ++out.updates;
            }
        }
        if (out.episodes % 20 == 0) out.curve.push_back(point());
    }
    if (out.curve.empty() || out.curve.back().episodes != out.episodes)
        if (!window.empty()) out.curve.push_back(point());
    return out;
}

EvalResult evaluate_agent(const Agent& agent, const EnvConfig& env, const BasePolicy& base, int n,
                          std::uint64_t seed, int bins) {
    if (n < 1) throw InvalidArgument("evaluate_agent: need at least one episode");
    if (bins < 1) throw InvalidArgument("evaluate_agent: need at least one bin");
    Agent a = agent;
    std::mt19937_64 env_rng = stream(seed, kEvalEnv, env.name);
    std::mt19937_64 act_rng = stream(seed, kEvalAction, env.name + "/" + a.spec.label);
    EvalResult r;
    r.bin_success.assign(bins, 0);
    r.bin_count.assign(bins, 0);
    double succ = 0.0, time = 0.0, peak = 0.0, mean = 0.0;
    const double span = env.start.max_orientation;
    for (int i = 0; i < n; ++i) {
        const EpisodeRollout roll = run_episode(a, env, base, env_rng, act_rng, true);
        const EpisodeRecord& e = roll.record;
        succ += e.success ? 1.0 : 0.0;
        time += e.insertion_time;
        peak += e.peak_force;
        mean += e.mean_force;
        r.broken += e.broken ? 1 : 0;
        int b = 0;
        if (span > 0.0) b = std::min(bins - 1, static_cast<int>(roll.start_angle / span * bins));
        ++r.bin_count[b];
        r.bin_success[b] += e.success ? 1 : 0;
    }
    r.success = succ / n;
    r.insertion_time = time / n;
    r.peak_force = peak / n;
    r.mean_force = mean / n;
    return r;
}

const ResultRow* ResultTable::find(const std::string& condition, const std::string& task) const {
    for (const ResultRow& r : rows)
        if (r.condition == condition && r.task == task) return &r;
    return nullptr;
}

namespace {

struct SeedResult {
    std::map<std::string, EvalResult> eval;  // by task
    TrainResult train;
    long eff = -1;
};

ResultRow aggregate(const std::string& condition, const std::string& task, const std::string& reward,
                    const std::vector<const EvalResult*>& per_seed, long eff) {
    ResultRow row;
    row.condition = condition;
    row.task = task;
    row.reward = reward;
    row.eff = eff;
    const int n = static_cast<int>(per_seed.size());
    for (const EvalResult* e : per_seed) {
        row.seed_success.push_back(100.0 * e->success);
        row.insertion_time += e->insertion_time / n;
        row.peak_force += e->peak_force / n;
        row.mean_force += e->mean_force / n;
    }
    row.success = std::accumulate(row.seed_success.begin(), row.seed_success.end(), 0.0) / n;
    if (n > 1) {
        double ss = 0.0;
        for (double v : row.seed_success) ss += (v - row.success) * (v - row.success);
        row.stderr_ = std::sqrt(ss / (n - 1)) / std::sqrt(static_cast<double>(n));
    }
    return row;
}

std::string reward_label(const ConditionSpec& c) {
    return c.learned() ? to_string(c.reward.kind) : "n/a";
}

struct ConditionRun {
    ConditionSpec spec;
    std::string train_task;
    std::vector<std::string> eval_tasks;
};

struct Registry {
    std::map<std::string, EnvConfig> envs;
    std::map<std::string, BasePolicy> bases;

    const EnvConfig& env(const std::string& task) {
        auto it = envs.find(task);
        if (it == envs.end()) it = envs.emplace(task, make_task(task)).first;
        return it->second;
    }
    const BasePolicy& base(const std::string& task) {
        auto it = bases.find(task);
        if (it == bases.end()) it = bases.emplace(task, make_base_policy(env(task))).first;
        return it->second;
    }
};

// Trains each condition per seed, evaluates on every listed task, aggregates one row per
// (condition, task) plus an average row when more than one task is evaluated.
void run_conditions(const std::string& experiment, const std::vector<ConditionRun>& runs,
                    const HarnessSettings& settings, std::uint64_t seed, ExperimentOutput& out, bool with_bins) {
    Registry reg;
    for (const ConditionRun& r : runs) {
        reg.base(r.train_task);
        for (const auto& t : r.eval_tasks) reg.base(t);
    }
    const int S = settings.seeds;
    const int jobs = static_cast<int>(runs.size()) * S;
    std::vector<SeedResult> results(jobs);
    parallel_for(jobs, settings.threads, [&](int j) {
        const ConditionRun& r = runs[j / S];
        const std::uint64_t run_seed = seed + static_cast<std::uint64_t>(j % S);
        const EnvConfig& train_env = reg.envs.at(r.train_task);
        const BasePolicy& train_base = reg.bases.at(r.train_task);
        std::mt19937_64 init = stream(run_seed, kInit, experiment + "/" + r.spec.label);
        Agent agent = make_agent(r.spec, train_env, train_base, settings, init);
        SeedResult& res = results[j];
        if (r.spec.learned()) {
            res.train = train_agent(agent, train_env, train_base, r.spec.budget, run_seed, settings);
            res.eff = res.train.episodes;
        }
        for (const std::string& t : r.eval_tasks)
            res.eval[t] = evaluate_agent(agent, reg.envs.at(t), reg.bases.at(t), settings.eval_episodes, run_seed,
                                         settings.bins);
    });

    ResultTable table;
    table.experiment = experiment;
    for (std::size_t ci = 0; ci < runs.size(); ++ci) {
        const ConditionRun& r = runs[ci];
        long eff = -1;
        for (int k = 0; k < S; ++k) eff = std::max(eff, results[ci * S + k].eff);
        std::vector<ResultRow> task_rows;
        for (const std::string& t : r.eval_tasks) {
            std::vector<const EvalResult*> per;
            for (int k = 0; k < S; ++k) per.push_back(&results[ci * S + k].eval.at(t));
            task_rows.push_back(aggregate(r.spec.label, t, reward_label(r.spec), per, eff));
            if (with_bins) {
                const EnvConfig& e = reg.envs.at(t);
                const double span = e.start.max_orientation * 180.0 / std::numbers::pi;
                for (int b = 0; b < settings.bins; ++b) {
                    BinRow br;
                    br.experiment = experiment;
                    br.condition = r.spec.label;
                    br.task = t;
                    br.bin = b;
                    br.lo_deg = span * b / settings.bins;
                    br.hi_deg = span * (b + 1) / settings.bins;
                    for (int k = 0; k < S; ++k) {
                        br.successes += results[ci * S + k].eval.at(t).bin_success[b];
                        br.count += results[ci * S + k].eval.at(t).bin_count[b];
                    }
                    out.bins.push_back(br);
                }
            }
        }
        for (const ResultRow& row : task_rows) table.rows.push_back(row);
        if (task_rows.size() > 1) {
            ResultRow avg = task_rows.front();
            avg.task = "average";
            for (std::size_t k = 0; k < avg.seed_success.size(); ++k) {
                double v = 0.0;
                for (const ResultRow& tr : task_rows) v += tr.seed_success[k];
                avg.seed_success[k] = v / task_rows.size();
            }
            std::vector<double> keep = avg.seed_success;
            double m = 0.0, tm = 0.0, pk = 0.0, mf = 0.0;
            for (const ResultRow& tr : task_rows) {
                m += tr.success / task_rows.size();
                tm += tr.insertion_time / task_rows.size();
                pk += tr.peak_force / task_rows.size();
                mf += tr.mean_force / task_rows.size();
            }
            avg.success = m;
            avg.insertion_time = tm;
            avg.peak_force = pk;
            avg.mean_force = mf;
            avg.stderr_ = 0.0;
            if (keep.size() > 1) {
                double ss = 0.0;
                for (double v : keep) ss += (v - m) * (v - m);
                avg.stderr_ = std::sqrt(ss / (keep.size() - 1)) / std::sqrt(static_cast<double>(keep.size()));
            }
            table.rows.push_back(avg);
        }
        if (r.spec.learned()) {
            for (int k = 0; k < S; ++k) {
                TrainingCurve tc;
                tc.experiment = experiment;
                tc.condition = r.spec.label;
                tc.task = r.train_task;
                tc.seed = seed + k;
                tc.points = results[ci * S + k].train.curve;
                out.curves.push_back(tc);
            }
        }
    }
    out.tables.push_back(table);
}

ConditionSpec residual_condition(const std::string& label, ExplorationLocus locus, Controller translation,
                                 Controller rotation, RewardKind reward, double gate, int budget) {
    ConditionSpec c;
    c.label = label;
    c.locus = locus;
    c.translation = translation;
    c.rotation = rotation;
    c.reward.kind = reward;
    c.gate = gate;
    c.budget = budget;
    return c;
}

}  // namespace

ExperimentOutput run_locus_comparison(const HarnessSettings& s, std::uint64_t seed) {
    const RewardKind baseline_reward = s.equalize_rewards ? RewardKind::Sparse : RewardKind::ExpL1;
    const std::vector<std::string> tasks{"easy", "hard"};
    std::vector<ConditionRun> runs{
        {residual_condition("None", ExplorationLocus::None, Controller::None, Controller::None, RewardKind::Sparse,
                            s.gate, 0),
         "easy", tasks},
        {residual_condition("CouplingTerm", ExplorationLocus::CouplingTerm, Controller::Ppo, Controller::None,
                            baseline_reward, 0.0, s.budget),
         "easy", tasks},
        {residual_condition("ParameterSpace", ExplorationLocus::ParameterSpace, Controller::Ppo, Controller::None,
                            baseline_reward, 0.0, s.budget),
         "easy", tasks},
        {residual_condition("TaskSpace", ExplorationLocus::TaskSpace, Controller::Ppo, Controller::None,
                            RewardKind::Sparse, s.gate, s.budget),
         "easy", tasks},
    };
    ExperimentOutput out;
    run_conditions("locus", runs, s, seed, out, false);
    return out;
}

ExperimentOutput run_strategy_comparison(const HarnessSettings& s, std::uint64_t seed) {
    const std::vector<std::string> tasks{"easy", "hard"};
    const auto ts = ExplorationLocus::TaskSpace;
    std::vector<ConditionRun> runs{
        {residual_condition("None", ts, Controller::None, Controller::None, RewardKind::Sparse, s.gate, 0), "easy",
         tasks},
        {residual_condition("Random", ts, Controller::Random, Controller::None, RewardKind::Sparse, s.gate, 0), "easy",
         tasks},
        {residual_condition("Linear", ts, Controller::Linear, Controller::None, RewardKind::Sparse, s.gate, 0), "easy",
         tasks},
        {residual_condition("SAC", ts, Controller::Sac, Controller::None, RewardKind::Sparse, s.gate, s.sac_budget),
         "easy", tasks},
        {residual_condition("PPO", ts, Controller::Ppo, Controller::None, RewardKind::Sparse, s.gate, s.budget), "easy",
         tasks},
    };
    ExperimentOutput out;
    run_conditions("strategy", runs, s, seed, out, false);
    return out;
}

ExperimentOutput run_ablation(const HarnessSettings& s, std::uint64_t seed) {
    const std::vector<std::string> tasks{"easy", "hard"};
    ConditionSpec pure;
    pure.label = "PureRL";
    pure.mode = ControlMode::PureRl;
    pure.translation = Controller::Ppo;
    pure.reward.kind = RewardKind::Dense;
    pure.gate = 0.0;
    pure.budget = s.pure_rl_budget;
    ConditionSpec hybrid = pure;
    hybrid.label = "Hybrid";
    hybrid.mode = ControlMode::Hybrid;
    hybrid.reward.kind = RewardKind::Sparse;
    hybrid.gate = s.gate;
    hybrid.budget = s.budget;
    std::vector<ConditionRun> runs{
        {residual_condition("DMP", ExplorationLocus::None, Controller::None, Controller::None, RewardKind::Sparse,
                            s.gate, 0),
         "easy", tasks},
        {pure, "easy", tasks},
        {hybrid, "easy", tasks},
        {residual_condition("rLfD", ExplorationLocus::TaskSpace, Controller::Ppo, Controller::None, RewardKind::Sparse,
                            s.gate, s.budget),
         "easy", tasks},
    };
    ExperimentOutput out;
    run_conditions("ablation", runs, s, seed, out, false);
    return out;
}

ExperimentOutput run_fullpose_comparison(const HarnessSettings& s, std::uint64_t seed) {
    const auto ts = ExplorationLocus::TaskSpace;
    std::vector<ConditionRun> runs;
    for (const std::string task : {"peg", "gear", "rj45"}) {
        const std::vector<std::string> tasks{task};
        const std::vector<std::pair<Controller, Controller>> pairs{
            {Controller::None, Controller::None},     {Controller::Linear, Controller::None},
            {Controller::Ppo, Controller::None},      {Controller::Linear, Controller::Random},
            {Controller::Random, Controller::Random}, {Controller::Ppo, Controller::Ppo}};
        for (const auto& [tr, rot] : pairs) {
            auto name = [](Controller c) {
                switch (c) {
                    case Controller::None: return std::string("None");
                    case Controller::Random: return std::string("Random");
                    case Controller::Linear: return std::string("Linear");
                    case Controller::Ppo: return std::string("PPO");
                    case Controller::Sac: return std::string("SAC");
                }
                return std::string("?");
            };
            const bool learned = tr == Controller::Ppo;
            runs.push_back({residual_condition(name(tr) + "/" + name(rot), ts, tr, rot, RewardKind::Sparse, s.gate,
                                               learned ? s.budget : 0),
                            task, tasks});
        }
    }
    ExperimentOutput out;
    run_conditions("fullpose", runs, s, seed, out, true);
    return out;
}

ExperimentOutput run_transfer(const HarnessSettings& s, std::uint64_t seed, const std::string& source,
                              const std::string& target) {
    Registry reg;
    const EnvConfig& src_env = reg.env(source);
    const EnvConfig& targ_env = reg.env(target);
    const BasePolicy& src_base = reg.base(source);
    const BasePolicy& targ_base = reg.base(target);
    const ConditionSpec spec = residual_condition("PPO/PPO", ExplorationLocus::TaskSpace, Controller::Ppo,
                                                  Controller::Ppo, RewardKind::Sparse, s.gate, s.budget);
    const int S = s.seeds;
    struct Cell {
        EvalResult targ_full, src_on_targ, targ_k, src_to_targ;
        long eff_targ = 0, eff_src = 0, eff_k = 0, eff_ft = 0;
        TrainResult curve_targ, curve_src;
    };
    std::vector<Cell> cells(S);
    parallel_for(S, s.threads, [&](int k) {
        const std::uint64_t run_seed = seed + static_cast<std::uint64_t>(k);
        Cell& c = cells[k];
        std::mt19937_64 init_t = stream(run_seed, kInit, "transfer/targ");
        Agent targ = make_agent(spec, targ_env, targ_base, s, init_t);
        std::mt19937_64 init_k = stream(run_seed, kInit, "transfer/targ");
        Agent scratch = make_agent(spec, targ_env, targ_base, s, init_k);
        std::mt19937_64 init_s = stream(run_seed, kInit, "transfer/src");
        Agent src = make_agent(spec, src_env, src_base, s, init_s);

        c.curve_targ = train_agent(targ, targ_env, targ_base, s.budget, run_seed, s);
        c.eff_targ = c.curve_targ.episodes;
        c.targ_full = evaluate_agent(targ, targ_env, targ_base, s.eval_episodes, run_seed, s.bins);

        c.curve_src = train_agent(src, src_env, src_base, s.budget, run_seed, s);
        c.eff_src = c.curve_src.episodes;
        c.src_on_targ = evaluate_agent(src, targ_env, targ_base, s.eval_episodes, run_seed, s.bins);

        const int k_budget = s.transfer_updates * s.ppo.episodes_per_update;
        c.eff_k = train_agent(scratch, targ_env, targ_base, k_budget, run_seed, s, s.transfer_updates).episodes;
        c.targ_k = evaluate_agent(scratch, targ_env, targ_base, s.eval_episodes, run_seed, s.bins);

        Agent ft = src;
        c.eff_ft = c.eff_src + train_agent(ft, targ_env, targ_base, k_budget, run_seed, s, s.transfer_updates).episodes;
        c.src_to_targ = evaluate_agent(ft, targ_env, targ_base, s.eval_episodes, run_seed, s.bins);
    });
    ExperimentOutput out;
    ResultTable table;
    table.experiment = "transfer";
    auto rows = [&](const std::string& label, auto field, auto eff) {
        std::vector<const EvalResult*> per;
        long e = 0;
        for (const Cell& c : cells) {
            per.push_back(&(c.*field));
            e = std::max(e, c.*eff);
        }
        table.rows.push_back(aggregate(label, target, "sparse", per, e));
    };
    rows("targ_full", &Cell::targ_full, &Cell::eff_targ);
    rows("src_full_on_targ", &Cell::src_on_targ, &Cell::eff_src);
    rows("targ_" + std::to_string(s.transfer_updates) + "_updates", &Cell::targ_k, &Cell::eff_k);
    rows("src_to_targ_" + std::to_string(s.transfer_updates) + "_updates", &Cell::src_to_targ, &Cell::eff_ft);
    out.tables.push_back(table);
    for (int k = 0; k < S; ++k) {
        out.curves.push_back({"transfer", "targ_full", target, seed + k, cells[k].curve_targ.curve});
        out.curves.push_back({"transfer", "src_full", source, seed + k, cells[k].curve_src.curve});
    }
    return out;
}

ExperimentOutput run_transfer_both(const HarnessSettings& s, std::uint64_t seed) {
    ExperimentOutput out = run_transfer(s, seed, "rj45", "gear");
    ExperimentOutput other = run_transfer(s, seed, "gear", "rj45");
    ResultTable& table = out.tables.front();
    const std::size_t n = table.rows.size();
    for (const ResultRow& r : other.tables.front().rows) table.rows.push_back(r);
    for (const TrainingCurve& c : other.curves) out.curves.push_back(c);
    for (std::size_t i = 0; i < n; ++i) {
        const ResultRow& a = table.rows[i];
        const ResultRow& b = table.rows[n + i];
        ResultRow avg = a;
        avg.task = "average";
        avg.eff = std::max(a.eff, b.eff);
        for (std::size_t k = 0; k < avg.seed_success.size(); ++k)
            avg.seed_success[k] = 0.5 * (a.seed_success[k] + b.seed_success[k]);
        avg.success = 0.5 * (a.success + b.success);
        avg.insertion_time = 0.5 * (a.insertion_time + b.insertion_time);
        avg.peak_force = 0.5 * (a.peak_force + b.peak_force);
        avg.mean_force = 0.5 * (a.mean_force + b.mean_force);
        avg.stderr_ = 0.0;
        const std::size_t m = avg.seed_success.size();
        if (m > 1) {
            double ss = 0.0;
            for (double v : avg.seed_success) ss += (v - avg.success) * (v - avg.success);
            avg.stderr_ = std::sqrt(ss / (m - 1)) / std::sqrt(static_cast<double>(m));
        }
        table.rows.push_back(avg);
    }
    return out;
}

ExperimentOutput run_experiment(const std::string& name, const HarnessSettings& s, std::uint64_t seed) {
    if (name == "locus") return run_locus_comparison(s, seed);
    if (name == "strategy") return run_strategy_comparison(s, seed);
    if (name == "ablation") return run_ablation(s, seed);
    if (name == "fullpose") return run_fullpose_comparison(s, seed);
    if (name == "transfer") return run_transfer_both(s, seed);
    throw InvalidArgument("unknown experiment: " + name);
}

std::string table_csv(const ResultTable& t) {
    std::ostringstream os;
    os << "experiment,condition,task,reward,eff,success,stderr,seed_success,insertion_time,peak_force,mean_force\n";
    for (const ResultRow& r : t.rows) {
        std::string seeds;
        for (std::size_t i = 0; i < r.seed_success.size(); ++i) seeds += (i ? ";" : "") + fmt(r.seed_success[i], 2);
        os << t.experiment << ',' << r.condition << ',' << r.task << ',' << r.reward << ','
           << (r.eff < 0 ? std::string("n/a") : std::to_string(r.eff)) << ',' << fmt(r.success, 2) << ','
           << fmt(r.stderr_, 2) << ',' << seeds << ',' << fmt(r.insertion_time, 3) << ',' << fmt(r.peak_force, 3)
           << ',' << fmt(r.mean_force, 3) << '\n';
    }
    return os.str();
}

std::string report_markdown(const ExperimentOutput& output) {
    std::ostringstream os;
    os << "# Results\n\n";
    if (output.tables.empty()) {
        os << "| table | status |\n|---|---|\n| (none) | no data |\n";
        return os.str();
    }
    for (const ResultTable& t : output.tables) {
        os << "## " << t.experiment << "\n\n";
        os << "| condition | task | reward | Eff. | success % | time s | peak N | mean N |\n";
        os << "|---|---|---|---|---|---|---|---|\n";
        if (t.rows.empty()) os << "| no data | | | | | | | |\n";
        for (const ResultRow& r : t.rows)
            os << "| " << r.condition << " | " << r.task << " | " << r.reward << " | "
               << (r.eff < 0 ? std::string("n/a") : std::to_string(r.eff)) << " | " << fmt(r.success, 1) << " ± "
               << fmt(r.stderr_, 1) << " | " << fmt(r.insertion_time, 2) << " | " << fmt(r.peak_force, 1) << " | "
               << fmt(r.mean_force, 1) << " |\n";
        os << "\n";
    }
    return os.str();
}

std::vector<std::string> emit_outputs(const ExperimentOutput& output, const std::string& out_dir, std::uint64_t seed) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory: " + out_dir);
    std::vector<std::string> written;
    auto write = [&](const std::string& name, const std::string& text) {
        const std::string path = (fs::path(out_dir) / name).string();
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot write " + path);
        f << text;
        if (!f) throw IoError("write failed: " + path);
        written.push_back(path);
    };
    const std::string tag = std::to_string(seed);
    std::string prefix = "empty";
    for (const ResultTable& t : output.tables) {
        write(t.experiment + "_" + tag + ".csv", table_csv(t));
        prefix = t.experiment;
    }
    if (!output.curves.empty()) {
        std::ostringstream os;
        os << "experiment,condition,task,seed,episode,return,success,peak_force\n";
        for (const TrainingCurve& c : output.curves)
            for (const CurvePoint& p : c.points)
                os << c.experiment << ',' << c.condition << ',' << c.task << ',' << c.seed << ',' << p.episodes << ','
                   << fmt(p.episode_return, 4) << ',' << fmt(p.success, 4) << ',' << fmt(p.peak_force, 3) << '\n';
        write(output.curves.front().experiment + "_curves_" + tag + ".csv", os.str());
    }
    if (!output.bins.empty()) {
        std::ostringstream os;
        os << "experiment,condition,task,bin,lo_deg,hi_deg,successes,count,success\n";
        for (const BinRow& b : output.bins)
            os << b.experiment << ',' << b.condition << ',' << b.task << ',' << b.bin << ',' << fmt(b.lo_deg, 2) << ','
               << fmt(b.hi_deg, 2) << ',' << b.successes << ',' << b.count << ','
               << fmt(b.count ? 100.0 * b.successes / b.count : 0.0, 2) << '\n';
        write(output.bins.front().experiment + "_bins_" + tag + ".csv", os.str());
    }
    write("report_" + prefix + "_" + tag + ".md", report_markdown(output));
    return written;
}

std::map<std::string, double> emit_spiral_variants(const std::string& out_dir, std::uint64_t seed) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory: " + out_dir);
    const Trajectory demo = archimedean_spiral_demo();
    FitOptions fo;
    fo.n_basis = 40;
    const DmpParams p = fit_from_demo(demo, fo);
    const RolloutOptions opts{demo.duration(), demo.dt(), 10};
    const double sigma = 0.1 * demo.acceleration.rowwise().norm().maxCoeff();
    const std::vector<std::pair<std::string, ExplorationLocus>> variants{
        {"A", ExplorationLocus::None},
        {"B", ExplorationLocus::TaskSpace},
        {"C", ExplorationLocus::ParameterSpace},
        {"D", ExplorationLocus::CouplingTerm}};
    std::map<std::string, double> jerk;
    for (const auto& [name, locus] : variants) {
        std::mt19937_64 rng = stream(seed, kSpiral, "spiral");
        const Trajectory t =
            perturbed_rollout(p, locus, locus == ExplorationLocus::None ? 0.0 : sigma, rng, opts);
        jerk[name] = max_step_jerk(t);
        std::ostringstream os;
        os << "t,x,y,z\n";
        for (int i = 0; i < t.samples(); ++i)
            os << fmt(t.time(i), 4) << ',' << fmt(t.position(i, 0), 8) << ',' << fmt(t.position(i, 1), 8) << ','
               << fmt(t.position(i, 2), 8) << '\n';
        const std::string path = (fs::path(out_dir) / ("spiral_" + name + "_" + std::to_string(seed) + ".csv")).string();
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot write " + path);
        f << os.str();
    }
    return jerk;
}

}  // namespace rlfd
