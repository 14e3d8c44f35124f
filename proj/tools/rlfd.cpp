#include "rlfd/demos.hpp"
#include "rlfd/errors.hpp"
#include "rlfd/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace rlfd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Globals {
    std::string config;
    std::uint64_t seed = 1;
    std::string out = "out";
    int episodes = -1;
};

HarnessSettings load_settings(const Globals& g) {
    HarnessSettings s;
    if (!g.config.empty()) apply_config(s, read_flat_config(g.config));
    if (g.episodes >= 0) apply_setting(s, "budget", std::to_string(g.episodes));
    return s;
}

std::string out_path(const Globals& g, const std::string& name) {
    std::error_code ec;
    fs::create_directories(g.out, ec);
    if (ec || !fs::is_directory(g.out)) throw IoError("cannot create output directory: " + g.out);
    return (fs::path(g.out) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << text;
    if (!f) throw IoError("write failed: " + path);
}

std::string num(double v, int precision = 8) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::VectorXd parse_point(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        try {
            v.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw InvalidArgument("bad coordinate list: " + text);
        }
    }
    if (v.empty()) throw InvalidArgument("empty coordinate list");
    return from_vec(v);
}

// Demo CSV: a `t` column, then position columns up to the first velocity column (v*), if any.
Trajectory read_demo_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read demo: " + path);
    std::string line;
    std::vector<std::vector<double>> rows;
    int pos_cols = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        if (rows.empty() && pos_cols < 0 && !cells.empty() && !cells[0].empty() &&
            std::isalpha(static_cast<unsigned char>(cells[0][0]))) {
            pos_cols = 0;
            for (std::size_t i = 1; i < cells.size() && cells[i][0] != 'v'; ++i) ++pos_cols;
            continue;
        }
        std::vector<double> r;
        for (const auto& c : cells) {
            try {
                r.push_back(std::stod(c));
            } catch (const std::exception&) {
                throw InvalidArgument("demo: non-numeric cell '" + c + "' in " + path);
            }
        }
        rows.push_back(r);
    }
    if (rows.size() < 3) throw InvalidArgument("demo: need at least three samples");
    const int cols = pos_cols > 0 ? pos_cols : static_cast<int>(rows[0].size()) - 1;
    if (cols < 1) throw InvalidArgument("demo: no position columns");
    Eigen::MatrixXd p(rows.size(), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<int>(rows[i].size()) < cols + 1) throw InvalidArgument("demo: short row");
        for (int j = 0; j < cols; ++j) p(i, j) = rows[i][j + 1];
    }
    const double dt = (rows.back()[0] - rows.front()[0]) / static_cast<double>(rows.size() - 1);
    if (!(dt > 0.0)) throw InvalidArgument("demo: time must increase");
    return differentiate_demo(p, dt, rows.front()[0]);
}

std::string trajectory_csv(const Trajectory& t) {
    std::ostringstream os;
    const int d = t.dofs();
    const char* names = "xyz";
    auto col = [&](const char* prefix, int j) {
        return std::string(prefix) + (d <= 3 ? std::string(1, names[j]) : std::to_string(j));
    };
    os << "t";
    for (int j = 0; j < d; ++j) os << ',' << col("", j);
    for (int j = 0; j < d; ++j) os << ',' << col("v", j);
    for (int j = 0; j < d; ++j) os << ',' << col("a", j);
    os << '\n';
    for (int i = 0; i < t.samples(); ++i) {
        os << num(t.time(i), 4);
        for (int j = 0; j < d; ++j) os << ',' << num(t.position(i, j));
        for (int j = 0; j < d; ++j) os << ',' << num(t.velocity(i, j));
        for (int j = 0; j < d; ++j) os << ',' << num(t.acceleration(i, j));
        os << '\n';
    }
    return os.str();
}

json params_json(const DmpParams& p) {
    json w = json::array();
    for (int i = 0; i < p.weights.rows(); ++i) w.push_back(to_vec(p.weights.row(i).transpose()));
    return {{"alpha_v", p.alpha_v},         {"beta_v", p.beta_v},          {"alpha_s", p.alpha_s},
            {"tau", p.tau},                 {"y0", to_vec(p.y0)},           {"goal", to_vec(p.goal)},
            {"weights", w},                 {"centers", to_vec(p.basis.centers)},
            {"widths", to_vec(p.basis.widths)}};
}

DmpParams params_from_json(const json& j) {
    DmpParams p;
    p.alpha_v = j.at("alpha_v");
    p.beta_v = j.at("beta_v");
    p.alpha_s = j.at("alpha_s");
    p.tau = j.at("tau");
    p.y0 = from_vec(j.at("y0").get<std::vector<double>>());
    p.goal = from_vec(j.at("goal").get<std::vector<double>>());
    p.basis.centers = from_vec(j.at("centers").get<std::vector<double>>());
    p.basis.widths = from_vec(j.at("widths").get<std::vector<double>>());
    const auto& w = j.at("weights");
    p.weights.resize(static_cast<Eigen::Index>(w.size()), p.goal.size());
    for (std::size_t i = 0; i < w.size(); ++i) p.weights.row(i) = from_vec(w[i].get<std::vector<double>>()).transpose();
    return p;
}

json condition_json(const ConditionSpec& c, const std::string& task) {
    return {{"label", c.label},
            {"task", task},
            {"mode", to_string(c.mode)},
            {"locus", to_string(c.locus)},
            {"translation", to_string(c.translation)},
            {"rotation", to_string(c.rotation)},
            {"reward", to_string(c.reward.kind)},
            {"gate", c.gate},
            {"budget", c.budget}};
}

ControlMode parse_mode(const std::string& name) {
    for (ControlMode m : {ControlMode::Residual, ControlMode::Hybrid, ControlMode::PureRl})
        if (name == to_string(m)) return m;
    throw InvalidArgument("unknown mode: " + name);
}

ConditionSpec condition_from_json(const json& j) {
    ConditionSpec c;
    c.label = j.at("label");
    c.mode = parse_mode(j.at("mode"));
    c.locus = parse_locus(j.at("locus"));
    c.translation = parse_controller(j.at("translation"));
    c.rotation = parse_controller(j.at("rotation"));
    c.reward.kind = parse_reward(j.at("reward"));
    c.gate = j.at("gate");
    c.budget = j.at("budget");
    return c;
}

struct Loaded {
    ConditionSpec spec;
    std::string task;
    std::optional<GaussianPolicy> policy;
};

Loaded load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read checkpoint: " + path);
    const json j = json::parse(in);
    Loaded out;
    json cond;
    if (j.value("format", "") == "rlfd-policy-1") {
        LoadedPolicy lp = load_policy_checkpoint(path);
        out.policy = lp.policy;
        cond = json::parse(lp.extra_json).at("condition");
    } else {
        cond = j.at("condition");
    }
    out.spec = condition_from_json(cond);
    out.task = cond.at("task");
    return out;
}

void install_policy(Agent& a, const GaussianPolicy& p) {
    GaussianPolicy& target = a.ppo ? a.ppo->policy : a.sac->policy;
    if (target.obs_dim() != p.obs_dim() || target.action_dim() != p.action_dim())
        throw std::runtime_error("checkpoint does not match the condition's observation/action sizes");
    target = p;
}

void print_report(const ExperimentOutput& o, const std::vector<std::string>& paths) {
    std::cout << report_markdown(o);
    for (const auto& p : paths) std::cout << "wrote " << p << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rlfd: residual learning from demonstration on DMPs"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "flat key = value config file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "base seed");
    app.add_option("--out", g.out, "output directory");
    app.add_option("--episodes", g.episodes, "training budget override")->check(CLI::NonNegativeNumber);

    auto* fit = app.add_subcommand("fit", "fit a DMP to a demo CSV and write params JSON");
    std::string demo_path;
    int n_basis = 40;
    fit->add_option("--demo", demo_path, "demo CSV (t, position columns)")->required();
    fit->add_option("--n-basis", n_basis, "basis functions per DoF")->check(CLI::PositiveNumber);

    auto* roll = app.add_subcommand("rollout", "roll out fitted params, or one episode of a task");
    std::string params_path, roll_task, roll_ckpt, start_text, goal_text;
    double duration = -1.0, roll_dt = 0.01;
    roll->add_option("--params", params_path, "params JSON from fit");
    roll->add_option("--start", start_text, "start point, comma separated");
    roll->add_option("--goal", goal_text, "goal point, comma separated");
    roll->add_option("--duration", duration, "seconds (default tau)");
    roll->add_option("--dt", roll_dt, "integration step")->check(CLI::PositiveNumber);
    roll->add_option("--task", roll_task, "task preset for an episode trace");
    roll->add_option("--checkpoint", roll_ckpt, "policy checkpoint for the episode trace");

    auto* train = app.add_subcommand("train", "train one residual condition and write a checkpoint + curve");
    std::string task = "easy", locus = "task-space", residual = "ppo", rotation = "none", reward = "sparse",
                mode = "residual";
    double gate = -1.0;
    train->add_option("--task", task, "easy | hard | peg | gear | rj45");
    train->add_option("--locus", locus, "none | coupling-term | parameter-space | task-space");
    train->add_option("--residual", residual, "none | random | linear | ppo | sac");
    train->add_option("--rotation", rotation, "rotation residual kind");
    train->add_option("--reward", reward, "sparse | dense | exp-l1");
    train->add_option("--mode", mode, "residual | hybrid | pure-rl");
    train->add_option("--gate", gate, "residual activation fraction (default from settings)");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ckpt, eval_task;
    int n_eval = 100;
    eval->add_option("--checkpoint", ckpt, "checkpoint JSON")->required();
    eval->add_option("--task", eval_task, "task preset (default: training task)");
    eval->add_option("--n", n_eval, "evaluation episodes")->check(CLI::PositiveNumber);

    auto* transfer = app.add_subcommand("transfer", "few-update transfer between two presets");
    std::string source = "gear", target = "rj45";
    int updates = -1;
    bool both = false;
    transfer->add_option("--source", source, "source preset");
    transfer->add_option("--target", target, "target preset");
    transfer->add_option("--updates", updates, "fine-tuning updates (default 3)")->check(CLI::NonNegativeNumber);
    transfer->add_flag("--both", both, "run gear -> rj45 and rj45 -> gear");

    auto* spiral = app.add_subcommand("spiral-demo", "write the four exploration variants of the spiral demo");

    auto* report = app.add_subcommand("report", "run an experiment and write tables, curves and the report");
    std::string experiment = "locus";
    report->add_option("--experiment", experiment, "locus | strategy | ablation | fullpose | transfer | all");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        HarnessSettings s = load_settings(g);

        if (*fit) {
            const Trajectory demo = read_demo_csv(demo_path);
            FitOptions fo;
            fo.n_basis = n_basis;
            const DmpParams p = fit_from_demo(demo, fo);
            const std::string path = out_path(g, "params.json");
            write_text(path, params_json(p).dump(2) + "\n");
            std::cout << "wrote " << path << '\n';
        } else if (*roll) {
            if (!params_path.empty()) {
                std::ifstream in(params_path);
                if (!in) throw IoError("cannot read params: " + params_path);
                const DmpParams p = params_from_json(json::parse(in));
                const Eigen::VectorXd start = start_text.empty() ? p.y0 : parse_point(start_text);
                const Eigen::VectorXd goal = goal_text.empty() ? p.goal : parse_point(goal_text);
                if (start.size() != p.dofs() || goal.size() != p.dofs())
                    throw InvalidArgument("start/goal size does not match the params");
                const RolloutOptions ro{duration > 0.0 ? duration : p.tau, roll_dt, 10};
                const Trajectory t = rollout(p, start, goal, ro);
                const std::string path = out_path(g, "rollout.csv");
                write_text(path, trajectory_csv(t));
                const Eigen::VectorXd end = t.position.row(t.samples() - 1).transpose();
                const json info{{"samples", t.samples()},
                                {"duration", t.duration()},
                                {"end", to_vec(end)},
                                {"goal_error", (end - goal).norm()}};
                write_text(out_path(g, "rollout.json"), info.dump(2) + "\n");
                std::cout << "wrote " << path << '\n';
            } else if (!roll_task.empty()) {
                ConditionSpec c;
                c.label = "DMP";
                c.locus = ExplorationLocus::None;
                std::optional<GaussianPolicy> pol;
                if (!roll_ckpt.empty()) {
                    Loaded l = load_checkpoint(roll_ckpt);
                    c = l.spec;
                    pol = l.policy;
                }
                validate(c);
                const EnvConfig env = make_task(roll_task);
                const BasePolicy base = make_base_policy(env);
                std::mt19937_64 init(g.seed);
                Agent a = make_agent(c, env, base, s, init);
                if (pol) install_policy(a, *pol);
                std::mt19937_64 er(g.seed), ar(g.seed + 1);
                const EpisodeRollout r = run_episode(a, env, base, er, ar, true, true);
                Eigen::MatrixXd p(r.positions.size(), 3);
                for (std::size_t i = 0; i < r.positions.size(); ++i) p.row(i) = r.positions[i].transpose();
                const Trajectory t = differentiate_demo(p, env.dt, env.dt);
                const std::string stem = "episode_" + roll_task + "_" + std::to_string(g.seed);
                write_text(out_path(g, stem + ".csv"), trajectory_csv(t));
                const json info{{"task", roll_task},
                                {"condition", condition_json(c, roll_task)},
                                {"start", to_vec(r.start)},
                                {"success", r.record.success},
                                {"broken", r.record.broken},
                                {"insertion_time", r.record.insertion_time},
                                {"peak_force", r.record.peak_force},
                                {"mean_force", r.record.mean_force}};
                write_text(out_path(g, stem + ".json"), info.dump(2) + "\n");
                std::cout << "success " << (r.record.success ? 1 : 0) << " peak_force " << num(r.record.peak_force, 3)
                          << " N\nwrote " << out_path(g, stem + ".csv") << '\n';
            } else {
                throw InvalidArgument("rollout needs --params or --task");
            }
        } else if (*train) {
            ConditionSpec c;
            c.mode = parse_mode(mode);
            c.locus = parse_locus(locus);
            c.translation = parse_controller(residual);
            c.rotation = parse_controller(rotation);
            c.reward.kind = parse_reward(reward);
            c.gate = gate >= 0.0 ? gate : (c.mode == ControlMode::PureRl || c.locus != ExplorationLocus::TaskSpace
                                               ? 0.0
                                               : s.gate);
            c.budget = c.learned() ? (c.translation == Controller::Sac && g.episodes < 0 ? s.sac_budget : s.budget) : 0;
            c.label = to_string(c.locus) + "/" + residual + "/" + rotation;
            validate(c);
            const EnvConfig env = make_task(task);
            const BasePolicy base = make_base_policy(env);
            std::mt19937_64 init(g.seed);
            Agent a = make_agent(c, env, base, s, init);
            const TrainResult tr = train_agent(a, env, base, c.budget, g.seed, s);
            const json cond = condition_json(c, task);
            const std::string path = out_path(g, "checkpoint.json");
            if (c.learned()) {
                save_policy_checkpoint(path, a.ppo ? a.ppo->policy : a.sac->policy,
                                       json{{"condition", cond}, {"seed", g.seed}}.dump());
            } else {
                write_text(path, json{{"format", "rlfd-condition-1"}, {"condition", cond}}.dump(2) + "\n");
            }
            std::ostringstream os;
            os << "episode,return,success,peak_force\n";
            for (const CurvePoint& p : tr.curve)
                os << p.episodes << ',' << num(p.episode_return, 4) << ',' << num(p.success, 4) << ','
                   << num(p.peak_force, 3) << '\n';
            const std::string curve = out_path(g, "train_curve_" + std::to_string(g.seed) + ".csv");
            write_text(curve, os.str());
            std::cout << "trained " << tr.episodes << " episodes, " << tr.updates << " updates\n"
                      << "wrote " << path << "\nwrote " << curve << '\n';
        } else if (*eval) {
            const Loaded l = load_checkpoint(ckpt);
            const std::string t = eval_task.empty() ? l.task : eval_task;
            const EnvConfig env = make_task(t);
            const BasePolicy base = make_base_policy(env);
            std::mt19937_64 init(g.seed);
            Agent a = make_agent(l.spec, env, base, s, init);
            if (l.policy) install_policy(a, *l.policy);
            const EvalResult r = evaluate_agent(a, env, base, n_eval, g.seed, s.bins);
            const double se = std::sqrt(r.success * (1.0 - r.success) / n_eval);
            std::cout << "task " << t << " success " << num(100.0 * r.success, 1) << "% +- " << num(100.0 * se, 1)
                      << " (n=" << n_eval << ") insertion_time " << num(r.insertion_time, 2) << " s peak_force "
                      << num(r.peak_force, 2) << " N\n";
        } else if (*transfer) {
            if (updates >= 0) s.transfer_updates = updates;
            make_task(source);
            make_task(target);
            const ExperimentOutput o = both ? run_transfer_both(s, g.seed) : run_transfer(s, g.seed, source, target);
            print_report(o, emit_outputs(o, g.out, g.seed));
        } else if (*spiral) {
            const auto jerk = emit_spiral_variants(g.out, g.seed);
            for (const auto& [k, v] : jerk) std::cout << "variant " << k << " max_step_jerk " << num(v, 4) << '\n';
        } else if (*report) {
            std::vector<std::string> names{experiment};
            if (experiment == "all") names = {"locus", "strategy", "ablation", "fullpose", "transfer"};
            for (const auto& n : names) {
                const ExperimentOutput o = run_experiment(n, s, g.seed);
                print_report(o, emit_outputs(o, g.out, g.seed));
            }
        }
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
