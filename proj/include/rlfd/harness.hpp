#pragma once

#include "rlfd/dmp.hpp"
#include "rlfd/env.hpp"
#include "rlfd/orientation_dmp.hpp"
#include "rlfd/ppo.hpp"
#include "rlfd/residual.hpp"
#include "rlfd/sac.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rlfd {

enum class Controller { None, Random, Linear, Ppo, Sac };

std::string to_string(Controller controller);
Controller parse_controller(const std::string& name);

/// Residual: base plus correction.  Hybrid: base until the gate, then the learned policy alone.
/// PureRl: the learned policy from the first step, no base.
enum class ControlMode { Residual, Hybrid, PureRl };

std::string to_string(ControlMode mode);

struct HarnessSettings {
    int seeds = 3;
    int eval_episodes = 100;
    int budget = 2000;          // training episodes for learned residual conditions
    int sac_budget = 600;
    int pure_rl_budget = 6000;
    int transfer_updates = 3;
    double gate = 0.5;            // episode fraction before a task-space residual activates
    double residual_speed = 0.01; // m/s, task-space residual bound per axis
    double rotation_bound = 0.15; // rad
    double pure_speed = 0.05;     // m/s, velocity bound of the pure and hybrid policies
    double parameter_scale = 0.01;  // m, goal-equivalent shift of a parameter-space perturbation
    int parameter_groups = 4;
    double linear_gain = 1.0;     // 1/s
    std::vector<int> hidden{64, 64};
    Activation activation = Activation::Tanh;
    PpoConfig ppo;
    SacConfig sac = [] {
        SacConfig c;
        c.lr = 1e-3;
        c.batch = 64;
        return c;
    }();
    bool equalize_rewards = false;  // false mirrors the mixed rewards of the locus table
    int bins = 8;
    int curve_window = 100;
    int threads = 0;  // 0 = hardware concurrency
};

/// Applies flat `key = value` overrides.  Throws InvalidArgument on unknown keys or bad values.
void apply_setting(HarnessSettings& settings, const std::string& key, const std::string& value);
void apply_config(HarnessSettings& settings, const std::map<std::string, std::string>& values);
std::map<std::string, std::string> read_flat_config(const std::string& path);

struct ConditionSpec {
    std::string label;
    ControlMode mode = ControlMode::Residual;
    ExplorationLocus locus = ExplorationLocus::TaskSpace;
    Controller translation = Controller::None;
    Controller rotation = Controller::None;
    RewardSpec reward;
    double gate = 0.5;
    int budget = 0;

    bool learned() const { return translation == Controller::Ppo || translation == Controller::Sac; }
};

void validate(const ConditionSpec& spec);

/// Minimum-jerk approach from the start-distribution center to just above the nominal hole,
/// then a vertical descent to the nominal hole bottom.
Trajectory synthesize_demo(const EnvConfig& env, double dt = 0.01);

struct BasePolicy {
    Trajectory demo;
    DmpParams position;
    OrientationDmpParams orientation;
};

BasePolicy make_base_policy(const EnvConfig& env, int n_basis = 40);

struct Agent {
    ConditionSpec spec;
    int action_dim = 0;
    Eigen::VectorXd bound;  // per action dimension
    ActionBounds bounds;    // residual bounds for random and linear controllers
    double linear_gain = 1.0;
    std::optional<PpoLearner> ppo;
    std::optional<SacLearner> sac;
    std::optional<LinearPolicyState> linear;
    std::vector<EpisodeRecord> pending;
    long episodes = 0;
    int updates = 0;
    int aborted_updates = 0;
};

Agent make_agent(const ConditionSpec& spec, const EnvConfig& env, const BasePolicy& base,
                 const HarnessSettings& settings, std::mt19937_64& rng);

struct EpisodeRollout {
    EpisodeRecord record;
    Eigen::Vector3d start = Eigen::Vector3d::Zero();
    double start_angle = 0.0;  // rad from the demo orientation
    double env_return = 0.0;   // every reward of the episode, including steps before the first decision
    std::vector<Eigen::Vector3d> positions;  // filled only when tracing
};

/// One episode.  `deterministic` uses the policy mean; the linear controller adapts online in
/// either case.
EpisodeRollout run_episode(Agent& agent, const EnvConfig& env, const BasePolicy& base, std::mt19937_64& env_rng,
                           std::mt19937_64& action_rng, bool deterministic, bool trace = false);

struct CurvePoint {
    int episodes = 0;
    double success = 0.0;  // trailing-window means over training episodes
    double episode_return = 0.0;
    double peak_force = 0.0;
};

struct TrainResult {
    int episodes = 0;
    int updates = 0;
    std::vector<CurvePoint> curve;
};

/// First training-episode count at which the trailing success reaches `threshold`, or -1.
int episodes_to_reach(const std::vector<CurvePoint>& curve, double threshold);

/// Trains for up to `budget` episodes (and at most `max_updates` learner updates when >= 0).
TrainResult train_agent(Agent& agent, const EnvConfig& env, const BasePolicy& base, int budget, std::uint64_t seed,
                        const HarnessSettings& settings, int max_updates = -1);

struct EvalResult {
    double success = 0.0;
    double insertion_time = 0.0;
    double peak_force = 0.0;
    double mean_force = 0.0;
    int broken = 0;
    std::vector<int> bin_success;
    std::vector<int> bin_count;
};

/// Deterministic evaluation on `n` start poses drawn from a stream disjoint from training.
/// Orientation bins split [0, max start orientation] evenly.
EvalResult evaluate_agent(const Agent& agent, const EnvConfig& env, const BasePolicy& base, int n,
                          std::uint64_t seed, int bins = 8);

struct ResultRow {
    std::string condition;
    std::string task;
    std::string reward;
    long eff = -1;  // training episodes; -1 when untrained
    std::vector<double> seed_success;  // percent
    double success = 0.0;  // mean percent
    double stderr_ = 0.0;  // over seeds
    double insertion_time = 0.0;
    double peak_force = 0.0;
    double mean_force = 0.0;
};

struct ResultTable {
    std::string experiment;
    std::vector<ResultRow> rows;

    const ResultRow* find(const std::string& condition, const std::string& task) const;
};

struct TrainingCurve {
    std::string experiment;
    std::string condition;
    std::string task;
    std::uint64_t seed = 0;
    std::vector<CurvePoint> points;
};

struct BinRow {
    std::string experiment;
    std::string condition;
    std::string task;
    int bin = 0;
    double lo_deg = 0.0;
    double hi_deg = 0.0;
    int successes = 0;
    int count = 0;
};

struct ExperimentOutput {
    std::vector<ResultTable> tables;
    std::vector<TrainingCurve> curves;
    std::vector<BinRow> bins;
};

ExperimentOutput run_locus_comparison(const HarnessSettings& settings, std::uint64_t seed);
ExperimentOutput run_strategy_comparison(const HarnessSettings& settings, std::uint64_t seed);
ExperimentOutput run_ablation(const HarnessSettings& settings, std::uint64_t seed);
ExperimentOutput run_fullpose_comparison(const HarnessSettings& settings, std::uint64_t seed);
/// One direction: full-pose residual trained on `source` and fine-tuned on `target`.
ExperimentOutput run_transfer(const HarnessSettings& settings, std::uint64_t seed, const std::string& source = "gear",
                              const std::string& target = "rj45");
/// Both directions between gear and rj45 plus an average row per condition.
ExperimentOutput run_transfer_both(const HarnessSettings& settings, std::uint64_t seed);

/// Runs an experiment by name: locus | strategy | ablation | fullpose | transfer.
ExperimentOutput run_experiment(const std::string& name, const HarnessSettings& settings, std::uint64_t seed);

/// Writes <experiment>_<seed>.csv per table, <experiment>_curves_<seed>.csv,
/// <experiment>_bins_<seed>.csv and report_<seed>.md.  Returns the written paths.
std::vector<std::string> emit_outputs(const ExperimentOutput& output, const std::string& out_dir, std::uint64_t seed);

std::string table_csv(const ResultTable& table);
std::string report_markdown(const ExperimentOutput& output);

/// Exploration-contrast variants on the spiral: A unperturbed, B task space, C parameter space,
/// D coupling term, all at matched noise power.  Writes spiral_<variant>_<seed>.csv and returns
/// the per-variant max step jerk.
std::map<std::string, double> emit_spiral_variants(const std::string& out_dir, std::uint64_t seed);

}  // namespace rlfd
