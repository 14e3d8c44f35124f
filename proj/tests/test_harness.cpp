#include "rlfd/errors.hpp"
#include "rlfd/harness.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace rlfd;

namespace {

std::string temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("rlfd_test_" + name);
    std::filesystem::remove_all(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

// Easy task with the hole exactly at the nominal demo goal and a fixed start.
EnvConfig solved_easy() {
    EnvConfig c = make_task("easy");
    c.geometry.hole_offset = Eigen::Vector2d::Zero();
    c.geometry.hole_jitter = 0.0;
    c.start.radius = 0.0;
    return c;
}

ConditionSpec spec(ControlMode mode, ExplorationLocus locus, Controller tr, Controller rot = Controller::None) {
    ConditionSpec s;
    s.label = "t";
    s.mode = mode;
    s.locus = locus;
    s.translation = tr;
    s.rotation = rot;
    s.budget = 20;
    return s;
}

void zero_mean_head(Agent& a) {
    GaussianPolicy& p = a.ppo->policy;
    p.net.weights.back().setZero();
    p.net.biases.back().setZero();
}

HarnessSettings tiny() {
    HarnessSettings s;
    s.seeds = 1;
    s.eval_episodes = 4;
    s.budget = 20;
    s.sac_budget = 3;
    s.pure_rl_budget = 20;
    s.hidden = {8};
    s.threads = 1;
    return s;
}

}  // namespace

TEST_CASE("settings accept known keys and reject the rest") {
    HarnessSettings s;
    apply_setting(s, "episodes", "123");
    CHECK(s.budget == 123);
    apply_setting(s, "hidden", "32, 16");
    CHECK(s.hidden == std::vector<int>{32, 16});
    apply_setting(s, "ppo.lr", "0.001");
    CHECK(s.ppo.lr == 0.001);
    apply_setting(s, "sac.batch", "32");
    CHECK(s.sac.batch == 32);
    CHECK_THROWS_AS(apply_setting(s, "nonsense", "1"), InvalidArgument);
    CHECK_THROWS_AS(apply_setting(s, "gate", "1.5"), InvalidArgument);
    CHECK_THROWS_AS(apply_setting(s, "seeds", "0"), InvalidArgument);
    CHECK_THROWS_AS(apply_setting(s, "budget", "many"), InvalidArgument);
    CHECK_THROWS_AS(parse_controller("oracle"), InvalidArgument);
    CHECK(parse_controller("ppo") == Controller::Ppo);
}

TEST_CASE("flat config reads sections, comments and quotes") {
    const std::string dir = temp_dir("config");
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/c.toml";
    {
        std::ofstream f(path);
        f << "# header\nseeds = 2\nhidden = [16, 16]  # inline\n\n[ppo]\nlr = 0.002\n[sac]\nbatch = \"48\"\n";
    }
    const auto kv = read_flat_config(path);
    CHECK(kv.at("seeds") == "2");
    CHECK(kv.at("hidden") == "16, 16");
    CHECK(kv.at("ppo.lr") == "0.002");
    CHECK(kv.at("sac.batch") == "48");
    HarnessSettings s;
    apply_config(s, kv);
    CHECK(s.seeds == 2);
    CHECK(s.ppo.lr == 0.002);
    CHECK(s.sac.batch == 48);

    CHECK_THROWS_AS(read_flat_config(dir + "/missing.toml"), IoError);
    {
        std::ofstream f(path);
        f << "seeds 2\n";
    }
    CHECK_THROWS_AS(read_flat_config(path), InvalidArgument);
}

TEST_CASE("condition validation") {
    const auto ts = ExplorationLocus::TaskSpace;
    CHECK_NOTHROW(validate(spec(ControlMode::Residual, ts, Controller::Ppo, Controller::Ppo)));
    CHECK_NOTHROW(validate(spec(ControlMode::Residual, ts, Controller::Linear, Controller::Random)));
    CHECK_THROWS_AS(validate(spec(ControlMode::Residual, ts, Controller::Random, Controller::Ppo)), InvalidArgument);
    CHECK_THROWS_AS(validate(spec(ControlMode::Residual, ts, Controller::Ppo, Controller::Linear)), InvalidArgument);
    CHECK_THROWS_AS(validate(spec(ControlMode::Hybrid, ts, Controller::Random)), InvalidArgument);
    CHECK_THROWS_AS(validate(spec(ControlMode::Residual, ExplorationLocus::None, Controller::Ppo)), InvalidArgument);
    CHECK_THROWS_AS(validate(spec(ControlMode::Residual, ExplorationLocus::ParameterSpace, Controller::Ppo,
                                  Controller::Ppo)),
                    InvalidArgument);
    ConditionSpec bad = spec(ControlMode::Residual, ts, Controller::Ppo);
    bad.gate = -0.1;
    CHECK_THROWS_AS(validate(bad), InvalidArgument);
}

TEST_CASE("demo runs from the start center to the nominal hole bottom") {
    const EnvConfig env = make_task("peg");
    const Trajectory d = synthesize_demo(env);
    CHECK(d.samples() == 401);
    CHECK(d.duration() == doctest::Approx(4.0));
    CHECK((d.position.row(0).transpose() - env.start.center).norm() < 1e-12);
    CHECK((d.position.row(250).transpose() - Eigen::Vector3d(0, 0, 0.01)).norm() < 1e-12);
    CHECK((d.position.row(400).transpose() - Eigen::Vector3d(0, 0, -env.geometry.depth)).norm() < 1e-12);
    CHECK(d.velocity.row(400).norm() < 1e-12);
}

TEST_CASE("the bare DMP inserts when the hole sits at the nominal goal") {
    const EnvConfig env = solved_easy();
    const BasePolicy base = make_base_policy(env);
    std::mt19937_64 init(1);
    Agent a = make_agent(spec(ControlMode::Residual, ExplorationLocus::None, Controller::None), env, base, tiny(), init);
    std::mt19937_64 er(2), ar(3);
    const EpisodeRollout r = run_episode(a, env, base, er, ar, true);
    CHECK(r.record.success);
    CHECK(r.record.insertion_time < env.episode_length);
}

TEST_CASE("a zero task-space residual reproduces the bare DMP") {
    const EnvConfig env = make_task("easy");
    const BasePolicy base = make_base_policy(env);
    const HarnessSettings s = tiny();
    std::mt19937_64 init(4);
    Agent none = make_agent(spec(ControlMode::Residual, ExplorationLocus::None, Controller::None), env, base, s, init);
    Agent ppo = make_agent(spec(ControlMode::Residual, ExplorationLocus::TaskSpace, Controller::Ppo), env, base, s, init);
    zero_mean_head(ppo);
    std::mt19937_64 e1(5), e2(5), a1(6), a2(7);
    const EpisodeRollout r1 = run_episode(none, env, base, e1, a1, true, true);
    const EpisodeRollout r2 = run_episode(ppo, env, base, e2, a2, true, true);
    REQUIRE(r1.positions.size() == r2.positions.size());
    for (std::size_t i = 0; i < r1.positions.size(); ++i) CHECK((r1.positions[i] - r2.positions[i]).norm() < 1e-12);
    // decisions every 10 steps after the half-episode gate
    CHECK(r2.record.steps() == static_cast<int>((r2.positions.size() - 500 + 9) / 10));
}

TEST_CASE("hybrid mode hands control to the policy at the gate") {
    EnvConfig env = make_task("easy");
    env.start.radius = 0.0;
    const BasePolicy base = make_base_policy(env);
    std::mt19937_64 init(8);
    ConditionSpec c = spec(ControlMode::Hybrid, ExplorationLocus::TaskSpace, Controller::Ppo);
    Agent a = make_agent(c, env, base, tiny(), init);
    zero_mean_head(a);
    std::mt19937_64 er(9), ar(10);
    const EpisodeRollout r = run_episode(a, env, base, er, ar, true, true);
    // the policy commands zero velocity, so nothing moves once the base is switched off
    REQUIRE(r.positions.size() == 1000);
    for (std::size_t i = 500; i < r.positions.size(); ++i) CHECK((r.positions[i] - r.positions[499]).norm() < 1e-12);
    CHECK((r.positions[499] - r.positions[100]).norm() > 0.01);
}

TEST_CASE("pure RL moves only under the policy") {
    EnvConfig env = make_task("easy");
    const BasePolicy base = make_base_policy(env);
    std::mt19937_64 init(11);
    Agent a = make_agent(spec(ControlMode::PureRl, ExplorationLocus::TaskSpace, Controller::Ppo), env, base, tiny(),
                         init);
    zero_mean_head(a);
    std::mt19937_64 er(12), ar(13);
    const EpisodeRollout r = run_episode(a, env, base, er, ar, true, true);
    CHECK((r.positions.back() - r.start).norm() < 1e-12);
    CHECK(r.record.steps() == 100);
}

TEST_CASE("transfer budget: three updates are exactly sixty episodes") {
    const EnvConfig env = make_task("gear");
    const BasePolicy base = make_base_policy(env);
    HarnessSettings s = tiny();
    std::mt19937_64 init(14);
    Agent a = make_agent(spec(ControlMode::Residual, ExplorationLocus::TaskSpace, Controller::Ppo, Controller::Ppo),
                         env, base, s, init);
    const TrainResult r = train_agent(a, env, base, 1000, 1, s, 3);
    CHECK(r.updates == 3);
    CHECK(r.episodes == 60);
    CHECK(a.episodes == 60);
}

TEST_CASE("evaluation is deterministic and leaves the agent untouched") {
    const EnvConfig env = make_task("easy");
    const BasePolicy base = make_base_policy(env);
    const HarnessSettings s = tiny();
    std::mt19937_64 init(15);
    Agent a = make_agent(spec(ControlMode::Residual, ExplorationLocus::TaskSpace, Controller::Linear), env, base, s,
                         init);
    const Eigen::MatrixXd w = a.linear->weights;
    const EvalResult e1 = evaluate_agent(a, env, base, 6, 3);
    const EvalResult e2 = evaluate_agent(a, env, base, 6, 3);
    CHECK(e1.success == e2.success);
    CHECK(e1.peak_force == e2.peak_force);
    CHECK(a.linear->weights == w);
    CHECK(a.episodes == 0);
    int total = 0;
    for (int c : e1.bin_count) total += c;
    CHECK(total == 6);
    CHECK_THROWS_AS(evaluate_agent(a, env, base, 0, 3), InvalidArgument);
}

TEST_CASE("episodes_to_reach returns the first crossing") {
    const std::vector<CurvePoint> c{{20, 0.1}, {40, 0.65}, {60, 0.5}, {80, 0.9}};
    CHECK(episodes_to_reach(c, 0.6) == 40);
    CHECK(episodes_to_reach(c, 0.9) == 80);
    CHECK(episodes_to_reach(c, 0.95) == -1);
}

TEST_CASE("outputs: empty report, unwritable directory, csv layout") {
    const std::string dir = temp_dir("emit");
    const auto paths = emit_outputs(ExperimentOutput{}, dir, 7);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].ends_with("report_empty_7.md"));
    CHECK(slurp(paths[0]).find("no data") != std::string::npos);

    const std::string blocker = dir + "/file";
    std::ofstream(blocker) << "x";
    CHECK_THROWS_AS(emit_outputs(ExperimentOutput{}, blocker + "/sub", 7), IoError);

    ResultTable t;
    t.experiment = "demo";
    ResultRow r;
    r.condition = "PPO";
    r.task = "easy";
    r.reward = "sparse";
    r.eff = 20;
    r.seed_success = {50.0, 100.0};
    r.success = 75.0;
    t.rows.push_back(r);
    const std::string csv = table_csv(t);
    CHECK(csv.find("demo,PPO,easy,sparse,20,75.00,") != std::string::npos);
    CHECK(csv.find("50.00;100.00") != std::string::npos);
    CHECK(t.find("PPO", "easy") != nullptr);
    CHECK(t.find("PPO", "hard") == nullptr);
}

TEST_CASE("spiral variants: task-space noise is jerky, the others stay smooth") {
    const std::string dir = temp_dir("spiral");
    const auto jerk = emit_spiral_variants(dir, 1);
    REQUIRE(jerk.size() == 4);
    for (const std::string v : {"A", "B", "C", "D"}) CHECK(std::filesystem::exists(dir + "/spiral_" + v + "_1.csv"));
    CHECK(jerk.at("B") > 3.0 * jerk.at("A"));
    CHECK(jerk.at("C") < 1.5 * jerk.at("A"));
    CHECK(jerk.at("D") < 1.5 * jerk.at("A"));
    const auto again = emit_spiral_variants(dir, 1);
    CHECK(again == jerk);
}

TEST_CASE("experiments are byte-identical across reruns and thread counts") {
    HarnessSettings s = tiny();
    const ExperimentOutput a = run_experiment("strategy", s, 5);
    s.threads = 2;
    const ExperimentOutput b = run_experiment("strategy", s, 5);
    REQUIRE(a.tables.size() == 1);
    CHECK(table_csv(a.tables[0]) == table_csv(b.tables[0]));
    CHECK(report_markdown(a) == report_markdown(b));
    CHECK(a.tables[0].rows.size() == 15);  // 5 conditions x (easy, hard, average)
    CHECK_THROWS_AS(run_experiment("nope", s, 5), InvalidArgument);
}
