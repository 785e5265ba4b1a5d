// v2xsim: train, evaluate and study the vehicular RRM agent from the shell.

#include <v2x/v2x.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace v2x;

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string profile = "desk";
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config_path, "JSON experiment config")->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "master seed");
    app->add_option("--out", c.out_dir, "output directory");
    app->add_option("--profile", c.profile, "built-in profile used as the base config")
        ->check(CLI::IsMember({"desk", "paper"}));
}

ExperimentConfig resolve(const Common& c, fs::path& out) {
    ExperimentConfig cfg;
    if (!c.config_path.empty()) {
        std::ifstream in(c.config_path);
        auto j = nlohmann::json::parse(in);
        if (!j.contains("profile")) j["profile"] = c.profile;
        cfg = config_from_json(j);
    } else {
        cfg = profile_by_name(c.profile);
    }
    if (!c.out_dir.empty()) cfg.output_dir = c.out_dir;
    out = cfg.output_dir;
    fs::create_directories(out);
    return cfg;
}

std::uint64_t first_seed(const Common& c, const ExperimentConfig& cfg) {
    if (c.seed) return *c.seed;
    return cfg.seeds.front();
}

void write_config(const fs::path& dir, const ExperimentConfig& cfg) {
    std::ofstream(dir / "config.json", std::ios::binary) << serialize_config(cfg) << '\n';
}

int cmd_train(const Common& c, long epochs, long checkpoint_every) {
    fs::path out;
    auto cfg = resolve(c, out);
    if (epochs >= 0) cfg.train_epochs = epochs;
    const auto seed = first_seed(c, cfg);
    cfg.seeds = {seed};
    validate_config(cfg);
    write_config(out, cfg);

    TrainingHooks hooks;
    hooks.checkpoint_every = checkpoint_every;
    hooks.on_checkpoint = [&](long epoch, const NetParams& p) {
        std::ofstream f(out / ("checkpoint_" + std::to_string(epoch) + ".bin"), std::ios::binary);
        save_checkpoint(f, p);
    };
    const auto result = run_training(cfg.env, cfg.agent, cfg.train_epochs, seed, hooks);
    {
        std::ofstream f(out / "checkpoint.bin", std::ios::binary);
        save_checkpoint(f, result.params);
    }
    {
        std::ofstream f(out / "metrics.csv", std::ios::binary);
        write_metrics_csv(f, result.metrics);
    }
    std::cout << "trained " << cfg.train_epochs << " epochs (seed " << seed << ", " << result.target_resets
              << " target resets) -> " << (out / "checkpoint.bin").string() << '\n';
    return 0;
}

int cmd_evaluate(const Common& c, const std::string& policy_name, const std::string& checkpoint, long epochs,
                 bool trajectory) {
    fs::path out;
    auto cfg = resolve(c, out);
    if (epochs > 0) cfg.eval_epochs = epochs;
    const auto seed = first_seed(c, cfg);
    cfg.seeds = {seed};
    validate_config(cfg);

    std::unique_ptr<Policy> policy;
    if (policy_name == "lstm_drl") {
        if (checkpoint.empty()) throw ValidationError("--checkpoint is required for lstm_drl");
        std::ifstream f(checkpoint, std::ios::binary);
        if (!f) throw ValidationError("cannot open checkpoint " + checkpoint);
        policy = std::make_unique<DrlPolicy>(cfg.env, cfg.agent, load_checkpoint(f), 0.0);
    } else {
        policy = make_baseline(policy_name);
    }

    Environment env(cfg.env, eval_env_seed(seed));
    Rng rng = eval_rng(seed);
    std::ofstream traj;
    if (trajectory) traj.open(out / "trajectory.csv", std::ios::binary);
    const auto s = evaluate_policy(*policy, env, cfg.eval_epochs, cfg.env.weights.discount, rng,
                                   trajectory ? &traj : nullptr);
    double disc = 0.0;
    for (double d : s.discounted_cost) disc += d / static_cast<double>(s.discounted_cost.size());

    std::ofstream f(out / "evaluation.csv", std::ios::binary);
    write_csv_row(f, {"policy", "seed", "epochs", "avg_cost", "avg_delay_epochs", "avg_power_w", "avg_queue",
                      "discounted_cost", "truncation_bound", "config_hash", "build_id"});
    write_csv_row(f, {policy->name(), std::to_string(seed), std::to_string(s.epochs), fmt_num(s.avg_cost),
                      fmt_num(s.avg_delay_epochs), fmt_num(s.avg_power_w), fmt_num(s.avg_queue), fmt_num(disc),
                      fmt_num(s.truncation_bound), config_hash(cfg), build_id()});
    std::cout << policy->name() << " avg_cost=" << fmt_num(s.avg_cost) << " avg_delay_epochs="
              << fmt_num(s.avg_delay_epochs) << " avg_power_w=" << fmt_num(s.avg_power_w) << '\n';
    return 0;
}

int cmd_sweep(const Common& c, const std::string& axis, const std::vector<double>& values,
              const std::vector<std::string>& policies, long epochs, long eval_epochs, int seeds) {
    fs::path out;
    auto cfg = resolve(c, out);
    if (!axis.empty()) {
        cfg.axis = axis == "K" ? SweepAxis::Pairs
                 : axis == "lambda" ? SweepAxis::ArrivalRate
                 : axis == "phi" ? SweepAxis::Distance
                 : SweepAxis::None;
    }
    if (!values.empty()) cfg.sweep_values = values;
    if (!policies.empty()) cfg.policies = policies;
    if (epochs >= 0) cfg.train_epochs = epochs;
    if (eval_epochs > 0) cfg.eval_epochs = eval_epochs;
    if (seeds > 0 || c.seed) {
        const std::size_t n = seeds > 0 ? static_cast<std::size_t>(seeds) : cfg.seeds.size();
        const std::uint64_t base = c.seed ? *c.seed : cfg.seeds.front();
        cfg.seeds.clear();
        for (std::size_t i = 0; i < n; ++i) cfg.seeds.push_back(base + i);
    }
    validate_config(cfg);
    write_config(out, cfg);

    const auto res = run_experiment(cfg, &std::cerr);
    res.results.save(out / "results.csv");
    res.summary.save(out / "summary.csv");
    emit_plot_data(res.results, res.loss.rows.empty() ? nullptr : &res.loss, out);
    res.summary.write(std::cout);
    return 0;
}

int cmd_oracle(const Common& c, long episodes) {
    fs::path out;
    auto cfg = resolve(c, out);
    if (episodes > 0) cfg.oracle.sarsa.episodes = episodes;
    const auto seed = first_seed(c, cfg);
    validate_config(cfg);

    const auto tiny = build_tiny_mdp(cfg.oracle.network);
    const double gamma = cfg.oracle.network.weights.discount;
    const auto exact = value_iteration(tiny.mdp, gamma);
    Rng rng = make_rng(seed, 0x5A25A);
    const auto learned = tabular_sarsa(tiny.mdp, gamma, cfg.oracle.sarsa, rng);

    std::ofstream f(out / "oracle.csv", std::ios::binary);
    write_csv_row(f, {"state", "action", "q_value_iteration", "q_sarsa", "abs_diff", "visits"});
    for (int s = 0; s < tiny.mdp.states; ++s) {
        for (int a = 0; a < tiny.mdp.action_count(s); ++a) {
            const auto su = static_cast<std::size_t>(s), au = static_cast<std::size_t>(a);
            write_csv_row(f, {std::to_string(s), std::to_string(a), fmt_num(exact[su][au]), fmt_num(learned.q[su][au]),
                              fmt_num(std::abs(exact[su][au] - learned.q[su][au])),
                              std::to_string(learned.visits[su][au])});
        }
    }
    const double sup = sup_distance(exact, learned.q);
    std::cout << "states=" << tiny.mdp.states << " episodes=" << cfg.oracle.sarsa.episodes
              << " sup_norm=" << fmt_num(sup) << '\n';
    return 0;
}

int cmd_gradcheck(const Common& c, int hidden, int steps, int input, int experiences, int pairs) {
    fs::path out;
    auto cfg = resolve(c, out);
    const auto seed = first_seed(c, cfg);

    NetArchitecture arch;
    arch.input_dim = input;
    arch.sequence_length = steps;
    arch.lstm_hidden = hidden;
    arch.dense = {hidden, hidden};
    arch.output_dim = action_count(cfg.env.channels, cfg.env.max_packets);
    Rng rng = make_rng(seed, 0x6AD);
    const auto [params, batch] = random_audit_problem(arch, experiences, pairs, rng);

    std::ofstream f(out / "gradcheck.csv", std::ios::binary);
    write_csv_row(f, {"loss_mode", "tensor", "count", "max_abs_error", "max_rel_error"});
    double worst = 0.0;
    for (auto mode : {LossMode::SummedTd, LossMode::PerPair}) {
        const auto audit = audit_gradient(params, batch, mode);
        const std::string m = mode == LossMode::SummedTd ? "summed_td" : "per_pair";
        for (const auto& t : audit.tensors) {
            write_csv_row(f, {m, t.name, std::to_string(t.count), fmt_num(t.max_abs_error), fmt_num(t.max_rel_error)});
        }
        worst = std::max(worst, audit.max_rel_error);
    }
    std::cout << "parameters=" << params.parameter_count() << " max_rel_error=" << fmt_num(worst) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Vehicular radio resource management simulator and LSTM-DQN trainer"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(build_id()));

    Common common;

    auto* train = app.add_subcommand("train", "train the agent, write checkpoint.bin and metrics.csv");
    add_common(train, common);
    long train_epochs = -1, checkpoint_every = 0;
    train->add_option("--epochs", train_epochs, "training epochs (default: from config)");
    train->add_option("--checkpoint-every", checkpoint_every, "also write checkpoint_<epoch>.bin every N epochs");

    auto* evaluate = app.add_subcommand("evaluate", "roll out a checkpoint or baseline, write evaluation.csv");
    add_common(evaluate, common);
    std::string policy = "channel_aware", checkpoint;
    long eval_epochs = 0;
    bool trajectory = false;
    evaluate->add_option("--policy", policy, "lstm_drl, channel_aware, queue_aware or random")
        ->check(CLI::IsMember(known_policies()));
    evaluate->add_option("--checkpoint", checkpoint, "checkpoint for lstm_drl");
    evaluate->add_option("--epochs", eval_epochs, "evaluation horizon (default: from config)");
    evaluate->add_flag("--trajectory", trajectory, "also write trajectory.csv");

    auto* sweep = app.add_subcommand("sweep", "cost study over K, lambda or phi; writes results, summary and plot data");
    add_common(sweep, common);
    std::string axis;
    std::vector<double> values;
    std::vector<std::string> policies;
    long sweep_train = -1, sweep_eval = 0;
    int sweep_seeds = 0;
    sweep->add_option("--axis", axis, "sweep axis")->check(CLI::IsMember({"none", "K", "lambda", "phi"}));
    sweep->add_option("--values", values, "axis values")->delimiter(',');
    sweep->add_option("--policies", policies, "policies to compare")->delimiter(',')->check(CLI::IsMember(known_policies()));
    sweep->add_option("--epochs", sweep_train, "training epochs for lstm_drl");
    sweep->add_option("--eval-epochs", sweep_eval, "evaluation horizon");
    sweep->add_option("--seeds", sweep_seeds, "number of consecutive seeds starting at --seed");

    auto* oracle = app.add_subcommand("oracle", "tabular SARSA against value iteration on the tiny network");
    add_common(oracle, common);
    long episodes = 0;
    oracle->add_option("--episodes", episodes, "SARSA episodes (default: from config)");

    auto* grad = app.add_subcommand("gradcheck", "finite-difference audit of the network gradient");
    add_common(grad, common);
    int hidden = 8, steps = 3, input = 6, experiences = 4, pairs = 2;
    grad->add_option("--hidden", hidden, "LSTM width");
    grad->add_option("--steps", steps, "sequence length");
    grad->add_option("--input", input, "input width");
    grad->add_option("--experiences", experiences, "experiences in the batch");
    grad->add_option("--pairs", pairs, "samples per experience");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(common, train_epochs, checkpoint_every);
        if (*evaluate) return cmd_evaluate(common, policy, checkpoint, eval_epochs, trajectory);
        if (*sweep) return cmd_sweep(common, axis, values, policies, sweep_train, sweep_eval, sweep_seeds);
        if (*oracle) return cmd_oracle(common, episodes);
        if (*grad) return cmd_gradcheck(common, hidden, steps, input, experiences, pairs);
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: malformed config: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
