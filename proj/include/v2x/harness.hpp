#pragma once

// Experiment orchestration: sweeps over K, lambda or phi, per-seed training and
// evaluation, aggregation and figure-ready CSV files.

#include <v2x/config.hpp>
#include <v2x/csv.hpp>
#include <v2x/drl.hpp>
#include <v2x/env.hpp>
#include <v2x/errors.hpp>
#include <v2x/policies.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace v2x {

/// A small string table with a header row.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }

    void write(std::ostream& os) const {
        write_csv_row(os, header);
        for (const auto& r : rows) write_csv_row(os, r);
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot write " + path.string());
        write(out);
    }
};

struct ExperimentResults {
    Table results;  // one row per (policy, value, seed)
    Table summary;  // mean and sample std over seeds
    Table loss;     // seed, value, epoch, loss for every trained agent
};

inline EnvConfig apply_axis(EnvConfig env, SweepAxis axis, double value) {
    switch (axis) {
        case SweepAxis::Pairs: env.pairs = static_cast<int>(value); break;
        case SweepAxis::ArrivalRate: env.weights.arrival_rate = value; break;
        case SweepAxis::Distance: env.following_distance = value; break;
        case SweepAxis::None: break;
    }
    return env;
}

inline std::unique_ptr<Policy> make_baseline(const std::string& name) {
    if (name == "channel_aware") return std::make_unique<BaselinePolicy>(BaselineKind::ChannelAware);
    if (name == "queue_aware") return std::make_unique<BaselinePolicy>(BaselineKind::QueueAware);
    if (name == "random") return std::make_unique<BaselinePolicy>(BaselineKind::Random);
    throw ValidationError("'" + name + "' is not a baseline policy");
}

/// Every policy sees the same evaluation environment for a given seed.
inline std::uint64_t eval_env_seed(std::uint64_t seed) { return derive_seed(seed, 0xE7A1); }
inline Rng eval_rng(std::uint64_t seed) { return make_rng(seed, 0xE7A2); }

inline RolloutSummary evaluate_named(Policy& policy, const EnvConfig& env_cfg, long horizon, std::uint64_t seed) {
    Environment env(env_cfg, eval_env_seed(seed));
    Rng rng = eval_rng(seed);
    return evaluate_policy(policy, env, horizon, env_cfg.weights.discount, rng);
}

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& x) {
    if (x.empty()) return {0.0, 0.0};
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    if (x.size() < 2) return {m, 0.0};
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return {m, std::sqrt(s / static_cast<double>(x.size() - 1))};
}

inline std::vector<double> axis_values(const ExperimentConfig& cfg) {
    if (cfg.axis == SweepAxis::None) return {0.0};
    return cfg.sweep_values;
}

}  // namespace detail

inline const std::vector<std::string>& result_columns() {
    static const std::vector<std::string> cols = {"policy",      "axis",          "value",      "seed",
                                                  "avg_cost",    "avg_delay_epochs", "avg_power_w", "config_hash",
                                                  "build_id"};
    return cols;
}

/// Aggregates a long-form results table over seeds, grouped by (policy, axis,
/// value) in order of first appearance.
inline Table summarize(const Table& results) {
    const int c_pol = results.column("policy"), c_axis = results.column("axis"), c_val = results.column("value"),
              c_seed = results.column("seed"), c_cost = results.column("avg_cost");
    if (c_pol < 0 || c_axis < 0 || c_val < 0 || c_seed < 0 || c_cost < 0)
        throw SchemaError("results need policy, axis, value, seed and avg_cost columns");
    const int c_delay = results.column("avg_delay_epochs"), c_power = results.column("avg_power_w");

    struct Acc {
        std::vector<std::string> key;
        std::vector<double> cost, delay, power;
    };
    std::vector<Acc> groups;
    std::map<std::vector<std::string>, std::size_t> index;
    for (const auto& r : results.rows) {
        std::vector<std::string> key = {r.at(static_cast<std::size_t>(c_pol)), r.at(static_cast<std::size_t>(c_axis)),
                                        r.at(static_cast<std::size_t>(c_val))};
        auto [it, fresh] = index.emplace(key, groups.size());
        if (fresh) groups.push_back({key, {}, {}, {}});
        auto& g = groups[it->second];
        g.cost.push_back(std::stod(r.at(static_cast<std::size_t>(c_cost))));
        if (c_delay >= 0) g.delay.push_back(std::stod(r.at(static_cast<std::size_t>(c_delay))));
        if (c_power >= 0) g.power.push_back(std::stod(r.at(static_cast<std::size_t>(c_power))));
    }

    Table out;
    out.header = {"policy",         "axis",         "value",          "seeds",         "mean_avg_cost",
                  "std_avg_cost",   "mean_avg_delay_epochs", "std_avg_delay_epochs", "mean_avg_power_w",
                  "std_avg_power_w"};
    for (const auto& g : groups) {
        const auto [cm, cs] = detail::mean_std(g.cost);
        const auto [dm, ds] = detail::mean_std(g.delay);
        const auto [pm, ps] = detail::mean_std(g.power);
        out.rows.push_back({g.key[0], g.key[1], g.key[2], std::to_string(g.cost.size()), fmt_num(cm), fmt_num(cs),
                            fmt_num(dm), fmt_num(ds), fmt_num(pm), fmt_num(ps)});
    }
    return out;
}

/// Runs every (sweep value, seed, policy) cell. The DRL policy is trained on
/// its own environment stream and then evaluated frozen with epsilon = 0.
inline ExperimentResults run_experiment(const ExperimentConfig& cfg, std::ostream* progress = nullptr) {
    validate_config(cfg);
    const std::string hash = config_hash(cfg);
    const std::string axis = to_string(cfg.axis);

    ExperimentResults out;
    out.results.header = result_columns();
    out.loss.header = {"seed", "value", "epoch", "loss"};

    for (double value : detail::axis_values(cfg)) {
        const EnvConfig env_cfg = apply_axis(cfg.env, cfg.axis, value);
        {
            ExperimentConfig cell = cfg;
            cell.env = env_cfg;
            const auto v = config_violations(cell);
            if (!v.empty()) throw ValidationError("sweep value " + fmt_num(value) + " gives an invalid config: " + v.front());
        }
        for (std::uint64_t seed : cfg.seeds) {
            for (const auto& name : cfg.policies) {
                RolloutSummary s;
                if (name == "lstm_drl") {
                    auto trained = run_training(env_cfg, cfg.agent, cfg.train_epochs, seed);
                    for (const auto& m : trained.metrics) {
                        out.loss.rows.push_back({std::to_string(seed), fmt_num(value), std::to_string(m.epoch),
                                                 fmt_num(m.loss)});
                    }
                    DrlPolicy policy(env_cfg, cfg.agent, std::move(trained.params), 0.0);
                    s = evaluate_named(policy, env_cfg, cfg.eval_epochs, seed);
                } else {
                    auto policy = make_baseline(name);
                    s = evaluate_named(*policy, env_cfg, cfg.eval_epochs, seed);
                }
                out.results.rows.push_back({name, axis, fmt_num(value), std::to_string(seed), fmt_num(s.avg_cost),
                                            fmt_num(s.avg_delay_epochs), fmt_num(s.avg_power_w), hash, build_id()});
                if (progress) {
                    *progress << name << ' ' << axis << '=' << fmt_num(value) << " seed=" << seed
                              << " avg_cost=" << fmt_num(s.avg_cost) << '\n';
                }
            }
        }
    }
    out.summary = summarize(out.results);
    return out;
}

/// Figure-ready tables keyed by file name: loss against epoch and mean cost
/// against each swept axis.
inline std::vector<std::pair<std::string, Table>> plot_tables(const Table& results, const Table* loss = nullptr) {
    if (results.rows.empty()) throw SchemaError("results table is empty");
    const Table summary = summarize(results);
    std::vector<std::pair<std::string, Table>> files;

    if (loss) {
        const int c_seed = loss->column("seed"), c_epoch = loss->column("epoch"), c_loss = loss->column("loss");
        if (c_seed < 0 || c_epoch < 0 || c_loss < 0) throw SchemaError("loss stream needs seed, epoch and loss columns");
        const int c_val = loss->column("value");
        Table t;
        t.header = {"seed", "value", "epoch", "loss"};
        for (const auto& r : loss->rows) {
            t.rows.push_back({r.at(static_cast<std::size_t>(c_seed)), c_val >= 0 ? r.at(static_cast<std::size_t>(c_val)) : "0",
                              r.at(static_cast<std::size_t>(c_epoch)), r.at(static_cast<std::size_t>(c_loss))});
        }
        files.emplace_back("loss_vs_epoch.csv", std::move(t));
    }

    std::map<std::string, Table> by_axis;
    std::vector<std::string> order;
    for (const auto& r : summary.rows) {
        const std::string& axis = r[1];
        auto [it, fresh] = by_axis.try_emplace(axis);
        if (fresh) {
            order.push_back(axis);
            it->second.header = {"policy", axis == "none" ? "setting" : axis, "mean_avg_cost", "std_avg_cost", "seeds"};
        }
        it->second.rows.push_back({r[0], r[2], r[4], r[5], r[3]});
    }
    for (const auto& axis : order) {
        files.emplace_back(axis == "none" ? "cost_by_policy.csv" : "cost_vs_" + axis + ".csv", std::move(by_axis[axis]));
    }
    return files;
}

inline std::vector<std::filesystem::path> emit_plot_data(const Table& results, const Table* loss,
                                                         const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    for (const auto& [name, table] : plot_tables(results, loss)) {
        table.save(dir / name);
        written.push_back(dir / name);
    }
    return written;
}

}  // namespace v2x
