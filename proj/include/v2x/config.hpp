#pragma once

// Experiment configuration: JSON (de)serialisation, built-in profiles and
// validation.

#include <v2x/drl.hpp>
#include <v2x/env.hpp>
#include <v2x/errors.hpp>
#include <v2x/oracle.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace v2x {

inline constexpr int kConfigSchemaVersion = 1;

enum class SweepAxis { None, Pairs, ArrivalRate, Distance };

inline const char* to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::None: return "none";
        case SweepAxis::Pairs: return "K";
        case SweepAxis::ArrivalRate: return "lambda";
        case SweepAxis::Distance: return "phi";
    }
    return "?";
}

struct OracleConfig {
    TinyNetwork network;
    SarsaConfig sarsa;
};

struct ExperimentConfig {
    std::string profile = "desk";
    EnvConfig env;
    AgentConfig agent;
    SweepAxis axis = SweepAxis::None;
    std::vector<double> sweep_values;
    std::vector<std::string> policies = {"lstm_drl", "channel_aware", "queue_aware", "random"};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    long train_epochs = 20000;
    long eval_epochs = 2000;
    std::string output_dir = "out";
    OracleConfig oracle;
};

/// Full-scale settings: 36 pairs in 10 groups, full-size network and buffers.
inline ExperimentConfig paper_profile() {
    ExperimentConfig c;
    c.profile = "paper";
    c.env.pairs = 36;
    c.env.groups = 10;
    c.env.channels = 4;
    c.env.following_distance = 20.0;
    c.env.weights.arrival_rate = 1.0;
    c.agent = AgentConfig{};
    c.train_epochs = 40000;
    c.eval_epochs = 5000;
    return c;
}

/// Desk-scale settings that train in minutes on one core.
inline ExperimentConfig desk_profile() {
    ExperimentConfig c;
    c.profile = "desk";
    c.env.pairs = 8;
    c.env.channels = 2;
    c.env.groups = 2;
    c.env.weights.arrival_rate = 1.0;
    c.agent.pool_size = 4;
    c.agent.batch_size = 16;
    c.agent.lstm_hidden = 32;
    c.agent.dense = {32, 32};
    c.agent.replay_capacity = 5000;
    c.agent.learning_rate = 1e-3;
    c.agent.cost_scale = 0.01;
    c.train_epochs = 20000;
    c.eval_epochs = 2000;
    return c;
}

inline ExperimentConfig profile_by_name(const std::string& name) {
    if (name == "desk") return desk_profile();
    if (name == "paper") return paper_profile();
    throw ValidationError("unknown profile '" + name + "' (expected desk or paper)");
}

namespace detail {

inline double to_db(double linear) { return 10.0 * std::log10(linear); }

template <class E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> table, const char* what) {
    for (const auto& [name, value] : table)
        if (s == name) return value;
    throw ValidationError(std::string("unknown ") + what + " '" + s + "'");
}

inline const std::initializer_list<std::pair<const char*, BoundaryMode>> kBoundaryNames = {
    {"uturn", BoundaryMode::UTurn}, {"wrap", BoundaryMode::Wrap}};

inline std::string name_of(BoundaryMode m) { return m == BoundaryMode::UTurn ? "uturn" : "wrap"; }
inline std::string name_of(ArrivalModel m) { return m == ArrivalModel::Poisson ? "poisson" : "binomial"; }
inline std::string name_of(LossMode m) { return m == LossMode::SummedTd ? "summed_td" : "per_pair"; }

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline nlohmann::json to_json(const EnvConfig& e) {
    using nlohmann::json;
    return json{
        {"pairs", e.pairs},
        {"channels", e.channels},
        {"groups", e.groups},
        {"cluster_interval", e.cluster_interval},
        {"map", {{"side_length", e.map.side_length}, {"lane_width", e.map.lane_width},
                 {"intersections_per_axis", e.map.intersections_per_axis}}},
        {"mobility", {{"turn_straight", e.mobility.turns.straight}, {"turn_left", e.mobility.turns.left},
                      {"turn_right", e.mobility.turns.right}, {"boundary", detail::name_of(e.mobility.boundary)}}},
        {"speed_kmh", e.speed_mps * 3.6},
        {"following_distance", e.following_distance},
        {"path_loss", {{"rho_db", detail::to_db(e.path_loss.rho)}, {"xi_db", detail::to_db(e.path_loss.xi)},
                       {"exponent", e.path_loss.exponent}, {"phi0", e.path_loss.phi0}}},
        {"fading", to_string(e.fading)},
        {"budget", {{"bandwidth_hz", e.budget.bandwidth_hz}, {"noise_psd", e.budget.noise_psd},
                    {"interference_w", e.budget.interference_w}, {"packet_bits", e.budget.packet_bits},
                    {"epoch_s", e.budget.epoch_s}}},
        {"weights", {{"delay_weight", e.weights.delay_weight}, {"power_weight", e.weights.power_weight},
                     {"arrival_rate", e.weights.arrival_rate}, {"discount", e.weights.discount}}},
        {"arrivals", detail::name_of(e.arrivals)},
        {"max_packets", e.max_packets},
        {"buffer_capacity", e.buffer_capacity},
        {"initial_queue", e.initial_queue},
        {"power_on_scheduled", e.power_on_scheduled},
        {"clustering", {{"bandwidth", e.clustering.bandwidth}, {"kmeans_iterations", e.clustering.kmeans_iterations},
                        {"jacobi_tolerance", e.clustering.jacobi_tolerance}}},
    };
}

inline void from_json_into(const nlohmann::json& j, EnvConfig& e) {
    using detail::read;
    read(j, "pairs", e.pairs);
    read(j, "channels", e.channels);
    read(j, "groups", e.groups);
    read(j, "cluster_interval", e.cluster_interval);
    if (j.contains("map")) {
        const auto& m = j.at("map");
        read(m, "side_length", e.map.side_length);
        read(m, "lane_width", e.map.lane_width);
        read(m, "intersections_per_axis", e.map.intersections_per_axis);
    }
    if (j.contains("mobility")) {
        const auto& m = j.at("mobility");
        read(m, "turn_straight", e.mobility.turns.straight);
        read(m, "turn_left", e.mobility.turns.left);
        read(m, "turn_right", e.mobility.turns.right);
        if (m.contains("boundary"))
            e.mobility.boundary = detail::parse_enum(m.at("boundary").get<std::string>(), detail::kBoundaryNames, "boundary mode");
    }
    if (j.contains("speed_kmh")) e.speed_mps = j.at("speed_kmh").get<double>() / 3.6;
    read(j, "following_distance", e.following_distance);
    if (j.contains("path_loss")) {
        const auto& p = j.at("path_loss");
        if (p.contains("rho_db")) e.path_loss.rho = db_to_linear(p.at("rho_db").get<double>());
        if (p.contains("xi_db")) e.path_loss.xi = db_to_linear(p.at("xi_db").get<double>());
        read(p, "exponent", e.path_loss.exponent);
        read(p, "phi0", e.path_loss.phi0);
    }
    if (j.contains("fading")) {
        e.fading = detail::parse_enum<FadingMode>(j.at("fading").get<std::string>(),
                                      {{"power", FadingMode::Power}, {"amplitude", FadingMode::Amplitude}, {"none", FadingMode::None}},
                                      "fading mode");
    }
    if (j.contains("budget")) {
        const auto& b = j.at("budget");
        read(b, "bandwidth_hz", e.budget.bandwidth_hz);
        read(b, "noise_psd", e.budget.noise_psd);
        read(b, "interference_w", e.budget.interference_w);
        read(b, "packet_bits", e.budget.packet_bits);
        read(b, "epoch_s", e.budget.epoch_s);
    }
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        read(w, "delay_weight", e.weights.delay_weight);
        read(w, "power_weight", e.weights.power_weight);
        read(w, "arrival_rate", e.weights.arrival_rate);
        read(w, "discount", e.weights.discount);
    }
    if (j.contains("arrivals")) {
        e.arrivals = detail::parse_enum<ArrivalModel>(j.at("arrivals").get<std::string>(),
                                        {{"poisson", ArrivalModel::Poisson}, {"binomial", ArrivalModel::Binomial}},
                                        "arrival model");
    }
    read(j, "max_packets", e.max_packets);
    read(j, "buffer_capacity", e.buffer_capacity);
    read(j, "initial_queue", e.initial_queue);
    read(j, "power_on_scheduled", e.power_on_scheduled);
    if (j.contains("clustering")) {
        const auto& c = j.at("clustering");
        read(c, "bandwidth", e.clustering.bandwidth);
        read(c, "kmeans_iterations", e.clustering.kmeans_iterations);
        read(c, "jacobi_tolerance", e.clustering.jacobi_tolerance);
    }
}

inline nlohmann::json to_json(const AgentConfig& a) {
    return nlohmann::json{
        {"replay_capacity", a.replay_capacity},
        {"batch_size", a.batch_size},
        {"pool_size", a.pool_size},
        {"lstm_hidden", a.lstm_hidden},
        {"dense", a.dense},
        {"learning_rate", a.learning_rate},
        {"epsilon", a.epsilon},
        {"target_reset", a.target_reset},
        {"loss", detail::name_of(a.loss)},
        {"double_dqn", a.double_dqn},
        {"cost_scale", a.cost_scale},
        {"train_every", a.train_every},
        {"divergence_limit", a.divergence_limit},
        {"encoding", {{"gain_log_offset", a.encoding.gain_log_offset}, {"gain_log_scale", a.encoding.gain_log_scale},
                      {"queue_scale", a.encoding.queue_scale}}},
    };
}

inline void from_json_into(const nlohmann::json& j, AgentConfig& a) {
    using detail::read;
    read(j, "replay_capacity", a.replay_capacity);
    read(j, "batch_size", a.batch_size);
    read(j, "pool_size", a.pool_size);
    read(j, "lstm_hidden", a.lstm_hidden);
    read(j, "dense", a.dense);
    read(j, "learning_rate", a.learning_rate);
    read(j, "epsilon", a.epsilon);
    read(j, "target_reset", a.target_reset);
    if (j.contains("loss")) {
        a.loss = detail::parse_enum<LossMode>(j.at("loss").get<std::string>(),
                                    {{"summed_td", LossMode::SummedTd}, {"per_pair", LossMode::PerPair}}, "loss mode");
    }
    read(j, "double_dqn", a.double_dqn);
    read(j, "cost_scale", a.cost_scale);
    read(j, "train_every", a.train_every);
    read(j, "divergence_limit", a.divergence_limit);
    if (j.contains("encoding")) {
        const auto& e = j.at("encoding");
        read(e, "gain_log_offset", a.encoding.gain_log_offset);
        read(e, "gain_log_scale", a.encoding.gain_log_scale);
        read(e, "queue_scale", a.encoding.queue_scale);
    }
}

inline nlohmann::json to_json(const OracleConfig& o) {
    const auto& n = o.network;
    return nlohmann::json{
        {"pairs", n.pairs},
        {"channels", n.channels},
        {"gain_levels", n.gain_levels},
        {"level_probability", n.level_probability},
        {"max_queue", n.max_queue},
        {"max_packets", n.max_packets},
        {"delay_weight", n.weights.delay_weight},
        {"power_weight", n.weights.power_weight},
        {"arrival_rate", n.weights.arrival_rate},
        {"discount", n.weights.discount},
        {"episodes", o.sarsa.episodes},
        {"episode_length", o.sarsa.episode_length},
        {"alpha_exponent", o.sarsa.alpha_exponent},
        {"epsilon_scale", o.sarsa.epsilon_scale},
        {"epsilon_exponent", o.sarsa.epsilon_exponent},
    };
}

inline void from_json_into(const nlohmann::json& j, OracleConfig& o) {
    using detail::read;
    auto& n = o.network;
    read(j, "pairs", n.pairs);
    read(j, "channels", n.channels);
    read(j, "gain_levels", n.gain_levels);
    read(j, "level_probability", n.level_probability);
    read(j, "max_queue", n.max_queue);
    read(j, "max_packets", n.max_packets);
    read(j, "delay_weight", n.weights.delay_weight);
    read(j, "power_weight", n.weights.power_weight);
    read(j, "arrival_rate", n.weights.arrival_rate);
    read(j, "discount", n.weights.discount);
    read(j, "episodes", o.sarsa.episodes);
    read(j, "episode_length", o.sarsa.episode_length);
    read(j, "alpha_exponent", o.sarsa.alpha_exponent);
    read(j, "epsilon_scale", o.sarsa.epsilon_scale);
    read(j, "epsilon_exponent", o.sarsa.epsilon_exponent);
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    return nlohmann::json{
        {"schema_version", kConfigSchemaVersion},
        {"profile", c.profile},
        {"env", to_json(c.env)},
        {"agent", to_json(c.agent)},
        {"experiment",
         {{"sweep_axis", to_string(c.axis)}, {"sweep_values", c.sweep_values}, {"policies", c.policies},
          {"seeds", c.seeds}, {"train_epochs", c.train_epochs}, {"eval_epochs", c.eval_epochs},
          {"output_dir", c.output_dir}}},
        {"oracle", to_json(c.oracle)},
    };
}

/// Missing keys fall back to the named profile (default: desk).
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    if (j.contains("schema_version") && j.at("schema_version").get<int>() != kConfigSchemaVersion) {
        throw ValidationError("unsupported schema_version " + j.at("schema_version").dump());
    }
    ExperimentConfig c = profile_by_name(j.value("profile", std::string("desk")));
    if (j.contains("env")) from_json_into(j.at("env"), c.env);
    if (j.contains("agent")) from_json_into(j.at("agent"), c.agent);
    if (j.contains("oracle")) from_json_into(j.at("oracle"), c.oracle);
    if (j.contains("experiment")) {
        const auto& e = j.at("experiment");
        if (e.contains("sweep_axis")) {
            c.axis = detail::parse_enum<SweepAxis>(e.at("sweep_axis").get<std::string>(),
                                        {{"none", SweepAxis::None}, {"K", SweepAxis::Pairs},
                                         {"lambda", SweepAxis::ArrivalRate}, {"phi", SweepAxis::Distance}},
                                        "sweep axis");
        }
        detail::read(e, "sweep_values", c.sweep_values);
        detail::read(e, "policies", c.policies);
        detail::read(e, "seeds", c.seeds);
        detail::read(e, "train_epochs", c.train_epochs);
        detail::read(e, "eval_epochs", c.eval_epochs);
        detail::read(e, "output_dir", c.output_dir);
    }
    return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
    try {
        return config_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed config: ") + e.what());
    }
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

inline std::string serialize_config(const ExperimentConfig& c) { return to_json(c).dump(2); }

inline const std::vector<std::string>& known_policies() {
    static const std::vector<std::string> names = {"lstm_drl", "channel_aware", "queue_aware", "random"};
    return names;
}

/// Every violated constraint, one message per entry.
inline std::vector<std::string> config_violations(const ExperimentConfig& c) {
    std::vector<std::string> v;
    auto check = [&](bool ok, const std::string& msg) {
        if (!ok) v.push_back(msg);
    };
    const auto& e = c.env;
    check(e.pairs >= 1, "env.pairs must be >= 1");
    check(e.channels >= 1, "env.channels must be >= 1");
    check(e.groups >= 1, "env.groups must be >= 1");
    check(e.groups <= e.pairs, "env.groups must not exceed env.pairs");
    check(e.cluster_interval >= 1, "env.cluster_interval must be >= 1");
    check(e.map.side_length > 0.0, "env.map.side_length must be positive");
    check(e.map.lane_width > 0.0, "env.map.lane_width must be positive");
    check(e.map.intersections_per_axis >= 1, "env.map.intersections_per_axis must be >= 1");
    check(e.map.lane_width < e.map.side_length / (e.map.intersections_per_axis + 1), "env.map.lane_width too wide for the block size");
    const auto& t = e.mobility.turns;
    check(t.straight >= 0.0 && t.left >= 0.0 && t.right >= 0.0 && t.straight + t.left + t.right > 0.0,
          "env.mobility turn probabilities must be non-negative with a positive sum");
    check(e.speed_mps > 0.0, "env.speed_kmh must be positive");
    check(e.following_distance > 0.0 && e.following_distance < e.map.side_length,
          "env.following_distance must lie in (0, side_length)");
    check(e.path_loss.rho > 0.0 && e.path_loss.xi > 0.0 && e.path_loss.exponent > 0.0 && e.path_loss.phi0 > 0.0,
          "env.path_loss parameters must be positive");
    check(e.path_loss.consistent(), "env.path_loss must satisfy xi < rho * (phi0 / 2)^exponent");
    check(e.budget.bandwidth_hz > 0.0 && e.budget.noise_psd > 0.0 && e.budget.interference_w > 0.0 &&
              e.budget.packet_bits > 0.0 && e.budget.epoch_s > 0.0,
          "env.budget entries must be positive");
    check(e.weights.delay_weight > 0.0, "env.weights.delay_weight must be positive");
    check(e.weights.power_weight > 0.0, "env.weights.power_weight must be positive");
    check(e.weights.arrival_rate > 0.0, "env.weights.arrival_rate must be positive");
    check(e.weights.discount >= 0.0 && e.weights.discount < 1.0, "env.weights.discount must lie in [0, 1)");
    check(e.max_packets >= 1, "env.max_packets must be >= 1");
    check(e.buffer_capacity >= 1, "env.buffer_capacity must be >= 1");
    check(e.initial_queue >= 0 && e.initial_queue <= e.buffer_capacity, "env.initial_queue must lie in [0, buffer_capacity]");

    const auto& a = c.agent;
    check(a.replay_capacity >= 1, "agent.replay_capacity must be >= 1");
    check(a.pool_size >= 1, "agent.pool_size must be >= 1");
    check(a.pool_size <= a.replay_capacity, "agent.pool_size must not exceed agent.replay_capacity");
    check(a.batch_size >= 1 && a.batch_size <= a.replay_capacity, "agent.batch_size must lie in [1, replay_capacity]");
    check(a.lstm_hidden >= 1, "agent.lstm_hidden must be >= 1");
    bool dense_ok = true;
    for (int w : a.dense) dense_ok = dense_ok && w >= 1;
    check(dense_ok, "agent.dense widths must be >= 1");
    check(a.learning_rate > 0.0, "agent.learning_rate must be positive");
    check(a.epsilon >= 0.0 && a.epsilon <= 1.0, "agent.epsilon must lie in [0, 1]");
    check(a.target_reset >= 1, "agent.target_reset must be >= 1");
    check(a.cost_scale > 0.0, "agent.cost_scale must be positive");
    check(a.train_every >= 1, "agent.train_every must be >= 1");
    check(a.encoding.gain_log_scale > 0.0 && a.encoding.queue_scale > 0.0, "agent.encoding scales must be positive");

    for (const auto& p : c.policies) {
        bool known = false;
        for (const auto& k : known_policies()) known = known || k == p;
        check(known, "unknown policy '" + p + "'");
    }
    check(!c.seeds.empty(), "experiment.seeds must not be empty");
    check(c.train_epochs >= 0, "experiment.train_epochs must be >= 0");
    check(c.eval_epochs >= 1, "experiment.eval_epochs must be >= 1");
    check(c.axis == SweepAxis::None || !c.sweep_values.empty(), "experiment.sweep_values must not be empty for a sweep");
    for (double x : c.sweep_values) {
        switch (c.axis) {
            case SweepAxis::Pairs:
                check(x >= 1.0 && x == std::floor(x) && x >= e.groups, "sweep value for K must be an integer >= groups");
                break;
            case SweepAxis::ArrivalRate: check(x > 0.0, "sweep value for lambda must be positive"); break;
            case SweepAxis::Distance:
                check(x > 0.0 && x < e.map.side_length, "sweep value for phi must lie in (0, side_length)");
                break;
            case SweepAxis::None: break;
        }
    }
    const auto& o = c.oracle.network;
    check(o.pairs >= 1 && o.channels >= 1 && o.max_queue >= 0 && o.max_packets >= 1, "oracle network sizes invalid");
    check(o.gain_levels.size() == o.level_probability.size() && !o.gain_levels.empty(),
          "oracle gain_levels and level_probability must have equal non-zero length");
    check(o.weights.discount >= 0.0 && o.weights.discount < 1.0, "oracle discount must lie in [0, 1)");
    return v;
}

inline void validate_config(const ExperimentConfig& c) {
    const auto v = config_violations(c);
    if (v.empty()) return;
    std::string msg = "invalid config:";
    for (const auto& s : v) msg += "\n  - " + s;
    throw ValidationError(msg);
}

/// FNV-1a over the canonical serialisation, leaving out where results go.
inline std::string config_hash(const ExperimentConfig& c) {
    ExperimentConfig content = c;
    content.output_dir.clear();
    const std::string text = to_json(content).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline const char* build_id() {
#ifdef V2X_BUILD_ID
    return V2X_BUILD_ID;
#else
    return "unknown";
#endif
}

}  // namespace v2x
