#pragma once

// The global network MDP: mobility, channel, queues and grouping advanced one
// decision epoch at a time under a joint channel-allocation/scheduling action.

#include <v2x/channel.hpp>
#include <v2x/csv.hpp>
#include <v2x/errors.hpp>
#include <v2x/grid.hpp>
#include <v2x/grouping.hpp>
#include <v2x/rng.hpp>
#include <v2x/traffic.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace v2x {

struct EnvConfig {
    int pairs = 8;
    int channels = 2;
    int groups = 2;
    int cluster_interval = 10;

    GridMap map;
    MobilityParams mobility;
    double speed_mps = 60.0 / 3.6;
    double following_distance = 20.0;

    PathLossParams path_loss;
    FadingMode fading = FadingMode::Power;

    LinkBudget budget;
    CostWeights weights;
    ArrivalModel arrivals = ArrivalModel::Poisson;
    int max_packets = 5;  // bound on both arrivals and departures per epoch
    int buffer_capacity = 500;
    int initial_queue = 0;
    bool power_on_scheduled = false;  // charge power for r rather than min(r, q)

    ClusteringParams clustering;
};

struct VuePairState {
    ChannelGains gains;
    PairPose pose;
    int queue = 0;
};

/// What a pair knows about its group in the previous epoch.
struct LocalObservation {
    int prev_group = -1;  // -1 before the first epoch
    int group_size = 1;
    std::vector<int> utilization;  // per channel, 1 if used in the group
};

struct PairAction {
    int channel = -1;  // -1: no channel
    int departures = 0;

    friend bool operator==(const PairAction&, const PairAction&) = default;
};

using JointAction = std::vector<PairAction>;

struct ConstraintViolations {
    int per_pair = 0;   // a pair holding more than one channel
    int per_group = 0;  // a channel held by two pairs of one group

    int total() const { return per_pair + per_group; }
};

/// Counts violations of both allocation constraints on the 0/1 allocation
/// matrix implied by `action`.
inline ConstraintViolations count_violations(const JointAction& action, const Grouping& grouping, int channels) {
    ConstraintViolations v;
    const auto members = grouping.members();
    std::vector<std::vector<int>> u(action.size(), std::vector<int>(static_cast<std::size_t>(channels), 0));
    for (std::size_t k = 0; k < action.size(); ++k) {
        const int j = action[k].channel;
        if (j >= 0 && j < channels) u[k][static_cast<std::size_t>(j)] = 1;
        else if (j >= channels) ++v.per_pair;
    }
    for (const auto& row : u) {
        int s = 0;
        for (int x : row) s += x;
        if (s > 1) ++v.per_pair;
    }
    for (const auto& group : members) {
        for (int j = 0; j < channels; ++j) {
            int s = 0;
            for (int k : group) s += u[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
            if (s > 1) ++v.per_group;
        }
    }
    return v;
}

inline void validate_action(const JointAction& action, const Grouping& grouping, int channels, int max_packets) {
    if (action.size() != grouping.assignment.size()) {
        throw RejectedActionError("action has " + std::to_string(action.size()) + " entries for " +
                                  std::to_string(grouping.assignment.size()) + " pairs");
    }
    for (std::size_t k = 0; k < action.size(); ++k) {
        if (action[k].channel < -1 || action[k].channel >= channels) {
            throw RejectedActionError("per-pair constraint: pair " + std::to_string(k) + " requests channel " +
                                      std::to_string(action[k].channel) + " outside the channel set");
        }
        if (action[k].departures < 0 || action[k].departures > max_packets) {
            throw RejectedActionError("pair " + std::to_string(k) + " schedules " +
                                      std::to_string(action[k].departures) + " departures, bound is " +
                                      std::to_string(max_packets));
        }
    }
    for (const auto& group : grouping.members()) {
        std::vector<int> holder(static_cast<std::size_t>(channels), -1);
        for (int k : group) {
            const int j = action[static_cast<std::size_t>(k)].channel;
            if (j < 0) continue;
            if (holder[static_cast<std::size_t>(j)] >= 0) {
                throw RejectedActionError("per-group constraint: channel " + std::to_string(j) + " assigned to pairs " +
                                          std::to_string(holder[static_cast<std::size_t>(j)]) + " and " +
                                          std::to_string(k) + " of group " +
                                          std::to_string(grouping.group_of(static_cast<std::size_t>(k))));
            }
            holder[static_cast<std::size_t>(j)] = k;
        }
    }
}

struct StepResult {
    std::vector<double> costs;
    std::vector<double> power_w;
    std::vector<int> departed;
    std::vector<int> queue_before;
    std::vector<int> group;  // group each pair belonged to during the epoch
    int dropped = 0;
    int truncated_arrivals = 0;
};

class Environment {
public:
    static constexpr std::uint64_t kClusterStream = 1ULL << 40;

    Environment(EnvConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
        if (config_.pairs < 1 || config_.channels < 1 || config_.groups < 1 || config_.groups > config_.pairs) {
            throw InvalidStateError("environment needs K >= I >= 1 and J >= 1");
        }
        const auto k = static_cast<std::size_t>(config_.pairs);
        pair_rngs_.reserve(k);
        for (std::size_t i = 0; i < k; ++i) pair_rngs_.push_back(make_rng(seed_, i));
        cluster_rng_ = make_rng(seed_, kClusterStream);

        state_.resize(k);
        for (std::size_t i = 0; i < k; ++i) {
            auto& s = state_[i];
            s.pose = place_pair(config_.map, config_.following_distance, pair_rngs_[i]);
            s.gains = draw_gains(s.pose, config_.map, config_.path_loss, config_.channels, config_.fading, pair_rngs_[i]);
            s.queue = config_.initial_queue;
        }
        observations_.assign(k, neutral_observation());
        const auto pos = receiver_positions();
        grouping_ = spectral_cluster(pos, config_.groups, cluster_rng_, 0, config_.clustering);
    }

    const EnvConfig& config() const { return config_; }
    const std::vector<VuePairState>& state() const { return state_; }
    const Grouping& grouping() const { return grouping_; }
    const std::vector<LocalObservation>& observations() const { return observations_; }
    long epoch() const { return epoch_; }
    int pairs() const { return config_.pairs; }

    LocalObservation neutral_observation() const {
        return LocalObservation{-1, 1, std::vector<int>(static_cast<std::size_t>(config_.channels), 0)};
    }

    std::vector<Point> receiver_positions() const {
        std::vector<Point> out;
        out.reserve(state_.size());
        for (const auto& s : state_) out.push_back(s.pose.rx);
        return out;
    }

    /// Replaces one pair's random stream; other pairs' trajectories are unaffected.
    void reseed_pair(std::size_t pair, std::uint64_t seed) { pair_rngs_.at(pair) = Rng{seed}; }

    /// Overrides a pair's queue; used to set up scenarios in tests and tools.
    void set_queue(std::size_t pair, int q) {
        if (q < 0) throw InvalidStateError("queue must be non-negative");
        state_.at(pair).queue = q;
    }

    void set_gains(std::size_t pair, ChannelGains g) { state_.at(pair).gains = std::move(g); }

    StepResult step(const JointAction& action) {
        validate_action(action, grouping_, config_.channels, config_.max_packets);
        const auto k = state_.size();
        StepResult out;
        out.costs.resize(k);
        out.power_w.resize(k);
        out.departed.resize(k);
        out.queue_before.resize(k);
        out.group = grouping_.assignment;

        std::vector<std::vector<int>> used(static_cast<std::size_t>(grouping_.groups),
                                           std::vector<int>(static_cast<std::size_t>(config_.channels), 0));
        for (std::size_t i = 0; i < k; ++i) {
            auto& s = state_[i];
            auto& rng = pair_rngs_[i];
            const auto& a = action[i];
            const bool allocated = a.channel >= 0;
            if (allocated) used[static_cast<std::size_t>(grouping_.assignment[i])][static_cast<std::size_t>(a.channel)] = 1;

            const auto arrivals = draw_arrivals(config_.weights.arrival_rate, config_.max_packets, config_.arrivals, rng);
            const auto q = step_queue(s.queue, a.departures, allocated, arrivals.packets, config_.buffer_capacity);
            const int charged = config_.power_on_scheduled ? a.departures : q.departed;
            const double gain = allocated ? s.gains[static_cast<std::size_t>(a.channel)] : 1.0;
            const double p = transmit_power(charged, gain, config_.budget, allocated);

            out.queue_before[i] = s.queue;
            out.departed[i] = q.departed;
            out.power_w[i] = p;
            out.costs[i] = epoch_cost(s.queue, p, config_.weights);
            out.dropped += q.dropped;
            out.truncated_arrivals += arrivals.truncated ? 1 : 0;

            s.queue = q.queue;
            s.pose = step_mobility(s.pose, config_.map, config_.mobility, config_.speed_mps, config_.budget.epoch_s, rng);
            s.gains = draw_gains(s.pose, config_.map, config_.path_loss, config_.channels, config_.fading, rng);
        }

        for (std::size_t i = 0; i < k; ++i) {
            const int g = grouping_.assignment[i];
            observations_[i] = LocalObservation{g, grouping_.size_of(g), used[static_cast<std::size_t>(g)]};
        }

        ++epoch_;
        const auto pos = receiver_positions();
        grouping_ = maybe_regroup(grouping_, epoch_, config_.cluster_interval, pos, config_.groups, cluster_rng_,
                                  config_.clustering);
        return out;
    }

private:
    EnvConfig config_;
    std::uint64_t seed_;
    std::vector<Rng> pair_rngs_;
    Rng cluster_rng_;
    std::vector<VuePairState> state_;
    std::vector<LocalObservation> observations_;
    Grouping grouping_;
    long epoch_ = 0;
};

/// A radio-resource-management policy driven epoch by epoch.
class Policy {
public:
    virtual ~Policy() = default;
    virtual std::string name() const = 0;
    /// Called once before a rollout starts on `env`.
    virtual void reset(const Environment& env) { (void)env; }
    virtual JointAction act(const Environment& env, Rng& rng) = 0;
    /// Called after each environment step.
    virtual void observe(const Environment& env, const StepResult& result) {
        (void)env;
        (void)result;
    }
};

inline constexpr const char* kTrajectoryHeader = "epoch,pair,group,q,channel,r,power_w,cost";

inline void write_trajectory_rows(std::ostream& os, long epoch, const JointAction& action, const StepResult& r) {
    for (std::size_t k = 0; k < action.size(); ++k) {
        write_csv_row(os, {std::to_string(epoch), std::to_string(k), std::to_string(r.group[k]),
                           std::to_string(r.queue_before[k]), std::to_string(action[k].channel),
                           std::to_string(action[k].departures), fmt_num(r.power_w[k]), fmt_num(r.costs[k])});
    }
}

struct RolloutSummary {
    std::vector<double> discounted_cost;  // (1-gamma) * sum_t gamma^(t-1) f_k, per pair
    double truncation_bound = 0.0;        // gamma^horizon * max observed per-epoch cost
    double avg_cost = 0.0;                // per pair per epoch
    double avg_queue = 0.0;
    double avg_delay_epochs = 0.0;
    double avg_power_w = 0.0;
    long violations = 0;
    long epochs = 0;
};

/// Runs `policy` for `horizon` epochs and accumulates discounted and
/// time-averaged per-pair costs. Optionally dumps the trajectory as CSV.
inline RolloutSummary evaluate_policy(Policy& policy, Environment& env, long horizon, double gamma, Rng& rng,
                                      std::ostream* trajectory = nullptr) {
    if (horizon < 1) throw InvalidStateError("horizon must be >= 1");
    const auto k = static_cast<std::size_t>(env.pairs());
    RolloutSummary out;
    out.discounted_cost.assign(k, 0.0);
    double weight = 1.0 - gamma;
    double f_max = 0.0;
    double cost_sum = 0.0, queue_sum = 0.0, power_sum = 0.0;
    if (trajectory) *trajectory << kTrajectoryHeader << '\n';

    policy.reset(env);
    for (long t = 0; t < horizon; ++t) {
        const auto action = policy.act(env, rng);
        out.violations += count_violations(action, env.grouping(), env.config().channels).total();
        const long epoch = env.epoch();
        const auto result = env.step(action);
        if (trajectory) write_trajectory_rows(*trajectory, epoch, action, result);
        for (std::size_t i = 0; i < k; ++i) {
            out.discounted_cost[i] += weight * result.costs[i];
            f_max = std::max(f_max, result.costs[i]);
            cost_sum += result.costs[i];
            queue_sum += result.queue_before[i];
            power_sum += result.power_w[i];
        }
        weight *= gamma;
        policy.observe(env, result);
    }
    const double n = static_cast<double>(horizon) * static_cast<double>(k);
    out.truncation_bound = std::pow(gamma, static_cast<double>(horizon)) * f_max;
    out.avg_cost = cost_sum / n;
    out.avg_queue = queue_sum / n;
    out.avg_delay_epochs = out.avg_queue / env.config().weights.arrival_rate;
    out.avg_power_w = power_sum / n;
    out.epochs = horizon;
    return out;
}

}  // namespace v2x
