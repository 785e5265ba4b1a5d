#pragma once

// Online training of the shared recurrent Q-network: epsilon-greedy acting
// through per-group min-cost assignment, a FIFO replay memory of joint
// experiences, a rolling observation pool, mini-batch TD updates and periodic
// target-network resets.

#include <v2x/assignment.hpp>
#include <v2x/env.hpp>
#include <v2x/errors.hpp>
#include <v2x/neural.hpp>
#include <v2x/policies.hpp>
#include <v2x/rng.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace v2x {

struct EncodingParams {
    double gain_log_offset = 9.0;  // log10(g) + offset; typical gains sit near 1e-9
    double gain_log_scale = 1.0;
    double queue_scale = 10.0;
};

struct AgentConfig {
    int replay_capacity = 5000;
    int batch_size = 200;
    int pool_size = 20;
    int lstm_hidden = 64;
    std::vector<int> dense = {64, 64};
    double learning_rate = 1e-3;
    double epsilon = 0.06;
    int target_reset = 500;
    LossMode loss = LossMode::SummedTd;
    bool double_dqn = false;
    double cost_scale = 1.0;  // multiplies costs inside training targets
    int train_every = 1;
    double divergence_limit = 1e12;
    EncodingParams encoding;
};

inline int encoding_width(int channels, int groups) { return channels + 4 + 1 + groups + 1 + channels; }

inline int action_count(int channels, int max_packets) { return (1 + channels) * (1 + max_packets); }

/// Output index of (channel, departures); channel -1 means no channel.
inline int action_index(const PairAction& a, int max_packets) { return (a.channel + 1) * (max_packets + 1) + a.departures; }

inline PairAction action_from_index(int index, int max_packets) {
    return PairAction{index / (max_packets + 1) - 1, index % (max_packets + 1)};
}

/// Fixed-width features of one pair's local state and observation.
inline std::vector<double> encode_observation(const VuePairState& s, const LocalObservation& o, const EnvConfig& cfg,
                                              const EncodingParams& enc) {
    std::vector<double> x;
    x.reserve(static_cast<std::size_t>(encoding_width(cfg.channels, cfg.groups)));
    for (double g : s.gains) x.push_back((std::log10(g) + enc.gain_log_offset) / enc.gain_log_scale);
    x.push_back(s.pose.rx.x / cfg.map.side_length);
    x.push_back(s.pose.rx.y / cfg.map.side_length);
    const Heading h = s.pose.heading();
    x.push_back(h == Heading::East ? 1.0 : h == Heading::West ? -1.0 : 0.0);
    x.push_back(h == Heading::North ? 1.0 : h == Heading::South ? -1.0 : 0.0);
    x.push_back(static_cast<double>(s.queue) / enc.queue_scale);
    for (int i = 0; i < cfg.groups; ++i) x.push_back(o.prev_group == i ? 1.0 : 0.0);
    x.push_back(static_cast<double>(o.group_size) / static_cast<double>(cfg.pairs));
    for (int u : o.utilization) x.push_back(static_cast<double>(u));
    return x;
}

/// Encoded (state, observation) of every pair for one epoch, K x width.
using ObservationRecord = Eigen::MatrixXf;

inline ObservationRecord encode_epoch(const Environment& env, const EncodingParams& enc) {
    const auto& cfg = env.config();
    ObservationRecord rec(cfg.pairs, encoding_width(cfg.channels, cfg.groups));
    for (int k = 0; k < cfg.pairs; ++k) {
        const auto row = encode_observation(env.state()[static_cast<std::size_t>(k)],
                                            env.observations()[static_cast<std::size_t>(k)], cfg, enc);
        for (std::size_t c = 0; c < row.size(); ++c) rec(k, static_cast<Eigen::Index>(c)) = static_cast<float>(row[c]);
    }
    return rec;
}

/// The N most recent all-pair records, oldest first. Windows shorter than N
/// are front-padded with zero (neutral) rows.
class ObservationPool {
public:
    ObservationPool(int capacity, int pairs, int width) : capacity_(capacity), pairs_(pairs), width_(width) {}

    void push(ObservationRecord rec) {
        if (rec.rows() != pairs_ || rec.cols() != width_) throw ShapeError("observation record shape mismatch");
        records_.push_back(std::move(rec));
        if (static_cast<int>(records_.size()) > capacity_) records_.pop_front();
    }

    void clear() { records_.clear(); }
    int size() const { return static_cast<int>(records_.size()); }
    int capacity() const { return capacity_; }
    int pairs() const { return pairs_; }
    int width() const { return width_; }
    const ObservationRecord& latest() const { return records_.back(); }

    /// Window for pair k as (N x width), oldest first.
    Eigen::MatrixXd sequence(int pair) const {
        Eigen::MatrixXd seq = Eigen::MatrixXd::Zero(capacity_, width_);
        const int pad = capacity_ - size();
        for (int t = 0; t < size(); ++t)
            seq.row(pad + t) = records_[static_cast<std::size_t>(t)].row(pair).cast<double>();
        return seq;
    }

    /// All pairs' windows as one float block, pair-major: (K*N x width).
    Eigen::MatrixXf snapshot() const {
        Eigen::MatrixXf out = Eigen::MatrixXf::Zero(pairs_ * capacity_, width_);
        const int pad = capacity_ - size();
        for (int k = 0; k < pairs_; ++k)
            for (int t = 0; t < size(); ++t)
                out.row(k * capacity_ + pad + t) = records_[static_cast<std::size_t>(t)].row(k);
        return out;
    }

private:
    int capacity_;
    int pairs_;
    int width_;
    std::deque<ObservationRecord> records_;
};

/// One epoch's transition for every pair. The next window is the current one
/// shifted by one epoch with `next_record` appended.
struct Experience {
    Eigen::MatrixXf window;       // (K*N x width), pair-major
    ObservationRecord next_record;  // (K x width)
    std::vector<int> action;       // per pair output index
    std::vector<double> cost;
    std::vector<int> next_action;
};

class ReplayMemory {
public:
    explicit ReplayMemory(int capacity) : capacity_(capacity) {
        if (capacity < 1) throw InvalidStateError("replay capacity must be >= 1");
    }

    void push(Experience e) {
        for (double c : e.cost)
            if (!std::isfinite(c)) throw InvalidStateError("experience cost is not finite");
        if (static_cast<int>(buffer_.size()) < capacity_) {
            buffer_.push_back(std::move(e));
        } else {
            buffer_[head_] = std::move(e);
            head_ = (head_ + 1) % buffer_.size();
        }
    }

    int size() const { return static_cast<int>(buffer_.size()); }
    int capacity() const { return capacity_; }

    /// i-th stored experience, oldest first.
    const Experience& at(int i) const { return buffer_.at((head_ + static_cast<std::size_t>(i)) % buffer_.size()); }

    /// `count` distinct indices, uniformly without replacement.
    std::vector<int> sample_indices(int count, Rng& rng) const {
        std::vector<int> idx(buffer_.size());
        std::iota(idx.begin(), idx.end(), 0);
        for (int i = 0; i < count; ++i) {
            const auto j = static_cast<std::size_t>(i) + uniform_index(rng, idx.size() - static_cast<std::size_t>(i));
            std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
        }
        idx.resize(static_cast<std::size_t>(count));
        return idx;
    }

private:
    int capacity_;
    std::vector<Experience> buffer_;
    std::size_t head_ = 0;
};

inline NetArchitecture make_architecture(const EnvConfig& env, const AgentConfig& agent) {
    NetArchitecture a;
    a.input_dim = encoding_width(env.channels, env.groups);
    a.sequence_length = agent.pool_size;
    a.lstm_hidden = agent.lstm_hidden;
    a.dense = agent.dense;
    a.output_dim = action_count(env.channels, env.max_packets);
    return a;
}

namespace detail {

/// Batch of pair windows taken from experiences; `next` selects the shifted window.
inline SequenceBatch experience_batch(const std::vector<const Experience*>& picks, int pairs, int window, int width,
                                      bool next) {
    SequenceBatch b;
    const auto cols = static_cast<Eigen::Index>(picks.size()) * pairs;
    b.steps.assign(static_cast<std::size_t>(window), Eigen::MatrixXd(width, cols));
    Eigen::Index col = 0;
    for (const auto* e : picks) {
        for (int k = 0; k < pairs; ++k, ++col) {
            for (int t = 0; t < window; ++t) {
                const int src = next ? t + 1 : t;
                auto dst = b.steps[static_cast<std::size_t>(t)].col(col);
                if (src < window) dst = e->window.row(k * window + src).transpose().cast<double>();
                else dst = e->next_record.row(k).transpose().cast<double>();
            }
        }
    }
    return b;
}

}  // namespace detail

class DrlAgent {
public:
    DrlAgent(const EnvConfig& env, const AgentConfig& agent, std::uint64_t seed)
        : env_(env), cfg_(agent), arch_(make_architecture(env, agent)) {
        Rng init = make_rng(seed, 0xA11CE);
        params_ = NetParams::initialise(arch_, init);
        target_ = params_;
        opt_ = AdamOptimizer(arch_, agent.learning_rate);
    }

    const NetArchitecture& architecture() const { return arch_; }
    const NetParams& params() const { return params_; }
    const NetParams& target() const { return target_; }
    const AgentConfig& config() const { return cfg_; }
    void set_params(NetParams p) {
        if (!(p.arch == arch_)) throw ShapeError("parameters do not fit this agent");
        params_ = std::move(p);
    }
    void reset_target() { target_ = params_; }

    /// Q values (output_dim x K) of every pair's current window.
    Eigen::MatrixXd pair_q_values(const ObservationPool& pool, const NetParams& p) const {
        std::vector<Eigen::MatrixXd> seqs;
        for (int k = 0; k < pool.pairs(); ++k) seqs.push_back(pool.sequence(k));
        return forward_batch(p, make_batch(seqs));
    }

    /// Joint action minimising the summed per-pair Q values, group by group.
    /// With `queues`, departures above a pair's backlog are not considered.
    JointAction greedy_action(const Eigen::MatrixXd& q, const Grouping& grouping,
                              const std::vector<int>& queues = {}) const {
        const int channels = env_.channels;
        const int options = env_.max_packets + 1;
        JointAction action(grouping.assignment.size());
        for (const auto& group : grouping.members()) {
            std::vector<std::vector<double>> score;
            std::vector<std::vector<int>> best_r;
            for (int k : group) {
                std::vector<double> row(static_cast<std::size_t>(channels) + 1);
                std::vector<int> rs(static_cast<std::size_t>(channels), 0);
                const int top = queues.empty() ? options - 1
                                               : std::min(options - 1, queues[static_cast<std::size_t>(k)]);
                for (int j = 0; j < channels; ++j) {
                    double best = std::numeric_limits<double>::infinity();
                    for (int r = 0; r <= top; ++r) {
                        const double v = q((j + 1) * options + r, k);
                        if (v < best) {
                            best = v;
                            rs[static_cast<std::size_t>(j)] = r;
                        }
                    }
                    row[static_cast<std::size_t>(j)] = best;
                }
                row[static_cast<std::size_t>(channels)] = q(0, k);
                score.push_back(std::move(row));
                best_r.push_back(std::move(rs));
            }
            const auto assignment = assign_min_cost(score);
            for (std::size_t m = 0; m < group.size(); ++m) {
                auto& a = action[static_cast<std::size_t>(group[m])];
                a.channel = assignment.channel[m];
                a.departures = a.channel >= 0 ? best_r[m][static_cast<std::size_t>(a.channel)] : 0;
            }
        }
        return action;
    }

    /// Epsilon-greedy: each group independently takes a uniformly random
    /// feasible decision with probability epsilon.
    /// Sending more than the backlog behaves like sending all of it, so with
    /// `queues` the departures are clipped to it.
    JointAction act(const ObservationPool& pool, const Grouping& grouping, double epsilon, Rng& rng,
                    const std::vector<int>& queues = {}) const {
        std::vector<char> explore(static_cast<std::size_t>(grouping.groups), 0);
        bool any_greedy = false;
        for (auto& e : explore) {
            e = uniform01(rng) < epsilon ? 1 : 0;
            any_greedy = any_greedy || !e;
        }
        JointAction action(grouping.assignment.size());
        if (any_greedy) action = greedy_action(pair_q_values(pool, params_), grouping, queues);
        const auto random = random_feasible_action(grouping, env_.channels, env_.max_packets, rng);
        for (std::size_t k = 0; k < action.size(); ++k) {
            if (explore[static_cast<std::size_t>(grouping.assignment[k])]) action[k] = random[k];
            if (!queues.empty()) action[k].departures = std::min(action[k].departures, queues[k]);
        }
        return action;
    }

    /// One optimiser step on a uniformly sampled mini-batch. Returns the batch
    /// loss, or nothing when the memory holds fewer experiences than a batch.
    std::optional<double> train_step(const ReplayMemory& memory, Rng& rng) {
        if (memory.size() < cfg_.batch_size || cfg_.batch_size < 1) return std::nullopt;
        const auto idx = memory.sample_indices(cfg_.batch_size, rng);
        std::vector<const Experience*> picks;
        for (int i : idx) picks.push_back(&memory.at(i));

        const int pairs = env_.pairs;
        const int window = arch_.sequence_length;
        const int width = arch_.input_dim;
        const auto current = detail::experience_batch(picks, pairs, window, width, false);
        const auto next = detail::experience_batch(picks, pairs, window, width, true);
        const Eigen::MatrixXd q_next = forward_batch(target_, next);
        Eigen::MatrixXd q_next_online;
        if (cfg_.double_dqn) q_next_online = forward_batch(params_, next);

        const double gamma = env_.weights.discount;
        std::vector<int> actions;
        std::vector<double> targets;
        std::vector<std::size_t> ends;
        Eigen::Index col = 0;
        for (const auto* e : picks) {
            for (int k = 0; k < pairs; ++k, ++col) {
                int next_a = e->next_action[static_cast<std::size_t>(k)];
                if (cfg_.double_dqn) next_a = best_single_action(q_next_online.col(col));
                actions.push_back(e->action[static_cast<std::size_t>(k)]);
                targets.push_back((1.0 - gamma) * cfg_.cost_scale * e->cost[static_cast<std::size_t>(k)] +
                                  gamma * q_next(next_a, col));
            }
            ends.push_back(actions.size());
        }
        auto lg = td_loss_and_gradient(params_, current, actions, targets, ends, cfg_.loss);
        apply_update(params_, lg.grad, opt_);
        return lg.loss;
    }

private:
    /// Lowest-valued output among the selectable ones (no channel implies r = 0).
    int best_single_action(const Eigen::VectorXd& q) const {
        const int options = env_.max_packets + 1;
        int best = 0;
        for (int i = options; i < q.size(); ++i)
            if (q(i) < q(best)) best = i;
        return best;
    }

    EnvConfig env_;
    AgentConfig cfg_;
    NetArchitecture arch_;
    NetParams params_;
    NetParams target_;
    AdamOptimizer opt_;
};

inline std::vector<int> queues_of(const Environment& env) {
    std::vector<int> q;
    for (const auto& s : env.state()) q.push_back(s.queue);
    return q;
}

struct EpochMetrics {
    long epoch = 0;
    double loss = std::numeric_limits<double>::quiet_NaN();  // NaN before training starts
    double avg_cost = 0.0;
    double avg_queue = 0.0;
    double avg_power_w = 0.0;
    double epsilon = 0.0;
};

inline constexpr const char* kMetricsHeader = "epoch,loss,avg_cost,avg_queue,avg_power_w,epsilon";

inline void write_metrics_csv(std::ostream& os, const std::vector<EpochMetrics>& metrics) {
    os << kMetricsHeader << '\n';
    for (const auto& m : metrics) {
        write_csv_row(os, {std::to_string(m.epoch), fmt_num(m.loss), fmt_num(m.avg_cost), fmt_num(m.avg_queue),
                           fmt_num(m.avg_power_w), fmt_num(m.epsilon)});
    }
}

struct TrainingResult {
    NetParams params;
    std::vector<EpochMetrics> metrics;
    long target_resets = 0;
};

struct TrainingHooks {
    std::function<void(long epoch, const NetParams&)> on_checkpoint;
    long checkpoint_every = 0;
    /// Called after each epoch with the target parameters (for audits).
    std::function<void(long epoch, const NetParams& target)> on_epoch;
};

/// Online training loop: act, realise costs, observe, update pool and memory,
/// train, and reset the target network every `target_reset` epochs.
inline TrainingResult run_training(const EnvConfig& env_cfg, const AgentConfig& agent_cfg, long epochs,
                                   std::uint64_t seed, const TrainingHooks& hooks = {}) {
    DrlAgent agent(env_cfg, agent_cfg, seed);
    TrainingResult out;
    out.params = agent.params();
    if (epochs <= 0) return out;

    Environment env(env_cfg, derive_seed(seed, 1));
    Rng act_rng = make_rng(seed, 3);
    Rng sample_rng = make_rng(seed, 4);
    const int width = encoding_width(env_cfg.channels, env_cfg.groups);
    ObservationPool pool(agent_cfg.pool_size, env_cfg.pairs, width);
    ReplayMemory memory(agent_cfg.replay_capacity);

    pool.push(encode_epoch(env, agent_cfg.encoding));
    JointAction action = agent.act(pool, env.grouping(), agent_cfg.epsilon, act_rng, queues_of(env));
    out.metrics.reserve(static_cast<std::size_t>(epochs));

    for (long t = 1; t <= epochs; ++t) {
        Eigen::MatrixXf window = pool.snapshot();
        const auto result = env.step(action);

        pool.push(encode_epoch(env, agent_cfg.encoding));
        const JointAction next_action = agent.act(pool, env.grouping(), agent_cfg.epsilon, act_rng, queues_of(env));

        Experience e;
        e.window = std::move(window);
        e.next_record = pool.latest();
        e.cost = result.costs;
        for (std::size_t k = 0; k < action.size(); ++k) {
            e.action.push_back(action_index(action[k], env_cfg.max_packets));
            e.next_action.push_back(action_index(next_action[k], env_cfg.max_packets));
        }
        memory.push(std::move(e));

        EpochMetrics m;
        m.epoch = t;
        m.epsilon = agent_cfg.epsilon;
        const double k = static_cast<double>(env_cfg.pairs);
        for (std::size_t i = 0; i < action.size(); ++i) {
            m.avg_cost += result.costs[i] / k;
            m.avg_queue += result.queue_before[i] / k;
            m.avg_power_w += result.power_w[i] / k;
        }
        if (t % std::max(1, agent_cfg.train_every) == 0) {
            if (auto loss = agent.train_step(memory, sample_rng)) {
                m.loss = *loss;
                if (!(*loss <= agent_cfg.divergence_limit)) {
                    std::ostringstream msg;
                    msg << "training diverged at epoch " << t << ": loss " << *loss << " exceeds "
                        << agent_cfg.divergence_limit << " (avg cost " << m.avg_cost << ", avg queue " << m.avg_queue
                        << ")";
                    throw DivergenceError(msg.str());
                }
            }
        }
        if (agent_cfg.target_reset > 0 && t % agent_cfg.target_reset == 0) {
            agent.reset_target();
            ++out.target_resets;
        }
        if (hooks.on_epoch) hooks.on_epoch(t, agent.target());
        if (hooks.on_checkpoint && hooks.checkpoint_every > 0 && t % hooks.checkpoint_every == 0) {
            hooks.on_checkpoint(t, agent.params());
        }
        out.metrics.push_back(m);
        action = next_action;
    }
    out.params = agent.params();
    return out;
}

/// Frozen trained network acting greedily (or epsilon-greedily) in a rollout.
class DrlPolicy : public Policy {
public:
    DrlPolicy(const EnvConfig& env, const AgentConfig& agent, NetParams params, double epsilon = 0.0)
        : agent_(env, agent, 0), epsilon_(epsilon),
          pool_(agent.pool_size, env.pairs, encoding_width(env.channels, env.groups)) {
        agent_.set_params(std::move(params));
    }

    std::string name() const override { return "lstm_drl"; }

    void reset(const Environment& env) override {
        pool_.clear();
        pool_.push(encode_epoch(env, agent_.config().encoding));
    }

    JointAction act(const Environment& env, Rng& rng) override {
        return agent_.act(pool_, env.grouping(), epsilon_, rng, queues_of(env));
    }

    void observe(const Environment& env, const StepResult&) override {
        pool_.push(encode_epoch(env, agent_.config().encoding));
    }

private:
    DrlAgent agent_;
    double epsilon_;
    ObservationPool pool_;
};

}  // namespace v2x
