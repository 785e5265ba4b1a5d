#pragma once

// Baseline radio-resource-management policies and shared action helpers.

#include <v2x/assignment.hpp>
#include <v2x/env.hpp>
#include <v2x/rng.hpp>
#include <v2x/traffic.hpp>

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

namespace v2x {

/// Departures minimising this epoch's power plus the delay cost of whatever
/// stays queued. Ties go to the smaller count.
inline int greedy_schedule(int queue, double gain, const LinkBudget& budget, const CostWeights& w, int max_packets) {
    const int top = std::min(queue, max_packets);
    int best = 0;
    double best_cost = 0.0;
    for (int r = 0; r <= top; ++r) {
        const double c = w.power_weight * transmit_power(r, gain, budget, true) +
                         w.delay_weight * static_cast<double>(queue - r) / w.arrival_rate;
        if (r == 0 || c < best_cost) {
            best = r;
            best_cost = c;
        }
    }
    return best;
}

enum class BaselineKind { ChannelAware, QueueAware, Random };

inline const char* to_string(BaselineKind k) {
    switch (k) {
        case BaselineKind::ChannelAware: return "channel_aware";
        case BaselineKind::QueueAware: return "queue_aware";
        case BaselineKind::Random: return "random";
    }
    return "?";
}

/// Channel for each member of one group (-1 for none).
/// `gains[m][j]` and `queues[m]` describe member m.
inline std::vector<int> baseline_allocate(BaselineKind kind, const std::vector<std::vector<double>>& gains,
                                          const std::vector<int>& queues, int channels, Rng& rng) {
    const auto n = gains.size();
    std::vector<int> out(n, -1);
    std::vector<char> taken(static_cast<std::size_t>(channels), 0);

    switch (kind) {
        case BaselineKind::ChannelAware: {
            const auto rounds = std::min<std::size_t>(n, static_cast<std::size_t>(channels));
            for (std::size_t round = 0; round < rounds; ++round) {
                int bp = -1, bc = -1;
                double bg = -1.0;
                for (std::size_t m = 0; m < n; ++m) {
                    if (out[m] >= 0) continue;
                    for (int j = 0; j < channels; ++j) {
                        if (taken[static_cast<std::size_t>(j)]) continue;
                        if (gains[m][static_cast<std::size_t>(j)] > bg) {
                            bg = gains[m][static_cast<std::size_t>(j)];
                            bp = static_cast<int>(m);
                            bc = j;
                        }
                    }
                }
                if (bp < 0) break;
                out[static_cast<std::size_t>(bp)] = bc;
                taken[static_cast<std::size_t>(bc)] = 1;
            }
            break;
        }
        case BaselineKind::QueueAware: {
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return queues[a] > queues[b]; });
            const auto rounds = std::min<std::size_t>(n, static_cast<std::size_t>(channels));
            for (std::size_t i = 0; i < rounds; ++i) {
                const auto m = order[i];
                int bc = -1;
                double bg = -1.0;
                for (int j = 0; j < channels; ++j) {
                    if (!taken[static_cast<std::size_t>(j)] && gains[m][static_cast<std::size_t>(j)] > bg) {
                        bg = gains[m][static_cast<std::size_t>(j)];
                        bc = j;
                    }
                }
                if (bc < 0) break;
                out[m] = bc;
                taken[static_cast<std::size_t>(bc)] = 1;
            }
            break;
        }
        case BaselineKind::Random: {
            std::vector<std::size_t> pick(n);
            std::iota(pick.begin(), pick.end(), std::size_t{0});
            std::vector<int> chans(static_cast<std::size_t>(channels));
            std::iota(chans.begin(), chans.end(), 0);
            const auto m = std::min<std::size_t>(n, static_cast<std::size_t>(channels));
            for (std::size_t i = 0; i < m; ++i) {
                std::swap(pick[i], pick[i + uniform_index(rng, n - i)]);
                std::swap(chans[i], chans[i + uniform_index(rng, chans.size() - i)]);
                out[pick[i]] = chans[i];
            }
            break;
        }
    }
    return out;
}

/// Number of partial matchings of `pairs` pairs into `channels` free channels,
/// each matched pair counted `weight` times.
inline double partial_matchings(int pairs, int channels, double weight = 1.0) {
    // f(n, c) = f(n-1, c) + c * weight * f(n-1, c-1)
    std::vector<double> row(static_cast<std::size_t>(channels) + 1, 1.0);
    for (int n = 1; n <= pairs; ++n) {
        std::vector<double> next(row.size());
        for (int c = 0; c <= channels; ++c) {
            next[static_cast<std::size_t>(c)] = row[static_cast<std::size_t>(c)] +
                                                (c > 0 ? c * weight * row[static_cast<std::size_t>(c - 1)] : 0.0);
        }
        row = std::move(next);
    }
    return row[static_cast<std::size_t>(channels)];
}

/// Uniform draw from the feasible joint actions, where a pair off air always
/// schedules zero departures. Each group is sampled pair by pair with
/// probabilities proportional to the number of completions.
inline JointAction random_feasible_action(const Grouping& grouping, int channels, int max_packets, Rng& rng) {
    JointAction action(grouping.assignment.size());
    for (const auto& group : grouping.members()) {
        std::vector<int> free(static_cast<std::size_t>(channels));
        std::iota(free.begin(), free.end(), 0);
        const double options = static_cast<double>(max_packets) + 1.0;
        int left = static_cast<int>(group.size());
        for (int k : group) {
            --left;
            const int c = static_cast<int>(free.size());
            const double total = partial_matchings(left + 1, c, options);
            const double stay_off = partial_matchings(left, c, options);
            const double u = uniform01(rng) * total;
            auto& a = action[static_cast<std::size_t>(k)];
            if (u < stay_off || c == 0) {
                a = PairAction{-1, 0};
                continue;
            }
            const double per_channel = (total - stay_off) / c;
            auto idx = static_cast<std::size_t>((u - stay_off) / per_channel);
            idx = std::min(idx, free.size() - 1);
            a.channel = free[idx];
            free.erase(free.begin() + static_cast<std::ptrdiff_t>(idx));
            a.departures = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(max_packets) + 1));
        }
    }
    return action;
}

/// Baseline channel rule followed by greedy per-pair scheduling.
class BaselinePolicy : public Policy {
public:
    explicit BaselinePolicy(BaselineKind kind) : kind_(kind) {}

    std::string name() const override { return to_string(kind_); }

    JointAction act(const Environment& env, Rng& rng) override {
        const auto& cfg = env.config();
        const auto& state = env.state();
        JointAction action(state.size());
        for (const auto& group : env.grouping().members()) {
            std::vector<std::vector<double>> gains;
            std::vector<int> queues;
            for (int k : group) {
                gains.push_back(state[static_cast<std::size_t>(k)].gains);
                queues.push_back(state[static_cast<std::size_t>(k)].queue);
            }
            const auto chosen = baseline_allocate(kind_, gains, queues, cfg.channels, rng);
            for (std::size_t m = 0; m < group.size(); ++m) {
                auto& a = action[static_cast<std::size_t>(group[m])];
                a.channel = chosen[m];
                if (a.channel >= 0) {
                    a.departures = greedy_schedule(queues[m], gains[m][static_cast<std::size_t>(a.channel)], cfg.budget,
                                                   cfg.weights, cfg.max_packets);
                }
            }
        }
        return action;
    }

private:
    BaselineKind kind_;
};

}  // namespace v2x
