#pragma once

// Tabular reference learners on small, fully enumerable MDPs: exact value
// iteration on the Bellman equation and on-policy SARSA with decaying
// learning rate and exploration.

#include <v2x/errors.hpp>
#include <v2x/grid.hpp>
#include <v2x/rng.hpp>
#include <v2x/traffic.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace v2x {

struct Transition {
    int next = 0;
    double probability = 0.0;
};

/// Finite MDP with per-state action sets; costs are immediate (unscaled).
struct FiniteMdp {
    int states = 0;
    std::vector<int> actions;                                // per state
    std::vector<std::vector<double>> cost;                   // [s][a]
    std::vector<std::vector<std::vector<Transition>>> next;  // [s][a] -> distribution

    int action_count(int s) const { return actions[static_cast<std::size_t>(s)]; }
};

/// Tabular Q with the same [s][a] layout as the MDP.
using QTable = std::vector<std::vector<double>>;

inline double sup_distance(const QTable& a, const QTable& b) {
    double d = 0.0;
    for (std::size_t s = 0; s < a.size(); ++s)
        for (std::size_t i = 0; i < a[s].size(); ++i) d = std::max(d, std::abs(a[s][i] - b[s][i]));
    return d;
}

/// Q*(s,a) = (1-gamma) c(s,a) + gamma * sum_s' P(s'|s,a) min_a' Q*(s',a').
inline QTable value_iteration(const FiniteMdp& mdp, double gamma, double tol = 1e-12, int max_iter = 100000) {
    QTable q(static_cast<std::size_t>(mdp.states));
    for (int s = 0; s < mdp.states; ++s) q[static_cast<std::size_t>(s)].assign(static_cast<std::size_t>(mdp.action_count(s)), 0.0);
    std::vector<double> v(static_cast<std::size_t>(mdp.states), 0.0);
    for (int it = 0; it < max_iter; ++it) {
        double change = 0.0;
        for (int s = 0; s < mdp.states; ++s) {
            for (int a = 0; a < mdp.action_count(s); ++a) {
                double expect = 0.0;
                for (const auto& tr : mdp.next[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)])
                    expect += tr.probability * v[static_cast<std::size_t>(tr.next)];
                const double updated = (1.0 - gamma) * mdp.cost[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] + gamma * expect;
                change = std::max(change, std::abs(updated - q[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]));
                q[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] = updated;
            }
        }
        for (int s = 0; s < mdp.states; ++s) {
            const auto& row = q[static_cast<std::size_t>(s)];
            v[static_cast<std::size_t>(s)] = *std::min_element(row.begin(), row.end());
        }
        if (change < tol) break;
    }
    return q;
}

/// Q + alpha * ((1-gamma) f + gamma Q(s',a') - Q).
inline double sarsa_update(double q, double cost, double q_next, double alpha, double gamma) {
    return q + alpha * ((1.0 - gamma) * cost + gamma * q_next - q);
}

struct SarsaConfig {
    long episodes = 10000000;
    int episode_length = 5;
    double alpha_exponent = 0.7;    // alpha = 1 / (1 + visits(s,a))^0.7
    double epsilon_scale = 1.0;     // epsilon = scale / (1 + visits(s))^exponent
    double epsilon_exponent = 0.5;
};

struct SarsaResult {
    QTable q;
    std::vector<std::vector<long>> visits;
};

namespace detail {

inline int sample_next(const std::vector<Transition>& dist, Rng& rng) {
    double u = uniform01(rng);
    for (const auto& tr : dist) {
        if (u < tr.probability) return tr.next;
        u -= tr.probability;
    }
    return dist.back().next;
}

inline int argmin_action(const std::vector<double>& row) {
    return static_cast<int>(std::min_element(row.begin(), row.end()) - row.begin());
}

}  // namespace detail

/// On-policy SARSA. Episodes start from a uniformly random (state, action)
/// and follow an epsilon-greedy policy whose epsilon decays per state.
inline SarsaResult tabular_sarsa(const FiniteMdp& mdp, double gamma, const SarsaConfig& cfg, Rng& rng) {
    SarsaResult out;
    out.q.resize(static_cast<std::size_t>(mdp.states));
    out.visits.resize(static_cast<std::size_t>(mdp.states));
    for (int s = 0; s < mdp.states; ++s) {
        out.q[static_cast<std::size_t>(s)].assign(static_cast<std::size_t>(mdp.action_count(s)), 0.0);
        out.visits[static_cast<std::size_t>(s)].assign(static_cast<std::size_t>(mdp.action_count(s)), 0);
    }
    std::vector<long> state_visits(static_cast<std::size_t>(mdp.states), 0);

    auto choose = [&](int s) {
        const double eps = cfg.epsilon_scale /
                           std::pow(1.0 + static_cast<double>(state_visits[static_cast<std::size_t>(s)]), cfg.epsilon_exponent);
        if (uniform01(rng) < eps) return static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(mdp.action_count(s))));
        return detail::argmin_action(out.q[static_cast<std::size_t>(s)]);
    };

    for (long ep = 0; ep < cfg.episodes; ++ep) {
        int s = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(mdp.states)));
        int a = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(mdp.action_count(s))));
        for (int t = 0; t < cfg.episode_length; ++t) {
            const auto su = static_cast<std::size_t>(s);
            const auto au = static_cast<std::size_t>(a);
            const int s2 = detail::sample_next(mdp.next[su][au], rng);
            ++state_visits[su];
            const int a2 = choose(s2);
            const long n = ++out.visits[su][au];
            const double alpha = 1.0 / std::pow(static_cast<double>(n), cfg.alpha_exponent);
            out.q[su][au] = sarsa_update(out.q[su][au], mdp.cost[su][au],
                                         out.q[static_cast<std::size_t>(s2)][static_cast<std::size_t>(a2)], alpha, gamma);
            s = s2;
            a = a2;
        }
    }
    return out;
}

/// Quantised single-group network: every pair sees each channel at one of a
/// few gain levels (i.i.d. per epoch), queues are capped and arrivals are
/// Binomial(max_packets, arrival_rate / max_packets).
struct TinyNetwork {
    int pairs = 2;
    int channels = 1;
    std::vector<double> gain_levels = {1e-9, 4e-9};
    std::vector<double> level_probability = {0.5, 0.5};
    int max_queue = 3;
    int max_packets = 1;
    LinkBudget budget;
    CostWeights weights{1.0, 1.0, 0.5, 0.9};
};

/// Gain level of `g` under a two-level split at `threshold` (0 low, 1 high).
inline int quantize_gain(double g, double threshold) { return g > threshold ? 1 : 0; }

struct TinyMdp {
    FiniteMdp mdp;
    // decoding helpers
    std::vector<std::vector<std::pair<int, int>>> joint_actions;  // per action: (channel, departures) per pair
    int local_states = 0;

    /// Local state index = levels (base L, channel 0 most significant) * (Q+1) + q.
    static int local_index(const TinyNetwork& net, const std::vector<int>& levels, int q) {
        int idx = 0;
        for (int l : levels) idx = idx * static_cast<int>(net.gain_levels.size()) + l;
        return idx * (net.max_queue + 1) + q;
    }
};

inline TinyMdp build_tiny_mdp(const TinyNetwork& net) {
    const int L = static_cast<int>(net.gain_levels.size());
    if (L < 1 || net.level_probability.size() != net.gain_levels.size()) throw InvalidStateError("bad gain levels");
    int level_combos = 1;
    for (int j = 0; j < net.channels; ++j) level_combos *= L;
    const int local = level_combos * (net.max_queue + 1);
    int states = 1;
    for (int k = 0; k < net.pairs; ++k) states *= local;

    TinyMdp out;
    out.local_states = local;

    // Feasible joint actions: distinct channels; off-air pairs schedule nothing.
    std::vector<std::pair<int, int>> per_pair{{-1, 0}};
    for (int j = 0; j < net.channels; ++j)
        for (int r = 0; r <= net.max_packets; ++r) per_pair.push_back({j, r});
    std::vector<std::vector<std::pair<int, int>>> joint{{}};
    for (int k = 0; k < net.pairs; ++k) {
        std::vector<std::vector<std::pair<int, int>>> grown;
        for (const auto& partial : joint) {
            for (const auto& choice : per_pair) {
                bool clash = false;
                for (const auto& other : partial) clash = clash || (choice.first >= 0 && other.first == choice.first);
                if (clash) continue;
                auto next = partial;
                next.push_back(choice);
                grown.push_back(std::move(next));
            }
        }
        joint = std::move(grown);
    }
    out.joint_actions = joint;

    const double p_arrival = std::min(1.0, net.weights.arrival_rate / net.max_packets);
    std::vector<double> arrival_pmf(static_cast<std::size_t>(net.max_packets) + 1, 0.0);
    for (int a = 0; a <= net.max_packets; ++a) {
        double c = 1.0;
        for (int i = 0; i < a; ++i) c = c * (net.max_packets - i) / (i + 1);
        arrival_pmf[static_cast<std::size_t>(a)] = c * std::pow(p_arrival, a) * std::pow(1.0 - p_arrival, net.max_packets - a);
    }
    std::vector<double> combo_prob(static_cast<std::size_t>(level_combos), 1.0);
    for (int c = 0; c < level_combos; ++c) {
        int rest = c;
        for (int j = 0; j < net.channels; ++j) {
            combo_prob[static_cast<std::size_t>(c)] *= net.level_probability[static_cast<std::size_t>(rest % L)];
            rest /= L;
        }
    }

    auto& mdp = out.mdp;
    mdp.states = states;
    mdp.actions.assign(static_cast<std::size_t>(states), static_cast<int>(joint.size()));
    mdp.cost.assign(static_cast<std::size_t>(states), std::vector<double>(joint.size(), 0.0));
    mdp.next.assign(static_cast<std::size_t>(states), std::vector<std::vector<Transition>>(joint.size()));

    for (int s = 0; s < states; ++s) {
        std::vector<int> locals(static_cast<std::size_t>(net.pairs));
        int rest = s;
        for (int k = net.pairs - 1; k >= 0; --k) {
            locals[static_cast<std::size_t>(k)] = rest % local;
            rest /= local;
        }
        for (std::size_t a = 0; a < joint.size(); ++a) {
            // Per pair: outcome distribution over next local states, and cost.
            std::vector<std::vector<Transition>> per;
            double cost = 0.0;
            for (int k = 0; k < net.pairs; ++k) {
                const int ls = locals[static_cast<std::size_t>(k)];
                const int q = ls % (net.max_queue + 1);
                const int combo = ls / (net.max_queue + 1);
                const auto [channel, r] = joint[a][static_cast<std::size_t>(k)];
                const bool on = channel >= 0;
                double power = 0.0;
                if (on) {
                    // channel 0 is the most significant digit
                    int digit = combo;
                    for (int j = net.channels - 1; j > channel; --j) digit /= L;
                    const double g = net.gain_levels[static_cast<std::size_t>(digit % L)];
                    power = transmit_power(std::min(r, q), g, net.budget, true);
                }
                cost += epoch_cost(q, power, net.weights);

                std::vector<Transition> dist;
                for (int arr = 0; arr <= net.max_packets; ++arr) {
                    const auto qs = step_queue(q, r, on, arr, net.max_queue);
                    for (int c = 0; c < level_combos; ++c) {
                        const double pr = arrival_pmf[static_cast<std::size_t>(arr)] * combo_prob[static_cast<std::size_t>(c)];
                        if (pr <= 0.0) continue;
                        dist.push_back({c * (net.max_queue + 1) + qs.queue, pr});
                    }
                }
                per.push_back(std::move(dist));
            }
            mdp.cost[static_cast<std::size_t>(s)][a] = cost;

            std::vector<Transition> jointd{{0, 1.0}};
            for (const auto& d : per) {
                std::vector<Transition> grown;
                for (const auto& base : jointd)
                    for (const auto& tr : d) grown.push_back({base.next * local + tr.next, base.probability * tr.probability});
                jointd = std::move(grown);
            }
            // merge duplicates
            std::sort(jointd.begin(), jointd.end(), [](const auto& x, const auto& y) { return x.next < y.next; });
            std::vector<Transition> merged;
            for (const auto& tr : jointd) {
                if (!merged.empty() && merged.back().next == tr.next) merged.back().probability += tr.probability;
                else merged.push_back(tr);
            }
            mdp.next[static_cast<std::size_t>(s)][a] = std::move(merged);
        }
    }
    return out;
}

}  // namespace v2x
