#pragma once

// Packet arrivals, queue evolution, transmit power and the per-epoch cost.

#include <v2x/errors.hpp>
#include <v2x/rng.hpp>

#include <algorithm>
#include <cmath>

namespace v2x {

struct LinkBudget {
    double bandwidth_hz = 500e3;
    double noise_psd = 7.95e-21;     // W/Hz
    double interference_w = 2e-9;    // aggregate inter-group interference
    double packet_bits = 9000.0;
    double epoch_s = 0.018;
};

struct CostWeights {
    double delay_weight = 30.0;
    double power_weight = 1.0;
    double arrival_rate = 1.0;  // packets per epoch
    double discount = 0.9;
};

enum class ArrivalModel {
    Poisson,   // truncated at the per-epoch bound
    Binomial,  // bound independent Bernoulli(rate/bound) packets
};

struct ArrivalDraw {
    int packets = 0;
    bool truncated = false;
};

/// Poisson(rate) by CDF inversion, clipped at `bound`.
inline ArrivalDraw draw_arrivals(double rate, int bound, ArrivalModel model, Rng& rng) {
    if (model == ArrivalModel::Binomial) {
        const double p = std::min(1.0, rate / static_cast<double>(bound));
        int n = 0;
        for (int i = 0; i < bound; ++i) n += uniform01(rng) < p ? 1 : 0;
        return {n, false};
    }
    const double u = uniform01(rng);
    double pmf = std::exp(-rate);
    double cdf = pmf;
    int k = 0;
    while (u >= cdf && k < bound) {
        ++k;
        pmf *= rate / static_cast<double>(k);
        cdf += pmf;
    }
    return {k, u >= cdf};
}

struct QueueStep {
    int queue = 0;
    int departed = 0;
    int dropped = 0;  // arrivals beyond the buffer capacity
};

/// q' = max(q - r*1{allocated}, 0) + a, clipped at `capacity`.
inline QueueStep step_queue(int queue, int departures, bool allocated, int arrivals,
                            int capacity = 1 << 30) {
    if (queue < 0 || departures < 0 || arrivals < 0) {
        throw InvalidStateError("queue quantities must be non-negative");
    }
    QueueStep out;
    out.departed = allocated ? std::min(departures, queue) : 0;
    const int next = queue - out.departed + arrivals;
    out.queue = std::min(next, capacity);
    out.dropped = next - out.queue;
    return out;
}

/// Power needed to push `packets` through a channel of power gain `gain` within one epoch.
inline double transmit_power(int packets, double gain, const LinkBudget& budget, bool allocated) {
    if (!(gain > 0.0) || !std::isfinite(gain)) throw InvalidGainError("channel gain must be positive and finite");
    if (!allocated || packets <= 0) return 0.0;
    const double exponent = budget.packet_bits * packets / (budget.bandwidth_hz * budget.epoch_s);
    return (budget.interference_w + budget.bandwidth_hz * budget.noise_psd) / gain * (std::exp2(exponent) - 1.0);
}

/// Weighted delay (queue / rate) plus weighted power.
inline double epoch_cost(int queue, double power_w, const CostWeights& w) {
    return w.delay_weight * static_cast<double>(queue) / w.arrival_rate + w.power_weight * power_w;
}

}  // namespace v2x
