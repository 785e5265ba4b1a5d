#pragma once

// Min-cost assignment of pairs to channels within one group, where each pair
// may also stay off-air.

#include <v2x/errors.hpp>

#include <cmath>
#include <limits>
#include <vector>

namespace v2x {

/// Square min-cost perfect matching (Hungarian method with potentials).
/// Returns the column matched to each row.
inline std::vector<int> hungarian_square(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

struct Assignment {
    std::vector<int> channel;  // per pair: channel index, or -1 for no channel
    double total = 0.0;
};

/// `score[k][j]` for j < J is pair k's cost on channel j; `score[k][J]` is its
/// cost without a channel. Minimises the summed score subject to each channel
/// serving at most one pair.
inline Assignment assign_min_cost(const std::vector<std::vector<double>>& score) {
    Assignment out;
    const int pairs = static_cast<int>(score.size());
    if (pairs == 0) return out;
    const int channels = static_cast<int>(score.front().size()) - 1;
    if (channels < 0) throw InvalidScoreError("score rows need a no-channel column");

    double magnitude = 1.0;
    for (const auto& row : score) {
        if (static_cast<int>(row.size()) != channels + 1) throw InvalidScoreError("ragged score matrix");
        for (double s : row) {
            if (!std::isfinite(s)) throw InvalidScoreError("score entries must be finite");
            magnitude += std::abs(s);
        }
    }
    // Columns: the channels, then one private "off-air" slot per pair.
    // Rows beyond `pairs` are slack rows absorbing unused columns at zero cost.
    const int size = pairs + channels;
    const double forbidden = 4.0 * magnitude;
    std::vector<std::vector<double>> cost(static_cast<std::size_t>(size), std::vector<double>(static_cast<std::size_t>(size), 0.0));
    for (int k = 0; k < pairs; ++k) {
        auto& row = cost[static_cast<std::size_t>(k)];
        for (int j = 0; j < channels; ++j) row[static_cast<std::size_t>(j)] = score[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
        for (int s = 0; s < pairs; ++s)
            row[static_cast<std::size_t>(channels + s)] = s == k ? score[static_cast<std::size_t>(k)][static_cast<std::size_t>(channels)] : forbidden;
    }

    const auto match = hungarian_square(cost);
    out.channel.assign(static_cast<std::size_t>(pairs), -1);
    for (int k = 0; k < pairs; ++k) {
        const int col = match[static_cast<std::size_t>(k)];
        if (col < channels) out.channel[static_cast<std::size_t>(k)] = col;
        out.total += score[static_cast<std::size_t>(k)][static_cast<std::size_t>(col < channels ? col : channels)];
    }
    return out;
}

}  // namespace v2x
