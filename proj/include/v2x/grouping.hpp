#pragma once

// Geographic grouping of VUE-pairs by spectral clustering.

#include <v2x/errors.hpp>
#include <v2x/grid.hpp>
#include <v2x/rng.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace v2x {

struct Grouping {
    std::vector<int> assignment;  // pair -> group in [0, groups)
    int groups = 1;
    long epoch_created = 0;

    int group_of(std::size_t pair) const { return assignment.at(pair); }

    std::vector<std::vector<int>> members() const {
        std::vector<std::vector<int>> out(static_cast<std::size_t>(groups));
        for (std::size_t k = 0; k < assignment.size(); ++k) {
            out[static_cast<std::size_t>(assignment[k])].push_back(static_cast<int>(k));
        }
        return out;
    }

    int size_of(int group) const {
        return static_cast<int>(std::count(assignment.begin(), assignment.end(), group));
    }

    friend bool operator==(const Grouping&, const Grouping&) = default;
};

struct ClusteringParams {
    double bandwidth = 0.0;  // Gaussian kernel width; <= 0 means median pairwise distance
    int kmeans_iterations = 100;
    double jacobi_tolerance = 1e-10;
};

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns eigenvalues
/// ascending with matching eigenvectors as columns.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> jacobi_eigen(Eigen::MatrixXd a, double tol = 1e-10,
                                                                 int max_sweeps = 100) {
    const Eigen::Index n = a.rows();
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(off) < tol) break;

        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) < a(j, j); });
    Eigen::VectorXd values(n);
    Eigen::MatrixXd vectors(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        values(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
        vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
    }
    return {values, vectors};
}

namespace detail {

/// Lloyd k-means with k-means++ seeding over the rows of `x`.
inline std::vector<int> kmeans(const Eigen::MatrixXd& x, int k, int iterations, Rng& rng) {
    const auto n = static_cast<std::size_t>(x.rows());
    const auto kk = static_cast<std::size_t>(k);
    Eigen::MatrixXd centres(k, x.cols());

    std::vector<bool> chosen(n, false);
    std::size_t first = uniform_index(rng, n);
    centres.row(0) = x.row(static_cast<Eigen::Index>(first));
    chosen[first] = true;
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    for (std::size_t c = 1; c < kk; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], (x.row(static_cast<Eigen::Index>(i)) - centres.row(static_cast<Eigen::Index>(c - 1)))
                                        .squaredNorm());
            total += d2[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            double u = uniform01(rng) * total;
            for (std::size_t i = 0; i < n; ++i) {
                if (d2[i] <= 0.0) continue;
                pick = i;
                if (u < d2[i]) break;
                u -= d2[i];
            }
        } else {
            // every point sits on a centre; take an unused one
            std::vector<std::size_t> free;
            for (std::size_t i = 0; i < n; ++i)
                if (!chosen[i]) free.push_back(i);
            pick = free[uniform_index(rng, free.size())];
        }
        chosen[pick] = true;
        centres.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(pick));
    }

    std::vector<int> label(n, -1);
    auto recompute = [&] {
        centres.setZero();
        std::vector<int> count(kk, 0);
        for (std::size_t i = 0; i < n; ++i) {
            centres.row(label[i]) += x.row(static_cast<Eigen::Index>(i));
            ++count[static_cast<std::size_t>(label[i])];
        }
        for (std::size_t c = 0; c < kk; ++c)
            if (count[c] > 0) centres.row(static_cast<Eigen::Index>(c)) /= count[c];
        return count;
    };
    // Empty clusters take the point of the largest cluster farthest from its centre.
    auto repair = [&] {
        for (;;) {
            auto count = recompute();
            auto empty = std::find(count.begin(), count.end(), 0);
            if (empty == count.end()) return;
            const auto largest = static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
            std::size_t far = n;
            double best = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (label[i] != largest) continue;
                const double d = (x.row(static_cast<Eigen::Index>(i)) - centres.row(largest)).squaredNorm();
                if (d > best) {
                    best = d;
                    far = i;
                }
            }
            label[far] = static_cast<int>(empty - count.begin());
        }
    };

    for (int it = 0; it < iterations; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double d = (x.row(static_cast<Eigen::Index>(i)) - centres.row(c)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (label[i] != best) {
                label[i] = best;
                changed = true;
            }
        }
        repair();
        if (!changed) break;
    }
    return label;
}

/// Renumbers groups in order of first appearance.
inline std::vector<int> canonical_labels(const std::vector<int>& label, int k) {
    std::vector<int> map(static_cast<std::size_t>(k), -1);
    std::vector<int> out(label.size());
    int next = 0;
    for (std::size_t i = 0; i < label.size(); ++i) {
        auto& m = map[static_cast<std::size_t>(label[i])];
        if (m < 0) m = next++;
        out[i] = m;
    }
    return out;
}

}  // namespace detail

/// Partitions pairs into `groups` clusters: Gaussian affinities, symmetric
/// normalised Laplacian, its bottom eigenvectors, then k-means on the rows.
inline Grouping spectral_cluster(std::span<const Point> positions, int groups, Rng& rng, long epoch = 0,
                                 const ClusteringParams& params = {}) {
    const auto n = static_cast<Eigen::Index>(positions.size());
    if (groups < 1 || n < groups) throw InvalidStateError("spectral_cluster needs K >= I >= 1");

    Grouping out;
    out.groups = groups;
    out.epoch_created = epoch;
    if (groups == 1) {
        out.assignment.assign(positions.size(), 0);
        return out;
    }

    Eigen::MatrixXd dist(n, n);
    std::vector<double> pairwise;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            dist(i, j) = distance(positions[static_cast<std::size_t>(i)], positions[static_cast<std::size_t>(j)]);
            if (j > i) pairwise.push_back(dist(i, j));
        }
    }
    double sigma = params.bandwidth;
    if (sigma <= 0.0) {
        std::nth_element(pairwise.begin(), pairwise.begin() + static_cast<std::ptrdiff_t>(pairwise.size() / 2),
                         pairwise.end());
        sigma = pairwise[pairwise.size() / 2];
        if (!(sigma > 0.0)) sigma = 1.0;
    }

    // Self-affinity of 1 keeps every degree >= 1, so duplicates never divide by zero.
    Eigen::MatrixXd affinity = (-dist.array().square() / (2.0 * sigma * sigma)).exp().matrix();
    Eigen::VectorXd inv_sqrt_deg = affinity.rowwise().sum().array().rsqrt().matrix();
    Eigen::MatrixXd laplacian =
        Eigen::MatrixXd::Identity(n, n) - inv_sqrt_deg.asDiagonal() * affinity * inv_sqrt_deg.asDiagonal();
    laplacian = 0.5 * (laplacian + laplacian.transpose());

    auto [values, vectors] = jacobi_eigen(laplacian, params.jacobi_tolerance);
    Eigen::MatrixXd embedding = vectors.leftCols(groups);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = embedding.row(i).norm();
        if (norm > 0.0) embedding.row(i) /= norm;
    }

    out.assignment = detail::canonical_labels(detail::kmeans(embedding, groups, params.kmeans_iterations, rng), groups);
    return out;
}

/// Re-clusters on schedule (epoch a multiple of `interval`), otherwise returns the input.
inline Grouping maybe_regroup(const Grouping& current, long epoch, int interval, std::span<const Point> positions,
                              int groups, Rng& rng, const ClusteringParams& params = {}) {
    if (interval < 1) throw InvalidStateError("clustering interval must be >= 1");
    if (epoch % interval != 0) return current;
    return spectral_cluster(positions, groups, rng, epoch, params);
}

}  // namespace v2x
