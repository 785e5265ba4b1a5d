#pragma once

// Finite-difference audit of the analytic TD-loss gradient.

#include <v2x/neural.hpp>
#include <v2x/rng.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace v2x {

struct TensorAudit {
    std::string name;
    std::size_t count = 0;
    double max_abs_error = 0.0;
    double max_rel_error = 0.0;
};

struct GradientAudit {
    std::vector<TensorAudit> tensors;
    double max_rel_error = 0.0;
};

/// Loss only, same reduction as `backward`.
inline double td_loss(const NetParams& p, const std::vector<TdGroup>& batch, LossMode mode) {
    std::vector<Eigen::MatrixXd> seqs;
    for (const auto& g : batch)
        for (const auto& s : g) seqs.push_back(s.sequence);
    const Eigen::MatrixXd q = forward_batch(p, make_batch(seqs));
    double loss = 0.0;
    Eigen::Index col = 0;
    for (const auto& g : batch) {
        if (mode == LossMode::SummedTd) {
            double sum = 0.0;
            for (const auto& s : g) sum += s.target - q(s.action, col++);
            loss += sum * sum;
        } else {
            for (const auto& s : g) {
                const double td = s.target - q(s.action, col++);
                loss += td * td;
            }
        }
    }
    return loss / static_cast<double>(batch.size());
}

/// Relative error |a - n| / max(|a|, |n|, floor); the floor keeps entries whose
/// true gradient is ~0 from dominating through rounding noise.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central differences on every parameter of `p`.
inline GradientAudit audit_gradient(const NetParams& p, const std::vector<TdGroup>& batch, LossMode mode,
                                    double step = 1e-5) {
    const auto analytic = backward(p, batch, mode).grad;
    std::vector<Eigen::MatrixXd> grads;
    analytic.for_each_tensor([&](const std::string&, Eigen::Ref<const Eigen::MatrixXd> g) { grads.push_back(g); });

    NetParams probe = p;
    GradientAudit out;
    std::size_t t = 0;
    probe.for_each_tensor([&](const std::string& name, Eigen::Ref<Eigen::MatrixXd> w) {
        TensorAudit a{name, static_cast<std::size_t>(w.size()), 0.0, 0.0};
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            for (Eigen::Index r = 0; r < w.rows(); ++r) {
                const double saved = w(r, c);
                w(r, c) = saved + step;
                const double up = td_loss(probe, batch, mode);
                w(r, c) = saved - step;
                const double down = td_loss(probe, batch, mode);
                w(r, c) = saved;
                const double numeric = (up - down) / (2.0 * step);
                const double g = grads[t](r, c);
                a.max_abs_error = std::max(a.max_abs_error, std::abs(g - numeric));
                a.max_rel_error = std::max(a.max_rel_error, relative_error(g, numeric));
            }
        }
        out.max_rel_error = std::max(out.max_rel_error, a.max_rel_error);
        out.tensors.push_back(a);
        ++t;
    });
    return out;
}

/// Random network and TD batch for the audit: `experiences` groups of `pairs`
/// samples each.
inline std::pair<NetParams, std::vector<TdGroup>> random_audit_problem(const NetArchitecture& arch, int experiences,
                                                                        int pairs, Rng& rng) {
    NetParams p = NetParams::initialise(arch, rng);
    // Push biases away from zero so every path carries gradient.
    p.for_each_tensor([&](const std::string& name, Eigen::Ref<Eigen::MatrixXd> m) {
        if (name.ends_with("bias"))
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += 0.2 * (2.0 * uniform01(rng) - 1.0);
    });
    std::vector<TdGroup> batch(static_cast<std::size_t>(experiences));
    for (auto& g : batch) {
        for (int k = 0; k < pairs; ++k) {
            TdSample s;
            s.sequence = Eigen::MatrixXd(arch.sequence_length, arch.input_dim);
            for (Eigen::Index i = 0; i < s.sequence.size(); ++i) s.sequence.data()[i] = 2.0 * uniform01(rng) - 1.0;
            s.action = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(arch.output_dim)));
            s.target = 2.0 * uniform01(rng) - 1.0;
            g.push_back(std::move(s));
        }
    }
    return {std::move(p), std::move(batch)};
}

}  // namespace v2x
