#pragma once

// Recurrent Q-network: one LSTM layer over a window of encoded observations,
// rectified dense layers on the final hidden state, and a linear head with one
// output per (channel or none) x departures action.
//
// Everything is batched column-wise: a batch of B sequences of length N is N
// matrices of shape (input_dim x B).

#include <v2x/errors.hpp>
#include <v2x/rng.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace v2x {

struct NetArchitecture {
    int input_dim = 1;
    int sequence_length = 1;
    int lstm_hidden = 64;
    std::vector<int> dense = {64, 64};
    int output_dim = 1;

    friend bool operator==(const NetArchitecture&, const NetArchitecture&) = default;
};

/// All trainable tensors. Also serves as the gradient container and as Adam's
/// moment storage, since those share the parameter shapes.
struct NetParams {
    NetArchitecture arch;
    Eigen::MatrixXd w_in;    // 4H x D, gate blocks: input, forget, output, candidate
    Eigen::MatrixXd w_rec;   // 4H x H
    Eigen::VectorXd b_gate;  // 4H
    std::vector<Eigen::MatrixXd> w_dense;  // hidden layers, then the head
    std::vector<Eigen::VectorXd> b_dense;

    static NetParams zeros(const NetArchitecture& arch) {
        NetParams p;
        p.arch = arch;
        const int h = arch.lstm_hidden;
        p.w_in = Eigen::MatrixXd::Zero(4 * h, arch.input_dim);
        p.w_rec = Eigen::MatrixXd::Zero(4 * h, h);
        p.b_gate = Eigen::VectorXd::Zero(4 * h);
        int prev = h;
        for (int width : arch.dense) {
            p.w_dense.push_back(Eigen::MatrixXd::Zero(width, prev));
            p.b_dense.push_back(Eigen::VectorXd::Zero(width));
            prev = width;
        }
        p.w_dense.push_back(Eigen::MatrixXd::Zero(arch.output_dim, prev));
        p.b_dense.push_back(Eigen::VectorXd::Zero(arch.output_dim));
        return p;
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, forget-gate bias 1.
    static NetParams initialise(const NetArchitecture& arch, Rng& rng) {
        NetParams p = zeros(arch);
        auto fill = [&rng](Eigen::Ref<Eigen::MatrixXd> m, int fan_in) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = (2.0 * uniform01(rng) - 1.0) * bound;
        };
        const int h = arch.lstm_hidden;
        fill(p.w_in, arch.input_dim + h);
        fill(p.w_rec, arch.input_dim + h);
        p.b_gate.segment(h, h).setOnes();
        for (std::size_t l = 0; l < p.w_dense.size(); ++l) fill(p.w_dense[l], static_cast<int>(p.w_dense[l].cols()));
        return p;
    }

    /// Visits every tensor as (name, matrix view) in a fixed order.
    template <class F>
    void for_each_tensor(F&& f) {
        f(std::string("lstm.w_in"), Eigen::Ref<Eigen::MatrixXd>(w_in));
        f(std::string("lstm.w_rec"), Eigen::Ref<Eigen::MatrixXd>(w_rec));
        f(std::string("lstm.bias"), Eigen::Ref<Eigen::MatrixXd>(b_gate));
        for (std::size_t l = 0; l < w_dense.size(); ++l) {
            const std::string base = l + 1 == w_dense.size() ? "head" : "dense" + std::to_string(l);
            f(base + ".weight", Eigen::Ref<Eigen::MatrixXd>(w_dense[l]));
            f(base + ".bias", Eigen::Ref<Eigen::MatrixXd>(b_dense[l]));
        }
    }

    template <class F>
    void for_each_tensor(F&& f) const {
        const_cast<NetParams*>(this)->for_each_tensor(
            [&](const std::string& name, Eigen::Ref<Eigen::MatrixXd> m) { f(name, Eigen::Ref<const Eigen::MatrixXd>(m)); });
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for_each_tensor([&](const std::string&, Eigen::Ref<const Eigen::MatrixXd> m) { n += static_cast<std::size_t>(m.size()); });
        return n;
    }

    bool all_finite() const {
        bool ok = true;
        for_each_tensor([&](const std::string&, Eigen::Ref<const Eigen::MatrixXd> m) { ok = ok && m.allFinite(); });
        return ok;
    }

    void set_zero() {
        for_each_tensor([](const std::string&, Eigen::Ref<Eigen::MatrixXd> m) { m.setZero(); });
    }
};

using Gradients = NetParams;

/// One batch of equal-length sequences; steps[t] is (input_dim x batch).
struct SequenceBatch {
    std::vector<Eigen::MatrixXd> steps;

    Eigen::Index size() const { return steps.empty() ? 0 : steps.front().cols(); }
};

/// Packs single sequences (rows = epochs, oldest first) into a batch.
inline SequenceBatch make_batch(const std::vector<Eigen::MatrixXd>& sequences) {
    SequenceBatch b;
    if (sequences.empty()) return b;
    const auto n = sequences.front().rows();
    const auto d = sequences.front().cols();
    b.steps.assign(static_cast<std::size_t>(n), Eigen::MatrixXd(d, static_cast<Eigen::Index>(sequences.size())));
    for (std::size_t s = 0; s < sequences.size(); ++s) {
        if (sequences[s].rows() != n || sequences[s].cols() != d) throw ShapeError("sequences differ in shape");
        for (Eigen::Index t = 0; t < n; ++t) b.steps[static_cast<std::size_t>(t)].col(static_cast<Eigen::Index>(s)) = sequences[s].row(t).transpose();
    }
    return b;
}

struct ForwardCache {
    std::vector<Eigen::MatrixXd> gates;  // activated gates per step (4H x B)
    std::vector<Eigen::MatrixXd> cell;   // c_t, index 0 is the zero initial state
    std::vector<Eigen::MatrixXd> hidden; // h_t, index 0 is the zero initial state
    std::vector<Eigen::MatrixXd> pre;    // dense pre-activations
    std::vector<Eigen::MatrixXd> act;    // dense inputs; act[0] = h_N
};

namespace detail {

inline Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

inline void check_batch(const NetParams& p, const SequenceBatch& batch) {
    if (static_cast<int>(batch.steps.size()) != p.arch.sequence_length) {
        throw ShapeError("sequence length " + std::to_string(batch.steps.size()) + " != " +
                         std::to_string(p.arch.sequence_length));
    }
    for (const auto& x : batch.steps) {
        if (x.rows() != p.arch.input_dim) throw ShapeError("input width mismatch");
        if (x.cols() != batch.size()) throw ShapeError("ragged batch");
    }
}

}  // namespace detail

/// Q values for every sequence in the batch, (output_dim x B).
inline Eigen::MatrixXd forward_batch(const NetParams& p, const SequenceBatch& batch, ForwardCache* cache = nullptr) {
    detail::check_batch(p, batch);
    const Eigen::Index h = p.arch.lstm_hidden;
    const Eigen::Index b = batch.size();
    Eigen::MatrixXd hs = Eigen::MatrixXd::Zero(h, b);
    Eigen::MatrixXd cs = Eigen::MatrixXd::Zero(h, b);
    if (cache) {
        cache->gates.clear();
        cache->cell.assign(1, cs);
        cache->hidden.assign(1, hs);
        cache->pre.clear();
        cache->act.clear();
    }
    Eigen::MatrixXd z(4 * h, b);
    for (const auto& x : batch.steps) {
        z.noalias() = p.w_in * x;
        z.noalias() += p.w_rec * hs;
        z.colwise() += p.b_gate;
        z.topRows(3 * h) = detail::sigmoid(z.topRows(3 * h));
        z.bottomRows(h) = z.bottomRows(h).array().tanh().matrix();
        cs = (z.middleRows(h, h).array() * cs.array() + z.topRows(h).array() * z.bottomRows(h).array()).matrix();
        hs = (z.middleRows(2 * h, h).array() * cs.array().tanh()).matrix();
        if (cache) {
            cache->gates.push_back(z);
            cache->cell.push_back(cs);
            cache->hidden.push_back(hs);
        }
    }

    Eigen::MatrixXd a = std::move(hs);
    const std::size_t layers = p.w_dense.size();
    for (std::size_t l = 0; l < layers; ++l) {
        if (cache) cache->act.push_back(a);
        Eigen::MatrixXd pre = p.w_dense[l] * a;
        pre.colwise() += p.b_dense[l];
        if (l + 1 == layers) return pre;
        a = pre.cwiseMax(0.0);
        if (cache) cache->pre.push_back(std::move(pre));
    }
    return a;
}

/// Q values for a single sequence (rows = epochs, oldest first).
inline Eigen::VectorXd forward(const NetParams& p, const Eigen::MatrixXd& sequence) {
    if (sequence.cols() != p.arch.input_dim || sequence.rows() != p.arch.sequence_length) {
        throw ShapeError("sequence must be sequence_length x input_dim");
    }
    return forward_batch(p, make_batch({sequence})).col(0);
}

/// Backpropagation through time of an upstream gradient on the outputs.
/// Accumulates into `grad` (which must have the parameter shapes).
inline void backward_batch(const NetParams& p, const SequenceBatch& batch, const ForwardCache& cache,
                           const Eigen::MatrixXd& d_out, Gradients& grad) {
    const Eigen::Index h = p.arch.lstm_hidden;
    const std::size_t layers = p.w_dense.size();

    Eigen::MatrixXd da = d_out;
    for (std::size_t l = layers; l-- > 0;) {
        if (l + 1 < layers) da = (cache.pre[l].array() > 0.0).select(da, 0.0);
        grad.w_dense[l].noalias() += da * cache.act[l].transpose();
        grad.b_dense[l] += da.rowwise().sum();
        da = p.w_dense[l].transpose() * da;
    }

    Eigen::MatrixXd dh = std::move(da);
    Eigen::MatrixXd dc = Eigen::MatrixXd::Zero(h, batch.size());
    Eigen::MatrixXd dz(4 * h, batch.size());
    for (std::size_t t = batch.steps.size(); t-- > 0;) {
        const auto& g = cache.gates[t];
        const auto& c = cache.cell[t + 1];
        const auto& c_prev = cache.cell[t];
        const Eigen::ArrayXXd tc = c.array().tanh();
        const auto gi = g.topRows(h).array();
        const auto gf = g.middleRows(h, h).array();
        const auto go = g.middleRows(2 * h, h).array();
        const auto gg = g.bottomRows(h).array();

        dc = (dc.array() + dh.array() * go * (1.0 - tc.square())).matrix();
        dz.topRows(h) = (dc.array() * gg * gi * (1.0 - gi)).matrix();
        dz.middleRows(h, h) = (dc.array() * c_prev.array() * gf * (1.0 - gf)).matrix();
        dz.middleRows(2 * h, h) = (dh.array() * tc * go * (1.0 - go)).matrix();
        dz.bottomRows(h) = (dc.array() * gi * (1.0 - gg.square())).matrix();
        dc = (dc.array() * gf).matrix();

        grad.w_in.noalias() += dz * batch.steps[t].transpose();
        grad.w_rec.noalias() += dz * cache.hidden[t].transpose();
        grad.b_gate += dz.rowwise().sum();
        dh.noalias() = p.w_rec.transpose() * dz;
    }
}

enum class LossMode {
    SummedTd,  // square of the summed per-pair TD errors of an experience
    PerPair,   // sum of per-pair squared TD errors
};

struct TdSample {
    Eigen::MatrixXd sequence;  // sequence_length x input_dim
    int action = 0;
    double target = 0.0;
};

/// All pairs' samples from one experience.
using TdGroup = std::vector<TdSample>;

struct LossAndGradient {
    Gradients grad;
    double loss = 0.0;
};

/// Batched core: column s of `batch` is a sample with `actions[s]` and
/// `targets[s]`; `group_end[e]` is one past the last column of experience e.
inline LossAndGradient td_loss_and_gradient(const NetParams& p, const SequenceBatch& batch,
                                            const std::vector<int>& actions, const std::vector<double>& targets,
                                            const std::vector<std::size_t>& group_end, LossMode mode) {
    if (group_end.empty()) throw InvalidTargetError("empty batch");
    for (double y : targets)
        if (!std::isfinite(y)) throw InvalidTargetError("training target is not finite");

    ForwardCache cache;
    const Eigen::MatrixXd q = forward_batch(p, batch, &cache);
    Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(q.rows(), q.cols());
    const double scale = 1.0 / static_cast<double>(group_end.size());

    LossAndGradient out{Gradients::zeros(p.arch), 0.0};
    std::size_t begin = 0;
    for (std::size_t end : group_end) {
        if (mode == LossMode::SummedTd) {
            double sum = 0.0;
            for (std::size_t s = begin; s < end; ++s) sum += targets[s] - q(actions[s], static_cast<Eigen::Index>(s));
            out.loss += scale * sum * sum;
            for (std::size_t s = begin; s < end; ++s) d_out(actions[s], static_cast<Eigen::Index>(s)) = -2.0 * scale * sum;
        } else {
            for (std::size_t s = begin; s < end; ++s) {
                const double td = targets[s] - q(actions[s], static_cast<Eigen::Index>(s));
                out.loss += scale * td * td;
                d_out(actions[s], static_cast<Eigen::Index>(s)) = -2.0 * scale * td;
            }
        }
        begin = end;
    }
    backward_batch(p, batch, cache, d_out, out.grad);
    return out;
}

/// Loss averaged over experiences and its exact gradient, targets held fixed.
inline LossAndGradient backward(const NetParams& p, const std::vector<TdGroup>& batch,
                                LossMode mode = LossMode::SummedTd) {
    if (batch.empty()) throw InvalidTargetError("empty batch");
    std::vector<Eigen::MatrixXd> seqs;
    std::vector<int> actions;
    std::vector<double> targets;
    std::vector<std::size_t> ends;
    for (const auto& group : batch) {
        for (const auto& s : group) {
            if (s.action < 0 || s.action >= p.arch.output_dim) throw ShapeError("action index out of range");
            seqs.push_back(s.sequence);
            actions.push_back(s.action);
            targets.push_back(s.target);
        }
        ends.push_back(seqs.size());
    }
    return td_loss_and_gradient(p, make_batch(seqs), actions, targets, ends, mode);
}

struct AdamOptimizer {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long steps = 0;
    NetParams m;
    NetParams v;

    AdamOptimizer() = default;
    AdamOptimizer(const NetArchitecture& arch, double lr)
        : learning_rate(lr), m(NetParams::zeros(arch)), v(NetParams::zeros(arch)) {}
};

/// One bias-corrected adaptive-moment step.
inline void apply_update(NetParams& params, const Gradients& grad, AdamOptimizer& opt) {
    if (!(params.arch == grad.arch)) throw ShapeError("gradient shape does not match parameters");
    ++opt.steps;
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.steps));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.steps));
    std::vector<Eigen::Ref<Eigen::MatrixXd>> ps, ms, vs;
    std::vector<Eigen::Ref<const Eigen::MatrixXd>> gs;
    params.for_each_tensor([&](const std::string&, Eigen::Ref<Eigen::MatrixXd> t) { ps.push_back(t); });
    opt.m.for_each_tensor([&](const std::string&, Eigen::Ref<Eigen::MatrixXd> t) { ms.push_back(t); });
    opt.v.for_each_tensor([&](const std::string&, Eigen::Ref<Eigen::MatrixXd> t) { vs.push_back(t); });
    grad.for_each_tensor([&](const std::string&, Eigen::Ref<const Eigen::MatrixXd> t) { gs.push_back(t); });
    for (std::size_t i = 0; i < ps.size(); ++i) {
        ms[i] = opt.beta1 * ms[i] + (1.0 - opt.beta1) * gs[i];
        vs[i] = opt.beta2 * vs[i] + (1.0 - opt.beta2) * gs[i].cwiseProduct(gs[i]);
        ps[i].array() -= opt.learning_rate * (ms[i].array() / c1) / ((vs[i].array() / c2).sqrt() + opt.epsilon);
    }
}

// ---------------------------------------------------------------------------
// Checkpoint file: little-endian binary
//   u32 format version
//   u32 input_dim, u32 sequence_length, u32 lstm_hidden,
//   u32 dense layer count, u32 width per layer, u32 output_dim
//   u32 tensor count, then per tensor:
//     u32 name length, name bytes, u32 rank, u64 dims[rank], f64 data (row-major)

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put(std::ostream& os, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    os.write(buf, sizeof(T));
}

template <class T>
T get(std::istream& is) {
    char buf[sizeof(T)];
    if (!is.read(buf, sizeof(T))) throw FormatError("truncated checkpoint");
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

}  // namespace detail

inline void save_checkpoint(std::ostream& os, const NetParams& p) {
    using detail::put;
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.arch.input_dim));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.arch.sequence_length));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.arch.lstm_hidden));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.arch.dense.size()));
    for (int w : p.arch.dense) put<std::uint32_t>(os, static_cast<std::uint32_t>(w));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.arch.output_dim));

    std::uint32_t count = 0;
    p.for_each_tensor([&](const std::string&, Eigen::Ref<const Eigen::MatrixXd>) { ++count; });
    put<std::uint32_t>(os, count);
    p.for_each_tensor([&](const std::string& name, Eigen::Ref<const Eigen::MatrixXd> m) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        const bool vector = m.cols() == 1 && name.ends_with(".bias");
        put<std::uint32_t>(os, vector ? 1u : 2u);
        put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
        if (!vector) put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(os, m(r, c));
    });
}

inline NetParams load_checkpoint(std::istream& is) {
    using detail::get;
    const auto version = get<std::uint32_t>(is);
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    NetArchitecture arch;
    arch.input_dim = static_cast<int>(get<std::uint32_t>(is));
    arch.sequence_length = static_cast<int>(get<std::uint32_t>(is));
    arch.lstm_hidden = static_cast<int>(get<std::uint32_t>(is));
    const auto layers = get<std::uint32_t>(is);
    if (layers > 64) throw FormatError("implausible dense layer count");
    arch.dense.clear();
    for (std::uint32_t i = 0; i < layers; ++i) arch.dense.push_back(static_cast<int>(get<std::uint32_t>(is)));
    arch.output_dim = static_cast<int>(get<std::uint32_t>(is));

    NetParams p = NetParams::zeros(arch);
    std::uint32_t expected = 0;
    p.for_each_tensor([&](const std::string&, Eigen::Ref<Eigen::MatrixXd>) { ++expected; });
    if (get<std::uint32_t>(is) != expected) throw FormatError("tensor count does not match architecture");
    p.for_each_tensor([&](const std::string& name, Eigen::Ref<Eigen::MatrixXd> m) {
        const auto len = get<std::uint32_t>(is);
        if (len > 256) throw FormatError("implausible tensor name length");
        std::string stored(len, '\0');
        if (!is.read(stored.data(), len)) throw FormatError("truncated checkpoint");
        if (stored != name) throw FormatError("expected tensor " + name + ", found " + stored);
        const auto rank = get<std::uint32_t>(is);
        if (rank < 1 || rank > 2) throw FormatError("bad rank for " + name);
        const auto rows = get<std::uint64_t>(is);
        const std::uint64_t cols = rank == 2 ? get<std::uint64_t>(is) : 1;
        if (rows != static_cast<std::uint64_t>(m.rows()) || cols != static_cast<std::uint64_t>(m.cols())) {
            throw FormatError("shape mismatch for " + name);
        }
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get<double>(is);
    });
    return p;
}

}  // namespace v2x
