#include <v2x/gradcheck.hpp>
#include <v2x/neural.hpp>

#include <gtest/gtest.h>

#include <sstream>

using namespace v2x;

namespace {

NetArchitecture tiny_arch(int hidden = 8, int steps = 3, int input = 5, int output = 6) {
    NetArchitecture a;
    a.input_dim = input;
    a.sequence_length = steps;
    a.lstm_hidden = hidden;
    a.dense = {hidden, hidden};
    a.output_dim = output;
    return a;
}

Eigen::MatrixXd random_sequence(const NetArchitecture& a, Rng& rng) {
    Eigen::MatrixXd s(a.sequence_length, a.input_dim);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = 2.0 * uniform01(rng) - 1.0;
    return s;
}

// Plain scalar LSTM + MLP, written without the batched code path.
Eigen::VectorXd reference_forward(const NetParams& p, const Eigen::MatrixXd& seq) {
    const int h = p.arch.lstm_hidden;
    Eigen::VectorXd hs = Eigen::VectorXd::Zero(h), cs = Eigen::VectorXd::Zero(h);
    auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    for (Eigen::Index t = 0; t < seq.rows(); ++t) {
        const Eigen::VectorXd z = p.w_in * seq.row(t).transpose() + p.w_rec * hs + p.b_gate;
        for (int i = 0; i < h; ++i) {
            const double ig = sig(z(i)), fg = sig(z(h + i)), og = sig(z(2 * h + i)), cand = std::tanh(z(3 * h + i));
            cs(i) = fg * cs(i) + ig * cand;
            hs(i) = og * std::tanh(cs(i));
        }
    }
    Eigen::VectorXd x = hs;
    for (std::size_t l = 0; l < p.w_dense.size(); ++l) {
        x = p.w_dense[l] * x + p.b_dense[l];
        if (l + 1 < p.w_dense.size()) x = x.cwiseMax(0.0);
    }
    return x;
}

}  // namespace

TEST(Neural, ZeroNetworkOutputsZero) {
    const auto a = tiny_arch();
    const auto p = NetParams::zeros(a);
    Rng rng = make_rng(1);
    const auto q = forward(p, random_sequence(a, rng));
    EXPECT_EQ(q.size(), a.output_dim);
    EXPECT_EQ(q.norm(), 0.0);
}

TEST(Neural, HeadBiasPassthrough) {
    const auto a = tiny_arch();
    auto p = NetParams::zeros(a);
    p.b_dense.back().setConstant(2.5);
    Rng rng = make_rng(2);
    const auto q = forward(p, random_sequence(a, rng));
    for (Eigen::Index i = 0; i < q.size(); ++i) EXPECT_EQ(q(i), 2.5);
}

TEST(Neural, MatchesScalarReferenceAndIsPure) {
    const auto a = tiny_arch(6, 4, 3, 5);
    Rng rng = make_rng(3);
    const auto p = NetParams::initialise(a, rng);
    for (int i = 0; i < 10; ++i) {
        const auto seq = random_sequence(a, rng);
        const auto q1 = forward(p, seq);
        const auto q2 = forward(p, seq);
        EXPECT_TRUE(q1.allFinite());
        EXPECT_EQ(q1, q2);
        EXPECT_LT((q1 - reference_forward(p, seq)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Neural, ShapeMismatchThrows) {
    const auto a = tiny_arch();
    const auto p = NetParams::zeros(a);
    EXPECT_THROW(forward(p, Eigen::MatrixXd::Zero(a.sequence_length + 1, a.input_dim)), ShapeError);
    EXPECT_THROW(forward(p, Eigen::MatrixXd::Zero(a.sequence_length, a.input_dim + 1)), ShapeError);
}

TEST(Neural, ZeroTdErrorGivesZeroLossAndGradient) {
    const auto a = tiny_arch();
    Rng rng = make_rng(4);
    const auto p = NetParams::initialise(a, rng);
    std::vector<TdGroup> batch(3);
    for (auto& g : batch) {
        for (int k = 0; k < 2; ++k) {
            TdSample s{random_sequence(a, rng), static_cast<int>(uniform_index(rng, 6)), 0.0};
            s.target = forward(p, s.sequence)(s.action);
            g.push_back(s);
        }
    }
    const auto lg = backward(p, batch);
    EXPECT_NEAR(lg.loss, 0.0, 1e-24);
    double norm = 0.0;
    lg.grad.for_each_tensor([&](const std::string&, Eigen::Ref<const Eigen::MatrixXd> m) { norm += m.squaredNorm(); });
    EXPECT_LT(norm, 1e-20);
}

TEST(Neural, SummedVersusPerPairLoss) {
    const auto a = tiny_arch();
    auto p = NetParams::zeros(a);
    p.b_dense.back().setConstant(1.0);
    Rng rng = make_rng(5);
    // two pairs with TD errors +2 and -1
    TdGroup g = {{random_sequence(a, rng), 0, 3.0}, {random_sequence(a, rng), 1, 0.0}};
    EXPECT_DOUBLE_EQ(backward(p, {g}, LossMode::SummedTd).loss, 1.0);
    EXPECT_DOUBLE_EQ(backward(p, {g}, LossMode::PerPair).loss, 5.0);
    TdGroup single = {{random_sequence(a, rng), 2, 4.0}};
    EXPECT_DOUBLE_EQ(backward(p, {single}).loss, 9.0);
}

TEST(Neural, NonFiniteTargetThrows) {
    const auto a = tiny_arch();
    const auto p = NetParams::zeros(a);
    TdGroup g = {{Eigen::MatrixXd::Zero(a.sequence_length, a.input_dim), 0, std::nan("")}};
    EXPECT_THROW(backward(p, {g}), InvalidTargetError);
}

TEST(Neural, LossInvariantToBatchOrder) {
    const auto a = tiny_arch();
    Rng rng = make_rng(6);
    auto [p, batch] = random_audit_problem(a, 5, 3, rng);
    const double l1 = backward(p, batch).loss;
    std::reverse(batch.begin(), batch.end());
    EXPECT_NEAR(backward(p, batch).loss, l1, 1e-12 * std::abs(l1));
}

TEST(Neural, GradientMatchesFiniteDifferences) {
    for (auto mode : {LossMode::SummedTd, LossMode::PerPair}) {
        Rng rng = make_rng(7, static_cast<std::uint64_t>(mode));
        const auto [p, batch] = random_audit_problem(tiny_arch(8, 3, 6, 18), 4, 3, rng);
        const auto audit = audit_gradient(p, batch, mode);
        ASSERT_EQ(audit.tensors.size(), 9u);
        for (const auto& t : audit.tensors) EXPECT_LT(t.max_rel_error, 1e-4) << t.name;
    }
}

TEST(Adam, ZeroGradientLeavesParams) {
    const auto a = tiny_arch();
    Rng rng = make_rng(8);
    auto p = NetParams::initialise(a, rng);
    const auto before = p;
    AdamOptimizer opt(a, 1e-3);
    const auto zero = NetParams::zeros(a);
    for (int i = 0; i < 10; ++i) apply_update(p, zero, opt);
    EXPECT_EQ(p.w_in, before.w_in);
    EXPECT_EQ(p.b_dense.back(), before.b_dense.back());
}

TEST(Adam, MovesAgainstGradientSign) {
    const auto a = tiny_arch();
    auto p = NetParams::zeros(a);
    AdamOptimizer opt(a, 1e-2);
    auto g = NetParams::zeros(a);
    g.b_dense.back()(0) = 3.0;
    g.b_dense.back()(1) = -0.5;
    for (int i = 0; i < 50; ++i) apply_update(p, g, opt);
    EXPECT_LT(p.b_dense.back()(0), 0.0);
    EXPECT_GT(p.b_dense.back()(1), 0.0);
    EXPECT_EQ(p.b_dense.back()(2), 0.0);
}

TEST(Adam, QuadraticBowl) {
    // every parameter is an independent coordinate of f(x) = sum x^2
    const auto a = tiny_arch(2, 1, 1, 1);
    auto p = NetParams::zeros(a);
    p.for_each_tensor([](const std::string&, Eigen::Ref<Eigen::MatrixXd> m) { m.setConstant(1.0); });
    AdamOptimizer opt(a, 1e-2);
    for (int step = 0; step < 10000; ++step) {
        auto g = p;
        g.for_each_tensor([](const std::string&, Eigen::Ref<Eigen::MatrixXd> m) { m *= 2.0; });
        apply_update(p, g, opt);
    }
    p.for_each_tensor([](const std::string& name, Eigen::Ref<const Eigen::MatrixXd> m) {
        EXPECT_LT(m.cwiseAbs().maxCoeff(), 1e-3) << name;
    });
}

TEST(Checkpoint, ByteExactRoundTrip) {
    const auto a = tiny_arch(5, 2, 4, 7);
    Rng rng = make_rng(9);
    const auto p = NetParams::initialise(a, rng);
    std::ostringstream first;
    save_checkpoint(first, p);
    std::istringstream in(first.str());
    const auto q = load_checkpoint(in);
    EXPECT_TRUE(q.arch == p.arch);
    EXPECT_EQ(q.w_in, p.w_in);
    EXPECT_EQ(q.w_rec, p.w_rec);
    EXPECT_EQ(q.b_gate, p.b_gate);
    for (std::size_t l = 0; l < p.w_dense.size(); ++l) {
        EXPECT_EQ(q.w_dense[l], p.w_dense[l]);
        EXPECT_EQ(q.b_dense[l], p.b_dense[l]);
    }
    std::ostringstream second;
    save_checkpoint(second, q);
    EXPECT_EQ(first.str(), second.str());
}

TEST(Checkpoint, CorruptInputIsRejected) {
    const auto a = tiny_arch();
    Rng rng = make_rng(10);
    std::ostringstream os;
    save_checkpoint(os, NetParams::initialise(a, rng));
    const std::string bytes = os.str();
    std::istringstream truncated(bytes.substr(0, bytes.size() / 2));
    EXPECT_THROW(load_checkpoint(truncated), FormatError);
    std::string bad = bytes;
    bad[0] = 9;
    std::istringstream wrong_version(bad);
    EXPECT_THROW(load_checkpoint(wrong_version), FormatError);
}
