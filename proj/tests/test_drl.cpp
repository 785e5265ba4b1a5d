#include <v2x/drl.hpp>

#include <gtest/gtest.h>

#include <map>
#include <set>

using namespace v2x;

namespace {

EnvConfig small_env(int pairs = 4, int channels = 2, int groups = 2) {
    EnvConfig c;
    c.pairs = pairs;
    c.channels = channels;
    c.groups = groups;
    c.weights.arrival_rate = 1.0;
    return c;
}

AgentConfig small_agent() {
    AgentConfig a;
    a.pool_size = 3;
    a.batch_size = 8;
    a.lstm_hidden = 8;
    a.dense = {8, 8};
    a.replay_capacity = 200;
    a.target_reset = 10;
    a.cost_scale = 0.01;
    return a;
}

Experience tagged_experience(int tag, int pairs = 2, int window = 3, int width = 4) {
    Experience e;
    e.window = Eigen::MatrixXf::Constant(pairs * window, width, static_cast<float>(tag));
    e.next_record = Eigen::MatrixXf::Constant(pairs, width, static_cast<float>(tag));
    e.action.assign(static_cast<std::size_t>(pairs), 0);
    e.next_action.assign(static_cast<std::size_t>(pairs), 0);
    e.cost.assign(static_cast<std::size_t>(pairs), static_cast<double>(tag));
    return e;
}

Grouping one_group(int pairs) {
    Grouping g;
    g.assignment.assign(static_cast<std::size_t>(pairs), 0);
    g.groups = 1;
    return g;
}

}  // namespace

TEST(Encoding, ActionIndexRoundTrip) {
    const int a = 3;
    std::set<int> seen;
    for (int ch = -1; ch < 4; ++ch) {
        for (int r = 0; r <= a; ++r) {
            const int idx = action_index({ch, r}, a);
            const auto back = action_from_index(idx, a);
            EXPECT_EQ(back.channel, ch);
            EXPECT_EQ(back.departures, r);
            seen.insert(idx);
        }
    }
    EXPECT_EQ(static_cast<int>(seen.size()), action_count(4, a));
    EXPECT_EQ(*seen.begin(), 0);
    EXPECT_EQ(*seen.rbegin(), action_count(4, a) - 1);
}

TEST(Encoding, WidthAndFiniteness) {
    const auto cfg = small_env(6, 3, 2);
    Environment env(cfg, 11);
    const auto rec = encode_epoch(env, AgentConfig{}.encoding);
    EXPECT_EQ(rec.rows(), 6);
    EXPECT_EQ(rec.cols(), encoding_width(3, 2));
    EXPECT_EQ(encoding_width(3, 2), 2 * 3 + 2 + 6);
    EXPECT_TRUE(rec.allFinite());
}

TEST(Replay, FifoEviction) {
    ReplayMemory m(5);
    for (int i = 0; i < 6; ++i) m.push(tagged_experience(i));
    ASSERT_EQ(m.size(), 5);
    for (int i = 0; i < 5; ++i) EXPECT_EQ(m.at(i).cost[0], i + 1);
    for (int i = 6; i < 13; ++i) m.push(tagged_experience(i));
    for (int i = 0; i < 5; ++i) EXPECT_EQ(m.at(i).cost[0], 8 + i);
}

TEST(Replay, RejectsNonFiniteCostAndBadCapacity) {
    ReplayMemory m(3);
    auto e = tagged_experience(1);
    e.cost[1] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(m.push(e), InvalidStateError);
    EXPECT_EQ(m.size(), 0);
    EXPECT_THROW(ReplayMemory(0), InvalidStateError);
}

TEST(Replay, SamplesDistinctIndices) {
    ReplayMemory m(50);
    for (int i = 0; i < 50; ++i) m.push(tagged_experience(i));
    Rng rng = make_rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const auto idx = m.sample_indices(20, rng);
        std::set<int> s(idx.begin(), idx.end());
        EXPECT_EQ(s.size(), 20u);
        EXPECT_GE(*s.begin(), 0);
        EXPECT_LT(*s.rbegin(), 50);
    }
}

TEST(Pool, FrontPadsWithZeroRows) {
    ObservationPool pool(3, 2, 4);
    pool.push(ObservationRecord::Constant(2, 4, 1.0f));
    auto seq = pool.sequence(1);
    EXPECT_EQ(seq.rows(), 3);
    EXPECT_EQ(seq.topRows(2).norm(), 0.0);
    EXPECT_EQ(seq.row(2).sum(), 4.0);
    pool.push(ObservationRecord::Constant(2, 4, 2.0f));
    pool.push(ObservationRecord::Constant(2, 4, 3.0f));
    pool.push(ObservationRecord::Constant(2, 4, 4.0f));
    seq = pool.sequence(0);
    EXPECT_EQ(seq(0, 0), 2.0);
    EXPECT_EQ(seq(2, 0), 4.0);
    const auto snap = pool.snapshot();
    EXPECT_EQ(snap.rows(), 6);
    EXPECT_EQ(snap(3, 0), 2.0f);
    EXPECT_THROW(pool.push(ObservationRecord::Zero(3, 4)), ShapeError);
}

TEST(Agent, TrainStepWaitsForFullBatch) {
    const auto env = small_env();
    const auto ag = small_agent();
    DrlAgent agent(env, ag, 1);
    ReplayMemory m(100);
    Rng rng = make_rng(1);
    const int width = encoding_width(env.channels, env.groups);
    for (int i = 0; i < ag.batch_size - 1; ++i) m.push(tagged_experience(0, env.pairs, ag.pool_size, width));
    EXPECT_FALSE(agent.train_step(m, rng).has_value());
    m.push(tagged_experience(0, env.pairs, ag.pool_size, width));
    EXPECT_TRUE(agent.train_step(m, rng).has_value());
}

TEST(Agent, ZeroTdBatchLeavesParams) {
    // zero network, zero cost: every target equals every prediction
    const auto env = small_env();
    const auto ag = small_agent();
    DrlAgent agent(env, ag, 2);
    agent.set_params(NetParams::zeros(agent.architecture()));
    agent.reset_target();
    ReplayMemory m(100);
    const int width = encoding_width(env.channels, env.groups);
    for (int i = 0; i < 20; ++i) {
        auto e = tagged_experience(1, env.pairs, ag.pool_size, width);
        std::fill(e.cost.begin(), e.cost.end(), 0.0);
        m.push(e);
    }
    Rng rng = make_rng(2);
    const auto loss = agent.train_step(m, rng);
    ASSERT_TRUE(loss.has_value());
    EXPECT_EQ(*loss, 0.0);
    double norm = 0.0;
    agent.params().for_each_tensor([&](const std::string&, Eigen::Ref<const Eigen::MatrixXd> t) { norm += t.norm(); });
    EXPECT_EQ(norm, 0.0);
}

TEST(Agent, LossFallsOnFixedMemory) {
    const auto env = small_env();
    auto ag = small_agent();
    ag.cost_scale = 1.0;
    DrlAgent agent(env, ag, 3);
    ReplayMemory m(100);
    const int width = encoding_width(env.channels, env.groups);
    for (int i = 0; i < 40; ++i) {
        auto e = tagged_experience(i % 4, env.pairs, ag.pool_size, width);
        for (int k = 0; k < env.pairs; ++k) e.action[static_cast<std::size_t>(k)] = (i + k) % 9;
        m.push(e);
    }
    ag.batch_size = 40;
    DrlAgent full(env, ag, 3);
    Rng rng = make_rng(3);
    const double first = *full.train_step(m, rng);
    double last = first;
    for (int i = 0; i < 100; ++i) last = *full.train_step(m, rng);
    EXPECT_LT(last, first);
}

TEST(Agent, EpsilonOneIsUniformOverFeasibleActions) {
    // 2 pairs, 1 channel, A = 1: (none,none), (c,none)x2 rates, (none,c)x2 rates
    auto env = small_env(2, 1, 1);
    env.max_packets = 1;
    DrlAgent agent(env, small_agent(), 4);
    ObservationPool pool(3, 2, encoding_width(1, 1));
    Environment e(env, 4);
    pool.push(encode_epoch(e, AgentConfig{}.encoding));
    Rng rng = make_rng(4);
    std::map<std::vector<int>, int> counts;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const auto a = agent.act(pool, one_group(2), 1.0, rng);
        ASSERT_EQ(count_violations(a, one_group(2), 1).total(), 0);
        counts[{a[0].channel, a[0].departures, a[1].channel, a[1].departures}]++;
    }
    ASSERT_EQ(counts.size(), 5u);
    double chi2 = 0.0;
    const double expected = n / 5.0;
    for (const auto& [k, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
    EXPECT_LT(chi2, 13.28);  // 4 dof, p = 0.01
}

TEST(Agent, GreedyPicksArgminAndRespectsQueues) {
    auto env = small_env(2, 1, 1);
    env.max_packets = 2;
    DrlAgent agent(env, small_agent(), 5);
    // rows: (none,0..2), (ch0, r=0..2)
    Eigen::MatrixXd q(6, 2);
    q << 5, 1,
         9, 9,
         9, 9,
         4, 3,
         3, 3,
         1, 3;
    auto a = agent.greedy_action(q, one_group(2));
    EXPECT_EQ(a[0].channel, 0);
    EXPECT_EQ(a[0].departures, 2);
    EXPECT_EQ(a[1].channel, -1);
    EXPECT_EQ(a[1].departures, 0);
    a = agent.greedy_action(q, one_group(2), {1, 0});
    EXPECT_EQ(a[0].channel, 0);
    EXPECT_EQ(a[0].departures, 1);
}

TEST(Agent, HeadBiasMakesIdleCheapest) {
    auto env = small_env(4, 2, 2);
    DrlAgent agent(env, small_agent(), 6);
    auto p = NetParams::zeros(agent.architecture());
    p.b_dense.back().setConstant(1.0);
    p.b_dense.back()(0) = -1.0;
    agent.set_params(p);
    Environment e(env, 6);
    ObservationPool pool(3, 4, encoding_width(2, 2));
    pool.push(encode_epoch(e, AgentConfig{}.encoding));
    Rng rng = make_rng(6);
    const auto a = agent.act(pool, e.grouping(), 0.0, rng);
    for (const auto& x : a) {
        EXPECT_EQ(x.channel, -1);
        EXPECT_EQ(x.departures, 0);
    }
}

TEST(Agent, SetParamsChecksArchitecture) {
    DrlAgent agent(small_env(), small_agent(), 7);
    auto other = small_agent();
    other.lstm_hidden = 5;
    EXPECT_THROW(agent.set_params(NetParams::zeros(make_architecture(small_env(), other))), ShapeError);
}

TEST(Training, TargetChangesOnlyAtResets) {
    const auto env = small_env();
    const auto ag = small_agent();
    NetParams previous;
    bool first = true;
    long changes = 0;
    TrainingHooks hooks;
    hooks.on_epoch = [&](long t, const NetParams& target) {
        if (!first) {
            const bool changed = target.w_in != previous.w_in || target.b_dense.back() != previous.b_dense.back();
            if (changed) {
                ++changes;
                EXPECT_EQ(t % ag.target_reset, 0) << "target moved at epoch " << t;
            }
        }
        first = false;
        previous = target;
    };
    const auto r = run_training(env, ag, 60, 8, hooks);
    EXPECT_EQ(r.target_resets, 6);
    EXPECT_GE(changes, 4);
}

TEST(Training, ZeroEpochsReturnsInitialParams) {
    const auto r = run_training(small_env(), small_agent(), 0, 9);
    EXPECT_TRUE(r.metrics.empty());
    EXPECT_EQ(r.target_resets, 0);
    EXPECT_EQ(r.params.w_in, DrlAgent(small_env(), small_agent(), 9).params().w_in);
}

TEST(Training, DeterministicForSeed) {
    const auto a = run_training(small_env(), small_agent(), 40, 10);
    const auto b = run_training(small_env(), small_agent(), 40, 10);
    ASSERT_EQ(a.metrics.size(), b.metrics.size());
    for (std::size_t i = 0; i < a.metrics.size(); ++i) {
        EXPECT_EQ(a.metrics[i].avg_cost, b.metrics[i].avg_cost);
        if (!std::isnan(a.metrics[i].loss)) EXPECT_EQ(a.metrics[i].loss, b.metrics[i].loss);
    }
    EXPECT_EQ(a.params.w_in, b.params.w_in);
    const auto c = run_training(small_env(), small_agent(), 40, 11);
    EXPECT_NE(a.params.w_in, c.params.w_in);
}

TEST(Training, LossMissingUntilMemoryHoldsABatch) {
    const auto ag = small_agent();
    const auto r = run_training(small_env(), ag, 20, 12);
    for (const auto& m : r.metrics) {
        if (m.epoch < ag.batch_size) EXPECT_TRUE(std::isnan(m.loss));
        else EXPECT_TRUE(std::isfinite(m.loss));
    }
}

TEST(Training, TrainedPolicyIsFeasible) {
    const auto env = small_env(6, 2, 2);
    const auto ag = small_agent();
    auto r = run_training(env, ag, 50, 13);
    DrlPolicy policy(env, ag, std::move(r.params), ag.epsilon);
    Environment e(env, 14);
    Rng rng = make_rng(14);
    policy.reset(e);
    for (int t = 0; t < 300; ++t) {
        const auto a = policy.act(e, rng);
        ASSERT_EQ(count_violations(a, e.grouping(), env.channels).total(), 0);
        const auto q = queues_of(e);
        for (std::size_t k = 0; k < a.size(); ++k) EXPECT_LE(a[k].departures, q[k]);
        const auto res = e.step(a);
        policy.observe(e, res);
    }
}
