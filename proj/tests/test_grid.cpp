#include <v2x/grid.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace v2x;

namespace {

PairPose straight_pose(const GridMap& map, Heading h, int road, double rx_along, double phi) {
    PairPose p;
    p.following_distance = phi;
    p.rx_lane = p.tx_lane = LaneId{h, road};
    const double fixed = map.lane_coordinate(h, road);
    const double tx_along = rx_along - travel_sign(h) * phi;
    p.rx = is_horizontal(h) ? Point{rx_along, fixed} : Point{fixed, rx_along};
    p.tx = is_horizontal(h) ? Point{tx_along, fixed} : Point{fixed, tx_along};
    p.trail.push_back({p.tx, p.rx, p.rx_lane});
    return p;
}

}  // namespace

TEST(Grid, NineIntersectionsOnDefaultMap) {
    GridMap map;
    EXPECT_EQ(map.intersections_per_axis * map.intersections_per_axis, 9);
    EXPECT_DOUBLE_EQ(map.road_position(0), 62.5);
    EXPECT_DOUBLE_EQ(map.road_position(2), 187.5);
    // right-hand traffic: opposite directions sit on opposite sides of the centre line
    EXPECT_DOUBLE_EQ(map.lane_coordinate(Heading::East, 1) - map.lane_coordinate(Heading::West, 1), -4.0);
}

TEST(Grid, DisplacementAtSixtyKmh) {
    GridMap map;
    MobilityParams mp;
    Rng rng = make_rng(3);
    auto p = straight_pose(map, Heading::East, 1, 100.0, 20.0);
    auto q = step_mobility(p, map, mp, 60.0 / 3.6, 0.018, rng);
    EXPECT_NEAR(q.rx.x - p.rx.x, 0.3, 1e-12);
    EXPECT_DOUBLE_EQ(q.rx.y, p.rx.y);
    EXPECT_NEAR(q.tx.x - p.tx.x, 0.3, 1e-12);
    EXPECT_EQ(q.heading(), Heading::East);
}

TEST(Grid, ZeroStepIsIdentity) {
    GridMap map;
    MobilityParams mp;
    Rng rng = make_rng(4);
    auto p = straight_pose(map, Heading::North, 0, 30.0, 20.0);
    auto q = step_mobility(p, map, mp, 60.0 / 3.6, 0.0, rng);
    EXPECT_EQ(q.rx, p.rx);
    EXPECT_EQ(q.tx, p.tx);
    EXPECT_EQ(q.rx_lane, p.rx_lane);
}

TEST(Grid, MidBlockKeepsHeadingForAnyRng) {
    GridMap map;
    MobilityParams mp;
    for (std::uint64_t s = 0; s < 50; ++s) {
        Rng rng = make_rng(s);
        auto p = straight_pose(map, Heading::West, 2, 120.0, 20.0);
        auto q = step_mobility(p, map, mp, 60.0 / 3.6, 0.018, rng);
        EXPECT_EQ(q.heading(), Heading::West);
    }
}

TEST(Grid, OffLaneIsRejected) {
    GridMap map;
    MobilityParams mp;
    Rng rng = make_rng(1);
    auto p = straight_pose(map, Heading::East, 0, 100.0, 20.0);
    p.rx.y += 1.0;
    p.trail.back().to = p.rx;
    EXPECT_THROW(step_mobility(p, map, mp, 10.0, 0.018, rng), InvalidStateError);
}

TEST(Grid, LongRunStaysOnLanesAndKeepsPathDistance) {
    GridMap map;
    for (auto mode : {BoundaryMode::UTurn, BoundaryMode::Wrap}) {
        MobilityParams mp;
        mp.boundary = mode;
        Rng rng = make_rng(2024, static_cast<std::uint64_t>(mode));
        auto p = place_pair(map, 20.0, rng);
        double worst = 0.0;
        bool saw_turn = false;
        const Heading h0 = p.heading();
        for (int t = 0; t < 100000; ++t) {
            // a larger step than one epoch to cross many intersections
            p = step_mobility(p, map, mp, 60.0 / 3.6, 0.18, rng);
            ASSERT_TRUE(map.on_lane(p.rx, p.rx_lane)) << "rx off lane at step " << t;
            ASSERT_TRUE(map.on_lane(p.tx, p.tx_lane)) << "tx off lane at step " << t;
            worst = std::max(worst, std::abs(path_separation(p) - 20.0));
            saw_turn = saw_turn || p.heading() != h0;
        }
        EXPECT_LE(worst, 1e-9);
        EXPECT_TRUE(saw_turn);
    }
}

TEST(Grid, DeterministicGivenSeed) {
    GridMap map;
    MobilityParams mp;
    auto run = [&] {
        Rng rng = make_rng(77);
        auto p = place_pair(map, 35.0, rng);
        for (int t = 0; t < 5000; ++t) p = step_mobility(p, map, mp, 60.0 / 3.6, 0.1, rng);
        return p;
    };
    const auto a = run(), b = run();
    EXPECT_EQ(a.rx, b.rx);
    EXPECT_EQ(a.tx, b.tx);
    EXPECT_EQ(a.rx_lane, b.rx_lane);
}

TEST(Grid, ClassifyGeometry) {
    GridMap map;
    const double c = map.road_position(1);
    auto same = straight_pose(map, Heading::East, 1, 100.0, 20.0);
    EXPECT_EQ(classify_geometry(same, map, 15.0), Regime::LOS);

    // rx on a vertical road 10 m past the crossing, tx on the horizontal road
    PairPose wl;
    wl.rx_lane = LaneId{Heading::North, 1};
    wl.tx_lane = LaneId{Heading::East, 1};
    wl.rx = {map.lane_coordinate(Heading::North, 1), c + 10.0};
    wl.tx = {c - 10.0, map.lane_coordinate(Heading::East, 1)};
    EXPECT_EQ(classify_geometry(wl, map, 15.0), Regime::WLOS);

    PairPose nl = wl;
    nl.rx = {map.lane_coordinate(Heading::North, 1), c + 30.0};
    nl.tx = {c - 30.0, map.lane_coordinate(Heading::East, 1)};
    EXPECT_EQ(classify_geometry(nl, map, 15.0), Regime::NLOS);
}

TEST(Grid, TransmitterFollowsAroundCorners) {
    GridMap map;
    MobilityParams mp;
    mp.turns = {0.0, 1.0, 0.0};  // always turn left
    Rng rng = make_rng(9);
    // 5 m before the first crossing, heading east on road 0
    auto p = straight_pose(map, Heading::East, 0, map.road_position(0) - 5.0, 20.0);
    p = step_mobility(p, map, mp, 20.0, 1.0, rng);
    EXPECT_EQ(p.heading(), Heading::North);
    EXPECT_NEAR(path_separation(p), 20.0, 1e-9);
    EXPECT_TRUE(is_horizontal(p.tx_lane.heading));
}
