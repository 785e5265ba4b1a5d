#include <v2x/channel.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace v2x;

namespace {

PairPose pose_at(Point tx, Point rx) {
    PairPose p;
    p.tx = tx;
    p.rx = rx;
    return p;
}

}  // namespace

TEST(Channel, LosAtTwentyMetres) {
    PathLossParams pl;
    const double h = path_loss(pose_at({0, 0}, {20, 0}), Regime::LOS, pl);
    EXPECT_NEAR(h, 1.136e-9, 0.01 * 1.136e-9);
    EXPECT_NEAR(h, std::pow(10.0, -6.85) * std::pow(20.0, -1.61), 1e-22);
}

TEST(Channel, WlosMatchesLosAtManhattanDistance) {
    PathLossParams pl;
    const double w = path_loss(pose_at({0, 0}, {7, 5}), Regime::WLOS, pl);
    const double l = path_loss(pose_at({0, 0}, {12, 0}), Regime::LOS, pl);
    EXPECT_DOUBLE_EQ(w, l);
}

TEST(Channel, NlosFormulaAndDegenerateGuard) {
    PathLossParams pl;
    const double n = path_loss(pose_at({0, 0}, {30, 40}), Regime::NLOS, pl);
    EXPECT_NEAR(n, pl.xi * std::pow(1200.0, -1.61), 1e-25);
    EXPECT_THROW(path_loss(pose_at({0, 0}, {0, 40}), Regime::NLOS, pl), DegenerateGeometryError);
}

TEST(Channel, DefaultParametersAreConsistent) {
    PathLossParams pl;
    const double lhs = pl.xi, rhs = pl.rho * std::pow(7.5, 1.61);
    EXPECT_NEAR(lhs, 3.55e-6, 0.01e-6);
    EXPECT_NEAR(rhs, 3.62e-6, 0.01e-6);
    EXPECT_TRUE(pl.consistent());
    pl.xi *= 1.1;
    EXPECT_FALSE(pl.consistent());
}

TEST(Channel, MonotoneInDistance) {
    PathLossParams pl;
    for (auto regime : {Regime::LOS, Regime::WLOS, Regime::NLOS}) {
        double prev = std::numeric_limits<double>::infinity();
        for (double d = 5.0; d < 200.0; d += 5.0) {
            const double h = path_loss(pose_at({0, 0}, {d, d / 2}), regime, pl);
            EXPECT_LT(h, prev);
            prev = h;
        }
    }
}

TEST(Channel, NoFadingGivesPathLoss) {
    GridMap map;
    PathLossParams pl;
    Rng rng = make_rng(1);
    auto pose = place_pair(map, 20.0, rng);
    const double h = path_loss(pose, classify_geometry(pose, map, pl.phi0), pl);
    const auto g = draw_gains(pose, map, pl, 4, FadingMode::None, rng);
    for (double x : g) EXPECT_DOUBLE_EQ(x, h);
}

TEST(Channel, RayleighMeanAndIndependence) {
    Rng rng = make_rng(11);
    const int n = 1000000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += rayleigh_amplitude(rng);
    EXPECT_NEAR(sum / n, std::sqrt(std::numbers::pi / 2.0), 0.01);

    GridMap map;
    PathLossParams pl;
    auto pose = place_pair(map, 20.0, rng);
    double s0 = 0, s1 = 0, s00 = 0, s11 = 0, s01 = 0;
    for (int i = 0; i < n; ++i) {
        const auto g = draw_gains(pose, map, pl, 2, FadingMode::Power, rng);
        s0 += g[0];
        s1 += g[1];
        s00 += g[0] * g[0];
        s11 += g[1] * g[1];
        s01 += g[0] * g[1];
    }
    const double m0 = s0 / n, m1 = s1 / n;
    const double cov = s01 / n - m0 * m1;
    const double corr = cov / std::sqrt((s00 / n - m0 * m0) * (s11 / n - m1 * m1));
    EXPECT_LT(std::abs(corr), 0.01);
}

TEST(Channel, PowerFadingHasMeanTwo) {
    Rng rng = make_rng(12);
    double sum = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) sum += fading_factor(FadingMode::Power, rng);
    EXPECT_NEAR(sum / n, 2.0, 0.01);
}

TEST(Channel, GainsPositiveAndFinite) {
    GridMap map;
    PathLossParams pl;
    MobilityParams mp;
    Rng rng = make_rng(5);
    auto pose = place_pair(map, 20.0, rng);
    for (int t = 0; t < 20000; ++t) {
        pose = step_mobility(pose, map, mp, 60.0 / 3.6, 0.1, rng);
        for (double g : draw_gains(pose, map, pl, 3, FadingMode::Power, rng)) {
            ASSERT_TRUE(g > 0.0 && std::isfinite(g));
        }
    }
}
