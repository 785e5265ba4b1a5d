#pragma once

// Manhattan road grid and the path-following mobility of VUE-pairs.
//
// Roads run the full width of a square map. Every road carries two lanes, one
// per direction, offset by half a lane width from the road centre line
// (right-hand traffic). A receiver drives along its lane and picks a turn at
// each intersection; its transmitter trails it by a fixed distance measured
// along the receiver's driven path.

#include <v2x/errors.hpp>
#include <v2x/rng.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace v2x {

enum class Heading { East, North, West, South };

inline bool is_horizontal(Heading h) { return h == Heading::East || h == Heading::West; }

inline double travel_sign(Heading h) {
    return (h == Heading::East || h == Heading::North) ? 1.0 : -1.0;
}

inline Heading left_of(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 1) % 4); }
inline Heading right_of(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 3) % 4); }
inline Heading reverse_of(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 2) % 4); }

inline const char* to_string(Heading h) {
    switch (h) {
        case Heading::East: return "east";
        case Heading::North: return "north";
        case Heading::West: return "west";
        case Heading::South: return "south";
    }
    return "?";
}

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// A lane is identified by its driving direction and the index of its road.
/// East/West lanes sit on horizontal roads, North/South lanes on vertical ones.
struct LaneId {
    Heading heading = Heading::East;
    int road = 0;

    friend bool operator==(const LaneId&, const LaneId&) = default;
};

struct GridMap {
    double side_length = 250.0;
    double lane_width = 4.0;
    int intersections_per_axis = 3;

    /// Centre-line coordinate of road `i`; roads are evenly spaced.
    double road_position(int i) const {
        return side_length * static_cast<double>(i + 1) / static_cast<double>(intersections_per_axis + 1);
    }

    /// Fixed (cross-travel) coordinate of a lane.
    double lane_coordinate(Heading h, int road) const {
        const double centre = road_position(road);
        const double half = 0.5 * lane_width;
        switch (h) {
            case Heading::East: return centre - half;
            case Heading::West: return centre + half;
            case Heading::North: return centre + half;
            case Heading::South: return centre - half;
        }
        return centre;
    }

    bool on_lane(Point p, LaneId lane, double tol = 1e-6) const {
        if (lane.road < 0 || lane.road >= intersections_per_axis) return false;
        const double fixed = lane_coordinate(lane.heading, lane.road);
        const double along = is_horizontal(lane.heading) ? p.x : p.y;
        const double across = is_horizontal(lane.heading) ? p.y : p.x;
        return std::abs(across - fixed) <= tol && along >= -tol && along <= side_length + tol;
    }
};

enum class BoundaryMode { UTurn, Wrap };

struct TurnProbabilities {
    double straight = 0.5;
    double left = 0.25;
    double right = 0.25;
};

struct MobilityParams {
    TurnProbabilities turns;
    BoundaryMode boundary = BoundaryMode::UTurn;
};

/// Piece of the receiver's driven path. Consecutive segments need not touch:
/// a U-turn or a wrap at the map edge starts a fresh segment.
struct TrailSegment {
    Point from;
    Point to;
    LaneId lane;

    double length() const { return distance(from, to); }
};

struct PendingTurn {
    Heading heading;
    int road;  // perpendicular road the turn happens on
};

struct PairPose {
    Point tx;
    Point rx;
    LaneId tx_lane;
    LaneId rx_lane;
    double following_distance = 20.0;
    std::optional<PendingTurn> pending_turn;
    std::vector<TrailSegment> trail;  // oldest first; trail.back().to == rx

    Heading heading() const { return rx_lane.heading; }
};

namespace detail {

inline double along(Point p, Heading h) { return is_horizontal(h) ? p.x : p.y; }

inline Point make_point(Heading h, double along_coord, double fixed) {
    return is_horizontal(h) ? Point{along_coord, fixed} : Point{fixed, along_coord};
}

inline double trail_length(const std::vector<TrailSegment>& trail) {
    double total = 0.0;
    for (const auto& s : trail) total += s.length();
    return total;
}

/// Walks back `dist` metres along the trail from its end.
inline std::pair<Point, LaneId> point_behind(const std::vector<TrailSegment>& trail, double dist) {
    double remaining = dist;
    for (auto it = trail.rbegin(); it != trail.rend(); ++it) {
        const double len = it->length();
        if (remaining <= len) {
            if (len == 0.0) return {it->to, it->lane};
            const double f = remaining / len;
            return {Point{it->to.x - f * (it->to.x - it->from.x), it->to.y - f * (it->to.y - it->from.y)},
                    it->lane};
        }
        remaining -= len;
    }
    throw InvalidStateError("trail shorter than following distance");
}

inline void extend_trail(std::vector<TrailSegment>& trail, Point from, Point to, LaneId lane) {
    if (!trail.empty() && trail.back().lane == lane && trail.back().to == from) {
        trail.back().to = to;
    } else {
        trail.push_back({from, to, lane});
    }
}

inline void prune_trail(std::vector<TrailSegment>& trail, double keep) {
    double total = trail_length(trail);
    while (trail.size() > 1 && total - trail.front().length() >= keep) {
        total -= trail.front().length();
        trail.erase(trail.begin());
    }
}

}  // namespace detail

/// Places a pair on a random lane with the transmitter straight behind the
/// receiver on the same lane.
inline PairPose place_pair(const GridMap& map, double following_distance, Rng& rng) {
    if (following_distance <= 0.0 || following_distance >= map.side_length) {
        throw InvalidStateError("following distance must lie in (0, side_length)");
    }
    const auto h = static_cast<Heading>(uniform_index(rng, 4));
    const int road = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(map.intersections_per_axis)));
    const double sign = travel_sign(h);
    const double span = map.side_length - following_distance;
    const double offset = following_distance + uniform01(rng) * span;  // distance from lane start
    const double rx_along = sign > 0 ? offset : map.side_length - offset;
    const double tx_along = rx_along - sign * following_distance;
    const double fixed = map.lane_coordinate(h, road);

    PairPose pose;
    pose.following_distance = following_distance;
    pose.rx_lane = pose.tx_lane = LaneId{h, road};
    pose.rx = detail::make_point(h, rx_along, fixed);
    pose.tx = detail::make_point(h, tx_along, fixed);
    pose.trail.push_back({pose.tx, pose.rx, pose.rx_lane});
    return pose;
}

/// Advances the receiver by speed*dt along its lane, turning at intersections,
/// and moves the transmitter to the point `following_distance` behind it.
inline PairPose step_mobility(const PairPose& pose, const GridMap& map, const MobilityParams& params,
                              double speed, double dt, Rng& rng) {
    if (!map.on_lane(pose.rx, pose.rx_lane)) {
        throw InvalidStateError("receiver is off its lane");
    }
    if (pose.trail.empty() || !(pose.trail.back().to == pose.rx)) {
        throw InvalidStateError("trail does not end at the receiver");
    }
    if (speed < 0.0 || dt < 0.0) throw InvalidStateError("speed and dt must be non-negative");

    PairPose next = pose;
    double remaining = speed * dt;
    constexpr double eps = 1e-9;

    while (remaining > 0.0) {
        const Heading h = next.rx_lane.heading;
        const double sign = travel_sign(h);
        const double pos = detail::along(next.rx, h);
        const double fixed = map.lane_coordinate(h, next.rx_lane.road);

        // Nearest event ahead: pending turn point, intersection decision point, or map edge.
        enum class Event { Boundary, Decision, Turn } kind = Event::Boundary;
        int event_road = -1;
        double event_dist = sign > 0 ? map.side_length - pos : pos;
        if (next.pending_turn) {
            const double at = map.lane_coordinate(next.pending_turn->heading, next.pending_turn->road);
            const double d = sign * (at - pos);
            if (d >= 0.0 && d < event_dist) {
                event_dist = d;
                kind = Event::Turn;
            }
        } else {
            for (int j = 0; j < map.intersections_per_axis; ++j) {
                const double at = map.lane_coordinate(right_of(h), j);
                const double d = sign * (at - pos);
                if (d > eps && d < event_dist) {
                    event_dist = d;
                    event_road = j;
                    kind = Event::Decision;
                }
            }
        }

        if (event_dist > remaining) {
            const Point to = detail::make_point(h, pos + sign * remaining, fixed);
            detail::extend_trail(next.trail, next.rx, to, next.rx_lane);
            next.rx = to;
            remaining = 0.0;
            break;
        }

        const Point at = detail::make_point(h, pos + sign * event_dist, fixed);
        detail::extend_trail(next.trail, next.rx, at, next.rx_lane);
        next.rx = at;
        remaining -= event_dist;

        auto turn_onto = [&](Heading nh, int road) {
            next.rx_lane = LaneId{nh, road};
            next.trail.push_back({next.rx, next.rx, next.rx_lane});
        };

        switch (kind) {
            case Event::Boundary:
                if (params.boundary == BoundaryMode::UTurn) {
                    const Heading back = reverse_of(h);
                    next.rx = detail::make_point(back, detail::along(next.rx, h),
                                                 map.lane_coordinate(back, next.rx_lane.road));
                    turn_onto(back, next.rx_lane.road);
                } else {
                    next.rx = detail::make_point(h, sign > 0 ? 0.0 : map.side_length, fixed);
                    turn_onto(h, next.rx_lane.road);
                }
                break;
            case Event::Decision: {
                const double u = uniform01(rng);
                const auto& p = params.turns;
                const double total = p.straight + p.left + p.right;
                if (u * total < p.right) {
                    turn_onto(right_of(h), event_road);
                } else if (u * total < p.right + p.left) {
                    next.pending_turn = PendingTurn{left_of(h), event_road};
                }
                break;
            }
            case Event::Turn:
                turn_onto(next.pending_turn->heading, next.pending_turn->road);
                next.pending_turn.reset();
                break;
        }
    }

    detail::prune_trail(next.trail, next.following_distance);
    auto [tx, tx_lane] = detail::point_behind(next.trail, next.following_distance);
    next.tx = tx;
    next.tx_lane = tx_lane;
    return next;
}

/// Path length between transmitter and receiver along the stored trail.
inline double path_separation(const PairPose& pose) {
    double total = 0.0;
    bool counting = false;
    for (const auto& seg : pose.trail) {
        if (!counting) {
            // tx lies on the first segment whose extent contains it
            const double len = seg.length();
            const double a = distance(seg.from, pose.tx);
            const double b = distance(pose.tx, seg.to);
            if (std::abs(a + b - len) <= 1e-9 && seg.lane == pose.tx_lane) {
                counting = true;
                total += b;
            }
            continue;
        }
        total += seg.length();
    }
    return total;
}

enum class Regime { LOS, WLOS, NLOS };

inline const char* to_string(Regime r) {
    switch (r) {
        case Regime::LOS: return "LOS";
        case Regime::WLOS: return "WLOS";
        case Regime::NLOS: return "NLOS";
    }
    return "?";
}

/// LOS on a shared road; WLOS on perpendicular roads with an endpoint within
/// `near_threshold` of their crossing; NLOS otherwise.
inline Regime classify_geometry(const PairPose& pose, const GridMap& map, double near_threshold) {
    const bool tx_h = is_horizontal(pose.tx_lane.heading);
    const bool rx_h = is_horizontal(pose.rx_lane.heading);
    if (tx_h == rx_h) {
        return pose.tx_lane.road == pose.rx_lane.road ? Regime::LOS : Regime::NLOS;
    }
    const int vertical_road = tx_h ? pose.rx_lane.road : pose.tx_lane.road;
    const int horizontal_road = tx_h ? pose.tx_lane.road : pose.rx_lane.road;
    const Point crossing{map.road_position(vertical_road), map.road_position(horizontal_road)};
    const double nearest = std::min(distance(pose.tx, crossing), distance(pose.rx, crossing));
    return nearest <= near_threshold ? Regime::WLOS : Regime::NLOS;
}

}  // namespace v2x
