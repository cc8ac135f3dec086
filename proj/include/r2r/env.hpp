#pragma once

// Planar navigation environments on the unit square: a two-wall maze with a
// fixed goal, an open point-reach task, and a goal-conditioned variant whose
// goal is resampled on every reset. Also hosts the scripted waypoint expert
// used to generate demonstrations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "r2r/common.hpp"

namespace r2r {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }

inline double dist(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct Segment {
    Vec2 a;
    Vec2 b;
};

struct Box {
    Vec2 lo;
    Vec2 hi;
};

enum class EnvKind { TwoWallMaze, PointReach, MultiGoalReach };

inline std::string env_tag(EnvKind kind) {
    switch (kind) {
        case EnvKind::TwoWallMaze: return "two_wall_maze";
        case EnvKind::PointReach: return "point_reach";
        case EnvKind::MultiGoalReach: return "multi_goal_reach";
    }
    throw ArgumentError("env_tag: unknown EnvKind");
}

inline EnvKind env_kind_from_tag(const std::string& tag) {
    if (tag == "two_wall_maze") return EnvKind::TwoWallMaze;
    if (tag == "point_reach") return EnvKind::PointReach;
    if (tag == "multi_goal_reach") return EnvKind::MultiGoalReach;
    throw FormatError("env_kind_from_tag: unknown environment tag '" + tag + "'");
}

struct EnvSpec {
    EnvKind kind = EnvKind::TwoWallMaze;
    double max_step_norm = 0.05;
    std::size_t horizon = 200;
    double goal_radius = 0.05;
    double expert_noise_std = 0.005;
    std::vector<Segment> walls;
    Box start_region;
    Vec2 goal;        // fixed goal (TwoWallMaze, PointReach)
    Box goal_region;  // sampling region for MultiGoalReach goals
};

inline EnvSpec make_env_spec(EnvKind kind) {
    EnvSpec spec;
    spec.kind = kind;
    switch (kind) {
        case EnvKind::TwoWallMaze:
            // Wall A leaves a gap along the bottom edge, wall B a gap along the
            // top edge, forcing an S-shaped route from top-left to bottom-right.
            spec.walls = {{{1.0 / 3.0, 0.2}, {1.0 / 3.0, 1.0}},
                          {{2.0 / 3.0, 0.0}, {2.0 / 3.0, 0.8}}};
            spec.start_region = {{0.0, 0.9}, {0.1, 1.0}};
            spec.goal = {0.95, 0.05};
            break;
        case EnvKind::PointReach:
            spec.start_region = {{0.0, 0.0}, {0.1, 0.1}};
            spec.goal = {0.9, 0.9};
            break;
        case EnvKind::MultiGoalReach:
            spec.start_region = {{0.45, 0.45}, {0.55, 0.55}};
            spec.goal_region = {{0.05, 0.05}, {0.95, 0.95}};
            break;
    }
    return spec;
}

struct EnvState {
    Vec2 position;
    std::size_t steps_elapsed = 0;
    Vec2 goal;  // always populated; equals spec.goal for fixed-goal kinds
};

inline std::size_t state_dim(const EnvSpec& spec) {
    return spec.kind == EnvKind::MultiGoalReach ? 4 : 2;
}

inline std::vector<double> state_vector(const EnvSpec& spec, const EnvState& st) {
    if (spec.kind == EnvKind::MultiGoalReach)
        return {st.position.x, st.position.y, st.goal.x, st.goal.y};
    return {st.position.x, st.position.y};
}

namespace detail {

inline double uniform_in(Rng& rng, double lo, double hi) {
    if (lo == hi) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vec2 sample_box(Rng& rng, const Box& box) {
    // Fixed draw order (x then y) keeps resets reproducible across platforms.
    const double x = uniform_in(rng, box.lo.x, box.hi.x);
    const double y = uniform_in(rng, box.lo.y, box.hi.y);
    return {x, y};
}

}  // namespace detail

inline EnvState env_reset(const EnvSpec& spec, Rng& rng) {
    EnvState st;
    st.position = detail::sample_box(rng, spec.start_region);
    st.steps_elapsed = 0;
    if (spec.kind == EnvKind::MultiGoalReach) {
        // Reject goals on top of the start so every episode needs at least one step.
        do {
            st.goal = detail::sample_box(rng, spec.goal_region);
        } while (dist(st.goal, st.position) <= 2.0 * spec.goal_radius);
    } else {
        st.goal = spec.goal;
    }
    return st;
}

// Closed-segment intersection via orientation tests, including collinear overlap.
// Touching counts as intersecting, which is the conservative choice for walls.
inline bool segments_intersect(const Segment& s, const Segment& t) {
    auto orient = [](Vec2 a, Vec2 b, Vec2 c) {
        return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    };
    auto on_segment = [](Vec2 a, Vec2 b, Vec2 p) {
        return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
               std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
    };
    const double d1 = orient(t.a, t.b, s.a);
    const double d2 = orient(t.a, t.b, s.b);
    const double d3 = orient(s.a, s.b, t.a);
    const double d4 = orient(s.a, s.b, t.b);
    if (((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) &&
        ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)))
        return true;
    if (d1 == 0.0 && on_segment(t.a, t.b, s.a)) return true;
    if (d2 == 0.0 && on_segment(t.a, t.b, s.b)) return true;
    if (d3 == 0.0 && on_segment(s.a, s.b, t.a)) return true;
    if (d4 == 0.0 && on_segment(s.a, s.b, t.b)) return true;
    return false;
}

inline bool crosses_any_wall(const EnvSpec& spec, Vec2 from, Vec2 to) {
    for (const auto& w : spec.walls)
        if (segments_intersect({from, to}, w)) return true;
    return false;
}

inline Vec2 clip_norm(Vec2 v, double max_norm) {
    const double n = norm(v);
    if (n <= max_norm || n == 0.0) return v;
    const double scale = max_norm / n;
    return {v.x * scale, v.y * scale};
}

struct StepResult {
    double true_reward = 0.0;
    bool done = false;
    bool reached_goal = false;
};

// Clip the action to the step budget, clamp the proposal to the unit square,
// then test the clamped segment against the walls: a blocked move leaves the
// position unchanged but still consumes a step. The goal is terminal; running
// out the horizon merely ends the episode.
inline StepResult env_step(const EnvSpec& spec, EnvState& st, Vec2 action) {
    if (!std::isfinite(action.x) || !std::isfinite(action.y))
        throw ArgumentError("env_step: action components must be finite");
    const Vec2 a = clip_norm(action, spec.max_step_norm);
    const Vec2 proposed{std::clamp(st.position.x + a.x, 0.0, 1.0),
                        std::clamp(st.position.y + a.y, 0.0, 1.0)};
    if (!crosses_any_wall(spec, st.position, proposed)) st.position = proposed;
    st.steps_elapsed += 1;
    StepResult r;
    r.reached_goal = dist(st.position, st.goal) <= spec.goal_radius;
    r.done = r.reached_goal || st.steps_elapsed >= spec.horizon;
    r.true_reward = r.reached_goal ? 1.0 : 0.0;
    return r;
}

// Waypoint route for the scripted expert; the last waypoint is the goal itself.
inline std::vector<Vec2> expert_waypoints(const EnvSpec& spec, const EnvState& st) {
    if (spec.kind == EnvKind::TwoWallMaze)
        return {{0.10, 0.10}, {0.40, 0.10}, {0.40, 0.90}, {0.72, 0.90}, st.goal};
    return {st.goal};
}

// Distance at which an intermediate waypoint counts as reached.
inline constexpr double kWaypointRadius = 0.05;

// Greedy waypoint follower with a persistent cursor: it heads for the first
// waypoint it has not yet reached, never retargeting an earlier one even if
// noise pushes it around, so progress along the route is monotone.
struct ScriptedExpert {
    std::size_t next_waypoint = 0;

    Vec2 action(const EnvSpec& spec, const EnvState& st, Rng& rng) {
        Vec2 base{0.0, 0.0};
        if (dist(st.position, st.goal) > spec.goal_radius) {
            const auto wps = expert_waypoints(spec, st);
            while (next_waypoint + 1 < wps.size() &&
                   dist(st.position, wps[next_waypoint]) <= kWaypointRadius)
                ++next_waypoint;
            const Vec2 target = wps[next_waypoint];
            base = clip_norm({target.x - st.position.x, target.y - st.position.y},
                             spec.max_step_norm);
        }
        if (spec.expert_noise_std > 0.0) {
            std::normal_distribution<double> noise(0.0, spec.expert_noise_std);
            base.x += noise(rng);
            base.y += noise(rng);
            base = clip_norm(base, spec.max_step_norm);
        }
        return base;
    }
};

}  // namespace r2r
