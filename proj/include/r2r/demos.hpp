#pragma once

// Demonstration generation, subsampling, and the JSONL dataset format.
// One line per trajectory: {"env": tag, "states": [[x, y, ...], ...], "meta": {...}}.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "r2r/checkpoint.hpp"
#include "r2r/common.hpp"
#include "r2r/env.hpp"

namespace r2r {

struct Trajectory {
    EnvKind env_kind = EnvKind::TwoWallMaze;
    std::vector<std::vector<double>> states;
    std::map<std::string, std::string> meta;
};

struct ExpertDataset {
    EnvSpec spec;
    std::vector<Trajectory> trajectories;
};

// Roll out the scripted expert until n episodes end inside the goal region.
// Failed episodes (horizon exhausted) are dropped and resampled; persistent
// failure means the expert/noise configuration is unusable, not bad luck.
inline ExpertDataset generate_demos(const EnvSpec& spec, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw ArgumentError("generate_demos: need at least one demonstration");
    ExpertDataset ds;
    ds.spec = spec;
    Rng rng = make_rng(seed, 0xDE305u);
    const std::size_t max_failures = std::max<std::size_t>(n, 10);
    std::size_t failures = 0;
    while (ds.trajectories.size() < n) {
        EnvState st = env_reset(spec, rng);
        ScriptedExpert expert;
        Trajectory traj;
        traj.env_kind = spec.kind;
        traj.states.push_back(state_vector(spec, st));
        bool reached = false;
        for (;;) {
            const Vec2 a = expert.action(spec, st, rng);
            const StepResult r = env_step(spec, st, a);
            traj.states.push_back(state_vector(spec, st));
            if (r.done) {
                reached = r.reached_goal;
                break;
            }
        }
        if (!reached) {
            if (++failures > max_failures)
                throw ConfigError(
                    "generate_demos: expert failure rate too high (" +
                    std::to_string(failures) + " failed episodes for " + std::to_string(n) +
                    " requested demos); check noise level and environment geometry");
            continue;
        }
        traj.meta["demo_index"] = std::to_string(ds.trajectories.size());
        ds.trajectories.push_back(std::move(traj));
    }
    return ds;
}

// Keep states 0, k, 2k, ... and always the final state. keep_every == 1 is the
// identity; a stride beyond the trajectory keeps just the endpoints.
inline Trajectory subsample_trajectory(const Trajectory& t, std::size_t keep_every) {
    if (keep_every < 1) throw ArgumentError("subsample_trajectory: keep_every must be >= 1");
    if (t.states.size() < 2)
        throw ArgumentError("subsample_trajectory: trajectory needs at least two states");
    if (keep_every == 1) return t;
    Trajectory out;
    out.env_kind = t.env_kind;
    out.meta = t.meta;
    out.meta["subsampled"] = std::to_string(keep_every);
    const std::size_t n = t.states.size();
    for (std::size_t i = 0; i < n; i += keep_every) out.states.push_back(t.states[i]);
    if ((n - 1) % keep_every != 0) out.states.push_back(t.states.back());
    return out;
}

inline void write_dataset(const ExpertDataset& ds, const std::string& path) {
    std::string text;
    for (const auto& t : ds.trajectories) {
        Json line;
        line["env"] = env_tag(t.env_kind);
        Json states = Json::array();
        for (const auto& s : t.states) states.push_back(s);
        line["states"] = std::move(states);
        Json meta = Json::object();
        for (const auto& [k, v] : t.meta) meta[k] = v;
        line["meta"] = std::move(meta);
        text += line.dump();
        text += '\n';
    }
    write_text_atomic(path, text);
}

inline ExpertDataset read_dataset(const std::string& path) {
    const std::string text = read_text_file(path);
    ExpertDataset ds;
    ds.spec = make_env_spec(EnvKind::TwoWallMaze);
    bool have_kind = false;
    std::istringstream lines(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = "read_dataset: " + path + ": line " + std::to_string(line_no);
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
        Trajectory traj;
        try {
            traj.env_kind = env_kind_from_tag(j.at("env").get<std::string>());
            for (const auto& s : j.at("states"))
                traj.states.push_back(s.get<std::vector<double>>());
            if (j.contains("meta"))
                for (const auto& [k, v] : j.at("meta").items())
                    traj.meta[k] = v.get<std::string>();
        } catch (const FormatError&) {
            throw;
        } catch (const Json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
        if (have_kind && traj.env_kind != ds.spec.kind)
            throw FormatError(where + ": environment tag '" + env_tag(traj.env_kind) +
                              "' does not match earlier tag '" + env_tag(ds.spec.kind) + "'");
        if (!have_kind) {
            ds.spec = make_env_spec(traj.env_kind);
            have_kind = true;
        }
        if (traj.states.size() < 2) throw ParseError(where + ": trajectory has fewer than 2 states");
        const std::size_t dim = state_dim(ds.spec);
        for (const auto& s : traj.states) {
            if (s.size() != dim)
                throw ParseError(where + ": state has " + std::to_string(s.size()) +
                                 " entries, expected " + std::to_string(dim));
            for (double v : s)
                if (!std::isfinite(v)) throw ParseError(where + ": non-finite state coordinate");
        }
        ds.trajectories.push_back(std::move(traj));
    }
    return ds;
}

}  // namespace r2r
