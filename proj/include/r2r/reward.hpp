#pragma once

// Reward composition. The shaped reward adds the log ranked-progress
// likelihood and an alpha-weighted log density ratio from the expert
// classifier; baselines reuse the same parts. A product-form twin exists only
// to cross-check the log algebra, and a lattice evaluator exports the
// landscape of every component over the unit square.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "r2r/checkpoint.hpp"
#include "r2r/discrim.hpp"
#include "r2r/ranking.hpp"

namespace r2r {

enum class RewardKind { Rank2Reward, GAIL, AIRL, VICE, RankingOnly };

inline const char* reward_kind_tag(RewardKind k) {
    switch (k) {
        case RewardKind::Rank2Reward: return "rank2reward";
        case RewardKind::GAIL: return "gail";
        case RewardKind::AIRL: return "airl";
        case RewardKind::VICE: return "vice";
        case RewardKind::RankingOnly: return "ranking_only";
    }
    throw ArgumentError("unknown reward kind");
}

inline RewardKind reward_kind_from_tag(const std::string& tag) {
    if (tag == "rank2reward") return RewardKind::Rank2Reward;
    if (tag == "gail") return RewardKind::GAIL;
    if (tag == "airl") return RewardKind::AIRL;
    if (tag == "vice") return RewardKind::VICE;
    if (tag == "ranking_only") return RewardKind::RankingOnly;
    throw FormatError("unknown reward kind tag: " + tag);
}

struct RewardModel {
    RewardKind kind = RewardKind::Rank2Reward;
    std::optional<RankingModel> ranking;
    std::optional<Discriminator> disc;
    double alpha = 1.0;            // weight of the classifier ratio term
    double clamp_epsilon = kProbEps;
    bool gail_raw_probability = false;  // GAIL variant: emit D itself, not log D
};

// log(clamp(sigmoid(x), eps, 1-eps)); the clamp commutes with the log.
inline double log_clamped_sigmoid(double x, double eps = kProbEps) {
    return std::clamp(stable_log_sigmoid(x), std::log(eps), std::log1p(-eps));
}

// Shaped reward from raw parts: utility u and classifier logit z.
inline double combined_reward_from(double u, double z, double alpha, double eps = kProbEps) {
    return log_clamped_sigmoid(u, eps) +
           alpha * (log_clamped_sigmoid(z, eps) - log_clamped_sigmoid(-z, eps));
}

// Unclamped product form log(p * (D/(1-D))^alpha); only for algebraic
// cross-checks on interior inputs.
inline double product_form_reward_from(double u, double z, double alpha) {
    const double p = sigmoid(u);
    const double d = sigmoid(z);
    if (d == 0.0 || d == 1.0)
        throw NumericError("product_form_reward: classifier probability saturated");
    if (p == 0.0) throw NumericError("product_form_reward: progress likelihood saturated to 0");
    return std::log(p * std::pow(d / (1.0 - d), alpha));
}

inline void validate_reward_model(const RewardModel& m) {
    if (m.alpha < 0.0) throw ConfigError("reward model: alpha must be >= 0");
    if (!(m.clamp_epsilon > 0.0 && m.clamp_epsilon < 0.5))
        throw ConfigError("reward model: clamp_epsilon must lie in (0, 0.5)");
    const bool needs_ranking =
        m.kind == RewardKind::Rank2Reward || m.kind == RewardKind::RankingOnly;
    const bool needs_disc = m.kind != RewardKind::RankingOnly;
    if (needs_ranking && !m.ranking)
        throw ConfigError(std::string(reward_kind_tag(m.kind)) + " reward needs a ranking model");
    if (needs_disc && !m.disc)
        throw ConfigError(std::string(reward_kind_tag(m.kind)) + " reward needs a discriminator");
    if (m.kind == RewardKind::VICE && m.disc->trained_mode != ClassifierBatchMode::GoalOnly)
        throw ConfigError("vice reward needs a discriminator trained as a goal classifier");
}

// Kind dispatch on precomputed parts; absent submodels contribute neutral
// values and are never read by the kinds that lack them.
inline double reward_from_parts(const RewardModel& m, double u, double z) {
    const double eps = m.clamp_epsilon;
    switch (m.kind) {
        case RewardKind::Rank2Reward:
            return combined_reward_from(u, z, m.alpha, eps);
        case RewardKind::GAIL:
            return m.gail_raw_probability ? std::clamp(sigmoid(z), eps, 1.0 - eps)
                                          : log_clamped_sigmoid(z, eps);
        case RewardKind::AIRL:
            return log_clamped_sigmoid(z, eps) - log_clamped_sigmoid(-z, eps);
        case RewardKind::VICE:
            return log_clamped_sigmoid(z, eps);
        case RewardKind::RankingOnly:
            return log_clamped_sigmoid(u, eps);
    }
    throw ArgumentError("unknown reward kind");
}

inline double learned_reward(const RewardModel& m, const std::vector<double>& state) {
    validate_reward_model(m);
    const double u = m.ranking ? utility(*m.ranking, state) : 0.0;
    const double z = m.disc ? discriminator_logit(*m.disc, state) : 0.0;
    return reward_from_parts(m, u, z);
}

inline double combined_reward(const RewardModel& m, const std::vector<double>& state) {
    if (m.kind != RewardKind::Rank2Reward)
        throw ArgumentError("combined_reward needs kind rank2reward");
    return learned_reward(m, state);
}

inline double baseline_reward(const RewardModel& m, const std::vector<double>& state) {
    if (m.kind == RewardKind::Rank2Reward)
        throw ArgumentError("baseline_reward needs a non-rank2reward kind");
    return learned_reward(m, state);
}

inline double product_form_reward(const RewardModel& m, const std::vector<double>& state) {
    if (m.kind != RewardKind::Rank2Reward)
        throw ArgumentError("product_form_reward needs kind rank2reward");
    validate_reward_model(m);
    return product_form_reward_from(utility(*m.ranking, state),
                                    discriminator_logit(*m.disc, state), m.alpha);
}

struct RewardGridCell {
    double x = 0.0, y = 0.0;
    double utility = 0.0;
    double p_rf = 0.5;
    double d = 0.5;
    double ratio = 1.0;
    double reward = 0.0;
};

struct RewardGrid {
    std::size_t resolution = 0;
    std::vector<RewardGridCell> cells;  // row-major: y outer, x inner
};

// Evaluates every reward component on the uniform lattice over [0,1]^2.
// Goal-conditioned submodels get `goal` appended to each lattice point.
inline RewardGrid reward_grid(const RewardModel& m, std::size_t resolution,
                              const std::vector<double>& goal = {}) {
    validate_reward_model(m);
    if (resolution < 2) throw ArgumentError("reward_grid: resolution must be >= 2");
    const bool rank_gc = m.ranking && m.ranking->goal_conditioned;
    const bool disc_gc = m.disc && m.disc->goal_conditioned;
    if ((rank_gc || disc_gc) && goal.empty())
        throw ConfigError("reward_grid: goal-conditioned model needs a goal override");
    const double eps = m.clamp_epsilon;
    RewardGrid g;
    g.resolution = resolution;
    g.cells.reserve(resolution * resolution);
    for (std::size_t j = 0; j < resolution; ++j) {
        for (std::size_t i = 0; i < resolution; ++i) {
            RewardGridCell c;
            c.x = double(i) / double(resolution - 1);
            c.y = double(j) / double(resolution - 1);
            std::vector<double> base{c.x, c.y};
            std::vector<double> aug;
            if (rank_gc || disc_gc) {
                aug = base;
                aug.insert(aug.end(), goal.begin(), goal.end());
            }
            const double u = m.ranking ? utility(*m.ranking, rank_gc ? aug : base) : 0.0;
            const double z = m.disc ? discriminator_logit(*m.disc, disc_gc ? aug : base) : 0.0;
            c.utility = u;
            c.p_rf = std::clamp(sigmoid(u), eps, 1.0 - eps);
            c.d = std::clamp(sigmoid(z), eps, 1.0 - eps);
            c.ratio = c.d / std::clamp(sigmoid(-z), eps, 1.0 - eps);
            c.reward = reward_from_parts(m, u, z);
            g.cells.push_back(c);
        }
    }
    return g;
}

inline void write_reward_grid_csv(const RewardGrid& g, const std::string& path) {
    std::string out = "x,y,utility,p_rf,d,ratio,reward\n";
    char buf[192];
    for (const RewardGridCell& c : g.cells) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", c.x, c.y,
                      c.utility, c.p_rf, c.d, c.ratio, c.reward);
        out += buf;
    }
    write_text_atomic(path, out);
}

}  // namespace r2r
