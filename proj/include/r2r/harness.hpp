#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "r2r/agent.hpp"
#include "r2r/config.hpp"
#include "r2r/demos.hpp"
#include "r2r/discrim.hpp"
#include "r2r/ranking.hpp"
#include "r2r/replay.hpp"
#include "r2r/reward.hpp"

namespace r2r {

namespace detail {

inline void ensure_parent_dir(const std::string& path) {
    const std::filesystem::path parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

inline bool kind_needs_ranking(RewardKind k) {
    return k == RewardKind::Rank2Reward || k == RewardKind::RankingOnly;
}

inline bool kind_needs_discriminator(RewardKind k) {
    return k != RewardKind::RankingOnly;
}

// Deterministic 80/20 split by trajectory index (demos are i.i.d. rollouts,
// so index order carries no information).
inline std::pair<ExpertDataset, ExpertDataset> split_dataset(const ExpertDataset& ds) {
    const std::size_t n = ds.trajectories.size();
    if (n < 2)
        throw ArgumentError("split_dataset: need at least two trajectories for a held-out split");
    const std::size_t n_eval = std::max<std::size_t>(1, n / 5);
    ExpertDataset train, eval;
    train.spec = eval.spec = ds.spec;
    for (std::size_t i = 0; i < n; ++i)
        (i < n - n_eval ? train : eval).trajectories.push_back(ds.trajectories[i]);
    return {std::move(train), std::move(eval)};
}

inline double mean_held_out_tau(const RankingModel& m, const ExpertDataset& eval) {
    double sum = 0.0;
    for (const Trajectory& t : eval.trajectories) sum += kendall_tau(m, t);
    return sum / double(eval.trajectories.size());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// gen-demos
// ---------------------------------------------------------------------------

struct DemoSummary {
    std::size_t trajectory_count = 0;
    double mean_length = 0.0;
    double success_rate = 0.0;  // audited from stored states, not assumed
};

inline DemoSummary cmd_gen_demos(const ExperimentConfig& cfg) {
    validate_experiment_config(cfg);
    const EnvSpec spec = env_spec_from(cfg);
    const ExpertDataset ds = generate_demos(spec, cfg.n_demos, cfg.seed);
    const std::string path = resolved_dataset_path(cfg);
    detail::ensure_parent_dir(path);
    std::filesystem::create_directories(cfg.out_dir);
    write_dataset(ds, path);

    DemoSummary s;
    s.trajectory_count = ds.trajectories.size();
    for (const Trajectory& t : ds.trajectories) {
        s.mean_length += double(t.states.size());
        const std::vector<double>& last = t.states.back();
        const Vec2 pos{last[0], last[1]};
        const Vec2 goal =
            spec.kind == EnvKind::MultiGoalReach ? Vec2{last[2], last[3]} : spec.goal;
        if (dist(pos, goal) <= spec.goal_radius) s.success_rate += 1.0;
    }
    s.mean_length /= double(s.trajectory_count);
    s.success_rate /= double(s.trajectory_count);
    return s;
}

// ---------------------------------------------------------------------------
// train-ranking
// ---------------------------------------------------------------------------

struct RankingReport {
    double held_out_tau = 0.0;
    std::size_t train_count = 0;
    std::size_t eval_count = 0;
};

inline RankingReport cmd_train_ranking(const ExperimentConfig& cfg) {
    validate_experiment_config(cfg);
    const ExpertDataset ds = read_dataset(resolved_dataset_path(cfg));
    auto [train, eval] = detail::split_dataset(ds);
    if (cfg.keep_every > 1)
        for (Trajectory& t : train.trajectories) t = subsample_trajectory(t, cfg.keep_every);

    const RankingModel m = train_ranking(train, cfg.ranking, cfg.seed);
    std::filesystem::create_directories(cfg.out_dir);
    save_ranking_checkpoint(m, cfg.out_dir + "/ranking.ckpt");

    RankingReport rep;
    rep.train_count = train.trajectories.size();
    rep.eval_count = eval.trajectories.size();
    rep.held_out_tau = detail::mean_held_out_tau(m, eval);  // full-rate held-out demos
    return rep;
}

// ---------------------------------------------------------------------------
// evaluation core (shared by the train loop, cmd_eval, and tests)
// ---------------------------------------------------------------------------

struct EvalMetrics {
    double success_rate = 0.0;
    double mean_true_return = 0.0;
    double mean_episode_length = 0.0;
    double mean_learned_reward = 0.0;  // over visited states; 0 without a model
};

// make_policy() yields a fresh per-episode policy callable (spec, state, rng) -> Vec2.
template <typename PolicyFactory>
EvalMetrics run_eval_episodes(const EnvSpec& spec, std::size_t episodes, Rng& rng,
                              PolicyFactory&& make_policy, const RewardModel* reward) {
    if (episodes < 1) throw ArgumentError("run_eval_episodes: need at least one episode");
    EvalMetrics m;
    double reward_sum = 0.0;
    std::size_t reward_n = 0;
    for (std::size_t ep = 0; ep < episodes; ++ep) {
        EnvState st = env_reset(spec, rng);
        auto policy = make_policy();
        for (;;) {
            const Vec2 a = policy(spec, st, rng);
            const StepResult r = env_step(spec, st, a);
            m.mean_true_return += r.true_reward;
            if (reward) {
                reward_sum += learned_reward(*reward, state_vector(spec, st));
                ++reward_n;
            }
            if (r.done) {
                m.success_rate += r.reached_goal ? 1.0 : 0.0;
                m.mean_episode_length += double(st.steps_elapsed);
                break;
            }
        }
    }
    m.success_rate /= double(episodes);
    m.mean_true_return /= double(episodes);
    m.mean_episode_length /= double(episodes);
    m.mean_learned_reward = reward_n ? reward_sum / double(reward_n) : 0.0;
    return m;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct CurveRow {
    std::size_t env_step = 0;
    double eval_success_rate = 0.0;
    double eval_mean_true_return = 0.0;
    double mean_learned_reward = 0.0;
    double discriminator_loss = 0.0;
    double ranking_kendall_tau = 0.0;
    double wall_clock_s = 0.0;
};

struct TrainResult {
    std::vector<CurveRow> curve;
    std::size_t disc_updates = 0;
    std::size_t env_steps = 0;
    bool early_stopped = false;
};

namespace detail {

constexpr const char* kCurveHeader =
    "env_step,eval_success_rate,eval_mean_true_return,mean_learned_reward,"
    "discriminator_loss,ranking_kendall_tau,wall_clock_s\n";

inline std::string curve_csv(const std::vector<CurveRow>& rows) {
    std::string out = kCurveHeader;
    char buf[224];
    for (const CurveRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.env_step,
                      r.eval_success_rate, r.eval_mean_true_return, r.mean_learned_reward,
                      r.discriminator_loss, r.ranking_kendall_tau, r.wall_clock_s);
        out += buf;
    }
    return out;
}

inline std::vector<double> grid_goal(const EnvSpec& spec) {
    return {spec.goal.x, spec.goal.y};
}

// Per-episode deterministic-policy factory over the current actor.
inline auto agent_policy_factory(const Agent& ag) {
    return [&ag]() {
        return [&ag](const EnvSpec& sp, const EnvState& st, Rng& r) {
            const std::vector<double> a = act(ag, state_vector(sp, st), true, r);
            return Vec2{a[0], a[1]};
        };
    };
}

}  // namespace detail

// Joint discriminator/policy loop: one environment step per outer iteration,
// discriminator refresh on its cadence, one agent_step per post-warmup step,
// periodic deterministic evaluation appended to the curve.
inline TrainResult cmd_train(const ExperimentConfig& cfg) {
    validate_experiment_config(cfg);
    const EnvSpec spec = env_spec_from(cfg);
    const std::size_t sdim = state_dim(spec);
    const ExpertDataset ds = read_dataset(resolved_dataset_path(cfg));

    RewardModel rm;
    rm.kind = cfg.reward_kind;
    rm.alpha = cfg.alpha;
    rm.clamp_epsilon = cfg.clamp_epsilon;
    rm.gail_raw_probability = cfg.gail_raw_probability;

    double tau_column = 0.0;
    if (detail::kind_needs_ranking(cfg.reward_kind)) {
        rm.ranking = load_ranking_checkpoint(cfg.out_dir + "/ranking.ckpt");
        const auto [train_split, eval_split] = detail::split_dataset(ds);
        tau_column = detail::mean_held_out_tau(*rm.ranking, eval_split);
    }
    DiscriminatorTrainer disc_trainer;
    const bool with_disc = detail::kind_needs_discriminator(cfg.reward_kind);
    if (with_disc) {
        disc_trainer = make_discriminator_trainer(sdim, cfg.disc, cfg.seed);
        rm.disc = disc_trainer.disc;
    }
    validate_reward_model(rm);

    std::filesystem::create_directories(cfg.out_dir);
    write_text_atomic(cfg.out_dir + "/config.snapshot", serialize_config(cfg));
    write_reward_grid_csv(reward_grid(rm, 101, detail::grid_goal(spec)),
                          cfg.out_dir + "/grid_pre.csv");

    Rng rng = make_rng(cfg.seed, 0x7EA1D);
    Agent ag = make_agent(sdim, 2, spec.max_step_norm, cfg.agent, rng);
    ReplayBuffer buf(cfg.total_steps + 1, sdim, 2);
    EnvState st = env_reset(spec, rng);
    std::uniform_real_distribution<double> warmup(-spec.max_step_norm, spec.max_step_norm);

    const auto t0 = std::chrono::steady_clock::now();
    TrainResult res;
    double last_disc_loss = 0.0;
    for (std::size_t n = 1; n <= cfg.total_steps; ++n) {
        const std::vector<double> obs = state_vector(spec, st);
        std::vector<double> a(2);
        if (n <= cfg.agent.explore_steps) {
            a[0] = warmup(rng);
            a[1] = warmup(rng);
        } else {
            a = act(ag, obs, false, rng);
        }
        const StepResult sr = env_step(spec, st, {a[0], a[1]});
        buf.push(Transition{obs, a, state_vector(spec, st), sr.reached_goal});
        if (sr.done) st = env_reset(spec, rng);

        if (n > cfg.agent.explore_steps) {
            if (with_disc && (n - cfg.agent.explore_steps) % cfg.reward_update_frequency == 0) {
                const std::optional<double> loss =
                    update_discriminator(disc_trainer, ds, &buf, rng);
                if (!loss.has_value())
                    throw ConfigError(
                        "train: not enough data for a discriminator batch at env step " +
                        std::to_string(n) + "; raise explore_steps or lower disc_batch");
                if (!std::isfinite(*loss))
                    throw NumericError("train: non-finite discriminator loss at env step " +
                                       std::to_string(n));
                last_disc_loss = *loss;
                rm.disc = disc_trainer.disc;
            }
            if (buf.can_sample(cfg.agent.batch_size)) {
                StepMetrics sm;
                try {
                    sm = agent_step(ag, buf, rm, cfg.agent, rng);
                } catch (const NumericError& e) {
                    throw NumericError("train: aborted at env step " + std::to_string(n) + ": " +
                                       e.what());
                }
                double check = sm.actor_loss + sm.mean_batch_reward + sm.temperature;
                for (double cl : sm.critic_losses) check += cl;
                if (!std::isfinite(check))
                    throw NumericError("train: non-finite agent metrics at env step " +
                                       std::to_string(n));
            }
        }

        res.env_steps = n;
        if (n % cfg.eval_every == 0) {
            Rng eval_rng = make_rng(cfg.seed, 0xE7A10000ull + n);
            const EvalMetrics em = run_eval_episodes(spec, cfg.eval_episodes, eval_rng,
                                                     detail::agent_policy_factory(ag), &rm);
            CurveRow row;
            row.env_step = n;
            row.eval_success_rate = em.success_rate;
            row.eval_mean_true_return = em.mean_true_return;
            row.mean_learned_reward = em.mean_learned_reward;
            row.discriminator_loss = last_disc_loss;
            row.ranking_kendall_tau = tau_column;
            row.wall_clock_s =
                cfg.wall_clock
                    ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                    : 0.0;
            if (!std::isfinite(row.mean_learned_reward))
                throw NumericError("train: non-finite eval reward at env step " +
                                   std::to_string(n));
            res.curve.push_back(row);
            if (cfg.early_stop_success > 0.0 && em.success_rate >= cfg.early_stop_success) {
                res.early_stopped = true;
                break;
            }
        }
    }

    res.disc_updates = disc_trainer.updates_done;
    write_text_atomic(cfg.out_dir + "/curve.csv", detail::curve_csv(res.curve));
    if (with_disc) save_discriminator_checkpoint(disc_trainer.disc, cfg.out_dir + "/disc.ckpt");
    save_agent_checkpoint(ag, cfg.out_dir + "/agent.ckpt");
    write_reward_grid_csv(reward_grid(rm, 101, detail::grid_goal(spec)),
                          cfg.out_dir + "/grid_post.csv");
    return res;
}

// ---------------------------------------------------------------------------
// eval / reward-grid over stored checkpoints
// ---------------------------------------------------------------------------

// Reassemble the reward model exactly as the training run composed it.
inline RewardModel reward_model_from_checkpoints(const ExperimentConfig& cfg) {
    RewardModel rm;
    rm.kind = cfg.reward_kind;
    rm.alpha = cfg.alpha;
    rm.clamp_epsilon = cfg.clamp_epsilon;
    rm.gail_raw_probability = cfg.gail_raw_probability;
    if (detail::kind_needs_ranking(cfg.reward_kind))
        rm.ranking = load_ranking_checkpoint(cfg.out_dir + "/ranking.ckpt");
    if (detail::kind_needs_discriminator(cfg.reward_kind))
        rm.disc = load_discriminator_checkpoint(cfg.out_dir + "/disc.ckpt");
    validate_reward_model(rm);
    return rm;
}

inline EvalMetrics cmd_eval(const ExperimentConfig& cfg, std::size_t episodes = 0) {
    validate_experiment_config(cfg);
    const EnvSpec spec = env_spec_from(cfg);
    const RewardModel rm = reward_model_from_checkpoints(cfg);
    const Agent ag = load_agent_checkpoint(cfg.out_dir + "/agent.ckpt");
    Rng eval_rng = make_rng(cfg.seed, 0xE7A1);
    return run_eval_episodes(spec, episodes ? episodes : cfg.eval_episodes, eval_rng,
                             detail::agent_policy_factory(ag), &rm);
}

inline std::string cmd_reward_grid(const ExperimentConfig& cfg, std::size_t resolution) {
    validate_experiment_config(cfg);
    const EnvSpec spec = env_spec_from(cfg);
    const RewardModel rm = reward_model_from_checkpoints(cfg);
    const std::string path = cfg.out_dir + "/grid.csv";
    write_reward_grid_csv(reward_grid(rm, resolution, detail::grid_goal(spec)), path);
    return path;
}

}  // namespace r2r
