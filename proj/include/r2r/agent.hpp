#pragma once

// Off-policy maximum-entropy actor-critic. Squashed-Gaussian policy, twin
// critics with Polyak-averaged targets, auto-tuned temperature, and a replay
// buffer that stores transitions without rewards: rewards are recomputed from
// the current reward model every time a batch is sampled, so reward updates
// never go stale in the buffer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "r2r/checkpoint.hpp"
#include "r2r/numkit.hpp"
#include "r2r/replay.hpp"
#include "r2r/reward.hpp"

namespace r2r {

struct SacConfig {
    double discount = 0.99;
    double tau = 0.005;  // Polyak smoothing toward target critics
    std::size_t n_critics = 2;
    double actor_lr = 3e-4;
    double critic_lr = 3e-4;
    double temp_lr = 3e-4;  // 0 pins the temperature
    std::size_t utd_ratio = 20;
    std::size_t batch_size = 256;
    std::size_t explore_steps = 1000;  // uniform-random warmup actions
    std::vector<std::size_t> actor_hidden{64, 64};
    std::vector<std::size_t> critic_hidden{64, 64};
    double init_temperature = 1.0;
};

inline void validate_sac_config(const SacConfig& c) {
    if (!(c.discount >= 0.0 && c.discount < 1.0))
        throw ConfigError("sac: discount must lie in [0, 1)");
    if (!(c.tau > 0.0 && c.tau <= 1.0)) throw ConfigError("sac: tau must lie in (0, 1]");
    if (c.n_critics < 2) throw ConfigError("sac: need at least two critics");
    if (c.utd_ratio < 1) throw ConfigError("sac: utd_ratio must be >= 1");
    if (c.batch_size < 1) throw ConfigError("sac: batch_size must be >= 1");
    if (!(c.actor_lr >= 0.0 && c.critic_lr >= 0.0 && c.temp_lr >= 0.0))
        throw ConfigError("sac: learning rates must be >= 0");
    if (!(c.init_temperature > 0.0)) throw ConfigError("sac: init_temperature must be > 0");
}

struct Agent {
    MlpParams actor;  // outputs per-dimension mean and log-std
    std::vector<MlpParams> critics;
    std::vector<MlpParams> targets;  // move only by Polyak averaging
    double log_temp = 0.0;
    double action_scale = 0.05;
    double target_entropy = -1.0;  // -action_dim
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    AdamState actor_adam;
    std::vector<AdamState> critic_adams;
    double temp_m = 0.0, temp_v = 0.0;  // scalar Adam moments for log_temp
    std::uint64_t temp_steps = 0;

    double temperature() const { return std::exp(log_temp); }
};

inline Agent make_agent(std::size_t state_dim, std::size_t action_dim, double action_scale,
                        const SacConfig& cfg, Rng& rng) {
    validate_sac_config(cfg);
    if (state_dim < 1 || action_dim < 1)
        throw ArgumentError("make_agent: dimensions must be >= 1");
    if (!(action_scale > 0.0)) throw ArgumentError("make_agent: action_scale must be > 0");
    Agent ag;
    ag.state_dim = state_dim;
    ag.action_dim = action_dim;
    ag.action_scale = action_scale;
    ag.target_entropy = -static_cast<double>(action_dim);
    ag.log_temp = std::log(cfg.init_temperature);

    std::vector<std::size_t> actor_sizes{state_dim};
    actor_sizes.insert(actor_sizes.end(), cfg.actor_hidden.begin(), cfg.actor_hidden.end());
    actor_sizes.push_back(2 * action_dim);
    ag.actor = make_mlp(actor_sizes, rng);

    std::vector<std::size_t> critic_sizes{state_dim + action_dim};
    critic_sizes.insert(critic_sizes.end(), cfg.critic_hidden.begin(), cfg.critic_hidden.end());
    critic_sizes.push_back(1);
    for (std::size_t c = 0; c < cfg.n_critics; ++c) {
        ag.critics.push_back(make_mlp(critic_sizes, rng));
        ag.critic_adams.push_back(make_adam(ag.critics.back(), cfg.critic_lr));
    }
    ag.targets = ag.critics;  // start in sync
    ag.actor_adam = make_adam(ag.actor, cfg.actor_lr);
    return ag;
}

namespace detail {

constexpr double kLogStdMin = -10.0;
constexpr double kLogStdMax = 2.0;

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& v : m.data) v = gauss(rng);
    return m;
}

inline Matrix hcat(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw ShapeError("hcat: row mismatch");
    Matrix c(a.rows, a.cols + b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        std::copy(a.row(i), a.row(i) + a.cols, c.row(i));
        std::copy(b.row(i), b.row(i) + b.cols, c.row(i) + a.cols);
    }
    return c;
}

// Reparameterized policy sample with everything the backward pass needs.
struct PolicySample {
    ForwardCache cache;  // actor forward
    Matrix sigma;        // exp(clamped log-std)
    Matrix gate;         // 1 where the raw log-std is strictly inside the clamp
    Matrix tanh_v;       // squashed pre-tanh value
    Matrix actions;      // action_scale * tanh_v
    std::vector<double> log_prob;  // per row, in the unit (pre-scale) space
};

inline PolicySample sample_policy(const MlpParams& actor, const Matrix& states,
                                  const Matrix& noise, double action_scale) {
    PolicySample ps;
    const Matrix out = mlp_forward(actor, states, &ps.cache);
    if (out.cols % 2 != 0 || out.cols == 0)
        throw ShapeError("actor must emit mean and log-std per action dimension");
    const std::size_t a_dim = out.cols / 2;
    if (noise.rows != states.rows || noise.cols != a_dim)
        throw ShapeError("sample_policy: noise " + shape_str(noise) + " for " +
                         std::to_string(a_dim) + " action dims");
    const std::size_t n = states.rows;
    ps.sigma = Matrix(n, a_dim);
    ps.gate = Matrix(n, a_dim);
    ps.tanh_v = Matrix(n, a_dim);
    ps.actions = Matrix(n, a_dim);
    ps.log_prob.assign(n, 0.0);
    const double log_2pi = std::log(2.0 * 3.14159265358979323846);
    const double log_2 = std::log(2.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < a_dim; ++k) {
            const double mu = out(i, k);
            const double raw = out(i, a_dim + k);
            const double lc = std::clamp(raw, kLogStdMin, kLogStdMax);
            const double sg = std::exp(lc);
            const double xi = noise(i, k);
            const double v = mu + sg * xi;
            const double t = std::tanh(v);
            ps.sigma(i, k) = sg;
            ps.gate(i, k) = (raw > kLogStdMin && raw < kLogStdMax) ? 1.0 : 0.0;
            ps.tanh_v(i, k) = t;
            ps.actions(i, k) = action_scale * t;
            // Gaussian term with the sample substituted, then the tanh
            // change-of-variables via log(1-tanh^2(v)) = 2(log2 - v - softplus(-2v)).
            const double softplus = -stable_log_sigmoid(2.0 * v);
            ps.log_prob[i] +=
                -0.5 * xi * xi - lc - 0.5 * log_2pi + 2.0 * v + 2.0 * softplus - 2.0 * log_2;
        }
    }
    return ps;
}

}  // namespace detail

// One action for one state; stochastic unless deterministic is set (which
// consumes no randomness). Components are bounded by action_scale.
inline std::vector<double> act(const Agent& ag, const std::vector<double>& state,
                               bool deterministic, Rng& rng) {
    if (state.size() != ag.state_dim)
        throw ShapeError("act: state has " + std::to_string(state.size()) + " dims, agent wants " +
                         std::to_string(ag.state_dim));
    Matrix s(1, state.size());
    std::copy(state.begin(), state.end(), s.row(0));
    const Matrix out = mlp_forward(ag.actor, s);
    std::vector<double> a(ag.action_dim, 0.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t k = 0; k < ag.action_dim; ++k) {
        double v = out(0, k);
        if (!deterministic) {
            const double sg =
                std::exp(std::clamp(out(0, ag.action_dim + k), detail::kLogStdMin,
                                    detail::kLogStdMax));
            v += sg * gauss(rng);
        }
        a[k] = ag.action_scale * std::tanh(v);
    }
    return a;
}

// Rewards for a batch under the current model, evaluated on next states.
// Nothing is written back to the buffer, so a fresher model simply produces
// fresher rewards for the same transitions.
inline std::vector<double> relabel_rewards(const RewardModel& rm, const TransitionBatch& b) {
    validate_reward_model(rm);
    const std::size_t n = b.next_states.rows;
    std::vector<double> u(n, 0.0), z(n, 0.0);
    if (rm.ranking) {
        const Matrix raw = mlp_forward(rm.ranking->net, b.next_states);
        if (raw.cols != 1) throw ShapeError("ranking model must have scalar output");
        for (std::size_t i = 0; i < n; ++i) u[i] = raw(i, 0) - rm.ranking->anchor_offset;
    }
    if (rm.disc) {
        const Matrix raw = mlp_forward(rm.disc->net, b.next_states);
        if (raw.cols != 1) throw ShapeError("discriminator must have scalar output");
        for (std::size_t i = 0; i < n; ++i) z[i] = raw(i, 0);
    }
    std::vector<double> r(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) r[i] = reward_from_parts(rm, u[i], z[i]);
    return r;
}

// Bootstrapped regression targets: r + gamma * (1-done) * (min target Q of a
// fresh policy action - temperature * its log-prob).
inline std::vector<double> td_targets(const Agent& ag, const RewardModel& rm,
                                      const TransitionBatch& b, const SacConfig& cfg, Rng& rng,
                                      std::vector<double>* rewards_out = nullptr) {
    const std::size_t n = b.next_states.rows;
    std::vector<double> r = relabel_rewards(rm, b);
    const Matrix noise = detail::gaussian_matrix(n, ag.action_dim, rng);
    const detail::PolicySample ps =
        detail::sample_policy(ag.actor, b.next_states, noise, ag.action_scale);
    const Matrix sa = detail::hcat(b.next_states, ps.actions);
    std::vector<double> min_q(n, std::numeric_limits<double>::infinity());
    for (const MlpParams& t : ag.targets) {
        const Matrix q = mlp_forward(t, sa);
        for (std::size_t i = 0; i < n; ++i) min_q[i] = std::min(min_q[i], q(i, 0));
    }
    const double temp = ag.temperature();
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = r[i] + cfg.discount * (1.0 - b.dones[i]) * (min_q[i] - temp * ps.log_prob[i]);
        if (!std::isfinite(y[i]))
            throw NumericError("td target not finite at row " + std::to_string(i));
    }
    if (rewards_out) *rewards_out = std::move(r);
    return y;
}

// Mean squared error of one critic against fixed targets.
inline double critic_loss(const MlpParams& critic, const Matrix& states_actions,
                          const std::vector<double>& targets, MlpGrads* grads = nullptr) {
    if (targets.size() != states_actions.rows)
        throw ShapeError("critic_loss: target count does not match batch");
    ForwardCache cache;
    const Matrix q = mlp_forward(critic, states_actions, grads ? &cache : nullptr);
    if (q.cols != 1) throw ShapeError("critic must have scalar output");
    const std::size_t n = targets.size();
    Matrix og(n, 1);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = q(i, 0) - targets[i];
        loss += d * d;
        og(i, 0) = 2.0 * d / static_cast<double>(n);
    }
    loss /= static_cast<double>(n);
    if (grads) mlp_backward(critic, cache, og, *grads);
    return loss;
}

// Policy objective: mean(temperature * log pi - min critic Q), reparameterized
// through the provided noise so the same draw is differentiable and testable.
inline double actor_loss(const MlpParams& actor, const std::vector<MlpParams>& critics,
                         const Matrix& states, const Matrix& noise, double temperature,
                         double action_scale, MlpGrads* grads = nullptr,
                         double* mean_log_prob = nullptr) {
    if (critics.empty()) throw ArgumentError("actor_loss: no critics");
    detail::PolicySample ps = detail::sample_policy(actor, states, noise, action_scale);
    const std::size_t n = states.rows;
    const std::size_t a_dim = ps.actions.cols;
    const Matrix sa = detail::hcat(states, ps.actions);
    std::vector<ForwardCache> caches(critics.size());
    std::vector<Matrix> qs;
    qs.reserve(critics.size());
    for (std::size_t j = 0; j < critics.size(); ++j)
        qs.push_back(mlp_forward(critics[j], sa, grads ? &caches[j] : nullptr));

    std::vector<std::size_t> argmin(n, 0);
    double loss = 0.0, lp_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double q_min = qs[0](i, 0);
        for (std::size_t j = 1; j < critics.size(); ++j) {
            if (qs[j](i, 0) < q_min) {
                q_min = qs[j](i, 0);
                argmin[i] = j;
            }
        }
        loss += temperature * ps.log_prob[i] - q_min;
        lp_sum += ps.log_prob[i];
    }
    loss /= static_cast<double>(n);
    if (mean_log_prob) *mean_log_prob = lp_sum / static_cast<double>(n);

    if (grads) {
        const double inv_n = 1.0 / static_cast<double>(n);
        // dLoss/daction via the input gradient of whichever critic is the
        // row's minimum; rows assigned to the other critic carry zeros.
        Matrix dq_da(n, a_dim);
        for (std::size_t j = 0; j < critics.size(); ++j) {
            Matrix og(n, 1);
            bool used = false;
            for (std::size_t i = 0; i < n; ++i) {
                if (argmin[i] == j) {
                    og(i, 0) = -inv_n;
                    used = true;
                }
            }
            if (!used) continue;
            MlpGrads scratch = zero_grads_like(critics[j]);  // critic params stay frozen
            const Matrix ig = mlp_backward(critics[j], caches[j], og, scratch);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < a_dim; ++k)
                    dq_da(i, k) += ig(i, states.cols + k);
        }
        Matrix og_actor(n, 2 * a_dim);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < a_dim; ++k) {
                const double t = ps.tanh_v(i, k);
                const double d_mu = temperature * inv_n * 2.0 * t +
                                    dq_da(i, k) * action_scale * (1.0 - t * t);
                og_actor(i, k) = d_mu;
                og_actor(i, a_dim + k) =
                    ps.gate(i, k) *
                    (-temperature * inv_n + d_mu * ps.sigma(i, k) * noise(i, k));
            }
        }
        mlp_backward(actor, ps.cache, og_actor, *grads);
    }
    return loss;
}

// Gradient of the temperature objective wrt log-temperature; vanishes exactly
// when the policy's mean log-prob equals the negated entropy target.
inline double temperature_grad(double mean_log_prob, double target_entropy) {
    return -(mean_log_prob + target_entropy);
}

inline void polyak_update(MlpParams& target, const MlpParams& online, double tau) {
    if (target.weights.size() != online.weights.size())
        throw ShapeError("polyak_update: layer count mismatch");
    for (std::size_t l = 0; l < target.weights.size(); ++l) {
        if (!target.weights[l].same_shape(online.weights[l]))
            throw ShapeError("polyak_update: shape mismatch at layer " + std::to_string(l));
        for (std::size_t i = 0; i < target.weights[l].data.size(); ++i)
            target.weights[l].data[i] =
                (1.0 - tau) * target.weights[l].data[i] + tau * online.weights[l].data[i];
        for (std::size_t i = 0; i < target.biases[l].size(); ++i)
            target.biases[l][i] = (1.0 - tau) * target.biases[l][i] + tau * online.biases[l][i];
    }
}

struct CriticMetrics {
    std::vector<double> losses;  // one per critic
    double mean_reward = 0.0;
    double mean_target = 0.0;
};

inline CriticMetrics critic_update(Agent& ag, const RewardModel& rm, const TransitionBatch& b,
                                   const SacConfig& cfg, Rng& rng) {
    std::vector<double> rewards;
    const std::vector<double> y = td_targets(ag, rm, b, cfg, rng, &rewards);
    const Matrix sa = detail::hcat(b.states, b.actions);
    CriticMetrics m;
    for (std::size_t j = 0; j < ag.critics.size(); ++j) {
        MlpGrads g = zero_grads_like(ag.critics[j]);
        m.losses.push_back(critic_loss(ag.critics[j], sa, y, &g));
        adam_step(ag.critics[j], g, ag.critic_adams[j]);
    }
    for (std::size_t j = 0; j < ag.critics.size(); ++j)
        polyak_update(ag.targets[j], ag.critics[j], cfg.tau);
    for (double r : rewards) m.mean_reward += r;
    m.mean_reward /= static_cast<double>(rewards.size());
    for (double v : y) m.mean_target += v;
    m.mean_target /= static_cast<double>(y.size());
    return m;
}

struct ActorMetrics {
    double actor_loss = 0.0;
    double temperature = 0.0;
    double mean_log_prob = 0.0;
};

inline ActorMetrics actor_and_temperature_update(Agent& ag, const TransitionBatch& b,
                                                 const SacConfig& cfg, Rng& rng) {
    const Matrix noise = detail::gaussian_matrix(b.states.rows, ag.action_dim, rng);
    MlpGrads g = zero_grads_like(ag.actor);
    ActorMetrics m;
    m.actor_loss = actor_loss(ag.actor, ag.critics, b.states, noise, ag.temperature(),
                              ag.action_scale, &g, &m.mean_log_prob);
    adam_step(ag.actor, g, ag.actor_adam);
    if (cfg.temp_lr > 0.0) {
        const double grad = temperature_grad(m.mean_log_prob, ag.target_entropy);
        ++ag.temp_steps;
        ag.temp_m = 0.9 * ag.temp_m + 0.1 * grad;
        ag.temp_v = 0.999 * ag.temp_v + 0.001 * grad * grad;
        const double t = static_cast<double>(ag.temp_steps);
        const double mh = ag.temp_m / (1.0 - std::pow(0.9, t));
        const double vh = ag.temp_v / (1.0 - std::pow(0.999, t));
        ag.log_temp -= cfg.temp_lr * mh / (std::sqrt(vh) + 1e-8);
    }
    m.temperature = ag.temperature();
    return m;
}

struct StepMetrics {
    std::vector<double> critic_losses;  // mean over the step's batches, per critic
    double actor_loss = 0.0;
    double temperature = 0.0;
    double mean_batch_reward = 0.0;
    double mean_log_prob = 0.0;
    std::size_t critic_batches = 0;
};

// One learner step: utd_ratio critic batches, then one actor/temperature batch.
inline StepMetrics agent_step(Agent& ag, ReplayBuffer& buf, const RewardModel& rm,
                              const SacConfig& cfg, Rng& rng) {
    validate_sac_config(cfg);
    StepMetrics m;
    m.critic_losses.assign(ag.critics.size(), 0.0);
    for (std::size_t u = 0; u < cfg.utd_ratio; ++u) {
        const TransitionBatch b = buffer_sample(buf, cfg.batch_size, rng);
        const CriticMetrics cm = critic_update(ag, rm, b, cfg, rng);
        for (std::size_t j = 0; j < cm.losses.size(); ++j) m.critic_losses[j] += cm.losses[j];
        m.mean_batch_reward += cm.mean_reward;
        ++m.critic_batches;
    }
    const double inv = 1.0 / static_cast<double>(cfg.utd_ratio);
    for (double& v : m.critic_losses) v *= inv;
    m.mean_batch_reward *= inv;
    const TransitionBatch b = buffer_sample(buf, cfg.batch_size, rng);
    const ActorMetrics am = actor_and_temperature_update(ag, b, cfg, rng);
    m.actor_loss = am.actor_loss;
    m.temperature = am.temperature;
    m.mean_log_prob = am.mean_log_prob;
    return m;
}

inline void save_agent_checkpoint(const Agent& ag, const std::string& path) {
    Json payload;
    payload["state_dim"] = ag.state_dim;
    payload["action_dim"] = ag.action_dim;
    payload["action_scale"] = ag.action_scale;
    payload["target_entropy"] = ag.target_entropy;
    payload["log_temp"] = ag.log_temp;
    payload["actor"] = mlp_to_json(ag.actor);
    Json critics = Json::array(), targets = Json::array(), adams = Json::array();
    for (const auto& c : ag.critics) critics.push_back(mlp_to_json(c));
    for (const auto& t : ag.targets) targets.push_back(mlp_to_json(t));
    for (const auto& a : ag.critic_adams) adams.push_back(adam_to_json(a));
    payload["critics"] = std::move(critics);
    payload["targets"] = std::move(targets);
    payload["critic_adams"] = std::move(adams);
    payload["actor_adam"] = adam_to_json(ag.actor_adam);
    payload["temp_m"] = ag.temp_m;
    payload["temp_v"] = ag.temp_v;
    payload["temp_steps"] = ag.temp_steps;
    save_checkpoint(path, "agent", payload);
}

inline Agent load_agent_checkpoint(const std::string& path) {
    const Json payload = load_checkpoint(path, "agent");
    Agent ag;
    try {
        ag.state_dim = payload.at("state_dim").get<std::size_t>();
        ag.action_dim = payload.at("action_dim").get<std::size_t>();
        ag.action_scale = payload.at("action_scale").get<double>();
        ag.target_entropy = payload.at("target_entropy").get<double>();
        ag.log_temp = payload.at("log_temp").get<double>();
        ag.actor = mlp_from_json(payload.at("actor"));
        const auto& critics = payload.at("critics");
        const auto& targets = payload.at("targets");
        const auto& adams = payload.at("critic_adams");
        if (critics.size() != targets.size() || critics.size() != adams.size())
            throw FormatError("agent checkpoint: critic record counts disagree");
        for (std::size_t j = 0; j < critics.size(); ++j) {
            ag.critics.push_back(mlp_from_json(critics.at(j)));
            ag.targets.push_back(mlp_from_json(targets.at(j)));
            ag.critic_adams.push_back(adam_from_json(adams.at(j), ag.critics.back()));
        }
        ag.actor_adam = adam_from_json(payload.at("actor_adam"), ag.actor);
        ag.temp_m = payload.at("temp_m").get<double>();
        ag.temp_v = payload.at("temp_v").get<double>();
        ag.temp_steps = payload.at("temp_steps").get<std::uint64_t>();
    } catch (const Json::exception& e) {
        throw FormatError(std::string("bad agent checkpoint: ") + e.what());
    }
    if (ag.critics.empty()) throw FormatError("agent checkpoint: no critics");
    if (!std::isfinite(ag.log_temp)) throw FormatError("agent checkpoint: log_temp not finite");
    return ag;
}

}  // namespace r2r
