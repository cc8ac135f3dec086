#pragma once

// Expert-vs-policy state classifier. Its odds D/(1-D) estimate the density
// ratio between the expert and policy state distributions under balanced
// class sampling. Also hosts the goal-only variant (positives are expert
// final states) and the counterfactual goal-pairing variant.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "r2r/checkpoint.hpp"
#include "r2r/common.hpp"
#include "r2r/demos.hpp"
#include "r2r/numkit.hpp"
#include "r2r/replay.hpp"

namespace r2r {

enum class ClassifierBatchMode {
    Standard,        // expert frames vs replay states
    GoalOnly,        // expert final states vs replay states
    Counterfactual,  // (frame, own goal) vs (frame, other trajectory's goal)
};

inline std::string classifier_mode_tag(ClassifierBatchMode m) {
    switch (m) {
        case ClassifierBatchMode::Standard: return "standard";
        case ClassifierBatchMode::GoalOnly: return "goal_only";
        case ClassifierBatchMode::Counterfactual: return "counterfactual";
    }
    throw ArgumentError("classifier_mode_tag: unknown mode");
}

inline ClassifierBatchMode classifier_mode_from_tag(const std::string& tag) {
    if (tag == "standard") return ClassifierBatchMode::Standard;
    if (tag == "goal_only") return ClassifierBatchMode::GoalOnly;
    if (tag == "counterfactual") return ClassifierBatchMode::Counterfactual;
    throw FormatError("classifier_mode_from_tag: unknown mode '" + tag + "'");
}

struct Discriminator {
    MlpParams net;  // scalar logit output
    bool goal_conditioned = false;
    bool mixup_enabled = true;
    ClassifierBatchMode trained_mode = ClassifierBatchMode::Standard;
};

struct ClassifierBatch {
    Matrix states;
    std::vector<double> labels;  // 1 expert, 0 policy; fractional after mixup
};

namespace detail {

// Uniform over all frames pooled across trajectories: the empirical expert
// state distribution, where longer demos carry proportionally more mass.
struct FramePool {
    const ExpertDataset* ds;
    std::vector<std::size_t> offsets;  // cumulative frame counts
    std::size_t total = 0;

    explicit FramePool(const ExpertDataset& dataset) : ds(&dataset) {
        offsets.reserve(dataset.trajectories.size());
        for (const auto& t : dataset.trajectories) {
            offsets.push_back(total);
            total += t.states.size();
        }
    }

    std::pair<std::size_t, std::size_t> pick(Rng& rng) const {
        std::uniform_int_distribution<std::size_t> d(0, total - 1);
        const std::size_t flat = d(rng);
        std::size_t traj = offsets.size() - 1;
        while (offsets[traj] > flat) --traj;
        return {traj, flat - offsets[traj]};
    }
};

}  // namespace detail

// Balanced batch: batch_size/2 positives then batch_size/2 negatives (order
// fixed; labels are what matter). Returns nullopt when the mode needs policy
// states and the replay buffer is still empty — the caller defers the update.
inline std::optional<ClassifierBatch> build_classifier_batch(
    const ExpertDataset& expert, const ReplayBuffer* replay, std::size_t batch_size,
    ClassifierBatchMode mode, Rng& rng, bool mixup) {
    if (expert.trajectories.empty())
        throw ArgumentError("build_classifier_batch: expert dataset is empty");
    if (batch_size < 2 || batch_size % 2 != 0)
        throw ArgumentError("build_classifier_batch: batch_size must be even and >= 2");
    const std::size_t half = batch_size / 2;
    const std::size_t dim = expert.trajectories.front().states.front().size();
    const bool needs_replay = mode != ClassifierBatchMode::Counterfactual;
    if (needs_replay && (replay == nullptr || replay->size() == 0)) return std::nullopt;
    if (needs_replay && replay->state_dim() != dim)
        throw ShapeError("build_classifier_batch: replay state dim does not match expert");
    if (mode == ClassifierBatchMode::Counterfactual && expert.trajectories.size() < 2)
        throw ArgumentError(
            "build_classifier_batch: counterfactual mode needs at least two trajectories");

    detail::FramePool pool(expert);
    ClassifierBatch b;
    const std::size_t in_dim = mode == ClassifierBatchMode::Counterfactual ? 2 * dim : dim;
    b.states = Matrix(batch_size, in_dim);
    b.labels.assign(batch_size, 0.0);

    auto write_frame = [&](std::size_t row, const std::vector<double>& frame) {
        for (std::size_t c = 0; c < dim; ++c) b.states(row, c) = frame[c];
    };
    auto write_goal = [&](std::size_t row, const std::vector<double>& goal) {
        for (std::size_t c = 0; c < dim; ++c) b.states(row, dim + c) = goal[c];
    };

    switch (mode) {
        case ClassifierBatchMode::Standard:
            for (std::size_t r = 0; r < half; ++r) {
                const auto [traj, idx] = pool.pick(rng);
                write_frame(r, expert.trajectories[traj].states[idx]);
                b.labels[r] = 1.0;
            }
            break;
        case ClassifierBatchMode::GoalOnly:
            for (std::size_t r = 0; r < half; ++r) {
                std::uniform_int_distribution<std::size_t> d(0, expert.trajectories.size() - 1);
                write_frame(r, expert.trajectories[d(rng)].states.back());
                b.labels[r] = 1.0;
            }
            break;
        case ClassifierBatchMode::Counterfactual: {
            std::uniform_int_distribution<std::size_t> other(0, expert.trajectories.size() - 2);
            for (std::size_t r = 0; r < batch_size; ++r) {
                const bool positive = r < half;
                const auto [traj, idx] = pool.pick(rng);
                write_frame(r, expert.trajectories[traj].states[idx]);
                std::size_t goal_traj = traj;
                if (!positive) {
                    goal_traj = other(rng);
                    if (goal_traj >= traj) ++goal_traj;  // uniform over the others
                }
                write_goal(r, expert.trajectories[goal_traj].states.back());
                b.labels[r] = positive ? 1.0 : 0.0;
            }
            break;
        }
    }
    if (needs_replay) {
        std::uniform_int_distribution<std::size_t> d(0, replay->size() - 1);
        for (std::size_t r = half; r < batch_size; ++r) {
            const double* s = replay->state_ptr(d(rng));
            for (std::size_t c = 0; c < dim; ++c) b.states(r, c) = s[c];
        }
    }
    if (mixup) mixup_batch({&b.states}, b.labels, rng);
    return b;
}

// Mean binary cross-entropy between sigma(logit) and the labels, computed in
// logit form (no probability clamp, so saturated correct answers reach ~0).
// Gradients, when requested, accumulate into *grads.
inline double discriminator_loss(const Discriminator& d, const ClassifierBatch& b,
                                 MlpGrads* grads = nullptr) {
    const std::size_t n = b.states.rows;
    if (b.labels.size() != n) throw ShapeError("discriminator_loss: labels/states mismatch");
    if (n == 0) throw ArgumentError("discriminator_loss: empty batch");
    ForwardCache cache;
    const Matrix logits = mlp_forward(d.net, b.states, grads ? &cache : nullptr);
    Matrix dout(n, 1);
    double loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const double z = logits(r, 0);
        if (!std::isfinite(z))
            throw NumericError("discriminator_loss: non-finite logit at row " + std::to_string(r));
        const double y = b.labels[r];
        loss += -(y * stable_log_sigmoid(z) + (1.0 - y) * stable_log_sigmoid(-z));
        if (grads) dout(r, 0) = (sigmoid(z) - y) / static_cast<double>(n);
    }
    loss /= static_cast<double>(n);
    if (grads) mlp_backward(d.net, cache, dout, *grads);
    return loss;
}

inline double discriminator_logit(const Discriminator& d, const std::vector<double>& state) {
    if (state.size() != d.net.input_dim())
        throw ShapeError("classify: state has " + std::to_string(state.size()) +
                         " entries, network expects " + std::to_string(d.net.input_dim()));
    Matrix x(1, state.size());
    for (std::size_t i = 0; i < state.size(); ++i) x(0, i) = state[i];
    return mlp_forward(d.net, x)(0, 0);
}

// sigma(logit) clamped away from {0,1} so downstream logs stay finite.
inline double classify(const Discriminator& d, const std::vector<double>& state) {
    return clamp_prob(sigmoid(discriminator_logit(d, state)));
}

// D/(1-D) with numerator and denominator each computed as a stable sigmoid
// and clamped independently: sigma(-z) avoids the 1-p cancellation, so the
// ratio respects the clamp bounds exactly.
inline double density_ratio(const Discriminator& d, const std::vector<double>& state) {
    const double z = discriminator_logit(d, state);
    return clamp_prob(sigmoid(z)) / clamp_prob(sigmoid(-z));
}

struct DiscrimTrainConfig {
    std::vector<std::size_t> hidden_sizes{64, 64};
    std::size_t batch_size = 32;
    double learning_rate = 1e-4;
    ClassifierBatchMode mode = ClassifierBatchMode::Standard;
    bool mixup = true;
    bool spectral_norm = true;
    std::size_t steps_per_update = 1;
};

// Warm-started classifier training state: the discriminator is never
// re-initialized across the run, only nudged by further Adam steps.
struct DiscriminatorTrainer {
    Discriminator disc;
    DiscrimTrainConfig cfg;
    AdamState adam;
    std::vector<SpectralNormState> sn;
    std::size_t updates_done = 0;
};

inline DiscriminatorTrainer make_discriminator_trainer(std::size_t state_dim,
                                                       const DiscrimTrainConfig& cfg,
                                                       std::uint64_t seed) {
    if (state_dim < 1) throw ArgumentError("make_discriminator_trainer: state_dim must be >= 1");
    Rng rng = make_rng(seed, 0xD15Cu);
    const std::size_t in_dim =
        cfg.mode == ClassifierBatchMode::Counterfactual ? 2 * state_dim : state_dim;
    std::vector<std::size_t> layers{in_dim};
    layers.insert(layers.end(), cfg.hidden_sizes.begin(), cfg.hidden_sizes.end());
    layers.push_back(1);
    DiscriminatorTrainer tr;
    tr.cfg = cfg;
    tr.disc.net = make_mlp(layers, rng);
    tr.disc.goal_conditioned = cfg.mode == ClassifierBatchMode::Counterfactual;
    tr.disc.mixup_enabled = cfg.mixup;
    tr.disc.trained_mode = cfg.mode;
    if (!cfg.spectral_norm) tr.disc.net.spectral_norm_mask.assign(tr.disc.net.weights.size(), 0);
    tr.sn = make_spectral_norm_states(tr.disc.net, rng);
    tr.adam = make_adam(tr.disc.net, cfg.learning_rate);
    return tr;
}

// Runs cfg.steps_per_update Adam steps on fresh balanced batches; returns the
// last loss, or nullopt when the replay side is empty (update deferred).
inline std::optional<double> update_discriminator(DiscriminatorTrainer& tr,
                                                  const ExpertDataset& expert,
                                                  const ReplayBuffer* replay, Rng& rng) {
    std::optional<double> loss;
    MlpGrads grads = zero_grads_like(tr.disc.net);
    for (std::size_t k = 0; k < tr.cfg.steps_per_update; ++k) {
        auto batch = build_classifier_batch(expert, replay, tr.cfg.batch_size, tr.cfg.mode, rng,
                                            tr.cfg.mixup);
        if (!batch.has_value()) return std::nullopt;
        apply_spectral_norm(tr.disc.net, tr.sn);
        clear_grads(grads);
        loss = discriminator_loss(tr.disc, *batch, &grads);
        adam_step(tr.disc.net, grads, tr.adam);
        ++tr.updates_done;
    }
    return loss;
}

inline void save_discriminator_checkpoint(const Discriminator& d, const std::string& path) {
    Json payload;
    payload["net"] = mlp_to_json(d.net);
    payload["goal_conditioned"] = d.goal_conditioned;
    payload["mixup_enabled"] = d.mixup_enabled;
    payload["trained_mode"] = classifier_mode_tag(d.trained_mode);
    save_checkpoint(path, "discriminator", payload);
}

inline Discriminator load_discriminator_checkpoint(const std::string& path) {
    const Json payload = load_checkpoint(path, "discriminator");
    Discriminator d;
    try {
        d.net = mlp_from_json(payload.at("net"));
        d.goal_conditioned = payload.at("goal_conditioned").get<bool>();
        d.mixup_enabled = payload.at("mixup_enabled").get<bool>();
        d.trained_mode = classifier_mode_from_tag(payload.at("trained_mode").get<std::string>());
    } catch (const Json::exception& e) {
        throw FormatError(std::string("discriminator checkpoint: ") + e.what());
    }
    if (d.net.output_dim() != 1)
        throw FormatError("discriminator checkpoint: classifier must have scalar logit output");
    return d;
}

}  // namespace r2r
