#pragma once

// Temporal utility learned from expert trajectories: pairs of frames from the
// same trajectory are ranked by time via a Bradley-Terry model, trained as
// binary cross-entropy on the utility difference. The sigmoid of the anchored
// utility is the progress likelihood used as the base reward term.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "r2r/checkpoint.hpp"
#include "r2r/common.hpp"
#include "r2r/demos.hpp"
#include "r2r/numkit.hpp"

namespace r2r {

struct RankingModel {
    MlpParams net;               // scalar-output utility network
    double anchor_offset = 0.0;  // mean raw utility over dataset initial states
    bool goal_conditioned = false;
};

struct PairBatch {
    Matrix first_states;
    Matrix second_states;
    std::vector<double> labels;  // 1 if first occurs later in its trajectory
    std::vector<std::size_t> traj_ids;
    std::vector<std::size_t> first_indices;
    std::vector<std::size_t> second_indices;
};

// Network input for one frame; goal-conditioned mode appends the trajectory's
// final state, treating it as the goal frame.
inline std::vector<double> ranking_input(const Trajectory& t, std::size_t idx,
                                         bool goal_conditioned) {
    std::vector<double> v = t.states[idx];
    if (goal_conditioned) {
        const auto& g = t.states.back();
        v.insert(v.end(), g.begin(), g.end());
    }
    return v;
}

namespace detail {

inline std::size_t dataset_state_dim(const ExpertDataset& ds) {
    if (ds.trajectories.empty()) throw ArgumentError("dataset is empty");
    const std::size_t dim = ds.trajectories.front().states.front().size();
    for (const auto& t : ds.trajectories) {
        if (t.states.size() < 2)
            throw ArgumentError("dataset contains a trajectory with fewer than 2 states");
        for (const auto& s : t.states)
            if (s.size() != dim) throw ShapeError("dataset state dimensions are inconsistent");
    }
    return dim;
}

}  // namespace detail

// Uniform trajectory, then an ordered pair of distinct indices uniform over
// all such pairs. Label 1 means the first member is the later frame.
inline PairBatch sample_pair_batch(const ExpertDataset& ds, std::size_t batch_size, Rng& rng,
                                   bool goal_conditioned = false) {
    const std::size_t dim = detail::dataset_state_dim(ds);
    if (batch_size < 1) throw ArgumentError("sample_pair_batch: batch_size must be >= 1");
    const std::size_t in_dim = goal_conditioned ? 2 * dim : dim;
    PairBatch b;
    b.first_states = Matrix(batch_size, in_dim);
    b.second_states = Matrix(batch_size, in_dim);
    b.labels.resize(batch_size);
    b.traj_ids.resize(batch_size);
    b.first_indices.resize(batch_size);
    b.second_indices.resize(batch_size);
    std::uniform_int_distribution<std::size_t> pick_traj(0, ds.trajectories.size() - 1);
    for (std::size_t r = 0; r < batch_size; ++r) {
        const std::size_t k = pick_traj(rng);
        const Trajectory& t = ds.trajectories[k];
        const std::size_t len = t.states.size();
        std::uniform_int_distribution<std::size_t> pick_i(0, len - 1);
        std::uniform_int_distribution<std::size_t> pick_j(0, len - 2);
        const std::size_t i = pick_i(rng);
        std::size_t j = pick_j(rng);
        if (j >= i) ++j;  // uniform over indices distinct from i
        b.traj_ids[r] = k;
        b.first_indices[r] = i;
        b.second_indices[r] = j;
        b.labels[r] = i > j ? 1.0 : 0.0;
        const auto vi = ranking_input(t, i, goal_conditioned);
        const auto vj = ranking_input(t, j, goal_conditioned);
        for (std::size_t c = 0; c < in_dim; ++c) {
            b.first_states(r, c) = vi[c];
            b.second_states(r, c) = vj[c];
        }
    }
    return b;
}

// Mean over pairs of -log sigma(u(later) - u(earlier)), i.e. binary
// cross-entropy on the utility difference with (possibly soft) labels.
// Gradients, when requested, are accumulated into *grads.
inline double ranking_loss(const RankingModel& m, const PairBatch& b, MlpGrads* grads = nullptr) {
    const std::size_t n = b.first_states.rows;
    if (b.second_states.rows != n || b.labels.size() != n)
        throw ShapeError("ranking_loss: batch members disagree on row count");
    if (n == 0) throw ArgumentError("ranking_loss: empty batch");
    ForwardCache c1, c2;
    const Matrix u1 = mlp_forward(m.net, b.first_states, grads ? &c1 : nullptr);
    const Matrix u2 = mlp_forward(m.net, b.second_states, grads ? &c2 : nullptr);
    Matrix d1(n, 1), d2(n, 1);
    double loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const double du = u1(r, 0) - u2(r, 0);
        if (!std::isfinite(du))
            throw NumericError("ranking_loss: non-finite utility at row " + std::to_string(r));
        const double y = b.labels[r];
        loss += -(y * stable_log_sigmoid(du) + (1.0 - y) * stable_log_sigmoid(-du));
        if (grads) {
            const double g = (sigmoid(du) - y) / static_cast<double>(n);
            d1(r, 0) = g;
            d2(r, 0) = -g;
        }
    }
    loss /= static_cast<double>(n);
    if (grads) {
        mlp_backward(m.net, c1, d1, *grads);
        mlp_backward(m.net, c2, d2, *grads);
    }
    return loss;
}

inline double raw_utility(const RankingModel& m, const std::vector<double>& input) {
    if (input.size() != m.net.input_dim())
        throw ShapeError("utility: input has " + std::to_string(input.size()) +
                         " entries, network expects " + std::to_string(m.net.input_dim()));
    Matrix x(1, input.size());
    for (std::size_t i = 0; i < input.size(); ++i) x(0, i) = input[i];
    return mlp_forward(m.net, x)(0, 0);
}

inline double utility(const RankingModel& m, const std::vector<double>& input) {
    return raw_utility(m, input) - m.anchor_offset;
}

inline std::vector<double> utility_batch(const RankingModel& m, const Matrix& inputs) {
    const Matrix out = mlp_forward(m.net, inputs);
    std::vector<double> u(inputs.rows);
    for (std::size_t r = 0; r < inputs.rows; ++r) u[r] = out(r, 0) - m.anchor_offset;
    return u;
}

inline double progress_likelihood(const RankingModel& m, const std::vector<double>& input) {
    return sigmoid(utility(m, input));
}

inline double log_progress_likelihood(const RankingModel& m, const std::vector<double>& input) {
    return stable_log_sigmoid(utility(m, input));
}

// Mean raw network output over the initial state of every trajectory; utility
// subtracts this so the start of the task sits at utility zero on average.
inline double compute_anchor_offset(const RankingModel& m, const ExpertDataset& ds) {
    if (ds.trajectories.empty()) throw ArgumentError("compute_anchor_offset: dataset is empty");
    double sum = 0.0;
    for (const auto& t : ds.trajectories)
        sum += raw_utility(m, ranking_input(t, 0, m.goal_conditioned));
    return sum / static_cast<double>(ds.trajectories.size());
}

struct RankingTrainConfig {
    std::vector<std::size_t> hidden_sizes{64, 64};
    std::size_t batch_size = 32;
    std::size_t steps = 5000;
    double learning_rate = 1e-4;
    bool spectral_norm = true;  // projected onto the last hidden layer each step
    bool mixup = true;
    bool goal_conditioned = false;
};

// Full-scale variant: only the network width changes; batch size, learning
// rate, and step count already match the published configuration.
inline RankingTrainConfig ranking_paper_scale_preset() {
    RankingTrainConfig c;
    c.hidden_sizes = {4096, 4096, 4096};
    return c;
}

inline RankingModel train_ranking(const ExpertDataset& ds, const RankingTrainConfig& cfg,
                                  std::uint64_t seed) {
    const std::size_t dim = detail::dataset_state_dim(ds);
    const std::size_t in_dim = cfg.goal_conditioned ? 2 * dim : dim;
    Rng rng = make_rng(seed, 0x8A21u);
    std::vector<std::size_t> layers{in_dim};
    layers.insert(layers.end(), cfg.hidden_sizes.begin(), cfg.hidden_sizes.end());
    layers.push_back(1);
    RankingModel m;
    m.goal_conditioned = cfg.goal_conditioned;
    m.net = make_mlp(layers, rng);
    if (!cfg.spectral_norm) m.net.spectral_norm_mask.assign(m.net.weights.size(), 0);
    auto sn = make_spectral_norm_states(m.net, rng);
    AdamState adam = make_adam(m.net, cfg.learning_rate);
    MlpGrads grads = zero_grads_like(m.net);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        PairBatch b = sample_pair_batch(ds, cfg.batch_size, rng, cfg.goal_conditioned);
        if (cfg.mixup) mixup_batch({&b.first_states, &b.second_states}, b.labels, rng);
        apply_spectral_norm(m.net, sn);
        clear_grads(grads);
        double loss = 0.0;
        try {
            loss = ranking_loss(m, b, &grads);
        } catch (const NumericError& e) {
            throw TrainingError("train_ranking: diverged at step " + std::to_string(step) +
                                ": " + e.what());
        }
        if (!std::isfinite(loss))
            throw TrainingError("train_ranking: non-finite loss at step " + std::to_string(step));
        adam_step(m.net, grads, adam);
    }
    apply_spectral_norm(m.net, sn);  // leave inference weights in the projected state
    m.anchor_offset = compute_anchor_offset(m, ds);
    return m;
}

// Kendall rank correlation between utility and time index over one trajectory,
// by exhaustive pair comparison; ties contribute zero.
inline double kendall_tau(const RankingModel& m, const Trajectory& t) {
    const std::size_t n = t.states.size();
    if (n < 2) throw ArgumentError("kendall_tau: trajectory needs at least two states");
    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i)
        u[i] = utility(m, ranking_input(t, i, m.goal_conditioned));
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (u[j] > u[i]) s += 1.0;
            else if (u[j] < u[i]) s -= 1.0;
        }
    return s / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

inline void save_ranking_checkpoint(const RankingModel& m, const std::string& path) {
    Json payload;
    payload["net"] = mlp_to_json(m.net);
    payload["anchor_offset"] = m.anchor_offset;
    payload["goal_conditioned"] = m.goal_conditioned;
    save_checkpoint(path, "ranking", payload);
}

inline RankingModel load_ranking_checkpoint(const std::string& path) {
    const Json payload = load_checkpoint(path, "ranking");
    RankingModel m;
    try {
        m.net = mlp_from_json(payload.at("net"));
        m.anchor_offset = payload.at("anchor_offset").get<double>();
        m.goal_conditioned = payload.at("goal_conditioned").get<bool>();
    } catch (const Json::exception& e) {
        throw FormatError(std::string("ranking checkpoint: ") + e.what());
    }
    if (m.net.output_dim() != 1)
        throw FormatError("ranking checkpoint: utility network must have scalar output");
    if (!std::isfinite(m.anchor_offset))
        throw FormatError("ranking checkpoint: anchor_offset is not finite");
    return m;
}

}  // namespace r2r
