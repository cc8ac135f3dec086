#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "r2r/demos.hpp"
#include "r2r/discrim.hpp"

using namespace r2r;

namespace {

// Two trajectories with disjoint supports; A ends at (0.3,0.1), B at (0.9,0.9).
ExpertDataset two_cluster_dataset() {
    ExpertDataset ds;
    ds.spec = make_env_spec(EnvKind::PointReach);
    Trajectory a, b;
    a.env_kind = b.env_kind = EnvKind::PointReach;
    a.states = {{0.1, 0.1}, {0.2, 0.1}, {0.3, 0.1}};
    b.states = {{0.7, 0.9}, {0.8, 0.9}, {0.9, 0.9}};
    ds.trajectories = {a, b};
    return ds;
}

ReplayBuffer constant_replay(std::size_t n, double x, double y) {
    ReplayBuffer buf(std::max<std::size_t>(n, 1), 2, 2);
    for (std::size_t i = 0; i < n; ++i) buf.push({{x, y}, {0.0, 0.0}, {x, y}, false});
    return buf;
}

Discriminator linear_disc(double w0, double w1, double b) {
    Rng rng = make_rng(0);
    Discriminator d;
    d.net = make_mlp({2, 1}, rng);
    d.net.weights[0].data[0] = w0;
    d.net.weights[0].data[1] = w1;
    d.net.biases[0][0] = b;
    return d;
}

// 4x4 lattice with expert/policy pmfs in exact 64ths; every cell has positive
// mass under both so the density ratio is finite everywhere.
struct DiscreteTask {
    std::vector<std::array<double, 2>> points;
    std::vector<int> expert_counts, policy_counts;  // out of 64
};

DiscreteTask make_discrete_task() {
    DiscreteTask t;
    const double coords[4] = {0.125, 0.375, 0.625, 0.875};
    for (int iy = 0; iy < 4; ++iy)
        for (int ix = 0; ix < 4; ++ix) t.points.push_back({coords[ix], coords[iy]});
    t.expert_counts = {8, 4, 2, 2, 4, 8, 4, 2, 2, 4, 8, 4, 2, 2, 4, 4};
    t.policy_counts = {4, 4, 2, 2, 2, 8, 4, 4, 2, 4, 8, 2, 4, 2, 4, 8};
    int se = 0, sp = 0;
    for (int i = 0; i < 16; ++i) {
        se += t.expert_counts[i];
        sp += t.policy_counts[i];
    }
    EXPECT_EQ(se, 64);
    EXPECT_EQ(sp, 64);
    return t;
}

}  // namespace

TEST(ClassifierBatch, BalancedConstruction) {
    ExpertDataset ds = two_cluster_dataset();
    ReplayBuffer buf = constant_replay(5, 0.5, 0.5);
    Rng rng = make_rng(1);
    auto batch = build_classifier_batch(ds, &buf, 2, ClassifierBatchMode::Standard, rng, false);
    ASSERT_TRUE(batch.has_value());
    ASSERT_EQ(batch->states.rows, 2u);
    EXPECT_DOUBLE_EQ(batch->labels[0], 1.0);
    EXPECT_DOUBLE_EQ(batch->labels[1], 0.0);
    EXPECT_DOUBLE_EQ(batch->states(1, 0), 0.5);  // policy row comes from replay

    auto big = build_classifier_batch(ds, &buf, 64, ClassifierBatchMode::Standard, rng, false);
    double label_sum = 0.0;
    for (double l : big->labels) label_sum += l;
    EXPECT_DOUBLE_EQ(label_sum, 32.0);  // exactly half expert before mixup
}

TEST(ClassifierBatch, OddBatchAndEmptySourcesRejected) {
    ExpertDataset ds = two_cluster_dataset();
    ReplayBuffer buf = constant_replay(3, 0.5, 0.5);
    Rng rng = make_rng(2);
    EXPECT_THROW(
        build_classifier_batch(ds, &buf, 3, ClassifierBatchMode::Standard, rng, false),
        ArgumentError);
    ExpertDataset empty;
    EXPECT_THROW(
        build_classifier_batch(empty, &buf, 2, ClassifierBatchMode::Standard, rng, false),
        ArgumentError);
}

TEST(ClassifierBatch, EmptyReplayDefers) {
    ExpertDataset ds = two_cluster_dataset();
    ReplayBuffer empty(8, 2, 2);
    Rng rng = make_rng(3);
    EXPECT_FALSE(
        build_classifier_batch(ds, &empty, 4, ClassifierBatchMode::Standard, rng, false)
            .has_value());
    EXPECT_FALSE(
        build_classifier_batch(ds, nullptr, 4, ClassifierBatchMode::Standard, rng, false)
            .has_value());
}

TEST(ClassifierBatch, MixupOffLabelsAreHard) {
    ExpertDataset ds = two_cluster_dataset();
    ReplayBuffer buf = constant_replay(4, 0.5, 0.5);
    Rng rng = make_rng(4);
    auto hard = build_classifier_batch(ds, &buf, 32, ClassifierBatchMode::Standard, rng, false);
    for (double l : hard->labels) EXPECT_TRUE(l == 0.0 || l == 1.0);
    auto soft = build_classifier_batch(ds, &buf, 32, ClassifierBatchMode::Standard, rng, true);
    bool fractional = false;
    for (double l : soft->labels) {
        EXPECT_GE(l, 0.0);
        EXPECT_LE(l, 1.0);
        if (l > 0.0 && l < 1.0) fractional = true;
    }
    EXPECT_TRUE(fractional);  // 32 rows with uniform lambdas: some mixed label
}

TEST(ClassifierBatch, GoalOnlyPositivesAreFinalStates) {
    ExpertDataset ds = two_cluster_dataset();
    ReplayBuffer buf = constant_replay(4, 0.5, 0.5);
    Rng rng = make_rng(5);
    auto batch = build_classifier_batch(ds, &buf, 64, ClassifierBatchMode::GoalOnly, rng, false);
    ASSERT_TRUE(batch.has_value());
    for (std::size_t r = 0; r < batch->states.rows; ++r) {
        if (batch->labels[r] != 1.0) continue;
        const double x = batch->states(r, 0), y = batch->states(r, 1);
        const bool is_a = (x == 0.3 && y == 0.1);
        const bool is_b = (x == 0.9 && y == 0.9);
        EXPECT_TRUE(is_a || is_b) << "positive row not a final state: " << x << "," << y;
    }
}

TEST(ClassifierBatch, CounterfactualPairsGoalsExhaustively) {
    ExpertDataset ds = two_cluster_dataset();
    Rng rng = make_rng(6);
    auto batch =
        build_classifier_batch(ds, nullptr, 128, ClassifierBatchMode::Counterfactual, rng, false);
    ASSERT_TRUE(batch.has_value());
    ASSERT_EQ(batch->states.cols, 4u);  // frame ++ goal
    for (std::size_t r = 0; r < batch->states.rows; ++r) {
        const bool frame_from_a = batch->states(r, 0) < 0.5;  // supports are disjoint
        const bool goal_is_a = batch->states(r, 2) == 0.3 && batch->states(r, 3) == 0.1;
        const bool goal_is_b = batch->states(r, 2) == 0.9 && batch->states(r, 3) == 0.9;
        ASSERT_TRUE(goal_is_a || goal_is_b);
        if (batch->labels[r] == 1.0)
            EXPECT_EQ(frame_from_a, goal_is_a);  // own goal
        else
            EXPECT_EQ(frame_from_a, goal_is_b);  // the other trajectory's goal
    }
    // Counterfactual mode needs at least two trajectories.
    ExpertDataset single;
    single.spec = ds.spec;
    single.trajectories = {ds.trajectories[0]};
    EXPECT_THROW(
        build_classifier_batch(single, nullptr, 8, ClassifierBatchMode::Counterfactual, rng, false),
        ArgumentError);
}

TEST(DiscriminatorLoss, ZeroNetGivesLn2) {
    Rng rng = make_rng(7);
    Discriminator d;
    d.net = make_mlp({2, 4, 1}, rng);
    for (auto& w : d.net.weights) std::fill(w.data.begin(), w.data.end(), 0.0);
    ClassifierBatch b;
    b.states = Matrix(6, 2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : b.states.data) v = u(rng);
    b.labels = {1, 0, 1, 0, 0.25, 0.75};
    EXPECT_NEAR(discriminator_loss(d, b), std::log(2.0), 1e-12);
}

TEST(DiscriminatorLoss, SaturatedSeparationNearZero) {
    Rng rng = make_rng(8);
    Discriminator d;
    d.net = make_mlp({1, 1}, rng);
    d.net.weights[0].data[0] = 20.0;
    d.net.biases[0][0] = 0.0;
    ClassifierBatch b;
    b.states = Matrix(4, 1);
    b.states(0, 0) = 1.0;
    b.states(1, 0) = -1.0;
    b.states(2, 0) = 1.0;
    b.states(3, 0) = -1.0;
    b.labels = {1, 0, 1, 0};
    EXPECT_LT(discriminator_loss(d, b), 1e-8);
}

TEST(DiscriminatorLoss, GradientMatchesFiniteDifferences) {
    Rng rng = make_rng(9);
    Discriminator d;
    d.net = make_mlp({2, 5, 1}, rng);
    ClassifierBatch b;
    b.states = Matrix(6, 2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : b.states.data) v = u(rng);
    b.labels = {1, 0, 0.5, 1, 0.2, 0};
    MlpGrads grads = zero_grads_like(d.net);
    discriminator_loss(d, b, &grads);
    MlpGrads fd = finite_diff_grad(
        [&](const MlpParams& p) {
            Discriminator probe = d;
            probe.net = p;
            return discriminator_loss(probe, b);
        },
        d.net, 1e-6);
    for (std::size_t l = 0; l < grads.weights.size(); ++l) {
        for (std::size_t i = 0; i < grads.weights[l].data.size(); ++i)
            EXPECT_LE(std::abs(grads.weights[l].data[i] - fd.weights[l].data[i]),
                      1e-4 * std::max(1.0, std::abs(fd.weights[l].data[i])));
        for (std::size_t i = 0; i < grads.biases[l].size(); ++i)
            EXPECT_LE(std::abs(grads.biases[l][i] - fd.biases[l][i]),
                      1e-4 * std::max(1.0, std::abs(fd.biases[l][i])));
    }
}

TEST(DiscriminatorLoss, NonFiniteLogitThrows) {
    Discriminator d = linear_disc(1.0, 0.0, 0.0);
    ClassifierBatch b;
    b.states = Matrix(1, 2);
    b.states(0, 0) = std::numeric_limits<double>::infinity();
    b.labels = {1.0};
    EXPECT_THROW(discriminator_loss(d, b), NumericError);
}

TEST(Classify, ValuesAndAntisymmetry) {
    Discriminator half = linear_disc(0.0, 0.0, 0.0);
    EXPECT_DOUBLE_EQ(classify(half, {0.3, 0.4}), 0.5);
    Discriminator nine = linear_disc(0.0, 0.0, std::log(9.0));
    EXPECT_NEAR(classify(nine, {0.3, 0.4}), 0.9, 1e-12);

    Rng rng = make_rng(10);
    Discriminator d;
    d.net = make_mlp({2, 8, 1}, rng);
    Discriminator neg = d;
    for (auto& w : neg.net.weights.back().data) w = -w;
    neg.net.biases.back()[0] = -neg.net.biases.back()[0];
    for (double x = 0.1; x < 1.0; x += 0.2)
        EXPECT_NEAR(classify(d, {x, 1.0 - x}) + classify(neg, {x, 1.0 - x}), 1.0, 1e-9);

    EXPECT_THROW(classify(d, {0.1}), ShapeError);
}

TEST(DensityRatio, ValuesBoundsMonotonicity) {
    EXPECT_DOUBLE_EQ(density_ratio(linear_disc(0, 0, 0), {0.5, 0.5}), 1.0);
    EXPECT_NEAR(density_ratio(linear_disc(0, 0, std::log(9.0)), {0.5, 0.5}), 9.0, 1e-9);
    const double hi = (1.0 - kProbEps) / kProbEps;
    EXPECT_DOUBLE_EQ(density_ratio(linear_disc(0, 0, 1000.0), {0.5, 0.5}), hi);
    EXPECT_DOUBLE_EQ(density_ratio(linear_disc(0, 0, -1000.0), {0.5, 0.5}), 1.0 / hi);
    double prev = 0.0;
    for (double b = -5.0; b <= 5.0; b += 0.5) {
        const double r = density_ratio(linear_disc(0, 0, b), {0.5, 0.5});
        EXPECT_GT(r, prev);
        prev = r;
    }
}

TEST(UpdateDiscriminator, IdenticalDistributionsPlateauAtLn2) {
    // Same pool on both sides: the optimum is D = 1/2 everywhere.
    ExpertDataset ds;
    ds.spec = make_env_spec(EnvKind::PointReach);
    Trajectory t;
    t.env_kind = EnvKind::PointReach;
    Rng fill = make_rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) t.states.push_back({u(fill), u(fill)});
    ds.trajectories.push_back(t);
    ReplayBuffer buf(200, 2, 2);
    for (const auto& s : t.states) buf.push({s, {0, 0}, s, false});

    DiscrimTrainConfig cfg;
    cfg.hidden_sizes = {32, 32};
    cfg.batch_size = 64;
    cfg.mixup = false;
    DiscriminatorTrainer tr = make_discriminator_trainer(2, cfg, 11);
    Rng rng = make_rng(12);
    double loss = 0.0;
    for (int i = 0; i < 300; ++i) loss = *update_discriminator(tr, ds, &buf, rng);
    EXPECT_NEAR(loss, std::log(2.0), 0.08);
}

TEST(UpdateDiscriminator, SeparatedClustersDriveLossToZero) {
    ExpertDataset ds;
    ds.spec = make_env_spec(EnvKind::PointReach);
    Trajectory t;
    t.env_kind = EnvKind::PointReach;
    Rng fill = make_rng(13);
    std::normal_distribution<double> n(0.0, 0.01);
    for (int i = 0; i < 100; ++i) t.states.push_back({0.8 + n(fill), 0.8 + n(fill)});
    ds.trajectories.push_back(t);
    ReplayBuffer buf(100, 2, 2);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> s{0.2 + n(fill), 0.2 + n(fill)};
        buf.push({s, {0, 0}, s, false});
    }
    DiscrimTrainConfig cfg;
    cfg.hidden_sizes = {32, 32};
    cfg.batch_size = 64;
    cfg.learning_rate = 1e-3;
    cfg.mixup = false;
    DiscriminatorTrainer tr = make_discriminator_trainer(2, cfg, 14);
    Rng rng = make_rng(14);
    double loss = 1.0;
    for (int i = 0; i < 600; ++i) loss = *update_discriminator(tr, ds, &buf, rng);
    EXPECT_LT(loss, 0.05);
    EXPECT_GT(classify(tr.disc, {0.8, 0.8}), 0.9);
    EXPECT_LT(classify(tr.disc, {0.2, 0.2}), 0.1);
}

TEST(UpdateDiscriminator, DefersOnEmptyReplayAndIsSeedDeterministic) {
    ExpertDataset ds = two_cluster_dataset();
    ReplayBuffer empty(8, 2, 2);
    DiscrimTrainConfig cfg;
    cfg.hidden_sizes = {8};
    cfg.batch_size = 4;
    DiscriminatorTrainer tr = make_discriminator_trainer(2, cfg, 15);
    Rng rng = make_rng(15);
    EXPECT_FALSE(update_discriminator(tr, ds, &empty, rng).has_value());
    EXPECT_EQ(tr.updates_done, 0u);

    ReplayBuffer buf = constant_replay(6, 0.5, 0.5);
    std::vector<double> seq_a, seq_b;
    {
        DiscriminatorTrainer a = make_discriminator_trainer(2, cfg, 16);
        Rng r = make_rng(17);
        for (int i = 0; i < 10; ++i) seq_a.push_back(*update_discriminator(a, ds, &buf, r));
    }
    {
        DiscriminatorTrainer b = make_discriminator_trainer(2, cfg, 16);
        Rng r = make_rng(17);
        for (int i = 0; i < 10; ++i) seq_b.push_back(*update_discriminator(b, ds, &buf, r));
    }
    EXPECT_EQ(seq_a, seq_b);
}

TEST(DensityRatio, DiscreteOracleTaskWithinTolerance) {
    DiscreteTask task = make_discrete_task();

    // Closed-form Bayes identity: D* = p_e/(p_e+p_pi) gives the ratio exactly.
    for (int i = 0; i < 16; ++i) {
        const double pe = task.expert_counts[i] / 64.0;
        const double pp = task.policy_counts[i] / 64.0;
        const double bayes = pe / (pe + pp);
        EXPECT_NEAR(bayes / (1.0 - bayes), pe / pp, 1e-12);
    }

    // Exact empirical sources: each pmf realized by integer multiplicities.
    const int reps = 50;  // 3200 samples per side
    ExpertDataset ds;
    ds.spec = make_env_spec(EnvKind::PointReach);
    Trajectory t;
    t.env_kind = EnvKind::PointReach;
    for (int i = 0; i < 16; ++i)
        for (int r = 0; r < task.expert_counts[i] * reps; ++r)
            t.states.push_back({task.points[i][0], task.points[i][1]});
    ds.trajectories.push_back(t);
    ReplayBuffer buf(64 * reps, 2, 2);
    for (int i = 0; i < 16; ++i)
        for (int r = 0; r < task.policy_counts[i] * reps; ++r) {
            std::vector<double> s{task.points[i][0], task.points[i][1]};
            buf.push({s, {0, 0}, s, false});
        }

    DiscrimTrainConfig cfg;
    cfg.hidden_sizes = {128, 128};
    cfg.batch_size = 128;
    cfg.learning_rate = 1e-3;
    cfg.mixup = false;           // exact-ratio target: no label smoothing
    cfg.spectral_norm = false;   // unconstrained fit to the discrete targets
    DiscriminatorTrainer tr = make_discriminator_trainer(2, cfg, 18);
    Rng rng = make_rng(18);
    // Annealed schedule: coarse fit, then shrink the Adam step to kill the
    // minibatch jitter around the Bayes optimum.
    for (int i = 0; i < 3000; ++i) update_discriminator(tr, ds, &buf, rng);
    tr.adam.learning_rate = 1e-4;
    for (int i = 0; i < 2000; ++i) update_discriminator(tr, ds, &buf, rng);
    tr.adam.learning_rate = 1e-5;
    for (int i = 0; i < 1000; ++i) update_discriminator(tr, ds, &buf, rng);

    double rel_err = 0.0, abs_err = 0.0;
    for (int i = 0; i < 16; ++i) {
        const double pe = task.expert_counts[i] / 64.0;
        const double pp = task.policy_counts[i] / 64.0;
        const std::vector<double> s{task.points[i][0], task.points[i][1]};
        rel_err += std::abs(density_ratio(tr.disc, s) - pe / pp) / (pe / pp);
        abs_err += std::abs(classify(tr.disc, s) - pe / (pe + pp));
    }
    rel_err /= 16.0;
    abs_err /= 16.0;
    EXPECT_LE(rel_err, 0.10) << "mean relative ratio error " << rel_err;
    EXPECT_LE(abs_err, 0.05) << "mean absolute posterior error " << abs_err;
}

TEST(DiscrimCheckpoint, RoundTripBitExact) {
    Rng rng = make_rng(19);
    Discriminator d;
    d.net = make_mlp({4, 16, 1}, rng);
    d.goal_conditioned = true;
    d.mixup_enabled = false;
    d.trained_mode = ClassifierBatchMode::GoalOnly;
    const auto path =
        (std::filesystem::temp_directory_path() / "r2r_disc_ckpt.json").string();
    save_discriminator_checkpoint(d, path);
    Discriminator back = load_discriminator_checkpoint(path);
    EXPECT_EQ(back.goal_conditioned, true);
    EXPECT_EQ(back.mixup_enabled, false);
    EXPECT_EQ(back.trained_mode, ClassifierBatchMode::GoalOnly);
    for (std::size_t l = 0; l < d.net.weights.size(); ++l) {
        EXPECT_EQ(back.net.weights[l].data, d.net.weights[l].data);
        EXPECT_EQ(back.net.biases[l], d.net.biases[l]);
    }
    std::filesystem::remove(path);
}
