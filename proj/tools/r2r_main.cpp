// Command-line front end: thin argument handling around the harness calls.
#include <CLI11.hpp>

#include <cstdio>
#include <string>

#include "r2r/config.hpp"
#include "r2r/harness.hpp"

namespace {

r2r::ExperimentConfig resolve_config(const std::string& config_path, long long seed,
                                     const std::string& out_dir) {
    r2r::ExperimentConfig cfg =
        config_path.empty() ? r2r::ExperimentConfig{} : r2r::load_config(config_path);
    if (seed >= 0) cfg.seed = std::uint64_t(seed);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    r2r::validate_experiment_config(cfg);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"shaped-reward imitation laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    long long seed = -1;
    std::size_t resolution = 101;
    std::size_t episodes = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config file (key: value lines)");
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--out", out_dir, "override the config output directory");
    };

    CLI::App* gen = app.add_subcommand("gen-demos", "roll out the scripted expert to a dataset");
    CLI::App* rank = app.add_subcommand("train-ranking", "train the utility ranker offline");
    CLI::App* train = app.add_subcommand("train", "joint discriminator/policy training");
    CLI::App* eval = app.add_subcommand("eval", "evaluate the checkpointed policy");
    CLI::App* grid = app.add_subcommand("reward-grid", "export the reward lattice CSV");
    for (CLI::App* sub : {gen, rank, train, eval, grid}) add_common(sub);
    eval->add_option("--episodes", episodes, "episode count (default: config eval_episodes)");
    grid->add_option("--resolution", resolution, "lattice resolution per axis");

    CLI11_PARSE(app, argc, argv);

    try {
        const r2r::ExperimentConfig cfg = resolve_config(config_path, seed, out_dir);
        if (gen->parsed()) {
            const r2r::DemoSummary s = r2r::cmd_gen_demos(cfg);
            std::printf("{\"trajectories\":%zu,\"mean_length\":%.9g,\"success_rate\":%.9g,"
                        "\"dataset\":\"%s\"}\n",
                        s.trajectory_count, s.mean_length, s.success_rate,
                        r2r::resolved_dataset_path(cfg).c_str());
        } else if (rank->parsed()) {
            const r2r::RankingReport r = r2r::cmd_train_ranking(cfg);
            std::printf("{\"held_out_tau\":%.9g,\"train_trajectories\":%zu,"
                        "\"eval_trajectories\":%zu,\"checkpoint\":\"%s/ranking.ckpt\"}\n",
                        r.held_out_tau, r.train_count, r.eval_count, cfg.out_dir.c_str());
        } else if (train->parsed()) {
            const r2r::TrainResult r = r2r::cmd_train(cfg);
            const double final_success =
                r.curve.empty() ? 0.0 : r.curve.back().eval_success_rate;
            std::printf("{\"env_steps\":%zu,\"disc_updates\":%zu,\"curve_rows\":%zu,"
                        "\"final_success_rate\":%.9g,\"early_stopped\":%s,\"out\":\"%s\"}\n",
                        r.env_steps, r.disc_updates, r.curve.size(), final_success,
                        r.early_stopped ? "true" : "false", cfg.out_dir.c_str());
        } else if (eval->parsed()) {
            const r2r::EvalMetrics m = r2r::cmd_eval(cfg, episodes);
            std::printf("{\"success_rate\":%.9g,\"mean_true_return\":%.9g,"
                        "\"mean_episode_length\":%.9g,\"mean_learned_reward\":%.9g}\n",
                        m.success_rate, m.mean_true_return, m.mean_episode_length,
                        m.mean_learned_reward);
        } else if (grid->parsed()) {
            const std::string path = r2r::cmd_reward_grid(cfg, resolution);
            std::printf("{\"grid\":\"%s\",\"resolution\":%zu}\n", path.c_str(), resolution);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
