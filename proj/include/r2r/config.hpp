#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "r2r/agent.hpp"
#include "r2r/checkpoint.hpp"
#include "r2r/demos.hpp"
#include "r2r/discrim.hpp"
#include "r2r/ranking.hpp"
#include "r2r/reward.hpp"

namespace r2r {

// One experiment, one flat key:value file. Sub-configs reuse the module
// structs so their defaults stay defined in exactly one place.
struct ExperimentConfig {
    EnvKind env = EnvKind::TwoWallMaze;
    double max_step_norm = 0.05;
    std::size_t horizon = 200;
    double goal_radius = 0.05;
    double expert_noise_std = 0.005;

    std::size_t n_demos = 20;
    std::string dataset;  // empty: <out_dir>/demos.jsonl
    std::size_t keep_every = 1;

    RewardKind reward_kind = RewardKind::Rank2Reward;
    double alpha = 1.0;
    double clamp_epsilon = kProbEps;
    bool gail_raw_probability = false;

    RankingTrainConfig ranking;
    DiscrimTrainConfig disc;
    std::size_t reward_update_frequency = 1;

    SacConfig agent;

    std::size_t total_steps = 50000;
    std::size_t eval_every = 2000;
    std::size_t eval_episodes = 10;
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    bool wall_clock = false;        // true: real seconds in curve rows (breaks rerun identity)
    double early_stop_success = 0;  // >0: stop once an eval row reaches this success rate
};

namespace detail {

[[noreturn]] inline void bad_value(const std::string& key, const std::string& value,
                                   const std::string& want) {
    throw ConfigError("config: key '" + key + "' expects " + want + ", got '" + value + "'");
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double_value(const std::string& key, const std::string& v) {
    double out = 0.0;
    const char* last = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), last, out);
    if (ec != std::errc() || ptr != last) bad_value(key, v, "a number");
    return out;
}

inline std::uint64_t parse_count_value(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const char* last = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), last, out);
    if (ec != std::errc() || ptr != last) bad_value(key, v, "a non-negative integer");
    return out;
}

inline bool parse_bool_value(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    bad_value(key, v, "true or false");
}

inline std::vector<std::size_t> parse_sizes_value(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    if (trim(v).empty()) return out;
    while (pos <= v.size()) {
        const std::size_t comma = v.find(',', pos);
        const std::string item = trim(v.substr(pos, comma - pos));
        out.push_back(std::size_t(parse_count_value(key, item)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

inline std::string format_double(double x) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, ptr);
}

inline std::string format_sizes(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

struct ConfigKey {
    const char* name;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

// The one place the schema exists: parsing, serialization, and the README
// table are all generated from this list.
inline const std::vector<ConfigKey>& config_schema() {
    using C = ExperimentConfig;
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        auto add_double = [&k](const char* name, auto ref) {
            k.push_back({name,
                         [name, ref](C& c, const std::string& v) {
                             ref(c) = parse_double_value(name, v);
                         },
                         [ref](const C& c) { return format_double(ref(const_cast<C&>(c))); }});
        };
        auto add_count = [&k](const char* name, auto ref) {
            k.push_back({name,
                         [name, ref](C& c, const std::string& v) {
                             ref(c) = std::size_t(parse_count_value(name, v));
                         },
                         [ref](const C& c) {
                             return std::to_string(std::uint64_t(ref(const_cast<C&>(c))));
                         }});
        };
        auto add_bool = [&k](const char* name, auto ref) {
            k.push_back({name,
                         [name, ref](C& c, const std::string& v) {
                             ref(c) = parse_bool_value(name, v);
                         },
                         [ref](const C& c) {
                             return ref(const_cast<C&>(c)) ? std::string("true")
                                                           : std::string("false");
                         }});
        };
        auto add_sizes = [&k](const char* name, auto ref) {
            k.push_back({name,
                         [name, ref](C& c, const std::string& v) {
                             ref(c) = parse_sizes_value(name, v);
                         },
                         [ref](const C& c) { return format_sizes(ref(const_cast<C&>(c))); }});
        };
        auto add_string = [&k](const char* name, auto ref) {
            k.push_back({name, [ref](C& c, const std::string& v) { ref(c) = v; },
                         [ref](const C& c) { return ref(const_cast<C&>(c)); }});
        };
        // Tagged enums: *_from_tag throws FormatError; rewrap naming the key.
        auto add_tagged = [&k](const char* name, auto set_fn, auto get_fn) {
            k.push_back({name,
                         [name, set_fn](C& c, const std::string& v) {
                             try {
                                 set_fn(c, v);
                             } catch (const std::exception&) {
                                 bad_value(name, v, "a known tag");
                             }
                         },
                         get_fn});
        };

        add_tagged(
            "env", [](C& c, const std::string& v) { c.env = env_kind_from_tag(v); },
            [](const C& c) { return env_tag(c.env); });
        add_double("max_step_norm", [](C& c) -> double& { return c.max_step_norm; });
        add_count("horizon", [](C& c) -> std::size_t& { return c.horizon; });
        add_double("goal_radius", [](C& c) -> double& { return c.goal_radius; });
        add_double("expert_noise_std", [](C& c) -> double& { return c.expert_noise_std; });
        add_count("n_demos", [](C& c) -> std::size_t& { return c.n_demos; });
        add_string("dataset", [](C& c) -> std::string& { return c.dataset; });
        add_count("keep_every", [](C& c) -> std::size_t& { return c.keep_every; });
        add_tagged(
            "reward_kind",
            [](C& c, const std::string& v) { c.reward_kind = reward_kind_from_tag(v); },
            [](const C& c) { return reward_kind_tag(c.reward_kind); });
        add_double("alpha", [](C& c) -> double& { return c.alpha; });
        add_double("clamp_epsilon", [](C& c) -> double& { return c.clamp_epsilon; });
        add_bool("gail_raw_probability", [](C& c) -> bool& { return c.gail_raw_probability; });
        add_sizes("ranking_hidden",
                  [](C& c) -> std::vector<std::size_t>& { return c.ranking.hidden_sizes; });
        add_count("ranking_batch", [](C& c) -> std::size_t& { return c.ranking.batch_size; });
        add_count("ranking_steps", [](C& c) -> std::size_t& { return c.ranking.steps; });
        add_double("ranking_lr", [](C& c) -> double& { return c.ranking.learning_rate; });
        add_bool("ranking_spectral_norm", [](C& c) -> bool& { return c.ranking.spectral_norm; });
        add_bool("ranking_mixup", [](C& c) -> bool& { return c.ranking.mixup; });
        add_bool("ranking_goal_conditioned",
                 [](C& c) -> bool& { return c.ranking.goal_conditioned; });
        add_sizes("disc_hidden",
                  [](C& c) -> std::vector<std::size_t>& { return c.disc.hidden_sizes; });
        add_count("disc_batch", [](C& c) -> std::size_t& { return c.disc.batch_size; });
        add_double("disc_lr", [](C& c) -> double& { return c.disc.learning_rate; });
        add_tagged(
            "disc_mode",
            [](C& c, const std::string& v) { c.disc.mode = classifier_mode_from_tag(v); },
            [](const C& c) { return classifier_mode_tag(c.disc.mode); });
        add_bool("disc_mixup", [](C& c) -> bool& { return c.disc.mixup; });
        add_bool("disc_spectral_norm", [](C& c) -> bool& { return c.disc.spectral_norm; });
        add_count("disc_steps_per_update",
                  [](C& c) -> std::size_t& { return c.disc.steps_per_update; });
        add_count("reward_update_frequency",
                  [](C& c) -> std::size_t& { return c.reward_update_frequency; });
        add_double("discount", [](C& c) -> double& { return c.agent.discount; });
        add_double("tau", [](C& c) -> double& { return c.agent.tau; });
        add_count("n_critics", [](C& c) -> std::size_t& { return c.agent.n_critics; });
        add_double("actor_lr", [](C& c) -> double& { return c.agent.actor_lr; });
        add_double("critic_lr", [](C& c) -> double& { return c.agent.critic_lr; });
        add_double("temp_lr", [](C& c) -> double& { return c.agent.temp_lr; });
        add_count("utd_ratio", [](C& c) -> std::size_t& { return c.agent.utd_ratio; });
        add_count("batch_size", [](C& c) -> std::size_t& { return c.agent.batch_size; });
        add_count("explore_steps", [](C& c) -> std::size_t& { return c.agent.explore_steps; });
        add_sizes("actor_hidden",
                  [](C& c) -> std::vector<std::size_t>& { return c.agent.actor_hidden; });
        add_sizes("critic_hidden",
                  [](C& c) -> std::vector<std::size_t>& { return c.agent.critic_hidden; });
        add_double("init_temperature", [](C& c) -> double& { return c.agent.init_temperature; });
        add_count("total_steps", [](C& c) -> std::size_t& { return c.total_steps; });
        add_count("eval_every", [](C& c) -> std::size_t& { return c.eval_every; });
        add_count("eval_episodes", [](C& c) -> std::size_t& { return c.eval_episodes; });
        k.push_back({"seed",
                     [](C& c, const std::string& v) {
                         c.seed = parse_count_value("seed", v);
                     },
                     [](const C& c) { return std::to_string(c.seed); }});
        add_string("out_dir", [](C& c) -> std::string& { return c.out_dir; });
        add_bool("wall_clock", [](C& c) -> bool& { return c.wall_clock; });
        add_double("early_stop_success", [](C& c) -> double& { return c.early_stop_success; });
        return k;
    }();
    return keys;
}

}  // namespace detail

inline void validate_experiment_config(const ExperimentConfig& c) {
    if (!(c.alpha >= 0.0)) throw ConfigError("config: alpha must be >= 0");
    if (!(c.clamp_epsilon > 0.0 && c.clamp_epsilon < 0.5))
        throw ConfigError("config: clamp_epsilon must lie in (0, 0.5)");
    if (!(c.max_step_norm > 0.0)) throw ConfigError("config: max_step_norm must be positive");
    if (c.horizon < 1) throw ConfigError("config: horizon must be >= 1");
    if (!(c.goal_radius > 0.0)) throw ConfigError("config: goal_radius must be positive");
    if (!(c.expert_noise_std >= 0.0))
        throw ConfigError("config: expert_noise_std must be >= 0");
    if (c.keep_every < 1) throw ConfigError("config: keep_every must be >= 1");
    if (c.reward_update_frequency < 1)
        throw ConfigError("config: reward_update_frequency must be >= 1");
    if (c.disc.steps_per_update < 1)
        throw ConfigError("config: disc_steps_per_update must be >= 1");
    if (c.eval_every < 1) throw ConfigError("config: eval_every must be >= 1");
    if (c.total_steps < c.agent.explore_steps)
        throw ConfigError("config: total_steps must cover explore_steps");
    if (!(c.early_stop_success >= 0.0 && c.early_stop_success <= 1.0))
        throw ConfigError("config: early_stop_success must lie in [0, 1]");
    validate_sac_config(c.agent);
}

inline ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::size_t pos = 0, line_no = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        const std::string raw =
            nl == std::string::npos ? text.substr(pos) : text.substr(pos, nl - pos);
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const std::string line = detail::trim(raw);
        if (line.empty() || line[0] == '#') continue;
        const std::size_t colon = line.find(':');
        if (colon == std::string::npos)
            throw ConfigError("config: line " + std::to_string(line_no) +
                              " is not 'key: value': '" + line + "'");
        const std::string key = detail::trim(line.substr(0, colon));
        const std::string value = detail::trim(line.substr(colon + 1));
        bool found = false;
        for (const auto& k : detail::config_schema()) {
            if (key == k.name) {
                k.set(cfg, value);
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("config: unknown key '" + key + "'");
    }
    validate_experiment_config(cfg);
    return cfg;
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& k : detail::config_schema()) {
        const std::string v = k.get(cfg);
        out += k.name;
        out += v.empty() ? ":" : ": " + v;
        out += "\n";
    }
    return out;
}

inline ExperimentConfig load_config(const std::string& path) {
    return parse_config(read_text_file(path));
}

inline EnvSpec env_spec_from(const ExperimentConfig& cfg) {
    EnvSpec spec = make_env_spec(cfg.env);
    spec.max_step_norm = cfg.max_step_norm;
    spec.horizon = cfg.horizon;
    spec.goal_radius = cfg.goal_radius;
    spec.expert_noise_std = cfg.expert_noise_std;
    return spec;
}

inline std::string resolved_dataset_path(const ExperimentConfig& cfg) {
    return cfg.dataset.empty() ? cfg.out_dir + "/demos.jsonl" : cfg.dataset;
}

}  // namespace r2r
