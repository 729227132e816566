#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "boms/gridworld.hpp"
#include "boms/selection.hpp"

namespace boms {

struct ConfigKey {
    const char* key;
    const char* default_value;
    const char* doc;
};

/// Every recognized key with its default. Order here is the order of
/// config_resolved.txt. Any key may be overridden from the environment as
/// BOMS_<KEY> (upper case), which takes precedence over the file.
inline constexpr ConfigKey kConfigSchema[] = {
    {"env_file", "", "serialized TabularMdp (boms-mdp format); empty = gridworld below"},
    {"grid_rows", "6", "gridworld rows"},
    {"grid_cols", "6", "gridworld columns"},
    {"slip", "0.1", "probability that the executed move is uniform over the four moves"},
    {"goal_reward", "1", "reward per step in the absorbing goal cell (bottom-right)"},
    {"step_reward", "0", "reward everywhere else"},
    {"extra_rewards", "", "extra reward cells, 'row:col:reward' separated by ';'"},
    {"gamma", "0.95", "discount factor"},
    {"behavior", "epsilon-greedy", "epsilon-greedy | uniform | mixture"},
    {"behavior_epsilon", "0.3", "exploration rate of the behavior policy"},
    {"dataset_size", "2000", "offline transitions per dataset"},
    {"episode_horizon", "50", "episode length when collecting the dataset"},
    {"validation_fraction", "0.2", "trailing fraction of the dataset held out for validation"},
    {"n_candidates", "50", "candidate models N"},
    {"smoothing", "1", "Dirichlet pseudo-count per next state"},
    {"transition_temperature", "1", "posterior temperature; 0 = every candidate is the smoothed MLE"},
    {"transition_temperature_max", "-1", "if >= 0: temperatures spaced geometrically up to this value across candidates"},
    {"reward_noise", "0", "std of Gaussian noise added to each candidate's mean rewards"},
    {"reward_noise_max", "-1", "if >= 0: reward noise spaced linearly up to this value across candidates"},
    {"penalty_weight", "1", "lambda in r - lambda u"},
    {"uncertainty_scale", "-1", "c in u = c / sqrt(n + 1); negative = r_max"},
    {"resample_per_trial", "true", "draw a fresh dataset and candidate set for every trial"},
    {"selector", "boms", "boms | random-selection | validation | ope-fqe"},
    {"iterations", "20", "online iterations T"},
    {"trajectories_per_eval", "5", "rollouts per online evaluation"},
    {"eval_horizon", "200", "rollout length of an online evaluation"},
    {"evaluation", "monte-carlo", "monte-carlo | exact (noise-free limit)"},
    {"alpha", "1", "reward weight in the model distance"},
    {"rollout_length", "1", "rollout length of the model distance"},
    {"n_rollouts", "0", "Monte-Carlo rollouts per distance when rollout_length > 1; 0 = one per probe"},
    {"distance_norm", "l2", "l2 | l1 norm on state embeddings"},
    {"policy_source", "selected-model",
     "selected-model | model-based-fixed | model-free-empirical | exploratory-random | parameter-space"},
    {"fixed_policy_index", "0", "candidate whose policy drives model-based-fixed distances"},
    {"n_probe", "256", "probe states drawn from the training split"},
    {"lengthscale_mode", "median-heuristic", "median-heuristic | fixed | mle-grid"},
    {"fixed_lengthscale", "1", "lengthscale for lengthscale_mode = fixed"},
    {"noise_variance", "auto", "GP observation noise; auto = (0.05 * return range)^2"},
    {"center_observations", "true", "subtract the mean observed return before conditioning"},
    {"jitter_initial", "1e-8", "initial Cholesky jitter, relative to the signal variance"},
    {"jitter_max", "1e-2", "largest jitter tried before failing"},
    {"acquisition", "gp-ucb", "gp-ucb | random"},
    {"beta_schedule", "constant", "constant | log-growth"},
    {"beta", "4", "UCB beta for the constant schedule"},
    {"delta", "0.1", "confidence parameter of the log-growth schedule"},
    {"allow_reselect", "false", "let the acquisition pick already evaluated models"},
    {"n_trials", "20", "independent trials"},
    {"seed", "0", "master seed"},
    {"threads", "0", "worker threads for trials; 0 = hardware concurrency"},
};

/// Resolved key/value pairs: defaults, then file, then environment.
class ConfigStore {
public:
    ConfigStore() {
        for (const auto& k : kConfigSchema) values_[k.key] = k.default_value;
    }

    static bool known(std::string_view key) {
        return std::any_of(std::begin(kConfigSchema), std::end(kConfigSchema), [&](const ConfigKey& k) { return key == k.key; });
    }

    void set(const std::string& key, std::string value) {
        if (!known(key)) throw ConfigError("unknown config key '" + key + "'");
        values_[key] = std::move(value);
    }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
        return it->second;
    }

    /// `key = value` lines; `#` starts a comment; blank lines ignored.
    void merge_text(std::istream& is, const std::string& source) {
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const std::string body = trim(line);
            if (body.empty()) continue;
            const auto eq = body.find('=');
            if (eq == std::string::npos)
                throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
            const std::string key = trim(body.substr(0, eq));
            if (!known(key)) throw ConfigError(source + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
            values_[key] = trim(body.substr(eq + 1));
        }
    }

    void merge_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config file '" + path + "'");
        merge_text(in, path);
    }

    void merge_environment() {
        for (const auto& k : kConfigSchema) {
            std::string name = "BOMS_";
            for (const char* c = k.key; *c; ++c) name += static_cast<char>(std::toupper(static_cast<unsigned char>(*c)));
            if (const char* v = std::getenv(name.c_str())) values_[k.key] = trim(v);
        }
    }

    /// Every key in schema order, defaults included.
    void write_resolved(std::ostream& os) const {
        for (const auto& k : kConfigSchema) os << k.key << " = " << values_.at(k.key) << '\n';
    }

    std::string resolved_text() const {
        std::ostringstream os;
        write_resolved(os);
        return os.str();
    }

private:
    static std::string trim(std::string_view s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string_view::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return std::string(s.substr(b, e - b + 1));
    }

    std::map<std::string, std::string> values_;
};

inline ConfigStore load_config(const std::string& path) {
    ConfigStore store;
    store.merge_file(path);
    store.merge_environment();
    return store;
}

struct ExperimentConfig {
    std::string env_file;
    GridworldSpec grid;
    BehaviorKind behavior = BehaviorKind::epsilon_greedy;
    double behavior_epsilon = 0.3;
    std::size_t dataset_size = 2000;
    int episode_horizon = 50;
    double validation_fraction = 0.2;
    std::size_t n_candidates = 50;
    CandidateConfig candidates;
    bool resample_per_trial = true;
    SelectorConfig selector;
    DistanceConfig distance;
    int n_trials = 20;
    std::uint64_t seed = 0;
    int threads = 0;
};

namespace detail {

inline double config_double(const ConfigStore& s, const std::string& key) {
    try {
        return parse_double(s.get(key));
    } catch (const std::invalid_argument&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + s.get(key) + "'");
    }
}

template <class Int>
Int config_int(const ConfigStore& s, const std::string& key) {
    try {
        return parse_integer<Int>(s.get(key));
    } catch (const std::invalid_argument&) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + s.get(key) + "'");
    }
}

inline bool config_bool(const ConfigStore& s, const std::string& key) {
    const std::string& v = s.get(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

inline std::vector<RewardCell> parse_reward_cells(const std::string& text) {
    std::vector<RewardCell> cells;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        std::erase_if(item, [](unsigned char ch) { return std::isspace(ch) != 0; });
        if (item.empty()) continue;
        std::stringstream is(item);
        std::string r, c, v;
        if (!std::getline(is, r, ':') || !std::getline(is, c, ':') || !std::getline(is, v))
            throw ConfigError("extra_rewards: expected 'row:col:reward', got '" + item + "'");
        try {
            cells.push_back({parse_integer<int>(r), parse_integer<int>(c), parse_double(v)});
        } catch (const std::invalid_argument&) {
            throw ConfigError("extra_rewards: bad entry '" + item + "'");
        }
    }
    return cells;
}

}  // namespace detail

/// Typed view of a resolved store. Every numeric range is checked here.
inline ExperimentConfig parse_experiment_config(const ConfigStore& s) {
    using detail::config_bool;
    using detail::config_double;
    using detail::config_int;
    ExperimentConfig c;
    c.env_file = s.get("env_file");
    c.grid.rows = config_int<int>(s, "grid_rows");
    c.grid.cols = config_int<int>(s, "grid_cols");
    c.grid.slip = config_double(s, "slip");
    c.grid.goal_reward = config_double(s, "goal_reward");
    c.grid.step_reward = config_double(s, "step_reward");
    c.grid.extra_rewards = detail::parse_reward_cells(s.get("extra_rewards"));
    c.grid.gamma = config_double(s, "gamma");
    c.behavior = behavior_kind_from_string(s.get("behavior"));
    c.behavior_epsilon = config_double(s, "behavior_epsilon");
    c.dataset_size = config_int<std::size_t>(s, "dataset_size");
    c.episode_horizon = config_int<int>(s, "episode_horizon");
    c.validation_fraction = config_double(s, "validation_fraction");
    c.n_candidates = config_int<std::size_t>(s, "n_candidates");
    c.candidates.smoothing = config_double(s, "smoothing");
    c.candidates.transition_temperature = config_double(s, "transition_temperature");
    c.candidates.transition_temperature_max = config_double(s, "transition_temperature_max");
    c.candidates.reward_noise = config_double(s, "reward_noise");
    c.candidates.reward_noise_max = config_double(s, "reward_noise_max");
    c.candidates.penalty_weight = config_double(s, "penalty_weight");
    c.candidates.uncertainty_scale = config_double(s, "uncertainty_scale");
    c.resample_per_trial = config_bool(s, "resample_per_trial");

    auto& sel = c.selector;
    sel.kind = selector_kind_from_string(s.get("selector"));
    sel.iterations = config_int<int>(s, "iterations");
    sel.trajectories_per_eval = config_int<int>(s, "trajectories_per_eval");
    sel.horizon = config_int<int>(s, "eval_horizon");
    sel.evaluation = evaluation_mode_from_string(s.get("evaluation"));
    sel.gp.lengthscale_mode = lengthscale_mode_from_string(s.get("lengthscale_mode"));
    sel.gp.fixed_lengthscale = config_double(s, "fixed_lengthscale");
    if (s.get("noise_variance") != "auto") sel.gp.noise_variance = config_double(s, "noise_variance");
    sel.gp.center_observations = config_bool(s, "center_observations");
    sel.gp.jitter_initial = config_double(s, "jitter_initial");
    sel.gp.jitter_max = config_double(s, "jitter_max");
    sel.acquisition.kind = acquisition_kind_from_string(s.get("acquisition"));
    sel.acquisition.schedule = beta_schedule_from_string(s.get("beta_schedule"));
    sel.acquisition.beta = config_double(s, "beta");
    sel.acquisition.delta = config_double(s, "delta");
    sel.acquisition.allow_reselect = config_bool(s, "allow_reselect");

    auto& d = c.distance;
    d.alpha = config_double(s, "alpha");
    d.rollout_length = config_int<int>(s, "rollout_length");
    d.n_rollouts = config_int<int>(s, "n_rollouts");
    const std::string& norm = s.get("distance_norm");
    if (norm == "l2") d.norm = Norm::l2;
    else if (norm == "l1") d.norm = Norm::l1;
    else throw ConfigError("distance_norm must be l1 or l2, got '" + norm + "'");
    d.policy_source = policy_source_from_string(s.get("policy_source"));
    d.fixed_policy_index = config_int<std::size_t>(s, "fixed_policy_index");
    d.n_probe = config_int<std::size_t>(s, "n_probe");

    c.n_trials = config_int<int>(s, "n_trials");
    c.seed = config_int<std::uint64_t>(s, "seed");
    c.threads = config_int<int>(s, "threads");

    if (c.grid.rows < 1 || c.grid.cols < 1 || c.grid.rows * c.grid.cols < 2) throw ConfigError("grid needs at least two cells");
    if (!(c.grid.slip >= 0.0 && c.grid.slip <= 1.0)) throw ConfigError("slip must lie in [0, 1]");
    if (!(c.grid.gamma >= 0.0 && c.grid.gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
    if (!(c.behavior_epsilon >= 0.0 && c.behavior_epsilon <= 1.0)) throw ConfigError("behavior_epsilon must lie in [0, 1]");
    if (c.dataset_size < 2) throw ConfigError("dataset_size must be at least 2");
    if (c.episode_horizon < 1) throw ConfigError("episode_horizon must be at least 1");
    if (!(c.validation_fraction > 0.0 && c.validation_fraction < 1.0))
        throw ConfigError("validation_fraction must lie in (0, 1)");
    if (c.n_candidates < 1) throw ConfigError("n_candidates must be at least 1");
    if (c.n_trials < 1) throw ConfigError("n_trials must be at least 1");
    if (c.threads < 0) throw ConfigError("threads must be nonnegative");
    if (d.fixed_policy_index >= c.n_candidates) throw ConfigError("fixed_policy_index outside the candidate set");
    c.candidates.validate();
    d.validate();
    sel.validate(c.n_candidates);
    return c;
}

}  // namespace boms
