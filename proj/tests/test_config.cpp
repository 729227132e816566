#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "boms/config.hpp"

using namespace boms;

namespace {

ConfigStore from_text(const std::string& text) {
    ConfigStore s;
    std::istringstream is(text);
    s.merge_text(is, "test.cfg");
    return s;
}

}  // namespace

TEST(Config, DefaultsParse) {
    const ExperimentConfig c = parse_experiment_config(ConfigStore{});
    EXPECT_EQ(c.grid.rows, 6);
    EXPECT_EQ(c.n_candidates, 50u);
    EXPECT_EQ(c.selector.kind, SelectorKind::boms);
    EXPECT_EQ(c.selector.iterations, 20);
    EXPECT_EQ(c.selector.acquisition.beta, 4.0);
    EXPECT_FALSE(c.selector.gp.noise_variance.has_value());
    EXPECT_EQ(c.distance.policy_source, PolicySource::selected_model);
    EXPECT_EQ(c.candidates.uncertainty_scale, -1.0);
    EXPECT_TRUE(c.resample_per_trial);
}

TEST(Config, TextOverridesAndComments) {
    const ConfigStore s = from_text(
        "# comment\n\n  seed = 17   # trailing\nselector=random-selection\nnoise_variance = 0.25\n"
        "extra_rewards = 0:3:0.5; 2:2:-0.25\ndistance_norm = l1\n");
    const ExperimentConfig c = parse_experiment_config(s);
    EXPECT_EQ(c.seed, 17u);
    EXPECT_EQ(c.selector.kind, SelectorKind::random_selection);
    EXPECT_EQ(c.selector.gp.noise_variance.value(), 0.25);
    ASSERT_EQ(c.grid.extra_rewards.size(), 2u);
    EXPECT_EQ(c.grid.extra_rewards[1].row, 2);
    EXPECT_EQ(c.grid.extra_rewards[1].reward, -0.25);
    EXPECT_EQ(c.distance.norm, Norm::l1);
}

TEST(Config, UnknownKeyReportsLocation) {
    try {
        from_text("seed = 1\nbogus_key = 3\n");
        FAIL() << "expected a ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("test.cfg:2"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("bogus_key"), std::string::npos);
    }
    EXPECT_THROW(from_text("just words\n"), ConfigError);
    ConfigStore s;
    EXPECT_THROW(s.set("nope", "1"), ConfigError);
    EXPECT_THROW(s.get("nope"), ConfigError);
}

TEST(Config, RangeAndTypeErrors) {
    for (const char* text : {"n_candidates = 0", "validation_fraction = 1", "gamma = 1", "slip = -0.1",
                             "selector = oracle", "iterations = 2.5", "seed = -1", "center_observations = maybe",
                             "distance_norm = linf", "grid_rows = 1\ngrid_cols = 1", "extra_rewards = 1:2",
                             "behavior_epsilon = 2", "alpha = -1", "beta = x", "n_trials = 0",
                             "iterations = 60", "rollout_length = 0", "dataset_size = 0"}) {
        EXPECT_THROW(parse_experiment_config(from_text(text)), ConfigError) << text;
    }
}

TEST(Config, EnvironmentOverridesFile) {
    ::setenv("BOMS_SEED", "99", 1);
    ::setenv("BOMS_POLICY_SOURCE", "parameter-space", 1);
    ConfigStore s = from_text("seed = 5\n");
    s.merge_environment();
    ::unsetenv("BOMS_SEED");
    ::unsetenv("BOMS_POLICY_SOURCE");
    const ExperimentConfig c = parse_experiment_config(s);
    EXPECT_EQ(c.seed, 99u);
    EXPECT_EQ(c.distance.policy_source, PolicySource::parameter_space);
}

TEST(Config, ResolvedTextRoundTrips) {
    const ConfigStore s = from_text("seed = 3\nalpha = 0.5\n");
    const std::string text = s.resolved_text();
    EXPECT_NE(text.find("seed = 3\n"), std::string::npos);
    EXPECT_NE(text.find("alpha = 0.5\n"), std::string::npos);
    const ConfigStore back = from_text(text);
    EXPECT_EQ(back.resolved_text(), text);
    std::size_t lines = 0;
    for (char ch : text) lines += ch == '\n';
    EXPECT_EQ(lines, std::size(kConfigSchema));
}

TEST(Config, MissingFile) { EXPECT_THROW(load_config("/nonexistent/boms.cfg"), ConfigError); }
