#include <dyrep/config.hpp>

#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace dyrep;
using nlohmann::json;

TEST(Config, DefaultsWhenEmpty)
{
    const auto c = config_from_json(json::object());
    EXPECT_EQ(c.train.batch_size, 200);
    EXPECT_EQ(c.train.survival_samples, 5);
    EXPECT_EQ(c.train.learning_rate, 0.01);
    EXPECT_EQ(c.train.patience, 3);
    ASSERT_TRUE(c.train.clip_norm.has_value());
    EXPECT_EQ(*c.train.clip_norm, 5.0);
    EXPECT_EQ(c.data.slots, 6);
    EXPECT_EQ(c.eval.filter, RankFilter::test_seen);
    EXPECT_FALSE(c.generator.has_value());
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, UnknownKeysRejected)
{
    EXPECT_THROW(config_from_json(json{{"trian", json::object()}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"train", {{"learning_rte", 0.1}}}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"generator", {{"mu", 1.0}}}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"train", 3}}), ConfigError);
}

TEST(Config, BadValues)
{
    EXPECT_THROW(config_from_json(json{{"train", {{"epochs", "many"}}}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"eval", {{"filter", "nope"}}}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"train", {{"batch_size", 0}}}}).validate(), ConfigError);
    EXPECT_THROW(config_from_json(json{{"data", {{"train_fraction", 1.0}}}}).validate(), ConfigError);
    EXPECT_THROW(config_from_json(json{{"data", {{"format", "xml"}}}}).validate(), ConfigError);
    EXPECT_THROW(config_from_json(json{{"generator", {{"decay", -1.0}}}}).validate(), ConfigError);
    EXPECT_THROW(config_from_json(json{{"generator", {{"base_rates", {{0.0, 1.0}, {1.0}}}}}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"benchmark", {{"sizes", json::array()}}}}).validate(), ConfigError);
}

TEST(Config, RoundTrip)
{
    const json in = {
        {"threads", 2},
        {"model", {{"dim", 12}, {"time_scale", 24.0}, {"log_gap", true}}},
        {"train",
         {{"batch_size", 50},
          {"survival_samples", 7},
          {"learning_rate", 0.002},
          {"epochs", 4},
          {"seed", 99},
          {"clip_norm", nullptr},
          {"patience", 0},
          {"attention_gradients", true}}},
        {"data", {{"events", "e.csv"}, {"train_fraction", 0.6}, {"slots", 4}, {"validation_fraction", 0.1}}},
        {"eval", {{"filter", "none"}, {"both_directions", true}, {"time_samples", 10}, {"seed", 3}}},
        {"generator", {{"n", 3}, {"base_rates", {{0.0, 1.0, 0.5}, {1.0, 0.0, 0.2}, {0.5, 0.2, 0.0}}}, {"decay", 2.0}}},
        {"benchmark", {{"sizes", {100, 200}}, {"n_nodes", 5}, {"seed", 1}}},
    };
    const auto c = config_from_json(in);
    EXPECT_EQ(c.train.dim, 12);
    EXPECT_FALSE(c.train.clip_norm.has_value());
    EXPECT_TRUE(c.train.attention_gradients);
    EXPECT_TRUE(c.train.model.log_gap);
    EXPECT_EQ(c.eval.filter, RankFilter::none);
    ASSERT_TRUE(c.generator && c.generator->base_rates);
    EXPECT_EQ((*c.generator->base_rates)(1, 2), 0.2);
    EXPECT_EQ(c.benchmark->sizes, (std::vector<std::size_t>{100, 200}));
    EXPECT_NO_THROW(c.validate());

    const auto out = to_json(c);
    EXPECT_EQ(to_json(config_from_json(out)), out);
}

TEST(Config, LoadFile)
{
    dyrep::test::TempDir dir("config");
    dyrep::test::write_text(dir / "c.json", R"({"train": {"epochs": 2}})");
    EXPECT_EQ(load_config(dir / "c.json").train.epochs, 2);
    dyrep::test::write_text(dir / "broken.json", "{ not json");
    EXPECT_THROW(load_config(dir / "broken.json"), ConfigError);
    EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
}

TEST(Config, GeneratorResolve)
{
    GeneratorSettings s;
    s.n = 8;
    s.groups = 2;
    s.activity_skew = 1.0;
    const auto g = s.resolve();
    EXPECT_EQ(g.base_rates.rows(), 8);
    EXPECT_GT(g.base_rates(0, 1), g.base_rates(6, 7));
}

TEST(FileHash, KnownValues)
{
    dyrep::test::TempDir dir("hash");
    dyrep::test::write_text(dir / "empty", "");
    dyrep::test::write_text(dir / "a", "a");
    EXPECT_EQ(file_hash(dir / "empty"), "cbf29ce484222325");
    EXPECT_EQ(file_hash(dir / "a"), "af63dc4c8601ec8c");
    EXPECT_THROW(file_hash(dir / "none"), DataError);
}

TEST(Manifest, WrittenOnceCompletionSeparate)
{
    dyrep::test::TempDir dir("manifest");
    RunManifest m;
    m.command = "train";
    m.config = to_json(RunConfig{});
    m.seed = 5;
    m.version = version_string();
    m.dataset_hash = "0123456789abcdef";
    m.started = utc_timestamp();
    write_manifest(m, dir.path());
    const auto before = dyrep::test::read_text(dir / "manifest.json");
    const auto parsed = json::parse(before);
    EXPECT_EQ(parsed.at("seed"), 5);
    EXPECT_EQ(parsed.at("dataset_hash"), "0123456789abcdef");
    EXPECT_EQ(parsed.at("config"), m.config);

    write_completion(dir.path(), "ok");
    EXPECT_EQ(dyrep::test::read_text(dir / "manifest.json"), before);
    EXPECT_EQ(json::parse(dyrep::test::read_text(dir / "manifest.done.json")).at("status"), "ok");
    EXPECT_EQ(m.started.size(), std::string("2026-01-01T00:00:00Z").size());
}
