#include <dyrep/cli.hpp>
#include <dyrep/config.hpp>
#include <dyrep/evaluator.hpp>

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace dyrep;
using nlohmann::json;
using dyrep::test::read_text;
using dyrep::test::write_text;

namespace {

struct CliRun {
    int code = 0;
    std::string out;
    std::string err;
};

CliRun run(std::vector<std::string> args)
{
    args.insert(args.begin(), "dyrep");
    std::ostringstream out, err;
    CliRun r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::size_t line_count(const std::string& text)
{
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override
    {
        events = (dir / "events.csv").string();
        adjacency = (dir / "adj.csv").string();
        const auto r = run({"generate", "--nodes", "8", "--groups", "2", "--mu-in", "0.8", "--mu-out", "0.1",
                            "--excitation", "0.2", "--assoc-rate", "0.2", "--initial-edge-prob", "0.2", "--horizon",
                            "40", "--seed", "3", "--out", events, "--adjacency-out", adjacency, "--truth-out",
                            (dir / "truth.csv").string()});
        ASSERT_EQ(r.code, 0) << r.err;
        const auto summary = json::parse(r.out);
        ASSERT_GT(summary.at("events").get<int>(), 100);
    }

    std::vector<std::string> data_args() const { return {"--events", events, "--adjacency", adjacency}; }

    CliRun train_model(const std::string& out, std::vector<std::string> extra = {})
    {
        std::vector<std::string> args{"train", "--out", out, "--dim", "4", "--batch-size", "50", "--patience", "0"};
        for (const auto& a : data_args()) args.push_back(a);
        for (auto& a : extra) args.push_back(std::move(a));
        return run(args);
    }

    dyrep::test::TempDir dir{"cli"};
    std::string events, adjacency;
};

} // namespace

TEST(Cli, NeedsSubcommand)
{
    EXPECT_NE(run({}).code, 0);
    EXPECT_NE(run({"frobnicate"}).code, 0);
    EXPECT_EQ(run({"--version"}).code, 0);
}

TEST_F(CliTest, GenerateWritesArtifacts)
{
    EXPECT_TRUE(std::filesystem::exists(events));
    EXPECT_TRUE(std::filesystem::exists(adjacency));
    EXPECT_EQ(read_text(dir / "truth.csv").substr(0, 17), "u,v,mu,alpha,beta");
    const auto log = load_events(events, EventFormat::csv);
    EXPECT_EQ(log.n_nodes, 8);
}

TEST_F(CliTest, ZeroEpochCheckpointEqualsInit)
{
    const auto out = (dir / "zero").string();
    const auto r = train_model(out, {"--epochs", "0", "--seed", "12"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto params = load_params(std::filesystem::path(out) / "params.json");
    EXPECT_TRUE(bitwise_equal(params, ModelParams::init(params.n0(), 4, 12)));
    EXPECT_EQ(read_text(std::filesystem::path(out) / "training_curve.csv"), "epoch,event_nll,survival,total,seconds\n");
    EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(out) / "manifest.json"));
}

TEST_F(CliTest, MissingFileFails)
{
    const auto r = run({"train", "--out", (dir / "x").string(), "--events", (dir / "nope.csv").string()});
    EXPECT_EQ(r.code, exit_data);
    EXPECT_NE(r.err.find("nope.csv"), std::string::npos) << r.err;
    const auto bad = train_model((dir / "y").string(), {"--config", (dir / "absent.json").string()});
    EXPECT_EQ(bad.code, exit_config);
}

TEST_F(CliTest, BadConfigIsConfigError)
{
    write_text(dir / "bad.json", R"({"train": {"epoch": 3}})");
    const auto r = train_model((dir / "bad").string(), {"--config", (dir / "bad.json").string()});
    EXPECT_EQ(r.code, exit_config);
    EXPECT_NE(r.err.find("epoch"), std::string::npos);
    EXPECT_EQ(train_model((dir / "bad2").string(), {"--lr", "-1"}).code, exit_config);
}

TEST_F(CliTest, FullRunArtifactsParse)
{
    const auto out = std::filesystem::path(dir / "full");
    const auto r = train_model(out.string(), {"--epochs", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(json::parse(r.out).at("epochs"), 2);
    for (const auto* name : {"checkpoint.json", "params.json", "training_curve.csv", "manifest.json",
                             "manifest.done.json"})
        EXPECT_TRUE(std::filesystem::exists(out / name)) << name;
    EXPECT_TRUE(bitwise_equal(load_params(out / "checkpoint.json"), load_params(out / "params.json")));
    EXPECT_EQ(line_count(read_text(out / "training_curve.csv")), 3u);
    const auto manifest = json::parse(read_text(out / "manifest.json"));
    EXPECT_EQ(manifest.at("dataset_hash"), file_hash(events));
    EXPECT_EQ(manifest.at("config").at("train").at("epochs"), 2);
    EXPECT_EQ(json::parse(read_text(out / "manifest.done.json")).at("status"), "ok");
}

TEST_F(CliTest, FlagOverridesFileOverridesDefault)
{
    write_text(dir / "c.json", R"({"train": {"epochs": 3, "learning_rate": 0.005}})");
    const auto cfg = (dir / "c.json").string();
    const auto a = dir / "a";
    ASSERT_EQ(train_model(a.string(), {"--config", cfg, "--epochs", "1"}).code, 0);
    const auto ma = json::parse(read_text(a / "manifest.json")).at("config").at("train");
    EXPECT_EQ(ma.at("epochs"), 1);
    EXPECT_EQ(ma.at("learning_rate"), 0.005);
    EXPECT_EQ(ma.at("survival_samples"), 5);
    EXPECT_EQ(line_count(read_text(a / "training_curve.csv")), 2u);
}

TEST_F(CliTest, DeterministicBytes)
{
    const auto a = dir / "da", b = dir / "db";
    ASSERT_EQ(train_model(a.string(), {"--epochs", "2", "--seed", "4"}).code, 0);
    ASSERT_EQ(train_model(b.string(), {"--epochs", "2", "--seed", "4"}).code, 0);
    EXPECT_EQ(read_text(a / "params.json"), read_text(b / "params.json"));
    EXPECT_EQ(read_text(a / "checkpoint.json"), read_text(b / "checkpoint.json"));

    std::vector<std::string> eval{"evaluate", "--checkpoint", (a / "params.json").string(), "--filter", "none"};
    for (const auto& x : data_args()) eval.push_back(x);
    const auto ea = run(eval);
    eval[2] = (b / "params.json").string();
    const auto eb = run(eval);
    ASSERT_EQ(ea.code, 0) << ea.err;
    EXPECT_EQ(ea.out, eb.out);

    // with the default filter some slot of this small graph has every truth filtered out
    eval.erase(eval.begin() + 3, eval.begin() + 5);
    const auto filtered = run(eval);
    EXPECT_EQ(filtered.code, exit_data);
    EXPECT_NE(filtered.err.find("no event could be ranked"), std::string::npos);
}

TEST_F(CliTest, EvaluateMetricsRoundTrip)
{
    const auto model = dir / "m";
    ASSERT_EQ(train_model(model.string(), {"--epochs", "1"}).code, 0);
    std::vector<std::string> eval{"evaluate", "--checkpoint", (model / "params.json").string(), "--slots", "3"};
    for (const auto& x : data_args()) eval.push_back(x);
    const auto to_stdout = run(eval);
    ASSERT_EQ(to_stdout.code, 0) << to_stdout.err;
    eval.push_back("--out");
    eval.push_back((dir / "metrics.csv").string());
    ASSERT_EQ(run(eval).code, 0);
    const auto text = read_text(dir / "metrics.csv");
    EXPECT_EQ(text, to_stdout.out);
    const auto rows = parse_metrics(text);
    EXPECT_EQ(format_metrics(rows), text);
    std::size_t mar_slots = 0;
    for (const auto& r : rows) mar_slots += r.metric == "mar" && r.k == EventType::communication && r.slot >= 0;
    EXPECT_EQ(mar_slots, 3u);
}

TEST_F(CliTest, EvaluatePerfectFixture)
{
    std::string csv;
    for (int v = 1; v <= 4; ++v) csv += "0," + std::to_string(v) + "," + std::to_string(v) + ",1\n";
    for (int i = 0; i < 12; ++i) csv += "0,1," + std::to_string(5 + i) + ",1\n";
    write_text(dir / "star.csv", csv);
    save_params(ModelParams::zeros(5, 3), dir / "zeros.json");
    const auto r = run({"evaluate", "--checkpoint", (dir / "zeros.json").string(), "--events",
                        (dir / "star.csv").string(), "--train-fraction", "0.25", "--slots", "2", "--filter", "none"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("\nall,1,mar,1,"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("\nall,1,hits_at_10,1,"), std::string::npos) << r.out;
}

TEST_F(CliTest, EvaluateDimensionMismatch)
{
    save_params(ModelParams::zeros(8, 3), dir / "d3.json");
    std::vector<std::string> eval{"evaluate", "--checkpoint", (dir / "d3.json").string(), "--dim", "5"};
    for (const auto& x : data_args()) eval.push_back(x);
    const auto r = run(eval);
    EXPECT_EQ(r.code, exit_config);
    EXPECT_NE(r.err.find("d=3"), std::string::npos) << r.err;

    std::vector<std::string> missing{"evaluate", "--checkpoint", (dir / "none.json").string()};
    for (const auto& x : data_args()) missing.push_back(x);
    EXPECT_EQ(run(missing).code, exit_data);
}

TEST_F(CliTest, PredictQueries)
{
    const auto model = dir / "p";
    ASSERT_EQ(train_model(model.string(), {"--epochs", "1"}).code, 0);
    std::vector<std::string> link{"predict", "link", "--checkpoint", (model / "params.json").string(),
                                  "--anchor",  "2",    "--time",       "45"};
    for (const auto& x : data_args()) link.push_back(x);
    const auto l = run(link);
    ASSERT_EQ(l.code, 0) << l.err;
    const auto lj = json::parse(l.out);
    const auto& cands = lj.at("candidates");
    EXPECT_EQ(cands.size(), 7u);
    for (std::size_t i = 1; i < cands.size(); ++i) {
        EXPECT_EQ(cands[i].at("rank"), i + 1);
        EXPECT_GE(cands[i - 1].at("score").get<double>(), cands[i].at("score").get<double>());
    }

    std::vector<std::string> when{"predict", "time", "--checkpoint", (model / "params.json").string(),
                                  "--u",     "1",    "--v",          "5", "--samples", "200", "--seed", "3"};
    for (const auto& x : data_args()) when.push_back(x);
    const auto t = run(when);
    ASSERT_EQ(t.code, 0) << t.err;
    const auto tj = json::parse(t.out);
    EXPECT_GT(tj.at("expected").get<double>(), tj.at("t_bar").get<double>());
    EXPECT_EQ(run(when).out, t.out);

    link.push_back("--type");
    link.push_back("3");
    EXPECT_EQ(run(link).code, exit_config);
}

TEST_F(CliTest, BenchmarkTable)
{
    const auto none = run({"benchmark", "--sizes", "200", "400"});
    EXPECT_EQ(none.code, exit_config);
    EXPECT_NE(none.err.find("benchmark"), std::string::npos);

    const auto r = run({"benchmark", "--nodes", "10", "--sizes", "200", "400", "--dim", "4", "--batch-size", "50"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "events,batch_size,samples,seconds,seconds_per_batch,survival_seconds");
    EXPECT_EQ(line_count(r.out), 3u);
    EXPECT_NE(r.err.find("slope"), std::string::npos);
}

TEST_F(CliTest, ExportEmbeddings)
{
    const auto model = dir / "e";
    ASSERT_EQ(train_model(model.string(), {"--epochs", "1"}).code, 0);
    const auto params_path = (model / "params.json").string();
    std::vector<std::string> exp{"export-embeddings", "--checkpoint", params_path};
    for (const auto& x : data_args()) exp.push_back(x);
    const auto a = run(exp);
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(line_count(a.out), 9u);
    const auto first_row = a.out.substr(a.out.find('\n') + 1);
    EXPECT_EQ(std::count(first_row.begin(), first_row.begin() + static_cast<long>(first_row.find('\n')), ','), 5);
    EXPECT_EQ(run(exp).out, a.out);

    // nothing replayed: the exported rows are the initial embeddings
    exp.push_back("--until");
    exp.push_back("-1");
    const auto untrained = run(exp);
    ASSERT_EQ(untrained.code, 0);
    const auto params = load_params(params_path);
    std::istringstream lines(untrained.out);
    std::string line;
    std::getline(lines, line);
    EXPECT_EQ(line, "node_id,z_1,z_2,z_3,z_4,last_event_time");
    const auto log = load_events(events, EventFormat::csv);
    for (NodeId v = 0; v < params.n0(); ++v) {
        ASSERT_TRUE(std::getline(lines, line));
        std::istringstream cells(line);
        std::string cell;
        std::getline(cells, cell, ',');
        EXPECT_EQ(cell, log.label(v));
        for (int j = 0; j < 4; ++j) {
            std::getline(cells, cell, ',');
            EXPECT_EQ(std::stod(cell), params.V(v, j));
        }
    }
}
