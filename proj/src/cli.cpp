#include <dyrep/cli.hpp>
#include <dyrep/config.hpp>
#include <dyrep/embedding_model.hpp>
#include <dyrep/evaluator.hpp>
#include <dyrep/parallel.hpp>
#include <dyrep/predictor.hpp>
#include <dyrep/synthetic.hpp>
#include <dyrep/trainer.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace dyrep {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Flag values; unset flags leave the file/default value alone.
struct Overrides {
    std::string config;
    std::optional<std::string> events, adjacency, format;
    std::optional<double> train_fraction, validation_fraction;
    std::optional<int> slots;
    std::optional<int> epochs, batch_size, samples, dim, patience, threads;
    std::optional<double> learning_rate, clip_norm, time_scale;
    std::optional<std::uint64_t> seed;
    bool no_clip = false;
    bool log_gap = false;
    bool attention_gradients = false;
    std::optional<std::string> filter;
    bool both_directions = false;
    std::optional<int> time_samples;
};

struct Settings {
    RunConfig config;
    json raw = json::object();
};

void add_data_flags(CLI::App* cmd, Overrides& o)
{
    cmd->add_option("--config", o.config, "JSON run configuration");
    cmd->add_option("--events", o.events, "event file (.csv or .jsonl)");
    cmd->add_option("--adjacency", o.adjacency, "initial association edge list");
    cmd->add_option("--format", o.format, "csv or jsonl (default: from extension)");
    cmd->add_option("--threads", o.threads, "worker cap, 0 = all cores");
}

void add_split_flags(CLI::App* cmd, Overrides& o)
{
    cmd->add_option("--train-fraction", o.train_fraction, "fraction of events used for training");
    cmd->add_option("--slots", o.slots, "number of test slots");
}

void add_train_flags(CLI::App* cmd, Overrides& o)
{
    cmd->add_option("--epochs", o.epochs);
    cmd->add_option("--batch-size", o.batch_size);
    cmd->add_option("--samples", o.samples, "survival samples per event");
    cmd->add_option("--lr", o.learning_rate, "learning rate");
    cmd->add_option("--clip-norm", o.clip_norm);
    cmd->add_flag("--no-clip", o.no_clip, "disable gradient clipping");
    cmd->add_option("--seed", o.seed);
    cmd->add_option("--dim", o.dim, "embedding dimension");
    cmd->add_option("--patience", o.patience, "early-stopping patience (0 disables)");
    cmd->add_option("--validation-fraction", o.validation_fraction, "tail of the train window held out");
    cmd->add_option("--time-scale", o.time_scale, "hours per unit of the elapsed-time input");
    cmd->add_flag("--log-gap", o.log_gap, "feed log(1 + gap) to the update");
    cmd->add_flag("--attention-gradients", o.attention_gradients, "differentiate through the S updates");
}

void add_eval_flags(CLI::App* cmd, Overrides& o)
{
    cmd->add_option("--filter", o.filter, "none, test_seen or all_seen");
    cmd->add_flag("--both-directions", o.both_directions, "average ranks with u and v replaced");
    cmd->add_option("--time-samples", o.time_samples, "Monte Carlo samples for time prediction (0 = closed form)");
}

Settings resolve(const Overrides& o)
{
    Settings s;
    if (!o.config.empty()) {
        std::ifstream in(o.config);
        if (!in) throw ConfigError("cannot read config " + o.config);
        try {
            in >> s.raw;
        } catch (const json::exception& e) {
            throw ConfigError("config " + o.config + ": " + e.what());
        }
        s.config = config_from_json(s.raw);
    }
    auto& c = s.config;
    if (o.events) c.data.events = *o.events;
    if (o.adjacency) c.data.adjacency = *o.adjacency;
    if (o.format) c.data.format = *o.format;
    if (o.train_fraction) c.data.train_fraction = *o.train_fraction;
    if (o.validation_fraction) c.data.validation_fraction = *o.validation_fraction;
    if (o.slots) c.data.slots = *o.slots;
    if (o.epochs) c.train.epochs = *o.epochs;
    if (o.batch_size) c.train.batch_size = *o.batch_size;
    if (o.samples) c.train.survival_samples = *o.samples;
    if (o.learning_rate) c.train.learning_rate = *o.learning_rate;
    if (o.clip_norm) c.train.clip_norm = *o.clip_norm;
    if (o.no_clip) c.train.clip_norm.reset();
    if (o.seed) c.train.seed = *o.seed;
    if (o.dim) c.train.dim = *o.dim;
    if (o.patience) c.train.patience = *o.patience;
    if (o.time_scale) c.train.model.time_scale = *o.time_scale;
    if (o.log_gap) c.train.model.log_gap = true;
    if (o.attention_gradients) c.train.attention_gradients = true;
    if (o.threads) c.threads = *o.threads;
    if (o.filter) c.eval.filter = rank_filter_from_string(*o.filter);
    if (o.both_directions) c.eval.both_directions = true;
    if (o.time_samples) c.eval.time_samples = *o.time_samples;
    c.validate();
    return s;
}

bool dim_given(const Settings& s, const Overrides& o)
{
    return o.dim.has_value() || (s.raw.contains("model") && s.raw["model"].contains("dim"));
}

struct Dataset {
    std::shared_ptr<NodeDictionary> dict;
    EventLog log;
    Adjacency a0;
};

Dataset load_dataset(const DataConfig& d, std::ostream& err)
{
    if (d.events.empty()) throw ConfigError("no event file given (--events or data.events)");
    if (!fs::exists(d.events)) throw DataError("event file not found: " + d.events);
    const auto format = d.format.empty() ? format_from_path(d.events)
                                         : (d.format == "jsonl" ? EventFormat::jsonl : EventFormat::csv);
    Dataset out;
    out.dict = std::make_shared<NodeDictionary>();
    auto log = load_events(d.events, format, out.dict);
    if (!d.adjacency.empty()) {
        if (!fs::exists(d.adjacency)) throw DataError("adjacency file not found: " + d.adjacency);
        out.a0 = load_adjacency(d.adjacency, *out.dict);
    }
    check_association_replay(log, out.a0);
    std::size_t mismatches = 0;
    const bool given = log.link_status_given;
    out.log = derive_link_status(log, out.a0, &mismatches);
    if (given && mismatches > 0)
        err << "warning: " << mismatches << " events carry a link status that disagrees with the replay; "
            << "using the replayed status\n";
    out.log.n_nodes = std::max(out.log.n_nodes, out.dict->size());
    out.log.dictionary = out.dict;
    out.a0.n = std::max(out.a0.n, out.dict->size());
    return out;
}

EventLog slice(const EventLog& log, std::size_t begin, std::size_t end)
{
    EventLog out;
    out.events.assign(log.events.begin() + static_cast<std::ptrdiff_t>(begin),
                      log.events.begin() + static_cast<std::ptrdiff_t>(end));
    out.n_nodes = log.n_nodes;
    out.dictionary = log.dictionary;
    out.link_status_given = log.link_status_given;
    out.horizon = {out.events.empty() ? log.horizon.first : out.events.front().t,
                   out.events.empty() ? log.horizon.second : out.events.back().t};
    return out;
}

NodeId lookup(const NodeDictionary& dict, const std::string& label)
{
    const auto id = dict.find(label);
    if (!id) throw DataError("unknown node '" + label + "'");
    return *id;
}

ModelParams load_checkpoint(const std::string& path)
{
    if (path.empty()) throw ConfigError("--checkpoint is required");
    if (!fs::exists(path)) throw DataError("checkpoint not found: " + path);
    return load_params(path);
}

/// Replays every event strictly before `until` (all events when unset).
void replay_until(ReplayContext& ctx, const EventLog& log, std::optional<double> until)
{
    for (const auto& e : log.events) {
        if (until && !(e.t < *until)) break;
        ctx.advance(e);
    }
}

int cmd_train(const Overrides& o, const std::string& out_dir, std::ostream& out, std::ostream& err)
{
    const auto s = resolve(o);
    const auto& c = s.config;
    auto data = load_dataset(c.data, err);
    const auto split = split_slots(data.log, c.data.train_fraction, c.data.slots);

    EventLog train_log = split.train;
    std::optional<EventLog> validation;
    if (c.data.validation_fraction > 0.0) {
        const auto n = train_log.size();
        const auto keep = static_cast<std::size_t>(std::ceil((1.0 - c.data.validation_fraction) * n));
        if (keep == 0 || keep >= n) throw ConfigError("validation_fraction leaves an empty train or validation part");
        validation = slice(train_log, keep, n);
        train_log = slice(train_log, 0, keep);
        train_log.horizon.first = split.train.horizon.first;
    }

    fs::create_directories(out_dir);
    RunManifest manifest;
    manifest.command = "train";
    manifest.config = to_json(c);
    manifest.seed = c.train.seed;
    manifest.version = version_string();
    manifest.dataset_hash = file_hash(c.data.events);
    manifest.started = utc_timestamp();
    write_manifest(manifest, out_dir);

    const NodeId n0 = node_extent(train_log, data.a0);
    const auto checkpoint = fs::path(out_dir) / "checkpoint.json";
    std::vector<LossReport> curve;
    const auto on_epoch = [&](const LossReport& r, const ModelParams& p) {
        save_params(p, checkpoint);
        curve.push_back(r);
        write_training_curve(curve, fs::path(out_dir) / "training_curve.csv");
        err << "epoch " << r.epoch << ": total " << r.total << " (nll " << r.event_nll << ", survival "
            << r.survival << "), " << r.seconds << " s";
        if (r.underflow_events) err << ", " << r.underflow_events << " intensity underflows";
        err << '\n';
    };

    TrainResult result;
    try {
        result = train(TrainData{train_log, data.a0, n0, validation ? &*validation : nullptr}, c.train,
                       std::nullopt, on_epoch);
    } catch (const DivergenceError& e) {
        save_params(e.last_good(), fs::path(out_dir) / "last_good.json");
        write_completion(out_dir, "diverged");
        throw;
    }
    if (curve.empty()) write_training_curve(curve, fs::path(out_dir) / "training_curve.csv");
    save_params(result.params, fs::path(out_dir) / "params.json");
    write_completion(out_dir, "ok");
    out << json{{"params", (fs::path(out_dir) / "params.json").string()},
                {"epochs", result.epochs.size()},
                {"best_epoch", result.best_epoch},
                {"stopped_early", result.stopped_early}}
               .dump()
        << '\n';
    return exit_ok;
}

int cmd_evaluate(const Overrides& o, const std::string& checkpoint, const std::string& out_path, std::ostream& out,
                 std::ostream& err)
{
    const auto s = resolve(o);
    const auto& c = s.config;
    const auto params = load_checkpoint(checkpoint);
    if (dim_given(s, o) && params.dim() != c.train.dim)
        throw ConfigError("checkpoint has d=" + std::to_string(params.dim()) + " but the configuration asks for d=" +
                          std::to_string(c.train.dim));
    const auto data = load_dataset(c.data, err);
    const auto split = split_slots(data.log, c.data.train_fraction, c.data.slots);
    for (const auto slot : split.empty_slots) err << "warning: test slot " << slot << " has no events\n";

    auto eval = c.eval;
    eval.threads = resolve_threads(c.threads);
    const auto result = evaluate_all(params, data.a0, split, eval);
    const auto rows = metric_rows(result.metrics);
    if (out_path.empty())
        out << format_metrics(rows);
    else
        report(std::span<const MetricRow>(rows), out_path);

    bool failed = false;
    for (const auto& m : result.metrics)
        if (m.failed()) {
            failed = true;
            err << "slot " << (m.slot == kOverallSlot ? std::string("all") : std::to_string(m.slot)) << ", k="
                << to_index(m.k) << ": no event could be ranked\n";
        }
    return failed ? exit_data : exit_ok;
}

struct PredictArgs {
    std::string checkpoint;
    std::string anchor, u, v;
    std::optional<double> time;
    int type = 1;
    int top = 0;
    int samples = 10000;
    std::uint64_t seed = 0;
};

EventType parse_type(int k)
{
    if (k != 0 && k != 1) throw ConfigError("--type must be 0 (association) or 1 (communication)");
    return event_type_from_index(k);
}

int cmd_predict_link(const Overrides& o, const PredictArgs& a, std::ostream& out, std::ostream& err)
{
    const auto s = resolve(o);
    const auto params = load_checkpoint(a.checkpoint);
    const auto data = load_dataset(s.config.data, err);
    const auto k = parse_type(a.type);
    if (!a.time) throw ConfigError("--time is required");
    const NodeId anchor = lookup(*data.dict, a.anchor);

    ReplayContext ctx(params, data.a0, data.log.horizon.first);
    replay_until(ctx, data.log, a.time);
    ctx.ensure_node(anchor);
    if (*a.time < last_touch(ctx, anchor, anchor)) throw ConfigError("--time precedes the anchor's last event");
    const auto pool = ctx.seen_nodes();
    auto scores =
        score_candidates(ctx, anchor, *a.time, k, RankSide::replace_v, pool, resolve_threads(s.config.threads));
    sort_by_score(scores);
    json list = json::array();
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (a.top > 0 && i >= static_cast<std::size_t>(a.top)) break;
        list.push_back({{"node", data.dict->label(scores[i].first)}, {"score", scores[i].second}, {"rank", i + 1}});
    }
    out << json{{"anchor", a.anchor}, {"time", *a.time}, {"type", a.type}, {"candidates", std::move(list)}}.dump(2)
        << '\n';
    return exit_ok;
}

int cmd_predict_time(const Overrides& o, const PredictArgs& a, std::ostream& out, std::ostream& err)
{
    const auto s = resolve(o);
    const auto params = load_checkpoint(a.checkpoint);
    const auto data = load_dataset(s.config.data, err);
    const auto k = parse_type(a.type);
    const NodeId u = lookup(*data.dict, a.u);
    const NodeId v = lookup(*data.dict, a.v);
    if (u == v) throw ConfigError("--u and --v must differ");

    ReplayContext ctx(params, data.a0, data.log.horizon.first);
    replay_until(ctx, data.log, a.time);
    ctx.ensure_node(std::max(u, v));
    const auto pred = predict_time(ctx, u, v, k, a.samples, a.seed);
    out << json{{"u", a.u},
                {"v", a.v},
                {"type", a.type},
                {"t_bar", pred.t_bar},
                {"expected", pred.expected},
                {"estimate", pred.estimate},
                {"std_error", pred.std_error},
                {"samples", pred.samples}}
               .dump(2)
        << '\n';
    return exit_ok;
}

struct GenerateArgs {
    std::optional<NodeId> n;
    std::optional<int> groups;
    std::optional<double> mu_in, mu_out, activity_skew, excitation, decay, assoc_rate, assoc_boost, horizon, initial_edge_prob;
    std::optional<std::uint64_t> seed;
    std::string out, adjacency_out, truth_out;
};

int cmd_generate(const Overrides& o, const GenerateArgs& a, std::ostream& out, std::ostream& err)
{
    auto s = resolve(o);
    auto g = s.config.generator.value_or(GeneratorSettings{});
    if (a.n) g.n = *a.n;
    if (a.groups) g.groups = *a.groups;
    if (a.mu_in) g.mu_in = *a.mu_in;
    if (a.mu_out) g.mu_out = *a.mu_out;
    if (a.activity_skew) g.activity_skew = *a.activity_skew;
    if (a.excitation) g.excitation = *a.excitation;
    if (a.decay) g.decay = *a.decay;
    if (a.assoc_rate) g.assoc_rate = *a.assoc_rate;
    if (a.assoc_boost) g.assoc_boost = *a.assoc_boost;
    if (a.horizon) g.horizon = *a.horizon;
    if (a.initial_edge_prob) g.initial_edge_prob = *a.initial_edge_prob;
    if (a.seed) g.seed = *a.seed;
    if (a.n && g.base_rates && g.base_rates->rows() != *a.n) g.base_rates.reset();
    const auto gc = g.resolve();

    const auto data = generate(gc);
    if (data.log.empty()) err << "warning: the horizon is too short for any event; the log is empty\n";
    write_events(data.log, a.out, format_from_path(a.out));
    if (!a.adjacency_out.empty()) write_adjacency(data.a0, nullptr, a.adjacency_out);
    if (!a.truth_out.empty()) write_truth(gc, a.truth_out);
    const auto check = planted_structure_check(data.log, gc);
    out << json{{"events", data.log.size()},
                {"nodes", gc.n},
                {"initial_edges", data.a0.edges.size()},
                {"high_pair_mean", check.high_mean},
                {"low_pair_mean", check.low_mean},
                {"planted_ok", check.ok}}
               .dump()
        << '\n';
    return exit_ok;
}

struct BenchmarkArgs {
    std::vector<std::size_t> sizes;
    std::optional<NodeId> nodes;
    std::string out;
};

int cmd_benchmark(const Overrides& o, const BenchmarkArgs& a, std::ostream& out, std::ostream& err)
{
    const auto s = resolve(o);
    if (!s.config.benchmark && !a.nodes)
        throw ConfigError("benchmark needs a generator setup: a 'benchmark' config section or --nodes");
    auto b = s.config.benchmark.value_or(BenchmarkSettings{});
    if (!a.sizes.empty()) b.sizes = a.sizes;
    if (a.nodes) b.n_nodes = *a.nodes;
    if (b.n_nodes < 3) throw ConfigError("benchmark needs at least three nodes");

    const auto rows = step_complexity_probe(s.config.train, b.sizes, ProbeSetup{b.n_nodes, b.seed});
    std::ostringstream table;
    table << "events,batch_size,samples,seconds,seconds_per_batch,survival_seconds\n";
    for (const auto& r : rows)
        table << r.events << ',' << r.batch_size << ',' << r.samples << ',' << r.seconds << ','
              << r.seconds_per_batch << ',' << r.survival_seconds << '\n';
    if (a.out.empty()) {
        out << table.str();
    } else {
        std::ofstream f(a.out, std::ios::binary);
        if (!f) throw DataError("cannot write " + a.out);
        f << table.str();
    }
    if (rows.size() >= 2) {
        const auto fit = fit_loglog(rows);
        err << "log-log slope " << fit.slope << ", R^2 " << fit.r_squared << '\n';
    }
    return exit_ok;
}

int cmd_export(const Overrides& o, const std::string& checkpoint, std::optional<double> until,
               const std::string& out_path, std::ostream& out, std::ostream& err)
{
    const auto s = resolve(o);
    const auto params = load_checkpoint(checkpoint);
    const auto data = load_dataset(s.config.data, err);
    ReplayContext ctx(params, data.a0, data.log.horizon.first);
    replay_until(ctx, data.log, until);
    if (out_path.empty())
        out << format_embeddings(ctx.store(), &data.log);
    else
        export_embeddings(ctx.store(), &data.log, out_path);
    return exit_ok;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Continuous-time dynamic graph representation learning", "dyrep"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version_string());

    Overrides o;
    std::string out_dir, checkpoint, out_path;
    std::optional<double> until;
    PredictArgs pa;
    GenerateArgs ga;
    BenchmarkArgs ba;

    auto* train = app.add_subcommand("train", "fit a model and write checkpoints, curves and a manifest");
    add_data_flags(train, o);
    add_split_flags(train, o);
    add_train_flags(train, o);
    train->add_option("--out", out_dir, "output directory")->required();

    auto* evaluate = app.add_subcommand("evaluate", "slot-wise MAR, HITS@10 and MAE on the test window");
    add_data_flags(evaluate, o);
    add_split_flags(evaluate, o);
    add_eval_flags(evaluate, o);
    evaluate->add_option("--checkpoint", checkpoint)->required();
    evaluate->add_option("--dim", o.dim, "expected embedding dimension");
    evaluate->add_option("--out", out_path, "metrics CSV (default: stdout)");

    auto* predict = app.add_subcommand("predict", "query a trained model");
    predict->require_subcommand(1);
    auto* link = predict->add_subcommand("link", "rank partners of an anchor node");
    add_data_flags(link, o);
    link->add_option("--checkpoint", pa.checkpoint)->required();
    link->add_option("--anchor", pa.anchor)->required();
    link->add_option("--time", pa.time, "query time; events before it are replayed")->required();
    link->add_option("--type", pa.type, "0 association, 1 communication");
    link->add_option("--top", pa.top, "number of candidates to print (0 = all)");
    auto* when = predict->add_subcommand("time", "expected time of the next event between two nodes");
    add_data_flags(when, o);
    when->add_option("--checkpoint", pa.checkpoint)->required();
    when->add_option("--u", pa.u)->required();
    when->add_option("--v", pa.v)->required();
    when->add_option("--type", pa.type, "0 association, 1 communication");
    when->add_option("--time", pa.time, "replay only events before this time");
    when->add_option("--samples", pa.samples, "Monte Carlo samples (0 = closed form only)");
    when->add_option("--seed", pa.seed);

    auto* gen = app.add_subcommand("generate", "simulate a planted-community Hawkes log");
    gen->add_option("--config", o.config, "JSON configuration with a 'generator' section");
    gen->add_option("--nodes", ga.n);
    gen->add_option("--groups", ga.groups);
    gen->add_option("--mu-in", ga.mu_in, "base rate inside a community (events/hour)");
    gen->add_option("--mu-out", ga.mu_out, "base rate across communities");
    gen->add_option("--activity-skew", ga.activity_skew, "per-node activity skew (0 = uniform)");
    gen->add_option("--excitation", ga.excitation);
    gen->add_option("--decay", ga.decay);
    gen->add_option("--assoc-rate", ga.assoc_rate);
    gen->add_option("--assoc-boost", ga.assoc_boost);
    gen->add_option("--horizon", ga.horizon, "hours");
    gen->add_option("--initial-edge-prob", ga.initial_edge_prob);
    gen->add_option("--seed", ga.seed);
    gen->add_option("--out", ga.out, "event file")->required();
    gen->add_option("--adjacency-out", ga.adjacency_out);
    gen->add_option("--truth-out", ga.truth_out, "per-pair rate sidecar CSV");

    auto* bench = app.add_subcommand("benchmark", "time one training epoch over synthetic logs of several sizes");
    bench->add_option("--config", o.config, "JSON configuration with a 'benchmark' section");
    add_train_flags(bench, o);
    bench->add_option("--sizes", ba.sizes, "event counts");
    bench->add_option("--nodes", ba.nodes, "nodes in the synthetic graph");
    bench->add_option("--out", ba.out, "table CSV (default: stdout)");

    auto* exp = app.add_subcommand("export-embeddings", "replay events and dump node embeddings");
    add_data_flags(exp, o);
    exp->add_option("--checkpoint", checkpoint)->required();
    exp->add_option("--until", until, "replay only events before this time");
    exp->add_option("--out", out_path, "CSV (default: stdout)");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        if (train->parsed()) return cmd_train(o, out_dir, out, err);
        if (evaluate->parsed()) return cmd_evaluate(o, checkpoint, out_path, out, err);
        if (link->parsed()) return cmd_predict_link(o, pa, out, err);
        if (when->parsed()) return cmd_predict_time(o, pa, out, err);
        if (gen->parsed()) return cmd_generate(o, ga, out, err);
        if (bench->parsed()) return cmd_benchmark(o, ba, out, err);
        if (exp->parsed()) return cmd_export(o, checkpoint, until, out_path, out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return exit_data;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return exit_numeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_failure;
    }
    return exit_failure;
}

int run_cli(int argc, char** argv)
{
    return run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

} // namespace dyrep
