#include <dyrep/config.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>

#ifndef DYREP_VERSION
#define DYREP_VERSION "0.0.0"
#endif

namespace dyrep {

namespace {

using nlohmann::json;

void check_keys(const json& j, const char* section, std::initializer_list<const char*> allowed)
{
    if (!j.is_object()) throw ConfigError(std::string(section) + " must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items())
        if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + section);
}

template <class T>
void read(const json& j, const char* key, T& out)
{
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

} // namespace

GeneratorConfig GeneratorSettings::resolve() const
{
    GeneratorConfig c;
    c.n = n;
    c.base_rates = base_rates ? *base_rates : planted_rates(n, groups, mu_in, mu_out);
    if (activity_skew != 0.0) scale_by_activity(c.base_rates, activity_weights(n, activity_skew));
    c.excitation = excitation;
    c.decay = decay;
    c.assoc_rate = assoc_rate;
    c.assoc_boost = assoc_boost;
    c.horizon = horizon;
    c.initial_edge_prob = initial_edge_prob;
    c.seed = seed;
    c.validate();
    return c;
}

void RunConfig::validate() const
{
    train.validate();
    if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0))
        throw ConfigError("train_fraction must lie in (0, 1)");
    if (data.slots < 1) throw ConfigError("slots must be positive");
    if (!(data.validation_fraction >= 0.0 && data.validation_fraction < 1.0))
        throw ConfigError("validation_fraction must lie in [0, 1)");
    if (!data.format.empty() && data.format != "csv" && data.format != "jsonl")
        throw ConfigError("format must be csv or jsonl");
    if (eval.time_samples < 0) throw ConfigError("time_samples must be non-negative");
    if (threads < 0) throw ConfigError("threads must be non-negative");
    if (generator) generator->resolve();
    if (benchmark) {
        if (benchmark->sizes.empty()) throw ConfigError("benchmark sizes must not be empty");
        for (const auto s : benchmark->sizes)
            if (s == 0) throw ConfigError("benchmark sizes must be positive");
        if (benchmark->n_nodes < 3) throw ConfigError("benchmark needs at least three nodes");
    }
}

RunConfig config_from_json(const json& j)
{
    check_keys(j, "config", {"model", "train", "data", "eval", "generator", "benchmark", "threads"});
    RunConfig c;
    read(j, "threads", c.threads);
    if (j.contains("model")) {
        const auto& m = j["model"];
        check_keys(m, "model", {"dim", "time_scale", "log_gap"});
        read(m, "dim", c.train.dim);
        read(m, "time_scale", c.train.model.time_scale);
        read(m, "log_gap", c.train.model.log_gap);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        check_keys(t, "train",
                   {"batch_size", "survival_samples", "learning_rate", "epochs", "seed", "clip_norm", "patience",
                    "attention_gradients"});
        read(t, "batch_size", c.train.batch_size);
        read(t, "survival_samples", c.train.survival_samples);
        read(t, "learning_rate", c.train.learning_rate);
        read(t, "epochs", c.train.epochs);
        read(t, "seed", c.train.seed);
        read(t, "patience", c.train.patience);
        read(t, "attention_gradients", c.train.attention_gradients);
        if (t.contains("clip_norm")) {
            if (t["clip_norm"].is_null())
                c.train.clip_norm.reset();
            else
                read(t, "clip_norm", *(c.train.clip_norm = 0.0));
        }
    }
    if (j.contains("data")) {
        const auto& d = j["data"];
        check_keys(d, "data", {"events", "adjacency", "format", "train_fraction", "slots", "validation_fraction"});
        read(d, "events", c.data.events);
        read(d, "adjacency", c.data.adjacency);
        read(d, "format", c.data.format);
        read(d, "train_fraction", c.data.train_fraction);
        read(d, "slots", c.data.slots);
        read(d, "validation_fraction", c.data.validation_fraction);
    }
    if (j.contains("eval")) {
        const auto& e = j["eval"];
        check_keys(e, "eval", {"filter", "both_directions", "association_per_slot", "time_samples", "seed"});
        if (e.contains("filter")) {
            std::string name;
            read(e, "filter", name);
            c.eval.filter = rank_filter_from_string(name);
        }
        read(e, "both_directions", c.eval.both_directions);
        read(e, "association_per_slot", c.eval.association_per_slot);
        read(e, "time_samples", c.eval.time_samples);
        read(e, "seed", c.eval.seed);
    }
    if (j.contains("generator")) {
        const auto& g = j["generator"];
        check_keys(g, "generator",
                   {"n", "groups", "mu_in", "mu_out", "activity_skew", "base_rates", "excitation", "decay", "assoc_rate",
                    "assoc_boost", "horizon", "initial_edge_prob", "seed"});
        GeneratorSettings s;
        read(g, "n", s.n);
        read(g, "groups", s.groups);
        read(g, "mu_in", s.mu_in);
        read(g, "mu_out", s.mu_out);
        read(g, "activity_skew", s.activity_skew);
        read(g, "excitation", s.excitation);
        read(g, "decay", s.decay);
        read(g, "assoc_rate", s.assoc_rate);
        read(g, "assoc_boost", s.assoc_boost);
        read(g, "horizon", s.horizon);
        read(g, "initial_edge_prob", s.initial_edge_prob);
        read(g, "seed", s.seed);
        if (g.contains("base_rates")) {
            std::vector<std::vector<double>> rows;
            read(g, "base_rates", rows);
            Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (rows[i].size() != rows.size()) throw ConfigError("base_rates must be square");
                for (std::size_t k = 0; k < rows.size(); ++k)
                    m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
            }
            s.base_rates = std::move(m);
            if (!g.contains("n")) s.n = static_cast<NodeId>(rows.size());
        }
        c.generator = std::move(s);
    }
    if (j.contains("benchmark")) {
        const auto& b = j["benchmark"];
        check_keys(b, "benchmark", {"sizes", "n_nodes", "seed"});
        BenchmarkSettings s;
        read(b, "sizes", s.sizes);
        read(b, "n_nodes", s.n_nodes);
        read(b, "seed", s.seed);
        c.benchmark = std::move(s);
    }
    return c;
}

json to_json(const RunConfig& c)
{
    json j;
    j["threads"] = c.threads;
    j["model"] = {{"dim", c.train.dim},
                  {"time_scale", c.train.model.time_scale},
                  {"log_gap", c.train.model.log_gap}};
    j["train"] = {{"batch_size", c.train.batch_size},
                  {"survival_samples", c.train.survival_samples},
                  {"learning_rate", c.train.learning_rate},
                  {"epochs", c.train.epochs},
                  {"seed", c.train.seed},
                  {"clip_norm", c.train.clip_norm ? json(*c.train.clip_norm) : json(nullptr)},
                  {"patience", c.train.patience},
                  {"attention_gradients", c.train.attention_gradients}};
    j["data"] = {{"events", c.data.events},
                 {"adjacency", c.data.adjacency},
                 {"format", c.data.format},
                 {"train_fraction", c.data.train_fraction},
                 {"slots", c.data.slots},
                 {"validation_fraction", c.data.validation_fraction}};
    j["eval"] = {{"filter", to_string(c.eval.filter)},
                 {"both_directions", c.eval.both_directions},
                 {"association_per_slot", c.eval.association_per_slot},
                 {"time_samples", c.eval.time_samples},
                 {"seed", c.eval.seed}};
    if (c.generator) {
        const auto& g = *c.generator;
        j["generator"] = {{"n", g.n},
                          {"groups", g.groups},
                          {"mu_in", g.mu_in},
                          {"mu_out", g.mu_out},
                          {"activity_skew", g.activity_skew},
                          {"excitation", g.excitation},
                          {"decay", g.decay},
                          {"assoc_rate", g.assoc_rate},
                          {"assoc_boost", g.assoc_boost},
                          {"horizon", g.horizon},
                          {"initial_edge_prob", g.initial_edge_prob},
                          {"seed", g.seed}};
        if (g.base_rates) {
            json rows = json::array();
            for (Eigen::Index i = 0; i < g.base_rates->rows(); ++i) {
                json row = json::array();
                for (Eigen::Index k = 0; k < g.base_rates->cols(); ++k) row.push_back((*g.base_rates)(i, k));
                rows.push_back(std::move(row));
            }
            j["generator"]["base_rates"] = std::move(rows);
        }
    }
    if (c.benchmark)
        j["benchmark"] = {{"sizes", c.benchmark->sizes},
                          {"n_nodes", c.benchmark->n_nodes},
                          {"seed", c.benchmark->seed}};
    return j;
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

std::string file_hash(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

std::string utc_timestamp()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

const char* version_string() noexcept { return DYREP_VERSION; }

nlohmann::json RunManifest::to_json() const
{
    return {{"command", command}, {"config", config},         {"seed", seed},
            {"version", version}, {"dataset_hash", dataset_hash}, {"started", started}};
}

void write_manifest(const RunManifest& m, const std::filesystem::path& dir)
{
    const auto path = dir / "manifest.json";
    std::filesystem::remove(dir / "manifest.done.json");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << m.to_json().dump(2) << '\n';
}

void write_completion(const std::filesystem::path& dir, const std::string& status)
{
    std::ofstream out(dir / "manifest.done.json", std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / "manifest.done.json").string());
    out << nlohmann::json{{"finished", utc_timestamp()}, {"status", status}}.dump(2) << '\n';
}

} // namespace dyrep
