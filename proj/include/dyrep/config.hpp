#pragma once

#include <dyrep/evaluator.hpp>
#include <dyrep/synthetic.hpp>
#include <dyrep/trainer.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dyrep {

struct DataConfig {
    std::string events;
    std::string adjacency;
    /// "csv", "jsonl" or empty to infer from the extension.
    std::string format;
    double train_fraction = 0.7;
    int slots = 6;
    /// Tail of the train window held out for early stopping; 0 disables.
    double validation_fraction = 0.0;
};

/// Planted-community generator settings; `base_rates` overrides the block model.
struct GeneratorSettings {
    NodeId n = 20;
    int groups = 4;
    double mu_in = 1.0;
    double mu_out = 0.05;
    /// Per-node activity skew applied on top of the block rates (0 = uniform).
    double activity_skew = 0.0;
    std::optional<Matrix> base_rates;
    double excitation = 0.3;
    double decay = 1.0;
    double assoc_rate = 0.0;
    double assoc_boost = 0.0;
    double horizon = 100.0;
    double initial_edge_prob = 0.0;
    std::uint64_t seed = 0;

    GeneratorConfig resolve() const;
};

struct BenchmarkSettings {
    std::vector<std::size_t> sizes{1000, 10000, 100000};
    NodeId n_nodes = 20;
    std::uint64_t seed = 7;
};

struct RunConfig {
    TrainConfig train;
    DataConfig data;
    EvalConfig eval;
    std::optional<GeneratorSettings> generator;
    std::optional<BenchmarkSettings> benchmark;
    /// 0 = one worker per hardware thread.
    int threads = 0;

    void validate() const;
};

/// Unknown keys are rejected so that typos do not silently fall back to defaults.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

/// Current UTC time as ISO 8601.
std::string utc_timestamp();

const char* version_string() noexcept;

/// Written once before work starts; completion goes to a separate file so the
/// manifest itself never changes.
struct RunManifest {
    std::string command;
    nlohmann::json config;
    std::uint64_t seed = 0;
    std::string version;
    std::string dataset_hash;
    std::string started;

    nlohmann::json to_json() const;
};

void write_manifest(const RunManifest& m, const std::filesystem::path& dir);
void write_completion(const std::filesystem::path& dir, const std::string& status);

} // namespace dyrep
