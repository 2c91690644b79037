#pragma once

#include <dyrep/event_stream.hpp>
#include <dyrep/params.hpp>

#include <cstdint>
#include <filesystem>

namespace dyrep {

/// Per-pair Hawkes ground truth:
///   lambda_uv(t) = mu_uv(t) + alpha * sum_i exp(-beta (t - t_i))
/// over the pair's own past communication events. mu_uv(t) rises by
/// `assoc_boost` once the pair becomes associated.
struct GeneratorConfig {
    NodeId n = 20;
    /// Symmetric n x n matrix of baseline rates per unordered pair (events / hour).
    Matrix base_rates;
    double excitation = 0.0;
    double decay = 1.0;
    /// Rate of association events over the whole graph (events / hour).
    double assoc_rate = 0.0;
    double assoc_boost = 0.0;
    double horizon = 100.0;
    /// Probability that a pair with positive baseline rate starts associated.
    double initial_edge_prob = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct GeneratedData {
    EventLog log;
    Adjacency a0;
};

/// Block structure: nodes split into `groups` contiguous communities, rate
/// `mu_in` inside a community and `mu_out` across.
Matrix planted_rates(NodeId n, int groups, double mu_in, double mu_out);

/// Node activity weights w_i proportional to (i + 1)^-skew, scaled to mean 1.
Vector activity_weights(NodeId n, double skew);

/// rates(u, v) *= w_u * w_v
void scale_by_activity(Matrix& rates, const Vector& weights);

GeneratedData generate(const GeneratorConfig& config);

struct PlantedReport {
    std::size_t high_pairs = 0;
    std::size_t low_pairs = 0;
    double high_mean = 0.0;
    double low_mean = 0.0;
    double ratio = 0.0;
    double z_score = 0.0;
    bool uniform_rates = false;
    bool degenerate = false;
    bool ok = false;
};

/// Compares per-pair communication counts between the higher- and lower-rate
/// halves of the pairs (split by index when all rates are equal).
PlantedReport planted_structure_check(const EventLog& log, const GeneratorConfig& config);

/// CSV sidecar "u,v,mu,alpha,beta" for every pair with a positive rate.
void write_truth(const GeneratorConfig& config, const std::filesystem::path& path);

/// Community log truncated to exactly `events` events (scalability runs).
GeneratedData benchmark_log(NodeId n, std::size_t events, std::uint64_t seed);

/// Samples a log from the model's own intensities. Intensities are constant
/// between events, so each step draws the waiting time from the total rate and
/// the (pair, type) in proportion to its intensity.
GeneratedData simulate_model(const ModelParams& params, const Adjacency& a0, NodeId n, double horizon,
                             std::size_t max_events, std::uint64_t seed);

} // namespace dyrep
