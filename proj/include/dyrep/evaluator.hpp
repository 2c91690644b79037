#pragma once

#include <dyrep/event_stream.hpp>
#include <dyrep/params.hpp>
#include <dyrep/predictor.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dyrep {

/// Pairs excluded from the candidate list of each ranking query.
enum class RankFilter {
    none,
    /// Pairs already observed earlier in the test window.
    test_seen,
    /// Pairs observed anywhere before the query, train included.
    all_seen,
};

RankFilter rank_filter_from_string(const std::string& name);
const char* to_string(RankFilter filter) noexcept;

struct EvalConfig {
    RankFilter filter = RankFilter::test_seen;
    /// Also rank with u replaced and average the two ranks.
    bool both_directions = false;
    /// Association events get per-slot rows as well as the overall row.
    bool association_per_slot = false;
    /// 0 uses the closed-form expected time.
    int time_samples = 0;
    std::uint64_t seed = 0;
    int threads = 1;
    /// Replaces the model's forecast for a test communication event when set.
    std::function<double(const Event&, double model_estimate)> time_predictor;
};

inline constexpr int kOverallSlot = -1;

struct SlotMetrics {
    int slot = 0;
    EventType k = EventType::communication;
    /// Link metrics are present (NaN when no event was ranked).
    bool has_links = true;
    double mar = 0.0;
    double hits_at_10 = 0.0;
    std::optional<double> mae_hours;
    std::size_t n_events = 0;
    /// Matching events that could not be ranked (truth filtered out, too few candidates).
    std::size_t skipped = 0;
    /// Expected MAR and HITS@10 of a uniformly random ranking over the same candidate sets.
    double random_mar = 0.0;
    double random_hits_at_10 = 0.0;
    std::size_t time_events = 0;

    /// Matching events existed but none could be ranked.
    bool failed() const noexcept { return has_links && n_events == 0 && skipped > 0; }
};

struct EvalResult {
    /// Communication rows per slot then overall (with MAE), then association rows.
    std::vector<SlotMetrics> metrics;
    /// Mean over non-empty slots of the communication MAR / HITS@10 / MAE.
    double slot_mean_mar = 0.0;
    double slot_mean_hits = 0.0;
    double slot_mean_random_mar = 0.0;
    double slot_mean_random_hits = 0.0;
    double overall_mae = 0.0;
};

/// Replays the train window, then the test slots in order with frozen
/// parameters and updating state, ranking each test event's partner among the
/// nodes seen so far and predicting communication times.
EvalResult evaluate_all(const ModelParams& params, const Adjacency& a0, const SlotSplit& split,
                        const EvalConfig& config = {});

/// Link rows for one event type: per slot for communication; for association an
/// overall row (and per-slot rows when configured).
std::vector<SlotMetrics> evaluate_links(const ModelParams& params, const Adjacency& a0, const SlotSplit& split,
                                        EventType k_filter, const EvalConfig& config = {});

/// Per-slot MAE of predicted communication times, plus the overall row.
std::vector<SlotMetrics> evaluate_time(const ModelParams& params, const Adjacency& a0, const SlotSplit& split,
                                       const EvalConfig& config = {});

/// One line of the long-format metrics table.
struct MetricRow {
    int slot = 0;
    EventType k = EventType::communication;
    std::string metric;
    double value = 0.0;
    std::size_t n_events = 0;

    friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

/// mar and hits_at_10 per link row, mae_hours per row that carries one.
std::vector<MetricRow> metric_rows(std::span<const SlotMetrics> metrics);

/// CSV "slot,k,metric,value,n_events"; the overall slot is written as "all".
std::string format_metrics(std::span<const MetricRow> rows);
void report(std::span<const MetricRow> rows, const std::filesystem::path& path);
void report(std::span<const SlotMetrics> metrics, const std::filesystem::path& path);
std::vector<MetricRow> parse_metrics(std::string_view text);
std::vector<MetricRow> read_metrics(const std::filesystem::path& path);

} // namespace dyrep
