#pragma once

#include <dyrep/replay.hpp>

#include <cstdint>
#include <span>
#include <unordered_set>
#include <vector>

namespace dyrep {

/// f_k^{u,v}(t) given the frozen state at t_bar.
struct DensityQuery {
    NodeId u = 0;
    NodeId v = 0;
    EventType k = EventType::communication;
    double t = 0.0;
    double t_bar = 0.0;
};

/// lambda_k exp(-(lambda_0 + lambda_1)(t - t_bar)) for already computed intensities.
double frozen_density(double lambda_k, double total_rate, double elapsed);

/// Most recent event time on either endpoint.
double last_touch(const ReplayContext& ctx, NodeId u, NodeId v);

double conditional_density(const ReplayContext& ctx, const DensityQuery& q);

/// Argmax over k of f_k; ties go to communication.
EventType predict_event_type(const ReplayContext& ctx, NodeId u, NodeId v, double t);

struct TimePrediction {
    double t_bar = 0.0;
    /// Closed-form expectation of the next event time, t_bar + 1 / (lambda_0 + lambda_1).
    double expected = 0.0;
    /// Inverse-transform Monte Carlo estimate (equals `expected` when no samples are drawn).
    double estimate = 0.0;
    double std_error = 0.0;
    int samples = 0;
};

/// Expected time of the next (u, v) event of type k. `t_bar` defaults to last_touch.
TimePrediction predict_time(const ReplayContext& ctx, NodeId u, NodeId v, EventType k, int n_samples,
                            std::uint64_t seed, std::optional<double> t_bar = std::nullopt);

/// Unordered node pairs.
class PairSet {
public:
    void insert(NodeId a, NodeId b) { keys_.insert(key(a, b)); }
    bool contains(NodeId a, NodeId b) const { return keys_.count(key(a, b)) > 0; }
    std::size_t size() const noexcept { return keys_.size(); }
    void clear() { keys_.clear(); }

private:
    static std::uint64_t key(NodeId a, NodeId b)
    {
        const auto lo = static_cast<std::uint32_t>(std::min(a, b));
        const auto hi = static_cast<std::uint32_t>(std::max(a, b));
        return (static_cast<std::uint64_t>(lo) << 32) | hi;
    }
    std::unordered_set<std::uint64_t> keys_;
};

/// Which endpoint of the observed event is replaced by candidates.
enum class RankSide { replace_v, replace_u };

struct RankQuery {
    NodeId anchor = 0;
    NodeId truth = 0;
    double t = 0.0;
    EventType k = EventType::communication;
    RankSide side = RankSide::replace_v;
};

struct RankingResult {
    /// 1-based; 0 when the truth was filtered out.
    std::size_t target_rank = 0;
    std::vector<std::pair<NodeId, double>> scores;
    std::vector<NodeId> filtered_out;
    bool truth_filtered = false;

    std::size_t candidates() const noexcept { return scores.size(); }
};

/// (candidate, density) for every w in `pool` other than the anchor, in pool order.
/// The candidate takes the v slot for replace_v and the u slot for replace_u.
std::vector<std::pair<NodeId, double>> score_candidates(const ReplayContext& ctx, NodeId anchor, double t,
                                                        EventType k, RankSide side, std::span<const NodeId> pool,
                                                        int threads = 1);

/// Descending score, ties by ascending id.
void sort_by_score(std::vector<std::pair<NodeId, double>>& scores);

/// Density for every node w != anchor in `pool` whose pair with the anchor is
/// not in `seen`. The truth's rank counts strictly better scores plus equal
/// scores at lower ids.
RankingResult rank_link_candidates(const ReplayContext& ctx, const RankQuery& q, std::span<const NodeId> pool,
                                   const PairSet* seen = nullptr, int threads = 1);

} // namespace dyrep
