#include <dyrep/parallel.hpp>
#include <dyrep/predictor.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace dyrep {

double frozen_density(double lambda_k, double total_rate, double elapsed)
{
    if (elapsed < 0.0) throw std::invalid_argument("density queried before t_bar");
    return lambda_k * std::exp(-total_rate * elapsed);
}

double last_touch(const ReplayContext& ctx, NodeId u, NodeId v)
{
    const auto& store = ctx.store();
    store.check(u);
    store.check(v);
    return std::max(store.last_event_time[u], store.last_event_time[v]);
}

double conditional_density(const ReplayContext& ctx, const DensityQuery& q)
{
    if (q.t < q.t_bar) throw std::invalid_argument("density queried before t_bar");
    const double l0 = ctx.intensity(q.u, q.v, EventType::association);
    const double l1 = ctx.intensity(q.u, q.v, EventType::communication);
    return frozen_density(q.k == EventType::association ? l0 : l1, l0 + l1, q.t - q.t_bar);
}

EventType predict_event_type(const ReplayContext& ctx, NodeId u, NodeId v, double t)
{
    const double t_bar = std::min(t, last_touch(ctx, u, v));
    const double f0 = conditional_density(ctx, {u, v, EventType::association, t, t_bar});
    const double f1 = conditional_density(ctx, {u, v, EventType::communication, t, t_bar});
    return f0 > f1 ? EventType::association : EventType::communication;
}

TimePrediction predict_time(const ReplayContext& ctx, NodeId u, NodeId v, EventType k, int n_samples,
                            std::uint64_t seed, std::optional<double> t_bar)
{
    const double l0 = ctx.intensity(u, v, EventType::association);
    const double l1 = ctx.intensity(u, v, EventType::communication);
    const double lk = k == EventType::association ? l0 : l1;
    if (!(lk > 0.0)) throw NumericError("time prediction needs a positive intensity");
    const double total = l0 + l1;

    // Under the frozen model the waiting time is Exp(total) for either type, so
    // conditioning on k leaves t_bar + 1/total.
    TimePrediction out;
    out.t_bar = t_bar.value_or(last_touch(ctx, u, v));
    out.expected = out.t_bar + 1.0 / total;
    out.samples = std::max(0, n_samples);
    if (out.samples == 0) {
        out.estimate = out.expected;
        return out;
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < out.samples; ++i) {
        const double wait = -std::log1p(-unit(rng)) / total;
        sum += wait;
        sq += wait * wait;
    }
    const double n = out.samples;
    const double mean = sum / n;
    out.estimate = out.t_bar + mean;
    out.std_error = n > 1 ? std::sqrt(std::max(0.0, (sq - n * mean * mean) / (n - 1)) / n) : 0.0;
    return out;
}

std::vector<std::pair<NodeId, double>> score_candidates(const ReplayContext& ctx, NodeId anchor, double t,
                                                        EventType k, RankSide side, std::span<const NodeId> pool,
                                                        int threads)
{
    std::vector<NodeId> cands;
    cands.reserve(pool.size());
    for (const auto w : pool)
        if (w != anchor) cands.push_back(w);
    std::vector<std::pair<NodeId, double>> scores(cands.size());
    parallel_for(cands.size(), threads, [&](std::size_t i) {
        const NodeId w = cands[i];
        const NodeId a = side == RankSide::replace_v ? anchor : w;
        const NodeId b = side == RankSide::replace_v ? w : anchor;
        const double t_bar = std::min(t, last_touch(ctx, a, b));
        scores[i] = {w, conditional_density(ctx, {a, b, k, t, t_bar})};
    });
    return scores;
}

void sort_by_score(std::vector<std::pair<NodeId, double>>& scores)
{
    std::sort(scores.begin(), scores.end(), [](const auto& x, const auto& y) {
        return x.second != y.second ? x.second > y.second : x.first < y.first;
    });
}

RankingResult rank_link_candidates(const ReplayContext& ctx, const RankQuery& q, std::span<const NodeId> pool,
                                   const PairSet* seen, int threads)
{
    RankingResult out;
    std::vector<NodeId> cands;
    cands.reserve(pool.size());
    for (const auto w : pool) {
        if (w == q.anchor) continue;
        if (seen && seen->contains(q.anchor, w)) {
            out.filtered_out.push_back(w);
            if (w == q.truth) out.truth_filtered = true;
            continue;
        }
        cands.push_back(w);
    }
    if (out.truth_filtered) return out;
    if (std::find(cands.begin(), cands.end(), q.truth) == cands.end())
        throw std::invalid_argument("ground truth node is not in the candidate pool");
    if (cands.size() < 2) throw std::invalid_argument("ranking needs at least two candidates");

    out.scores = score_candidates(ctx, q.anchor, q.t, q.k, q.side, cands, threads);
    double truth_score = 0.0;
    for (const auto& [w, s] : out.scores)
        if (w == q.truth) truth_score = s;
    std::size_t rank = 1;
    for (const auto& [w, s] : out.scores)
        if (s > truth_score || (s == truth_score && w < q.truth)) ++rank;
    out.target_rank = rank;
    return out;
}

} // namespace dyrep
