#include <dyrep/evaluator.hpp>

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace dyrep {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Accumulator {
    double rank_sum = 0.0;
    double hits = 0.0;
    double random_rank = 0.0;
    double random_hits = 0.0;
    std::size_t ranked = 0;
    std::size_t skipped = 0;
    double abs_error = 0.0;
    std::size_t timed = 0;

    void add_rank(double rank, std::size_t candidates)
    {
        const auto c = static_cast<double>(candidates);
        rank_sum += rank;
        hits += rank <= 10.0 ? 1.0 : 0.0;
        random_rank += (c + 1.0) / 2.0;
        random_hits += std::min(10.0, c) / c;
        ++ranked;
    }

    SlotMetrics finish(int slot, EventType k, bool with_time) const
    {
        SlotMetrics m;
        m.slot = slot;
        m.k = k;
        m.n_events = ranked;
        m.skipped = skipped;
        const auto n = static_cast<double>(ranked);
        m.mar = ranked ? rank_sum / n : kNaN;
        m.hits_at_10 = ranked ? hits / n : kNaN;
        m.random_mar = ranked ? random_rank / n : kNaN;
        m.random_hits_at_10 = ranked ? random_hits / n : kNaN;
        if (with_time) {
            m.time_events = timed;
            m.mae_hours = timed ? abs_error / static_cast<double>(timed) : kNaN;
        }
        return m;
    }
};

struct Ranked {
    double rank = 0.0;
    std::size_t candidates = 0;
};

std::optional<Ranked> rank_once(const ReplayContext& ctx, const RankQuery& q, std::span<const NodeId> pool,
                                const PairSet* seen, int threads)
{
    std::size_t usable = 0;
    bool truth_usable = false;
    for (const auto w : pool) {
        if (w == q.anchor || (seen && seen->contains(q.anchor, w))) continue;
        ++usable;
        truth_usable = truth_usable || w == q.truth;
    }
    if (!truth_usable || usable < 2) return std::nullopt;
    const auto r = rank_link_candidates(ctx, q, pool, seen, threads);
    return Ranked{static_cast<double>(r.target_rank), r.candidates()};
}

std::string shortest(double x)
{
    if (std::isnan(x)) return "nan";
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), ptr);
}

} // namespace

RankFilter rank_filter_from_string(const std::string& name)
{
    if (name == "none") return RankFilter::none;
    if (name == "test_seen" || name == "test-seen") return RankFilter::test_seen;
    if (name == "all_seen" || name == "all-seen") return RankFilter::all_seen;
    throw ConfigError("unknown ranking filter '" + name + "' (none, test_seen, all_seen)");
}

const char* to_string(RankFilter filter) noexcept
{
    switch (filter) {
    case RankFilter::none: return "none";
    case RankFilter::test_seen: return "test_seen";
    case RankFilter::all_seen: return "all_seen";
    }
    return "?";
}

EvalResult evaluate_all(const ModelParams& params, const Adjacency& a0, const SlotSplit& split,
                        const EvalConfig& config)
{
    if (config.time_samples < 0) throw ConfigError("time_samples must be non-negative");
    const auto n_slots = split.test_slots.size();
    std::vector<Accumulator> comm(n_slots), assoc(n_slots);
    Accumulator comm_all, assoc_all;

    ReplayContext ctx(params, a0, split.train.horizon.first);
    PairSet seen;
    const bool filtering = config.filter != RankFilter::none;

    // Forecast of the next communication on each ordered pair, issued right
    // after the pair's latest event from the state at that moment.
    std::unordered_map<std::uint64_t, double> forecast;
    std::uint64_t query = 0;
    const auto ordered_key = [](NodeId a, NodeId b) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
    };
    const auto issue_forecasts = [&](const Event& e) {
        for (const auto& [a, b] : {std::pair{e.u, e.v}, std::pair{e.v, e.u}}) {
            const auto pred = predict_time(ctx, a, b, EventType::communication, config.time_samples,
                                           config.seed + 0x9e3779b97f4a7c15ULL * ++query, e.t);
            forecast[ordered_key(a, b)] = pred.estimate;
        }
    };

    for (const auto& e : split.train.events) {
        ctx.advance(e);
        issue_forecasts(e);
        if (config.filter == RankFilter::all_seen) seen.insert(e.u, e.v);
    }

    std::vector<NodeId> pool;
    for (std::size_t s = 0; s < n_slots; ++s) {
        const auto& slot = split.test_slots[s];
        for (const auto& e : slot.events) {
            ctx.ensure_node(std::max(e.u, e.v));
            pool = ctx.seen_nodes();
            for (const auto x : {e.u, e.v})
                if (!ctx.seen(x)) pool.insert(std::lower_bound(pool.begin(), pool.end(), x), x);

            const bool is_comm = e.k == EventType::communication;
            auto& acc = is_comm ? comm[s] : assoc[s];
            auto& all = is_comm ? comm_all : assoc_all;
            const PairSet* filter = filtering ? &seen : nullptr;

            auto r = rank_once(ctx, {e.u, e.v, e.t, e.k, RankSide::replace_v}, pool, filter, config.threads);
            if (r && config.both_directions) {
                const auto back =
                    rank_once(ctx, {e.v, e.u, e.t, e.k, RankSide::replace_u}, pool, filter, config.threads);
                if (back) {
                    r->rank = 0.5 * (r->rank + back->rank);
                    r->candidates = (r->candidates + back->candidates) / 2;
                } else {
                    r.reset();
                }
            }
            if (r) {
                acc.add_rank(r->rank, r->candidates);
                all.add_rank(r->rank, r->candidates);
            } else {
                ++acc.skipped;
                ++all.skipped;
            }

            if (is_comm) {
                double estimate = 0.0;
                if (const auto it = forecast.find(ordered_key(e.u, e.v)); it != forecast.end()) {
                    estimate = it->second;
                } else {
                    // No pair history: condition on the latest event of either node.
                    const bool fresh = !ctx.active(e.u) && !ctx.active(e.v);
                    const double t_bar = fresh ? slot.horizon.first : last_touch(ctx, e.u, e.v);
                    estimate = predict_time(ctx, e.u, e.v, e.k, config.time_samples,
                                            config.seed + 0x9e3779b97f4a7c15ULL * ++query, std::min(t_bar, e.t))
                                   .estimate;
                }
                if (config.time_predictor) estimate = config.time_predictor(e, estimate);
                const double err = std::abs(estimate - e.t);
                acc.abs_error += err;
                all.abs_error += err;
                ++acc.timed;
                ++all.timed;
            }

            if (filtering) seen.insert(e.u, e.v);
            ctx.advance(e);
            issue_forecasts(e);
        }
    }

    EvalResult out;
    double mar = 0.0, hits = 0.0, rmar = 0.0, rhits = 0.0;
    std::size_t used = 0;
    for (std::size_t s = 0; s < n_slots; ++s) {
        const auto m = comm[s].finish(static_cast<int>(s), EventType::communication, true);
        if (m.n_events > 0) {
            mar += m.mar;
            hits += m.hits_at_10;
            rmar += m.random_mar;
            rhits += m.random_hits_at_10;
            ++used;
        }
        out.metrics.push_back(m);
    }
    const auto overall = comm_all.finish(kOverallSlot, EventType::communication, true);
    out.metrics.push_back(overall);
    if (config.association_per_slot)
        for (std::size_t s = 0; s < n_slots; ++s)
            out.metrics.push_back(assoc[s].finish(static_cast<int>(s), EventType::association, false));
    out.metrics.push_back(assoc_all.finish(kOverallSlot, EventType::association, false));

    const double denom = used ? static_cast<double>(used) : kNaN;
    out.slot_mean_mar = mar / denom;
    out.slot_mean_hits = hits / denom;
    out.slot_mean_random_mar = rmar / denom;
    out.slot_mean_random_hits = rhits / denom;
    out.overall_mae = overall.mae_hours.value_or(kNaN);
    return out;
}

std::vector<SlotMetrics> evaluate_links(const ModelParams& params, const Adjacency& a0, const SlotSplit& split,
                                        EventType k_filter, const EvalConfig& config)
{
    std::vector<SlotMetrics> out;
    for (auto m : evaluate_all(params, a0, split, config).metrics) {
        if (m.k != k_filter) continue;
        m.mae_hours.reset();
        m.time_events = 0;
        out.push_back(m);
    }
    return out;
}

std::vector<SlotMetrics> evaluate_time(const ModelParams& params, const Adjacency& a0, const SlotSplit& split,
                                       const EvalConfig& config)
{
    std::vector<SlotMetrics> out;
    for (auto m : evaluate_all(params, a0, split, config).metrics) {
        if (!m.mae_hours) continue;
        m.has_links = false;
        m.mar = m.hits_at_10 = m.random_mar = m.random_hits_at_10 = kNaN;
        m.n_events = m.time_events;
        m.skipped = 0;
        out.push_back(m);
    }
    return out;
}

std::vector<MetricRow> metric_rows(std::span<const SlotMetrics> metrics)
{
    std::vector<MetricRow> rows;
    for (const auto& m : metrics) {
        if (m.has_links) {
            rows.push_back({m.slot, m.k, "mar", m.mar, m.n_events});
            rows.push_back({m.slot, m.k, "hits_at_10", m.hits_at_10, m.n_events});
        }
        if (m.mae_hours) rows.push_back({m.slot, m.k, "mae_hours", *m.mae_hours, m.time_events});
    }
    return rows;
}

std::string format_metrics(std::span<const MetricRow> rows)
{
    std::ostringstream out;
    out << "slot,k,metric,value,n_events\n";
    for (const auto& r : rows) {
        out << (r.slot == kOverallSlot ? std::string("all") : std::to_string(r.slot)) << ',' << to_index(r.k) << ','
            << r.metric << ',' << shortest(r.value) << ',' << r.n_events << '\n';
    }
    return out.str();
}

void report(std::span<const MetricRow> rows, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << format_metrics(rows);
    if (!out) throw DataError("write failed: " + path.string());
}

void report(std::span<const SlotMetrics> metrics, const std::filesystem::path& path)
{
    const auto rows = metric_rows(metrics);
    report(std::span<const MetricRow>(rows), path);
}

std::vector<MetricRow> parse_metrics(std::string_view text)
{
    std::vector<MetricRow> rows;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (line_no == 1) {
            if (line != "slot,k,metric,value,n_events") throw DataError("line 1: unexpected metrics header");
            continue;
        }
        std::vector<std::string_view> f;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            f.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        const auto fail = [&](const std::string& why) {
            return DataError("line " + std::to_string(line_no) + ": " + why);
        };
        if (f.size() != 5) throw fail("expected 5 fields");
        MetricRow r;
        if (f[0] == "all") {
            r.slot = kOverallSlot;
        } else if (std::from_chars(f[0].data(), f[0].data() + f[0].size(), r.slot).ec != std::errc{}) {
            throw fail("bad slot");
        }
        int k = 0;
        if (std::from_chars(f[1].data(), f[1].data() + f[1].size(), k).ec != std::errc{} || (k != 0 && k != 1))
            throw fail("bad event type");
        r.k = event_type_from_index(k);
        r.metric = std::string(f[2]);
        if (f[3] == "nan") {
            r.value = kNaN;
        } else if (std::from_chars(f[3].data(), f[3].data() + f[3].size(), r.value).ec != std::errc{}) {
            throw fail("bad value");
        }
        if (std::from_chars(f[4].data(), f[4].data() + f[4].size(), r.n_events).ec != std::errc{})
            throw fail("bad n_events");
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<MetricRow> read_metrics(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_metrics(buf.str());
}

} // namespace dyrep
