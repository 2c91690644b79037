#include <dyrep/replay.hpp>
#include <dyrep/synthetic.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <limits>

namespace dyrep {

namespace {

using Rng = std::mt19937_64;

Rng stream_rng(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

struct PairEvent {
    double t;
    std::size_t pair;
    std::size_t seq;
    Event e;
};

// Upper-triangle pair index for u < v.
std::size_t pair_index(NodeId u, NodeId v, NodeId n)
{
    const auto a = static_cast<std::size_t>(u);
    const auto b = static_cast<std::size_t>(v);
    const auto nn = static_cast<std::size_t>(n);
    return a * nn - a * (a + 1) / 2 + (b - a - 1);
}

// Ogata thinning for one pair: mu jumps from base to base + boost at `boost_at`.
void simulate_pair(const GeneratorConfig& c, NodeId u, NodeId v, double base, double boost_at,
                   std::vector<PairEvent>& out)
{
    const double horizon = c.horizon;
    const std::size_t pair = pair_index(u, v, c.n);
    auto rng = stream_rng(c.seed, 1 + pair);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto mu_at = [&](double t) { return base + (t >= boost_at ? c.assoc_boost : 0.0); };
    const double mu_max = base + (std::isfinite(boost_at) ? c.assoc_boost : 0.0);

    double t = 0.0;
    double excite = 0.0;  // alpha * sum exp(-beta (t - t_i)) at time t
    std::size_t seq = 0;
    while (true) {
        // excite only decays until the next event, so this bounds the rate ahead.
        const double bound = mu_max + excite;
        if (!(bound > 0.0)) break;
        const double wait = -std::log1p(-unit(rng)) / bound;
        t += wait;
        if (t > horizon) break;
        excite *= std::exp(-c.decay * wait);
        const double rate = mu_at(t) + excite;
        if (unit(rng) * bound <= rate) {
            const bool flip = unit(rng) < 0.5;
            Event e;
            e.u = flip ? v : u;
            e.v = flip ? u : v;
            e.t = t;
            e.k = EventType::communication;
            out.push_back({t, pair, seq++, e});
            excite += c.excitation;
        }
    }
}

} // namespace

void GeneratorConfig::validate() const
{
    if (n < 2) throw ConfigError("generator needs at least two nodes");
    if (base_rates.rows() != n || base_rates.cols() != n)
        throw ConfigError("base_rates must be an n x n matrix");
    if (!base_rates.allFinite() || (base_rates.array() < 0.0).any()) throw ConfigError("rates must be >= 0");
    if (base_rates != base_rates.transpose()) throw ConfigError("base_rates must be symmetric");
    if (!(excitation >= 0.0) || !(assoc_rate >= 0.0) || !(assoc_boost >= 0.0))
        throw ConfigError("rates must be >= 0");
    if (!(decay > 0.0)) throw ConfigError("decay must be positive");
    // Each event spawns excitation / decay offspring on average; at 1 or more the process explodes.
    if (!(excitation < decay)) throw ConfigError("excitation must be smaller than decay");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("horizon must be positive");
    if (!(initial_edge_prob >= 0.0 && initial_edge_prob <= 1.0))
        throw ConfigError("initial_edge_prob must lie in [0, 1]");
}

Matrix planted_rates(NodeId n, int groups, double mu_in, double mu_out)
{
    if (n < 1 || groups < 1) throw ConfigError("planted_rates needs n >= 1 and groups >= 1");
    Matrix rates(n, n);
    const auto group_of = [&](NodeId v) { return static_cast<int>(static_cast<long long>(v) * groups / n); };
    for (NodeId i = 0; i < n; ++i)
        for (NodeId j = 0; j < n; ++j)
            rates(i, j) = i == j ? 0.0 : (group_of(i) == group_of(j) ? mu_in : mu_out);
    return rates;
}

Vector activity_weights(NodeId n, double skew)
{
    if (n < 1) throw ConfigError("activity_weights needs n >= 1");
    Vector w(n);
    for (NodeId i = 0; i < n; ++i) w[i] = std::pow(static_cast<double>(i + 1), -skew);
    return w * (static_cast<double>(n) / w.sum());
}

void scale_by_activity(Matrix& rates, const Vector& weights)
{
    if (rates.rows() != weights.size() || rates.cols() != weights.size())
        throw ConfigError("activity weights do not match the rate matrix");
    rates.array() *= (weights * weights.transpose()).array();
}

GeneratedData generate(const GeneratorConfig& c)
{
    c.validate();
    const NodeId n = c.n;

    GeneratedData out;
    out.a0.n = n;
    std::vector<std::uint8_t> linked(static_cast<std::size_t>(n) * (n - 1) / 2, 0);
    {
        auto rng = stream_rng(c.seed, 0);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (NodeId u = 0; u < n; ++u)
            for (NodeId v = u + 1; v < n; ++v)
                if (c.base_rates(u, v) > 0.0 && c.initial_edge_prob > 0.0 && unit(rng) < c.initial_edge_prob) {
                    out.a0.add(u, v);
                    linked[pair_index(u, v, n)] = 1;
                }
    }

    // Association events: a graph-wide Poisson stream, each picking a uniform
    // unassociated pair.
    std::vector<double> boost_at(linked.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < linked.size(); ++i)
        if (linked[i]) boost_at[i] = 0.0;
    std::vector<PairEvent> merged;
    if (c.assoc_rate > 0.0) {
        auto rng = stream_rng(c.seed, 0xa55cULL << 32);
        std::exponential_distribution<double> wait(c.assoc_rate);
        std::vector<std::pair<NodeId, NodeId>> open;
        for (NodeId u = 0; u < n; ++u)
            for (NodeId v = u + 1; v < n; ++v)
                if (!linked[pair_index(u, v, n)]) open.emplace_back(u, v);
        double t = 0.0;
        std::size_t seq = 0;
        while (!open.empty()) {
            t += wait(rng);
            if (t > c.horizon) break;
            std::uniform_int_distribution<std::size_t> pick(0, open.size() - 1);
            const auto idx = pick(rng);
            const auto [u, v] = open[idx];
            open.erase(open.begin() + static_cast<std::ptrdiff_t>(idx));
            boost_at[pair_index(u, v, n)] = t;
            Event e{u, v, t, 0, EventType::association};
            merged.push_back({t, 0, seq++, e});
        }
    }

    for (NodeId u = 0; u < n; ++u)
        for (NodeId v = u + 1; v < n; ++v) {
            const double base = c.base_rates(u, v);
            const double boost = boost_at[pair_index(u, v, n)];
            if (base > 0.0 || (std::isfinite(boost) && c.assoc_boost > 0.0)) simulate_pair(c, u, v, base, boost, merged);
        }

    std::sort(merged.begin(), merged.end(), [](const PairEvent& a, const PairEvent& b) {
        if (a.t != b.t) return a.t < b.t;
        // Associations (pair slot 0, type 0) precede communications at equal times.
        if (a.e.k != b.e.k) return a.e.k == EventType::association;
        if (a.pair != b.pair) return a.pair < b.pair;
        return a.seq < b.seq;
    });
    std::vector<Event> events;
    events.reserve(merged.size());
    for (const auto& p : merged) events.push_back(p.e);

    out.a0.normalize();
    out.log = derive_link_status(make_log(std::move(events), n, std::pair{0.0, c.horizon}), out.a0);
    return out;
}

PlantedReport planted_structure_check(const EventLog& log, const GeneratorConfig& c)
{
    const NodeId n = c.n;
    PlantedReport report;
    std::vector<double> counts(static_cast<std::size_t>(n) * (n - 1) / 2, 0.0);
    std::size_t total = 0;
    for (const auto& e : log.events) {
        if (e.k != EventType::communication || e.u >= n || e.v >= n) continue;
        counts[pair_index(std::min(e.u, e.v), std::max(e.u, e.v), n)] += 1.0;
        ++total;
    }
    report.degenerate = total == 0;

    std::vector<double> mu(counts.size());
    for (NodeId u = 0; u < n; ++u)
        for (NodeId v = u + 1; v < n; ++v) mu[pair_index(u, v, n)] = c.base_rates(u, v);
    const auto [lo, hi] = std::minmax_element(mu.begin(), mu.end());
    report.uniform_rates = *lo == *hi;

    std::vector<double> high, low;
    if (report.uniform_rates) {
        for (std::size_t i = 0; i < counts.size(); ++i) (i < counts.size() / 2 ? high : low).push_back(counts[i]);
    } else {
        const double mid = 0.5 * (*lo + *hi);
        for (std::size_t i = 0; i < counts.size(); ++i) (mu[i] > mid ? high : low).push_back(counts[i]);
    }
    const auto moments = [](const std::vector<double>& xs) {
        if (xs.empty()) return std::pair{0.0, 0.0};
        const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
        double var = 0.0;
        for (const auto x : xs) var += (x - mean) * (x - mean);
        return std::pair{mean, xs.size() > 1 ? var / static_cast<double>(xs.size() - 1) : 0.0};
    };
    const auto [mh, vh] = moments(high);
    const auto [ml, vl] = moments(low);
    report.high_pairs = high.size();
    report.low_pairs = low.size();
    report.high_mean = mh;
    report.low_mean = ml;
    report.ratio = ml > 0.0 ? mh / ml : (mh > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    double se = 0.0;
    if (!high.empty() && !low.empty()) se = std::sqrt(vh / high.size() + vl / low.size());
    report.z_score = se > 0.0 ? (mh - ml) / se : 0.0;
    if (report.degenerate)
        report.ok = false;
    else if (report.uniform_rates)
        report.ok = std::abs(report.z_score) < 3.0;
    else
        report.ok = mh > ml && report.z_score > 3.0;
    return report;
}

void write_truth(const GeneratorConfig& c, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.precision(17);
    out << "u,v,mu,alpha,beta\n";
    for (NodeId u = 0; u < c.n; ++u)
        for (NodeId v = u + 1; v < c.n; ++v)
            if (c.base_rates(u, v) > 0.0)
                out << u << ',' << v << ',' << c.base_rates(u, v) << ',' << c.excitation << ',' << c.decay << '\n';
}

GeneratedData benchmark_log(NodeId n, std::size_t events, std::uint64_t seed)
{
    GeneratorConfig c;
    c.n = n;
    c.base_rates = planted_rates(n, std::max(1, n / 5), 1.0, 0.05);
    c.excitation = 0.3;
    c.decay = 1.0;
    c.seed = seed;
    const double per_hour = c.base_rates.sum() / 2.0 / (1.0 - c.excitation / c.decay);
    c.horizon = std::max(1.0, 1.2 * static_cast<double>(events) / per_hour);
    for (int attempt = 0; attempt < 16; ++attempt) {
        auto data = generate(c);
        if (data.log.size() >= events) {
            data.log.events.resize(events);
            const double end = events ? data.log.events.back().t : 0.0;
            data.log = make_log(std::move(data.log.events), n, std::pair{0.0, end});
            return data;
        }
        c.horizon *= 1.5;
    }
    throw DataError("benchmark generator could not reach the requested event count");
}

GeneratedData simulate_model(const ModelParams& params, const Adjacency& a0, NodeId n, double horizon,
                             std::size_t max_events, std::uint64_t seed)
{
    if (n < 2) throw ConfigError("simulation needs at least two nodes");
    if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
    ReplayContext ctx(params, a0, 0.0, n);
    auto rng = stream_rng(seed, 0x51eULL);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    struct Option {
        NodeId u, v;
        EventType k;
    };
    std::vector<Option> options;
    std::vector<double> rates;
    std::vector<Event> events;
    double t = 0.0;
    while (events.size() < max_events) {
        options.clear();
        rates.clear();
        double total = 0.0;
        for (NodeId u = 0; u < n; ++u)
            for (NodeId v = 0; v < n; ++v) {
                if (u == v) continue;
                for (int k = 0; k < kNumEventTypes; ++k) {
                    const auto type = event_type_from_index(k);
                    if (type == EventType::association && ctx.state().linked(u, v)) continue;
                    const double r = ctx.intensity(u, v, type);
                    options.push_back({u, v, type});
                    rates.push_back(r);
                    total += r;
                }
            }
        if (!(total > 0.0)) break;
        t += -std::log1p(-unit(rng)) / total;
        if (t > horizon) break;
        double target = unit(rng) * total;
        std::size_t pick = 0;
        while (pick + 1 < rates.size() && target >= rates[pick]) target -= rates[pick++];
        const auto& o = options[pick];
        Event e{o.u, o.v, t, static_cast<std::uint8_t>(ctx.state().linked(o.u, o.v) ? 1 : 0), o.k};
        ctx.advance(e);
        events.push_back(e);
    }
    GeneratedData out;
    out.a0 = a0;
    out.a0.n = std::max(out.a0.n, n);
    out.log = make_log(std::move(events), n, std::pair{0.0, horizon});
    out.log.link_status_given = true;
    return out;
}

} // namespace dyrep
