#include <dyrep/synthetic.hpp>
#include <dyrep/trainer.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

namespace dyrep {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<NodeId> checked_candidates(std::span<const NodeId> pool, const Event& e)
{
    auto cand = survival_candidates(pool, e);
    if (cand.empty())
        throw DataError("survival sampling: no candidate nodes besides the endpoints of event at t=" +
                        std::to_string(e.t));
    return cand;
}

void ensure_pool(ReplayContext& ctx, std::span<const NodeId> pool)
{
    if (!pool.empty()) ctx.ensure_node(*std::max_element(pool.begin(), pool.end()));
}

Rng epoch_rng(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

struct PlainTotals {
    double event_nll = 0.0;
    double survival = 0.0;
    std::size_t underflows = 0;
    double survival_seconds = 0.0;
};

// Forward-only replay of one batch with the same summation order as the tape.
PlainTotals plain_batch(ReplayContext& ctx, std::span<const Event> batch, std::span<const NodeId> pool,
                        int samples, Rng* rng, bool with_nll, bool exact)
{
    ensure_pool(ctx, pool);
    PlainTotals out;
    double log_sum = 0.0;
    for (const auto& e : batch) {
        ctx.ensure_node(std::max(e.u, e.v));
        if (with_nll) {
            const double lambda = ctx.intensity(e.u, e.v, e.k);
            if (lambda < kLogEpsilon) ++out.underflows;
            log_sum += std::log(lambda + kLogEpsilon);
        }
        if (rng || exact) {
            const auto start = Clock::now();
            out.survival += exact ? survival_expectation(ctx, e, pool) : survival_draw(ctx, e, pool, samples, *rng);
            out.survival_seconds += seconds_since(start);
        }
        ctx.advance(e);
    }
    out.event_nll = -log_sum;
    return out;
}

} // namespace

void TrainConfig::validate() const
{
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (survival_samples < 1) throw ConfigError("survival_samples must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("learning_rate must be finite and non-negative");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
    if (patience < 0) throw ConfigError("patience must be non-negative");
    if (dim < 1) throw ConfigError("dim must be positive");
    if (!(model.time_scale > 0.0)) throw ConfigError("time_scale must be positive");
}

std::vector<NodeId> batch_nodes(std::span<const Event> batch)
{
    std::vector<NodeId> nodes;
    nodes.reserve(batch.size() * 2);
    for (const auto& e : batch) {
        nodes.push_back(e.u);
        nodes.push_back(e.v);
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    return nodes;
}

std::vector<NodeId> survival_candidates(std::span<const NodeId> pool, const Event& e)
{
    std::vector<NodeId> out;
    out.reserve(pool.size());
    for (const auto w : pool)
        if (w != e.u && w != e.v) out.push_back(w);
    return out;
}

double survival_draw(const ReplayContext& ctx, const Event& e, std::span<const NodeId> pool, int samples, Rng& rng)
{
    if (samples < 1) throw ConfigError("survival_samples must be positive");
    const auto cand = checked_candidates(pool, e);
    std::uniform_int_distribution<std::size_t> pick(0, cand.size() - 1);
    double u_surv = 0.0;
    double v_surv = 0.0;
    for (int s = 0; s < samples; ++s) {
        const NodeId u_other = cand[pick(rng)];
        const NodeId v_other = cand[pick(rng)];
        for (int k = 0; k < kNumEventTypes; ++k) {
            const auto type = event_type_from_index(k);
            u_surv += ctx.intensity(e.u, v_other, type);
            v_surv += ctx.intensity(u_other, e.v, type);
        }
    }
    return (u_surv + v_surv) * (1.0 / samples);
}

double survival_expectation(const ReplayContext& ctx, const Event& e, std::span<const NodeId> pool)
{
    const auto cand = survival_candidates(pool, e);
    if (cand.empty()) return 0.0;
    double sum = 0.0;
    for (const auto w : cand)
        for (int k = 0; k < kNumEventTypes; ++k) {
            const auto type = event_type_from_index(k);
            sum += ctx.intensity(e.u, w, type) + ctx.intensity(w, e.v, type);
        }
    return sum / static_cast<double>(cand.size());
}

double event_nll(ReplayContext& ctx, std::span<const Event> batch, std::size_t* underflows)
{
    const auto totals = plain_batch(ctx, batch, {}, 1, nullptr, true, false);
    if (underflows) *underflows += totals.underflows;
    return totals.event_nll;
}

double survival_mc(ReplayContext& ctx, std::span<const Event> batch, std::span<const NodeId> pool, int samples,
                   Rng& rng)
{
    return plain_batch(ctx, batch, pool, samples, &rng, false, false).survival;
}

double survival_exact(ReplayContext& ctx, std::span<const Event> batch, std::span<const NodeId> pool)
{
    if (ctx.size() > 512) throw ConfigError("survival_exact is limited to graphs of at most 512 nodes");
    return plain_batch(ctx, batch, pool, 1, nullptr, false, true).survival;
}

BatchLoss record_batch_loss(TapedBatch& taped, std::span<const Event> batch, std::span<const NodeId> pool,
                            int samples, Rng& rng, std::vector<double>* alg1_lambdas)
{
    if (batch.empty()) throw std::invalid_argument("empty batch");
    if (samples < 1) throw ConfigError("survival_samples must be positive");
    const bool replaying = alg1_lambdas && !alg1_lambdas->empty();
    if (replaying && alg1_lambdas->size() != batch.size())
        throw std::invalid_argument("alg1_lambdas does not match the batch length");

    auto& ctx = taped.context();
    auto& tape = taped.tape();
    ensure_pool(ctx, pool);

    BatchLoss out;
    std::vector<Tape::Var> logs;
    std::vector<Tape::Var> surv;
    std::vector<Tape::Var> u_terms;
    std::vector<Tape::Var> v_terms;
    logs.reserve(batch.size());
    surv.reserve(batch.size());
    const double inv_n = 1.0 / samples;

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& e = batch[i];
        ctx.ensure_node(std::max(e.u, e.v));
        const auto lambda = taped.intensity(e.u, e.v, e.k);
        if (tape.scalar(lambda) < kLogEpsilon) ++out.underflow_events;
        logs.push_back(tape.log(lambda, kLogEpsilon));

        const auto start = Clock::now();
        const auto cand = checked_candidates(pool, e);
        std::uniform_int_distribution<std::size_t> pick(0, cand.size() - 1);
        u_terms.clear();
        v_terms.clear();
        for (int s = 0; s < samples; ++s) {
            const NodeId u_other = cand[pick(rng)];
            const NodeId v_other = cand[pick(rng)];
            for (int k = 0; k < kNumEventTypes; ++k) {
                const auto type = event_type_from_index(k);
                u_terms.push_back(taped.intensity(e.u, v_other, type));
                v_terms.push_back(taped.intensity(u_other, e.v, type));
            }
        }
        surv.push_back(tape.scale(tape.add(tape.sum(u_terms), tape.sum(v_terms)), inv_n));
        out.survival_seconds += seconds_since(start);

        const double fed = taped.advance(e, lambda, replaying ? std::optional((*alg1_lambdas)[i]) : std::nullopt);
        if (alg1_lambdas && !replaying) alg1_lambdas->push_back(fed);
    }
    if (alg1_lambdas && !replaying) alg1_lambdas->shrink_to_fit();

    out.event_nll = tape.scale(tape.sum(logs), -1.0);
    out.survival = tape.sum(surv);
    out.total = tape.add(out.event_nll, out.survival);
    return out;
}

BatchResult batch_gradient(ReplayContext& ctx, std::span<const Event> batch, std::span<const NodeId> pool,
                           int samples, Rng& rng, std::vector<double>* alg1_lambdas, bool attention_gradients)
{
    TapedBatch taped(ctx, attention_gradients);
    const auto loss = record_batch_loss(taped, batch, pool, samples, rng, alg1_lambdas);
    BatchResult out;
    auto& tape = taped.tape();
    out.event_nll = tape.scalar(loss.event_nll);
    out.survival = tape.scalar(loss.survival);
    out.total = tape.scalar(loss.total);
    out.underflow_events = loss.underflow_events;
    out.gradient = tape.backward(loss.total);
    return out;
}

std::vector<NodeId> training_pool(const ReplayContext& ctx, std::span<const Event> batch)
{
    auto nodes = batch_nodes(batch);
    const bool starved = std::any_of(batch.begin(), batch.end(), [&](const Event& e) {
        return survival_candidates(nodes, e).empty();
    });
    if (!starved) return nodes;
    auto seen = ctx.seen_nodes();
    std::vector<NodeId> merged;
    std::set_union(nodes.begin(), nodes.end(), seen.begin(), seen.end(), std::back_inserter(merged));
    return merged;
}

LossReport evaluate_loss(ReplayContext& ctx, const EventLog& log, const TrainConfig& config)
{
    config.validate();
    const auto start = Clock::now();
    auto rng = epoch_rng(config.seed, 0x76616c6964ULL);
    LossReport report;
    const std::span<const Event> events(log.events);
    for (std::size_t b = 0; b < events.size(); b += static_cast<std::size_t>(config.batch_size)) {
        const auto batch = events.subspan(b, std::min<std::size_t>(config.batch_size, events.size() - b));
        const auto pool = training_pool(ctx, batch);
        const auto totals = plain_batch(ctx, batch, pool, config.survival_samples, &rng, true, false);
        report.event_nll += totals.event_nll;
        report.survival += totals.survival;
        report.total += totals.event_nll + totals.survival;
        report.underflow_events += totals.underflows;
        report.survival_seconds += totals.survival_seconds;
        report.events_processed += batch.size();
    }
    report.seconds = seconds_since(start);
    return report;
}

TrainResult train(const TrainData& data, const TrainConfig& config, std::optional<ModelParams> init,
                  const EpochCallback& on_epoch)
{
    config.validate();
    if (data.train.empty()) throw DataError("training log is empty");
    const NodeId n0 = data.n0 >= 0 ? data.n0 : node_extent(data.train, data.a0);

    TrainResult result;
    if (init) {
        init->validate();
        if (init->dim() != config.dim)
            throw ConfigError("initial parameters have d=" + std::to_string(init->dim()) + ", config asks for " +
                              std::to_string(config.dim));
        result.params = std::move(*init);
    } else {
        result.params = ModelParams::init(n0, config.dim, config.seed, config.model);
    }
    auto& params = result.params;

    const double t_start = data.train.horizon.first;
    const bool early_stop = data.validation && !data.validation->empty() && config.patience > 0;
    double best_val = std::numeric_limits<double>::infinity();
    ModelParams best_params = params;
    int stale = 0;
    const std::span<const Event> events(data.train.events);
    const auto m = static_cast<std::size_t>(config.batch_size);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto start = Clock::now();
        auto rng = epoch_rng(config.seed, static_cast<std::uint64_t>(epoch));
        ReplayContext ctx(params, data.a0, t_start, n0);
        // One tape per epoch: truncating keeps its buffers, so large batches do not re-fault fresh pages.
        TapedBatch taped(ctx, config.attention_gradients);
        LossReport report;
        report.epoch = epoch;

        for (std::size_t b = 0; b < events.size(); b += m) {
            const auto batch = events.subspan(b, std::min(m, events.size() - b));
            const auto pool = training_pool(ctx, batch);
            BatchResult step;
            try {
                taped.truncate();
                const auto loss = record_batch_loss(taped, batch, pool, config.survival_samples, rng);
                auto& tape = taped.tape();
                step.event_nll = tape.scalar(loss.event_nll);
                step.survival = tape.scalar(loss.survival);
                step.total = tape.scalar(loss.total);
                step.underflow_events = loss.underflow_events;
                report.survival_seconds += loss.survival_seconds;
                step.gradient = tape.backward(loss.total);
            } catch (const NumericError& err) {
                throw DivergenceError("epoch " + std::to_string(epoch) + ", batch starting at event " +
                                          std::to_string(b) + ": " + err.what(),
                                      params);
            }
            if (!std::isfinite(step.total))
                throw DivergenceError("epoch " + std::to_string(epoch) + ": non-finite loss", params);

            report.event_nll += step.event_nll;
            report.survival += step.survival;
            report.total += step.total;
            report.underflow_events += step.underflow_events;
            report.events_processed += batch.size();

            if (config.learning_rate == 0.0) continue;
            if (config.clip_norm) {
                const double norm = step.gradient.norm();
                if (norm > *config.clip_norm) step.gradient.scale(*config.clip_norm / norm);
            }
            ModelParams before = params;
            sgd_step(params, step.gradient, config.learning_rate);
            // softplus(-700) is still a positive double, so psi stays > 0.
            params.psi_raw = params.psi_raw.cwiseMax(-700.0);
            if (!params.all_finite())
                throw DivergenceError("epoch " + std::to_string(epoch) + ": parameters became non-finite",
                                      std::move(before));
            ctx.refresh_initial_rows();
        }
        report.seconds = seconds_since(start);
        result.epochs.push_back(report);
        if (on_epoch) on_epoch(report, params);

        if (early_stop) {
            ReplayContext vctx(params, data.a0, t_start, n0);
            for (const auto& e : data.train.events) vctx.advance(e);
            const double val = evaluate_loss(vctx, *data.validation, config).mean_total();
            if (val < best_val) {
                best_val = val;
                best_params = params;
                result.best_epoch = epoch;
                stale = 0;
            } else if (++stale >= config.patience) {
                result.stopped_early = epoch < config.epochs;
                break;
            }
        } else {
            result.best_epoch = epoch;
        }
    }
    if (early_stop && result.best_epoch > 0) params = std::move(best_params);
    return result;
}

std::vector<ProbeRow> step_complexity_probe(const TrainConfig& config, std::span<const std::size_t> sizes,
                                            const ProbeSetup& setup)
{
    TrainConfig cfg = config;
    cfg.epochs = 1;
    cfg.patience = 0;
    std::vector<ProbeRow> rows;
    for (const auto size : sizes) {
        const auto data = benchmark_log(setup.n_nodes, size, setup.seed);
        const auto start = Clock::now();
        const auto result = train(TrainData{data.log, data.a0, setup.n_nodes}, cfg);
        ProbeRow row;
        row.events = size;
        row.batch_size = cfg.batch_size;
        row.samples = cfg.survival_samples;
        row.seconds = seconds_since(start);
        const auto batches = (size + static_cast<std::size_t>(cfg.batch_size) - 1) / cfg.batch_size;
        row.seconds_per_batch = row.seconds / static_cast<double>(std::max<std::size_t>(batches, 1));
        row.survival_seconds = result.epochs.empty() ? 0.0 : result.epochs.front().survival_seconds;
        rows.push_back(row);
    }
    return rows;
}

LogLogFit fit_loglog(std::span<const ProbeRow> rows)
{
    if (rows.size() < 2) throw std::invalid_argument("log-log fit needs at least two rows");
    const auto n = static_cast<double>(rows.size());
    double sx = 0.0, sy = 0.0;
    for (const auto& r : rows) {
        if (r.events == 0 || !(r.seconds > 0.0)) throw std::invalid_argument("log-log fit needs positive values");
        sx += std::log(static_cast<double>(r.events));
        sy += std::log(r.seconds);
    }
    const double mx = sx / n;
    const double my = sy / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& r : rows) {
        const double dx = std::log(static_cast<double>(r.events)) - mx;
        const double dy = std::log(r.seconds) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    LogLogFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

void write_training_curve(std::span<const LossReport> reports, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.precision(17);
    out << "epoch,event_nll,survival,total,seconds\n";
    for (const auto& r : reports)
        out << r.epoch << ',' << r.event_nll << ',' << r.survival << ',' << r.total << ',' << r.seconds << '\n';
}

} // namespace dyrep
