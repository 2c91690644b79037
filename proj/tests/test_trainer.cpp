#include <dyrep/synthetic.hpp>
#include <dyrep/trainer.hpp>

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

using namespace dyrep;
using dyrep::test::ev;

namespace {

// Zero parameters with both psi set to `psi`: every intensity is psi * log 2.
ModelParams flat_params(NodeId n, int d, double psi = 1.0)
{
    auto p = ModelParams::zeros(n, d);
    p.psi_raw.setConstant(ModelParams::inverse_softplus(psi));
    return p;
}

GeneratedData small_hawkes(double horizon = 100.0, std::uint64_t seed = 3)
{
    GeneratorConfig g;
    g.n = 20;
    g.base_rates = planted_rates(20, 4, 0.5, 0.05);
    g.excitation = 0.1;
    g.decay = 1.0;
    g.assoc_rate = 0.2;
    g.assoc_boost = 0.2;
    g.initial_edge_prob = 0.1;
    g.horizon = horizon;
    g.seed = seed;
    return generate(g);
}

TrainConfig quick_config()
{
    TrainConfig c;
    c.dim = 8;
    c.batch_size = 100;
    c.epochs = 3;
    c.patience = 0;
    c.seed = 5;
    return c;
}

template <class F>
double min_seconds(int reps, F&& f)
{
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < reps; ++r) {
        const auto start = std::chrono::steady_clock::now();
        f();
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    return best;
}

} // namespace

TEST(EventNll, SingleEventZeroParameters)
{
    const auto p = flat_params(2, 4);
    ReplayContext ctx(p, {});
    const std::vector<Event> batch{ev(0, 1, 1.0)};
    EXPECT_NEAR(event_nll(ctx, batch), -std::log(std::log(2.0)), 1e-12);
    EXPECT_NEAR(-std::log(std::log(2.0)), 0.36651, 5e-6);
}

TEST(EventNll, AdditiveUnderZeroParameters)
{
    const auto p = flat_params(3, 4);
    ReplayContext one(p, {}), two(p, {});
    const std::vector<Event> single{ev(0, 1, 1.0)};
    const std::vector<Event> pair{ev(0, 1, 1.0), ev(0, 1, 2.0)};
    EXPECT_DOUBLE_EQ(event_nll(two, pair), 2.0 * event_nll(one, single));
}

TEST(EventNll, MatchesPerEventSum)
{
    Adjacency a0;
    a0.add(1, 2);
    a0.normalize();
    const auto log = dyrep::test::random_log(7, 60, 4, 0.2, a0);
    const auto p = dyrep::test::random_params(7, 5, 8, 0.5);

    ReplayContext oracle(p, a0);
    double want = 0.0;
    for (const auto& e : log.events) {
        want -= std::log(oracle.intensity(e.u, e.v, e.k) + kLogEpsilon);
        oracle.advance(e);
    }
    ReplayContext ctx(p, a0);
    EXPECT_NEAR(event_nll(ctx, log.events), want, 1e-10 * std::abs(want));

    // the taped path records the same value
    ReplayContext taped_ctx(p, a0);
    TapedBatch taped(taped_ctx);
    Rng rng(1);
    const std::vector<NodeId> pool{0, 1, 2, 3, 4, 5, 6};
    const auto loss = record_batch_loss(taped, log.events, pool, 2, rng);
    EXPECT_NEAR(taped.tape().scalar(loss.event_nll), want, 1e-10 * std::abs(want));
}

TEST(SurvivalMc, ThreeNodesOneSample)
{
    const auto p = flat_params(3, 4);
    ReplayContext ctx(p, {});
    Rng rng(0);
    const std::vector<Event> batch{ev(0, 1, 1.0)};
    const std::vector<NodeId> pool{0, 1, 2};
    const double got = survival_mc(ctx, batch, pool, 1, rng);
    EXPECT_NEAR(got, 4.0 * std::log(2.0), 1e-12);
    EXPECT_NEAR(got, 2.77259, 5e-6);
}

TEST(SurvivalMc, VanishingIntensity)
{
    auto p = ModelParams::zeros(4, 3);
    p.V.setOnes();
    p.omega0.setConstant(-1000.0);
    p.omega1.setConstant(-1000.0);
    ReplayContext ctx(p, {});
    Rng rng(0);
    const std::vector<Event> batch{ev(0, 1, 1.0)};
    const std::vector<NodeId> pool{0, 1, 2, 3};
    const double got = survival_mc(ctx, batch, pool, 3, rng);
    EXPECT_GE(got, 0.0);
    EXPECT_LT(got, 1e-300);
}

TEST(SurvivalMc, TooFewCandidates)
{
    const auto p = flat_params(2, 2);
    ReplayContext ctx(p, {});
    Rng rng(0);
    const std::vector<Event> batch{ev(0, 1, 1.0)};
    const std::vector<NodeId> pool{0, 1};
    EXPECT_THROW(survival_mc(ctx, batch, pool, 1, rng), DataError);
}

TEST(SurvivalMc, ConvergesToExact)
{
    const auto log = dyrep::test::random_log(10, 20, 6, 0.2);
    const auto p = dyrep::test::random_params(10, 4, 9, 0.8);
    std::vector<NodeId> pool(10);
    std::iota(pool.begin(), pool.end(), 0);
    ReplayContext exact_ctx(p, {}), mc_ctx(p, {});
    const double exact = survival_exact(exact_ctx, log.events, pool);
    Rng rng(17);
    const double mc = survival_mc(mc_ctx, log.events, pool, 4000, rng);
    EXPECT_NEAR(mc, exact, 0.01 * exact);
}

TEST(SurvivalMc, DrawMeanWithinStandardErrors)
{
    const auto log = dyrep::test::random_log(10, 40, 2, 0.2);
    const auto p = dyrep::test::random_params(10, 4, 3, 0.9);
    ReplayContext ctx(p, {});
    for (std::size_t i = 0; i < 30; ++i) ctx.advance(log.events[i]);
    const Event& e = log.events[30];
    std::vector<NodeId> pool(10);
    std::iota(pool.begin(), pool.end(), 0);
    Rng rng(23);
    const int draws = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < draws; ++i) {
        const double x = survival_draw(ctx, e, pool, 1, rng);
        sum += x;
        sq += x * x;
    }
    const double mean = sum / draws;
    const double se = std::sqrt((sq / draws - mean * mean) / draws);
    const double exact = survival_expectation(ctx, e, pool);
    EXPECT_LT(std::abs(mean - exact), 3.0 * se);
}

TEST(SurvivalExact, Cases)
{
    {
        const auto p = flat_params(2, 3);
        ReplayContext ctx(p, {});
        const std::vector<Event> batch{ev(0, 1, 1.0)};
        const std::vector<NodeId> pool{0, 1};
        EXPECT_EQ(survival_exact(ctx, batch, pool), 0.0);
    }
    for (const double psi : {1.0, 2.0, 0.25}) {
        const auto p = flat_params(3, 3, psi);
        ReplayContext ctx(p, {});
        const double lambda_star = psi * std::log(2.0);
        const std::vector<Event> batch{ev(0, 1, 1.0), ev(1, 2, 2.0)};
        const std::vector<NodeId> pool{0, 1, 2};
        EXPECT_NEAR(survival_exact(ctx, batch, pool), 2 * 4.0 * lambda_star, 1e-12);
    }
    const auto big = flat_params(600, 2);
    ReplayContext ctx(big, {});
    const std::vector<Event> batch{ev(0, 1, 1.0)};
    const std::vector<NodeId> pool{0, 1, 2};
    EXPECT_THROW(survival_exact(ctx, batch, pool), ConfigError);
}

TEST(TrainingPool, WidensWhenBatchTooSmall)
{
    const auto p = flat_params(5, 2);
    ReplayContext ctx(p, {});
    ctx.advance(ev(2, 3, 0.5));
    ctx.advance(ev(3, 4, 0.6));
    const std::vector<Event> batch{ev(0, 1, 1.0)};
    const auto pool = training_pool(ctx, batch);
    EXPECT_GE(pool.size(), 3u);
    EXPECT_TRUE(std::is_sorted(pool.begin(), pool.end()));

    const std::vector<Event> wide{ev(0, 1, 1.0), ev(2, 3, 2.0)};
    EXPECT_EQ(training_pool(ctx, wide), (std::vector<NodeId>{0, 1, 2, 3}));
}

TEST(BatchGradient, TotalIsExactSum)
{
    const auto log = dyrep::test::random_log(6, 30, 12, 0.2);
    const auto p = dyrep::test::random_params(6, 4, 1, 0.5);
    ReplayContext ctx(p, {});
    Rng rng(3);
    const std::vector<NodeId> pool{0, 1, 2, 3, 4, 5};
    const auto r = batch_gradient(ctx, log.events, pool, 3, rng);
    EXPECT_EQ(r.total, r.event_nll + r.survival);
}

TEST(Train, ZeroLearningRateIsIdentity)
{
    const auto data = small_hawkes(30.0);
    auto cfg = quick_config();
    cfg.learning_rate = 0.0;
    const auto init = ModelParams::init(20, cfg.dim, 11, cfg.model);
    const auto result = train(TrainData{data.log, data.a0, 20}, cfg, init);
    EXPECT_TRUE(bitwise_equal(result.params, init));
    EXPECT_EQ(result.epochs.size(), 3u);
}

TEST(Train, LossDecreases)
{
    const auto data = small_hawkes(150.0);
    auto cfg = quick_config();
    cfg.epochs = 5;
    // at 0.01 the loss flattens after two epochs and the tail is sampling noise
    cfg.learning_rate = 0.003;
    const auto init = ModelParams::init(20, cfg.dim, cfg.seed, cfg.model);

    ReplayContext ctx(init, data.a0, data.log.horizon.first, 20);
    const double before = evaluate_loss(ctx, data.log, cfg).mean_total();
    const auto result = train(TrainData{data.log, data.a0, 20}, cfg, init);
    ASSERT_EQ(result.epochs.size(), 5u);
    int decreases = 0;
    double prev = before;
    for (const auto& r : result.epochs) {
        if (r.mean_total() < prev) ++decreases;
        prev = r.mean_total();
    }
    EXPECT_GE(decreases, 4) << "initial " << before << " last " << prev;
}

TEST(Train, ReportsDecompose)
{
    const auto data = small_hawkes(30.0);
    const auto result = train(TrainData{data.log, data.a0, 20}, quick_config());
    for (const auto& r : result.epochs) {
        EXPECT_NEAR(r.total, r.event_nll + r.survival, 1e-12 * std::abs(r.total));
        EXPECT_EQ(r.events_processed, data.log.size());
    }
}

TEST(Train, SeedDeterminism)
{
    const auto data = small_hawkes(30.0);
    const auto cfg = quick_config();
    const auto a = train(TrainData{data.log, data.a0, 20}, cfg);
    const auto b = train(TrainData{data.log, data.a0, 20}, cfg);
    EXPECT_TRUE(bitwise_equal(a.params, b.params));
    ASSERT_EQ(a.epochs.size(), b.epochs.size());
    for (std::size_t i = 0; i < a.epochs.size(); ++i) EXPECT_EQ(a.epochs[i].total, b.epochs[i].total);

    auto other = cfg;
    other.seed = cfg.seed + 1;
    EXPECT_FALSE(bitwise_equal(train(TrainData{data.log, data.a0, 20}, other).params, a.params));
}

TEST(Train, PsiStaysPositive)
{
    const auto data = small_hawkes(30.0);
    auto cfg = quick_config();
    cfg.learning_rate = 5.0;
    cfg.clip_norm.reset();
    std::vector<double> psis;
    try {
        train(TrainData{data.log, data.a0, 20}, cfg, std::nullopt, [&](const LossReport&, const ModelParams& p) {
            psis.push_back(p.psi(EventType::association));
            psis.push_back(p.psi(EventType::communication));
        });
    } catch (const DivergenceError& err) {
        EXPECT_TRUE(err.last_good().all_finite());
    }
    for (const double psi : psis) EXPECT_GT(psi, 0.0);
}

TEST(Train, EarlyStoppingKeepsBestEpoch)
{
    const auto data = small_hawkes(60.0);
    const auto split = split_slots(data.log, 0.8, 1);
    auto cfg = quick_config();
    cfg.epochs = 6;
    cfg.patience = 1;
    const auto result = train(TrainData{split.train, data.a0, 20, &split.test_slots[0]}, cfg);
    EXPECT_GE(result.best_epoch, 1);
    EXPECT_LE(result.best_epoch, static_cast<int>(result.epochs.size()));
}

TEST(Train, Validation)
{
    const auto data = small_hawkes(10.0);
    auto cfg = quick_config();
    cfg.batch_size = 0;
    EXPECT_THROW(train(TrainData{data.log, data.a0, 20}, cfg), ConfigError);
    cfg = quick_config();
    const EventLog empty;
    EXPECT_THROW(train(TrainData{empty, data.a0, 20}, cfg), DataError);
    EXPECT_THROW(train(TrainData{data.log, data.a0, 20}, cfg, ModelParams::zeros(20, 3)), ConfigError);
}

TEST(Probe, RowsMonotone)
{
    auto cfg = quick_config();
    const std::vector<std::size_t> sizes{1000, 10000};
    const auto rows = step_complexity_probe(cfg, sizes);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].events, 1000u);
    EXPECT_LT(rows[0].seconds, rows[1].seconds);
    const auto fit = fit_loglog(rows);
    EXPECT_GT(fit.slope, 0.0);
}

TEST(Probe, FitRecoversPowerLaw)
{
    std::vector<ProbeRow> rows;
    for (const std::size_t n : {1000u, 10000u, 100000u}) {
        ProbeRow r;
        r.events = n;
        r.seconds = 3e-4 * std::pow(static_cast<double>(n), 1.1);
        rows.push_back(r);
    }
    const auto fit = fit_loglog(rows);
    EXPECT_NEAR(fit.slope, 1.1, 1e-12);
    EXPECT_NEAR(fit.intercept, std::log(3e-4), 1e-10);
    EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);
    EXPECT_THROW(fit_loglog(std::span<const ProbeRow>(rows).first(1)), std::invalid_argument);
}

TEST(Probe, DoublingEventsDoublesTime)
{
    auto cfg = quick_config();
    cfg.epochs = 1;
    const auto small = benchmark_log(20, 1000, 7);
    const auto large = benchmark_log(20, 2000, 7);
    const double t1 = min_seconds(5, [&] { train(TrainData{small.log, small.a0, 20}, cfg); });
    const double t2 = min_seconds(5, [&] { train(TrainData{large.log, large.a0, 20}, cfg); });
    const double ratio = t2 / t1;
    EXPECT_GE(ratio, 1.6);
    EXPECT_LE(ratio, 2.6);
}

TEST(Probe, DoublingSamplesDoublesSurvivalTime)
{
    auto cfg = quick_config();
    cfg.epochs = 1;
    cfg.batch_size = 200;
    cfg.survival_samples = 10;
    const auto data = benchmark_log(20, 4000, 7);
    const auto survival_time = [&](const TrainConfig& c) {
        double best = std::numeric_limits<double>::infinity();
        for (int r = 0; r < 3; ++r)
            best = std::min(best, train(TrainData{data.log, data.a0, 20}, c).epochs.front().survival_seconds);
        return best;
    };
    const double base = survival_time(cfg);
    auto doubled = cfg;
    doubled.survival_samples = 20;
    const double ratio = survival_time(doubled) / base;
    EXPECT_NEAR(ratio, 2.0, 0.6);
}

TEST(Probe, DoublingBatchDoublesBatchTime)
{
    // Below ~100 events a batch's tape fits in cache and the per-batch cost is a step lower.
    auto cfg = quick_config();
    cfg.epochs = 1;
    cfg.batch_size = 200;
    auto doubled = cfg;
    doubled.batch_size = 400;
    const auto data = benchmark_log(20, 8000, 7);
    const auto run = [&](const TrainConfig& c) { return train(TrainData{data.log, data.a0, 20}, c).epochs.front().seconds; };
    run(cfg);
    run(doubled);
    double t1 = std::numeric_limits<double>::infinity(), t2 = t1;
    for (int r = 0; r < 3; ++r) {
        t1 = std::min(t1, run(cfg) / 40.0);
        t2 = std::min(t2, run(doubled) / 20.0);
    }
    EXPECT_NEAR(t2 / t1, 2.0, 0.6) << t1 << " " << t2;
}

TEST(TrainingCurve, Header)
{
    dyrep::test::TempDir dir("curve");
    LossReport r;
    r.epoch = 1;
    r.event_nll = 1.5;
    r.survival = 0.5;
    r.total = 2.0;
    const std::vector<LossReport> reports{r};
    write_training_curve(reports, dir / "curve.csv");
    const auto text = dyrep::test::read_text(dir / "curve.csv");
    EXPECT_EQ(text.substr(0, text.find('\n')), "epoch,event_nll,survival,total,seconds");
    EXPECT_NE(text.find("\n1,1.5,0.5,2,"), std::string::npos) << text;
}
