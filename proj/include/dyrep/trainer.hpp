#pragma once

#include <dyrep/event_stream.hpp>
#include <dyrep/params.hpp>
#include <dyrep/replay.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace dyrep {

using Rng = std::mt19937_64;

inline constexpr double kLogEpsilon = 1e-30;

struct TrainConfig {
    int batch_size = 200;
    int survival_samples = 5;
    double learning_rate = 0.01;
    int epochs = 10;
    std::uint64_t seed = 0;
    std::optional<double> clip_norm = 5.0;
    /// Early stopping on held-out NLL; 0 disables. Needs a validation log.
    int patience = 3;
    int dim = 32;
    ModelOptions model;
    /// Differentiate through the S updates instead of treating S as data.
    bool attention_gradients = false;

    void validate() const;
};

struct LossReport {
    int epoch = 0;
    double event_nll = 0.0;
    double survival = 0.0;
    double total = 0.0;
    std::size_t events_processed = 0;
    std::size_t underflow_events = 0;
    double seconds = 0.0;
    double survival_seconds = 0.0;

    double mean_total() const { return events_processed ? total / static_cast<double>(events_processed) : 0.0; }
};

/// Loss nodes recorded for one minibatch.
struct BatchLoss {
    Tape::Var event_nll;
    Tape::Var survival;
    Tape::Var total;
    std::size_t underflow_events = 0;
    double survival_seconds = 0.0;
};

/// Distinct nodes of a batch in ascending order.
std::vector<NodeId> batch_nodes(std::span<const Event> batch);

/// pool minus the event's endpoints.
std::vector<NodeId> survival_candidates(std::span<const NodeId> pool, const Event& e);

/// One draw of the sampled survival term for a single event against the current (frozen) state:
/// (u_surv + v_surv) / N.
double survival_draw(const ReplayContext& ctx, const Event& e, std::span<const NodeId> pool, int samples, Rng& rng);

/// Expectation of survival_draw: for each type k, the mean over the candidate
/// nodes w of lambda_k(u, w) + lambda_k(w, v).
double survival_expectation(const ReplayContext& ctx, const Event& e, std::span<const NodeId> pool);

/// -sum log(lambda_p + eps), advancing the context through the batch.
double event_nll(ReplayContext& ctx, std::span<const Event> batch, std::size_t* underflows = nullptr);

/// Sampled survival term over a batch, advancing the context. Pool defaults to the batch nodes.
double survival_mc(ReplayContext& ctx, std::span<const Event> batch, std::span<const NodeId> pool, int samples,
                   Rng& rng);

/// Exact expectation of survival_mc over a batch (small graphs only).
double survival_exact(ReplayContext& ctx, std::span<const Event> batch, std::span<const NodeId> pool);

/// Records -sum log lambda + L_surv for `batch` and advances the replay.
/// `alg1_lambdas`, when given, supplies the attention-update intensities (one per
/// event) and receives the ones used when empty.
BatchLoss record_batch_loss(TapedBatch& taped, std::span<const Event> batch, std::span<const NodeId> pool,
                            int samples, Rng& rng, std::vector<double>* alg1_lambdas = nullptr);

/// Loss value and gradient for one batch starting from `ctx` (which advances).
struct BatchResult {
    double event_nll = 0.0;
    double survival = 0.0;
    double total = 0.0;
    std::size_t underflow_events = 0;
    GradientSet gradient;
};

BatchResult batch_gradient(ReplayContext& ctx, std::span<const Event> batch, std::span<const NodeId> pool,
                           int samples, Rng& rng, std::vector<double>* alg1_lambdas = nullptr,
                           bool attention_gradients = false);

/// Pool used by the trainer: batch nodes, widened to every seen node when
/// some event would otherwise have no candidates.
std::vector<NodeId> training_pool(const ReplayContext& ctx, std::span<const Event> batch);

class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, ModelParams last_good)
        : NumericError(what), last_good_(std::move(last_good))
    {
    }
    const ModelParams& last_good() const noexcept { return last_good_; }

private:
    ModelParams last_good_;
};

struct TrainResult {
    ModelParams params;
    std::vector<LossReport> epochs;
    int best_epoch = 0;
    bool stopped_early = false;
};

struct TrainData {
    const EventLog& train;
    const Adjacency& a0;
    /// Node count the parameters cover (rows of V).
    NodeId n0 = -1;
    const EventLog* validation = nullptr;
};

using EpochCallback = std::function<void(const LossReport&, const ModelParams&)>;

/// Minibatch SGD over contiguous time slices.
TrainResult train(const TrainData& data, const TrainConfig& config, std::optional<ModelParams> init = std::nullopt,
                  const EpochCallback& on_epoch = {});

/// Forward-only NLL of `log` continuing from `ctx` (advances the context).
LossReport evaluate_loss(ReplayContext& ctx, const EventLog& log, const TrainConfig& config);

struct ProbeRow {
    std::size_t events = 0;
    int batch_size = 0;
    int samples = 0;
    double seconds = 0.0;
    double seconds_per_batch = 0.0;
    double survival_seconds = 0.0;
};

struct ProbeSetup {
    NodeId n_nodes = 20;
    std::uint64_t seed = 7;
};

/// One training epoch per size over synthetic logs, timed.
std::vector<ProbeRow> step_complexity_probe(const TrainConfig& config, std::span<const std::size_t> sizes,
                                            const ProbeSetup& setup = {});

/// Least-squares fit of log(seconds) on log(events).
struct LogLogFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};
LogLogFit fit_loglog(std::span<const ProbeRow> rows);

void write_training_curve(std::span<const LossReport> reports, const std::filesystem::path& path);

} // namespace dyrep
