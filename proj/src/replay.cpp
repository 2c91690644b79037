#include <dyrep/replay.hpp>

#include <algorithm>
#include <array>

namespace dyrep {

ReplayContext::ReplayContext(const ModelParams& params, const Adjacency& a0, double t_start, NodeId n,
                             GraphState::Storage storage)
    : params_(&params)
{
    NodeId extent = a0.n;
    for (const auto& [a, b] : a0.edges) extent = std::max(extent, b + 1);
    if (n < 0) n = std::max(extent, params.n0());
    n = std::max(n, extent);
    state_ = init_state(a0, n, storage);
    store_ = EmbeddingStore::from_params(params, t_start, n);
    seen_.assign(static_cast<std::size_t>(n), 0);
    active_.assign(static_cast<std::size_t>(n), 0);
    for (const auto& [a, b] : a0.edges) {
        seen_[static_cast<std::size_t>(a)] = 1;
        seen_[static_cast<std::size_t>(b)] = 1;
    }
}

void ReplayContext::ensure_node(NodeId v)
{
    if (v < 0) throw std::out_of_range("negative node id");
    if (v < size()) return;
    state_.grow(v + 1);
    store_.grow(v + 1);
    seen_.resize(static_cast<std::size_t>(v + 1), 0);
    active_.resize(static_cast<std::size_t>(v + 1), 0);
}

void ReplayContext::mark_event(const Event& e)
{
    for (const auto v : {e.u, e.v}) {
        seen_[static_cast<std::size_t>(v)] = 1;
        active_[static_cast<std::size_t>(v)] = 1;
    }
}

void ReplayContext::refresh_initial_rows()
{
    const auto rows = std::min(size(), params_->n0());
    for (NodeId v = 0; v < rows; ++v)
        if (store_.initial[static_cast<std::size_t>(v)]) store_.z.row(v) = params_->V.row(v);
}

double ReplayContext::intensity(NodeId u, NodeId v, EventType k) const
{
    return dyrep::intensity(*params_, store_, u, v, k);
}

double ReplayContext::advance(const Event& e, std::optional<double> alg1_lambda)
{
    ensure_node(std::max(e.u, e.v));
    const double lambda = intensity(e.u, e.v, e.k);
    auto [zu, zv] = updated_embeddings(*params_, store_, state_, e);
    const double fed = alg1_lambda.value_or(lambda);
    state_.apply_event(e, fed);
    store_.z.row(e.u) = zu.transpose();
    store_.z.row(e.v) = zv.transpose();
    store_.last_event_time[e.u] = e.t;
    store_.last_event_time[e.v] = e.t;
    store_.initial[static_cast<std::size_t>(e.u)] = 0;
    store_.initial[static_cast<std::size_t>(e.v)] = 0;
    mark_event(e);
    return fed;
}

std::vector<NodeId> ReplayContext::seen_nodes() const
{
    std::vector<NodeId> out;
    for (std::size_t i = 0; i < seen_.size(); ++i)
        if (seen_[i]) out.push_back(static_cast<NodeId>(i));
    return out;
}

TapedBatch::TapedBatch(ReplayContext& ctx, bool attention_gradients)
    : ctx_(&ctx), tape_(ctx.params()), attention_gradients_(attention_gradients),
      rows_(static_cast<std::size_t>(ctx.size())), s_rows_(static_cast<std::size_t>(ctx.size()))
{
}

TapedBatch::Var TapedBatch::attention(NodeId node)
{
    const auto idx = static_cast<std::size_t>(node);
    if (idx < s_rows_.size() && s_rows_[idx].valid()) return s_rows_[idx];
    const auto s = ctx_->state().row_values(node);
    return tape_.constant(Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size())));
}

TapedBatch::Var TapedBatch::embedding(NodeId v)
{
    ctx_->store().check(v);
    if (static_cast<std::size_t>(v) >= rows_.size()) rows_.resize(static_cast<std::size_t>(ctx_->size()));
    auto& slot = rows_[static_cast<std::size_t>(v)];
    if (slot.valid()) return slot;
    const auto& store = ctx_->store();
    if (store.initial[static_cast<std::size_t>(v)] && v < ctx_->params().n0())
        slot = tape_.param_row(v);
    else
        slot = tape_.constant(Vector(store.z.row(v).transpose()));
    return slot;
}

TapedBatch::Var TapedBatch::intensity(NodeId u, NodeId v, EventType k)
{
    const TapeBackend b{tape_};
    return pair_intensity(b, embedding(u), embedding(v), k);
}

double TapedBatch::advance(const Event& e, Var lambda, std::optional<double> alg1_lambda)
{
    auto& ctx = *ctx_;
    ctx.ensure_node(std::max(e.u, e.v));
    if (rows_.size() < static_cast<std::size_t>(ctx.size())) rows_.resize(static_cast<std::size_t>(ctx.size()));

    auto& store = ctx.store();
    const double gap_u = e.t - store.last_event_time[e.u];
    const double gap_v = e.t - store.last_event_time[e.v];
    if (gap_u < 0.0 || gap_v < 0.0) throw DataError("event precedes a node's previous event (non-monotone replay)");

    const TapeBackend b{tape_};
    const auto summary = [&](NodeId node) {
        const auto nb = ctx.state().neighborhood(node);
        std::vector<Var> zs;
        zs.reserve(nb.size());
        for (const auto i : nb) zs.push_back(embedding(i));
        if (zs.empty()) return b.zeros();
        return neighborhood_summary(b, std::span<const Var>(zs), attention(node));
    };
    const Var h_u = summary(e.u);
    const Var h_v = summary(e.v);
    const Var new_u = propagate(b, h_v, embedding(e.u), gap_feature(ctx.params().options, gap_u));
    const Var new_v = propagate(b, h_u, embedding(e.v), gap_feature(ctx.params().options, gap_v));

    const double fed = alg1_lambda.value_or(tape_.scalar(lambda));
    const bool was_linked = ctx.state().linked(e.u, e.v);
    const bool new_edge = e.k == EventType::association;
    std::array<Var, 2> prev{};
    if (attention_gradients_ && (new_edge || was_linked)) {
        if (s_rows_.size() < static_cast<std::size_t>(ctx.size())) s_rows_.resize(static_cast<std::size_t>(ctx.size()));
        for (int side = 0; side < 2; ++side) {
            const NodeId j = side == 0 ? e.u : e.v;
            if (!ctx.state().neighborhood(j).empty()) prev[static_cast<std::size_t>(side)] = attention(j);
        }
    }
    ctx.state().apply_event(e, fed);
    if (attention_gradients_ && (new_edge || was_linked)) {
        const Var fed_var = alg1_lambda ? tape_.constant(*alg1_lambda) : lambda;
        for (int side = 0; side < 2; ++side) {
            const NodeId j = side == 0 ? e.u : e.v;
            const NodeId partner = side == 0 ? e.v : e.u;
            const auto nb = ctx.state().neighborhood(j);
            const auto pos = std::lower_bound(nb.begin(), nb.end(), partner) - nb.begin();
            s_rows_[static_cast<std::size_t>(j)] =
                tape_.attention_row(prev[static_cast<std::size_t>(side)], fed_var, pos, new_edge);
        }
    }

    store.z.row(e.u) = tape_.value(new_u).transpose();
    store.z.row(e.v) = tape_.value(new_v).transpose();
    store.last_event_time[e.u] = e.t;
    store.last_event_time[e.v] = e.t;
    store.initial[static_cast<std::size_t>(e.u)] = 0;
    store.initial[static_cast<std::size_t>(e.v)] = 0;
    rows_[static_cast<std::size_t>(e.u)] = new_u;
    rows_[static_cast<std::size_t>(e.v)] = new_v;
    ctx.mark_event(e);
    return fed;
}

void TapedBatch::truncate()
{
    tape_.clear();
    rows_.assign(static_cast<std::size_t>(ctx_->size()), Var{});
    s_rows_.assign(static_cast<std::size_t>(ctx_->size()), Var{});
}

} // namespace dyrep
