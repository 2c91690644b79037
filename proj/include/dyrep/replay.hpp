#pragma once

#include <dyrep/embedding_model.hpp>
#include <dyrep/event_stream.hpp>
#include <dyrep/graph_state.hpp>
#include <dyrep/params.hpp>
#include <dyrep/tape.hpp>

#include <optional>
#include <vector>

namespace dyrep {

/// Mutable replay state (A, S, embeddings) driven by a fixed parameter set.
///
/// Per event: the intensity is taken from pre-event embeddings and drives the
/// attention update of (A, S); the embedding update uses the pre-event embeddings
/// and pre-event S. Nodes referenced beyond the current size are added on demand.
class ReplayContext {
public:
    ReplayContext(const ModelParams& params, const Adjacency& a0, double t_start = 0.0, NodeId n = -1,
                  GraphState::Storage storage = GraphState::Storage::automatic);

    const ModelParams& params() const noexcept { return *params_; }
    const GraphState& state() const noexcept { return state_; }
    const EmbeddingStore& store() const noexcept { return store_; }
    EmbeddingStore& store() noexcept { return store_; }
    GraphState& state() noexcept { return state_; }

    NodeId size() const noexcept { return store_.size(); }
    void ensure_node(NodeId v);

    double intensity(NodeId u, NodeId v, EventType k) const;

    /// Advances through `e` and returns the intensity fed to the attention update.
    /// `alg1_lambda` replaces that intensity when given.
    double advance(const Event& e, std::optional<double> alg1_lambda = std::nullopt);

    /// Nodes that exist in A0 or have taken part in a replayed event.
    bool seen(NodeId v) const noexcept
    {
        return v >= 0 && static_cast<std::size_t>(v) < seen_.size() && seen_[static_cast<std::size_t>(v)];
    }
    std::vector<NodeId> seen_nodes() const;
    /// Whether node v has had at least one replayed event.
    bool active(NodeId v) const noexcept
    {
        return v >= 0 && static_cast<std::size_t>(v) < active_.size() && active_[static_cast<std::size_t>(v)];
    }

    /// Flags both endpoints as seen and active.
    void mark_event(const Event& e);

    /// Re-reads rows still at their initial value from V (after a parameter step).
    void refresh_initial_rows();

private:
    const ModelParams* params_;
    GraphState state_;
    EmbeddingStore store_;
    std::vector<std::uint8_t> seen_;
    std::vector<std::uint8_t> active_;
};

/// Records one minibatch of a replay on a tape.
///
/// Embeddings carried in from earlier batches enter as constants, so no gradient
/// crosses a batch boundary. Rows still at their initial value enter as V leaves.
/// S is data by default; with `attention_gradients` the S rows updated inside the
/// batch are recorded too, so gradients reach the intensities fed to the attention update.
class TapedBatch {
public:
    using Var = Tape::Var;

    explicit TapedBatch(ReplayContext& ctx, bool attention_gradients = false);

    bool attention_gradients() const noexcept { return attention_gradients_; }

    Tape& tape() noexcept { return tape_; }
    ReplayContext& context() noexcept { return *ctx_; }

    Var embedding(NodeId v);
    Var intensity(NodeId u, NodeId v, EventType k);

    /// S row of `node` aligned with its neighbourhood (a constant unless updated in this batch).
    Var attention(NodeId node);

    /// Taped counterpart of ReplayContext::advance. `lambda` is the event's own
    /// intensity node (from pre-event state); the attention update receives its value, or
    /// `alg1_lambda` when given (taped as a constant).
    double advance(const Event& e, Var lambda, std::optional<double> alg1_lambda = std::nullopt);

    /// Drops the recorded graph; carried-in embeddings become constants.
    void truncate();

private:
    ReplayContext* ctx_;
    Tape tape_;
    bool attention_gradients_ = false;
    std::vector<Var> rows_;
    std::vector<Var> s_rows_;
};

} // namespace dyrep
