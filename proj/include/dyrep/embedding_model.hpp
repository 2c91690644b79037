#pragma once

#include <dyrep/event_stream.hpp>
#include <dyrep/graph_state.hpp>
#include <dyrep/math.hpp>
#include <dyrep/params.hpp>
#include <dyrep/tape.hpp>

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace dyrep {

/// Current node representations z^v and the time of each node's latest event.
struct EmbeddingStore {
    Matrix z;
    Vector last_event_time;
    /// Row still holds its initial V value (no update has touched it).
    std::vector<std::uint8_t> initial;
    double t_start = 0.0;

    /// Rows below n0 start at V, later rows (unseen nodes) at zero.
    static EmbeddingStore from_params(const ModelParams& p, double t_start = 0.0, NodeId n = -1);

    NodeId size() const noexcept { return static_cast<NodeId>(z.rows()); }
    Eigen::Index dim() const noexcept { return z.cols(); }
    void grow(NodeId new_n);
    void check(NodeId v) const;
};

/// Exogenous-drive input for an elapsed time.
inline double gap_feature(const ModelOptions& options, double gap)
{
    const double x = gap / options.time_scale;
    return options.log_gap ? std::log1p(x) : x;
}

// ---------------------------------------------------------------------------
// Backends. The model equations below are written once against this interface
// and evaluated either directly on Eigen vectors or recorded on a Tape.
// ---------------------------------------------------------------------------

struct EigenBackend {
    using vec = Vector;
    using scalar = double;

    const ModelParams& p;

    vec constant(const Vector& x) const { return x; }
    scalar element(const vec& x, Eigen::Index i) const { return x[i]; }
    static vec softmax(const vec& x)
    {
        vec e = (x.array() - x.maxCoeff()).exp().matrix();
        return e / e.sum();
    }
    vec matvec(ParamId w, const vec& x) const
    {
        switch (w) {
        case ParamId::W_struct: return p.W_struct * x;
        case ParamId::W_rec: return p.W_rec * x;
        default: return p.W_h * x;
        }
    }
    vec add_param(const vec& x, ParamId) const { return x + p.b_h; }
    vec scaled_param(ParamId, double c) const { return c * p.W_t; }
    scalar dot_param(ParamId w, const vec& x) const
    {
        return (w == ParamId::omega0 ? p.omega0 : p.omega1).dot(x);
    }
    vec add(const vec& a, const vec& b) const { return a + b; }
    vec tanh(const vec& x) const { return x.array().tanh().matrix(); }
    vec concat(const vec& a, const vec& b) const
    {
        vec out(a.size() + b.size());
        out << a, b;
        return out;
    }
    vec mul_scalar(const vec& x, scalar s) const { return x * s; }
    vec max(std::span<const vec> xs) const
    {
        vec out = xs.front();
        for (std::size_t i = 1; i < xs.size(); ++i) out = out.cwiseMax(xs[i]);
        return out;
    }
    scalar transfer(EventType k, scalar x) const { return dyrep::transfer(p.psi(k), x); }
    vec zeros() const { return Vector::Zero(p.dim()); }
};

struct TapeBackend {
    using vec = Tape::Var;
    using scalar = Tape::Var;

    Tape& tape;

    vec constant(const Vector& x) const { return tape.constant(x); }
    scalar element(vec x, Eigen::Index i) const { return tape.element(x, i); }
    vec softmax(vec x) const { return tape.softmax(x); }
    vec matvec(ParamId w, vec x) const { return tape.matvec(w, x); }
    vec add_param(vec x, ParamId b) const { return tape.add_param(x, b); }
    vec scaled_param(ParamId w, double c) const { return tape.scaled_param(w, c); }
    scalar dot_param(ParamId w, vec x) const { return tape.dot_param(w, x); }
    vec add(vec a, vec b) const { return tape.add(a, b); }
    vec tanh(vec x) const { return tape.tanh(x); }
    vec concat(vec a, vec b) const { return tape.concat(a, b); }
    vec mul_scalar(vec x, scalar s) const { return tape.mul_scalar(x, s); }
    vec max(std::span<const vec> xs) const { return tape.max(xs); }
    scalar transfer(EventType k, scalar x) const { return tape.transfer(k, x); }
    vec zeros() const { return tape.constant(Vector::Zero(tape.params().dim())); }
};

inline ParamId omega_id(EventType k) noexcept
{
    return k == EventType::association ? ParamId::omega0 : ParamId::omega1;
}

/// g_k = omega_k . [z_u; z_v]
template <class Backend>
typename Backend::scalar pair_score(const Backend& b, const typename Backend::vec& zu,
                                    const typename Backend::vec& zv, EventType k)
{
    return b.dot_param(omega_id(k), b.concat(zu, zv));
}

/// lambda_k = f_k(g_k)
template <class Backend>
typename Backend::scalar pair_intensity(const Backend& b, const typename Backend::vec& zu,
                                        const typename Backend::vec& zv, EventType k)
{
    return b.transfer(k, pair_score(b, zu, zv, k));
}

/// h_struct: elementwise max over neighbours of tanh(q_i (W_h z_i + b_h)), where
/// q is the softmax of the neighbours' S entries. Zero vector without neighbours.
template <class Backend>
typename Backend::vec neighborhood_summary(const Backend& b, std::span<const typename Backend::vec> neighbor_z,
                                           const typename Backend::vec& s_row)
{
    if (neighbor_z.empty()) return b.zeros();
    const auto q = b.softmax(s_row);
    std::vector<typename Backend::vec> messages;
    messages.reserve(neighbor_z.size());
    for (std::size_t i = 0; i < neighbor_z.size(); ++i) {
        const auto h = b.add_param(b.matvec(ParamId::W_h, neighbor_z[i]), ParamId::b_h);
        messages.push_back(b.tanh(b.mul_scalar(h, b.element(q, static_cast<Eigen::Index>(i)))));
    }
    return b.max(std::span<const typename Backend::vec>(messages));
}

/// z(t_p) = tanh(W_struct h_other + W_rec z_self + W_t * gap_input)
template <class Backend>
typename Backend::vec propagate(const Backend& b, const typename Backend::vec& h_other,
                                const typename Backend::vec& z_self, double gap_input)
{
    const auto structural = b.matvec(ParamId::W_struct, h_other);
    const auto recurrent = b.matvec(ParamId::W_rec, z_self);
    return b.tanh(b.add(b.add(structural, recurrent), b.scaled_param(ParamId::W_t, gap_input)));
}

// ---------------------------------------------------------------------------
// Direct evaluation against a store and graph state.
// ---------------------------------------------------------------------------

double compatibility(const ModelParams& p, const EmbeddingStore& store, NodeId u, NodeId v, EventType k);
double intensity(const ModelParams& p, const EmbeddingStore& store, NodeId u, NodeId v, EventType k);

/// Softmax of S over N_u as (neighbour, q) pairs in ascending neighbour order.
std::vector<std::pair<NodeId, double>> attention_coefficients(const GraphState& state, NodeId u);

Vector aggregate(const ModelParams& p, const EmbeddingStore& store, const GraphState& state, NodeId u);

/// Both endpoints' new embeddings from pre-event quantities, in (u, v) order.
std::pair<Vector, Vector> updated_embeddings(const ModelParams& p, const EmbeddingStore& store,
                                             const GraphState& state, const Event& e);

/// Applies the embedding update for `e` in place.
void apply_embedding_update(const ModelParams& p, EmbeddingStore& store, const GraphState& state, const Event& e);

EmbeddingStore update_embedding(const ModelParams& p, const EmbeddingStore& store, const GraphState& state,
                                const Event& e);

/// CSV "node_id,z_1..z_d,last_event_time".
void export_embeddings(const EmbeddingStore& store, const EventLog* labels, const std::filesystem::path& path);
std::string format_embeddings(const EmbeddingStore& store, const EventLog* labels);

} // namespace dyrep
