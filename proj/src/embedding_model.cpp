#include <dyrep/embedding_model.hpp>

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

namespace dyrep {

EmbeddingStore EmbeddingStore::from_params(const ModelParams& p, double t_start, NodeId n)
{
    if (n < 0) n = p.n0();
    EmbeddingStore store;
    store.t_start = t_start;
    store.z = Matrix::Zero(n, p.dim());
    const auto rows = std::min(n, p.n0());
    store.z.topRows(rows) = p.V.topRows(rows);
    store.last_event_time = Vector::Constant(n, t_start);
    store.initial.assign(static_cast<std::size_t>(n), 0);
    std::fill(store.initial.begin(), store.initial.begin() + rows, std::uint8_t{1});
    return store;
}

void EmbeddingStore::grow(NodeId new_n)
{
    if (new_n < size()) throw std::invalid_argument("embedding store cannot shrink");
    const auto old = size();
    Matrix grown = Matrix::Zero(new_n, dim());
    grown.topRows(old) = z;
    z = std::move(grown);
    last_event_time.conservativeResize(new_n);
    last_event_time.tail(new_n - old).setConstant(t_start);
    initial.resize(static_cast<std::size_t>(new_n), 0);
}

void EmbeddingStore::check(NodeId v) const
{
    if (v < 0 || v >= size()) throw std::out_of_range("node " + std::to_string(v) + " outside the embedding store");
}

double compatibility(const ModelParams& p, const EmbeddingStore& store, NodeId u, NodeId v, EventType k)
{
    store.check(u);
    store.check(v);
    const EigenBackend b{p};
    return pair_score(b, Vector(store.z.row(u).transpose()), Vector(store.z.row(v).transpose()), k);
}

double intensity(const ModelParams& p, const EmbeddingStore& store, NodeId u, NodeId v, EventType k)
{
    return transfer(p.psi(k), compatibility(p, store, u, v, k));
}

std::vector<std::pair<NodeId, double>> attention_coefficients(const GraphState& state, NodeId u)
{
    const auto nb = state.neighborhood(u);
    if (nb.empty()) throw std::domain_error("attention over an empty neighbourhood");
    const auto s = state.row_values(u);
    const Vector q = EigenBackend::softmax(Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size())));
    std::vector<std::pair<NodeId, double>> out;
    out.reserve(nb.size());
    for (std::size_t i = 0; i < nb.size(); ++i) out.emplace_back(nb[i], q[static_cast<Eigen::Index>(i)]);
    return out;
}

namespace {

Vector aggregate_unchecked(const EigenBackend& b, const EmbeddingStore& store, const GraphState& state, NodeId u)
{
    const auto nb = state.neighborhood(u);
    if (nb.empty()) return b.zeros();
    std::vector<Vector> zs;
    zs.reserve(nb.size());
    for (const auto i : nb) zs.emplace_back(store.z.row(i).transpose());
    const auto s = state.row_values(u);
    const Vector s_row = Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
    return neighborhood_summary(b, std::span<const Vector>(zs), s_row);
}

} // namespace

Vector aggregate(const ModelParams& p, const EmbeddingStore& store, const GraphState& state, NodeId u)
{
    store.check(u);
    return aggregate_unchecked(EigenBackend{p}, store, state, u);
}

std::pair<Vector, Vector> updated_embeddings(const ModelParams& p, const EmbeddingStore& store,
                                             const GraphState& state, const Event& e)
{
    store.check(e.u);
    store.check(e.v);
    const double gap_u = e.t - store.last_event_time[e.u];
    const double gap_v = e.t - store.last_event_time[e.v];
    if (gap_u < 0.0 || gap_v < 0.0) throw DataError("event precedes a node's previous event (non-monotone replay)");
    const EigenBackend b{p};
    const Vector h_u = aggregate_unchecked(b, store, state, e.u);
    const Vector h_v = aggregate_unchecked(b, store, state, e.v);
    Vector new_u = propagate(b, h_v, Vector(store.z.row(e.u).transpose()), gap_feature(p.options, gap_u));
    Vector new_v = propagate(b, h_u, Vector(store.z.row(e.v).transpose()), gap_feature(p.options, gap_v));
    return {std::move(new_u), std::move(new_v)};
}

void apply_embedding_update(const ModelParams& p, EmbeddingStore& store, const GraphState& state, const Event& e)
{
    auto [zu, zv] = updated_embeddings(p, store, state, e);
    store.z.row(e.u) = zu.transpose();
    store.z.row(e.v) = zv.transpose();
    store.last_event_time[e.u] = e.t;
    store.last_event_time[e.v] = e.t;
    store.initial[static_cast<std::size_t>(e.u)] = 0;
    store.initial[static_cast<std::size_t>(e.v)] = 0;
}

EmbeddingStore update_embedding(const ModelParams& p, const EmbeddingStore& store, const GraphState& state,
                                const Event& e)
{
    EmbeddingStore out = store;
    apply_embedding_update(p, out, state, e);
    return out;
}

std::string format_embeddings(const EmbeddingStore& store, const EventLog* labels)
{
    const auto shortest = [](double x) {
        std::array<char, 64> buf{};
        const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
        return std::string(buf.data(), ptr);
    };
    std::ostringstream out;
    out << "node_id";
    for (Eigen::Index j = 0; j < store.dim(); ++j) out << ",z_" << (j + 1);
    out << ",last_event_time\n";
    for (NodeId v = 0; v < store.size(); ++v) {
        out << (labels ? labels->label(v) : std::to_string(v));
        for (Eigen::Index j = 0; j < store.dim(); ++j) out << ',' << shortest(store.z(v, j));
        out << ',' << shortest(store.last_event_time[v]) << '\n';
    }
    return out.str();
}

void export_embeddings(const EmbeddingStore& store, const EventLog* labels, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << format_embeddings(store, labels);
}

} // namespace dyrep
