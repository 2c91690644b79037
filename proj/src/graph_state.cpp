#include <dyrep/graph_state.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace dyrep {

GraphState::GraphState(NodeId n, Storage storage)
    : n_(n), requested_(storage)
{
    if (n < 0) throw ConfigError("node count must be non-negative");
    dense_ = storage == Storage::dense || (storage == Storage::automatic && n <= kDenseLimit);
    neighbors_.resize(static_cast<std::size_t>(n));
    if (dense_)
        dense_s_ = Matrix::Zero(n, n);
    else
        sparse_s_.resize(static_cast<std::size_t>(n));
}

void GraphState::check(NodeId u) const
{
    if (u < 0 || u >= n_) throw std::out_of_range("node " + std::to_string(u) + " out of range [0, " + std::to_string(n_) + ")");
}

std::span<const NodeId> GraphState::neighborhood(NodeId u) const
{
    check(u);
    return neighbors_[static_cast<std::size_t>(u)];
}

std::size_t GraphState::position(NodeId row, NodeId col) const
{
    const auto& nb = neighbors_[static_cast<std::size_t>(row)];
    const auto it = std::lower_bound(nb.begin(), nb.end(), col);
    if (it == nb.end() || *it != col) return nb.size();
    return static_cast<std::size_t>(it - nb.begin());
}

bool GraphState::linked(NodeId a, NodeId b) const
{
    check(a);
    check(b);
    return position(a, b) < neighbors_[static_cast<std::size_t>(a)].size();
}

double GraphState::value_at(NodeId row, std::size_t pos) const
{
    if (dense_) return dense_s_(row, neighbors_[static_cast<std::size_t>(row)][pos]);
    return sparse_s_[static_cast<std::size_t>(row)][pos];
}

double& GraphState::value_at(NodeId row, std::size_t pos)
{
    if (dense_) return dense_s_(row, neighbors_[static_cast<std::size_t>(row)][pos]);
    return sparse_s_[static_cast<std::size_t>(row)][pos];
}

double GraphState::s(NodeId row, NodeId col) const
{
    check(row);
    check(col);
    const auto pos = position(row, col);
    if (pos == neighbors_[static_cast<std::size_t>(row)].size()) return 0.0;
    return value_at(row, pos);
}

std::vector<double> GraphState::row_values(NodeId u) const
{
    check(u);
    const auto& nb = neighbors_[static_cast<std::size_t>(u)];
    std::vector<double> out(nb.size());
    for (std::size_t i = 0; i < nb.size(); ++i) out[i] = value_at(u, i);
    return out;
}

void GraphState::grow(NodeId new_n)
{
    if (new_n < n_) throw std::invalid_argument("grow: new size " + std::to_string(new_n) + " is smaller than " + std::to_string(n_));
    if (new_n == n_) return;
    neighbors_.resize(static_cast<std::size_t>(new_n));
    if (dense_ && requested_ == Storage::automatic && new_n > kDenseLimit) {
        // switch representation; values are copied in neighbour order
        sparse_s_.resize(static_cast<std::size_t>(new_n));
        for (NodeId r = 0; r < n_; ++r) {
            const auto& nb = neighbors_[static_cast<std::size_t>(r)];
            auto& row = sparse_s_[static_cast<std::size_t>(r)];
            row.resize(nb.size());
            for (std::size_t i = 0; i < nb.size(); ++i) row[i] = dense_s_(r, nb[i]);
        }
        dense_s_.resize(0, 0);
        dense_ = false;
    } else if (dense_) {
        Matrix grown = Matrix::Zero(new_n, new_n);
        grown.topLeftCorner(n_, n_) = dense_s_;
        dense_s_ = std::move(grown);
    } else {
        sparse_s_.resize(static_cast<std::size_t>(new_n));
    }
    n_ = new_n;
}

void GraphState::insert_neighbor(NodeId row, NodeId col)
{
    auto& nb = neighbors_[static_cast<std::size_t>(row)];
    const auto it = std::lower_bound(nb.begin(), nb.end(), col);
    const auto pos = it - nb.begin();
    nb.insert(it, col);
    if (!dense_) {
        auto& vals = sparse_s_[static_cast<std::size_t>(row)];
        vals.insert(vals.begin() + pos, 0.0);
    }
}

void GraphState::update_row(NodeId j, NodeId partner, double lambda_e, bool new_edge)
{
    const auto& nb = neighbors_[static_cast<std::size_t>(j)];
    const auto size = nb.size();
    const double b = 1.0 / static_cast<double>(size);
    const auto partner_pos = position(j, partner);

    std::vector<double> z(size);
    for (std::size_t i = 0; i < size; ++i) z[i] = value_at(j, i);
    z[partner_pos] = b + lambda_e;
    if (new_edge) {
        const auto before = size - 1;
        const double x = before > 0 ? 1.0 / static_cast<double>(before) - b : 0.0;
        for (std::size_t i = 0; i < size; ++i)
            if (i != partner_pos) z[i] -= x;
    }
    double total = 0.0;
    for (auto& value : z) {
        value = std::max(value, 0.0);
        total += value;
    }
    for (std::size_t i = 0; i < size; ++i) value_at(j, i) = z[i] / total;
}

void GraphState::apply_event(const Event& e, double lambda_e)
{
    check(e.u);
    check(e.v);
    if (e.u == e.v) throw DataError("self-event");
    if (!(lambda_e > 0.0)) throw NumericError("event intensity must be positive");

    const bool was_linked = linked(e.u, e.v);
    if (e.k == EventType::association) {
        if (was_linked)
            throw DataError("association event on already-associated pair (" + std::to_string(e.u) + ", " +
                            std::to_string(e.v) + ")");
        insert_neighbor(e.u, e.v);
        insert_neighbor(e.v, e.u);
        ++edges_;
        update_row(e.u, e.v, lambda_e, true);
        update_row(e.v, e.u, lambda_e, true);
        return;
    }
    if (!was_linked) return;
    update_row(e.u, e.v, lambda_e, false);
    update_row(e.v, e.u, lambda_e, false);
}

std::vector<std::pair<NodeId, NodeId>> GraphState::edge_list() const
{
    std::vector<std::pair<NodeId, NodeId>> out;
    out.reserve(edges_);
    for (NodeId a = 0; a < n_; ++a)
        for (const auto b : neighbors_[static_cast<std::size_t>(a)])
            if (a < b) out.emplace_back(a, b);
    return out;
}

bool operator==(const GraphState& a, const GraphState& b)
{
    if (a.n_ != b.n_ || a.neighbors_ != b.neighbors_) return false;
    for (NodeId r = 0; r < a.n_; ++r)
        if (a.row_values(r) != b.row_values(r)) return false;
    return true;
}

GraphState init_state(const Adjacency& a0, NodeId n, GraphState::Storage storage)
{
    NodeId extent = a0.n;
    for (const auto& [x, y] : a0.edges) extent = std::max({extent, x + 1, y + 1});
    if (n < 0) n = extent;
    if (n < extent) throw DataError("adjacency references nodes beyond the state size");

    GraphState state(n, storage);
    for (const auto& [x, y] : a0.edges) {
        if (x == y) throw DataError("self-loop in initial adjacency");
        if (state.linked(x, y)) continue;
        state.insert_neighbor(x, y);
        state.insert_neighbor(y, x);
        ++state.edges_;
    }
    for (NodeId v = 0; v < n; ++v) {
        const auto& nb = state.neighbors_[static_cast<std::size_t>(v)];
        if (nb.empty()) continue;
        const double w = 1.0 / static_cast<double>(nb.size());
        for (std::size_t i = 0; i < nb.size(); ++i) state.value_at(v, i) = w;
    }
    return state;
}

GraphState init_state(const Eigen::Ref<const Matrix>& a0, GraphState::Storage storage)
{
    if (a0.rows() != a0.cols()) throw DataError("initial adjacency must be square");
    Adjacency adj;
    adj.n = static_cast<NodeId>(a0.rows());
    for (Eigen::Index i = 0; i < a0.rows(); ++i) {
        if (a0(i, i) != 0.0) throw DataError("initial adjacency must have a zero diagonal");
        for (Eigen::Index j = i + 1; j < a0.cols(); ++j) {
            if (a0(i, j) != a0(j, i)) throw DataError("initial adjacency must be symmetric");
            if (a0(i, j) != 0.0 && a0(i, j) != 1.0) throw DataError("initial adjacency must be binary");
            if (a0(i, j) == 1.0) adj.add(static_cast<NodeId>(i), static_cast<NodeId>(j));
        }
    }
    return init_state(adj, adj.n, storage);
}

namespace {

std::string shortest(double x)
{
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), ptr);
}

constexpr const char* kGraphMagic = "dyrep-graph";
constexpr int kGraphVersion = 1;

} // namespace

void write_checkpoint(const GraphState& state, std::ostream& out)
{
    const auto edges = state.edge_list();
    out << kGraphMagic << ' ' << kGraphVersion << '\n';
    out << "n " << state.size() << '\n';
    out << "edges " << edges.size() << '\n';
    for (const auto& [a, b] : edges) out << a << ' ' << b << '\n';

    std::size_t entries = 0;
    for (NodeId r = 0; r < state.size(); ++r) entries += state.neighborhood(r).size();
    out << "s " << entries << '\n';
    for (NodeId r = 0; r < state.size(); ++r) {
        const auto nb = state.neighborhood(r);
        const auto vals = state.row_values(r);
        for (std::size_t i = 0; i < nb.size(); ++i) out << r << ' ' << nb[i] << ' ' << shortest(vals[i]) << '\n';
    }
}

GraphState read_graph_checkpoint(std::istream& in)
{
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kGraphMagic) throw DataError("not a graph checkpoint");
    if (version != kGraphVersion) throw DataError("unsupported graph checkpoint version " + std::to_string(version));

    std::string tag;
    NodeId n = 0;
    std::size_t count = 0;
    if (!(in >> tag >> n) || tag != "n") throw DataError("graph checkpoint: expected 'n'");
    if (!(in >> tag >> count) || tag != "edges") throw DataError("graph checkpoint: expected 'edges'");
    Adjacency adj;
    adj.n = n;
    for (std::size_t i = 0; i < count; ++i) {
        NodeId a = 0, b = 0;
        if (!(in >> a >> b)) throw DataError("graph checkpoint: truncated edge list");
        adj.add(a, b);
    }
    adj.normalize();
    GraphState state = init_state(adj, n);
    if (!(in >> tag >> count) || tag != "s") throw DataError("graph checkpoint: expected 's'");
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(n));
    for (NodeId r = 0; r < n; ++r) rows[static_cast<std::size_t>(r)] = state.row_values(r);
    for (std::size_t i = 0; i < count; ++i) {
        NodeId r = 0, c = 0;
        std::string value;
        if (!(in >> r >> c >> value)) throw DataError("graph checkpoint: truncated S triples");
        if (r < 0 || r >= n || !state.linked(r, c)) throw DataError("graph checkpoint: S entry outside A's support");
        const auto nb = state.neighborhood(r);
        const auto pos = static_cast<std::size_t>(std::lower_bound(nb.begin(), nb.end(), c) - nb.begin());
        double x = 0.0;
        const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), x);
        if (ec != std::errc{}) throw DataError("graph checkpoint: bad S value");
        rows[static_cast<std::size_t>(r)][pos] = x;
    }
    for (NodeId r = 0; r < n; ++r) {
        const auto& vals = rows[static_cast<std::size_t>(r)];
        for (std::size_t i = 0; i < vals.size(); ++i) state.value_at(r, i) = vals[i];
    }
    return state;
}

void save_graph(const GraphState& state, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    write_checkpoint(state, out);
}

GraphState load_graph(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return read_graph_checkpoint(in);
}

} // namespace dyrep
