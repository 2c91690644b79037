#pragma once

#include <dyrep/event_stream.hpp>
#include <dyrep/types.hpp>

#include <filesystem>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace dyrep {

/// Association structure A(t) and right-stochastic attention strengths S(t).
///
/// Neighbour lists are kept sorted, and every row-wise reduction walks them in
/// ascending id order, so the dense and sparse storage of S produce identical bits.
class GraphState {
public:
    enum class Storage { automatic, dense, sparse };

    static constexpr NodeId kDenseLimit = 4096;

    GraphState() = default;
    explicit GraphState(NodeId n, Storage storage = Storage::automatic);

    NodeId size() const noexcept { return n_; }
    bool dense() const noexcept { return dense_; }

    bool linked(NodeId a, NodeId b) const;
    double s(NodeId row, NodeId col) const;

    /// N_u(t) in ascending id order.
    std::span<const NodeId> neighborhood(NodeId u) const;

    /// S values for row u aligned with neighborhood(u).
    std::vector<double> row_values(NodeId u) const;

    std::size_t edge_count() const noexcept { return edges_; }

    /// Appends isolated nodes up to new_n.
    void grow(NodeId new_n);

    /// Attention update: A and S after observing `e` with intensity `lambda_e`.
    void apply_event(const Event& e, double lambda_e);

    std::vector<std::pair<NodeId, NodeId>> edge_list() const;

    friend bool operator==(const GraphState& a, const GraphState& b);

private:
    void check(NodeId u) const;
    std::size_t position(NodeId row, NodeId col) const;
    double& value_at(NodeId row, std::size_t pos);
    double value_at(NodeId row, std::size_t pos) const;
    void insert_neighbor(NodeId row, NodeId col);
    void update_row(NodeId j, NodeId partner, double lambda_e, bool new_edge);

    NodeId n_ = 0;
    bool dense_ = true;
    Storage requested_ = Storage::automatic;
    std::size_t edges_ = 0;
    std::vector<std::vector<NodeId>> neighbors_;
    Matrix dense_s_;
    std::vector<std::vector<double>> sparse_s_;

    friend GraphState init_state(const Adjacency&, NodeId, Storage);
    friend GraphState read_graph_checkpoint(std::istream&);
};

/// S(t0) from A(t0): uniform weights over each node's neighbours.
GraphState init_state(const Adjacency& a0, NodeId n = -1, GraphState::Storage storage = GraphState::Storage::automatic);

/// Same, from a dense 0/1 matrix. Throws unless symmetric with zero diagonal.
GraphState init_state(const Eigen::Ref<const Matrix>& a0, GraphState::Storage storage = GraphState::Storage::automatic);

void write_checkpoint(const GraphState& state, std::ostream& out);
GraphState read_graph_checkpoint(std::istream& in);
void save_graph(const GraphState& state, const std::filesystem::path& path);
GraphState load_graph(const std::filesystem::path& path);

} // namespace dyrep
