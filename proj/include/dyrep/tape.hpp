#pragma once

#include <dyrep/params.hpp>
#include <dyrep/types.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace dyrep {

/// Reverse-mode record of the operations the model needs.
///
/// Every node holds a dense vector value (scalars have size 1). Nodes are
/// appended in evaluation order, so inputs always precede their consumers.
/// Parameter tensors are read from the ModelParams bound at construction and are
/// not copied; they must stay unchanged while the tape is alive.
class Tape {
public:
    struct Var {
        std::int32_t id = -1;
        bool valid() const noexcept { return id >= 0; }
        friend bool operator==(Var, Var) = default;
    };

    enum class Op : std::uint8_t {
        constant,
        param_row,
        matvec,
        add_param,
        scaled_param,
        dot_param,
        add,
        sum,
        scale,
        tanh,
        concat,
        softmax,
        element,
        mul_scalar,
        max,
        transfer,
        log,
        attention_row,
    };

    explicit Tape(const ModelParams& params);

    const ModelParams& params() const noexcept { return *params_; }

    std::size_t size() const noexcept { return nodes_.size(); }
    bool empty() const noexcept { return nodes_.empty(); }
    void clear();

    Var constant(const Eigen::Ref<const Vector>& x);
    Var constant(double x);
    /// Row of the initial-embedding matrix V.
    Var param_row(NodeId row);
    /// W x, W in {W_struct, W_rec, W_h}.
    Var matvec(ParamId w, Var x);
    /// x + b for a parameter vector b.
    Var add_param(Var x, ParamId b);
    /// c * w for a parameter vector w.
    Var scaled_param(ParamId w, double c);
    /// w . x for a parameter vector w.
    Var dot_param(ParamId w, Var x);
    Var add(Var a, Var b);
    Var sum(std::span<const Var> xs);
    Var scale(Var x, double c);
    Var tanh(Var x);
    Var concat(Var a, Var b);
    Var softmax(Var x);
    Var element(Var x, Eigen::Index i);
    /// Vector times a scalar node.
    Var mul_scalar(Var x, Var s);
    /// Elementwise max; ties go to the earliest input.
    Var max(std::span<const Var> xs);
    /// psi_k log(1 + exp(x / psi_k)) with psi_k = softplus(psi_raw_k).
    Var transfer(EventType k, Var x);
    /// log(x + eps)
    Var log(Var x, double eps = 0.0);
    /// One row of the attention update after an event with intensity `lambda`:
    /// the partner entry becomes 1/n + lambda, and for a new edge (inserted at
    /// `partner`) the other entries drop by 1/(n-1) - 1/n; negatives are clamped
    /// and the row is L1-normalised. `prev` is the pre-event row (n - 1 entries
    /// for a new edge, invalid when that row was empty).
    Var attention_row(Var prev, Var lambda, Eigen::Index partner, bool new_edge);

    Eigen::Map<const Vector> value(Var x) const;
    double scalar(Var x) const;
    Op op(Var x) const { return nodes_.at(static_cast<std::size_t>(x.id)).op; }

    /// Reverse sweep from a scalar loss. Populates adjoint() for every node.
    GradientSet backward(Var loss);
    Eigen::Map<const Vector> adjoint(Var x) const;

private:
    struct Node {
        Op op = Op::constant;
        std::int32_t a = -1;
        std::int32_t b = -1;
        std::int32_t args = 0;  // offset into args_
        std::int32_t nargs = 0;
        std::int64_t offset = 0;
        std::int32_t size = 0;
        std::int32_t aux = 0;   // ParamId, event type, row or element index
        double c = 0.0;
    };

    Var push(Node node);
    Eigen::Map<Vector> slot(const Node& node);
    Eigen::Map<const Vector> input(std::int32_t id) const;
    const Node& node(Var x) const;
    void check_value(Var x) const;
    const Matrix& matrix_param(ParamId id) const;
    const Vector& vector_param(ParamId id) const;

    const ModelParams* params_;
    std::vector<Node> nodes_;
    std::vector<double> values_;
    std::vector<double> adjoints_;
    std::vector<std::int32_t> args_;
};

const char* op_name(Tape::Op op) noexcept;

} // namespace dyrep
