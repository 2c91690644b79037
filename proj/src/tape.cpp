#include <dyrep/tape.hpp>

#include <dyrep/math.hpp>

#include <algorithm>
#include <string>
#include <vector>

namespace dyrep {

const char* op_name(Tape::Op op) noexcept
{
    switch (op) {
    case Tape::Op::constant: return "constant";
    case Tape::Op::param_row: return "param_row";
    case Tape::Op::matvec: return "matvec";
    case Tape::Op::add_param: return "add_param";
    case Tape::Op::scaled_param: return "scaled_param";
    case Tape::Op::dot_param: return "dot_param";
    case Tape::Op::add: return "add";
    case Tape::Op::sum: return "sum";
    case Tape::Op::scale: return "scale";
    case Tape::Op::tanh: return "tanh";
    case Tape::Op::concat: return "concat";
    case Tape::Op::softmax: return "softmax";
    case Tape::Op::element: return "element";
    case Tape::Op::mul_scalar: return "mul_scalar";
    case Tape::Op::max: return "max";
    case Tape::Op::transfer: return "transfer";
    case Tape::Op::log: return "log";
    case Tape::Op::attention_row: return "attention_row";
    }
    return "?";
}

Tape::Tape(const ModelParams& params) : params_(&params) {}

void Tape::clear()
{
    nodes_.clear();
    values_.clear();
    adjoints_.clear();
    args_.clear();
}

const Tape::Node& Tape::node(Var x) const
{
    if (x.id < 0 || static_cast<std::size_t>(x.id) >= nodes_.size()) throw std::out_of_range("tape: invalid variable");
    return nodes_[static_cast<std::size_t>(x.id)];
}

Eigen::Map<const Vector> Tape::input(std::int32_t id) const
{
    const auto& n = nodes_[static_cast<std::size_t>(id)];
    return {values_.data() + n.offset, n.size};
}

Eigen::Map<Vector> Tape::slot(const Node& n)
{
    return {values_.data() + n.offset, n.size};
}

Eigen::Map<const Vector> Tape::value(Var x) const
{
    const auto& n = node(x);
    return {values_.data() + n.offset, n.size};
}

double Tape::scalar(Var x) const
{
    const auto& n = node(x);
    if (n.size != 1) throw std::invalid_argument("tape: variable is not a scalar");
    return values_[static_cast<std::size_t>(n.offset)];
}

Eigen::Map<const Vector> Tape::adjoint(Var x) const
{
    const auto& n = node(x);
    if (adjoints_.size() != values_.size()) throw std::logic_error("tape: backward has not been run");
    return {adjoints_.data() + n.offset, n.size};
}

Tape::Var Tape::push(Node n)
{
    n.offset = static_cast<std::int64_t>(values_.size());
    values_.resize(values_.size() + static_cast<std::size_t>(n.size), 0.0);
    nodes_.push_back(n);
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::check_value(Var x) const
{
    if (!value(x).allFinite())
        throw NumericError(std::string("tape: non-finite value produced by ") + op_name(node(x).op) + " at node " +
                           std::to_string(x.id));
}

const Matrix& Tape::matrix_param(ParamId id) const
{
    switch (id) {
    case ParamId::W_struct: return params_->W_struct;
    case ParamId::W_rec: return params_->W_rec;
    case ParamId::W_h: return params_->W_h;
    default: throw std::invalid_argument(std::string("tape: ") + param_name(id) + " is not a square weight matrix");
    }
}

const Vector& Tape::vector_param(ParamId id) const
{
    switch (id) {
    case ParamId::W_t: return params_->W_t;
    case ParamId::b_h: return params_->b_h;
    case ParamId::omega0: return params_->omega0;
    case ParamId::omega1: return params_->omega1;
    default: throw std::invalid_argument(std::string("tape: ") + param_name(id) + " is not a parameter vector");
    }
}

Tape::Var Tape::constant(const Eigen::Ref<const Vector>& x)
{
    Node n;
    n.op = Op::constant;
    n.size = static_cast<std::int32_t>(x.size());
    const auto v = push(n);
    slot(nodes_.back()) = x;
    check_value(v);
    return v;
}

Tape::Var Tape::constant(double x)
{
    Vector one(1);
    one[0] = x;
    return constant(one);
}

Tape::Var Tape::param_row(NodeId row)
{
    if (row < 0 || row >= params_->n0()) throw std::out_of_range("tape: V row out of range");
    Node n;
    n.op = Op::param_row;
    n.aux = row;
    n.size = static_cast<std::int32_t>(params_->dim());
    const auto v = push(n);
    slot(nodes_.back()) = params_->V.row(row).transpose();
    return v;
}

Tape::Var Tape::matvec(ParamId w, Var x)
{
    const auto& W = matrix_param(w);
    if (node(x).size != W.cols()) throw std::invalid_argument("tape: matvec shape mismatch");
    Node n;
    n.op = Op::matvec;
    n.a = x.id;
    n.aux = static_cast<std::int32_t>(w);
    n.size = static_cast<std::int32_t>(W.rows());
    const auto v = push(n);
    slot(nodes_.back()).noalias() = W * input(x.id);
    check_value(v);
    return v;
}

Tape::Var Tape::add_param(Var x, ParamId b)
{
    const auto& bias = vector_param(b);
    if (node(x).size != bias.size()) throw std::invalid_argument("tape: add_param shape mismatch");
    Node n;
    n.op = Op::add_param;
    n.a = x.id;
    n.aux = static_cast<std::int32_t>(b);
    n.size = node(x).size;
    const auto v = push(n);
    slot(nodes_.back()) = input(x.id) + bias;
    check_value(v);
    return v;
}

Tape::Var Tape::scaled_param(ParamId w, double c)
{
    const auto& p = vector_param(w);
    Node n;
    n.op = Op::scaled_param;
    n.aux = static_cast<std::int32_t>(w);
    n.c = c;
    n.size = static_cast<std::int32_t>(p.size());
    const auto v = push(n);
    slot(nodes_.back()) = c * p;
    check_value(v);
    return v;
}

Tape::Var Tape::dot_param(ParamId w, Var x)
{
    const auto& p = vector_param(w);
    if (node(x).size != p.size()) throw std::invalid_argument("tape: dot_param shape mismatch");
    Node n;
    n.op = Op::dot_param;
    n.a = x.id;
    n.aux = static_cast<std::int32_t>(w);
    n.size = 1;
    const auto v = push(n);
    values_[static_cast<std::size_t>(nodes_.back().offset)] = p.dot(input(x.id));
    check_value(v);
    return v;
}

Tape::Var Tape::add(Var a, Var b)
{
    if (node(a).size != node(b).size) throw std::invalid_argument("tape: add shape mismatch");
    Node n;
    n.op = Op::add;
    n.a = a.id;
    n.b = b.id;
    n.size = node(a).size;
    const auto v = push(n);
    slot(nodes_.back()) = input(a.id) + input(b.id);
    check_value(v);
    return v;
}

Tape::Var Tape::sum(std::span<const Var> xs)
{
    if (xs.empty()) throw std::invalid_argument("tape: sum of nothing");
    Node n;
    n.op = Op::sum;
    n.size = node(xs.front()).size;
    n.args = static_cast<std::int32_t>(args_.size());
    n.nargs = static_cast<std::int32_t>(xs.size());
    for (const auto x : xs) {
        if (node(x).size != n.size) throw std::invalid_argument("tape: sum shape mismatch");
        args_.push_back(x.id);
    }
    const auto v = push(n);
    auto out = slot(nodes_.back());
    for (const auto x : xs) out += input(x.id);
    check_value(v);
    return v;
}

Tape::Var Tape::scale(Var x, double c)
{
    Node n;
    n.op = Op::scale;
    n.a = x.id;
    n.c = c;
    n.size = node(x).size;
    const auto v = push(n);
    slot(nodes_.back()) = c * input(x.id);
    check_value(v);
    return v;
}

Tape::Var Tape::tanh(Var x)
{
    Node n;
    n.op = Op::tanh;
    n.a = x.id;
    n.size = node(x).size;
    const auto v = push(n);
    slot(nodes_.back()) = input(x.id).array().tanh().matrix();
    return v;
}

Tape::Var Tape::concat(Var a, Var b)
{
    Node n;
    n.op = Op::concat;
    n.a = a.id;
    n.b = b.id;
    n.size = node(a).size + node(b).size;
    const auto v = push(n);
    auto out = slot(nodes_.back());
    out.head(node(a).size) = input(a.id);
    out.tail(node(b).size) = input(b.id);
    return v;
}

Tape::Var Tape::softmax(Var x)
{
    if (node(x).size == 0) throw std::invalid_argument("tape: softmax of an empty vector");
    Node n;
    n.op = Op::softmax;
    n.a = x.id;
    n.size = node(x).size;
    const auto v = push(n);
    const auto in = input(x.id);
    auto out = slot(nodes_.back());
    out = (in.array() - in.maxCoeff()).exp().matrix();
    out /= out.sum();
    check_value(v);
    return v;
}

Tape::Var Tape::element(Var x, Eigen::Index i)
{
    if (i < 0 || i >= node(x).size) throw std::out_of_range("tape: element index out of range");
    Node n;
    n.op = Op::element;
    n.a = x.id;
    n.aux = static_cast<std::int32_t>(i);
    n.size = 1;
    const auto v = push(n);
    values_[static_cast<std::size_t>(nodes_.back().offset)] = input(x.id)[i];
    return v;
}

Tape::Var Tape::mul_scalar(Var x, Var s)
{
    if (node(s).size != 1) throw std::invalid_argument("tape: mul_scalar needs a scalar factor");
    Node n;
    n.op = Op::mul_scalar;
    n.a = x.id;
    n.b = s.id;
    n.size = node(x).size;
    const auto v = push(n);
    slot(nodes_.back()) = input(x.id) * input(s.id)[0];
    check_value(v);
    return v;
}

Tape::Var Tape::max(std::span<const Var> xs)
{
    if (xs.empty()) throw std::invalid_argument("tape: max of nothing");
    Node n;
    n.op = Op::max;
    n.size = node(xs.front()).size;
    n.args = static_cast<std::int32_t>(args_.size());
    n.nargs = static_cast<std::int32_t>(xs.size());
    for (const auto x : xs) {
        if (node(x).size != n.size) throw std::invalid_argument("tape: max shape mismatch");
        args_.push_back(x.id);
    }
    // argmax per coordinate follows the inputs in args_
    n.aux = static_cast<std::int32_t>(args_.size());
    args_.resize(args_.size() + static_cast<std::size_t>(n.size), 0);
    const auto v = push(n);
    const auto& stored = nodes_.back();
    auto out = slot(stored);
    out = input(xs.front().id);
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const auto in = input(xs[i].id);
        for (std::int32_t j = 0; j < n.size; ++j) {
            if (in[j] > out[j]) {
                out[j] = in[j];
                args_[static_cast<std::size_t>(stored.aux + j)] = static_cast<std::int32_t>(i);
            }
        }
    }
    return v;
}

Tape::Var Tape::transfer(EventType k, Var x)
{
    if (node(x).size != 1) throw std::invalid_argument("tape: transfer needs a scalar input");
    Node n;
    n.op = Op::transfer;
    n.a = x.id;
    n.aux = to_index(k);
    n.size = 1;
    const auto v = push(n);
    values_[static_cast<std::size_t>(nodes_.back().offset)] = dyrep::transfer(params_->psi(k), input(x.id)[0]);
    check_value(v);
    return v;
}

Tape::Var Tape::log(Var x, double eps)
{
    if (node(x).size != 1) throw std::invalid_argument("tape: log needs a scalar input");
    Node n;
    n.op = Op::log;
    n.a = x.id;
    n.c = eps;
    n.size = 1;
    const auto v = push(n);
    values_[static_cast<std::size_t>(nodes_.back().offset)] = std::log(input(x.id)[0] + eps);
    check_value(v);
    return v;
}

namespace {

// Pre-clamp row of attention_row; `prev` excludes the inserted entry for a new edge.
void attention_pre(const double* prev, std::int32_t n, std::int32_t partner, bool new_edge, double lambda,
                   double* z)
{
    const double b = 1.0 / static_cast<double>(n);
    for (std::int32_t i = 0, j = 0; i < n; ++i) {
        if (new_edge && i == partner) {
            z[i] = 0.0;
            continue;
        }
        z[i] = prev[j++];
    }
    z[partner] = b + lambda;
    if (new_edge) {
        const auto before = n - 1;
        const double x = before > 0 ? 1.0 / static_cast<double>(before) - b : 0.0;
        for (std::int32_t i = 0; i < n; ++i)
            if (i != partner) z[i] -= x;
    }
}

} // namespace

Tape::Var Tape::attention_row(Var prev, Var lambda, Eigen::Index partner, bool new_edge)
{
    if (node(lambda).size != 1) throw std::invalid_argument("tape: attention_row needs a scalar intensity");
    const std::int32_t m = prev.valid() ? node(prev).size : 0;
    const std::int32_t size = new_edge ? m + 1 : m;
    if (size == 0 || partner < 0 || partner >= size) throw std::out_of_range("tape: attention_row partner out of range");
    Node n;
    n.op = Op::attention_row;
    n.a = prev.valid() ? prev.id : -1;
    n.b = lambda.id;
    n.aux = static_cast<std::int32_t>(partner);
    n.nargs = new_edge ? 1 : 0;
    n.size = size;
    const auto v = push(n);
    const auto& stored = nodes_.back();
    double* out = values_.data() + stored.offset;
    const double* in = prev.valid() ? values_.data() + nodes_[static_cast<std::size_t>(prev.id)].offset : nullptr;
    attention_pre(in, size, stored.aux, new_edge, input(lambda.id)[0], out);
    double total = 0.0;
    for (std::int32_t i = 0; i < size; ++i) {
        out[i] = std::max(out[i], 0.0);
        total += out[i];
    }
    for (std::int32_t i = 0; i < size; ++i) out[i] = out[i] / total;
    check_value(v);
    return v;
}

GradientSet Tape::backward(Var loss)
{
    const auto& root = node(loss);
    if (root.size != 1) throw std::invalid_argument("tape: loss must be a scalar");

    GradientSet g = GradientSet::zeros_like(*params_);
    adjoints_.assign(values_.size(), 0.0);
    adjoints_[static_cast<std::size_t>(root.offset)] = 1.0;

    const auto adj = [&](std::int32_t id) {
        const auto& m = nodes_[static_cast<std::size_t>(id)];
        return Eigen::Map<Vector>(adjoints_.data() + m.offset, m.size);
    };
    const auto grad_vector = [&](std::int32_t aux) -> Vector& {
        switch (static_cast<ParamId>(aux)) {
        case ParamId::W_t: return g.W_t;
        case ParamId::b_h: return g.b_h;
        case ParamId::omega0: return g.omega0;
        default: return g.omega1;
        }
    };
    const auto grad_matrix = [&](std::int32_t aux) -> Matrix& {
        switch (static_cast<ParamId>(aux)) {
        case ParamId::W_struct: return g.W_struct;
        case ParamId::W_rec: return g.W_rec;
        default: return g.W_h;
        }
    };

    for (auto id = loss.id; id >= 0; --id) {
        const auto& n = nodes_[static_cast<std::size_t>(id)];
        const auto out_adj = adj(id);
        if (out_adj.isZero(0.0)) continue;
        if (!out_adj.allFinite())
            throw NumericError(std::string("tape: non-finite adjoint at ") + op_name(n.op) + " node " + std::to_string(id));
        const auto out_val = input(id);
        switch (n.op) {
        case Op::constant: break;
        case Op::param_row: g.V.row(n.aux) += out_adj.transpose(); break;
        case Op::matvec: {
            const auto& W = matrix_param(static_cast<ParamId>(n.aux));
            grad_matrix(n.aux).noalias() += out_adj * input(n.a).transpose();
            adj(n.a).noalias() += W.transpose() * out_adj;
            break;
        }
        case Op::add_param:
            adj(n.a) += out_adj;
            grad_vector(n.aux) += out_adj;
            break;
        case Op::scaled_param: grad_vector(n.aux) += n.c * out_adj; break;
        case Op::dot_param:
            grad_vector(n.aux) += out_adj[0] * input(n.a);
            adj(n.a) += out_adj[0] * vector_param(static_cast<ParamId>(n.aux));
            break;
        case Op::add:
            adj(n.a) += out_adj;
            adj(n.b) += out_adj;
            break;
        case Op::sum:
            for (std::int32_t i = 0; i < n.nargs; ++i) adj(args_[static_cast<std::size_t>(n.args + i)]) += out_adj;
            break;
        case Op::scale: adj(n.a) += n.c * out_adj; break;
        case Op::tanh: adj(n.a).array() += out_adj.array() * (1.0 - out_val.array().square()); break;
        case Op::concat: {
            const auto na = nodes_[static_cast<std::size_t>(n.a)].size;
            const auto nb = nodes_[static_cast<std::size_t>(n.b)].size;
            adj(n.a) += out_adj.head(na);
            adj(n.b) += out_adj.tail(nb);
            break;
        }
        case Op::softmax: {
            const double inner = out_adj.dot(out_val);
            adj(n.a).array() += out_val.array() * (out_adj.array() - inner);
            break;
        }
        case Op::element: adj(n.a)[n.aux] += out_adj[0]; break;
        case Op::mul_scalar:
            adj(n.a) += input(n.b)[0] * out_adj;
            adj(n.b)[0] += out_adj.dot(input(n.a));
            break;
        case Op::max:
            for (std::int32_t j = 0; j < n.size; ++j) {
                const auto which = args_[static_cast<std::size_t>(n.aux + j)];
                adj(args_[static_cast<std::size_t>(n.args + which)])[j] += out_adj[j];
            }
            break;
        case Op::transfer: {
            const auto k = event_type_from_index(n.aux);
            const double raw = params_->psi_raw[n.aux];
            const double psi = params_->psi(k);
            const double x = input(n.a)[0];
            adj(n.a)[0] += out_adj[0] * transfer_dx(psi, x);
            g.psi_raw[n.aux] += out_adj[0] * transfer_dpsi(psi, x) * logistic(raw);
            break;
        }
        case Op::log: adj(n.a)[0] += out_adj[0] / (input(n.a)[0] + n.c); break;
        case Op::attention_row: {
            const bool new_edge = n.nargs != 0;
            std::vector<double> z(static_cast<std::size_t>(n.size));
            const double* prev = n.a >= 0 ? values_.data() + nodes_[static_cast<std::size_t>(n.a)].offset : nullptr;
            attention_pre(prev, n.size, n.aux, new_edge, input(n.b)[0], z.data());
            double total = 0.0;
            for (auto& value : z) total += std::max(value, 0.0);
            // d(y_i / T) / d y_j = (delta_ij - out_i) / T on the unclamped entries
            const double inner = out_adj.dot(out_val);
            for (std::int32_t i = 0, j = 0; i < n.size; ++i) {
                const double gz = z[static_cast<std::size_t>(i)] > 0.0 ? (out_adj[i] - inner) / total : 0.0;
                if (i == n.aux) {
                    adj(n.b)[0] += gz;
                    if (new_edge) continue;
                    ++j;
                    continue;
                }
                adj(n.a)[j++] += gz;
            }
            break;
        }
        }
    }
    return g;
}

} // namespace dyrep
