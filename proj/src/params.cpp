#include <dyrep/params.hpp>

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>

namespace dyrep {
namespace {

constexpr const char* kParamsFormat = "dyrep-params";
constexpr int kParamsVersion = 1;

template <class T>
nlohmann::json to_json_tensor(const T& t)
{
    nlohmann::json rows = nlohmann::json::array();
    if (t.cols() == 1) {
        for (Eigen::Index i = 0; i < t.rows(); ++i) rows.push_back(t(i, 0));
        return rows;
    }
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < t.cols(); ++j) row.push_back(t(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

template <class T>
void from_json_tensor(const nlohmann::json& j, T& t, const char* name)
{
    if (!j.is_array()) throw DataError(std::string("params: '") + name + "' must be an array");
    if (t.cols() == 1) {
        if (static_cast<Eigen::Index>(j.size()) != t.rows()) throw DataError(std::string("params: '") + name + "' has the wrong length");
        for (Eigen::Index i = 0; i < t.rows(); ++i) t(i, 0) = j.at(static_cast<std::size_t>(i)).get<double>();
        return;
    }
    if (static_cast<Eigen::Index>(j.size()) != t.rows()) throw DataError(std::string("params: '") + name + "' has the wrong row count");
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        const auto& row = j.at(static_cast<std::size_t>(i));
        if (static_cast<Eigen::Index>(row.size()) != t.cols()) throw DataError(std::string("params: '") + name + "' has the wrong column count");
        for (Eigen::Index c = 0; c < t.cols(); ++c) t(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
}

template <class Tensors>
void shape_like(Tensors& t, Eigen::Index n0, Eigen::Index d)
{
    t.V = Matrix::Zero(n0, d);
    t.W_struct = Matrix::Zero(d, d);
    t.W_rec = Matrix::Zero(d, d);
    t.W_t = Vector::Zero(d);
    t.W_h = Matrix::Zero(d, d);
    t.b_h = Vector::Zero(d);
    t.omega0 = Vector::Zero(2 * d);
    t.omega1 = Vector::Zero(2 * d);
    t.psi_raw.setZero();
}

} // namespace

const char* param_name(ParamId id) noexcept
{
    switch (id) {
    case ParamId::V: return "V";
    case ParamId::W_struct: return "W_struct";
    case ParamId::W_rec: return "W_rec";
    case ParamId::W_t: return "W_t";
    case ParamId::W_h: return "W_h";
    case ParamId::b_h: return "b_h";
    case ParamId::omega0: return "omega_0";
    case ParamId::omega1: return "omega_1";
    case ParamId::psi_raw: return "psi_raw";
    }
    return "?";
}

ModelParams ModelParams::zeros(NodeId n0, int d, ModelOptions options)
{
    if (n0 < 0 || d <= 0) throw ConfigError("params: need n0 >= 0 and d > 0");
    ModelParams p;
    shape_like(p, n0, d);
    p.psi_raw.setConstant(inverse_softplus(1.0));
    p.options = options;
    return p;
}

ModelParams ModelParams::init(NodeId n0, int d, std::uint64_t seed, ModelOptions options)
{
    ModelParams p = zeros(n0, d, options);
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    std::uniform_real_distribution<double> unif(-bound, bound);
    p.for_each([&](ParamId id, auto& t) {
        if (id == ParamId::psi_raw) return;
        for (Eigen::Index i = 0; i < t.rows(); ++i)
            for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = unif(rng);
    });
    return p;
}

void ModelParams::validate() const
{
    const auto d = dim();
    if (d <= 0 || W_struct.cols() != d || W_rec.rows() != d || W_rec.cols() != d || W_h.rows() != d || W_h.cols() != d ||
        W_t.size() != d || b_h.size() != d || omega0.size() != 2 * d || omega1.size() != 2 * d || V.cols() != d)
        throw DataError("params: inconsistent tensor shapes");
    if (!all_finite()) throw NumericError("params: non-finite entries");
    if (!(psi(EventType::association) > 0.0) || !(psi(EventType::communication) > 0.0))
        throw NumericError("params: psi must be positive");
    if (!(options.time_scale > 0.0)) throw ConfigError("params: time_scale must be positive");
}

GradientSet GradientSet::zeros_like(const ModelParams& p)
{
    GradientSet g;
    shape_like(g, p.V.rows(), p.dim());
    return g;
}

double GradientSet::squared_norm() const
{
    double s = 0.0;
    for_each([&](ParamId, const auto& t) { s += t.squaredNorm(); });
    return s;
}

void GradientSet::scale(double c)
{
    for_each([&](ParamId, auto& t) { t *= c; });
}

GradientSet& GradientSet::operator+=(const GradientSet& other)
{
    V += other.V;
    W_struct += other.W_struct;
    W_rec += other.W_rec;
    W_t += other.W_t;
    W_h += other.W_h;
    b_h += other.b_h;
    omega0 += other.omega0;
    omega1 += other.omega1;
    psi_raw += other.psi_raw;
    return *this;
}

void sgd_step(ModelParams& p, const GradientSet& g, double learning_rate)
{
    p.V -= learning_rate * g.V;
    p.W_struct -= learning_rate * g.W_struct;
    p.W_rec -= learning_rate * g.W_rec;
    p.W_t -= learning_rate * g.W_t;
    p.W_h -= learning_rate * g.W_h;
    p.b_h -= learning_rate * g.b_h;
    p.omega0 -= learning_rate * g.omega0;
    p.omega1 -= learning_rate * g.omega1;
    p.psi_raw -= learning_rate * g.psi_raw;
}

bool bitwise_equal(const ModelParams& a, const ModelParams& b)
{
    if (!(a.options == b.options)) return false;
    bool same = true;
    a.for_each([&](ParamId id, const auto& ta) {
        b.for_each([&](ParamId jd, const auto& tb) {
            if (id != jd || !same) return;
            if (ta.rows() != tb.rows() || ta.cols() != tb.cols()) {
                same = false;
                return;
            }
            same = std::memcmp(ta.data(), tb.data(), sizeof(double) * static_cast<std::size_t>(ta.size())) == 0;
        });
    });
    return same;
}

void write_params(const ModelParams& p, std::ostream& out)
{
    nlohmann::json j;
    j["format"] = kParamsFormat;
    j["version"] = kParamsVersion;
    j["d"] = p.dim();
    j["n0"] = p.n0();
    j["psi_parameterization"] = "softplus";
    j["psi"] = {p.psi(EventType::association), p.psi(EventType::communication)};
    j["time_scale"] = p.options.time_scale;
    j["log_gap"] = p.options.log_gap;
    nlohmann::json tensors;
    p.for_each([&](ParamId id, const auto& t) { tensors[param_name(id)] = to_json_tensor(t); });
    j["tensors"] = std::move(tensors);
    out << j.dump(1) << '\n';
}

ModelParams read_params(std::istream& in)
{
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& err) {
        throw DataError(std::string("params: ") + err.what());
    }
    if (j.value("format", "") != kParamsFormat) throw DataError("params: not a parameter checkpoint");
    if (j.value("version", 0) != kParamsVersion) throw DataError("params: unsupported version");
    if (j.value("psi_parameterization", "") != "softplus") throw DataError("params: unknown psi parameterization");
    const auto d = j.at("d").get<int>();
    const auto n0 = j.at("n0").get<NodeId>();
    ModelOptions options;
    options.time_scale = j.value("time_scale", 1.0);
    options.log_gap = j.value("log_gap", false);
    ModelParams p = ModelParams::zeros(n0, d, options);
    const auto& tensors = j.at("tensors");
    p.for_each([&](ParamId id, auto& t) { from_json_tensor(tensors.at(param_name(id)), t, param_name(id)); });
    p.validate();
    return p;
}

void save_params(const ModelParams& p, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    write_params(p, out);
}

ModelParams load_params(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return read_params(in);
}

} // namespace dyrep
