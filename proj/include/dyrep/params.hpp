#pragma once

#include <dyrep/math.hpp>
#include <dyrep/types.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

namespace dyrep {

/// Identifies one tensor of the parameter set.
enum class ParamId : std::uint8_t { V, W_struct, W_rec, W_t, W_h, b_h, omega0, omega1, psi_raw };

inline constexpr int kNumParamIds = 9;

const char* param_name(ParamId id) noexcept;

/// Shape-aligned storage shared by the model parameters and their gradients.
template <class Scalar>
struct ParamTensors {
    using matrix_type = rowmat_type<Scalar>;
    using vector_type = vec_type<Scalar>;

    matrix_type V;        // n0 x d initial embeddings
    matrix_type W_struct; // d x d
    matrix_type W_rec;    // d x d
    vector_type W_t;      // d
    matrix_type W_h;      // d x d
    vector_type b_h;      // d
    vector_type omega0;   // 2d, association
    vector_type omega1;   // 2d, communication
    vec_type<Scalar, 2> psi_raw = vec_type<Scalar, 2>::Zero();

    const vector_type& omega(EventType k) const { return k == EventType::association ? omega0 : omega1; }
    vector_type& omega(EventType k) { return k == EventType::association ? omega0 : omega1; }

    /// Visits every tensor as (id, Eigen object).
    template <class F>
    void for_each(F&& f)
    {
        f(ParamId::V, V);
        f(ParamId::W_struct, W_struct);
        f(ParamId::W_rec, W_rec);
        f(ParamId::W_t, W_t);
        f(ParamId::W_h, W_h);
        f(ParamId::b_h, b_h);
        f(ParamId::omega0, omega0);
        f(ParamId::omega1, omega1);
        f(ParamId::psi_raw, psi_raw);
    }

    template <class F>
    void for_each(F&& f) const
    {
        const_cast<ParamTensors*>(this)->for_each([&](ParamId id, const auto& t) { f(id, t); });
    }

    Eigen::Index dim() const noexcept { return W_struct.rows(); }

    Eigen::Index total_size() const
    {
        Eigen::Index n = 0;
        for_each([&](ParamId, const auto& t) { n += t.size(); });
        return n;
    }

    bool all_finite() const
    {
        bool ok = true;
        for_each([&](ParamId, const auto& t) { ok = ok && t.allFinite(); });
        return ok;
    }
};

/// Settings that shape the forward computation and travel with the checkpoint.
struct ModelOptions {
    /// Elapsed time is divided by this before entering the exogenous term.
    double time_scale = 1.0;
    /// Feed log(1 + gap) instead of the raw gap.
    bool log_gap = false;

    friend bool operator==(const ModelOptions&, const ModelOptions&) = default;
};

/// Full parameter set. psi_k = softplus(psi_raw_k) keeps the time scales positive.
struct ModelParams : ParamTensors<double> {
    ModelOptions options;

    NodeId n0() const noexcept { return static_cast<NodeId>(V.rows()); }
    double psi(EventType k) const { return softplus(psi_raw[to_index(k)]); }

    static double softplus(double x) { return dyrep::softplus(x); }
    static double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

    /// Uniform in [-1/sqrt(d), 1/sqrt(d)], psi_k = 1.
    static ModelParams init(NodeId n0, int d, std::uint64_t seed, ModelOptions options = {});
    static ModelParams zeros(NodeId n0, int d, ModelOptions options = {});

    void validate() const;
};

/// Gradient buffers, one per ModelParams tensor. psi_raw holds dL/dpsi_raw.
struct GradientSet : ParamTensors<double> {
    static GradientSet zeros_like(const ModelParams& p);

    double squared_norm() const;
    double norm() const { return std::sqrt(squared_norm()); }
    void scale(double c);
    GradientSet& operator+=(const GradientSet& other);
};

/// p -= learning_rate * g
void sgd_step(ModelParams& p, const GradientSet& g, double learning_rate);

bool bitwise_equal(const ModelParams& a, const ModelParams& b);

void write_params(const ModelParams& p, std::ostream& out);
ModelParams read_params(std::istream& in);
void save_params(const ModelParams& p, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);

} // namespace dyrep
