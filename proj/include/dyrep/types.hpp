#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dyrep {

template <class Scalar, int Rows = Eigen::Dynamic, int Cols = Eigen::Dynamic>
using rowmat_type = Eigen::Matrix<Scalar, Rows, Cols, Eigen::RowMajor>;

template <class Scalar, int Rows = Eigen::Dynamic>
using vec_type = Eigen::Matrix<Scalar, Rows, 1>;

using Matrix = rowmat_type<double>;
using Vector = vec_type<double>;

using NodeId = std::int32_t;

// Association (k = 0) changes topology, communication (k = 1) does not.
enum class EventType : std::uint8_t { association = 0, communication = 1 };

inline constexpr int kNumEventTypes = 2;

constexpr int to_index(EventType k) noexcept { return static_cast<int>(k); }

constexpr EventType event_type_from_index(int k) noexcept
{
    return k == 0 ? EventType::association : EventType::communication;
}

/// Malformed input data (bad records, invariant violations in logs).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// NaN/Inf or other numeric breakdown.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace dyrep
