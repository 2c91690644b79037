#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dyrep {

template <class Scalar>
Scalar softplus(Scalar y)
{
    using std::abs, std::exp, std::log1p;
    return std::max(y, Scalar(0)) + log1p(exp(-abs(y)));
}

template <class Scalar>
Scalar logistic(Scalar y)
{
    using std::exp;
    if (y >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-y));
    const Scalar e = exp(y);
    return e / (Scalar(1) + e);
}

/// psi * log(1 + exp(x / psi)). The result is floored at the smallest normal
/// double so that it stays strictly positive when exp(x / psi) underflows.
template <class Scalar>
Scalar transfer(Scalar psi, Scalar x)
{
    if (!(psi > Scalar(0))) throw std::invalid_argument("transfer: psi must be positive");
    const Scalar value = psi * softplus(x / psi);
    return std::max(value, Scalar(std::numeric_limits<double>::min()));
}

/// d transfer / dx
template <class Scalar>
Scalar transfer_dx(Scalar psi, Scalar x)
{
    return logistic(x / psi);
}

/// d transfer / dpsi
template <class Scalar>
Scalar transfer_dpsi(Scalar psi, Scalar x)
{
    const Scalar y = x / psi;
    return softplus(y) - y * logistic(y);
}

} // namespace dyrep
