#pragma once

#include "hzrd/error.hpp"
#include "hzrd/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace hzrd::detail {

// uniform(-a, a), a = sqrt(6 / (fan_in + fan_out))
template <typename Derived>
void glorot_fill(Eigen::DenseBase<Derived>& block, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    for (Eigen::Index j = 0; j < block.cols(); ++j)
        for (Eigen::Index i = 0; i < block.rows(); ++i) block(i, j) = u(rng);
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& values, const std::string& where) {
    if (!values.allFinite()) throw NumericError("non-finite value in " + where);
}

inline void check_dropout_rate(double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
}

}  // namespace hzrd::detail
