#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>

namespace piggyback {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

template <typename Derived>
[[nodiscard]] bool all_finite(const Eigen::DenseBase<Derived>& m)
{
    return m.allFinite();
}

inline bool is_finite(double v) { return std::isfinite(v); }

} // namespace piggyback
