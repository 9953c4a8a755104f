#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace piggyback {

/// Invalid schedule, bound instance, or experiment configuration.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Mismatched dimensions or snapshot grids.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Operation requested on a model family that cannot support it
/// (e.g. an error envelope for a model without a Hessian Lipschitz constant).
struct UnsupportedModelError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// The joint recursion produced a non-finite iterate or Jacobian.
class OverflowError : public std::runtime_error {
public:
    explicit OverflowError(std::size_t iteration)
        : std::runtime_error("non-finite state at iteration " + std::to_string(iteration))
        , iteration_(iteration)
    {
    }

    [[nodiscard]] std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

/// The solution oracle failed to produce a minimizer or Jacobian.
struct OracleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Singular (or numerically indefinite) Hessian in the implicit system.
struct RankError : OracleError {
    using OracleError::OracleError;
};

} // namespace piggyback
