#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "arae/autodiff.hpp"
#include "arae/rng.hpp"

namespace arae {

using ScalarFn = std::function<Var<double>(Tape<double>&, Var<double>)>;
using LossFn = std::function<Var<double>(Tape<double>&)>;

/// Relative error between an analytic and a numeric derivative:
/// |a - n| / max(1e-6, |a| + |n|). The floor sits above central-difference
/// round-off, so an exactly-zero gradient does not read as a large error.
double relative_error(double analytic, double numeric);

/// Compares the tape gradient of f at x with central differences and returns
/// the largest relative error over all coordinates. Throws NumericError if f
/// is non-finite at any probed point.
double grad_check(const ScalarFn& f, const Tensor64& x, double step = 1e-5);

/// Same comparison for a loss over parameters. Checks `max_coords` randomly
/// chosen coordinates spread over all parameters (all coordinates when the
/// total is smaller). Parameter values are restored before returning.
double grad_check_params(const LossFn& loss, std::span<Parameter<double>* const> params,
                         std::size_t max_coords, SeededRng& rng, double step = 1e-5);

}  // namespace arae
