#pragma once

#include <functional>
#include <span>

#include "jobgen/tensor/tape.hpp"
#include "jobgen/tensor/tensor.hpp"

namespace jobgen::tensor {

// Compares an analytic gradient against central differences of f at point.
// Returns max over coordinates of |analytic - numeric| / max(1, |numeric|);
// a NaN anywhere propagates to the result.
double finite_difference_check(const std::function<double(const Tensor&)>& f, const Tensor& point,
                               const Tensor& analytic, double step = 1e-5);

// Same check where the analytic gradient comes from the tape: build(tape, x)
// must return a scalar node.
double finite_difference_check(const std::function<Var(Tape&, Var)>& build, const Tensor& point,
                               double step = 1e-5);

// Checks every coordinate of every listed parameter. build is called on a
// fresh tape each time and must return the scalar loss node.
double parameter_gradient_check(const std::function<Var(Tape&)>& build, std::span<Parameter* const> params,
                                double step = 1e-5);

}  // namespace jobgen::tensor
