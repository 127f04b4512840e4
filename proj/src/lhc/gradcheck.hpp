#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lhc/tensor.hpp"

namespace lhc {

class ParameterSet;

// Builds a scalar on `tape` from the leaf `x`.
using ScalarFn = std::function<Var(Tape& tape, Var x)>;

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// `step` must lie in (1e-7, 1e-3).
double gradient_check(const ScalarFn& f, const Tensor& point, double step);

// Builds one or more scalar terms on `tape`, reading parameters through the
// tape's parameter leaves.
using TermsFn = std::function<std::vector<Var>(Tape& tape)>;

// Checks every coordinate of every trainable parameter in `params` against
// central differences, once per term. Returns the max relative error per term.
// The parameters are restored bitwise before returning.
std::vector<double> gradient_check_params(const TermsFn& f, ParameterSet& params,
                                          double step);

}  // namespace lhc
