#pragma once

#include <functional>

#include "ganlab/tensor.hpp"

namespace ganlab {

/// Central finite differences: (f(x + h e_i) - f(x - h e_i)) / (2h) per
/// coordinate. Independent oracle for the tape's backward pass; f must be
/// deterministic and evaluable at every perturbed point.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h = 1e-5);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor); the standard gradient-check
/// discrepancy with an absolute floor so near-zero entries stay comparable.
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-6);

}  // namespace ganlab
