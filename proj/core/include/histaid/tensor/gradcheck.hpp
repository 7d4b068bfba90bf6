#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "histaid/tensor/tensor.hpp"

namespace histaid::tensor {

// Worst coordinate found by a gradient check.
struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t param = 0;  // index into the parameter list
  std::size_t index = 0;  // flat coordinate within that parameter
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// Compares the reverse-mode gradient of a scalar f against central differences
// at x. Relative error per coordinate is
//   |analytic - numeric| / max(1e-6, |analytic| + |numeric|)
// and the maximum is returned. Non-differentiable points are reported, not
// smoothed over.
double gradient_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step = 1e-5);

// Same check over a set of leaf parameters that `loss` closes over. Parameter
// values are perturbed in place and restored. When `max_coords_per_param` is
// nonzero, at most that many evenly strided coordinates are probed per tensor.
GradCheckReport gradient_check_params(const std::function<Tensor()>& loss, std::span<Tensor> params,
                                      double step = 1e-5, std::size_t max_coords_per_param = 0);

}  // namespace histaid::tensor
