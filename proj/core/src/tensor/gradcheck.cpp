#include "histaid/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "histaid/error.hpp"

namespace histaid::tensor {
namespace {

double evaluate(const std::function<Tensor()>& loss) {
  const Tensor out = loss();
  if (out.numel() != 1) throw ContractError("gradient_check: f must return a scalar");
  const double v = out.item();
  if (!std::isfinite(v)) throw NumericError("gradient_check: f returned a non-finite value");
  return v;
}

// Central differences carry roughly eps*|f|/step ~ 1e-11 of roundoff, so a
// gradient that is identically zero (e.g. a key-projection bias, which every
// softmax row ignores) would otherwise score a relative error near 1.
constexpr double kRelFloor = 1e-6;

double relative_error(double analytic, double numeric) {
  return std::fabs(analytic - numeric) / std::max(kRelFloor, std::fabs(analytic) + std::fabs(numeric));
}

}  // namespace

GradCheckReport gradient_check_params(const std::function<Tensor()>& loss, std::span<Tensor> params, double step,
                                      std::size_t max_coords_per_param) {
  if (!(step > 0.0)) throw ContractError("gradient_check: step must be positive");
  for (auto& p : params) {
    if (!p.is_leaf()) throw ContractError("gradient_check: parameters must be leaf tensors");
    p.set_requires_grad(true);
    p.zero_grad();
  }
  const Tensor out = loss();
  if (out.numel() != 1) throw ContractError("gradient_check: f must return a scalar");
  if (!std::isfinite(out.item())) throw NumericError("gradient_check: f returned a non-finite value");
  backward(out);

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    const auto analytic = p.grad();
    auto values = p.mutable_values();
    const std::size_t n = values.size();
    const std::size_t stride =
        (max_coords_per_param == 0 || n <= max_coords_per_param) ? 1 : (n + max_coords_per_param - 1) / max_coords_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = evaluate(loss);
      values[i] = saved - step;
      const double down = evaluate(loss);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(analytic[i], numeric);
      ++report.coordinates;
      if (report.coordinates == 1 || err > report.max_rel_error) {
        report = {err, pi, i, analytic[i], numeric, report.coordinates};
      }
    }
  }
  return report;
}

double gradient_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step) {
  Tensor leaf = x.clone();
  std::vector<Tensor> params{leaf};
  return gradient_check_params([&] { return f(leaf); }, params, step).max_rel_error;
}

}  // namespace histaid::tensor
