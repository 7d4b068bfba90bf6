#include "histaid/train/optim.hpp"

#include <cmath>
#include <numbers>

#include "histaid/error.hpp"

namespace histaid::train {

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Tensor bce_multilabel(const Tensor& logits, const Tensor& targets, double pos_weight) {
  if (logits.shape() != targets.shape()) {
    throw ShapeError("bce: logits " + tensor::shape_string(logits.shape()) + " vs targets " +
                     tensor::shape_string(targets.shape()));
  }
  const auto z = logits.values();
  const auto y = targets.values();
  for (double t : y) {
    if (t != 0.0 && t != 1.0) throw ContractError("bce targets must be 0 or 1");
  }
  const double n = static_cast<double>(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    total += y[i] * pos_weight * softplus(-z[i]) + (1.0 - y[i]) * softplus(z[i]);
  }
  auto target_values = targets.to_vector();
  return tensor::make_result(
      "bce", {1}, {total / n}, {logits},
      [logits, target_values = std::move(target_values), pos_weight, n](std::span<const double> g,
                                                                         std::span<const double>) {
        const auto zv = logits.values();
        std::vector<double> d(zv.size());
        for (std::size_t i = 0; i < zv.size(); ++i) {
          const double t = target_values[i];
          d[i] = g[0] * (-t * pos_weight * sigmoid(-zv[i]) + (1.0 - t) * sigmoid(zv[i])) / n;
        }
        tensor::accumulate_grad(logits, d);
      });
}

void adamw_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamHyper& h) {
  if (params.size() != grads.size()) throw ShapeError("adamw: parameter and gradient sizes differ");
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("adamw: non-finite gradient, step aborted");
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adamw: optimizer state does not match parameter size");
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] -= h.lr * h.weight_decay * params[i];
    state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * grads[i];
    state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
  }
}

double cosine_warmup_lr(std::size_t step, std::size_t total, double peak, double warmup_frac, double min_ratio) {
  if (total == 0) throw ConfigError("schedule needs at least one step");
  if (step > total) throw ContractError("schedule step beyond total");
  if (step == total) return peak * min_ratio;
  const auto warmup = static_cast<std::size_t>(std::ceil(warmup_frac * static_cast<double>(total)));
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return peak * (min_ratio + (1.0 - min_ratio) * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0);
}

}  // namespace histaid::train
