#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "histaid/tensor/tensor.hpp"

namespace histaid::train {

using tensor::Tensor;

// Element-mean binary cross-entropy on logits, in the overflow-free form
//   y * softplus(-z) * pos_weight + (1 - y) * softplus(z).
// `targets` must hold only 0 and 1 and match the shape of `logits`.
Tensor bce_multilabel(const Tensor& logits, const Tensor& targets, double pos_weight = 1.0);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t t = 0;
};

struct AdamHyper {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One AdamW update with bias correction. Decay is decoupled and applied
// first (p <- p - lr*wd*p), then p <- p - lr * m_hat / (sqrt(v_hat) + eps).
// Throws NumericError, leaving everything untouched, if a gradient is not finite.
void adamw_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamHyper& h);

// Linear warmup from 0 to `peak` over ceil(warmup_frac * total) steps, then
// cosine decay to peak * min_ratio at step == total.
double cosine_warmup_lr(std::size_t step, std::size_t total, double peak, double warmup_frac, double min_ratio);

}  // namespace histaid::train
