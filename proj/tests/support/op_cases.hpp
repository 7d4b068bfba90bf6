#pragma once

// One gradient-check case per differentiable primitive. Each case maps a
// single input tensor to a scalar; other operands are fixed random tensors.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "histaid/encoder/layers.hpp"
#include "histaid/fusion/fusion.hpp"
#include "histaid/temporal/positional.hpp"
#include "histaid/tensor/ops.hpp"
#include "histaid/train/optim.hpp"

namespace histaid::testing {

struct OpCase {
  const char* name;
  tensor::Shape shape;
  std::function<tensor::Tensor(const tensor::Tensor&)> f;
};

inline tensor::Tensor fixed(tensor::Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_tensor(std::move(s), rng);
}

// A generic linear read-out so every output coordinate matters.
inline tensor::Tensor weighted(const tensor::Tensor& y) {
  std::vector<double> w(y.numel());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.0 + static_cast<double>(i));
  return tensor::sum(tensor::mul(y, tensor::Tensor::from(y.shape(), w)));
}

inline std::vector<OpCase> op_cases() {
  using namespace tensor;
  const Mask cols{1, 0, 1, 1};
  const Mask rows{1, 1, 0};
  const std::vector<double> factors{0.5, -2.0, 3.0};
  const std::vector<double> weights{1.0, -0.5, 2.0};
  const std::vector<std::size_t> idx{1, 1, 0};
  const std::vector<double> positions{0.0, 0.4, 1.0};
  const std::vector<std::size_t> slots{2, 0, 1};
  temporal::PositionalMode sincos;
  sincos.kind = temporal::PositionalKind::sincos;
  sincos.dim = 4;
  temporal::PositionalMode learnable;
  learnable.kind = temporal::PositionalKind::learnable;
  const auto targets = Tensor::from({2, 3}, {1, 0, 1, 0, 0, 1});
  return {
      {"matmul", {3, 4}, [](const Tensor& x) { return weighted(matmul(x, fixed({4, 2}, 1))); }},
      {"matmul_rhs", {4, 2}, [](const Tensor& x) { return weighted(matmul(fixed({3, 4}, 2), x)); }},
      {"matmul_nt", {3, 4}, [](const Tensor& x) { return weighted(matmul_nt(x, x)); }},
      {"transpose", {2, 3}, [](const Tensor& x) { return weighted(transpose(x)); }},
      {"add", {2, 3}, [](const Tensor& x) { return weighted(add(x, mul(x, x))); }},
      {"sub", {2, 3}, [](const Tensor& x) { return weighted(sub(fixed({2, 3}, 3), x)); }},
      {"mul", {2, 3}, [](const Tensor& x) { return weighted(mul(x, fixed({2, 3}, 4))); }},
      {"scale", {2, 3}, [](const Tensor& x) { return weighted(scale(x, -1.7)); }},
      {"add_row", {1, 3}, [](const Tensor& x) { return weighted(add_row(fixed({4, 3}, 5), x)); }},
      {"scale_rows", {3, 2}, [factors](const Tensor& x) { return weighted(scale_rows(x, factors)); }},
      {"sum", {2, 2}, [](const Tensor& x) { return sum(mul(x, x)); }},
      {"mean", {2, 2}, [](const Tensor& x) { return mean(mul(x, x)); }},
      {"weighted_row_sum", {3, 2}, [weights](const Tensor& x) { return weighted(weighted_row_sum(x, weights)); }},
      {"softmax", {3, 4}, [](const Tensor& x) { return weighted(softmax_last(x)); }},
      {"softmax_masked", {3, 4}, [cols](const Tensor& x) { return weighted(softmax_last(x, cols)); }},
      {"layer_norm", {3, 5},
       [](const Tensor& x) { return weighted(layer_norm(x, fixed({1, 5}, 6), fixed({1, 5}, 7))); }},
      {"layer_norm_gamma", {1, 5},
       [](const Tensor& g) { return weighted(layer_norm(fixed({3, 5}, 8), g, fixed({1, 5}, 9))); }},
      {"gelu", {2, 4}, [](const Tensor& x) { return weighted(gelu(x)); }},
      {"sigmoid", {2, 4}, [](const Tensor& x) { return weighted(sigmoid(x)); }},
      {"relu", {2, 4}, [](const Tensor& x) { return weighted(relu(x)); }},
      {"abs", {2, 4}, [](const Tensor& x) { return weighted(abs(x)); }},
      {"concat_rows", {2, 3},
       [](const Tensor& x) {
         std::vector<Tensor> parts{x, fixed({1, 3}, 10), x};
         return weighted(concat_rows(parts));
       }},
      {"concat_cols", {2, 3},
       [](const Tensor& x) {
         std::vector<Tensor> parts{fixed({2, 1}, 11), x};
         return weighted(concat_cols(parts));
       }},
      {"slice_rows", {4, 3}, [](const Tensor& x) { return weighted(slice_rows(x, 1, 2)); }},
      {"slice_cols", {3, 4}, [](const Tensor& x) { return weighted(slice_cols(x, 1, 2)); }},
      {"reshape", {2, 6}, [](const Tensor& x) { return weighted(matmul(reshape(x, {3, 4}), fixed({4, 1}, 12))); }},
      {"outer", {1, 3}, [](const Tensor& x) { return weighted(outer(x, fixed({1, 2}, 13))); }},
      {"gather_rows", {2, 3}, [idx](const Tensor& x) { return weighted(gather_rows(x, idx)); }},
      {"dropout", {3, 4},
       [](const Tensor& x) {
         std::mt19937_64 rng(14);  // same mask on every evaluation
         return weighted(dropout(x, 0.3, rng));
       }},
      {"zero_masked_rows", {3, 2}, [rows](const Tensor& x) { return weighted(encoder::zero_masked_rows(x, rows)); }},
      {"add_token_to_rows", {1, 2},
       [rows](const Tensor& t) { return weighted(encoder::add_token_to_rows(fixed({3, 2}, 15), t, rows)); }},
      {"rope", {3, 4},
       [positions](const Tensor& x) { return weighted(temporal::rope_apply(x, positions, 100.0, 3.0)); }},
      {"positional_sincos", {3, 4},
       [sincos, positions](const Tensor& x) { return weighted(temporal::positional_apply(sincos, x, positions)); }},
      {"positional_learnable", {4, 2},
       [learnable, positions, slots](const Tensor& table) {
         return weighted(temporal::positional_apply(learnable, fixed({3, 2}, 16), positions, &table, slots));
       }},
      {"bce", {2, 3}, [targets](const Tensor& z) { return train::bce_multilabel(z, targets, 2.0); }},
      {"concat_mlp", {1, 2},
       [](const Tensor& x) {
         return weighted(fusion::fuse_concat_mlp(x, fixed({1, 3}, 17), fixed({5, 4}, 18), fixed({4, 2}, 19)));
       }},
      {"concat_mlp_w1", {5, 4},
       [](const Tensor& w) {
         return weighted(fusion::fuse_concat_mlp(fixed({1, 2}, 20), fixed({1, 3}, 21), w, fixed({4, 2}, 22)));
       }},
      {"block_x1", {1, 3},
       [](const Tensor& x) {
         return weighted(fusion::fuse_block(x, fixed({1, 2}, 23), fixed({3, 2}, 24), fixed({2, 3}, 25),
                                            fixed({2, 3, 2}, 26), fixed({3, 2}, 27)));
       }},
      {"block_core", {2, 3, 2},
       [](const Tensor& d) {
         return weighted(fusion::fuse_block(fixed({1, 3}, 28), fixed({1, 2}, 29), fixed({3, 2}, 30),
                                            fixed({2, 3}, 31), d, fixed({3, 2}, 32)));
       }},
  };
}

}  // namespace histaid::testing
