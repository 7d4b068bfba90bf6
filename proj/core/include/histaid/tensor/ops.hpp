#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "histaid/tensor/tensor.hpp"

// Differentiable operations on Tensor. Operations that work "per row" treat a
// tensor of shape [..., n] as rows() x n.
namespace histaid::tensor {

// [m x k] x [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);
// a x b^T for a [m x k], b [n x k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// x[..., n] + bias[n], bias broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& bias);
// Multiplies row r of x by the constant factors[r].
Tensor scale_rows(const Tensor& x, std::span<const double> factors);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Weighted sum of rows: sum_r weights[r] * x[r, :] -> [1 x n].
Tensor weighted_row_sum(const Tensor& x, std::span<const double> weights);

// Row-wise softmax over the last dimension, stabilized by max subtraction.
// `mask` is empty, one entry per column (broadcast across rows) or one entry
// per element. Masked entries come out exactly 0.
Tensor softmax_last(const Tensor& x, std::span<const std::uint8_t> mask = {});

// Per-row normalization to zero mean and unit (biased) variance, then
// gamma * xhat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor reshape(const Tensor& x, Shape shape);
// u [1 x l], v [1 x m] -> u^T v as [l x m].
Tensor outer(const Tensor& u, const Tensor& v);
// Rows of `table` selected by index -> [indices.size() x cols].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices);

// Inverted dropout: zeroes entries with probability p, scales survivors by 1/(1-p).
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace histaid::tensor
