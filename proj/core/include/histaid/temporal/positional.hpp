#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "histaid/tensor/tensor.hpp"

namespace histaid::temporal {

using tensor::Tensor;

enum class PositionalKind { none, sincos, learnable, rope };

std::string to_string(PositionalKind kind);
PositionalKind parse_positional(std::string_view name);

struct PositionalMode {
  PositionalKind kind = PositionalKind::rope;
  // Rotated/encoded width. For rope this is the attention head width.
  std::size_t dim = 0;
  double rope_base = 10000.0;
  // Normalized offsets in [0,1] become positions p = t_norm * position_scale.
  // 49 spans the angular range of a 50-slot integer-position sequence.
  double position_scale = 49.0;

  // Throws ConfigError when sincos/rope is asked for an odd width.
  void validate() const;
};

// Min-max normalization of time offsets to [0,1]. All-equal input (including
// a single offset) maps to zeros.
std::vector<double> normalize_offsets(std::span<const double> offsets);

// Rotates each column pair (2j, 2j+1) of row k by angle theta_j * positions[k] * scale,
// theta_j = base^(-2j/d). Differentiable in x.
Tensor rope_apply(const Tensor& x, std::span<const double> positions, double base, double scale);

// Interleaved [sin(theta_j p), cos(theta_j p)] rows for each position p.
Tensor sincos_table(std::span<const double> positions, std::size_t d, double base);

// Injects positional information into a token sequence.
//   none      -> seq unchanged
//   sincos    -> seq + sincos_table(positions * scale)
//   learnable -> seq + learned_table rows selected by slot (defaults to row index)
//   rope      -> seq unchanged; rotation happens on queries/keys inside attention
Tensor positional_apply(const PositionalMode& mode, const Tensor& seq, std::span<const double> positions,
                        const Tensor* learned_table = nullptr, std::span<const std::size_t> slots = {});

}  // namespace histaid::temporal
