#include "histaid/temporal/positional.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "histaid/error.hpp"
#include "histaid/tensor/ops.hpp"

namespace histaid::temporal {

std::string to_string(PositionalKind kind) {
  switch (kind) {
    case PositionalKind::none: return "none";
    case PositionalKind::sincos: return "sincos";
    case PositionalKind::learnable: return "learnable";
    case PositionalKind::rope: return "rope";
  }
  return "?";
}

PositionalKind parse_positional(std::string_view name) {
  if (name == "none") return PositionalKind::none;
  if (name == "sincos") return PositionalKind::sincos;
  if (name == "learnable") return PositionalKind::learnable;
  if (name == "rope") return PositionalKind::rope;
  throw ConfigError("unknown positional mode '" + std::string(name) + "' (none|sincos|learnable|rope)");
}

void PositionalMode::validate() const {
  if ((kind == PositionalKind::rope || kind == PositionalKind::sincos) && dim % 2 != 0) {
    throw ConfigError(to_string(kind) + " positional encoding needs an even width, got " + std::to_string(dim));
  }
  if (!(rope_base > 0.0)) throw ConfigError("rope_base must be positive");
  if (!std::isfinite(position_scale)) throw ConfigError("position_scale must be finite");
}

std::vector<double> normalize_offsets(std::span<const double> offsets) {
  if (offsets.empty()) throw ContractError("normalize_offsets: empty offset list");
  for (double t : offsets) {
    if (!std::isfinite(t)) throw NumericError("normalize_offsets: non-finite offset");
  }
  const auto [lo, hi] = std::minmax_element(offsets.begin(), offsets.end());
  const double min = *lo, range = *hi - *lo;
  std::vector<double> out(offsets.size(), 0.0);
  if (range > 0.0) {
    for (std::size_t i = 0; i < offsets.size(); ++i) out[i] = (offsets[i] - min) / range;
  }
  return out;
}

namespace {

void check_positions(std::span<const double> positions, std::size_t rows) {
  if (positions.size() != rows) {
    throw ShapeError("expected " + std::to_string(rows) + " positions, got " + std::to_string(positions.size()));
  }
  for (double p : positions) {
    if (!std::isfinite(p)) throw NumericError("non-finite position");
  }
}

}  // namespace

Tensor rope_apply(const Tensor& x, std::span<const double> positions, double base, double scale) {
  const auto rows = x.rows(), d = x.cols();
  if (d % 2 != 0) throw ConfigError("rope needs an even width, got " + std::to_string(d));
  check_positions(positions, rows);
  const std::size_t half = d / 2;
  std::vector<double> cos_t(rows * half), sin_t(rows * half);
  for (std::size_t k = 0; k < rows; ++k) {
    const double p = positions[k] * scale;
    for (std::size_t j = 0; j < half; ++j) {
      const double theta = std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(d));
      cos_t[k * half + j] = std::cos(theta * p);
      sin_t[k * half + j] = std::sin(theta * p);
    }
  }
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t k = 0; k < rows; ++k) {
    for (std::size_t j = 0; j < half; ++j) {
      const double c = cos_t[k * half + j], s = sin_t[k * half + j];
      const double a = xv[k * d + 2 * j], b = xv[k * d + 2 * j + 1];
      out[k * d + 2 * j] = a * c - b * s;
      out[k * d + 2 * j + 1] = a * s + b * c;
    }
  }
  return tensor::make_result(
      "rope", x.shape(), std::move(out), {x},
      [x, cos_t = std::move(cos_t), sin_t = std::move(sin_t), rows, d, half](std::span<const double> g,
                                                                            std::span<const double>) {
        // Transpose of a rotation is the rotation by the negated angle.
        auto gx = x.impl()->grad_buffer();
        for (std::size_t k = 0; k < rows; ++k) {
          for (std::size_t j = 0; j < half; ++j) {
            const double c = cos_t[k * half + j], s = sin_t[k * half + j];
            const double ga = g[k * d + 2 * j], gb = g[k * d + 2 * j + 1];
            gx[k * d + 2 * j] += ga * c + gb * s;
            gx[k * d + 2 * j + 1] += -ga * s + gb * c;
          }
        }
      });
}

Tensor sincos_table(std::span<const double> positions, std::size_t d, double base) {
  if (d == 0 || d % 2 != 0) throw ConfigError("sincos table needs an even width, got " + std::to_string(d));
  if (positions.empty()) throw ContractError("sincos_table: no positions");
  check_positions(positions, positions.size());
  std::vector<double> out(positions.size() * d);
  for (std::size_t k = 0; k < positions.size(); ++k) {
    for (std::size_t j = 0; j < d / 2; ++j) {
      const double theta = std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(d));
      out[k * d + 2 * j] = std::sin(theta * positions[k]);
      out[k * d + 2 * j + 1] = std::cos(theta * positions[k]);
    }
  }
  return Tensor::from({positions.size(), d}, std::move(out));
}

Tensor positional_apply(const PositionalMode& mode, const Tensor& seq, std::span<const double> positions,
                        const Tensor* learned_table, std::span<const std::size_t> slots) {
  switch (mode.kind) {
    case PositionalKind::none:
    case PositionalKind::rope:
      return seq;
    case PositionalKind::sincos: {
      check_positions(positions, seq.rows());
      std::vector<double> scaled(positions.begin(), positions.end());
      for (double& p : scaled) p *= mode.position_scale;
      return tensor::add(seq, tensor::reshape(sincos_table(scaled, seq.cols(), mode.rope_base), seq.shape()));
    }
    case PositionalKind::learnable: {
      if (learned_table == nullptr || !learned_table->defined()) {
        throw ConfigError("learnable positional mode requires a learned position table");
      }
      std::vector<std::size_t> index;
      if (slots.empty()) {
        index.resize(seq.rows());
        std::iota(index.begin(), index.end(), std::size_t{0});
      } else {
        if (slots.size() != seq.rows()) throw ShapeError("positional_apply: slot count does not match sequence");
        index.assign(slots.begin(), slots.end());
      }
      const auto capacity = learned_table->rows();
      for (auto s : index) {
        if (s >= capacity) {
          throw ConfigError("sequence slot " + std::to_string(s) + " exceeds learned position table of " +
                            std::to_string(capacity) + " rows");
        }
      }
      return tensor::add(seq, tensor::reshape(tensor::gather_rows(*learned_table, index), seq.shape()));
    }
  }
  return seq;
}

}  // namespace histaid::temporal
