#include "histaid/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "histaid/error.hpp"

namespace histaid::tensor {
namespace {

void require_2d(const Tensor& t, const char* op) {
  if (t.dim() != 2) {
    throw ShapeError(std::string(op) + " needs a 2-D tensor, got " + shape_string(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c[i * n + j] += s;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

template <class F, class D>
Tensor unary(const char* op, const Tensor& x, F forward, D derivative) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = forward(xv[i]);
  return make_result(op, x.shape(), std::move(out), {x},
                     [x, derivative](std::span<const double> g, std::span<const double> y) {
                       if (!x.requires_grad()) return;
                       auto xv = x.values();
                       auto gx = x.impl()->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * derivative(xv[i], y[i]);
                     });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const auto m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions disagree for " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  return make_result("matmul", {m, n}, std::move(out), {a, b},
                     [a, b, m, k, n](std::span<const double> g, std::span<const double>) {
                       if (a.requires_grad()) gemm_nt(g.data(), b.values().data(), a.impl()->grad_buffer().data(), m, n, k);
                       if (b.requires_grad()) gemm_tn(a.values().data(), g.data(), b.impl()->grad_buffer().data(), m, k, n);
                     });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  const auto m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) {
    throw ShapeError("matmul_nt: inner dimensions disagree for " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()) + "^T");
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nt(a.values().data(), b.values().data(), out.data(), m, k, n);
  return make_result("matmul_nt", {m, n}, std::move(out), {a, b},
                     [a, b, m, k, n](std::span<const double> g, std::span<const double>) {
                       // dA = G * B, dB = G^T * A
                       if (a.requires_grad()) gemm_nn(g.data(), b.values().data(), a.impl()->grad_buffer().data(), m, n, k);
                       if (b.requires_grad()) gemm_tn(g.data(), a.values().data(), b.impl()->grad_buffer().data(), m, n, k);
                     });
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const auto m = a.shape()[0], n = a.shape()[1];
  auto av = a.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_result("transpose", {n, m}, std::move(out), {a},
                     [a, m, n](std::span<const double> g, std::span<const double>) {
                       auto ga = a.impl()->grad_buffer();
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result("add", a.shape(), std::move(out), {a, b},
                     [a, b](std::span<const double> g, std::span<const double>) {
                       accumulate_grad(a, g);
                       accumulate_grad(b, g);
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result("sub", a.shape(), std::move(out), {a, b},
                     [a, b](std::span<const double> g, std::span<const double>) {
                       accumulate_grad(a, g);
                       if (b.requires_grad()) {
                         auto gb = b.impl()->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result("mul", a.shape(), std::move(out), {a, b},
                     [a, b](std::span<const double> g, std::span<const double>) {
                       auto av = a.values(), bv = b.values();
                       if (a.requires_grad()) {
                         auto ga = a.impl()->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                       }
                       if (b.requires_grad()) {
                         auto gb = b.impl()->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                       }
                     });
}

Tensor scale(const Tensor& a, double factor) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return make_result("scale", a.shape(), std::move(out), {a},
                     [a, factor](std::span<const double> g, std::span<const double>) {
                       auto ga = a.impl()->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
                     });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  const auto n = x.cols();
  if (bias.numel() != n) {
    throw ShapeError("add_row: bias " + shape_string(bias.shape()) + " does not match rows of " +
                     shape_string(x.shape()));
  }
  auto xv = x.values(), bv = bias.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + bv[i % n];
  return make_result("add_row", x.shape(), std::move(out), {x, bias},
                     [x, bias, n](std::span<const double> g, std::span<const double>) {
                       accumulate_grad(x, g);
                       if (bias.requires_grad()) {
                         auto gb = bias.impl()->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
                       }
                     });
}

Tensor scale_rows(const Tensor& x, std::span<const double> factors) {
  const auto r = x.rows(), n = x.cols();
  if (factors.size() != r) {
    throw ShapeError("scale_rows: " + std::to_string(factors.size()) + " factors for " + std::to_string(r) + " rows");
  }
  std::vector<double> f(factors.begin(), factors.end());
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] * f[i];
  return make_result("scale_rows", x.shape(), std::move(out), {x},
                     [x, f = std::move(f), n](std::span<const double> g, std::span<const double>) {
                       auto gx = x.impl()->grad_buffer();
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * f[i / n];
                     });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result("sum", {1}, {s}, {x}, [x](std::span<const double> g, std::span<const double>) {
    auto gx = x.impl()->grad_buffer();
    for (double& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor weighted_row_sum(const Tensor& x, std::span<const double> weights) {
  const auto r = x.rows(), n = x.cols();
  if (weights.size() != r) {
    throw ShapeError("weighted_row_sum: " + std::to_string(weights.size()) + " weights for " + std::to_string(r) +
                     " rows");
  }
  std::vector<double> w(weights.begin(), weights.end());
  auto xv = x.values();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += w[i] * xv[i * n + j];
  return make_result("weighted_row_sum", {1, n}, std::move(out), {x},
                     [x, w = std::move(w), n](std::span<const double> g, std::span<const double>) {
                       auto gx = x.impl()->grad_buffer();
                       for (std::size_t i = 0; i < w.size(); ++i)
                         for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += w[i] * g[j];
                     });
}

Tensor softmax_last(const Tensor& x, std::span<const std::uint8_t> mask) {
  const auto r = x.rows(), n = x.cols();
  const bool per_column = mask.size() == n && mask.size() != x.numel();
  if (!mask.empty() && mask.size() != n && mask.size() != x.numel()) {
    throw ShapeError("softmax_last: mask of " + std::to_string(mask.size()) + " entries for " +
                     shape_string(x.shape()));
  }
  auto keep = [&](std::size_t i, std::size_t j) -> bool {
    if (mask.empty()) return true;
    return per_column ? mask[j] != 0 : mask[i * n + j] != 0;
  };
  auto xv = x.values();
  std::vector<double> out(xv.size(), 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (keep(i, j)) mx = std::max(mx, xv[i * n + j]);
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw DegenerateMaskError("softmax_last: row " + std::to_string(i) + " is fully masked");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!keep(i, j)) continue;
      out[i * n + j] = std::exp(xv[i * n + j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return make_result("softmax_last", x.shape(), std::move(out), {x},
                     [x, r, n](std::span<const double> g, std::span<const double> y) {
                       auto gx = x.impl()->grad_buffer();
                       for (std::size_t i = 0; i < r; ++i) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j) dot += y[i * n + j] * g[i * n + j];
                         for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const auto r = x.rows(), d = x.cols();
  if (gamma.numel() != d || beta.numel() != d) {
    throw ShapeError("layer_norm: gamma/beta " + shape_string(gamma.shape()) + "/" + shape_string(beta.shape()) +
                     " do not match feature dimension of " + shape_string(x.shape()));
  }
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  auto xv = x.values(), gv = gamma.values(), bv = beta.values();
  std::vector<double> xhat(xv.size()), inv_std(r), out(xv.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xv.data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mu) * inv_std[i];
      out[i * d + j] = gv[j] * xhat[i * d + j] + bv[j];
    }
  }
  return make_result(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), r, d](std::span<const double> g,
                                                                                  std::span<const double>) {
        auto gv = gamma.values();
        if (gamma.requires_grad()) {
          auto gg = gamma.impl()->grad_buffer();
          for (std::size_t i = 0; i < r * d; ++i) gg[i % d] += g[i] * xhat[i];
        }
        if (beta.requires_grad()) {
          auto gb = beta.impl()->grad_buffer();
          for (std::size_t i = 0; i < r * d; ++i) gb[i % d] += g[i];
        }
        if (!x.requires_grad()) return;
        auto gx = x.impl()->grad_buffer();
        for (std::size_t i = 0; i < r; ++i) {
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = g[i * d + j] * gv[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xhat[i * d + j];
          }
          mean_dxh /= static_cast<double>(d);
          mean_dxh_xh /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = g[i * d + j] * gv[j];
            gx[i * d + j] += inv_std[i] * (dxh - mean_dxh - xhat[i * d + j] * mean_dxh_xh);
          }
        }
      });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      "gelu", x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& x) {
  return unary(
      "abs", x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows: nothing to concatenate");
  const auto n = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) {
      throw ShapeError("concat_rows: column mismatch " + shape_string(parts.front().shape()) + " vs " +
                       shape_string(p.shape()));
    }
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * n);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result("concat_rows", {total, n}, std::move(out), inputs,
                     [inputs](std::span<const double> g, std::span<const double>) {
                       std::size_t offset = 0;
                       for (const auto& p : inputs) {
                         accumulate_grad(p, g.subspan(offset, p.numel()));
                         offset += p.numel();
                       }
                     });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: nothing to concatenate");
  const auto r = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) {
      throw ShapeError("concat_cols: row mismatch " + shape_string(parts.front().shape()) + " vs " +
                       shape_string(p.shape()));
    }
    total += p.cols();
  }
  std::vector<double> out(r * total);
  std::size_t col = 0;
  for (const auto& p : parts) {
    const auto c = p.cols();
    auto pv = p.values();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(pv.data() + i * c, c, out.data() + i * total + col);
    col += c;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result("concat_cols", {r, total}, std::move(out), inputs,
                     [inputs, r, total](std::span<const double> g, std::span<const double>) {
                       std::size_t col = 0;
                       for (const auto& p : inputs) {
                         const auto c = p.cols();
                         if (p.requires_grad()) {
                           auto gp = p.impl()->grad_buffer();
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += g[i * total + col + j];
                         }
                         col += c;
                       }
                     });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  const auto n = x.cols();
  if (count == 0 || begin + count > x.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") out of range for " +
                     shape_string(x.shape()));
  }
  auto xv = x.values();
  std::vector<double> out(xv.begin() + begin * n, xv.begin() + (begin + count) * n);
  return make_result("slice_rows", {count, n}, std::move(out), {x},
                     [x, begin, n](std::span<const double> g, std::span<const double>) {
                       auto gx = x.impl()->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) gx[begin * n + i] += g[i];
                     });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  const auto r = x.rows(), n = x.cols();
  if (count == 0 || begin + count > n) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") out of range for " +
                     shape_string(x.shape()));
  }
  auto xv = x.values();
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i) std::copy_n(xv.data() + i * n + begin, count, out.data() + i * count);
  return make_result("slice_cols", {r, count}, std::move(out), {x},
                     [x, begin, count, r, n](std::span<const double> g, std::span<const double>) {
                       auto gx = x.impl()->grad_buffer();
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < count; ++j) gx[i * n + begin + j] += g[i * count + j];
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  return make_result("reshape", std::move(shape), x.to_vector(), {x},
                     [x](std::span<const double> g, std::span<const double>) { accumulate_grad(x, g); });
}

Tensor outer(const Tensor& u, const Tensor& v) {
  const auto l = u.numel(), m = v.numel();
  auto uv = u.values(), vv = v.values();
  std::vector<double> out(l * m);
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = uv[i] * vv[j];
  return make_result("outer", {l, m}, std::move(out), {u, v},
                     [u, v, l, m](std::span<const double> g, std::span<const double>) {
                       auto uv = u.values(), vv = v.values();
                       if (u.requires_grad()) {
                         auto gu = u.impl()->grad_buffer();
                         for (std::size_t i = 0; i < l; ++i)
                           for (std::size_t j = 0; j < m; ++j) gu[i] += g[i * m + j] * vv[j];
                       }
                       if (v.requires_grad()) {
                         auto gv = v.impl()->grad_buffer();
                         for (std::size_t i = 0; i < l; ++i)
                           for (std::size_t j = 0; j < m; ++j) gv[j] += g[i * m + j] * uv[i];
                       }
                     });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices) {
  const auto rows = table.rows(), n = table.cols();
  if (indices.empty()) throw ContractError("gather_rows: no indices");
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  auto tv = table.values();
  std::vector<double> out(idx.size() * n);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(idx[i]) + " out of range for " +
                       shape_string(table.shape()));
    }
    std::copy_n(tv.data() + idx[i] * n, n, out.data() + i * n);
  }
  const auto count = idx.size();
  return make_result("gather_rows", {count, n}, std::move(out), {table},
                     [table, idx = std::move(idx), n](std::span<const double> g, std::span<const double>) {
                       auto gt = table.impl()->grad_buffer();
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t j = 0; j < n; ++j) gt[idx[i] * n + j] += g[i * n + j];
                     });
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must lie in [0, 1)");
  if (p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  std::vector<double> factor(x.numel());
  for (double& f : factor) f = keep(rng) ? s : 0.0;
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor[i];
  return make_result("dropout", x.shape(), std::move(out), {x},
                     [x, factor = std::move(factor)](std::span<const double> g, std::span<const double>) {
                       auto gx = x.impl()->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor[i];
                     });
}

}  // namespace histaid::tensor
