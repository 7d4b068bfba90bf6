#include "histaid/encoder/layers.hpp"

#include <cmath>

#include "histaid/error.hpp"
#include "histaid/tensor/ops.hpp"

namespace histaid::encoder {

namespace ops = histaid::tensor;

Tensor ParamSet::add(std::string name, Tensor value) {
  for (const auto& [existing, _] : items_) {
    if (existing == name) throw ContractError("duplicate parameter name '" + name + "'");
  }
  value.set_requires_grad(true);
  items_.emplace_back(std::move(name), value);
  return value;
}

std::vector<Tensor> ParamSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(items_.size());
  for (const auto& [_, t] : items_) out.push_back(t);
  return out;
}

const Tensor* ParamSet::find(std::string_view name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : items_) n += t.numel();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& [_, t] : items_) t.zero_grad();
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  std::vector<double> v(fan_in * fan_out);
  for (double& x : v) x = dist(rng);
  return Tensor::from({fan_in, fan_out}, std::move(v));
}

Tensor normal_init(tensor::Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(tensor::shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor maybe_dropout(const Tensor& x, double p, Context& ctx) {
  if (!ctx.training || p <= 0.0) return x;
  if (ctx.rng == nullptr) throw ContractError("dropout in training mode needs a generator");
  return ops::dropout(x, p, *ctx.rng);
}

Linear Linear::create(ParamSet& params, const std::string& name, std::size_t in, std::size_t out,
                      std::mt19937_64& rng, bool with_bias) {
  Linear l;
  l.weight = params.add(name + ".weight", xavier_uniform(in, out, rng));
  if (with_bias) l.bias = params.add(name + ".bias", Tensor::zeros({1, out}));
  return l;
}

Tensor Linear::forward(const Tensor& x) const {
  auto y = ops::matmul(x, weight);
  return bias.defined() ? ops::add_row(y, bias) : y;
}

LayerNorm LayerNorm::create(ParamSet& params, const std::string& name, std::size_t dim) {
  LayerNorm ln;
  ln.gamma = params.add(name + ".gamma", Tensor::full({dim}, 1.0));
  ln.beta = params.add(name + ".beta", Tensor::zeros({dim}));
  return ln;
}

Tensor LayerNorm::forward(const Tensor& x) const { return ops::layer_norm(x, gamma, beta, eps); }

MultiHeadAttention MultiHeadAttention::create(ParamSet& params, const std::string& name, std::size_t dim,
                                              std::size_t heads, std::mt19937_64& rng) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("model dimension " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  MultiHeadAttention a;
  a.q = Linear::create(params, name + ".q", dim, dim, rng);
  a.k = Linear::create(params, name + ".k", dim, dim, rng);
  a.v = Linear::create(params, name + ".v", dim, dim, rng);
  a.o = Linear::create(params, name + ".o", dim, dim, rng);
  a.heads = heads;
  a.dim = dim;
  return a;
}

Tensor MultiHeadAttention::forward(const Tensor& xq, const Tensor& xkv, std::span<const std::uint8_t> key_mask,
                                   const temporal::PositionalMode* rope, std::span<const double> q_positions,
                                   std::span<const double> k_positions, AttentionTrace* trace) const {
  const auto queries = q.forward(xq);
  const auto keys = k.forward(xkv);
  const auto values = v.forward(xkv);
  const std::size_t head_dim = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  std::vector<Tensor> outputs, rotated_q, rotated_k;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto qh = heads == 1 ? queries : ops::slice_cols(queries, h * head_dim, head_dim);
    auto kh = heads == 1 ? keys : ops::slice_cols(keys, h * head_dim, head_dim);
    auto vh = heads == 1 ? values : ops::slice_cols(values, h * head_dim, head_dim);
    if (rope != nullptr) {
      qh = temporal::rope_apply(qh, q_positions, rope->rope_base, rope->position_scale);
      kh = temporal::rope_apply(kh, k_positions, rope->rope_base, rope->position_scale);
    }
    auto weights = ops::softmax_last(ops::scale(ops::matmul_nt(qh, kh), inv_sqrt), key_mask);
    outputs.push_back(ops::matmul(weights, vh));
    if (trace != nullptr) {
      trace->weights.push_back(weights);
      rotated_q.push_back(qh);
      rotated_k.push_back(kh);
    }
  }
  if (trace != nullptr) {
    trace->queries = heads == 1 ? rotated_q.front() : ops::concat_cols(rotated_q);
    trace->keys = heads == 1 ? rotated_k.front() : ops::concat_cols(rotated_k);
    trace->values = values;
  }
  auto merged = heads == 1 ? outputs.front() : ops::concat_cols(outputs);
  return o.forward(merged);
}

FeedForward FeedForward::create(ParamSet& params, const std::string& name, std::size_t dim, std::size_t hidden,
                                std::mt19937_64& rng) {
  return {Linear::create(params, name + ".up", dim, hidden, rng), Linear::create(params, name + ".down", hidden, dim, rng)};
}

Tensor FeedForward::forward(const Tensor& x) const { return down.forward(ops::gelu(up.forward(x))); }

TransformerLayer TransformerLayer::create(ParamSet& params, const std::string& name, std::size_t dim,
                                          std::size_t heads, std::size_t ff_dim, double dropout,
                                          std::mt19937_64& rng) {
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  TransformerLayer layer;
  layer.ln_attn = LayerNorm::create(params, name + ".ln_attn", dim);
  layer.attn = MultiHeadAttention::create(params, name + ".attn", dim, heads, rng);
  layer.ln_ff = LayerNorm::create(params, name + ".ln_ff", dim);
  layer.ff = FeedForward::create(params, name + ".ff", dim, ff_dim, rng);
  layer.dropout = dropout;
  return layer;
}

Tensor TransformerLayer::forward(const Tensor& x, std::span<const std::uint8_t> mask,
                                 const temporal::PositionalMode* rope, std::span<const double> positions,
                                 Context& ctx, AttentionTrace* trace) const {
  const auto normed = ln_attn.forward(x);
  auto h = ops::add(x, maybe_dropout(attn.forward(normed, normed, mask, rope, positions, positions, trace), dropout, ctx));
  return ops::add(h, maybe_dropout(ff.forward(ln_ff.forward(h)), dropout, ctx));
}

TransformerStack::TransformerStack(ParamSet& params, const std::string& name, const StackConfig& cfg,
                                   std::mt19937_64& rng)
    : cfg_(cfg) {
  auto pos = cfg_.positional;
  pos.dim = cfg_.positional.kind == temporal::PositionalKind::rope ? cfg_.dim / std::max<std::size_t>(cfg_.heads, 1)
                                                                   : cfg_.dim;
  cfg_.positional = pos;
  cfg_.positional.validate();
  for (std::size_t i = 0; i < cfg_.layers; ++i) {
    layers_.push_back(TransformerLayer::create(params, name + ".layer" + std::to_string(i), cfg_.dim, cfg_.heads,
                                               cfg_.ff_dim, cfg_.dropout, rng));
  }
  if (cfg_.layers > 0) final_norm_ = LayerNorm::create(params, name + ".final_norm", cfg_.dim);
  if (cfg_.positional.kind == temporal::PositionalKind::learnable) {
    position_table_ = params.add(name + ".positions", normal_init({cfg_.max_positions, cfg_.dim}, 0.02, rng));
  }
}

Tensor TransformerStack::forward(const Tensor& x, const Mask& mask, const TokenPositions& pos, Context& ctx,
                                 std::vector<AttentionTrace>* traces) const {
  if (x.cols() != cfg_.dim) {
    throw ShapeError("transformer stack expects width " + std::to_string(cfg_.dim) + ", got " +
                     tensor::shape_string(x.shape()));
  }
  if (mask.size() != x.rows()) throw ShapeError("mask length does not match token count");
  const auto* rope = cfg_.positional.kind == temporal::PositionalKind::rope ? &cfg_.positional : nullptr;
  auto h = temporal::positional_apply(cfg_.positional, x, pos.positions,
                                      position_table_.defined() ? &position_table_ : nullptr, pos.slots);
  for (const auto& layer : layers_) {
    AttentionTrace* trace = nullptr;
    if (traces != nullptr) trace = &traces->emplace_back();
    h = layer.forward(h, mask, rope, pos.positions, ctx, trace);
  }
  if (!layers_.empty()) h = final_norm_.forward(h);
  return zero_masked_rows(h, mask);
}

Tensor zero_masked_rows(const Tensor& x, const Mask& mask) {
  bool all = true;
  for (auto m : mask) all = all && m != 0;
  if (all) return x;
  std::vector<double> f(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) f[i] = mask[i] ? 1.0 : 0.0;
  return ops::scale_rows(x, f);
}

Tensor add_token_to_rows(const Tensor& x, const Tensor& token, const Mask& mask) {
  std::vector<double> sel(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) sel[i] = mask[i] ? 1.0 : 0.0;
  return ops::add(x, ops::outer(Tensor::row(std::move(sel)), token));
}

}  // namespace histaid::encoder
