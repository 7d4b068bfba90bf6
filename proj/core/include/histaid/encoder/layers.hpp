#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "histaid/temporal/positional.hpp"
#include "histaid/tensor/tensor.hpp"

namespace histaid::encoder {

using tensor::Mask;
using tensor::Tensor;

// Ordered, named collection of trainable leaf tensors.
class ParamSet {
 public:
  Tensor add(std::string name, Tensor value);
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<Tensor> tensors() const;
  const Tensor* find(std::string_view name) const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

// Parameter initializers. All draw from the caller's generator so a model is a
// pure function of its seed.
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);
Tensor normal_init(tensor::Shape shape, double stddev, std::mt19937_64& rng);

// Forward-pass switches shared by every layer.
struct Context {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required when training with dropout > 0
};

Tensor maybe_dropout(const Tensor& x, double p, Context& ctx);

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [1 x out], undefined when built without bias

  static Linear create(ParamSet& params, const std::string& name, std::size_t in, std::size_t out,
                       std::mt19937_64& rng, bool with_bias = true);
  Tensor forward(const Tensor& x) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  static LayerNorm create(ParamSet& params, const std::string& name, std::size_t dim);
  Tensor forward(const Tensor& x) const;
};

// Attention internals captured for inspection in tests.
struct AttentionTrace {
  std::vector<Tensor> weights;  // per head, [queries x keys]
  Tensor queries;               // post-rotation, all heads concatenated
  Tensor keys;
  Tensor values;
};

// Rotary or additive position metadata for one token sequence.
struct TokenPositions {
  std::vector<double> positions;  // normalized offsets in [0,1]
  std::vector<std::size_t> slots; // learnable-table rows
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  std::size_t heads = 1;
  std::size_t dim = 0;

  static MultiHeadAttention create(ParamSet& params, const std::string& name, std::size_t dim, std::size_t heads,
                                   std::mt19937_64& rng);

  // queries attend to keys/values; key_mask excludes invalid keys. When
  // `rope` is set, queries and keys (never values) are rotated by their
  // positions before scoring.
  Tensor forward(const Tensor& xq, const Tensor& xkv, std::span<const std::uint8_t> key_mask,
                 const temporal::PositionalMode* rope, std::span<const double> q_positions,
                 std::span<const double> k_positions, AttentionTrace* trace = nullptr) const;
};

struct FeedForward {
  Linear up, down;

  static FeedForward create(ParamSet& params, const std::string& name, std::size_t dim, std::size_t hidden,
                            std::mt19937_64& rng);
  Tensor forward(const Tensor& x) const;
};

// Pre-norm transformer encoder layer with GELU feed-forward:
//   h   = x + Dropout(Attn(LN1(x)))
//   out = h + Dropout(FF(LN2(h)))
struct TransformerLayer {
  LayerNorm ln_attn, ln_ff;
  MultiHeadAttention attn;
  FeedForward ff;
  double dropout = 0.0;

  static TransformerLayer create(ParamSet& params, const std::string& name, std::size_t dim, std::size_t heads,
                                 std::size_t ff_dim, double dropout, std::mt19937_64& rng);
  Tensor forward(const Tensor& x, std::span<const std::uint8_t> mask, const temporal::PositionalMode* rope,
                 std::span<const double> positions, Context& ctx, AttentionTrace* trace = nullptr) const;
};

struct StackConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t dim = 64;
  std::size_t ff_dim = 256;
  double dropout = 0.1;
  temporal::PositionalMode positional;
  std::size_t max_positions = 64;  // rows of the learnable position table
};

// A stack of TransformerLayers with positional injection and a final norm.
class TransformerStack {
 public:
  TransformerStack() = default;
  TransformerStack(ParamSet& params, const std::string& name, const StackConfig& cfg, std::mt19937_64& rng);

  // x: [L x dim]; mask: L entries. Output rows of masked tokens are zeroed.
  Tensor forward(const Tensor& x, const Mask& mask, const TokenPositions& pos, Context& ctx,
                 std::vector<AttentionTrace>* traces = nullptr) const;

  const StackConfig& config() const { return cfg_; }
  std::vector<TransformerLayer>& layers() { return layers_; }
  const std::vector<TransformerLayer>& layers() const { return layers_; }

 private:
  StackConfig cfg_;
  std::vector<TransformerLayer> layers_;
  LayerNorm final_norm_;
  Tensor position_table_;
};

// Scales row r of x by mask[r]; keeps invalid rows at exactly zero.
Tensor zero_masked_rows(const Tensor& x, const Mask& mask);
// x + (row-wise) token on every row where mask is set.
Tensor add_token_to_rows(const Tensor& x, const Tensor& token, const Mask& mask);

}  // namespace histaid::encoder
