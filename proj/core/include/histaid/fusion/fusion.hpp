#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "histaid/encoder/layers.hpp"
#include "histaid/encoder/sequence.hpp"

namespace histaid::fusion {

using encoder::AttentionTrace;
using encoder::Context;
using encoder::EmbeddingSequence;
using encoder::EncoderConfig;
using encoder::ParamSet;
using tensor::Tensor;

enum class FusionMethod { vilt, mbt, concat_mlp, block, meter, ensemble };

std::string to_string(FusionMethod m);
FusionMethod parse_fusion(std::string_view name);
// vilt, mbt and meter consume token sequences; the others pooled vectors.
bool is_sequence_level(FusionMethod m);

struct FusionConfig {
  std::size_t vilt_layers = 1;
  std::size_t mbt_layers = 6;
  std::size_t mbt_fusion_layers = 3;  // the last N of mbt_layers exchange fusion tokens
  std::size_t bottleneck = 4;         // fusion tokens
  std::size_t meter_layers = 2;
  std::size_t concat_hidden = 0;  // 0 selects I + J
  std::size_t block_l = 8;
  std::size_t block_m = 8;
  std::size_t block_n = 8;

  void validate() const;
};

// y = W2^T sigmoid(W1^T [x1, x2]); x1 [1 x I], x2 [1 x J], W1 [(I+J) x H], W2 [H x M].
Tensor fuse_concat_mlp(const Tensor& x1, const Tensor& x2, const Tensor& w1, const Tensor& w2);

// Block-term bilinear fusion y = C (D x1 (x1^T A) x2 (x2^T B)) with
// A [I x L], B [J x M], core D [L x M x N], C [K x N]; returns [1 x K].
Tensor fuse_block(const Tensor& x1, const Tensor& x2, const Tensor& a, const Tensor& b, const Tensor& core,
                  const Tensor& c);

// Element-wise mean of two logit vectors.
Tensor ensemble_average(const Tensor& logits_a, const Tensor& logits_b);

// Early fusion: [CLS] || image slots || text slots with per-modality tokens
// added to valid slots, positional signal applied, then a shallow transformer.
// Returns the [CLS] output, [1 x D].
Tensor fuse_vilt(const EmbeddingSequence& image, const EmbeddingSequence& text, const Tensor& cls,
                 const Tensor& image_token, const Tensor& text_token, const encoder::TransformerStack& stack,
                 Context& ctx, std::vector<AttentionTrace>* traces = nullptr);

class ViltFusion {
 public:
  ViltFusion() = default;
  ViltFusion(ParamSet& params, const std::string& name, const EncoderConfig& enc, const FusionConfig& cfg,
             std::mt19937_64& rng);

  Tensor fuse(const EmbeddingSequence& image, const EmbeddingSequence& text, Context& ctx,
              std::vector<AttentionTrace>* traces = nullptr) const;

  Tensor cls, image_token, text_token;
  encoder::TransformerStack stack;
};

struct MbtTrace {
  // Per fusion layer: fusion-token outputs of each branch and their average.
  std::vector<Tensor> image_updates, text_updates, fused;
};

struct MbtOutput {
  Tensor joint;      // mean of the final fusion tokens, [1 x D]
  Tensor image_cls;  // branch [CLS] outputs
  Tensor text_cls;
};

// Bottleneck fusion: per-modality transformers whose last layers exchange
// information only through shared fusion tokens.
class MbtFusion {
 public:
  MbtFusion() = default;
  MbtFusion(ParamSet& params, const std::string& name, const EncoderConfig& enc, const FusionConfig& cfg,
            std::mt19937_64& rng);

  MbtOutput fuse(const EmbeddingSequence& image, const EmbeddingSequence& text, Context& ctx,
                 MbtTrace* trace = nullptr) const;

  Tensor image_cls, text_cls, fusion_tokens, position_table;
  std::vector<encoder::TransformerLayer> image_layers, text_layers;
  encoder::LayerNorm image_norm, text_norm, fusion_norm;
  std::size_t fusion_layers = 0;
  temporal::PositionalMode positional;
};

struct CoAttentionLayer {
  encoder::LayerNorm ln_self, ln_query, ln_context, ln_ff;
  encoder::MultiHeadAttention self_attn, cross_attn;
  encoder::FeedForward ff;
};

struct MeterTrace {
  std::vector<AttentionTrace> image_to_text;  // image queries over text keys, per layer
  std::vector<AttentionTrace> text_to_image;
};

struct MeterOutput {
  Tensor joint;  // perceptron over [image CLS, text CLS], [1 x D]
  Tensor image_cls;
  Tensor text_cls;
};

// Two co-attention stacks: self-attention within a modality, then
// cross-attention softmax(Q1 K2^T / sqrt(d_k)) V2 and the symmetric term.
class MeterFusion {
 public:
  MeterFusion() = default;
  MeterFusion(ParamSet& params, const std::string& name, const EncoderConfig& enc, const FusionConfig& cfg,
              std::mt19937_64& rng);

  MeterOutput fuse(const EmbeddingSequence& image, const EmbeddingSequence& text, Context& ctx,
                   MeterTrace* trace = nullptr) const;

  Tensor image_cls, text_cls, position_table;
  std::vector<CoAttentionLayer> image_layers, text_layers;
  encoder::LayerNorm image_norm, text_norm;
  encoder::Linear head;
  temporal::PositionalMode positional;
  double dropout = 0.0;
};

struct ConcatMlpFusion {
  Tensor w1, w2;
  static ConcatMlpFusion create(ParamSet& params, const std::string& name, std::size_t in1, std::size_t in2,
                                std::size_t hidden, std::size_t out, std::mt19937_64& rng);
  Tensor fuse(const Tensor& x1, const Tensor& x2) const { return fuse_concat_mlp(x1, x2, w1, w2); }
};

struct BlockFusion {
  Tensor a, b, core, c;
  static BlockFusion create(ParamSet& params, const std::string& name, std::size_t in1, std::size_t in2,
                            const FusionConfig& cfg, std::size_t out, std::mt19937_64& rng);
  Tensor fuse(const Tensor& x1, const Tensor& x2) const { return fuse_block(x1, x2, a, b, core, c); }
};

// Multiply-accumulate counts (x2 for FLOPs) of one forward pass.
struct FlopCount {
  double fusion_head = 0.0;
  double total = 0.0;
};

double linear_flops(std::size_t rows, std::size_t in, std::size_t out);
double transformer_layer_flops(std::size_t tokens, std::size_t dim, std::size_t ff_dim);
double cross_layer_flops(std::size_t queries, std::size_t keys, std::size_t dim, std::size_t ff_dim);

// Fusion-head FLOPs for sequences of `image_tokens` and `text_tokens` rows
// (pooled vector methods use one row each).
double fusion_head_flops(FusionMethod method, const EncoderConfig& enc, const FusionConfig& cfg,
                         std::size_t image_tokens, std::size_t text_tokens);

}  // namespace histaid::fusion
