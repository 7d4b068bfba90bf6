#include "histaid/fusion/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "histaid/error.hpp"
#include "histaid/tensor/ops.hpp"

namespace histaid::fusion {

namespace ops = histaid::tensor;
using encoder::LayerNorm;
using encoder::Linear;
using encoder::Mask;
using encoder::maybe_dropout;

std::string to_string(FusionMethod m) {
  switch (m) {
    case FusionMethod::vilt: return "vilt";
    case FusionMethod::mbt: return "mbt";
    case FusionMethod::concat_mlp: return "concat_mlp";
    case FusionMethod::block: return "block";
    case FusionMethod::meter: return "meter";
    case FusionMethod::ensemble: return "ensemble";
  }
  return "?";
}

FusionMethod parse_fusion(std::string_view name) {
  if (name == "vilt") return FusionMethod::vilt;
  if (name == "mbt") return FusionMethod::mbt;
  if (name == "concat_mlp") return FusionMethod::concat_mlp;
  if (name == "block") return FusionMethod::block;
  if (name == "meter") return FusionMethod::meter;
  if (name == "ensemble") return FusionMethod::ensemble;
  throw ConfigError("unknown fusion method '" + std::string(name) + "' (vilt|mbt|concat_mlp|block|meter|ensemble)");
}

bool is_sequence_level(FusionMethod m) {
  return m == FusionMethod::vilt || m == FusionMethod::mbt || m == FusionMethod::meter;
}

void FusionConfig::validate() const {
  if (bottleneck < 1) throw ConfigError("MBT needs at least one fusion token");
  if (mbt_fusion_layers > mbt_layers) throw ConfigError("MBT fusion layers exceed total MBT layers");
  if (block_l == 0 || block_m == 0 || block_n == 0) throw ConfigError("Block ranks must be positive");
}

Tensor fuse_concat_mlp(const Tensor& x1, const Tensor& x2, const Tensor& w1, const Tensor& w2) {
  const auto i = x1.numel(), j = x2.numel();
  if (w1.dim() != 2 || w1.shape()[0] != i + j) {
    throw ShapeError("concat_mlp: W1 " + ops::shape_string(w1.shape()) + " does not accept " + std::to_string(i + j) +
                     " inputs");
  }
  if (w2.dim() != 2 || w2.shape()[0] != w1.shape()[1]) {
    throw ShapeError("concat_mlp: W2 " + ops::shape_string(w2.shape()) + " does not follow W1 " +
                     ops::shape_string(w1.shape()));
  }
  const Tensor parts[] = {ops::reshape(x1, {1, i}), ops::reshape(x2, {1, j})};
  auto hidden = ops::sigmoid(ops::matmul(ops::concat_cols(parts), w1));
  return ops::matmul(hidden, w2);
}

Tensor fuse_block(const Tensor& x1, const Tensor& x2, const Tensor& a, const Tensor& b, const Tensor& core,
                  const Tensor& c) {
  if (core.dim() != 3) throw ShapeError("block: core must be L x M x N, got " + ops::shape_string(core.shape()));
  const auto l = core.shape()[0], m = core.shape()[1], n = core.shape()[2];
  if (a.dim() != 2 || a.shape()[0] != x1.numel() || a.shape()[1] != l) {
    throw ShapeError("block: A " + ops::shape_string(a.shape()) + " inconsistent with x1 of " +
                     std::to_string(x1.numel()) + " and core " + ops::shape_string(core.shape()));
  }
  if (b.dim() != 2 || b.shape()[0] != x2.numel() || b.shape()[1] != m) {
    throw ShapeError("block: B " + ops::shape_string(b.shape()) + " inconsistent with x2 of " +
                     std::to_string(x2.numel()) + " and core " + ops::shape_string(core.shape()));
  }
  if (c.dim() != 2 || c.shape()[1] != n) {
    throw ShapeError("block: C " + ops::shape_string(c.shape()) + " must have " + std::to_string(n) + " columns");
  }
  auto u = ops::matmul(ops::reshape(x1, {1, x1.numel()}), a);
  auto v = ops::matmul(ops::reshape(x2, {1, x2.numel()}), b);
  auto joint = ops::reshape(ops::outer(u, v), {1, l * m});
  auto z = ops::matmul(joint, ops::reshape(core, {l * m, n}));
  return ops::matmul_nt(z, c);
}

Tensor ensemble_average(const Tensor& logits_a, const Tensor& logits_b) {
  if (logits_a.numel() != logits_b.numel()) {
    throw ShapeError("ensemble_average: logit lengths " + std::to_string(logits_a.numel()) + " and " +
                     std::to_string(logits_b.numel()) + " differ");
  }
  auto b = logits_b.shape() == logits_a.shape() ? logits_b : ops::reshape(logits_b, logits_a.shape());
  return ops::scale(ops::add(logits_a, b), 0.5);
}

namespace {

EmbeddingSequence with_token(const EmbeddingSequence& s, const Tensor& token) {
  EmbeddingSequence out = s;
  out.data = encoder::add_token_to_rows(s.data, token, s.valid);
  return out;
}

void check_width(const EmbeddingSequence& s, std::size_t d, const char* method) {
  if (s.data.cols() != d) {
    throw ShapeError(std::string(method) + ": " + encoder::to_string(s.modality) + " width " +
                     std::to_string(s.data.cols()) + " does not match model dimension " + std::to_string(d));
  }
}

// [CLS] || sequence with its mask, positions and learnable-table slots.
struct Branch {
  Tensor x;
  Mask mask;
  encoder::TokenPositions pos;
};

Branch open_branch(const Tensor& cls, const EmbeddingSequence& s, const temporal::PositionalMode& positional,
                   const Tensor& table) {
  const auto d = s.data.cols();
  const Tensor parts[] = {ops::reshape(cls, {1, d}), s.data};
  Branch b;
  b.x = ops::concat_rows(parts);
  b.mask.push_back(1);
  b.mask.insert(b.mask.end(), s.valid.begin(), s.valid.end());
  b.pos.positions.push_back(0.0);
  b.pos.positions.insert(b.pos.positions.end(), s.offsets_norm.begin(), s.offsets_norm.end());
  for (std::size_t i = 0; i <= s.length(); ++i) b.pos.slots.push_back(i);
  b.x = temporal::positional_apply(positional, b.x, b.pos.positions, table.defined() ? &table : nullptr, b.pos.slots);
  return b;
}

temporal::PositionalMode head_positional(const EncoderConfig& enc) {
  auto p = enc.positional;
  p.dim = p.kind == temporal::PositionalKind::rope ? enc.model_dim / enc.heads : enc.model_dim;
  p.validate();
  return p;
}

}  // namespace

Tensor fuse_vilt(const EmbeddingSequence& image, const EmbeddingSequence& text, const Tensor& cls,
                 const Tensor& image_token, const Tensor& text_token, const encoder::TransformerStack& stack,
                 Context& ctx, std::vector<AttentionTrace>* traces) {
  const auto d = stack.config().dim;
  check_width(image, d, "vilt");
  check_width(text, d, "vilt");
  const EmbeddingSequence seqs[] = {with_token(image, image_token), with_token(text, text_token)};
  return encoder::tst_encode(seqs, cls, stack, ctx, traces).cls_out;
}

ViltFusion::ViltFusion(ParamSet& params, const std::string& name, const EncoderConfig& enc, const FusionConfig& cfg,
                       std::mt19937_64& rng) {
  const auto d = enc.model_dim;
  cls = params.add(name + ".cls", encoder::normal_init({1, d}, 0.02, rng));
  image_token = params.add(name + ".image_token", encoder::normal_init({1, d}, 0.02, rng));
  text_token = params.add(name + ".text_token", encoder::normal_init({1, d}, 0.02, rng));
  stack = encoder::TransformerStack(params, name, enc.stack(cfg.vilt_layers), rng);
}

Tensor ViltFusion::fuse(const EmbeddingSequence& image, const EmbeddingSequence& text, Context& ctx,
                        std::vector<AttentionTrace>* traces) const {
  return fuse_vilt(image, text, cls, image_token, text_token, stack, ctx, traces);
}

MbtFusion::MbtFusion(ParamSet& params, const std::string& name, const EncoderConfig& enc, const FusionConfig& cfg,
                     std::mt19937_64& rng) {
  cfg.validate();
  const auto d = enc.model_dim;
  positional = head_positional(enc);
  fusion_layers = cfg.mbt_fusion_layers;
  image_cls = params.add(name + ".image.cls", encoder::normal_init({1, d}, 0.02, rng));
  text_cls = params.add(name + ".text.cls", encoder::normal_init({1, d}, 0.02, rng));
  fusion_tokens = params.add(name + ".fusion_tokens", encoder::normal_init({cfg.bottleneck, d}, 0.02, rng));
  if (positional.kind == temporal::PositionalKind::learnable) {
    position_table = params.add(name + ".positions", encoder::normal_init({enc.max_positions, d}, 0.02, rng));
  }
  for (std::size_t l = 0; l < cfg.mbt_layers; ++l) {
    image_layers.push_back(encoder::TransformerLayer::create(params, name + ".image.layer" + std::to_string(l), d,
                                                             enc.heads, enc.ff_dim, enc.dropout, rng));
  }
  for (std::size_t l = 0; l < cfg.mbt_layers; ++l) {
    text_layers.push_back(encoder::TransformerLayer::create(params, name + ".text.layer" + std::to_string(l), d,
                                                            enc.heads, enc.ff_dim, enc.dropout, rng));
  }
  image_norm = LayerNorm::create(params, name + ".image.final_norm", d);
  text_norm = LayerNorm::create(params, name + ".text.final_norm", d);
  fusion_norm = LayerNorm::create(params, name + ".fusion_norm", d);
}

MbtOutput MbtFusion::fuse(const EmbeddingSequence& image, const EmbeddingSequence& text, Context& ctx,
                          MbtTrace* trace) const {
  const auto d = fusion_tokens.cols();
  check_width(image, d, "mbt");
  check_width(text, d, "mbt");
  const auto* rope = positional.kind == temporal::PositionalKind::rope ? &positional : nullptr;
  Branch img = open_branch(image_cls, image, positional, position_table);
  Branch txt = open_branch(text_cls, text, positional, position_table);

  const std::size_t total = image_layers.size();
  const std::size_t separate = total - fusion_layers;
  for (std::size_t l = 0; l < separate; ++l) {
    img.x = image_layers[l].forward(img.x, img.mask, rope, img.pos.positions, ctx);
    txt.x = text_layers[l].forward(txt.x, txt.mask, rope, txt.pos.positions, ctx);
  }

  Tensor z = fusion_tokens;
  const std::size_t nz = z.rows();
  auto step = [&](Branch& b, const encoder::TransformerLayer& layer) {
    const Tensor parts[] = {b.x, z};
    Mask mask = b.mask;
    mask.insert(mask.end(), nz, 1);
    std::vector<double> positions = b.pos.positions;
    positions.insert(positions.end(), nz, 0.0);
    auto out = layer.forward(ops::concat_rows(parts), mask, rope, positions, ctx);
    const auto n = b.x.rows();
    b.x = ops::slice_rows(out, 0, n);
    return ops::slice_rows(out, n, nz);
  };
  for (std::size_t l = separate; l < total; ++l) {
    auto z_img = step(img, image_layers[l]);
    auto z_txt = step(txt, text_layers[l]);
    z = ops::scale(ops::add(z_img, z_txt), 0.5);
    if (trace != nullptr) {
      trace->image_updates.push_back(z_img);
      trace->text_updates.push_back(z_txt);
      trace->fused.push_back(z);
    }
  }

  MbtOutput out;
  std::vector<double> avg(nz, 1.0 / static_cast<double>(nz));
  out.joint = ops::weighted_row_sum(fusion_norm.forward(z), avg);
  out.image_cls = ops::slice_rows(image_norm.forward(encoder::zero_masked_rows(img.x, img.mask)), 0, 1);
  out.text_cls = ops::slice_rows(text_norm.forward(encoder::zero_masked_rows(txt.x, txt.mask)), 0, 1);
  return out;
}

MeterFusion::MeterFusion(ParamSet& params, const std::string& name, const EncoderConfig& enc,
                         const FusionConfig& cfg, std::mt19937_64& rng) {
  const auto d = enc.model_dim;
  positional = head_positional(enc);
  dropout = enc.dropout;
  image_cls = params.add(name + ".image.cls", encoder::normal_init({1, d}, 0.02, rng));
  text_cls = params.add(name + ".text.cls", encoder::normal_init({1, d}, 0.02, rng));
  if (positional.kind == temporal::PositionalKind::learnable) {
    position_table = params.add(name + ".positions", encoder::normal_init({enc.max_positions, d}, 0.02, rng));
  }
  auto make_layers = [&](const std::string& branch) {
    std::vector<CoAttentionLayer> layers;
    for (std::size_t l = 0; l < cfg.meter_layers; ++l) {
      const auto p = name + "." + branch + ".layer" + std::to_string(l);
      CoAttentionLayer layer;
      layer.ln_self = LayerNorm::create(params, p + ".ln_self", d);
      layer.self_attn = encoder::MultiHeadAttention::create(params, p + ".self_attn", d, enc.heads, rng);
      layer.ln_query = LayerNorm::create(params, p + ".ln_query", d);
      layer.ln_context = LayerNorm::create(params, p + ".ln_context", d);
      layer.cross_attn = encoder::MultiHeadAttention::create(params, p + ".cross_attn", d, enc.heads, rng);
      layer.ln_ff = LayerNorm::create(params, p + ".ln_ff", d);
      layer.ff = encoder::FeedForward::create(params, p + ".ff", d, enc.ff_dim, rng);
      layers.push_back(std::move(layer));
    }
    return layers;
  };
  image_layers = make_layers("image");
  text_layers = make_layers("text");
  image_norm = LayerNorm::create(params, name + ".image.final_norm", d);
  text_norm = LayerNorm::create(params, name + ".text.final_norm", d);
  head = Linear::create(params, name + ".head", 2 * d, d, rng);
}

MeterOutput MeterFusion::fuse(const EmbeddingSequence& image, const EmbeddingSequence& text, Context& ctx,
                              MeterTrace* trace) const {
  const auto d = image_cls.cols();
  check_width(image, d, "meter");
  check_width(text, d, "meter");
  const auto* rope = positional.kind == temporal::PositionalKind::rope ? &positional : nullptr;
  Branch img = open_branch(image_cls, image, positional, position_table);
  Branch txt = open_branch(text_cls, text, positional, position_table);

  for (std::size_t l = 0; l < image_layers.size(); ++l) {
    const auto& li = image_layers[l];
    const auto& lt = text_layers[l];
    auto self_step = [&](const CoAttentionLayer& layer, const Branch& b) {
      const auto n = layer.ln_self.forward(b.x);
      return ops::add(b.x, maybe_dropout(layer.self_attn.forward(n, n, b.mask, rope, b.pos.positions, b.pos.positions),
                                         dropout, ctx));
    };
    auto a = self_step(li, img);
    auto b = self_step(lt, txt);

    AttentionTrace* ti = trace ? &trace->image_to_text.emplace_back() : nullptr;
    AttentionTrace* tt = trace ? &trace->text_to_image.emplace_back() : nullptr;
    auto a2 = ops::add(a, maybe_dropout(li.cross_attn.forward(li.ln_query.forward(a), li.ln_context.forward(b),
                                                              txt.mask, rope, img.pos.positions, txt.pos.positions, ti),
                                        dropout, ctx));
    auto b2 = ops::add(b, maybe_dropout(lt.cross_attn.forward(lt.ln_query.forward(b), lt.ln_context.forward(a),
                                                              img.mask, rope, txt.pos.positions, img.pos.positions, tt),
                                        dropout, ctx));
    img.x = ops::add(a2, maybe_dropout(li.ff.forward(li.ln_ff.forward(a2)), dropout, ctx));
    txt.x = ops::add(b2, maybe_dropout(lt.ff.forward(lt.ln_ff.forward(b2)), dropout, ctx));
  }

  MeterOutput out;
  out.image_cls = image_norm.forward(ops::slice_rows(img.x, 0, 1));
  out.text_cls = text_norm.forward(ops::slice_rows(txt.x, 0, 1));
  const Tensor parts[] = {out.image_cls, out.text_cls};
  out.joint = ops::gelu(head.forward(ops::concat_cols(parts)));
  return out;
}

ConcatMlpFusion ConcatMlpFusion::create(ParamSet& params, const std::string& name, std::size_t in1, std::size_t in2,
                                        std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
  if (hidden == 0) hidden = in1 + in2;
  ConcatMlpFusion f;
  f.w1 = params.add(name + ".w1", encoder::xavier_uniform(in1 + in2, hidden, rng));
  f.w2 = params.add(name + ".w2", encoder::xavier_uniform(hidden, out, rng));
  return f;
}

BlockFusion BlockFusion::create(ParamSet& params, const std::string& name, std::size_t in1, std::size_t in2,
                                const FusionConfig& cfg, std::size_t out, std::mt19937_64& rng) {
  cfg.validate();
  BlockFusion f;
  f.a = params.add(name + ".a", encoder::xavier_uniform(in1, cfg.block_l, rng));
  f.b = params.add(name + ".b", encoder::xavier_uniform(in2, cfg.block_m, rng));
  const double core_std = 1.0 / std::sqrt(static_cast<double>(cfg.block_l * cfg.block_m));
  f.core = params.add(name + ".core", encoder::normal_init({cfg.block_l, cfg.block_m, cfg.block_n}, core_std, rng));
  f.c = params.add(name + ".c", encoder::xavier_uniform(out, cfg.block_n, rng));
  return f;
}

double linear_flops(std::size_t rows, std::size_t in, std::size_t out) {
  return 2.0 * static_cast<double>(rows) * static_cast<double>(in) * static_cast<double>(out);
}

double transformer_layer_flops(std::size_t tokens, std::size_t dim, std::size_t ff_dim) {
  const double t = static_cast<double>(tokens), d = static_cast<double>(dim);
  return 4.0 * linear_flops(tokens, dim, dim) + 4.0 * t * t * d + linear_flops(tokens, dim, ff_dim) +
         linear_flops(tokens, ff_dim, dim);
}

double cross_layer_flops(std::size_t queries, std::size_t keys, std::size_t dim, std::size_t) {
  const double q = static_cast<double>(queries), k = static_cast<double>(keys), d = static_cast<double>(dim);
  return 2.0 * linear_flops(queries, dim, dim) + 2.0 * linear_flops(keys, dim, dim) + 4.0 * q * k * d;
}

double fusion_head_flops(FusionMethod method, const EncoderConfig& enc, const FusionConfig& cfg,
                         std::size_t image_tokens, std::size_t text_tokens) {
  const auto d = enc.model_dim, ff = enc.ff_dim;
  switch (method) {
    case FusionMethod::vilt:
      return static_cast<double>(cfg.vilt_layers) * transformer_layer_flops(1 + image_tokens + text_tokens, d, ff);
    case FusionMethod::mbt: {
      const double separate = static_cast<double>(cfg.mbt_layers - cfg.mbt_fusion_layers);
      const double fused = static_cast<double>(cfg.mbt_fusion_layers);
      double f = 0.0;
      for (auto t : {image_tokens, text_tokens}) {
        f += separate * transformer_layer_flops(1 + t, d, ff) +
             fused * transformer_layer_flops(1 + t + cfg.bottleneck, d, ff);
      }
      return f;
    }
    case FusionMethod::meter: {
      double f = 0.0;
      for (auto [own, other] : {std::pair{image_tokens, text_tokens}, std::pair{text_tokens, image_tokens}}) {
        f += transformer_layer_flops(1 + own, d, ff) + cross_layer_flops(1 + own, 1 + other, d, ff);
      }
      return static_cast<double>(cfg.meter_layers) * f + linear_flops(1, 2 * d, d);
    }
    case FusionMethod::concat_mlp: {
      const auto h = cfg.concat_hidden == 0 ? 2 * d : cfg.concat_hidden;
      return linear_flops(1, 2 * d, h) + linear_flops(1, h, d);
    }
    case FusionMethod::block:
      return linear_flops(1, d, cfg.block_l) + linear_flops(1, d, cfg.block_m) +
             static_cast<double>(cfg.block_l * cfg.block_m) +
             linear_flops(1, cfg.block_l * cfg.block_m, cfg.block_n) + linear_flops(1, cfg.block_n, d);
    case FusionMethod::ensemble:
      return 0.0;
  }
  return 0.0;
}

}  // namespace histaid::fusion
