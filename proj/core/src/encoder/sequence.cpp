#include "histaid/encoder/sequence.hpp"

#include <algorithm>

#include "histaid/error.hpp"
#include "histaid/tensor/ops.hpp"

namespace histaid::encoder {

namespace ops = histaid::tensor;

std::string to_string(Modality m) { return m == Modality::image ? "image" : "text"; }
std::string to_string(Pooling p) { return p == Pooling::tst ? "tst" : "mean"; }

Pooling parse_pooling(std::string_view name) {
  if (name == "tst") return Pooling::tst;
  if (name == "mean") return Pooling::mean;
  throw ConfigError("unknown pooling '" + std::string(name) + "' (tst|mean)");
}

std::size_t EmbeddingSequence::valid_count() const {
  return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](auto v) { return v != 0; }));
}

void EncoderConfig::validate() const {
  if (model_dim == 0) throw ConfigError("model_dim must be positive");
  if (heads == 0 || model_dim % heads != 0) {
    throw ConfigError("model_dim " + std::to_string(model_dim) + " must be divisible by heads " +
                      std::to_string(heads));
  }
  if (ff_dim == 0) throw ConfigError("ff_dim must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  auto pos = positional;
  pos.dim = positional.kind == temporal::PositionalKind::rope ? model_dim / heads : model_dim;
  pos.validate();
}

StackConfig EncoderConfig::stack(std::size_t layers_override) const {
  StackConfig s;
  s.layers = layers_override;
  s.heads = heads;
  s.dim = model_dim;
  s.ff_dim = ff_dim;
  s.dropout = dropout;
  s.positional = positional;
  s.max_positions = max_positions;
  return s;
}

EmbeddingSequence assemble_sequence(const Tensor& rows, std::span<const double> offsets_norm, std::size_t k,
                                    Modality modality, const Tensor& modality_token) {
  if (k == 0) throw ConfigError("sequence length K must be positive");
  const std::size_t d = modality_token.numel();
  const std::size_t n = rows.defined() ? rows.rows() : 0;
  if (n > 0 && rows.cols() != d) {
    throw ShapeError("embedding width " + std::to_string(rows.cols()) + " does not match token width " +
                     std::to_string(d));
  }
  if (offsets_norm.size() != n) throw ShapeError("one offset per embedding required");
  const std::size_t kept = std::min(n, k);
  const std::size_t first = n - kept;

  EmbeddingSequence seq;
  seq.modality = modality;
  seq.valid.assign(k, 0);
  seq.offsets_norm.assign(k, 0.0);
  for (std::size_t i = 0; i < kept; ++i) {
    seq.valid[i] = 1;
    seq.offsets_norm[i] = offsets_norm[first + i];
  }
  if (kept == 0) {
    seq.data = Tensor::zeros({k, d});
    return seq;
  }
  auto body = kept == n ? rows : ops::slice_rows(rows, first, kept);
  body = ops::add_row(ops::reshape(body, {kept, d}), modality_token);
  if (kept == k) {
    seq.data = body;
  } else {
    const Tensor parts[] = {body, Tensor::zeros({k - kept, d})};
    seq.data = ops::concat_rows(parts);
  }
  return seq;
}

EmbeddingSequence assemble_sequence(std::span<const std::pair<std::vector<double>, double>> embeddings, std::size_t k,
                                    Modality modality, const Tensor& modality_token) {
  const std::size_t d = modality_token.numel();
  std::vector<double> flat;
  std::vector<double> offsets;
  for (const auto& [vec, off] : embeddings) {
    if (vec.size() != d) {
      throw ShapeError("embedding width " + std::to_string(vec.size()) + " does not match token width " +
                       std::to_string(d));
    }
    flat.insert(flat.end(), vec.begin(), vec.end());
    offsets.push_back(off);
  }
  Tensor rows;
  if (!embeddings.empty()) rows = Tensor::from({embeddings.size(), d}, std::move(flat));
  return assemble_sequence(rows, offsets, k, modality, modality_token);
}

Tensor mean_pool(const EmbeddingSequence& seq) {
  const std::size_t count = seq.valid_count();
  std::vector<double> w(seq.length(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (seq.valid[i]) w[i] = 1.0 / static_cast<double>(count);
  }
  return ops::weighted_row_sum(seq.data, w);
}

EncodedSequence tst_encode(std::span<const EmbeddingSequence> seqs, const Tensor& cls, const TransformerStack& stack,
                           Context& ctx, std::vector<AttentionTrace>* traces) {
  const std::size_t d = stack.config().dim;
  if (cls.numel() != d) throw ShapeError("[CLS] width does not match model dimension");
  std::vector<Tensor> parts{ops::reshape(cls, {1, d})};
  EncodedSequence out;
  out.valid.push_back(1);
  out.positions.push_back(0.0);
  TokenPositions pos;
  pos.slots.push_back(0);
  for (const auto& s : seqs) {
    if (s.data.cols() != d) {
      throw ShapeError(to_string(s.modality) + " sequence width " + std::to_string(s.data.cols()) +
                       " does not match model dimension " + std::to_string(d));
    }
    parts.push_back(s.data);
    out.valid.insert(out.valid.end(), s.valid.begin(), s.valid.end());
    out.positions.insert(out.positions.end(), s.offsets_norm.begin(), s.offsets_norm.end());
    for (std::size_t i = 0; i < s.length(); ++i) pos.slots.push_back(i + 1);
  }
  pos.positions = out.positions;
  auto x = parts.size() == 1 ? parts.front() : ops::concat_rows(parts);
  out.tokens = stack.forward(x, out.valid, pos, ctx, traces);
  out.cls_out = ops::slice_rows(out.tokens, 0, 1);
  return out;
}

EmbeddingSequence as_sequence(const EncodedSequence& enc, Modality modality) {
  EmbeddingSequence s;
  s.data = enc.tokens;
  s.valid = enc.valid;
  s.offsets_norm = enc.positions;
  s.modality = modality;
  return s;
}

}  // namespace histaid::encoder
