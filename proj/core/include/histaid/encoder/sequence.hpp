#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "histaid/encoder/layers.hpp"

namespace histaid::encoder {

enum class Modality { image, text };
enum class Pooling { tst, mean };

std::string to_string(Modality m);
std::string to_string(Pooling p);
Pooling parse_pooling(std::string_view name);

// Fixed-length K x D block of per-timestamp embeddings. Valid slots come first,
// ordered oldest to newest; padding slots are zero vectors with offset 0.
struct EmbeddingSequence {
  Tensor data;  // [K x D]
  Mask valid;
  std::vector<double> offsets_norm;
  Modality modality = Modality::text;

  std::size_t length() const { return valid.size(); }
  std::size_t valid_count() const;
};

// Encoder hyperparameters. Defaults are the desk-scale configuration.
struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t model_dim = 64;
  std::size_t ff_dim = 256;
  double dropout = 0.1;
  temporal::PositionalMode positional;
  Pooling pooling = Pooling::tst;
  std::size_t max_positions = 64;

  void validate() const;
  StackConfig stack(std::size_t layers_override) const;
};

// Builds a K-slot sequence from rows ordered oldest to newest. Only the K most
// recent rows are kept; `modality_token` is added to every kept row.
EmbeddingSequence assemble_sequence(const Tensor& rows, std::span<const double> offsets_norm, std::size_t k,
                                    Modality modality, const Tensor& modality_token);
EmbeddingSequence assemble_sequence(std::span<const std::pair<std::vector<double>, double>> embeddings, std::size_t k,
                                    Modality modality, const Tensor& modality_token);

// Mean over valid slots; the zero vector when there are none.
Tensor mean_pool(const EmbeddingSequence& seq);

struct EncodedSequence {
  Tensor cls_out;  // [1 x D]
  Tensor tokens;   // [(1 + sum K) x D], row 0 is [CLS]
  Mask valid;
  std::vector<double> positions;
};

// Prepends [CLS] (position 0) to the concatenated sequences and runs the
// masked transformer stack.
EncodedSequence tst_encode(std::span<const EmbeddingSequence> seqs, const Tensor& cls, const TransformerStack& stack,
                           Context& ctx, std::vector<AttentionTrace>* traces = nullptr);

// The token sequence a fusion head receives from one modality's encoder.
EmbeddingSequence as_sequence(const EncodedSequence& enc, Modality modality);

}  // namespace histaid::encoder
