#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "histaid/data/pipeline.hpp"
#include "histaid/data/store.hpp"
#include "histaid/encoder/layers.hpp"
#include "histaid/encoder/sequence.hpp"
#include "histaid/fusion/fusion.hpp"

namespace histaid::train {

using encoder::Context;
using encoder::EncoderConfig;
using encoder::ParamSet;
using fusion::FusionConfig;
using fusion::FusionMethod;
using tensor::Tensor;

struct ModelConfig {
  EncoderConfig encoder;  // per-modality time-series encoder
  FusionConfig fusion;
  FusionMethod method = FusionMethod::vilt;
  std::size_t store_dim = 32;
  std::size_t n_labels = 13;
  std::size_t k_img = 1;    // current scan plus k_img - 1 prior scans
  std::size_t k_text = 50;  // most recent reports kept

  void validate() const;
};

// Store vectors and raw offsets of one sample, ready for the model.
struct PreparedSample {
  std::vector<double> image;  // [n_image x store_dim], oldest first, current scan last
  std::vector<double> image_offsets_hours;
  std::vector<double> text;  // [n_text x store_dim], oldest first
  std::vector<double> text_offsets_hours;
  std::vector<double> labels;
  std::size_t n_image = 0;
  std::size_t n_text = 0;
};

// Looks up the kept slots of `sample` (last k_text reports, current scan plus
// last k_img - 1 prior scans) in the store.
PreparedSample prepare_sample(const data::TemporalSample& sample, const data::EmbeddingStore& store,
                              const ModelConfig& cfg);

// Full classifier: per-modality linear adapters over stored embeddings,
// [IMG]/[TEXT] tokens, per-modality encoders (TST or mean pooling), a fusion
// head and a linear classifier. Parameters whose name starts with "adapter."
// form the encoder learning-rate group.
class HistAidModel {
 public:
  HistAidModel(const ModelConfig& cfg, std::uint64_t seed);

  struct Inputs {
    encoder::EmbeddingSequence image, text;
  };

  // Adapted, token-tagged K-slot sequences for both modalities.
  Inputs embed_inputs(const PreparedSample& s) const;

  // [1 x n_labels] logits.
  Tensor forward(const PreparedSample& s, Context& ctx) const;
  Tensor forward(const Inputs& in, Context& ctx) const;

  const ModelConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  static bool is_encoder_param(const std::string& name);

 private:
  encoder::EmbeddingSequence embed(const std::vector<double>& rows, std::size_t n,
                                   const std::vector<double>& offsets, std::size_t k, encoder::Modality modality,
                                   const encoder::Linear& adapter, const Tensor& token) const;

  ModelConfig cfg_;
  ParamSet params_;
  encoder::Linear image_adapter_, text_adapter_;
  Tensor image_token_, text_token_, image_cls_, text_cls_;
  encoder::TransformerStack image_encoder_, text_encoder_;
  fusion::ViltFusion vilt_;
  fusion::MbtFusion mbt_;
  fusion::MeterFusion meter_;
  fusion::ConcatMlpFusion concat_;
  fusion::BlockFusion block_;
  encoder::Linear classifier_, image_classifier_, text_classifier_;
};

}  // namespace histaid::train
