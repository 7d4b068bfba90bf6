#include "histaid/train/model.hpp"

#include <algorithm>
#include <random>

#include "histaid/error.hpp"
#include "histaid/temporal/positional.hpp"
#include "histaid/tensor/ops.hpp"

namespace histaid::train {

namespace ops = histaid::tensor;
using encoder::EmbeddingSequence;
using encoder::Modality;
using encoder::Pooling;

void ModelConfig::validate() const {
  encoder.validate();
  fusion.validate();
  if (store_dim == 0) throw ConfigError("store dimension must be positive");
  if (n_labels == 0) throw ConfigError("at least one label is required");
  if (k_img == 0) throw ConfigError("k_img must be at least 1 (the current scan)");
  if (k_text == 0) throw ConfigError("k_text must be positive");
  const std::size_t longest = 2 + std::max(k_img, k_text) + (fusion::is_sequence_level(method) ? 1 : 0);
  if (encoder.positional.kind == temporal::PositionalKind::learnable && longest > encoder.max_positions) {
    throw ConfigError("learnable positions: max_positions " + std::to_string(encoder.max_positions) +
                      " is below the longest sequence " + std::to_string(longest));
  }
}

PreparedSample prepare_sample(const data::TemporalSample& sample, const data::EmbeddingStore& store,
                              const ModelConfig& cfg) {
  if (store.dim() != cfg.store_dim) {
    throw ContractError("store width " + std::to_string(store.dim()) + " does not match model store_dim " +
                        std::to_string(cfg.store_dim));
  }
  if (sample.labels.size() != cfg.n_labels) {
    throw ContractError("sample " + sample.subject_id + "/" + sample.anchor_study_id + " has " +
                        std::to_string(sample.labels.size()) + " labels, model expects " +
                        std::to_string(cfg.n_labels));
  }
  PreparedSample p;
  auto append = [&](std::vector<double>& dst, const std::string& key) {
    const auto& e = store.at(key);
    dst.insert(dst.end(), e.values.begin(), e.values.end());
  };
  const std::size_t n_prior = std::min(sample.history_images.size(), cfg.k_img - 1);
  for (std::size_t i = sample.history_images.size() - n_prior; i < sample.history_images.size(); ++i) {
    append(p.image, sample.history_images[i].key);
    p.image_offsets_hours.push_back(sample.history_images[i].offset_hours);
  }
  append(p.image, sample.image_key);
  p.image_offsets_hours.push_back(0.0);
  p.n_image = n_prior + 1;

  const std::size_t n_text = std::min(sample.history_reports.size(), cfg.k_text);
  for (std::size_t i = sample.history_reports.size() - n_text; i < sample.history_reports.size(); ++i) {
    append(p.text, sample.history_reports[i].key);
    p.text_offsets_hours.push_back(sample.history_reports[i].offset_hours);
  }
  p.n_text = n_text;
  p.labels.assign(sample.labels.begin(), sample.labels.end());
  return p;
}

bool HistAidModel::is_encoder_param(const std::string& name) { return name.rfind("adapter.", 0) == 0; }

HistAidModel::HistAidModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const auto d = cfg_.encoder.model_dim;
  const auto c = cfg_.n_labels;
  image_adapter_ = encoder::Linear::create(params_, "adapter.image", cfg_.store_dim, d, rng);
  text_adapter_ = encoder::Linear::create(params_, "adapter.text", cfg_.store_dim, d, rng);
  image_token_ = params_.add("token.image", encoder::normal_init({1, d}, 0.02, rng));
  text_token_ = params_.add("token.text", encoder::normal_init({1, d}, 0.02, rng));
  if (cfg_.encoder.pooling == Pooling::tst) {
    image_cls_ = params_.add("encoder.image.cls", encoder::normal_init({1, d}, 0.02, rng));
    text_cls_ = params_.add("encoder.text.cls", encoder::normal_init({1, d}, 0.02, rng));
    image_encoder_ = encoder::TransformerStack(params_, "encoder.image", cfg_.encoder.stack(cfg_.encoder.layers), rng);
    text_encoder_ = encoder::TransformerStack(params_, "encoder.text", cfg_.encoder.stack(cfg_.encoder.layers), rng);
  }
  switch (cfg_.method) {
    case FusionMethod::vilt:
      vilt_ = fusion::ViltFusion(params_, "fusion.vilt", cfg_.encoder, cfg_.fusion, rng);
      break;
    case FusionMethod::mbt:
      mbt_ = fusion::MbtFusion(params_, "fusion.mbt", cfg_.encoder, cfg_.fusion, rng);
      break;
    case FusionMethod::meter:
      meter_ = fusion::MeterFusion(params_, "fusion.meter", cfg_.encoder, cfg_.fusion, rng);
      break;
    case FusionMethod::concat_mlp:
      concat_ = fusion::ConcatMlpFusion::create(params_, "fusion.concat_mlp", d, d, cfg_.fusion.concat_hidden, d, rng);
      break;
    case FusionMethod::block:
      block_ = fusion::BlockFusion::create(params_, "fusion.block", d, d, cfg_.fusion, d, rng);
      break;
    case FusionMethod::ensemble:
      break;
  }
  if (cfg_.method == FusionMethod::ensemble) {
    image_classifier_ = encoder::Linear::create(params_, "classifier.image", d, c, rng);
    text_classifier_ = encoder::Linear::create(params_, "classifier.text", d, c, rng);
  } else {
    classifier_ = encoder::Linear::create(params_, "classifier", d, c, rng);
  }
}

EmbeddingSequence HistAidModel::embed(const std::vector<double>& rows, std::size_t n,
                                      const std::vector<double>& offsets, std::size_t k, Modality modality,
                                      const encoder::Linear& adapter, const Tensor& token) const {
  Tensor projected;
  std::vector<double> norm;
  if (n > 0) {
    projected = adapter.forward(Tensor::from({n, cfg_.store_dim}, rows));
    norm = temporal::normalize_offsets(offsets);
  }
  return encoder::assemble_sequence(projected, norm, k, modality, token);
}

HistAidModel::Inputs HistAidModel::embed_inputs(const PreparedSample& s) const {
  return {embed(s.image, s.n_image, s.image_offsets_hours, cfg_.k_img, Modality::image, image_adapter_, image_token_),
          embed(s.text, s.n_text, s.text_offsets_hours, cfg_.k_text, Modality::text, text_adapter_, text_token_)};
}

Tensor HistAidModel::forward(const PreparedSample& s, Context& ctx) const { return forward(embed_inputs(s), ctx); }

Tensor HistAidModel::forward(const Inputs& in, Context& ctx) const {
  const auto& image_seq = in.image;
  const auto& text_seq = in.text;

  // Per-modality encoding: a pooled vector plus the token sequence handed to
  // sequence-level fusion heads.
  auto encode = [&](const EmbeddingSequence& seq, const Tensor& cls, const encoder::TransformerStack& stack,
                    Tensor& pooled) -> EmbeddingSequence {
    if (cfg_.encoder.pooling == Pooling::tst) {
      const EmbeddingSequence one[] = {seq};
      const auto enc = encoder::tst_encode(one, cls, stack, ctx);
      pooled = enc.cls_out;
      return encoder::as_sequence(enc, seq.modality);
    }
    pooled = encoder::mean_pool(seq);
    EmbeddingSequence single;
    single.data = pooled;
    single.valid = {static_cast<std::uint8_t>(seq.valid_count() > 0 ? 1 : 0)};
    single.offsets_norm = {0.0};
    single.modality = seq.modality;
    return single;
  };
  Tensor image_pooled, text_pooled;
  const auto image_tokens = encode(image_seq, image_cls_, image_encoder_, image_pooled);
  const auto text_tokens = encode(text_seq, text_cls_, text_encoder_, text_pooled);

  Tensor joint;
  switch (cfg_.method) {
    case FusionMethod::vilt:
      joint = vilt_.fuse(image_tokens, text_tokens, ctx);
      break;
    case FusionMethod::mbt:
      joint = mbt_.fuse(image_tokens, text_tokens, ctx).joint;
      break;
    case FusionMethod::meter:
      joint = meter_.fuse(image_tokens, text_tokens, ctx).joint;
      break;
    case FusionMethod::concat_mlp:
      joint = concat_.fuse(image_pooled, text_pooled);
      break;
    case FusionMethod::block:
      joint = block_.fuse(image_pooled, text_pooled);
      break;
    case FusionMethod::ensemble:
      return fusion::ensemble_average(image_classifier_.forward(image_pooled), text_classifier_.forward(text_pooled));
  }
  return classifier_.forward(joint);
}

}  // namespace histaid::train
