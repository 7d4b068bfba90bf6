#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "histaid/metrics/metrics.hpp"
#include "histaid/train/model.hpp"

namespace histaid::train {

struct TrainConfig {
  std::size_t batch_size = 16;
  // Peak learning rates; unset means 1e-5 * batch/64 (adapters) and
  // 1e-4 * batch/64 (everything else).
  std::optional<double> lr_encoder;
  std::optional<double> lr_tst;
  std::size_t epochs = 15;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double warmup_frac = 0.10;
  double min_lr_ratio = 1e-3;
  double pos_weight = 1.0;
  std::uint64_t seed = 0;

  double peak_lr_encoder() const;
  double peak_lr_tst() const;
  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;  // per-sample mean over the epoch
  std::optional<double> val_macro_auroc;
};

struct NamedArray {
  std::string name;
  tensor::Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::vector<NamedArray> params;
  std::size_t epoch = 0;
  std::optional<double> val_macro_auroc;
};

Checkpoint snapshot(const ParamSet& params);
// Copies values by name; ContractError on a missing name or shape mismatch.
void restore(ParamSet& params, const Checkpoint& ckpt);

// "TMCK1" | u32 meta_len | meta JSON | u64 count | count x (u32 name_len | name | u32 ndim | ndim x u64 | f64 values)
// Metadata carries epoch, val AUROC and the caller's extra JSON object.
void write_checkpoint(const std::string& path, const Checkpoint& ckpt, const std::string& extra_json = "{}");
Checkpoint read_checkpoint(const std::string& path, std::string* extra_json = nullptr);

struct FitResult {
  Checkpoint best;
  std::vector<EpochLog> log;
};

// Trains with AdamW and a cosine-with-warmup schedule, evaluating mean
// validation AUROC after each epoch. The returned checkpoint is the epoch
// with the highest value (earliest on ties); the model is left at the last
// epoch's parameters.
FitResult fit(HistAidModel& model, std::span<const PreparedSample> train, std::span<const PreparedSample> val,
              const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {});

// Sigmoid probabilities in eval mode.
metrics::ScoreMatrix predict(const HistAidModel& model, std::span<const PreparedSample> samples);

}  // namespace histaid::train
