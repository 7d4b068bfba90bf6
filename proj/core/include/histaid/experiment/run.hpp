#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "histaid/data/pipeline.hpp"
#include "histaid/data/records.hpp"
#include "histaid/data/store.hpp"
#include "histaid/experiment/config.hpp"
#include "histaid/metrics/metrics.hpp"
#include "histaid/train/fit.hpp"

namespace histaid::experiment {

struct Dataset {
  std::vector<std::string> label_names;
  std::vector<data::TemporalSample> samples;  // splits assigned
  data::EmbeddingStore store;
};

// Resolves the configured source into split samples plus their store.
Dataset load_dataset(const ExperimentConfig& cfg);

// Model settings with store width and label count taken from the data.
train::ModelConfig model_config(const ExperimentConfig& cfg, const Dataset& ds);

struct SplitData {
  std::vector<train::PreparedSample> samples;
  std::vector<data::Demographics> demographics;
};

struct PreparedData {
  SplitData train, val, test;
  std::size_t reports_kept = 0;  // history reports reaching the model, all splits
  const SplitData& of(data::Split s) const;
};

// Applies [history] restrictions (num_reports, time window, modality) and
// looks every kept slot up in the store.
PreparedData prepare_data(const ExperimentConfig& cfg, const Dataset& ds, const train::ModelConfig& model);

// Per-label and subgroup metrics of `model` on one split.
metrics::MetricReport evaluate_split(const train::HistAidModel& model, const SplitData& split,
                                     const std::vector<std::string>& label_names);

// Artifacts of one seed in `dir`: log.jsonl (config header, then one line
// per epoch) and checkpoint.tmck (best validation epoch).
struct SeedArtifacts {
  std::filesystem::path dir;
  static constexpr const char* kLog = "log.jsonl";
  static constexpr const char* kCheckpoint = "checkpoint.tmck";
  std::filesystem::path log() const { return dir / kLog; }
  std::filesystem::path checkpoint() const { return dir / kCheckpoint; }
  std::filesystem::path eval(data::Split split) const { return dir / ("eval_" + data::to_string(split) + ".json"); }
  bool trained() const;
};

std::string log_header_json(const ExperimentConfig& cfg, std::uint64_t seed);

// Trains one seed and writes its log and best checkpoint atomically. Returns
// the model restored to the best checkpoint.
train::HistAidModel train_seed(const ExperimentConfig& cfg, const Dataset& ds, const PreparedData& data,
                               std::uint64_t seed, const SeedArtifacts& out);

// Loads a checkpoint written by train_seed. ContractError when its label set
// differs from `label_names`.
train::HistAidModel load_model(const std::filesystem::path& checkpoint, const train::ModelConfig& model,
                               const std::vector<std::string>& label_names);

// Runs tasks on up to `jobs` threads. Every task runs; the first failure (in
// task order) is rethrown afterwards.
void run_parallel(std::size_t jobs, std::vector<std::function<void()>> tasks);

// Reports every non-empty directory in `out`. Used to refuse overwrites.
bool directory_has_content(const std::filesystem::path& dir);

}  // namespace histaid::experiment
