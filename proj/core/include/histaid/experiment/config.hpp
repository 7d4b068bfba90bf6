#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "histaid/data/pipeline.hpp"
#include "histaid/data/synth.hpp"
#include "histaid/train/fit.hpp"
#include "histaid/train/model.hpp"

namespace histaid::experiment {

// synthetic: generate a cohort in memory from [synth];
// tables: merge image/report tables and build samples with [data] sections;
// manifest: prebuilt samples.jsonl from `histaid build`.
enum class DataSource { synthetic, tables, manifest };
enum class ModalityCombo { image_text, image, text };

std::string to_string(DataSource s);
DataSource parse_data_source(std::string_view name);
std::string to_string(ModalityCombo m);
ModalityCombo parse_modality_combo(std::string_view name);

struct DataConfig {
  DataSource source = DataSource::synthetic;
  data::SyntheticSpec synth;
  std::uint64_t synth_seed = 0;
  std::string images, reports, store, samples;  // resolved against the config file's directory
  data::SectionMode sections = data::SectionMode::impression;
  std::size_t min_history = 0;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 0;
  std::vector<std::string> labels;  // empty: synthetic names or the default list
};

// Restrictions on what history a sample exposes to the model.
struct HistoryConfig {
  std::optional<std::size_t> num_reports;     // keep the most recent N reports
  std::optional<double> time_window_days;     // keep reports with offset <= days * 24 h
  ModalityCombo modality = ModalityCombo::image_text;
};

struct ExperimentConfig {
  std::string name = "default";
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  DataConfig data;
  HistoryConfig history;
  train::ModelConfig model;
  train::TrainConfig train;

  std::string text;                    // config file, verbatim
  std::vector<std::string> overrides;  // "section.key=value", in application order
  std::filesystem::path base_dir;      // relative data paths resolve here

  void validate() const;
};

// Precedence, lowest first: built-in defaults, the file, then each override in
// order. Unknown sections or keys are ConfigErrors.
ExperimentConfig parse_config(std::string_view text, std::span<const std::string> overrides = {},
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides = {});

// Sets one key; the same entry point serves files, overrides and ablation axes.
void apply_setting(ExperimentConfig& cfg, std::string_view section, std::string_view key, std::string_view value);
// "section.key=value"
void apply_override(ExperimentConfig& cfg, std::string_view assignment);

// Every effective setting as an INI document, keys in a fixed order.
std::string resolved_ini(const ExperimentConfig& cfg);

}  // namespace histaid::experiment
