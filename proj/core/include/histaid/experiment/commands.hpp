#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "histaid/data/pipeline.hpp"
#include "histaid/data/records.hpp"
#include "histaid/data/synth.hpp"
#include "histaid/experiment/config.hpp"
#include "histaid/metrics/metrics.hpp"

// Library forms of the `histaid` subcommands. Each writes only beneath its
// output root, through temp-file-and-rename, and reports progress on `log`.
namespace histaid::experiment {

namespace fs = std::filesystem;

struct SynthCommand {
  data::SyntheticSpec spec;
  std::uint64_t seed = 0;
  fs::path out;
  bool force = false;
};

// Writes images.csv, reports.csv, store.embs and bridge_manifest.jsonl.
// ConfigError when `out` is non-empty and `force` is unset.
void cmd_synth(const SynthCommand& cmd, std::ostream& log);

struct BuildCommand {
  fs::path images, reports, store, out;
  data::SectionMode mode = data::SectionMode::impression;
  std::size_t min_history = 0;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 0;
  std::vector<std::string> labels;  // empty: the default list
  bool force = false;
};

struct BuildSummary {
  data::MergeStats merge;
  data::BuildStats build;
  data::DedupStats dedup;
  std::size_t samples_before_dedup = 0;
  std::size_t samples_after_dedup = 0;
  std::size_t missing_store_keys = 0;
  std::array<std::size_t, 3> split_subjects{};  // train, val, test
  std::array<std::size_t, 3> split_samples{};
};

// merge -> build -> dedup -> split. Writes samples.jsonl, splits.json,
// build_info.json and report_texts.jsonl (bridge manifest of report texts).
// LeakageError propagates before anything is written.
BuildSummary cmd_build(const BuildCommand& cmd, std::ostream& log);

struct RunOptions {
  fs::path out;
  std::size_t jobs = 1;
  bool force = false;  // retrain seeds whose artifacts already exist
};

fs::path run_dir(const fs::path& out, const std::string& name);

// runs/<name>/config.ini plus runs/<name>/seed_<s>/{log.jsonl, checkpoint.tmck}.
void cmd_train(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log);

struct EvalCommand {
  data::Split split = data::Split::test;
  std::optional<std::string> baseline;  // run name under the same root
};

// Per-seed eval_<split>.json, then runs/<name>/eval_<split>.json (seed
// aggregate with p-values against the baseline) and per_label_<split>.tsv.
metrics::AggregateReport cmd_eval(const ExperimentConfig& cfg, const RunOptions& opts, const EvalCommand& cmd,
                                  std::ostream& log);

const std::vector<std::string>& ablation_axes();

struct AblationSpec {
  std::string axis;
  std::vector<std::string> values;

  // ConfigError for an unknown axis, no values, or a value the axis rejects.
  void validate(const ExperimentConfig& base) const;
};

struct AblationCell {
  std::string value;
  std::uint64_t seed = 0;
  std::optional<double> macro_auroc;
  std::optional<double> macro_auprc;
  bool empty_history = false;  // no sample kept any history report
  bool degenerate = false;     // no metric could be computed
  std::string note;
};

struct AblationRow {
  std::string value;
  metrics::Stat auroc, auprc;
  std::optional<double> delta_auroc, delta_auprc;  // against the first value
  std::optional<double> p_auroc;                   // one-tailed: this value beats the first
  bool degenerate = false;
};

struct AblationGrid {
  std::string axis;
  std::vector<AblationCell> cells;  // values x seeds, value-major
  std::vector<AblationRow> rows;
};

// Cross product of axis values and seeds with everything else fixed. Cells
// are stored under ablations/<axis>/<value>/seed_<s>/; finished cells are
// reused unless opts.force is set.
AblationGrid cmd_ablate(const ExperimentConfig& cfg, const AblationSpec& spec, const RunOptions& opts,
                        std::ostream& log);

struct ReportCommand {
  fs::path out;
  std::vector<std::string> runs;       // first run is the reference for delta columns
  std::vector<std::string> ablations;  // axes under ablations/
  data::Split split = data::Split::test;
};

struct ReportSummary {
  std::vector<std::string> missing;
  bool partial = false;
};

// Writes report/{per_label.tsv, comparison.tsv, subgroups.tsv,
// series_<axis>.json, report.json} from artifacts on disk only.
ReportSummary cmd_report(const ReportCommand& cmd, std::ostream& log);

}  // namespace histaid::experiment
