#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "histaid/data/records.hpp"

namespace histaid::metrics {

// Mann-Whitney AUROC with midranks: (R+ - n+(n+ + 1)/2) / (n+ n-).
// UndefinedMetricError unless both classes are present.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Average precision. Tied scores form one threshold: every positive in a tied
// block is credited with the precision at the end of the block, so
//   AP = sum over blocks of (positives_in_block / n+) * (TP / predicted positives).
// UndefinedMetricError when there is no positive.
double auprc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// One-tailed rank-sum test of "y tends to exceed x". Exact enumeration of
// every split of the pooled midranks when |x|+|y| <= 12, otherwise the normal
// approximation with tie and continuity corrections. Returns 1 when all
// values are identical.
double wilcoxon_one_tailed(std::span<const double> x, std::span<const double> y);
double wilcoxon_exact(std::span<const double> x, std::span<const double> y);
double wilcoxon_normal(std::span<const double> x, std::span<const double> y);

// Row-major [n x C] scores and binary targets.
struct ScoreMatrix {
  std::size_t n = 0;
  std::size_t c = 0;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;

  std::vector<double> score_column(std::size_t j) const;
  std::vector<std::uint8_t> label_column(std::size_t j) const;
  ScoreMatrix select(std::span<const std::size_t> rows) const;
};

struct LabelMetric {
  std::string name;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::optional<double> auroc;
  std::optional<double> auprc;
};

// Subgroup axes: sex {F, M}, age {<40, 40-60, 60-80, >80}, race {White, Black, Asian, Other}.
std::string age_bin(int age_years);
std::vector<std::pair<std::string, std::vector<std::string>>> subgroup_axes();

struct SubgroupCell {
  std::string axis;
  std::string value;
  std::size_t n = 0;
  std::size_t labels_defined = 0;  // labels with a defined AUROC in this cell
  std::optional<double> macro_auroc;  // absent when no label is defined
  std::optional<double> macro_auprc;
};

struct MetricReport {
  std::vector<LabelMetric> labels;
  std::optional<double> macro_auroc;  // mean over labels where defined
  std::optional<double> macro_auprc;
  std::size_t auroc_skipped = 0;
  std::size_t auprc_skipped = 0;
  std::size_t n = 0;
  std::vector<SubgroupCell> subgroups;
};

MetricReport evaluate(const ScoreMatrix& m, const std::vector<std::string>& label_names);

// Metrics computed independently within each demographic cell. Every cell of
// every axis is listed; cells without a defined metric carry only counts.
std::vector<SubgroupCell> subgroup_metrics(const ScoreMatrix& m, std::span<const data::Demographics> demographics);

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for a single value
  std::size_t n = 0;
};
Stat mean_std(std::span<const double> values);

struct AggregateReport {
  std::vector<std::string> label_names;
  std::vector<std::optional<Stat>> auroc;  // per label, over seeds where defined
  std::vector<std::optional<Stat>> auprc;
  Stat macro_auroc;
  Stat macro_auprc;
  std::size_t seeds = 0;
  // One-tailed p-values that this run beats the baseline (present when one is given).
  std::optional<double> p_macro_auroc;
  std::optional<double> p_macro_auprc;
  std::vector<std::optional<double>> p_auroc;
};

// ContractError when reports disagree on the label set.
AggregateReport seed_aggregate(std::span<const MetricReport> reports,
                               std::span<const MetricReport> baseline = {});

std::string to_json(const MetricReport& r);
MetricReport report_from_json(const std::string& text);
std::string to_json(const AggregateReport& r);
// Tab-separated: label, model, auroc, auprc, auroc_std, auprc_std; last row is the macro mean.
std::string to_tsv(const AggregateReport& r, const std::string& model);

}  // namespace histaid::metrics
