// histaid: synth | build | train | eval | ablate | report
//
// Exit codes: 0 success, 2 contract/config/input errors, 3 data-integrity
// failures (leakage, corrupt binary files), 1 anything else.

#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "histaid/error.hpp"
#include "histaid/experiment/commands.hpp"
#include "histaid/experiment/config.hpp"

namespace ex = histaid::experiment;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::array<double, 3> parse_fractions(const std::string& s) {
  const auto parts = split_csv(s);
  if (parts.size() != 3) throw histaid::ConfigError("--split needs three comma-separated fractions");
  std::array<double, 3> f{};
  for (std::size_t i = 0; i < 3; ++i) {
    try {
      std::size_t used = 0;
      f[i] = std::stod(parts[i], &used);
      if (used != parts[i].size()) throw std::invalid_argument(parts[i]);
    } catch (const std::logic_error&) {
      throw histaid::ConfigError("--split fraction '" + parts[i] + "' is not a number");
    }
  }
  return f;
}

struct Common {
  std::string config;
  std::string out;
  std::vector<std::string> sets;
  std::size_t jobs = 1;
  bool force = false;
};

void add_run_options(CLI::App* cmd, Common& c, bool with_jobs) {
  cmd->add_option("--config,-c", c.config, "experiment INI file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out,-o", c.out, "output root")->required();
  cmd->add_option("--set", c.sets, "override, section.key=value (repeatable; applied after the file)");
  if (with_jobs) {
    cmd->add_option("--jobs,-j", c.jobs, "concurrent seeds/cells")->check(CLI::PositiveNumber);
    cmd->add_flag("--force", c.force, "recompute runs whose artifacts exist");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HIST-AID desk-scale experiments: temporal multi-modal diagnosis on stored embeddings"};
  app.require_subcommand(1);

  // synth
  std::string synth_out, synth_config;
  std::uint64_t synth_seed = 0;
  std::vector<std::string> synth_sets;
  bool synth_force = false;
  auto* synth = app.add_subcommand("synth", "write a synthetic cohort: tables, embedding store, bridge manifest");
  synth->add_option("--out,-o", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--config,-c", synth_config, "INI file whose [synth] section sets the cohort")
      ->check(CLI::ExistingFile);
  synth->add_option("--set", synth_sets, "override, synth.key=value (repeatable)");
  synth->add_flag("--force", synth_force, "overwrite a non-empty output directory");

  // build
  ex::BuildCommand build_cmd;
  std::string b_images, b_reports, b_store, b_out, b_sections = "impression", b_split = "0.8,0.1,0.1", b_labels;
  auto* build = app.add_subcommand("build", "merge tables, build temporal samples, dedup and split by subject");
  build->add_option("--images", b_images, "image/label table (CSV)")->required()->check(CLI::ExistingFile);
  build->add_option("--reports", b_reports, "report table (CSV)")->required()->check(CLI::ExistingFile);
  build->add_option("--store", b_store, "embedding store; every referenced key is checked")->check(CLI::ExistingFile);
  build->add_option("--out,-o", b_out, "output directory")->required();
  build->add_option("--sections", b_sections, "impression|finding|both");
  build->add_option("--min-history", build_cmd.min_history, "drop anchors with fewer prior reports");
  build->add_option("--split", b_split, "train,val,test subject fractions");
  build->add_option("--split-seed", build_cmd.split_seed, "subject shuffle seed");
  build->add_option("--labels", b_labels, "comma-separated label columns (default: the 13-label set)");
  build->add_flag("--force", build_cmd.force, "overwrite a non-empty output directory");

  Common train_opts, eval_opts, ablate_opts;
  auto* train = app.add_subcommand("train", "train every configured seed; logs and best checkpoints per seed");
  add_run_options(train, train_opts, true);

  std::string eval_split = "test", eval_baseline;
  auto* eval = app.add_subcommand("eval", "evaluate checkpoints; per-seed reports and seed aggregate");
  add_run_options(eval, eval_opts, false);
  eval->add_option("--split", eval_split, "train|val|test");
  eval->add_option("--baseline", eval_baseline, "run name to test against (one-tailed Wilcoxon)");

  std::string axis, values;
  auto* ablate = app.add_subcommand("ablate", "sweep one axis across all seeds");
  add_run_options(ablate, ablate_opts, true);
  ablate->add_option("--axis", axis, "num_reports|time_window_days|positional|pooling|fusion|sections|modality_combo")
      ->required();
  ablate->add_option("--values", values, "comma-separated axis values; the first is the baseline")->required();

  std::string report_out, report_runs, report_ablations, report_split = "test";
  auto* report = app.add_subcommand("report", "tables and plot series from finished runs");
  report->add_option("--out,-o", report_out, "output root holding runs/ and ablations/")->required();
  report->add_option("--runs", report_runs, "comma-separated run names; the first is the reference");
  report->add_option("--ablations", report_ablations, "comma-separated ablation axes");
  report->add_option("--split", report_split, "train|val|test");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*synth) {
      ex::ExperimentConfig cfg = synth_config.empty() ? ex::parse_config("") : ex::load_config(synth_config);
      for (const auto& s : synth_sets) ex::apply_override(cfg, s);
      ex::SynthCommand cmd{cfg.data.synth, synth_seed, synth_out, synth_force};
      ex::cmd_synth(cmd, std::cout);
    } else if (*build) {
      build_cmd.images = b_images;
      build_cmd.reports = b_reports;
      build_cmd.store = b_store;
      build_cmd.out = b_out;
      build_cmd.mode = histaid::data::parse_section_mode(b_sections);
      build_cmd.split = parse_fractions(b_split);
      build_cmd.labels = split_csv(b_labels);
      ex::cmd_build(build_cmd, std::cout);
    } else if (*train) {
      const auto cfg = ex::load_config(train_opts.config, train_opts.sets);
      ex::cmd_train(cfg, {train_opts.out, train_opts.jobs, train_opts.force}, std::cout);
    } else if (*eval) {
      const auto cfg = ex::load_config(eval_opts.config, eval_opts.sets);
      ex::EvalCommand cmd;
      cmd.split = histaid::data::parse_split(eval_split);
      if (!eval_baseline.empty()) cmd.baseline = eval_baseline;
      ex::cmd_eval(cfg, {eval_opts.out, 1, false}, cmd, std::cout);
    } else if (*ablate) {
      const auto cfg = ex::load_config(ablate_opts.config, ablate_opts.sets);
      ex::AblationSpec spec{axis, split_csv(values)};
      ex::cmd_ablate(cfg, spec, {ablate_opts.out, ablate_opts.jobs, ablate_opts.force}, std::cout);
    } else if (*report) {
      ex::ReportCommand cmd;
      cmd.out = report_out;
      cmd.runs = split_csv(report_runs);
      cmd.ablations = split_csv(report_ablations);
      cmd.split = histaid::data::parse_split(report_split);
      const auto sum = ex::cmd_report(cmd, std::cout);
      (void)sum;
    }
  } catch (const histaid::LeakageError& e) {
    std::cerr << "leakage: " << e.what() << "\n";
    return 3;
  } catch (const histaid::CorruptionError& e) {
    std::cerr << "corrupt input: " << e.what() << "\n";
    return 3;
  } catch (const histaid::ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const histaid::ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const histaid::FormatError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
