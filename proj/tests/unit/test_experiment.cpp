#include <gtest/gtest.h>

#include <sstream>
#include <stdexcept>

#include "helpers.hpp"
#include "histaid/data/io.hpp"
#include "histaid/error.hpp"
#include "histaid/experiment/commands.hpp"
#include "histaid/experiment/config.hpp"
#include "histaid/experiment/run.hpp"
#include "histaid/metrics/metrics.hpp"

using namespace histaid;
using namespace histaid::experiment;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"(
[experiment]
name = tiny
seeds = 0, 1
[synth]
n_subjects = 40
min_visits = 2
max_visits = 5
dim = 8
n_labels = 2
[model]
dim = 8
heads = 2
layers = 1
ff_dim = 16
k_text = 4
[train]
epochs = 2
batch_size = 8
lr_encoder = 3e-3
lr_tst = 3e-3
)";

std::string slurp(const fs::path& p) { return data::read_file(p.string()); }

}  // namespace

TEST(Config, DefaultsFileThenOverrides) {
  const std::vector<std::string> over{"model.dim=16", "model.ff_dim=48", "model.dim=24"};
  auto cfg = parse_config(kTiny, over);
  EXPECT_EQ(cfg.name, "tiny");
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{0, 1}));
  EXPECT_EQ(cfg.model.encoder.model_dim, 24u);  // last override wins
  EXPECT_EQ(cfg.model.encoder.ff_dim, 48u);
  EXPECT_EQ(cfg.model.encoder.heads, 2u);      // from the file
  EXPECT_EQ(cfg.model.fusion.block_l, 8u);     // built-in default
  EXPECT_EQ(cfg.overrides, over);
  EXPECT_EQ(cfg.text, kTiny);
}

TEST(Config, UnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config("[model]\nwidth = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[modle]\ndim = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("dim = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[model]\ndim = three\n"), ConfigError);
  EXPECT_THROW(parse_config("[model]\nfusion = late\n"), ConfigError);
  EXPECT_THROW(parse_config("[experiment]\nseeds = 1, 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[experiment]\nname = ../escape\n"), ConfigError);
  EXPECT_THROW(parse_config("[data]\nsource = tables\n"), ConfigError);
  const std::vector<std::string> bad{"model.dim"};
  EXPECT_THROW(parse_config("", bad), ConfigError);
}

TEST(Config, HistorySettings) {
  auto cfg = parse_config("[history]\nnum_reports = 3\ntime_window_days = 30\nmodality = text\n");
  EXPECT_EQ(cfg.history.num_reports, 3u);
  EXPECT_EQ(cfg.history.time_window_days, 30.0);
  EXPECT_EQ(cfg.history.modality, ModalityCombo::text);
  apply_override(cfg, "history.num_reports=all");
  apply_override(cfg, "history.time_window_days=inf");
  EXPECT_FALSE(cfg.history.num_reports.has_value());
  EXPECT_FALSE(cfg.history.time_window_days.has_value());
  EXPECT_THROW(apply_override(cfg, "history.time_window_days=0"), ConfigError);
}

TEST(Config, ResolvedIniIsAFixedPoint) {
  auto cfg = parse_config(kTiny, std::vector<std::string>{"history.num_reports=2", "model.fusion=block"});
  const auto ini = resolved_ini(cfg);
  EXPECT_EQ(resolved_ini(parse_config(ini)), ini);
}

TEST(PrepareData, HistoryRestrictions) {
  auto base = parse_config(kTiny);
  const auto ds = load_dataset(base);
  const auto mc = model_config(base, ds);
  const auto all = prepare_data(base, ds, mc);
  EXPECT_GT(all.reports_kept, 0u);

  auto none = base;
  apply_override(none, "history.num_reports=0");
  EXPECT_EQ(prepare_data(none, ds, mc).reports_kept, 0u);

  auto inf = base;
  apply_override(inf, "history.time_window_days=inf");
  EXPECT_EQ(prepare_data(inf, ds, mc).reports_kept, all.reports_kept);

  auto week = base;
  apply_override(week, "history.time_window_days=7");
  EXPECT_LT(prepare_data(week, ds, mc).reports_kept, all.reports_kept);

  auto image_only = base;
  apply_override(image_only, "history.modality=image");
  const auto io = prepare_data(image_only, ds, mc);
  for (const auto& s : io.train.samples) EXPECT_EQ(s.n_text, 0u);
}

TEST(Dataset, SplitsAreSubjectDisjoint) {
  const auto ds = load_dataset(parse_config(kTiny));
  std::map<std::string, data::Split> seen;
  for (const auto& s : ds.samples) {
    auto [it, inserted] = seen.emplace(s.subject_id, s.split);
    if (!inserted) EXPECT_EQ(it->second, s.split);
    EXPECT_NE(s.split, data::Split::none);
  }
}

TEST(RunParallel, RethrowsFirstFailureAfterAllTasks) {
  std::vector<int> ran(4, 0);
  std::vector<std::function<void()>> tasks;
  for (int i = 0; i < 4; ++i) {
    tasks.emplace_back([&ran, i] {
      ran[i] = 1;
      if (i == 1) throw std::runtime_error("one");
      if (i == 3) throw std::runtime_error("three");
    });
  }
  try {
    run_parallel(2, tasks);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "one");
  }
  EXPECT_EQ(ran, (std::vector<int>{1, 1, 1, 1}));
}

TEST(Ablation, SpecValidation) {
  auto cfg = parse_config(kTiny);
  EXPECT_THROW((AblationSpec{"depth", {"1"}}.validate(cfg)), ConfigError);
  EXPECT_THROW((AblationSpec{"fusion", {}}.validate(cfg)), ConfigError);
  EXPECT_THROW((AblationSpec{"fusion", {"vilt", "vilt"}}.validate(cfg)), ConfigError);
  EXPECT_THROW((AblationSpec{"fusion", {"vilt", "late"}}.validate(cfg)), ConfigError);
  EXPECT_THROW((AblationSpec{"num_reports", {"../x"}}.validate(cfg)), ConfigError);
  EXPECT_NO_THROW((AblationSpec{"num_reports", {"0", "all"}}.validate(cfg)));
}

TEST(Commands, TrainEvalAblateReport) {
  const auto out = histaid::testing::scratch_dir(HISTAID_WORK_DIR, "commands");
  std::ostringstream log;
  auto base = parse_config(kTiny, std::vector<std::string>{"history.num_reports=0"});
  base.name = "no_history";
  cmd_train(base, {out, 1, false}, log);
  auto full = parse_config(kTiny);
  cmd_train(full, {out, 2, false}, log);
  EXPECT_TRUE(fs::exists(out / "runs/tiny/seed_1/checkpoint.tmck"));
  EXPECT_TRUE(fs::exists(out / "runs/tiny/config.ini"));
  EXPECT_EQ(slurp(out / "runs/tiny/config.ini"), kTiny);

  const auto agg_base = cmd_eval(base, {out, 1, false}, {}, log);
  EvalCommand with_baseline;
  with_baseline.baseline = "no_history";
  const auto agg = cmd_eval(full, {out, 1, false}, with_baseline, log);
  EXPECT_EQ(agg.seeds, 2u);
  EXPECT_TRUE(agg.p_macro_auroc.has_value());
  EXPECT_TRUE(fs::exists(out / "runs/tiny/per_label_test.tsv"));

  // Training a seed again without --force reuses the artifacts.
  const auto log_before = slurp(out / "runs/tiny/seed_0/log.jsonl");
  std::ostringstream again;
  cmd_train(full, {out, 1, false}, again);
  EXPECT_NE(again.str().find("skipped"), std::string::npos);
  EXPECT_EQ(slurp(out / "runs/tiny/seed_0/log.jsonl"), log_before);

  // The num_reports=0 cell is the same experiment as the no_history run.
  const auto grid = cmd_ablate(full, {"num_reports", {"0", "2"}}, {out, 2, false}, log);
  ASSERT_EQ(grid.cells.size(), 4u);
  ASSERT_EQ(grid.rows.size(), 2u);
  EXPECT_TRUE(grid.cells[0].empty_history);
  EXPECT_FALSE(grid.cells[2].empty_history);
  for (std::size_t s = 0; s < 2; ++s) {
    const auto cell = metrics::report_from_json(slurp(out / ("ablations/num_reports/0/seed_" + std::to_string(s)) /
                                                      "eval_test.json"));
    const auto run = metrics::report_from_json(slurp(out / ("runs/no_history/seed_" + std::to_string(s)) /
                                                     "eval_test.json"));
    EXPECT_EQ(cell.macro_auroc, run.macro_auroc);
  }
  EXPECT_NEAR(grid.rows[0].auroc.mean, agg_base.macro_auroc.mean, 1e-15);
  EXPECT_TRUE(grid.rows[1].p_auroc.has_value());
  EXPECT_TRUE(fs::exists(out / "ablations/num_reports/grid.tsv"));

  ReportCommand rc{out, {"no_history", "tiny", "missing_run"}, {"num_reports"}, data::Split::test};
  auto first = cmd_report(rc, log);
  EXPECT_TRUE(first.partial);
  EXPECT_EQ(first.missing, (std::vector<std::string>{"runs/missing_run"}));
  const auto cmp = slurp(out / "report/comparison.tsv");
  const auto series = slurp(out / "report/series_num_reports.json");
  cmd_report(rc, log);
  EXPECT_EQ(slurp(out / "report/comparison.tsv"), cmp);
  EXPECT_EQ(slurp(out / "report/series_num_reports.json"), series);
}

TEST(Commands, EvalRejectsMismatchedLabels) {
  const auto out = histaid::testing::scratch_dir(HISTAID_WORK_DIR, "labels");
  std::ostringstream log;
  auto cfg = parse_config(kTiny, std::vector<std::string>{"experiment.seeds=0", "train.epochs=1"});
  cmd_train(cfg, {out, 1, false}, log);
  auto three = cfg;
  apply_override(three, "synth.n_labels=3");
  EXPECT_THROW(cmd_eval(three, {out, 1, false}, {}, log), ContractError);
}

TEST(Commands, SynthRefusesToOverwrite) {
  const auto out = histaid::testing::scratch_dir(HISTAID_WORK_DIR, "synth");
  std::ostringstream log;
  data::SyntheticSpec spec;
  spec.n_subjects = 5;
  cmd_synth({spec, 0, out, false}, log);
  EXPECT_TRUE(fs::exists(out / "store.embs"));
  EXPECT_TRUE(fs::exists(out / "bridge_manifest.jsonl"));
  EXPECT_THROW(cmd_synth({spec, 0, out, false}, log), ConfigError);
  EXPECT_NO_THROW(cmd_synth({spec, 0, out, true}, log));
}
