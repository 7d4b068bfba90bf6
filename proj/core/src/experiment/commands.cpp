#include "histaid/experiment/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "histaid/data/io.hpp"
#include "histaid/data/manifest.hpp"
#include "histaid/data/store.hpp"
#include "histaid/data/table.hpp"
#include "histaid/error.hpp"
#include "histaid/experiment/run.hpp"

namespace histaid::experiment {

using nlohmann::json;

namespace {

std::string num(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string("NA"); }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json stat_json(const metrics::Stat& s) { return {{"mean", s.mean}, {"std", s.std}, {"n", s.n}}; }

void refuse_overwrite(const fs::path& out, bool force) {
  if (!force && directory_has_content(out)) {
    throw ConfigError("output directory " + out.string() + " is not empty (use --force to overwrite)");
  }
}

std::string split_name(std::size_t i) { return i == 0 ? "train" : i == 1 ? "val" : "test"; }

// seed_<n> subdirectories, ordered by n.
std::vector<std::pair<std::uint64_t, fs::path>> seed_dirs(const fs::path& dir) {
  std::vector<std::pair<std::uint64_t, fs::path>> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (!entry.is_directory() || name.rfind("seed_", 0) != 0) continue;
    std::uint64_t seed = 0;
    const auto* first = name.data() + 5;
    const auto* last = name.data() + name.size();
    const auto [ptr, ec] = std::from_chars(first, last, seed);
    if (ec == std::errc() && ptr == last && first != last) out.emplace_back(seed, entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

fs::path seed_dir(const fs::path& base, std::uint64_t seed) { return base / ("seed_" + std::to_string(seed)); }

std::vector<metrics::MetricReport> read_seed_reports(const fs::path& dir, data::Split split) {
  std::vector<metrics::MetricReport> out;
  for (const auto& [seed, path] : seed_dirs(dir)) {
    const auto file = SeedArtifacts{path}.eval(split);
    if (fs::exists(file)) out.push_back(metrics::report_from_json(data::read_file(file.string())));
  }
  return out;
}

// Subgroup macro AUROC over seeds: one row per (axis, value).
std::string subgroup_rows(const std::string& model, const std::vector<metrics::MetricReport>& reports) {
  std::string out;
  if (reports.empty()) return out;
  const auto& cells = reports.front().subgroups;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::vector<double> auroc, auprc;
    for (const auto& r : reports) {
      if (i >= r.subgroups.size()) throw ContractError("seed reports disagree on subgroup cells");
      if (r.subgroups[i].macro_auroc) auroc.push_back(*r.subgroups[i].macro_auroc);
      if (r.subgroups[i].macro_auprc) auprc.push_back(*r.subgroups[i].macro_auprc);
    }
    const auto a = metrics::mean_std(auroc);
    const auto p = metrics::mean_std(auprc);
    out += model + "\t" + cells[i].axis + "\t" + cells[i].value + "\t" + std::to_string(cells[i].n) + "\t" +
           std::to_string(auroc.size()) + "\t" + (auroc.empty() ? "NA" : num(a.mean)) + "\t" +
           (auroc.empty() ? "NA" : num(a.std)) + "\t" + (auprc.empty() ? "NA" : num(p.mean)) + "\t" +
           (auprc.empty() ? "NA" : num(p.std)) + "\n";
  }
  return out;
}

const char* kSubgroupHeader = "model\taxis\tgroup\tn\tseeds_defined\tmacro_auroc\tmacro_auroc_std\tmacro_auprc\tmacro_auprc_std\n";

struct AxisKey {
  const char* axis;
  const char* section;
  const char* key;
};

constexpr AxisKey kAxes[] = {
    {"num_reports", "history", "num_reports"},  {"time_window_days", "history", "time_window_days"},
    {"positional", "model", "positional"},      {"pooling", "model", "pooling"},
    {"fusion", "model", "fusion"},              {"sections", "data", "sections"},
    {"modality_combo", "history", "modality"},
};

const AxisKey& axis_key(const std::string& axis) {
  for (const auto& a : kAxes) {
    if (axis == a.axis) return a;
  }
  std::string known;
  for (const auto& a : kAxes) known += std::string(known.empty() ? "" : "|") + a.axis;
  throw ConfigError("unknown ablation axis '" + axis + "' (" + known + ")");
}

ExperimentConfig cell_config(const ExperimentConfig& base, const AxisKey& key, const std::string& value) {
  auto cfg = base;
  apply_setting(cfg, key.section, key.key, value);
  cfg.overrides.push_back(std::string(key.section) + "." + key.key + "=" + value);
  cfg.validate();
  return cfg;
}

std::optional<double> numeric_value(const std::string& v) {
  if (v == "inf" || v == "all" || v == "none") return std::numeric_limits<double>::infinity();
  double d = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
  if (ec != std::errc() || ptr != v.data() + v.size()) return std::nullopt;
  return d;
}

}  // namespace

void cmd_synth(const SynthCommand& cmd, std::ostream& log) {
  cmd.spec.validate();
  refuse_overwrite(cmd.out, cmd.force);
  const auto cohort = data::synth_cohort(cmd.spec, cmd.seed);
  data::write_file_atomic((cmd.out / "images.csv").string(), data::format_table(cohort.images));
  data::write_file_atomic((cmd.out / "reports.csv").string(), data::format_table(cohort.reports));
  data::embstore_write(cohort.store, (cmd.out / "store.embs").string());

  const auto records = data::merge_records(cohort.images, cohort.reports, cohort.label_names);
  std::vector<std::pair<std::string, std::string>> texts;
  for (auto mode : {data::SectionMode::impression, data::SectionMode::finding, data::SectionMode::both}) {
    auto t = data::report_texts(records, mode);
    texts.insert(texts.end(), t.begin(), t.end());
  }
  data::write_file_atomic((cmd.out / "bridge_manifest.jsonl").string(), data::bridge_manifest_jsonl(texts));

  json info;
  info["seed"] = cmd.seed;
  info["labels"] = cohort.label_names;
  info["signal"] = data::to_string(cmd.spec.signal);
  info["subjects"] = cmd.spec.n_subjects;
  info["studies"] = cohort.images.rows.size();
  info["dim"] = cmd.spec.dim;
  data::write_file_atomic((cmd.out / "synth_info.json").string(), info.dump(2) + "\n");
  log << "synth: " << cmd.spec.n_subjects << " subjects, " << cohort.images.rows.size() << " studies, "
      << cohort.store.size() << " embeddings (dim " << cmd.spec.dim << ") -> " << cmd.out.string() << "\n";
}

BuildSummary cmd_build(const BuildCommand& cmd, std::ostream& log) {
  refuse_overwrite(cmd.out, cmd.force);
  const auto labels = cmd.labels.empty() ? data::default_label_names() : cmd.labels;
  BuildSummary sum;
  const auto images = data::read_table(cmd.images.string());
  const auto reports = data::read_table(cmd.reports.string());
  const auto records = data::merge_records(images, reports, labels, &sum.merge);

  data::BuildOptions opts;
  opts.mode = cmd.mode;
  opts.min_history = cmd.min_history;
  auto samples = data::build_samples(records, opts, &sum.build);
  sum.samples_before_dedup = samples.size();
  samples = data::dedup_filter(std::move(samples), &sum.dedup);
  sum.samples_after_dedup = samples.size();
  const auto split = data::split_patients(data::unique_subjects(samples), cmd.split, cmd.split_seed);
  data::assign_splits(samples, split);
  data::check_leakage(samples);

  sum.split_subjects = {split.train.size(), split.val.size(), split.test.size()};
  for (const auto& s : samples) {
    const auto i = s.split == data::Split::train ? 0 : s.split == data::Split::val ? 1 : 2;
    ++sum.split_samples[i];
  }

  if (!cmd.store.empty()) {
    const auto store = data::embstore_read(cmd.store.string());
    std::string first_missing;
    auto check = [&](const std::string& key) {
      if (store.contains(key)) return;
      if (sum.missing_store_keys++ == 0) first_missing = key;
    };
    for (const auto& s : samples) {
      check(s.image_key);
      for (const auto& h : s.history_images) check(h.key);
      for (const auto& h : s.history_reports) check(h.key);
    }
    if (sum.missing_store_keys > 0) {
      throw ContractError(std::to_string(sum.missing_store_keys) + " embedding keys are missing from " +
                          cmd.store.string() + ", first '" + first_missing + "'");
    }
  }

  data::write_samples(samples, (cmd.out / "samples.jsonl").string());
  data::write_file_atomic((cmd.out / "splits.json").string(), data::split_to_json(split, cmd.split_seed));
  data::write_file_atomic((cmd.out / "report_texts.jsonl").string(),
                          data::bridge_manifest_jsonl(data::report_texts(records, cmd.mode)));

  json info;
  info["labels"] = labels;
  info["sections"] = data::to_string(cmd.mode);
  info["min_history"] = cmd.min_history;
  info["split"] = cmd.split;
  info["split_seed"] = cmd.split_seed;
  info["merge"] = {{"image_rows", sum.merge.image_rows},
                   {"report_rows", sum.merge.report_rows},
                   {"merged", sum.merge.merged},
                   {"dropped_images", sum.merge.dropped_images},
                   {"dropped_reports", sum.merge.dropped_reports}};
  info["build"] = {{"subjects", sum.build.subjects},
                   {"studies", sum.build.studies},
                   {"samples", sum.samples_before_dedup},
                   {"missing_section", sum.build.missing_section},
                   {"below_min_history", sum.build.below_min_history},
                   {"time_ties", sum.build.time_ties},
                   {"warnings", sum.build.warnings}};
  info["dedup"] = {{"samples", sum.samples_after_dedup},
                   {"duplicate_history", sum.dedup.duplicate_history},
                   {"empty_history", sum.dedup.empty_history},
                   {"empty_anchor", sum.dedup.empty_anchor}};
  json splits = json::object();
  for (std::size_t i = 0; i < 3; ++i) {
    splits[split_name(i)] = {{"subjects", sum.split_subjects[i]}, {"samples", sum.split_samples[i]}};
  }
  info["splits"] = splits;
  data::write_file_atomic((cmd.out / "build_info.json").string(), info.dump(2) + "\n");

  log << "merge: " << sum.merge.image_rows << " image rows, " << sum.merge.report_rows << " report rows, "
      << sum.merge.merged << " merged (" << sum.merge.dropped_images << " images and " << sum.merge.dropped_reports
      << " reports unmatched)\n";
  log << "build: " << sum.build.subjects << " subjects, " << sum.build.studies << " studies, "
      << sum.samples_before_dedup << " samples (" << sum.build.missing_section << " reports lacking "
      << data::to_string(cmd.mode) << ", " << sum.build.below_min_history << " below min history)\n";
  for (const auto& w : sum.build.warnings) log << "warning: " << w << "\n";
  log << "dedup: " << sum.samples_after_dedup << " samples (" << sum.dedup.duplicate_history
      << " duplicate history items, " << sum.dedup.empty_history << " empty history items, "
      << sum.dedup.empty_anchor << " empty anchors removed)\n";
  for (std::size_t i = 0; i < 3; ++i) {
    log << "split " << split_name(i) << ": " << sum.split_subjects[i] << " subjects, " << sum.split_samples[i]
        << " samples\n";
  }
  return sum;
}

fs::path run_dir(const fs::path& out, const std::string& name) { return out / "runs" / name; }

void cmd_train(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log) {
  cfg.validate();
  const auto ds = load_dataset(cfg);
  const auto mc = model_config(cfg, ds);
  const auto data = prepare_data(cfg, ds, mc);
  const auto dir = run_dir(opts.out, cfg.name);
  data::write_file_atomic((dir / "config.ini").string(), cfg.text);
  data::write_file_atomic((dir / "resolved.ini").string(), resolved_ini(cfg));
  log << "train " << cfg.name << ": " << data.train.samples.size() << " train, " << data.val.samples.size()
      << " val, " << data.test.samples.size() << " test samples; " << cfg.seeds.size() << " seeds\n";

  std::mutex log_mutex;
  std::vector<std::function<void()>> tasks;
  for (auto seed : cfg.seeds) {
    tasks.emplace_back([&, seed] {
      const SeedArtifacts art{seed_dir(dir, seed)};
      if (!opts.force && art.trained()) {
        std::lock_guard lock(log_mutex);
        log << "seed " << seed << ": artifacts exist, skipped\n";
        return;
      }
      const auto model = train_seed(cfg, ds, data, seed, art);
      const auto ckpt = train::read_checkpoint(art.checkpoint().string());
      std::lock_guard lock(log_mutex);
      log << "seed " << seed << ": best epoch " << ckpt.epoch << ", val macro AUROC "
          << num(ckpt.val_macro_auroc) << "\n";
    });
  }
  run_parallel(opts.jobs, std::move(tasks));
}

metrics::AggregateReport cmd_eval(const ExperimentConfig& cfg, const RunOptions& opts, const EvalCommand& cmd,
                                  std::ostream& log) {
  cfg.validate();
  if (cmd.split == data::Split::none) throw ConfigError("evaluation split must be train, val or test");
  const auto ds = load_dataset(cfg);
  const auto mc = model_config(cfg, ds);
  const auto data = prepare_data(cfg, ds, mc);
  const auto& split = data.of(cmd.split);
  const auto dir = run_dir(opts.out, cfg.name);

  std::vector<metrics::MetricReport> reports;
  for (auto seed : cfg.seeds) {
    const SeedArtifacts art{seed_dir(dir, seed)};
    if (!fs::exists(art.checkpoint())) {
      throw ContractError("run " + cfg.name + " has no checkpoint for seed " + std::to_string(seed) +
                          " (run `histaid train` first)");
    }
    const auto model = load_model(art.checkpoint(), mc, ds.label_names);
    auto report = evaluate_split(model, split, ds.label_names);
    data::write_file_atomic(art.eval(cmd.split).string(), metrics::to_json(report) + "\n");
    log << "seed " << seed << ": " << data::to_string(cmd.split) << " macro AUROC " << num(report.macro_auroc)
        << ", macro AUPRC " << num(report.macro_auprc) << "\n";
    reports.push_back(std::move(report));
  }

  std::vector<metrics::MetricReport> baseline;
  if (cmd.baseline) {
    baseline = read_seed_reports(run_dir(opts.out, *cmd.baseline), cmd.split);
    if (baseline.empty()) {
      throw ContractError("baseline run '" + *cmd.baseline + "' has no " + data::to_string(cmd.split) +
                          " evaluations under " + opts.out.string());
    }
  }
  const auto agg = metrics::seed_aggregate(reports, baseline);
  const auto tag = data::to_string(cmd.split);
  data::write_file_atomic((dir / ("eval_" + tag + ".json")).string(), metrics::to_json(agg) + "\n");
  data::write_file_atomic((dir / ("per_label_" + tag + ".tsv")).string(), metrics::to_tsv(agg, cfg.name));
  data::write_file_atomic((dir / ("subgroups_" + tag + ".tsv")).string(),
                          std::string(kSubgroupHeader) + subgroup_rows(cfg.name, reports));
  log << cfg.name << ": macro AUROC " << num(agg.macro_auroc.mean) << " +- " << num(agg.macro_auroc.std)
      << ", macro AUPRC " << num(agg.macro_auprc.mean) << " +- " << num(agg.macro_auprc.std);
  if (agg.p_macro_auroc) log << ", p(AUROC > " << *cmd.baseline << ") " << num(*agg.p_macro_auroc);
  log << "\n";
  return agg;
}

const std::vector<std::string>& ablation_axes() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& a : kAxes) v.emplace_back(a.axis);
    return v;
  }();
  return names;
}

void AblationSpec::validate(const ExperimentConfig& base) const {
  const auto& key = axis_key(axis);
  if (values.empty()) throw ConfigError("ablation axis " + axis + " needs at least one value");
  std::set<std::string> seen;
  for (const auto& v : values) {
    if (v.empty() || v.find_first_of("/\\") != std::string::npos || v == "." || v == "..") {
      throw ConfigError("ablation value '" + v + "' cannot name a directory");
    }
    if (!seen.insert(v).second) throw ConfigError("ablation value '" + v + "' is listed twice");
    cell_config(base, key, v);
  }
  if (axis == "sections" && base.data.source == DataSource::manifest) {
    throw ConfigError("the sections axis rebuilds samples and needs data.source=synthetic or tables");
  }
}

AblationGrid cmd_ablate(const ExperimentConfig& cfg, const AblationSpec& spec, const RunOptions& opts,
                        std::ostream& log) {
  cfg.validate();
  spec.validate(cfg);
  const auto& key = axis_key(spec.axis);
  const auto root = opts.out / "ablations" / spec.axis;

  struct ValueData {
    ExperimentConfig cfg;
    std::shared_ptr<const Dataset> ds;
    PreparedData data;
  };
  std::vector<ValueData> per_value;
  std::shared_ptr<const Dataset> shared;
  for (const auto& v : spec.values) {
    ValueData vd{cell_config(cfg, key, v), nullptr, {}};
    if (spec.axis == "sections") {
      vd.ds = std::make_shared<const Dataset>(load_dataset(vd.cfg));
    } else {
      if (!shared) shared = std::make_shared<const Dataset>(load_dataset(cfg));
      vd.ds = shared;
    }
    vd.data = prepare_data(vd.cfg, *vd.ds, model_config(vd.cfg, *vd.ds));
    per_value.push_back(std::move(vd));
  }

  AblationGrid grid;
  grid.axis = spec.axis;
  for (const auto& v : spec.values) {
    for (auto seed : cfg.seeds) grid.cells.push_back({v, seed, {}, {}, false, false, {}});
  }

  std::mutex log_mutex;
  std::vector<std::function<void()>> tasks;
  for (std::size_t vi = 0; vi < per_value.size(); ++vi) {
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
      tasks.emplace_back([&, vi, si] {
        const auto& vd = per_value[vi];
        auto& cell = grid.cells[vi * cfg.seeds.size() + si];
        cell.empty_history = vd.data.reports_kept == 0;
        const SeedArtifacts art{seed_dir(root / cell.value, cell.seed)};
        const auto eval_path = art.eval(data::Split::test);
        std::optional<metrics::MetricReport> report;
        if (!opts.force && art.trained() && fs::exists(eval_path)) {
          report = metrics::report_from_json(data::read_file(eval_path.string()));
        } else {
          try {
            const auto model = train_seed(vd.cfg, *vd.ds, vd.data, cell.seed, art);
            report = evaluate_split(model, vd.data.test, vd.ds->label_names);
            data::write_file_atomic(eval_path.string(), metrics::to_json(*report) + "\n");
          } catch (const DegenerateMaskError& e) {
            cell.note = e.what();
          } catch (const UndefinedMetricError& e) {
            cell.note = e.what();
          }
        }
        if (report) {
          cell.macro_auroc = report->macro_auroc;
          cell.macro_auprc = report->macro_auprc;
        }
        cell.degenerate = !cell.macro_auroc;
        if (cell.degenerate && cell.note.empty()) cell.note = "no label has a defined AUROC";
        std::lock_guard lock(log_mutex);
        log << spec.axis << "=" << cell.value << " seed " << cell.seed << ": macro AUROC " << num(cell.macro_auroc)
            << (cell.empty_history ? " (no history reports)" : "") << (cell.degenerate ? " [degenerate]" : "")
            << "\n";
      });
    }
  }
  run_parallel(opts.jobs, std::move(tasks));

  std::vector<double> base_auroc, base_auprc;
  for (std::size_t vi = 0; vi < spec.values.size(); ++vi) {
    AblationRow row;
    row.value = spec.values[vi];
    std::vector<double> auroc, auprc;
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
      const auto& c = grid.cells[vi * cfg.seeds.size() + si];
      if (c.macro_auroc) auroc.push_back(*c.macro_auroc);
      if (c.macro_auprc) auprc.push_back(*c.macro_auprc);
    }
    row.degenerate = auroc.empty();
    if (!auroc.empty()) row.auroc = metrics::mean_std(auroc);
    if (!auprc.empty()) row.auprc = metrics::mean_std(auprc);
    if (vi == 0) {
      base_auroc = auroc;
      base_auprc = auprc;
    } else {
      if (!auroc.empty() && !base_auroc.empty()) {
        row.delta_auroc = row.auroc.mean - grid.rows.front().auroc.mean;
        row.p_auroc = metrics::wilcoxon_one_tailed(base_auroc, auroc);
      }
      if (!auprc.empty() && !base_auprc.empty()) row.delta_auprc = row.auprc.mean - grid.rows.front().auprc.mean;
    }
    grid.rows.push_back(row);
  }

  std::string cells_tsv = "value\tseed\tmacro_auroc\tmacro_auprc\tempty_history\tdegenerate\n";
  json jcells = json::array();
  for (const auto& c : grid.cells) {
    cells_tsv += c.value + "\t" + std::to_string(c.seed) + "\t" + num(c.macro_auroc) + "\t" + num(c.macro_auprc) +
                 "\t" + (c.empty_history ? "1" : "0") + "\t" + (c.degenerate ? "1" : "0") + "\n";
    jcells.push_back({{"value", c.value},
                      {"seed", c.seed},
                      {"macro_auroc", opt_json(c.macro_auroc)},
                      {"macro_auprc", opt_json(c.macro_auprc)},
                      {"empty_history", c.empty_history},
                      {"degenerate", c.degenerate},
                      {"note", c.note}});
  }
  std::string rows_tsv =
      "value\tseeds\tauroc_mean\tauroc_std\tauprc_mean\tauprc_std\tdelta_auroc\tdelta_auprc\tp_auroc\tdegenerate\n";
  json jrows = json::array();
  for (const auto& r : grid.rows) {
    rows_tsv += r.value + "\t" + std::to_string(r.auroc.n) + "\t" + (r.degenerate ? "NA" : num(r.auroc.mean)) +
                "\t" + (r.degenerate ? "NA" : num(r.auroc.std)) + "\t" + (r.auprc.n ? num(r.auprc.mean) : "NA") +
                "\t" + (r.auprc.n ? num(r.auprc.std) : "NA") + "\t" + num(r.delta_auroc) + "\t" +
                num(r.delta_auprc) + "\t" + num(r.p_auroc) + "\t" + (r.degenerate ? "1" : "0") + "\n";
    jrows.push_back({{"value", r.value},
                     {"auroc", stat_json(r.auroc)},
                     {"auprc", stat_json(r.auprc)},
                     {"delta_auroc", opt_json(r.delta_auroc)},
                     {"delta_auprc", opt_json(r.delta_auprc)},
                     {"p_auroc", opt_json(r.p_auroc)},
                     {"degenerate", r.degenerate}});
  }
  json j;
  j["axis"] = spec.axis;
  j["values"] = spec.values;
  j["seeds"] = cfg.seeds;
  j["baseline_value"] = spec.values.front();
  j["config"] = resolved_ini(cfg);
  j["cells"] = jcells;
  j["rows"] = jrows;
  data::write_file_atomic((root / "grid.tsv").string(), cells_tsv);
  data::write_file_atomic((root / "summary.tsv").string(), rows_tsv);
  data::write_file_atomic((root / "grid.json").string(), j.dump(2) + "\n");
  for (const auto& r : grid.rows) {
    log << spec.axis << "=" << r.value << ": macro AUROC "
        << (r.degenerate ? std::string("NA") : num(r.auroc.mean) + " +- " + num(r.auroc.std));
    if (r.delta_auroc) log << ", delta " << num(*r.delta_auroc) << ", p " << num(r.p_auroc);
    log << "\n";
  }
  return grid;
}

ReportSummary cmd_report(const ReportCommand& cmd, std::ostream& log) {
  ReportSummary sum;
  const auto tag = data::to_string(cmd.split);
  const auto out = cmd.out / "report";

  std::string per_label;
  std::string subgroups = kSubgroupHeader;
  std::vector<std::pair<std::string, metrics::AggregateReport>> aggs;
  for (const auto& name : cmd.runs) {
    const auto reports = read_seed_reports(run_dir(cmd.out, name), cmd.split);
    if (reports.empty()) {
      sum.missing.push_back("runs/" + name);
      continue;
    }
    auto agg = metrics::seed_aggregate(reports);
    auto tsv = metrics::to_tsv(agg, name);
    if (!per_label.empty()) tsv = tsv.substr(tsv.find('\n') + 1);
    per_label += tsv;
    subgroups += subgroup_rows(name, reports);
    aggs.emplace_back(name, std::move(agg));
  }

  std::string comparison;
  if (!aggs.empty()) {
    const auto& ref = aggs.front().second;
    comparison = "label";
    for (const auto& [name, _] : aggs) comparison += "\t" + name + "_auroc\t" + name + "_auprc";
    for (std::size_t i = 1; i < aggs.size(); ++i) {
      comparison += "\tdelta_auroc_" + aggs[i].first + "\tdelta_auprc_" + aggs[i].first;
    }
    comparison += "\n";
    auto cell = [](const std::optional<metrics::Stat>& s) { return s ? num(s->mean) : std::string("NA"); };
    for (std::size_t l = 0; l < ref.label_names.size(); ++l) {
      comparison += ref.label_names[l];
      for (const auto& [name, a] : aggs) {
        if (a.label_names != ref.label_names) throw ContractError("runs " + name + " and " + aggs.front().first +
                                                                  " use different label sets");
        comparison += "\t" + cell(a.auroc[l]) + "\t" + cell(a.auprc[l]);
      }
      for (std::size_t i = 1; i < aggs.size(); ++i) {
        const auto& a = aggs[i].second;
        comparison += "\t" + (a.auroc[l] && ref.auroc[l] ? num(a.auroc[l]->mean - ref.auroc[l]->mean) : "NA");
        comparison += "\t" + (a.auprc[l] && ref.auprc[l] ? num(a.auprc[l]->mean - ref.auprc[l]->mean) : "NA");
      }
      comparison += "\n";
    }
    comparison += "macro";
    for (const auto& [name, a] : aggs) comparison += "\t" + num(a.macro_auroc.mean) + "\t" + num(a.macro_auprc.mean);
    for (std::size_t i = 1; i < aggs.size(); ++i) {
      comparison += "\t" + num(aggs[i].second.macro_auroc.mean - ref.macro_auroc.mean) + "\t" +
                    num(aggs[i].second.macro_auprc.mean - ref.macro_auprc.mean);
    }
    comparison += "\n";
  }

  std::vector<std::pair<std::string, std::string>> series;
  for (const auto& axis : cmd.ablations) {
    const auto path = cmd.out / "ablations" / axis / "grid.json";
    if (!fs::exists(path)) {
      sum.missing.push_back("ablations/" + axis);
      continue;
    }
    const auto grid = json::parse(data::read_file(path.string()));
    std::vector<json> points;
    for (const auto& r : grid.at("rows")) {
      json p;
      p["value"] = r.at("value");
      p["auroc_mean"] = r.at("degenerate").get<bool>() ? json(nullptr) : r.at("auroc").at("mean");
      p["auroc_std"] = r.at("degenerate").get<bool>() ? json(nullptr) : r.at("auroc").at("std");
      p["auprc_mean"] = r.at("auprc").at("n").get<std::size_t>() ? r.at("auprc").at("mean") : json(nullptr);
      p["auprc_std"] = r.at("auprc").at("n").get<std::size_t>() ? r.at("auprc").at("std") : json(nullptr);
      p["seeds"] = r.at("auroc").at("n");
      p["delta_auroc"] = r.at("delta_auroc");
      points.push_back(std::move(p));
    }
    std::stable_sort(points.begin(), points.end(), [](const json& a, const json& b) {
      const auto va = a.at("value").get<std::string>();
      const auto vb = b.at("value").get<std::string>();
      const auto na = numeric_value(va);
      const auto nb = numeric_value(vb);
      if (na && nb) return *na < *nb;
      if (na || nb) return na.has_value();
      return va < vb;
    });
    json s;
    s["axis"] = axis;
    s["baseline_value"] = grid.at("baseline_value");
    s["points"] = points;
    series.emplace_back(axis, s.dump(2) + "\n");
  }

  sum.partial = !sum.missing.empty();
  data::write_file_atomic((out / "per_label.tsv").string(), per_label);
  data::write_file_atomic((out / "comparison.tsv").string(), comparison);
  data::write_file_atomic((out / "subgroups.tsv").string(), subgroups);
  for (const auto& [axis, text] : series) data::write_file_atomic((out / ("series_" + axis + ".json")).string(), text);
  json r;
  r["split"] = tag;
  r["runs"] = cmd.runs;
  r["ablations"] = cmd.ablations;
  r["missing"] = sum.missing;
  r["partial"] = sum.partial;
  data::write_file_atomic((out / "report.json").string(), r.dump(2) + "\n");
  for (const auto& m : sum.missing) log << "missing: " << m << "\n";
  log << "report: " << aggs.size() << " runs, " << series.size() << " ablation series"
      << (sum.partial ? " (partial)" : "") << " -> " << out.string() << "\n";
  return sum;
}

}  // namespace histaid::experiment
