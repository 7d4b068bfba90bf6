#include "histaid/experiment/run.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <nlohmann/json.hpp>
#include <thread>

#include "histaid/data/io.hpp"
#include "histaid/data/manifest.hpp"
#include "histaid/data/synth.hpp"
#include "histaid/error.hpp"

namespace histaid::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string resolve(const ExperimentConfig& cfg, const std::string& path) {
  const fs::path p(path);
  return (p.is_absolute() || cfg.base_dir.empty() ? p : cfg.base_dir / p).string();
}

std::vector<std::string> labels_or_default(const std::vector<std::string>& configured) {
  return configured.empty() ? data::default_label_names() : configured;
}

std::vector<data::TemporalSample> build_split(const ExperimentConfig& cfg, const std::vector<data::StudyRecord>& records) {
  data::BuildOptions opts;
  opts.mode = cfg.data.sections;
  opts.min_history = cfg.data.min_history;
  auto samples = data::dedup_filter(data::build_samples(records, opts));
  const auto split = data::split_patients(data::unique_subjects(samples), cfg.data.split, cfg.data.split_seed);
  data::assign_splits(samples, split);
  return samples;
}

}  // namespace

Dataset load_dataset(const ExperimentConfig& cfg) {
  Dataset ds;
  switch (cfg.data.source) {
    case DataSource::synthetic: {
      auto cohort = data::synth_cohort(cfg.data.synth, cfg.data.synth_seed);
      ds.label_names = cfg.data.labels.empty() ? cohort.label_names : cfg.data.labels;
      if (ds.label_names.size() != cohort.label_names.size()) {
        throw ConfigError("data.labels lists " + std::to_string(ds.label_names.size()) +
                          " names but the synthetic cohort has " + std::to_string(cohort.label_names.size()));
      }
      const auto records = data::merge_records(cohort.images, cohort.reports, cohort.label_names);
      ds.samples = build_split(cfg, records);
      ds.store = std::move(cohort.store);
      break;
    }
    case DataSource::tables: {
      ds.label_names = labels_or_default(cfg.data.labels);
      const auto images = data::read_table(resolve(cfg, cfg.data.images));
      const auto reports = data::read_table(resolve(cfg, cfg.data.reports));
      ds.samples = build_split(cfg, data::merge_records(images, reports, ds.label_names));
      ds.store = data::embstore_read(resolve(cfg, cfg.data.store));
      break;
    }
    case DataSource::manifest: {
      const fs::path samples_path = resolve(cfg, cfg.data.samples);
      ds.label_names = cfg.data.labels;
      if (ds.label_names.empty()) {
        const auto info = samples_path.parent_path() / "build_info.json";
        if (fs::exists(info)) {
          ds.label_names = json::parse(data::read_file(info.string())).at("labels").get<std::vector<std::string>>();
        } else {
          ds.label_names = data::default_label_names();
        }
      }
      ds.samples = data::read_samples(samples_path.string());
      ds.store = data::embstore_read(resolve(cfg, cfg.data.store));
      for (const auto& s : ds.samples) {
        if (s.split == data::Split::none) {
          throw ContractError("sample " + s.subject_id + "/" + s.anchor_study_id + " has no split assigned");
        }
      }
      break;
    }
  }
  for (const auto& s : ds.samples) {
    if (s.labels.size() != ds.label_names.size()) {
      throw ContractError("label-set mismatch: sample " + s.subject_id + "/" + s.anchor_study_id + " carries " +
                          std::to_string(s.labels.size()) + " labels, the label list has " +
                          std::to_string(ds.label_names.size()));
    }
  }
  data::check_leakage(ds.samples);
  return ds;
}

train::ModelConfig model_config(const ExperimentConfig& cfg, const Dataset& ds) {
  auto m = cfg.model;
  m.store_dim = ds.store.dim();
  m.n_labels = ds.label_names.size();
  m.validate();
  return m;
}

const SplitData& PreparedData::of(data::Split s) const {
  switch (s) {
    case data::Split::train: return train;
    case data::Split::val: return val;
    case data::Split::test: return test;
    case data::Split::none: break;
  }
  throw ContractError("no prepared data for split 'none'");
}

PreparedData prepare_data(const ExperimentConfig& cfg, const Dataset& ds, const train::ModelConfig& model) {
  PreparedData out;
  for (auto s : ds.samples) {
    if (cfg.history.num_reports) data::keep_recent_reports(s, *cfg.history.num_reports);
    if (cfg.history.time_window_days) data::keep_reports_within(s, *cfg.history.time_window_days * 24.0);
    auto p = train::prepare_sample(s, ds.store, model);
    switch (cfg.history.modality) {
      case ModalityCombo::image_text: break;
      case ModalityCombo::image:
        p.text.clear();
        p.text_offsets_hours.clear();
        p.n_text = 0;
        break;
      case ModalityCombo::text:
        p.image.clear();
        p.image_offsets_hours.clear();
        p.n_image = 0;
        break;
    }
    out.reports_kept += p.n_text;
    SplitData* dst = nullptr;
    switch (s.split) {
      case data::Split::train: dst = &out.train; break;
      case data::Split::val: dst = &out.val; break;
      case data::Split::test: dst = &out.test; break;
      case data::Split::none: continue;
    }
    dst->samples.push_back(std::move(p));
    dst->demographics.push_back(s.demographics);
  }
  return out;
}

metrics::MetricReport evaluate_split(const train::HistAidModel& model, const SplitData& split,
                                     const std::vector<std::string>& label_names) {
  const auto scores = train::predict(model, split.samples);
  auto report = metrics::evaluate(scores, label_names);
  report.subgroups = metrics::subgroup_metrics(scores, split.demographics);
  return report;
}

bool SeedArtifacts::trained() const { return fs::exists(log()) && fs::exists(checkpoint()); }

std::string log_header_json(const ExperimentConfig& cfg, std::uint64_t seed) {
  json h;
  h["type"] = "header";
  h["experiment"] = cfg.name;
  h["seed"] = seed;
  h["config_text"] = cfg.text;
  h["overrides"] = cfg.overrides;
  h["resolved_config"] = resolved_ini(cfg);
  return h.dump();
}

train::HistAidModel train_seed(const ExperimentConfig& cfg, const Dataset& ds, const PreparedData& data,
                               std::uint64_t seed, const SeedArtifacts& out) {
  const auto mc = model_config(cfg, ds);
  auto tc = cfg.train;
  tc.seed = seed;
  train::HistAidModel model(mc, seed);
  std::string log = log_header_json(cfg, seed) + "\n";
  const auto result = train::fit(model, data.train.samples, data.val.samples, tc, [&](const train::EpochLog& e) {
    json line;
    line["type"] = "epoch";
    line["epoch"] = e.epoch;
    line["train_loss"] = e.train_loss;
    line["val_macro_auroc"] = e.val_macro_auroc ? json(*e.val_macro_auroc) : json(nullptr);
    log += line.dump() + "\n";
  });
  train::restore(model.params(), result.best);

  json extra;
  extra["labels"] = ds.label_names;
  extra["seed"] = seed;
  extra["experiment"] = cfg.name;
  extra["config"] = resolved_ini(cfg);
  train::write_checkpoint(out.checkpoint().string(), result.best, extra.dump());
  data::write_file_atomic(out.log().string(), log);
  return model;
}

train::HistAidModel load_model(const fs::path& checkpoint, const train::ModelConfig& model,
                               const std::vector<std::string>& label_names) {
  std::string extra;
  const auto ckpt = train::read_checkpoint(checkpoint.string(), &extra);
  const auto meta = json::parse(extra.empty() ? "{}" : extra);
  if (!meta.contains("labels") || meta["labels"].get<std::vector<std::string>>() != label_names) {
    throw ContractError("label-set mismatch between checkpoint " + checkpoint.string() + " and the evaluation data");
  }
  train::HistAidModel m(model, meta.value("seed", std::uint64_t{0}));
  train::restore(m.params(), ckpt);
  return m;
}

void run_parallel(std::size_t jobs, std::vector<std::function<void()>> tasks) {
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(jobs, tasks.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

bool directory_has_content(const fs::path& dir) {
  return fs::exists(dir) && fs::is_directory(dir) && !fs::is_empty(dir);
}

}  // namespace histaid::experiment
