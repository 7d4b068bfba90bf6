// Acceptance runner. Each criterion prints one PASS/FAIL line with the
// measured values next to the pinned thresholds; the exit code is nonzero
// when any selected criterion fails.

#include <sys/wait.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "helpers.hpp"
#include "histaid/data/io.hpp"
#include "histaid/data/manifest.hpp"
#include "histaid/error.hpp"
#include "histaid/experiment/commands.hpp"
#include "histaid/experiment/config.hpp"
#include "histaid/fusion/fusion.hpp"
#include "histaid/metrics/metrics.hpp"
#include "histaid/temporal/positional.hpp"
#include "histaid/tensor/gradcheck.hpp"
#include "histaid/train/fit.hpp"
#include "histaid/train/model.hpp"
#include "histaid/train/optim.hpp"
#include "op_cases.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace histaid;
using histaid::testing::random_tensor;
using tensor::Tensor;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records one check; the first failing check is named in the detail.
  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "FAILED: " << what << "; ";
    pass = pass && ok;
  }
};

struct Paths {
  fs::path work = HISTAID_WORK_DIR;
  fs::path fixtures = HISTAID_FIXTURE_DIR;
  fs::path cli = HISTAID_CLI_PATH;
};

Paths g_paths;

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

std::string fixed4(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Every regular file beneath root, keyed by relative path.
std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = data::read_file(e.path().string());
  }
  return out;
}

// Names of files that differ between two snapshots, including files present in only one.
std::vector<std::string> tree_diff(const std::map<std::string, std::string>& a,
                                   const std::map<std::string, std::string>& b) {
  std::vector<std::string> diff;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end() || it->second != v) diff.push_back(k);
  }
  for (const auto& [k, v] : b) {
    if (!a.count(k)) diff.push_back(k);
  }
  return diff;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + g_paths.cli.string() + "\" " + args + " >>\"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

// ---------------------------------------------------------------- P1

train::ModelConfig tiny_model(fusion::FusionMethod method, temporal::PositionalKind kind) {
  train::ModelConfig mc;
  mc.method = method;
  mc.store_dim = 5;
  mc.n_labels = 3;
  mc.k_img = 2;
  mc.k_text = 4;
  mc.encoder.layers = 1;
  mc.encoder.heads = 2;
  mc.encoder.model_dim = 4;
  mc.encoder.ff_dim = 8;
  mc.encoder.dropout = 0.0;
  mc.encoder.positional.kind = kind;
  mc.encoder.max_positions = 64;
  mc.fusion.vilt_layers = 1;
  mc.fusion.mbt_layers = 2;
  mc.fusion.mbt_fusion_layers = 1;
  mc.fusion.bottleneck = 2;
  mc.fusion.meter_layers = 1;
  mc.fusion.block_l = 3;
  mc.fusion.block_m = 3;
  mc.fusion.block_n = 3;
  return mc;
}

train::PreparedSample random_sample(const train::ModelConfig& mc, std::size_t n_image, std::size_t n_text,
                                    std::mt19937_64& rng) {
  std::uniform_real_distribution<double> hours(1.0, 5000.0);
  train::PreparedSample s;
  s.n_image = n_image;
  s.n_text = n_text;
  s.image = histaid::testing::random_vector(n_image * mc.store_dim, rng);
  s.text = histaid::testing::random_vector(n_text * mc.store_dim, rng);
  for (std::size_t i = 0; i < n_image; ++i) s.image_offsets_hours.push_back(i + 1 == n_image ? 0.0 : hours(rng));
  for (std::size_t i = 0; i < n_text; ++i) s.text_offsets_hours.push_back(hours(rng));
  // Oldest first.
  std::sort(s.image_offsets_hours.rbegin(), s.image_offsets_hours.rend());
  std::sort(s.text_offsets_hours.rbegin(), s.text_offsets_hours.rend());
  for (std::size_t l = 0; l < mc.n_labels; ++l) s.labels.push_back(static_cast<double>(rng() % 2));
  return s;
}

const std::vector<fusion::FusionMethod> kMethods{fusion::FusionMethod::vilt,       fusion::FusionMethod::mbt,
                                                 fusion::FusionMethod::concat_mlp, fusion::FusionMethod::block,
                                                 fusion::FusionMethod::meter,      fusion::FusionMethod::ensemble};
const std::vector<temporal::PositionalKind> kKinds{temporal::PositionalKind::rope, temporal::PositionalKind::sincos,
                                                   temporal::PositionalKind::learnable,
                                                   temporal::PositionalKind::none};

Outcome p1_gradients() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  constexpr double kLimit = 1e-4;

  double worst_op = 0.0;
  std::string worst_op_name;
  std::mt19937_64 rng(1);
  const auto cases = histaid::testing::op_cases();
  for (const auto& c : cases) {
    auto x = random_tensor(c.shape, rng, true);
    const double err = tensor::gradient_check(c.f, x);
    if (!(err <= worst_op)) {
      worst_op = err;
      worst_op_name = c.name;
    }
    o.require(err < kLimit, std::string("op ") + c.name + " rel err " + sci(err));
  }

  double worst_model = 0.0;
  std::string worst_model_name;
  std::size_t coords = 0;
  for (auto method : kMethods) {
    for (auto kind : kKinds) {
      const auto mc = tiny_model(method, kind);
      std::mt19937_64 srng(100 + static_cast<int>(method) * 10 + static_cast<int>(kind));
      const auto sample = random_sample(mc, 2, 3, srng);
      train::HistAidModel model(mc, srng());
      auto params = model.params().tensors();
      const auto targets = Tensor::from({1, mc.n_labels}, sample.labels);
      encoder::Context ctx;
      const auto report = tensor::gradient_check_params(
          [&] { return train::bce_multilabel(model.forward(sample, ctx), targets); }, params);
      coords += report.coordinates;
      const std::string name = fusion::to_string(method) + "/" + temporal::to_string(kind);
      if (!(report.max_rel_error <= worst_model)) {
        worst_model = report.max_rel_error;
        worst_model_name = name;
      }
      o.require(report.max_rel_error < kLimit, "model " + name + " rel err " + sci(report.max_rel_error));
    }
  }
  const double elapsed = seconds_since(t0);
  o.require(elapsed < 120.0, "runtime " + fixed4(elapsed) + " s over 120 s");
  o.detail << cases.size() << " ops max " << sci(worst_op) << " (" << worst_op_name << "); "
           << kMethods.size() * kKinds.size() << " models, " << coords << " coords, max " << sci(worst_model) << " ("
           << worst_model_name << "); limit " << sci(kLimit) << "; " << fixed4(elapsed) << " s of 120";
  return o;
}

// ---------------------------------------------------------------- P2

Outcome p2_rope() {
  Outcome o;
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> half(1, 16);
  std::uniform_real_distribution<double> pos(0.0, 64.0), shift(-32.0, 32.0);
  double worst_shift = 0.0, worst_norm = 0.0;
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t d = 2 * half(rng);
    auto q = random_tensor({1, d}, rng), k = random_tensor({1, d}, rng);
    const double m = pos(rng), n = pos(rng), s = shift(rng);
    auto dot = [&](double pm, double pn) {
      const double a[] = {pm}, b[] = {pn};
      const auto rq = temporal::rope_apply(q, a, 10000.0, 1.0).to_vector();
      const auto rk = temporal::rope_apply(k, b, 10000.0, 1.0).to_vector();
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) acc += rq[i] * rk[i];
      return acc;
    };
    worst_shift = std::max(worst_shift, std::fabs(dot(m, n) - dot(m + s, n + s)));

    const double p[] = {m};
    const auto rot = temporal::rope_apply(q, p, 10000.0, 1.0).to_vector();
    const auto raw = q.values();
    for (std::size_t j = 0; j < d; j += 2) {
      const double before = std::hypot(raw[j], raw[j + 1]);
      const double after = std::hypot(rot[j], rot[j + 1]);
      worst_norm = std::max(worst_norm, std::fabs(after - before));
    }
  }
  o.require(worst_shift <= 1e-9, "relative shift error " + sci(worst_shift));
  o.require(worst_norm <= 1e-12, "pair norm error " + sci(worst_norm));
  o.detail << "1000 draws; max shift error " << sci(worst_shift) << " (limit 1e-09); max pair-norm error "
           << sci(worst_norm) << " (limit 1e-12)";
  return o;
}

// ---------------------------------------------------------------- P3

// Overwrites every invalid slot of `seq` (rows and offsets) with large random values.
void plant_garbage(encoder::EmbeddingSequence& seq, std::mt19937_64& rng) {
  auto values = seq.data.to_vector();
  const std::size_t d = seq.data.shape()[1];
  std::normal_distribution<double> junk(0.0, 1e3);
  std::uniform_real_distribution<double> off(0.0, 1.0);
  for (std::size_t r = 0; r < seq.length(); ++r) {
    if (seq.valid[r]) continue;
    for (std::size_t c = 0; c < d; ++c) values[r * d + c] = junk(rng);
    seq.offsets_norm[r] = off(rng);
  }
  seq.data = Tensor::from(seq.data.shape(), std::move(values));
}

bool padding_is_zero(const encoder::EmbeddingSequence& seq) {
  const auto v = seq.data.values();
  const std::size_t d = seq.data.shape()[1];
  for (std::size_t r = 0; r < seq.length(); ++r) {
    if (seq.valid[r]) continue;
    if (seq.offsets_norm[r] != 0.0) return false;
    for (std::size_t c = 0; c < d; ++c) {
      if (v[r * d + c] != 0.0) return false;
    }
  }
  return true;
}

Outcome p3_padding() {
  Outcome o;
  double worst_k = 0.0;
  std::size_t models = 0, garbage_identical = 0;
  for (auto pooling : {encoder::Pooling::tst, encoder::Pooling::mean}) {
    for (auto method : kMethods) {
      for (auto kind : kKinds) {
        auto small = tiny_model(method, kind);
        small.encoder.pooling = pooling;
        small.k_img = 3;
        small.k_text = 10;
        auto large = small;
        large.k_text = 50;
        std::mt19937_64 rng(300 + models);
        const auto sample = random_sample(small, 2, 3, rng);
        train::HistAidModel a(small, 7), b(large, 7);
        train::restore(b.params(), train::snapshot(a.params()));
        encoder::Context ctx;
        const auto la = a.forward(sample, ctx).to_vector();
        const auto lb = b.forward(sample, ctx).to_vector();
        for (std::size_t i = 0; i < la.size(); ++i) worst_k = std::max(worst_k, std::fabs(la[i] - lb[i]));

        const std::string name = encoder::to_string(pooling) + "/" + fusion::to_string(method) + "/" +
                                 temporal::to_string(kind);
        for (const auto* m : {&a, &b}) {
          auto clean = m->embed_inputs(sample);
          o.require(padding_is_zero(clean.image) && padding_is_zero(clean.text), name + " padding not zero");
          auto dirty = clean;
          plant_garbage(dirty.image, rng);
          plant_garbage(dirty.text, rng);
          const auto lc = m->forward(clean, ctx).to_vector();
          const auto ld = m->forward(dirty, ctx).to_vector();
          const bool same = lc == ld;
          garbage_identical += same;
          o.require(same, name + " logits change with garbage in invalid slots");
        }
        ++models;
      }
    }
  }
  o.require(worst_k <= 1e-6, "K=10 vs K=50 logit difference " + sci(worst_k));
  o.detail << models << " models; K=10 vs K=50 max |dlogit| " << sci(worst_k) << " (limit 1e-06); garbage bitwise "
           << garbage_identical << "/" << 2 * models;
  return o;
}

// ---------------------------------------------------------------- P4

Outcome p4_metrics() {
  Outcome o;
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> size(2, 30);
  std::uniform_int_distribution<int> level(0, 6);
  std::size_t roc_ok = 0, ap_ok = 0;
  for (int t = 0; t < 200; ++t) {
    const auto n = size(rng);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = 0.125 * level(rng);
      y[i] = rng() % 2;
    }
    y[0] = 1;
    y[1] = 0;
    roc_ok += metrics::auroc(s, y) == oracle::auroc_pairs(s, y);
    ap_ok += metrics::auprc(s, y) == oracle::average_precision(s, y);
  }
  o.require(roc_ok == 200, "auroc oracle mismatches " + std::to_string(200 - roc_ok));
  o.require(ap_ok == 200, "auprc oracle mismatches " + std::to_string(200 - ap_ok));

  std::size_t pairs = 0, exact_ok = 0;
  std::uniform_int_distribution<int> rank_level(0, 5);
  for (std::size_t n = 1; n <= 8; ++n) {
    for (std::size_t m = 1; m <= 8; ++m) {
      std::vector<double> x(n), y(m);
      for (auto& v : x) v = rank_level(rng);
      for (auto& v : y) v = rank_level(rng) + 0.5 * (rng() % 2);
      ++pairs;
      exact_ok += metrics::wilcoxon_exact(x, y) == oracle::wilcoxon_enumerate(x, y);
    }
  }
  o.require(exact_ok == pairs, "exact Wilcoxon mismatches " + std::to_string(pairs - exact_ok));

  const std::vector<double> lo{1, 2, 3}, hi{4, 5, 6};
  const double p = metrics::wilcoxon_one_tailed(lo, hi);
  o.require(p == 0.05, "p([1,2,3] < [4,5,6]) = " + std::to_string(p));
  o.detail << "auroc " << roc_ok << "/200 exact, auprc " << ap_ok << "/200 exact; exact Wilcoxon " << exact_ok << "/"
           << pairs << " (n,m <= 8); p([1,2,3] vs [4,5,6]) = " << p;
  return o;
}

// ---------------------------------------------------------------- P5

Outcome p5_pipeline() {
  Outcome o;
  const auto root = histaid::testing::scratch_dir(g_paths.work.string(), "P5");
  const auto fx = g_paths.fixtures / "pipeline";
  std::ostringstream log;
  auto build = [&](const fs::path& out, const char* reports) {
    experiment::BuildCommand cmd;
    cmd.images = fx / "images.csv";
    cmd.reports = fx / reports;
    cmd.out = out;
    return experiment::cmd_build(cmd, log);
  };
  const auto first = build(root / "a", "reports.csv");
  build(root / "b", "reports.csv");
  o.require(first.samples_before_dedup == 10, "pre-filter samples " + std::to_string(first.samples_before_dedup));

  const auto samples = data::read_samples((root / "a/samples.jsonl").string());
  std::size_t reports = 0, nonpositive = 0;
  for (const auto& s : samples) {
    for (const auto& h : s.history_reports) {
      ++reports;
      nonpositive += !(h.offset_hours > 0.0);
    }
  }
  o.require(nonpositive == 0, std::to_string(nonpositive) + " history reports at offset <= 0");

  const auto split = data::split_from_json(data::read_file((root / "a/splits.json").string()));
  std::set<std::string> seen;
  std::size_t overlap = 0;
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (const auto& s : *part) overlap += !seen.insert(s).second;
  }
  std::size_t wrong_split = 0;
  for (const auto& s : samples) wrong_split += s.split != split.of(s.subject_id);
  o.require(overlap == 0 && wrong_split == 0, "split overlap " + std::to_string(overlap) + ", mislabeled samples " +
                                                  std::to_string(wrong_split));

  const auto diff = tree_diff(snapshot_tree(root / "a"), snapshot_tree(root / "b"));
  o.require(diff.empty(), "rerun bytes differ in " + (diff.empty() ? std::string() : diff.front()));

  const auto cli_log = root / "cli.log";
  const auto img = (fx / "images.csv").string();
  const int clean = run_cli("build --images \"" + img + "\" --reports \"" + (fx / "reports.csv").string() +
                                "\" -o \"" + (root / "cli_clean").string() + "\"",
                            cli_log);
  const int leak = run_cli("build --images \"" + img + "\" --reports \"" + (fx / "reports_leak.csv").string() +
                               "\" -o \"" + (root / "cli_leak").string() + "\"",
                           cli_log);
  o.require(clean == 0, "clean CLI build exit " + std::to_string(clean));
  o.require(leak == 3, "leak CLI build exit " + std::to_string(leak));
  const bool leak_wrote = fs::exists(root / "cli_leak/samples.jsonl");
  o.require(!leak_wrote, "leak build wrote samples.jsonl");

  o.detail << "pre-filter samples " << first.samples_before_dedup << " (want 10); history reports " << reports
           << ", at offset <= 0: " << nonpositive << "; subjects train/val/test " << split.train.size() << "/"
           << split.val.size() << "/" << split.test.size() << ", overlap " << overlap << "; rerun differing files "
           << diff.size() << "; CLI exit clean " << clean << ", leak " << leak << " (want 3)";
  return o;
}

// ---------------------------------------------------------------- P6-P10

const char* kCommon = R"(
[experiment]
seeds = 0, 1, 2, 3, 4

[model]
dim = 32
heads = 2
layers = 1
ff_dim = 64
dropout = 0.1
k_text = 8

[train]
batch_size = 16
weight_decay = 0.01
)";

// `training` is {lr, epochs}, applied to both learning-rate groups.
experiment::AblationGrid ablate(const std::string& criterion, const std::string& cohort,
                                std::pair<const char*, const char*> training, const experiment::AblationSpec& spec) {
  const auto root = histaid::testing::scratch_dir(g_paths.work.string(), criterion);
  const std::vector<std::string> overrides{std::string("train.lr_encoder=") + training.first,
                                           std::string("train.lr_tst=") + training.first,
                                           std::string("train.epochs=") + training.second};
  auto cfg = experiment::parse_config(std::string(kCommon) + cohort, overrides);
  cfg.name = criterion;
  std::ofstream log(root / "progress.log");
  const std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  return experiment::cmd_ablate(cfg, spec, {root, jobs, false}, log);
}

// Seed-mean comparison of the last row against the first.
void comparison(Outcome& o, const experiment::AblationGrid& g, double min_delta, bool need_p) {
  const auto& base = g.rows.front();
  const auto& alt = g.rows.back();
  const double delta = alt.delta_auroc.value_or(-1.0);
  const double p = alt.p_auroc.value_or(1.0);
  o.require(!base.degenerate && !alt.degenerate, "degenerate ablation row");
  o.require(delta >= min_delta, g.axis + "=" + alt.value + " delta " + fixed4(delta) + " below " + fixed4(min_delta));
  if (need_p) o.require(p < 0.05, "one-tailed Wilcoxon p " + fixed4(p));
  o.detail << g.axis << " " << base.value << " " << fixed4(base.auroc.mean) << "+-" << fixed4(base.auroc.std) << " -> "
           << alt.value << " " << fixed4(alt.auroc.mean) << "+-" << fixed4(alt.auroc.std) << "; delta " << fixed4(delta)
           << " (min " << fixed4(min_delta) << "); p " << fixed4(p) << (need_p ? " (max 0.05)" : " (reported only)");
}

const char* kRecentCohort = R"(
[synth]
signal = history_text_recent
n_subjects = 300
dim = 32
min_visits = 9
max_visits = 14
text_noise = 2.0
halflife_days = 365

)";

Outcome p6_history() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto g = ablate("P6", kRecentCohort, {"1e-3", "10"}, {"num_reports", {"0", "8"}});
  comparison(o, g, 0.10, true);
  const double elapsed = seconds_since(t0);
  o.require(elapsed < 600.0, "runtime " + fixed4(elapsed) + " s over 600 s");
  o.detail << "; " << std::setprecision(4) << elapsed << " s of 600";
  return o;
}

Outcome p7_window() {
  Outcome o;
  const auto g = ablate("P7", R"(
[synth]
signal = history_text_stale

[history]
num_reports = 8
)",
                        {"1e-3", "10"}, {"time_window_days", {"inf", "30"}});
  comparison(o, g, 0.03, true);
  return o;
}

// Spearman correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i] / n;
    my += ry[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

Outcome p8_num_reports() {
  Outcome o;
  const std::vector<std::string> values{"0", "1", "2", "4", "8"};
  const auto g = ablate("P8", kRecentCohort, {"1e-3", "10"}, {"num_reports", values});
  std::vector<double> x, means;
  std::size_t drops = 0;
  for (std::size_t i = 0; i < g.rows.size(); ++i) {
    x.push_back(std::stod(g.rows[i].value));
    means.push_back(g.rows[i].auroc.mean);
    if (i > 0 && means[i] < means[i - 1]) ++drops;
  }
  const double rho = spearman(x, means);
  o.require(g.rows.size() == values.size(), "missing ablation rows");
  o.require(rho >= 0.8, "Spearman " + fixed4(rho) + " below 0.8");
  o.detail << "num_reports ";
  for (std::size_t i = 0; i < means.size(); ++i) o.detail << g.rows[i].value << ":" << fixed4(means[i]) << " ";
  o.detail << "; Spearman " << fixed4(rho) << " (min 0.8); decreasing steps " << drops;
  return o;
}

Outcome p9_fusion() {
  Outcome o;
  const auto g = ablate("P9", R"(
[synth]
signal = cross_modal_xor
n_labels = 2
min_visits = 4
max_visits = 10
image_signal = 2
)",
                        {"3e-3", "15"}, {"fusion", {"ensemble", "vilt"}});
  comparison(o, g, 0.05, true);
  return o;
}

Outcome p10_pooling() {
  Outcome o;
  const auto g = ablate("P10", R"(
[synth]
signal = history_trend
min_visits = 3
max_visits = 6
image_signal = 1
)",
                        {"1e-3", "10"}, {"pooling", {"mean", "tst"}});
  comparison(o, g, 0.03, false);
  return o;
}

// ---------------------------------------------------------------- P11

const char* kDeterminismConfig = R"([experiment]
name = det
seeds = 0, 1

[data]
source = manifest
samples = built/samples.jsonl
store = cohort/store.embs

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

// synth -> build -> train -> eval -> ablate -> report, all through the CLI.
std::vector<std::string> run_chain(const fs::path& root, const fs::path& log) {
  const auto r = root.string();
  std::ofstream(root / "exp.ini") << kDeterminismConfig;
  const std::vector<std::string> steps{
      "synth -o \"" + r + "/cohort\" --seed 3 --set synth.n_subjects=40 --set synth.dim=8 --set synth.n_labels=3",
      "build --images \"" + r + "/cohort/images.csv\" --reports \"" + r + "/cohort/reports.csv\" --store \"" + r +
          "/cohort/store.embs\" -o \"" + r + "/built\" --labels " + data::default_label_names()[0] + "," +
          data::default_label_names()[1] + "," + data::default_label_names()[2],
      "train -c \"" + r + "/exp.ini\" -o \"" + r + "/out\"",
      "eval -c \"" + r + "/exp.ini\" -o \"" + r + "/out\"",
      "ablate -c \"" + r + "/exp.ini\" -o \"" + r + "/out\" --axis fusion --values vilt,concat_mlp",
      "report -o \"" + r + "/out\" --runs det --ablations fusion",
  };
  std::vector<std::string> failed;
  for (const auto& s : steps) {
    if (run_cli(s, log) != 0) failed.push_back(s.substr(0, s.find(' ')));
  }
  return failed;
}

Outcome p11_determinism() {
  Outcome o;
  const auto base = histaid::testing::scratch_dir(g_paths.work.string(), "P11");
  const auto root = base / "run";
  const auto log = base / "cli.log";
  fs::create_directories(root);
  const auto failed_first = run_chain(root, log);
  const auto first = snapshot_tree(root);
  fs::remove_all(root);
  fs::create_directories(root);
  const auto failed_second = run_chain(root, log);
  const auto second = snapshot_tree(root);
  o.require(failed_first.empty() && failed_second.empty(),
            "command failed: " + (failed_first.empty() ? (failed_second.empty() ? "" : failed_second.front())
                                                       : failed_first.front()));

  std::size_t logs = 0, checkpoints = 0, reports = 0;
  for (const auto& [k, v] : first) {
    logs += k.ends_with("log.jsonl");
    checkpoints += k.ends_with(".tmck");
    reports += k.rfind("out/report/", 0) == 0;
  }
  o.require(logs > 0 && checkpoints > 0 && reports > 0, "chain produced no logs, checkpoints or reports");
  const auto diff = tree_diff(first, second);
  o.require(diff.empty(), "bytes differ in " + (diff.empty() ? std::string() : diff.front()));
  o.detail << first.size() << " files (" << logs << " logs, " << checkpoints << " checkpoints, " << reports
           << " report files); differing on rerun " << diff.size();
  return o;
}

// ---------------------------------------------------------------- P12

Outcome p12_fusion_primitives() {
  Outcome o;
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> dim(1, 4);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t I = dim(rng), J = dim(rng), L = dim(rng), M = dim(rng), N = dim(rng), K = dim(rng);
    auto x1 = random_tensor({1, I}, rng), x2 = random_tensor({1, J}, rng);
    auto a = random_tensor({I, L}, rng), b = random_tensor({J, M}, rng);
    auto d = random_tensor({L, M, N}, rng), c = random_tensor({K, N}, rng);
    const auto got = fusion::fuse_block(x1, x2, a, b, d, c).to_vector();
    const auto want = oracle::block_bilinear(x1.values(), x2.values(), a.values(), b.values(), d.values(),
                                             c.values(), L, M, N, K);
    o.require(got.size() == K, "block output width");
    for (std::size_t k = 0; k < std::min(K, got.size()); ++k) worst = std::max(worst, std::fabs(got[k] - want[k]));
  }
  o.require(worst <= 1e-10, "block max error " + sci(worst));

  // sigmoid(0) = 1/2 exactly, so every expected value is exact in binary.
  struct Hand {
    Tensor x1, x2, w1, w2;
    std::vector<double> want;
  };
  const std::vector<Hand> hands{
      {Tensor::row({1}), Tensor::row({-1}), Tensor::from({2, 1}, {1, 1}), Tensor::from({1, 1}, {2}), {1.0}},
      {Tensor::row({0, 0}), Tensor::row({0}), Tensor::from({3, 2}, {7, -2, 3, 9, 1, 1}),
       Tensor::from({2, 3}, {1, -1, 4, 3, 5, 0.5}), {2.0, 2.0, 2.25}},
      {Tensor::row({3, -8}), Tensor::row({0.25}), Tensor::zeros({3, 1}), Tensor::from({1, 2}, {-6, 10}), {-3.0, 5.0}},
  };
  std::size_t exact = 0;
  for (const auto& h : hands) exact += fusion::fuse_concat_mlp(h.x1, h.x2, h.w1, h.w2).to_vector() == h.want;
  o.require(exact == hands.size(), "concat_mlp hand cases exact " + std::to_string(exact));
  o.detail << "block 20 instances max |err| " << sci(worst) << " (limit 1e-10); concat_mlp hand cases exact "
           << exact << "/" << hands.size();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"P1", p1_gradients},       {"P2", p2_rope},     {"P3", p3_padding},     {"P4", p4_metrics},
      {"P5", p5_pipeline},        {"P6", p6_history},  {"P7", p7_window},      {"P8", p8_num_reports},
      {"P9", p9_fusion},          {"P10", p10_pooling}, {"P11", p11_determinism}, {"P12", p12_fusion_primitives},
  };

  CLI::App app{"acceptance criteria P1-P12"};
  std::vector<std::string> selected;
  std::string work = g_paths.work.string(), cli = g_paths.cli.string();
  app.add_option("--criterion", selected, "criteria to run (default: all)");
  app.add_option("--work", work, "scratch directory");
  app.add_option("--cli", cli, "histaid executable");
  CLI11_PARSE(app, argc, argv);
  g_paths.work = work;
  g_paths.cli = cli;
  fs::create_directories(g_paths.work);

  for (const auto& s : selected) {
    if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == s; })) {
      std::cerr << "unknown criterion " << s << "\n";
      return 2;
    }
  }

  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), name) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << "  " << o.detail.str() << "  [" << std::fixed
              << std::setprecision(1) << seconds_since(t0) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
