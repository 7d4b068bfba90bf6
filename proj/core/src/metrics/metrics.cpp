#include "histaid/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "histaid/error.hpp"

namespace histaid::metrics {

namespace {

void check_pair(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ContractError("scores and labels differ in length");
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericError("non-finite score");
  }
  for (auto l : labels) {
    if (l > 1) throw ContractError("labels must be 0 or 1");
  }
}

// Twice the midrank of each value (integers, so rank sums stay exact).
std::vector<std::int64_t> doubled_midranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<std::int64_t> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    // ranks i+1..j+1 share (i+1 + j+1)/2
    const auto twice = static_cast<std::int64_t>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = twice;
    i = j + 1;
  }
  return r;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

std::vector<double> pooled(std::span<const double> x, std::span<const double> y) {
  std::vector<double> all(x.begin(), x.end());
  all.insert(all.end(), y.begin(), y.end());
  return all;
}

void check_samples(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw ContractError("rank-sum test needs two non-empty samples");
  for (double v : x) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in rank-sum sample");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in rank-sum sample");
  }
}

bool all_identical(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_pair(scores, labels);
  const auto np = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const auto nn = labels.size() - np;
  if (np == 0 || nn == 0) throw UndefinedMetricError("AUROC needs both classes present");
  const auto r2 = doubled_midranks(scores);
  std::int64_t sum2 = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) sum2 += r2[i];
  }
  // 2U = 2R+ - n+(n+ + 1)
  const auto u2 = sum2 - static_cast<std::int64_t>(np * (np + 1));
  return static_cast<double>(u2) / 2.0 / (static_cast<double>(np) * static_cast<double>(nn));
}

double auprc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_pair(scores, labels);
  const auto np = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (np == 0) throw UndefinedMetricError("AUPRC needs at least one positive");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    std::size_t block_pos = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      block_pos += labels[idx[j]];
      ++j;
    }
    tp += block_pos;
    if (block_pos > 0) {
      ap += (static_cast<double>(block_pos) / static_cast<double>(np)) *
            (static_cast<double>(tp) / static_cast<double>(j));
    }
    i = j;
  }
  return ap;
}

double wilcoxon_exact(std::span<const double> x, std::span<const double> y) {
  check_samples(x, y);
  const auto all = pooled(x, y);
  if (all_identical(all)) return 1.0;
  const auto r2 = doubled_midranks(all);
  const std::size_t n = all.size();
  const std::size_t m = y.size();
  std::int64_t observed = 0;
  for (std::size_t i = x.size(); i < n; ++i) observed += r2[i];

  // Count m-subsets of the pooled ranks whose sum reaches the observed one.
  std::uint64_t hits = 0, total = 0;
  std::vector<std::size_t> pick(m);
  std::iota(pick.begin(), pick.end(), 0);
  while (true) {
    std::int64_t s = 0;
    for (auto p : pick) s += r2[p];
    ++total;
    if (s >= observed) ++hits;
    std::size_t k = m;
    while (k > 0 && pick[k - 1] == n - m + (k - 1)) --k;
    if (k == 0) break;
    ++pick[k - 1];
    for (std::size_t t = k; t < m; ++t) pick[t] = pick[t - 1] + 1;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

double wilcoxon_normal(std::span<const double> x, std::span<const double> y) {
  check_samples(x, y);
  const auto all = pooled(x, y);
  if (all_identical(all)) return 1.0;
  const auto r2 = doubled_midranks(all);
  const double n1 = static_cast<double>(x.size());
  const double n2 = static_cast<double>(y.size());
  const double nt = n1 + n2;
  double w = 0.0;
  for (std::size_t i = x.size(); i < all.size(); ++i) w += static_cast<double>(r2[i]) / 2.0;

  std::map<double, std::size_t> ties;
  for (double v : all) ++ties[v];
  double tie_sum = 0.0;
  for (const auto& [_, t] : ties) {
    const double td = static_cast<double>(t);
    tie_sum += td * td * td - td;
  }
  const double mean = n2 * (nt + 1.0) / 2.0;
  const double var = n1 * n2 / 12.0 * ((nt + 1.0) - tie_sum / (nt * (nt - 1.0)));
  if (var <= 0.0) return 1.0;
  return normal_sf((w - mean - 0.5) / std::sqrt(var));
}

double wilcoxon_one_tailed(std::span<const double> x, std::span<const double> y) {
  return x.size() + y.size() <= 12 ? wilcoxon_exact(x, y) : wilcoxon_normal(x, y);
}

std::vector<double> ScoreMatrix::score_column(std::size_t j) const {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = scores[i * c + j];
  return out;
}

std::vector<std::uint8_t> ScoreMatrix::label_column(std::size_t j) const {
  std::vector<std::uint8_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = labels[i * c + j];
  return out;
}

ScoreMatrix ScoreMatrix::select(std::span<const std::size_t> rows) const {
  ScoreMatrix out;
  out.n = rows.size();
  out.c = c;
  for (auto r : rows) {
    out.scores.insert(out.scores.end(), scores.begin() + static_cast<std::ptrdiff_t>(r * c),
                      scores.begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
    out.labels.insert(out.labels.end(), labels.begin() + static_cast<std::ptrdiff_t>(r * c),
                      labels.begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
  }
  return out;
}

std::string age_bin(int age) {
  if (age < 40) return "<40";
  if (age < 60) return "40-60";
  if (age < 80) return "60-80";
  return ">80";
}

std::vector<std::pair<std::string, std::vector<std::string>>> subgroup_axes() {
  return {{"sex", {"F", "M"}},
          {"age", {"<40", "40-60", "60-80", ">80"}},
          {"race", {"White", "Black", "Asian", "Other"}}};
}

MetricReport evaluate(const ScoreMatrix& m, const std::vector<std::string>& label_names) {
  if (label_names.size() != m.c) throw ContractError("label names do not match score columns");
  if (m.scores.size() != m.n * m.c || m.labels.size() != m.n * m.c) throw ShapeError("score matrix size mismatch");
  MetricReport r;
  r.n = m.n;
  double sum_roc = 0.0, sum_pr = 0.0;
  std::size_t n_roc = 0, n_pr = 0;
  for (std::size_t j = 0; j < m.c; ++j) {
    const auto s = m.score_column(j);
    const auto l = m.label_column(j);
    LabelMetric lm;
    lm.name = label_names[j];
    lm.positives = static_cast<std::size_t>(std::count(l.begin(), l.end(), 1));
    lm.negatives = l.size() - lm.positives;
    if (lm.positives > 0 && lm.negatives > 0) {
      lm.auroc = auroc(s, l);
      sum_roc += *lm.auroc;
      ++n_roc;
    } else {
      ++r.auroc_skipped;
    }
    if (lm.positives > 0) {
      lm.auprc = auprc(s, l);
      sum_pr += *lm.auprc;
      ++n_pr;
    } else {
      ++r.auprc_skipped;
    }
    r.labels.push_back(std::move(lm));
  }
  if (n_roc > 0) r.macro_auroc = sum_roc / static_cast<double>(n_roc);
  if (n_pr > 0) r.macro_auprc = sum_pr / static_cast<double>(n_pr);
  return r;
}

std::vector<SubgroupCell> subgroup_metrics(const ScoreMatrix& m, std::span<const data::Demographics> demographics) {
  if (demographics.size() != m.n) throw ContractError("one demographics entry per scored sample required");
  std::vector<std::string> names(m.c);
  std::vector<SubgroupCell> out;
  for (const auto& [axis, values] : subgroup_axes()) {
    for (const auto& value : values) {
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < m.n; ++i) {
        const auto& d = demographics[i];
        const std::string key = axis == "sex" ? d.sex : axis == "age" ? age_bin(d.age_years) : d.race;
        if (key == value) rows.push_back(i);
      }
      SubgroupCell cell;
      cell.axis = axis;
      cell.value = value;
      cell.n = rows.size();
      if (!rows.empty()) {
        const auto rep = evaluate(m.select(rows), names);
        cell.labels_defined = m.c - rep.auroc_skipped;
        cell.macro_auroc = rep.macro_auroc;
        cell.macro_auprc = rep.macro_auprc;
      }
      out.push_back(std::move(cell));
    }
  }
  return out;
}

Stat mean_std(std::span<const double> values) {
  Stat s;
  s.n = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

AggregateReport seed_aggregate(std::span<const MetricReport> reports, std::span<const MetricReport> baseline) {
  if (reports.empty()) throw ContractError("seed aggregation needs at least one report");
  AggregateReport agg;
  for (const auto& l : reports.front().labels) agg.label_names.push_back(l.name);
  auto same_labels = [&](const MetricReport& r) {
    if (r.labels.size() != agg.label_names.size()) return false;
    for (std::size_t j = 0; j < r.labels.size(); ++j) {
      if (r.labels[j].name != agg.label_names[j]) return false;
    }
    return true;
  };
  for (const auto& r : reports) {
    if (!same_labels(r)) throw ContractError("seed reports disagree on the label set");
  }
  for (const auto& r : baseline) {
    if (!same_labels(r)) throw ContractError("baseline reports use a different label set");
  }
  agg.seeds = reports.size();

  auto column = [](std::span<const MetricReport> rs, auto get) {
    std::vector<double> v;
    for (const auto& r : rs) {
      if (auto x = get(r)) v.push_back(*x);
    }
    return v;
  };
  const auto c = agg.label_names.size();
  for (std::size_t j = 0; j < c; ++j) {
    auto roc = column(reports, [j](const MetricReport& r) { return r.labels[j].auroc; });
    auto pr = column(reports, [j](const MetricReport& r) { return r.labels[j].auprc; });
    agg.auroc.push_back(roc.empty() ? std::nullopt : std::optional<Stat>(mean_std(roc)));
    agg.auprc.push_back(pr.empty() ? std::nullopt : std::optional<Stat>(mean_std(pr)));
    if (!baseline.empty()) {
      auto base = column(baseline, [j](const MetricReport& r) { return r.labels[j].auroc; });
      agg.p_auroc.push_back(roc.empty() || base.empty() ? std::nullopt
                                                         : std::optional<double>(wilcoxon_one_tailed(base, roc)));
    }
  }
  const auto roc = column(reports, [](const MetricReport& r) { return r.macro_auroc; });
  const auto pr = column(reports, [](const MetricReport& r) { return r.macro_auprc; });
  agg.macro_auroc = mean_std(roc);
  agg.macro_auprc = mean_std(pr);
  if (!baseline.empty()) {
    const auto base_roc = column(baseline, [](const MetricReport& r) { return r.macro_auroc; });
    const auto base_pr = column(baseline, [](const MetricReport& r) { return r.macro_auprc; });
    if (!roc.empty() && !base_roc.empty()) agg.p_macro_auroc = wilcoxon_one_tailed(base_roc, roc);
    if (!pr.empty() && !base_pr.empty()) agg.p_macro_auprc = wilcoxon_one_tailed(base_pr, pr);
  }
  return agg;
}

namespace {

using nlohmann::json;

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_from(const json& j) {
  return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}
json stat_json(const Stat& s) { return {{"mean", s.mean}, {"std", s.std}, {"n", s.n}}; }
json opt_stat(const std::optional<Stat>& s) { return s ? stat_json(*s) : json(nullptr); }

}  // namespace

std::string to_json(const MetricReport& r) {
  json j;
  j["n"] = r.n;
  j["macro_auroc"] = opt(r.macro_auroc);
  j["macro_auprc"] = opt(r.macro_auprc);
  j["auroc_skipped"] = r.auroc_skipped;
  j["auprc_skipped"] = r.auprc_skipped;
  j["labels"] = json::array();
  for (const auto& l : r.labels) {
    j["labels"].push_back({{"name", l.name},
                           {"positives", l.positives},
                           {"negatives", l.negatives},
                           {"auroc", opt(l.auroc)},
                           {"auprc", opt(l.auprc)}});
  }
  j["subgroups"] = json::array();
  for (const auto& s : r.subgroups) {
    j["subgroups"].push_back({{"axis", s.axis},
                              {"value", s.value},
                              {"n", s.n},
                              {"labels_defined", s.labels_defined},
                              {"macro_auroc", opt(s.macro_auroc)},
                              {"macro_auprc", opt(s.macro_auprc)}});
  }
  return j.dump(2) + "\n";
}

MetricReport report_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    MetricReport r;
    r.n = j.at("n").get<std::size_t>();
    r.macro_auroc = opt_from(j.at("macro_auroc"));
    r.macro_auprc = opt_from(j.at("macro_auprc"));
    r.auroc_skipped = j.at("auroc_skipped").get<std::size_t>();
    r.auprc_skipped = j.at("auprc_skipped").get<std::size_t>();
    for (const auto& l : j.at("labels")) {
      r.labels.push_back({l.at("name").get<std::string>(), l.at("positives").get<std::size_t>(),
                          l.at("negatives").get<std::size_t>(), opt_from(l.at("auroc")), opt_from(l.at("auprc"))});
    }
    for (const auto& s : j.at("subgroups")) {
      r.subgroups.push_back({s.at("axis").get<std::string>(), s.at("value").get<std::string>(),
                             s.at("n").get<std::size_t>(), s.at("labels_defined").get<std::size_t>(),
                             opt_from(s.at("macro_auroc")), opt_from(s.at("macro_auprc"))});
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("metric report: ") + e.what());
  }
}

std::string to_json(const AggregateReport& r) {
  json j;
  j["seeds"] = r.seeds;
  j["macro_auroc"] = stat_json(r.macro_auroc);
  j["macro_auprc"] = stat_json(r.macro_auprc);
  j["p_macro_auroc"] = opt(r.p_macro_auroc);
  j["p_macro_auprc"] = opt(r.p_macro_auprc);
  j["labels"] = json::array();
  for (std::size_t i = 0; i < r.label_names.size(); ++i) {
    json l{{"name", r.label_names[i]}, {"auroc", opt_stat(r.auroc[i])}, {"auprc", opt_stat(r.auprc[i])}};
    if (i < r.p_auroc.size()) l["p_auroc"] = opt(r.p_auroc[i]);
    j["labels"].push_back(std::move(l));
  }
  return j.dump(2) + "\n";
}

std::string to_tsv(const AggregateReport& r, const std::string& model) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "label\tmodel\tauroc\tauprc\tauroc_std\tauprc_std\n";
  auto cell = [&](const std::optional<Stat>& s, bool std_dev) {
    if (!s) return std::string("NA");
    std::ostringstream o;
    o.precision(6);
    o << std::fixed << (std_dev ? s->std : s->mean);
    return o.str();
  };
  for (std::size_t i = 0; i < r.label_names.size(); ++i) {
    out << r.label_names[i] << '\t' << model << '\t' << cell(r.auroc[i], false) << '\t' << cell(r.auprc[i], false)
        << '\t' << cell(r.auroc[i], true) << '\t' << cell(r.auprc[i], true) << '\n';
  }
  out << "macro\t" << model << '\t' << r.macro_auroc.mean << '\t' << r.macro_auprc.mean << '\t' << r.macro_auroc.std
      << '\t' << r.macro_auprc.std << '\n';
  return out.str();
}

}  // namespace histaid::metrics
