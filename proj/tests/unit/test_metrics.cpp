#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "histaid/error.hpp"
#include "histaid/metrics/metrics.hpp"
#include "oracles.hpp"

using namespace histaid;
using namespace histaid::metrics;

namespace {

// Scores drawn from a handful of levels so ties are common.
void random_instance(std::mt19937_64& rng, std::vector<double>& s, std::vector<std::uint8_t>& y) {
  std::uniform_int_distribution<std::size_t> size(2, 30);
  std::uniform_int_distribution<int> level(0, 6);
  const auto n = size(rng);
  s.assign(n, 0.0);
  y.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = 0.125 * level(rng);
    y[i] = rng() % 2;
  }
  y[0] = 1;
  y[1] = 0;
}

}  // namespace

TEST(Auroc, HandCases) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<std::uint8_t> y{0, 0, 1, 1};
  EXPECT_EQ(auroc(s, y), 0.75);
  const std::vector<double> tied{0.5, 0.5, 0.5, 0.5};
  EXPECT_EQ(auroc(tied, y), 0.5);
  const std::vector<std::uint8_t> one_class{1, 1, 1, 1};
  EXPECT_THROW(auroc(s, one_class), UndefinedMetricError);
}

TEST(Auroc, MatchesPairCountingOracle) {
  std::mt19937_64 rng(1);
  std::vector<double> s;
  std::vector<std::uint8_t> y;
  for (int t = 0; t < 200; ++t) {
    random_instance(rng, s, y);
    EXPECT_EQ(auroc(s, y), oracle::auroc_pairs(s, y));
  }
}

TEST(Auprc, HandCases) {
  // Descending: 0.9 (+), 0.8 (-), 0.7 (+): AP = 1/2 * 1 + 1/2 * 2/3
  const std::vector<double> s{0.7, 0.9, 0.8};
  const std::vector<std::uint8_t> y{1, 1, 0};
  EXPECT_DOUBLE_EQ(auprc(s, y), 0.5 + 1.0 / 3.0);
  // One tied block of four holding two positives: precision 1/2 for both.
  const std::vector<double> tied{0.3, 0.3, 0.3, 0.3};
  const std::vector<std::uint8_t> half{1, 0, 1, 0};
  EXPECT_EQ(auprc(tied, half), 0.5);
  const std::vector<std::uint8_t> none{0, 0, 0, 0};
  EXPECT_THROW(auprc(tied, none), UndefinedMetricError);
}

TEST(Auprc, MatchesExactApOracle) {
  std::mt19937_64 rng(2);
  std::vector<double> s;
  std::vector<std::uint8_t> y;
  for (int t = 0; t < 200; ++t) {
    random_instance(rng, s, y);
    EXPECT_EQ(auprc(s, y), oracle::average_precision(s, y));
  }
}

TEST(Wilcoxon, SeparatedTriplesGiveOneTwentieth) {
  const std::vector<double> x{1, 2, 3}, y{4, 5, 6};
  EXPECT_EQ(wilcoxon_one_tailed(x, y), 0.05);
  EXPECT_EQ(wilcoxon_one_tailed(y, x), 1.0);
}

TEST(Wilcoxon, ExactMatchesEnumerationOnSmallSamples) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> level(0, 5);
  for (std::size_t n = 1; n <= 6; ++n) {
    for (std::size_t m = 1; m <= 6; ++m) {
      std::vector<double> x(n), y(m);
      for (auto& v : x) v = level(rng);
      for (auto& v : y) v = level(rng) + 0.5 * (rng() % 2);
      EXPECT_EQ(wilcoxon_exact(x, y), oracle::wilcoxon_enumerate(x, y)) << n << "x" << m;
    }
  }
}

TEST(Wilcoxon, NormalApproximationTracksExact) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x(7), y(7);
    for (auto& v : x) v = g(rng);
    for (auto& v : y) v = g(rng) + 0.8;
    EXPECT_NEAR(wilcoxon_normal(x, y), wilcoxon_exact(x, y), 0.02);
  }
}

TEST(Wilcoxon, Degenerate) {
  const std::vector<double> same{0.7, 0.7, 0.7};
  EXPECT_EQ(wilcoxon_one_tailed(same, same), 1.0);
  EXPECT_THROW(wilcoxon_one_tailed(std::vector<double>{}, same), ContractError);
}

TEST(MeanStd, SampleStandardDeviation) {
  const std::vector<double> v{1, 2, 3, 4};
  auto s = mean_std(v);
  EXPECT_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(5.0 / 3.0));
  EXPECT_EQ(s.n, 4u);
  const std::vector<double> one{0.8};
  EXPECT_EQ(mean_std(one).std, 0.0);
}

TEST(Evaluate, SkipsUndefinedLabels) {
  ScoreMatrix m;
  m.n = 4;
  m.c = 3;
  m.scores = {0.9, 0.1, 0.5, 0.2, 0.2, 0.5, 0.8, 0.3, 0.5, 0.1, 0.4, 0.5};
  m.labels = {1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0};
  auto r = evaluate(m, {"A", "B", "C"});
  ASSERT_TRUE(r.labels[0].auroc.has_value());
  EXPECT_EQ(*r.labels[0].auroc, 1.0);
  EXPECT_FALSE(r.labels[1].auroc.has_value());
  EXPECT_FALSE(r.labels[2].auprc.has_value());
  EXPECT_EQ(r.auroc_skipped, 2u);
  EXPECT_EQ(r.auprc_skipped, 2u);
  EXPECT_EQ(*r.macro_auroc, 1.0);
  EXPECT_THROW(evaluate(m, {"A"}), ContractError);
}

TEST(Subgroups, EveryCellListed) {
  ScoreMatrix m;
  m.n = 4;
  m.c = 1;
  m.scores = {0.9, 0.1, 0.8, 0.3};
  m.labels = {1, 0, 1, 0};
  std::vector<data::Demographics> d{{"F", 30, "White"}, {"F", 45, "White"}, {"M", 85, "Asian"}, {"M", 85, "Asian"}};
  auto cells = subgroup_metrics(m, d);
  std::size_t expected = 0;
  for (const auto& [axis, values] : subgroup_axes()) expected += values.size();
  EXPECT_EQ(cells.size(), expected);
  for (const auto& c : cells) {
    if (c.axis == "sex" && c.value == "F") {
      EXPECT_EQ(c.n, 2u);
      EXPECT_EQ(*c.macro_auroc, 1.0);
    }
    if (c.axis == "race" && c.value == "Black") {
      EXPECT_EQ(c.n, 0u);
      EXPECT_FALSE(c.macro_auroc.has_value());
    }
  }
  EXPECT_EQ(age_bin(39), "<40");
  EXPECT_EQ(age_bin(60), "60-80");
  EXPECT_EQ(age_bin(80), ">80");
}

TEST(Aggregate, StatsAndBaselineTest) {
  auto report = [](double roc) {
    MetricReport r;
    r.labels.push_back({"A", 1, 1, roc, roc});
    r.macro_auroc = roc;
    r.macro_auprc = roc;
    return r;
  };
  std::vector<MetricReport> run{report(0.8), report(0.9), report(0.85)};
  std::vector<MetricReport> base{report(0.6), report(0.65), report(0.7)};
  auto agg = seed_aggregate(run, base);
  EXPECT_NEAR(agg.macro_auroc.mean, 0.85, 1e-15);
  EXPECT_EQ(agg.seeds, 3u);
  EXPECT_EQ(*agg.p_macro_auroc, 0.05);
  EXPECT_EQ(*agg.p_auroc[0], 0.05);

  auto other = report(0.5);
  other.labels[0].name = "B";
  std::vector<MetricReport> mixed{report(0.8), other};
  EXPECT_THROW(seed_aggregate(mixed), ContractError);
}

TEST(Reports, JsonRoundTrip) {
  ScoreMatrix m;
  m.n = 3;
  m.c = 2;
  m.scores = {0.2, 0.4, 0.7, 0.1, 0.6, 0.9};
  m.labels = {0, 0, 1, 0, 1, 1};
  auto r = evaluate(m, {"A", "B"});
  std::vector<data::Demographics> d{{"F", 30, "White"}, {"M", 50, "Black"}, {"F", 70, "Other"}};
  r.subgroups = subgroup_metrics(m, d);
  auto back = report_from_json(to_json(r));
  EXPECT_EQ(to_json(back), to_json(r));
  EXPECT_EQ(back.labels[1].auroc, r.labels[1].auroc);
}
