#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "helpers.hpp"
#include "histaid/error.hpp"
#include "histaid/temporal/positional.hpp"

using namespace histaid;
using namespace histaid::temporal;
using histaid::testing::random_tensor;

TEST(NormalizeOffsets, MinMaxExamples) {
  const std::vector<double> a{10, 20, 30};
  EXPECT_EQ(normalize_offsets(a), (std::vector<double>{0.0, 0.5, 1.0}));
  const std::vector<double> b{72, 0, 24};
  EXPECT_EQ(normalize_offsets(b), (std::vector<double>{1.0, 0.0, 24.0 / 72.0}));
}

TEST(NormalizeOffsets, DegenerateInputsMapToZero) {
  const std::vector<double> one{5.0};
  EXPECT_EQ(normalize_offsets(one), (std::vector<double>{0.0}));
  const std::vector<double> same{3.0, 3.0, 3.0};
  EXPECT_EQ(normalize_offsets(same), (std::vector<double>{0.0, 0.0, 0.0}));
  EXPECT_THROW(normalize_offsets(std::vector<double>{}), ContractError);
  const std::vector<double> bad{1.0, std::nan("")};
  EXPECT_THROW(normalize_offsets(bad), NumericError);
}

TEST(Rope, QuarterTurnOnFirstPair) {
  // theta_0 = 1, so position pi/2 rotates (1, 0) onto (0, 1).
  auto x = tensor::Tensor::from({1, 4}, {1, 0, 1, 0});
  const std::vector<double> pos{std::numbers::pi / 2};
  auto y = rope_apply(x, pos, 10000.0, 1.0).to_vector();
  EXPECT_NEAR(y[0], 0.0, 1e-15);
  EXPECT_NEAR(y[1], 1.0, 1e-15);
  // Second pair turns by theta_1 = 10000^(-1/2) = 0.01 per unit.
  EXPECT_NEAR(y[2], std::cos(0.01 * std::numbers::pi / 2), 1e-15);
  EXPECT_NEAR(y[3], std::sin(0.01 * std::numbers::pi / 2), 1e-15);
}

TEST(Rope, PositionZeroIsIdentity) {
  std::mt19937_64 rng(2);
  auto x = random_tensor({3, 6}, rng);
  const std::vector<double> pos{0, 0, 0};
  EXPECT_EQ(rope_apply(x, pos, 10000.0, 49.0).to_vector(), x.to_vector());
}

TEST(Rope, DotProductDependsOnlyOnRelativeOffset) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto q = random_tensor({1, 8}, rng);
    auto k = random_tensor({1, 8}, rng);
    const double m = u(rng), n = u(rng), shift = u(rng);
    auto dot = [&](double pm, double pn) {
      const std::vector<double> a{pm}, b{pn};
      auto rq = rope_apply(q, a, 10000.0, 49.0).to_vector();
      auto rk = rope_apply(k, b, 10000.0, 49.0).to_vector();
      double s = 0.0;
      for (std::size_t i = 0; i < rq.size(); ++i) s += rq[i] * rk[i];
      return s;
    };
    EXPECT_NEAR(dot(m, n), dot(m + shift, n + shift), 1e-9);
  }
}

TEST(Rope, PreservesPairNorms) {
  std::mt19937_64 rng(6);
  auto x = random_tensor({4, 8}, rng);
  const std::vector<double> pos{0.1, 0.4, 0.7, 1.0};
  auto y = rope_apply(x, pos, 10000.0, 49.0).to_vector();
  auto v = x.to_vector();
  for (std::size_t i = 0; i < v.size(); i += 2) {
    EXPECT_NEAR(std::hypot(y[i], y[i + 1]), std::hypot(v[i], v[i + 1]), 1e-12);
  }
}

TEST(Rope, OddWidthRejected) {
  auto x = tensor::Tensor::zeros({1, 3});
  const std::vector<double> pos{0.5};
  EXPECT_THROW(rope_apply(x, pos, 10000.0, 1.0), ConfigError);
  PositionalMode m;
  m.kind = PositionalKind::rope;
  m.dim = 5;
  EXPECT_THROW(m.validate(), ConfigError);
  m.kind = PositionalKind::sincos;
  EXPECT_THROW(m.validate(), ConfigError);
  m.kind = PositionalKind::learnable;
  EXPECT_NO_THROW(m.validate());
}

TEST(Sincos, InterleavedTable) {
  const std::vector<double> pos{0.0, 2.0};
  auto t = sincos_table(pos, 4, 100.0).to_vector();
  EXPECT_EQ((std::vector<double>{t[0], t[1], t[2], t[3]}), (std::vector<double>{0, 1, 0, 1}));
  EXPECT_NEAR(t[4], std::sin(2.0), 1e-15);
  EXPECT_NEAR(t[5], std::cos(2.0), 1e-15);
  EXPECT_NEAR(t[6], std::sin(0.2), 1e-15);  // theta_1 = 100^(-1/2)
  EXPECT_NEAR(t[7], std::cos(0.2), 1e-15);
  EXPECT_THROW(sincos_table(pos, 3, 100.0), ConfigError);
}

TEST(PositionalApply, EachMode) {
  std::mt19937_64 rng(8);
  auto seq = random_tensor({3, 4}, rng);
  const std::vector<double> pos{0.0, 0.5, 1.0};
  PositionalMode m;
  m.dim = 4;

  m.kind = PositionalKind::none;
  EXPECT_EQ(positional_apply(m, seq, pos).to_vector(), seq.to_vector());
  m.kind = PositionalKind::rope;
  EXPECT_EQ(positional_apply(m, seq, pos).to_vector(), seq.to_vector());

  m.kind = PositionalKind::sincos;
  const std::vector<double> scaled{0.0, 0.5 * m.position_scale, 1.0 * m.position_scale};
  auto table = sincos_table(scaled, 4, m.rope_base).to_vector();
  auto out = positional_apply(m, seq, pos).to_vector();
  auto sv = seq.to_vector();
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_DOUBLE_EQ(out[i], sv[i] + table[i]);

  m.kind = PositionalKind::learnable;
  EXPECT_THROW(positional_apply(m, seq, pos), ConfigError);
  auto learned = random_tensor({5, 4}, rng);
  const std::vector<std::size_t> slots{4, 0, 2};
  auto lo = positional_apply(m, seq, pos, &learned, slots).to_vector();
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(lo[r * 4 + c], sv[r * 4 + c] + learned.at(slots[r], c));
  const std::vector<std::size_t> too_far{0, 1, 5};
  EXPECT_THROW(positional_apply(m, seq, pos, &learned, too_far), ConfigError);
}

TEST(PositionalKind, NamesRoundTrip) {
  for (auto k : {PositionalKind::none, PositionalKind::sincos, PositionalKind::learnable, PositionalKind::rope}) {
    EXPECT_EQ(parse_positional(to_string(k)), k);
  }
  EXPECT_THROW(parse_positional("alibi"), ConfigError);
}
