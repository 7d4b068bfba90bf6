#pragma once

// Brute-force reference implementations used only by tests. They share no code
// with the library and favour the defining formula over speed.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

namespace histaid::oracle {

// Probability that a random positive outscores a random negative, ties
// counted as one half, by enumerating every (positive, negative) pair.
inline double auroc_pairs(std::span<const double> s, std::span<const std::uint8_t> y) {
  std::int64_t twice_wins = 0;
  std::int64_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i]) ++pos;
    else ++neg;
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      if (s[i] > s[j]) twice_wins += 2;
      else if (s[i] == s[j]) twice_wins += 1;
    }
  }
  return static_cast<double>(twice_wins) / static_cast<double>(2 * pos * neg);
}

// Average precision with tied scores treated as one threshold: for each
// distinct score t, from highest to lowest,
//   (positives scoring exactly t / all positives) * precision(score >= t).
inline double average_precision(std::span<const double> s, std::span<const std::uint8_t> y) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  std::size_t n_pos = 0;
  for (auto v : y) n_pos += v;
  double ap = 0.0;
  for (double t : thresholds) {
    std::size_t at = 0, tp = 0, count = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) {
        ++count;
        tp += y[i];
      }
      if (s[i] == t) at += y[i];
    }
    if (at > 0) ap += (static_cast<double>(at) / static_cast<double>(n_pos)) *
                      (static_cast<double>(tp) / static_cast<double>(count));
  }
  return ap;
}

// One-tailed rank-sum p-value P(W_y >= observed) under H0, by enumerating
// every assignment of the pooled sample to the y group (bit masks). Ranks are
// midranks; comparisons use doubled ranks so ties stay exact.
inline double wilcoxon_enumerate(std::span<const double> x, std::span<const double> y) {
  std::vector<double> pooled(x.begin(), x.end());
  pooled.insert(pooled.end(), y.begin(), y.end());
  const std::size_t n = pooled.size();
  std::vector<std::int64_t> rank2(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::int64_t less = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (pooled[j] < pooled[i]) ++less;
      else if (pooled[j] == pooled[i]) ++equal;
    }
    // midrank = less + (equal + 1) / 2, doubled
    rank2[i] = 2 * less + equal + 1;
  }
  std::int64_t observed = 0;
  for (std::size_t i = x.size(); i < n; ++i) observed += rank2[i];
  std::uint64_t hits = 0, total = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != y.size()) continue;
    std::int64_t w = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) w += rank2[i];
    }
    ++total;
    if (w >= observed) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

// Block-term bilinear map written out as the full third-order tensor
//   T[i][j][k] = sum_{l,m,n} A[i][l] B[j][m] D[l][m][n] C[k][n]
// then y_k = sum_{i,j} x1_i x2_j T[i][j][k].
// A is I x L, B is J x M, D is L x M x N (row-major), C is K x N.
inline std::vector<double> block_bilinear(std::span<const double> x1, std::span<const double> x2,
                                          std::span<const double> a, std::span<const double> b,
                                          std::span<const double> d, std::span<const double> c, std::size_t L,
                                          std::size_t M, std::size_t N, std::size_t K) {
  const std::size_t I = x1.size(), J = x2.size();
  std::vector<double> t(I * J * K, 0.0);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t k = 0; k < K; ++k) {
        double acc = 0.0;
        for (std::size_t l = 0; l < L; ++l)
          for (std::size_t m = 0; m < M; ++m)
            for (std::size_t q = 0; q < N; ++q) acc += a[i * L + l] * b[j * M + m] * d[(l * M + m) * N + q] * c[k * N + q];
        t[(i * J + j) * K + k] = acc;
      }
  std::vector<double> y(K, 0.0);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t k = 0; k < K; ++k) y[k] += x1[i] * x2[j] * t[(i * J + j) * K + k];
  return y;
}

}  // namespace histaid::oracle
