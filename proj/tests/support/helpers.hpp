#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "histaid/tensor/tensor.hpp"

namespace histaid::testing {

inline tensor::Tensor random_tensor(tensor::Shape shape, std::mt19937_64& rng, bool requires_grad = false,
                                    double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(tensor::shape_numel(shape));
  for (auto& x : v) x = n(rng);
  return tensor::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Fresh, empty directory beneath the build tree's work root.
inline std::filesystem::path scratch_dir(const std::string& root, const std::string& name) {
  const auto dir = std::filesystem::path(root) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace histaid::testing
