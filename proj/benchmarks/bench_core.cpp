#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "histaid/fusion/fusion.hpp"
#include "histaid/metrics/metrics.hpp"
#include "histaid/tensor/ops.hpp"
#include "histaid/train/model.hpp"
#include "histaid/train/optim.hpp"

using namespace histaid;
using tensor::Tensor;

namespace {

Tensor randn(tensor::Shape shape, std::mt19937_64& rng, bool grad = false) {
  std::normal_distribution<double> n;
  std::vector<double> v(tensor::shape_numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(0);
  auto a = randn({n, n}, rng), b = randn({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(tensor::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(32)->Arg(64);

void BM_SoftmaxMasked(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  auto x = randn({k, k}, rng);
  tensor::Mask mask(k, 1);
  for (std::size_t i = k / 2; i < k; ++i) mask[i] = 0;
  for (auto _ : state) benchmark::DoNotOptimize(tensor::softmax_last(x, mask));
}
BENCHMARK(BM_SoftmaxMasked)->Arg(10)->Arg(50);

void BM_FuseBlock(benchmark::State& state) {
  std::mt19937_64 rng(2);
  auto x1 = randn({1, 32}, rng), x2 = randn({1, 32}, rng);
  auto a = randn({32, 8}, rng), b = randn({32, 8}, rng), core = randn({8, 8, 8}, rng), c = randn({32, 8}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(fusion::fuse_block(x1, x2, a, b, core, c));
}
BENCHMARK(BM_FuseBlock);

// One training step's forward and backward on a desk-scale model.
void BM_ModelStep(benchmark::State& state) {
  train::ModelConfig mc;
  mc.method = static_cast<fusion::FusionMethod>(state.range(0));
  mc.store_dim = 32;
  mc.n_labels = 13;
  mc.k_text = static_cast<std::size_t>(state.range(1));
  mc.encoder.layers = 1;
  mc.encoder.heads = 2;
  mc.encoder.model_dim = 32;
  mc.encoder.ff_dim = 64;
  mc.encoder.dropout = 0.0;
  mc.fusion.mbt_layers = 2;
  mc.fusion.mbt_fusion_layers = 1;
  mc.fusion.meter_layers = 1;
  train::HistAidModel model(mc, 0);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  train::PreparedSample s;
  s.n_image = 1;
  s.n_text = mc.k_text;
  s.image.resize(mc.store_dim);
  s.text.resize(mc.k_text * mc.store_dim);
  for (auto& v : s.image) v = n(rng);
  for (auto& v : s.text) v = n(rng);
  s.image_offsets_hours = {0.0};
  for (std::size_t i = 0; i < mc.k_text; ++i) s.text_offsets_hours.push_back(24.0 * static_cast<double>(mc.k_text - i));
  s.labels.assign(mc.n_labels, 0.0);
  const auto targets = Tensor::from({1, mc.n_labels}, s.labels);
  encoder::Context ctx;
  for (auto _ : state) {
    model.params().zero_grad();
    auto loss = train::bce_multilabel(model.forward(s, ctx), targets);
    tensor::backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
  state.SetLabel(fusion::to_string(mc.method));
}
BENCHMARK(BM_ModelStep)
    ->ArgsProduct({{static_cast<int>(fusion::FusionMethod::vilt), static_cast<int>(fusion::FusionMethod::mbt),
                    static_cast<int>(fusion::FusionMethod::meter), static_cast<int>(fusion::FusionMethod::ensemble)},
                   {8, 50}});

void BM_Auroc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u;
  std::vector<double> s(n);
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = u(rng);
    y[i] = i % 3 == 0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::auroc(s, y));
}
BENCHMARK(BM_Auroc)->Arg(1000)->Arg(100000);

void BM_WilcoxonExact(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = 0.1 * static_cast<double>(i);
    y[i] = 0.1 * static_cast<double>(i) + 0.05;
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::wilcoxon_exact(x, y));
}
BENCHMARK(BM_WilcoxonExact)->Arg(5)->Arg(8);

}  // namespace

BENCHMARK_MAIN();
