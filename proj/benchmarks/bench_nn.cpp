#include <benchmark/benchmark.h>

#include "fedcast/nn.hpp"
#include "fedcast/rng.hpp"

using namespace fedcast;

namespace {

std::vector<nn::Window> windows(std::size_t n, Rng &rng) {
  std::vector<nn::Window> out(n, nn::Window(24, 8));
  for (auto &w : out) {
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w.data()[i] = rng.normal();
    }
  }
  return out;
}

void BM_ForwardBatch(benchmark::State &state) {
  const nn::ModelShape shape;
  const auto model = nn::init_model(shape, 1);
  Rng rng(2);
  const auto ws = windows(static_cast<std::size_t>(state.range(0)), rng);
  std::vector<const nn::Window *> ptrs;
  for (const auto &w : ws) {
    ptrs.push_back(&w);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(nn::lstm_forward_batch(model, ptrs));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBatch)->Arg(1)->Arg(32);

void BM_ForwardBackwardBatch(benchmark::State &state) {
  const nn::ModelShape shape;
  const auto model = nn::init_model(shape, 1);
  Rng rng(3);
  const auto ws = windows(static_cast<std::size_t>(state.range(0)), rng);
  std::vector<const nn::Window *> ptrs;
  for (const auto &w : ws) {
    ptrs.push_back(&w);
  }
  const Eigen::MatrixXd targets = Eigen::MatrixXd::Random(24, state.range(0));
  nn::ForwardCache cache;
  for (auto _ : state) {
    nn::lstm_forward_batch(model, ptrs, &cache);
    benchmark::DoNotOptimize(nn::backward_batch(model, cache, targets));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackwardBatch)->Arg(1)->Arg(32);

void BM_AdamStep(benchmark::State &state) {
  const nn::ModelShape shape;
  auto params = nn::flatten(nn::init_model(shape, 1));
  auto grad = params;
  auto adam = nn::AdamState::fresh(params.size());
  for (auto _ : state) {
    nn::adam_step(params, grad, adam);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_AdamStep);

} // namespace
