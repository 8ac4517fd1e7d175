#include <benchmark/benchmark.h>

#include "fedcast/fed.hpp"
#include "fedcast/rng.hpp"

using namespace fedcast;

namespace {

std::vector<fed::ClientUpdate> updates(std::size_t clients) {
  const std::size_t n = nn::ModelShape{}.parameter_count();
  Rng rng(5);
  std::vector<fed::ClientUpdate> out(clients);
  for (std::size_t c = 0; c < clients; ++c) {
    out[c].client_id = static_cast<int>(c);
    out[c].n_k = 100 + c;
    out[c].params = nn::ModelParams(n);
    for (auto &v : out[c].params.values) {
      v = rng.normal();
    }
  }
  return out;
}

void BM_Aggregate(benchmark::State &state, const char *name) {
  const auto ups = updates(static_cast<std::size_t>(state.range(0)));
  auto server = fed::ServerState::start(ups.front().params, fed::AggregationStrategy::parse(name));
  for (auto _ : state) {
    benchmark::DoNotOptimize(fed::aggregate(ups, server));
  }
}
BENCHMARK_CAPTURE(BM_Aggregate, fedavg, "fedavg")->Arg(10)->Arg(100);
BENCHMARK_CAPTURE(BM_Aggregate, fedmedian, "fedmedian")->Arg(10)->Arg(100);
BENCHMARK_CAPTURE(BM_Aggregate, fedadam, "fedadam")->Arg(10);
BENCHMARK_CAPTURE(BM_Aggregate, fedyogi, "fedyogi")->Arg(10);

} // namespace
