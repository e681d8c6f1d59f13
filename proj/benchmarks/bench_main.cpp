#include <random>

#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "hns/data_pipeline.hpp"
#include "hns/losses.hpp"
#include "hns/metrics.hpp"
#include "hns/model.hpp"

namespace {

hns::Mask road_like(int64_t size, uint64_t seed) {
  hns::SynthOptions opts;
  opts.size = static_cast<int>(size);
  opts.seed = seed;
  return hns::synth_tiles(1, opts).front().mask;
}

void BM_ExtractBorder(benchmark::State& state) {
  auto mask = road_like(state.range(0), 1);
  for (auto _ : state) benchmark::DoNotOptimize(hns::extract_border(mask));
  state.SetItemsProcessed(state.iterations() * mask.size());
}
BENCHMARK(BM_ExtractBorder)->Arg(256)->Arg(1024);

void BM_BoundaryF(benchmark::State& state) {
  auto pred = road_like(state.range(0), 1), gt = road_like(state.range(0), 2);
  for (auto _ : state) benchmark::DoNotOptimize(hns::boundary_f_profile(pred, gt));
  state.SetItemsProcessed(state.iterations() * pred.size());
}
BENCHMARK(BM_BoundaryF)->Arg(256)->Arg(1024);

void BM_Consistency(benchmark::State& state) {
  torch::manual_seed(0);
  auto y = torch::rand({8, 1, 256, 256});
  auto b = torch::rand({8, 1, 32, 32});
  for (auto _ : state) {
    auto edges = hns::road_edges_at_stride(y, 8);
    benchmark::DoNotOptimize(hns::consistency_from_magnitude(edges, b).item<double>());
  }
}
BENCHMARK(BM_Consistency);

void BM_Forward(benchmark::State& state) {
  torch::set_num_threads(1);
  auto config = hns::ModelConfig::preset(static_cast<hns::Variant>(state.range(1)));
  config.width_divisor = 4;
  auto model = hns::build_model(config, 0);
  model->eval();
  torch::NoGradGuard ng;
  auto image = torch::rand({1, 3, state.range(0), state.range(0)});
  for (auto _ : state) benchmark::DoNotOptimize(model->forward(image).road_prob);
  state.SetLabel(std::string(hns::to_string(config.variant)));
}
BENCHMARK(BM_Forward)
    ->Args({128, static_cast<int64_t>(hns::Variant::BU)})
    ->Args({128, static_cast<int64_t>(hns::Variant::Full)})
    ->Args({256, static_cast<int64_t>(hns::Variant::Full)})
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
