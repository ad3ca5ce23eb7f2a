#include "siriib/attacks.hpp"
#include "siriib/losses.hpp"
#include "siriib/siriib_module.hpp"
#include "siriib/spectral.hpp"

#include <benchmark/benchmark.h>

namespace {

void BM_Decompose(benchmark::State& state) {
  torch::manual_seed(0);
  auto image = torch::rand({3, state.range(0), state.range(0)});
  for (auto _ : state) benchmark::DoNotOptimize(siriib::spectral::decompose(image));
}
BENCHMARK(BM_Decompose)->Arg(8)->Arg(16)->Arg(32);

void BM_SwapBatch(benchmark::State& state) {
  auto a = torch::rand({state.range(0), 3, 32, 32});
  auto b = torch::rand({state.range(0), 3, 32, 32});
  for (auto _ : state) benchmark::DoNotOptimize(siriib::spectral::swap_singular_values(a, b));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SwapBatch)->Arg(32)->Arg(128);

void BM_SrBlockForward(benchmark::State& state) {
  torch::NoGradGuard no_grad;
  siriib::SRBlock block(siriib::SRBlockOptions{3, 12, 32});
  block->eval();
  auto x = torch::rand({state.range(0), 3, 32, 32});
  for (auto _ : state) benchmark::DoNotOptimize(block->forward(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SrBlockForward)->Arg(1)->Arg(128);

void BM_MultiScaleForward(benchmark::State& state) {
  torch::NoGradGuard no_grad;
  siriib::MultiScaleSr sr(siriib::MultiScaleConfig{});
  sr->eval();
  auto x = torch::rand({state.range(0), 3, 32, 32});
  for (auto _ : state) benchmark::DoNotOptimize(sr->forward(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MultiScaleForward)->Arg(128);

void BM_LossSvd(benchmark::State& state) {
  auto a = torch::rand({state.range(0), 3, 32, 32}).requires_grad_(true);
  auto b = torch::rand({state.range(0), 3, 32, 32});
  for (auto _ : state) {
    auto l = siriib::loss_svd(a, b);
    l.backward();
    benchmark::DoNotOptimize(a.grad());
  }
}
BENCHMARK(BM_LossSvd)->Arg(32);

void BM_PgdStep(benchmark::State& state) {
  siriib::ArchitectureDescriptor d;
  d.base_width = state.range(0);
  d.siriib = state.range(1) != 0;
  siriib::Classifier model(d);
  model->eval();
  auto x = torch::rand({32, 3, 32, 32});
  auto y = torch::randint(0, 10, {32});
  auto cfg = siriib::AttackConfig::pgd(1);
  cfg.random_start = false;
  for (auto _ : state) benchmark::DoNotOptimize(siriib::pgd_attack(model, x, y, cfg));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_PgdStep)->Args({16, 0})->Args({16, 1})->Args({64, 0})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
