#include <benchmark/benchmark.h>

#include <map>
#include <random>

#include "offgrid/kernel.hpp"
#include "offgrid/kernels.hpp"

using namespace offgrid;

namespace {

struct Fixture {
  DictionaryPtr dict;
  std::shared_ptr<KernelModel> model;
  std::vector<double> grid;
  Mat table, data;
  DiscreteMeasure nu{Vec::Ones(8)};

  explicit Fixture(Index T) {
    dict = make_gaussian_location(0.02, uniform_samples(0, 1, T), DomainInterval(0.1, 0.9));
    model = std::make_shared<KernelModel>(dict);
    grid = model->metric_grid(0.02);
    table = kernels::tabulate_serial(*dict, grid, 0);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal;
    data = Mat(8, T);
    for (Index i = 0; i < data.size(); ++i) data.data()[i] = normal(rng);
  }
};

Fixture& fixture(Index T) {
  static std::map<Index, Fixture> cache;
  auto it = cache.find(T);
  if (it == cache.end()) it = cache.emplace(T, Fixture(T)).first;
  return it->second;
}

void BM_TabulateSerial(benchmark::State& st) {
  auto& f = fixture(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(kernels::tabulate_serial(*f.dict, f.grid, 1));
}

void BM_TabulateParallel(benchmark::State& st) {
  auto& f = fixture(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(kernels::tabulate(*f.dict, f.grid, 1));
}

void BM_CorrelationSerial(benchmark::State& st) {
  auto& f = fixture(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(kernels::correlation_norms_serial(f.data, f.table, f.nu, 2.0));
}

void BM_CorrelationParallel(benchmark::State& st) {
  auto& f = fixture(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(kernels::correlation_norms(f.data, f.table, f.nu, 2.0));
}

}  // namespace

BENCHMARK(BM_TabulateSerial)->Arg(256)->Arg(1024);
BENCHMARK(BM_TabulateParallel)->Arg(256)->Arg(1024);
BENCHMARK(BM_CorrelationSerial)->Arg(256)->Arg(1024);
BENCHMARK(BM_CorrelationParallel)->Arg(256)->Arg(1024);

BENCHMARK_MAIN();
