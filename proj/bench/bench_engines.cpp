// Likelihood and gradient wall time per backend, plus the serial likelihood
// with the truncation term switched off.
//
//   bench_engines --benchmark_filter='likelihood/serial'

#include <random>
#include <string>

#include <benchmark/benchmark.h>
#include <omp.h>

#include "mds/engine.hpp"

using namespace mds;

namespace {

struct Problem {
  DissimilarityData data;
  LatentConfiguration x;
};

Problem make_problem(std::size_t n, std::size_t d) {
  std::mt19937_64 rng(n * 31 + d);
  std::normal_distribution<double> z;
  RowMatrix coords(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < coords.size(); ++i) {
    coords.data()[i] = z(rng);
  }
  LatentConfiguration x(coords);
  RowMatrix y(coords.rows(), coords.rows());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x.distance(i, j);
    }
  }
  return {DissimilarityData(std::move(y), ObservationMask(n, true)), std::move(x)};
}

EngineConfig engine_for(Backend b) {
  EngineConfig c;
  c.backend = b;
  c.thread_count = (b == Backend::threaded || b == Backend::threaded_vectorized) ? omp_get_num_procs() : 1;
  return c;
}

void likelihood(benchmark::State& state, Backend b, bool truncation) {
  const auto p = make_problem(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const Engine e(engine_for(b));
  for (auto _ : state) {
    benchmark::DoNotOptimize(e.log_likelihood(p.data, p.x, MdsParams{1.0}, truncation));
  }
  state.SetComplexityN(state.range(0));
}

void gradient(benchmark::State& state, Backend b) {
  const auto p = make_problem(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const Engine e(engine_for(b));
  for (auto _ : state) {
    benchmark::DoNotOptimize(e.gradient(p.data, p.x, MdsParams{1.0}).values.data());
  }
  state.SetComplexityN(state.range(0));
}

void sizes(benchmark::internal::Benchmark* b) {
  for (long n : {256, 1024, 4096}) {
    for (long d : {2, 6}) {
      b->Args({n, d});
    }
  }
  b->Unit(benchmark::kMillisecond);
}

const int registered = [] {
  for (Backend b : {Backend::serial, Backend::vectorized, Backend::threaded, Backend::threaded_vectorized,
                    Backend::tiled_device}) {
    const std::string name(to_string(b));
    benchmark::RegisterBenchmark(("likelihood/" + name).c_str(), likelihood, b, true)->Apply(sizes);
    benchmark::RegisterBenchmark(("gradient/" + name).c_str(), gradient, b)->Apply(sizes);
  }
  benchmark::RegisterBenchmark("likelihood_no_truncation/serial", likelihood, Backend::serial, false)->Apply(sizes);
  return 0;
}();

}  // namespace

BENCHMARK_MAIN();
