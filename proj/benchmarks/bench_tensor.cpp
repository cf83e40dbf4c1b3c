#include <benchmark/benchmark.h>

#include "hmn/rng.hpp"
#include "hmn/tensor.hpp"

namespace {

hmn::Tensor random_matrix(int rows, int cols, hmn::Rng& rng) {
  std::vector<double> data(static_cast<std::size_t>(rows) * cols);
  for (double& x : data) x = rng.normal();
  return hmn::Tensor::from({rows, cols}, std::move(data));
}

void BM_MatmulForward(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  hmn::Rng rng(1);
  hmn::Tensor a = random_matrix(n, n, rng);
  hmn::Tensor b = random_matrix(n, n, rng);
  hmn::NoGradGuard ng;
  for (auto _ : state) {
    benchmark::DoNotOptimize(hmn::matmul(a, b));
  }
}
BENCHMARK(BM_MatmulForward)->Arg(32)->Arg(64)->Arg(128);

void BM_MatmulBackward(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  hmn::Rng rng(1);
  hmn::Tensor a = random_matrix(n, n, rng).set_requires_grad(true);
  hmn::Tensor b = random_matrix(n, n, rng).set_requires_grad(true);
  for (auto _ : state) {
    a.zero_grad();
    b.zero_grad();
    hmn::Tensor loss = hmn::sum(hmn::matmul(a, b));
    loss.backward();
    benchmark::DoNotOptimize(a.raw_grad().data());
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(32)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
