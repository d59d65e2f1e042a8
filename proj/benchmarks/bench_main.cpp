#include <benchmark/benchmark.h>

#include <random>

#include "lrcssm/lrc_dynamics.hpp"
#include "lrcssm/network.hpp"
#include "lrcssm/scan.hpp"
#include "lrcssm/solver.hpp"

using namespace lrcssm;

namespace {

Matrix normal_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(r, c);
  for (auto& v : m.flat()) v = normal(rng);
  return m;
}

void BM_PrefixScanAffine(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0));
  const std::size_t D = 16;
  AffineSequence seq{normal_matrix(T, D, 1), normal_matrix(T, D, 2)};
  for (auto& v : seq.a.flat()) v = 0.5 * std::tanh(v);
  const Vector x0(D, 0.0);
  for (auto _ : state) benchmark::DoNotOptimize(prefix_scan_affine(seq, x0));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * T * D));
}
BENCHMARK(BM_PrefixScanAffine)->RangeMultiplier(4)->Range(64, 1 << 16);

void BM_EulerStep(benchmark::State& state) {
  const auto D = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  const auto p = init_lrc_params(D, D, rng);
  const auto x = normal_matrix(1, D, 4);
  const auto u = normal_matrix(1, D, 5);
  for (auto _ : state) benchmark::DoNotOptimize(euler_step(x.row(0), u.row(0), p));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * D));
}
BENCHMARK(BM_EulerStep)->Arg(16)->Arg(64)->Arg(256);

void rollout_args(benchmark::internal::Benchmark* b) {
  for (int T : {1024, 4096, 16384}) b->Arg(T);
}

struct Layer {
  LrcLayerParams p;
  Matrix u;
  Vector x0;
};

Layer make_layer(std::size_t T) {
  std::mt19937_64 rng(6);
  return {init_lrc_params(16, 16, rng), normal_matrix(T, 16, 7), Vector(16, 0.0)};
}

void BM_SequentialRollout(benchmark::State& state) {
  const auto l = make_layer(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(sequential_rollout(l.x0, l.u, l.p));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SequentialRollout)->Apply(rollout_args)->Unit(benchmark::kMillisecond);

void BM_NewtonScanSolve(benchmark::State& state) {
  const auto l = make_layer(static_cast<std::size_t>(state.range(0)));
  SolverConfig cfg;
  std::size_t iters = 0;
  for (auto _ : state) {
    const auto res = solve_parallel(l.x0, l.u, l.p, {}, cfg);
    iters = res.report.iterations;
    benchmark::DoNotOptimize(res.states);
  }
  state.counters["newton_iters"] = static_cast<double>(iters);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NewtonScanSolve)->Apply(rollout_args)->Unit(benchmark::kMillisecond);

void BM_ModelForward(benchmark::State& state) {
  ModelConfig cfg;
  cfg.input_dim = 2;
  cfg.solver.mode = state.range(0) ? SolverMode::newton_scan : SolverMode::sequential;
  const auto params = init_params(cfg);
  std::vector<Matrix> batch;
  for (int b = 0; b < 8; ++b) batch.push_back(normal_matrix(1000, 2, 10 + b));
  for (auto _ : state) benchmark::DoNotOptimize(forward(params, batch, cfg).logits);
}
BENCHMARK(BM_ModelForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
