// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "common.h"
#include "moeplan/balancer.h"
#include "moeplan/inflight.h"

namespace moeplan {
namespace {

void BM_BalancePublishedPoint(benchmark::State& state) {
  const ModelConfig model = preset("438B");
  const BalanceProblem pb =
      balance_problem(bench::pp8_v2_m64(), model, bench::cluster_4096(), bench::job_16k());
  for (auto _ : state) benchmark::DoNotOptimize(balance(pb));
}
BENCHMARK(BM_BalancePublishedPoint)->Unit(benchmark::kMillisecond);

// Uniform layers with a memory cap that forces mixed recomputation.
void BM_BalanceUniform(benchmark::State& state) {
  const std::int64_t p = state.range(0);
  const std::int64_t v = state.range(1);
  LayerProfile l;
  l.forward = Nanos(100);
  l.backward = Nanos(200);
  l.recompute = {Nanos(0), Nanos(30), Nanos(100)};
  l.static_memory.total = 10;
  l.act_bytes = {8, 4, 1};
  const std::int64_t m = 4 * p;
  BalanceProblem pb = make_problem(p, v, m, std::vector<LayerProfile>(48, l),
                                   inflight_table(p, v, m, ScheduleKind::kInterleaved1F1B), 0);
  pb.memory_cap = min_feasible_memory(pb) * 2;
  for (auto _ : state) benchmark::DoNotOptimize(balance(pb));
}
BENCHMARK(BM_BalanceUniform)
    ->Args({4, 1})
    ->Args({4, 2})
    ->Args({8, 2})
    ->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace moeplan
