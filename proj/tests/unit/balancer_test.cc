// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeplan/balancer.h"

#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "moeplan/config.h"
#include "moeplan/errors.h"
#include "moeplan/inflight.h"
#include "moeplan/pipeline_sim.h"
#include "oracles.h"

namespace moeplan {
namespace {

LayerProfile layer(std::int64_t fwd, Bytes static_bytes = 1, Bytes act = 1) {
  LayerProfile l;
  l.forward = Nanos(fwd);
  l.backward = Nanos(2 * fwd);
  l.recompute = {Nanos(0), Nanos(fwd / 2), Nanos(fwd)};
  l.static_memory.params = static_bytes;
  l.static_memory.total = static_bytes;
  l.act_bytes = {4 * act, 2 * act, act};
  return l;
}

BalanceProblem one_f_one_b(std::int64_t p, std::int64_t m, std::vector<LayerProfile> layers,
                           Bytes cap) {
  return make_problem(p, 1, m, std::move(layers), inflight_table(p, 1, m, ScheduleKind::kOneFOneB),
                      cap);
}

TEST(Balance, UniformLayersSplitEvenly) {
  const auto pb = one_f_one_b(2, 4, std::vector<LayerProfile>(4, layer(1)), 1'000'000);
  const BalanceResult r = balance(pb);
  const StageChunkMatrix<std::int64_t> counts{{2}, {2}};
  EXPECT_EQ(r.plan.layer_counts, counts);
  EXPECT_TRUE(r.proven_optimal);
  EXPECT_EQ(r.objective, plan_objective(pb, even_plan(4, 2, 1, RecomputeMode::kNone)));
}

TEST(Balance, HeavyLastLayerGetsItsOwnStage) {
  const auto pb = one_f_one_b(2, 4, {layer(1), layer(1), layer(1), layer(3)}, 1'000'000);
  const BalanceResult r = balance(pb);
  const StageChunkMatrix<std::int64_t> counts{{3}, {1}};
  EXPECT_EQ(r.plan.layer_counts, counts);
  // Stage times (9, 9): 4 * 9 + 1 * 9.
  EXPECT_EQ(r.objective, Nanos(45));
  for (const auto& row : r.plan.recompute) {
    for (RecomputeMode mode : row) EXPECT_EQ(mode, RecomputeMode::kNone);
  }
  // The other two contiguous splits are worse.
  for (std::int64_t first : {1, 2}) {
    PipelinePlan alt = r.plan;
    alt.layer_counts = {{first}, {4 - first}};
    EXPECT_GT(plan_objective(pb, alt), r.objective);
  }
}

TEST(Balance, TightCapForcesRecomputation) {
  std::vector<LayerProfile> layers(4, layer(2, 1, 10));
  auto roomy = one_f_one_b(2, 4, layers, 1'000'000);
  const BalanceResult free = balance(roomy);
  auto tight = roomy;
  tight.memory_cap = free.per_stage_memory[0].total - 1;
  const BalanceResult squeezed = balance(tight);
  EXPECT_GE(squeezed.objective, free.objective);
  for (const auto& m : squeezed.per_stage_memory) EXPECT_LE(m.total, tight.memory_cap);
  bool recomputes = false;
  for (const auto& row : squeezed.plan.recompute) {
    for (RecomputeMode mode : row) recomputes |= mode != RecomputeMode::kNone;
  }
  EXPECT_TRUE(recomputes);
}

TEST(Balance, ObjectiveIsMonotoneInTheCap) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 30; ++i) {
    BalanceProblem pb = oracle::random_problem(rng, false);
    Bytes min_peak = 0;
    oracle::exhaustive_balance(pb, &min_peak);
    Nanos prev = Nanos::max();
    for (Bytes extra : {Bytes{0}, Bytes{50}, Bytes{500}, Bytes{1} << 40}) {
      pb.memory_cap = min_peak + extra;
      const Nanos obj = balance(pb).objective;
      EXPECT_LE(obj, prev) << "instance " << i;
      prev = obj;
    }
  }
}

TEST(Balance, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(20260101);
  int solved = 0;
  for (int i = 0; i < 120; ++i) {
    const BalanceProblem pb = oracle::random_problem(rng, i % 4 == 0);
    Bytes min_peak = 0;
    const auto truth = oracle::exhaustive_balance(pb, &min_peak);
    if (!truth) {
      try {
        balance(pb);
        ADD_FAILURE() << "instance " << i << " should be infeasible";
      } catch (const Infeasible& e) {
        EXPECT_EQ(e.min_achievable_bytes(), min_peak);
      }
      continue;
    }
    const BalanceResult got = balance(pb);
    ++solved;
    EXPECT_TRUE(got.proven_optimal);
    EXPECT_EQ(got.objective, truth->objective) << "instance " << i;
    EXPECT_EQ(got.plan, truth->plan) << "instance " << i;
    EXPECT_EQ(oracle::objective_of(pb, got.plan), got.objective);
    const auto mem = oracle::stage_memory_of(pb, got.plan);
    for (std::size_t s = 0; s < mem.size(); ++s) {
      EXPECT_LE(mem[s], pb.memory_cap);
      EXPECT_EQ(mem[s], got.per_stage_memory[s].total);
    }
  }
  EXPECT_GT(solved, 80);
}

TEST(Balance, InfeasibleReportsTheSmallestWorkingCap) {
  auto pb = one_f_one_b(2, 4, std::vector<LayerProfile>(4, layer(1, 5, 3)), 1);
  const Bytes need = min_feasible_memory(pb);
  try {
    balance(pb);
    FAIL() << "expected Infeasible";
  } catch (const Infeasible& e) {
    EXPECT_EQ(e.min_achievable_bytes(), need);
  }
  pb.memory_cap = need;
  EXPECT_NO_THROW(balance(pb));
}

TEST(Balance, MalformedProblemsAreRejected) {
  auto pb = one_f_one_b(4, 4, std::vector<LayerProfile>(3, layer(1)), 1'000'000);
  EXPECT_THROW(balance(pb), InvalidStrategy);
  auto bad_table = one_f_one_b(2, 4, std::vector<LayerProfile>(4, layer(1)), 1'000'000);
  bad_table.inflight.pop_back();
  EXPECT_THROW(balance(bad_table), InvalidParams);
}

TEST(Balance, PublishedOperatingPointIsProvenOptimal) {
  const ModelConfig model = preset("438B");
  ClusterTopology c;
  c.num_nodes = 512;
  c.devices_per_node = 8;
  c.device_memory_bytes = 64 * kGiB;
  c.device_flops_per_sec = 280e12;
  c.compute_efficiency = 0.4;
  c.intra_node_link = {5e-6, 196e9};
  c.inter_node_link = {15e-6, 25e9};
  ParallelStrategy s;
  s.dp = 64;
  s.tp = 8;
  s.pp = 8;
  s.vpp = 2;
  s.ep = 8;
  s.op = 8;
  s.micro_batch_size = 4;
  s.num_micro_batches = 64;
  s.sp_enabled = true;
  TrainingJob job;
  job.global_batch = 16384;
  job.seq_len = 4096;
  job.max_device_memory_bytes = 45 * kGiB;

  const auto start = std::chrono::steady_clock::now();
  const BalanceResult r = balance(s, model, c, job);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_TRUE(r.proven_optimal);
  EXPECT_EQ(r.plan.total_layers(), 54);
  for (const auto& m : r.per_stage_memory) EXPECT_LE(m.total, job.max_device_memory_bytes);
  EXPECT_LT(secs, 60.0);
}

// With one chunk per stage the surrogate bounds the simulated makespan.
TEST(Balance, SurrogateTracksTheSimulatorWithoutInterleaving) {
  std::mt19937_64 rng(99);
  int checked = 0;
  for (int i = 0; i < 200 && checked < 60; ++i) {
    const BalanceProblem pb = oracle::random_problem(rng, false);
    if (pb.chunks != 1) continue;
    if (!oracle::exhaustive_balance(pb)) continue;
    const BalanceResult r = balance(pb);
    ParallelStrategy s;
    s.pp = pb.stages;
    s.num_micro_batches = pb.micro_batches;
    const ScheduleTrace t =
        simulate(r.plan, s, plan_durations(pb, r.plan), Nanos(0), ScheduleKind::kOneFOneB);
    EXPECT_LE(static_cast<double>(t.makespan.count()),
              1.05 * static_cast<double>(r.objective.count()))
        << "instance " << i;
    ++checked;
  }
  EXPECT_GT(checked, 20);
}

}  // namespace
}  // namespace moeplan
