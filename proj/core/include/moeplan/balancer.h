// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "moeplan/config.h"
#include "moeplan/cost_model.h"
#include "moeplan/types.h"
#include "moeplan/units.h"

namespace moeplan {

// Costs of one transformer layer, per micro-batch where applicable.
struct LayerProfile {
  Nanos forward{0};
  Nanos backward{0};
  std::array<Nanos, 3> recompute{};  // indexed by RecomputeMode
  MemoryBreakdown static_memory;     // params + gradients + optimizer
  std::array<Bytes, 3> act_bytes{};  // stored per in-flight micro-batch

  Nanos busy(RecomputeMode mode) const {
    return forward + backward + recompute[static_cast<int>(mode)];
  }
  bool operator==(const LayerProfile&) const = default;
};

// The integer program solved by balance(). Layers are listed in model order
// and placed chunk-major over (stage, chunk) positions.
//
//   minimise  m * T1 + (p - 1) * T2
//   T1 >= sum_c t(s, c)          for every stage s
//   T2 >= t(s, c)                for every (s, c)
//   memory(s) <= memory_cap      for every stage s
//   t(s, c) = sum of busy(mode) over the chunk's layers
//             + extra_forward(s, c) + extra_backward(s, c)
//   memory(s) = sum of static layer bytes + extra_static(s)
//             + sum_c inflight(s, c) * (act bytes of the chunk + extra_act(s, c))
//
// Every (stage, chunk) holds at least one layer.
struct BalanceProblem {
  std::int64_t stages = 1;
  std::int64_t chunks = 1;
  std::int64_t micro_batches = 1;
  std::vector<LayerProfile> layers;
  StageChunkMatrix<std::int64_t> inflight;
  // Embedding and head work pinned to (0, 0) and (p-1, v-1).
  StageChunkMatrix<Nanos> extra_forward;
  StageChunkMatrix<Nanos> extra_backward;
  StageChunkMatrix<Bytes> extra_act;
  std::vector<MemoryBreakdown> extra_static;  // per stage
  Bytes memory_cap = 0;
  // Search nodes the branch-and-bound may expand before giving up on a proof.
  std::int64_t node_limit = 20'000'000;
};

// Zero-extra problem with `layers` and the given in-flight table.
BalanceProblem make_problem(std::int64_t p, std::int64_t v, std::int64_t m,
                            std::vector<LayerProfile> layers,
                            StageChunkMatrix<std::int64_t> inflight, Bytes memory_cap);

struct BalanceResult {
  PipelinePlan plan;
  Nanos objective{0};
  std::vector<MemoryBreakdown> per_stage_memory;
  bool proven_optimal = false;

  double objective_sec() const { return to_seconds(objective); }
};

// Surrogate objective and per-stage memory of an arbitrary plan.
Nanos plan_objective(const BalanceProblem& problem, const PipelinePlan& plan);
std::vector<MemoryBreakdown> plan_stage_memory(const BalanceProblem& problem,
                                               const PipelinePlan& plan);

// Exact minimiser. Among optimal plans returns the lexicographically smallest
// (layer counts row-major, then recompute modes row-major, none < selective <
// full). Throws Infeasible carrying the smallest memory cap that admits a
// plan, InvalidStrategy when there are fewer layers than (stage, chunk)
// positions, or InvalidParams for malformed problems.
BalanceResult balance(const BalanceProblem& problem);

// Smallest cap under which some plan fits, ignoring time.
Bytes min_feasible_memory(const BalanceProblem& problem);

// Builds the problem from the cost model. The cap is
// job.max_device_memory_bytes, or the device memory when that is 0.
BalanceProblem balance_problem(const ParallelStrategy& strategy, const ModelConfig& model,
                               const ClusterTopology& cluster, const TrainingJob& job,
                               ScheduleKind schedule = ScheduleKind::kInterleaved1F1BOverlap);

// Solves balance_problem() and re-checks every stage against the cost model's
// own memory accounting before returning.
BalanceResult balance(const ParallelStrategy& strategy, const ModelConfig& model,
                      const ClusterTopology& cluster, const TrainingJob& job,
                      ScheduleKind schedule = ScheduleKind::kInterleaved1F1BOverlap);

// Per-chunk durations of `plan` under `problem`, for the simulator.
ChunkDurations plan_durations(const BalanceProblem& problem, const PipelinePlan& plan);

}  // namespace moeplan
