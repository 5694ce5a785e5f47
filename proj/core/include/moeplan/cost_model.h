// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "moeplan/config.h"
#include "moeplan/types.h"
#include "moeplan/units.h"

namespace moeplan {

// Analytical per-layer, per-device costs. The formulas are listed in
// docs/formulas.md; every constant there is mirrored here.

struct MemoryBreakdown {
  Bytes params = 0;
  Bytes gradients = 0;
  Bytes optimizer_states = 0;
  Bytes activations = 0;
  Bytes total = 0;

  bool operator==(const MemoryBreakdown&) const = default;
};

MemoryBreakdown& operator+=(MemoryBreakdown& a, const MemoryBreakdown& b);
MemoryBreakdown operator*(const MemoryBreakdown& m, std::int64_t n);

struct LayerCost {
  double fwd_flops = 0;
  double bwd_flops = 0;
  // Flops of the attention score/softmax/value product; this is what
  // selective recomputation replays.
  double attention_core_flops = 0;
  Bytes attention_param_bytes = 0;
  Bytes expert_param_bytes = 0;  // routed experts held by this device
  Bytes shared_expert_param_bytes = 0;
  Bytes param_bytes = 0;
  // Indexed by RecomputeMode.
  std::array<Bytes, 3> act_bytes_per_microbatch{};

  Bytes act_bytes(RecomputeMode mode) const {
    return act_bytes_per_microbatch[static_cast<int>(mode)];
  }
  double recompute_flops(RecomputeMode mode) const;
};

enum class CollectiveKind { kAllReduce, kAllGather, kReduceScatter, kAllToAll };

// alpha-beta ring model; `bytes` is the full per-device buffer.
double collective_time(CollectiveKind kind, double bytes, std::int64_t group_size,
                       const LinkSpec& link);

// Checks that only need the model: positive degrees, ep | dp, op | dp,
// ep | num_routed_experts, num_layers >= pp * vpp. Throws InvalidStrategy.
void check_strategy(const ParallelStrategy& strategy, const ModelConfig& model);
// Adds world size, intra-node TP and global batch consistency.
void check_strategy(const ParallelStrategy& strategy, const ModelConfig& model,
                    const ClusterTopology& cluster, const TrainingJob& job);

LayerCost layer_cost(const ModelConfig& model, const ParallelStrategy& strategy,
                     std::int64_t micro_batch_size);

// Static (params + grads + optimizer) and activation bytes of every memory
// consumer on a device, before placement.
struct MemoryProfile {
  MemoryBreakdown layer_static;  // activations = 0
  std::array<Bytes, 3> layer_act{};
  MemoryBreakdown embedding_static;
  MemoryBreakdown head_static;
  Bytes head_act = 0;  // logits of one in-flight micro-batch
};

MemoryProfile memory_profile(const ModelConfig& model, const ParallelStrategy& strategy,
                             const TrainingJob& job);

// Per-stage memory of `plan`, given the in-flight table of the schedule.
std::vector<MemoryBreakdown> stage_memory(const MemoryProfile& profile, const PipelinePlan& plan,
                                          const StageChunkMatrix<std::int64_t>& inflight);

// Memory of the most loaded stage. Throws IncompletePlan when the plan does
// not place exactly num_layers layers or its shape disagrees with strategy.
MemoryBreakdown device_memory(const ModelConfig& model, const ParallelStrategy& strategy,
                              const PipelinePlan& plan, const TrainingJob& job,
                              ScheduleKind schedule = ScheduleKind::kInterleaved1F1BOverlap);

// Per-layer busy times of one micro-batch on one device. Forward and backward
// include the TP and EP collectives that sit on the layer's critical path.
struct TimingProfile {
  Nanos layer_forward{0};
  Nanos layer_backward{0};
  std::array<Nanos, 3> layer_recompute{};
  Nanos layer_compute_forward{0};
  Nanos layer_compute_backward{0};
  std::array<Nanos, 3> layer_compute_recompute{};
  Nanos layer_tp_comm{0};  // forward + backward, per recompute mode none
  Nanos layer_ep_comm{0};
  std::array<Nanos, 3> layer_tp_recompute{};
  std::array<Nanos, 3> layer_ep_recompute{};
  Nanos embedding_forward{0};
  Nanos embedding_backward{0};
  Nanos head_forward{0};
  Nanos head_backward{0};
  Nanos send{0};  // one stage-boundary activation transfer
  Nanos dp_comm{0};
};

TimingProfile timing_profile(const ModelConfig& model, const ParallelStrategy& strategy,
                             const TrainingJob& job, const ClusterTopology& cluster);

// Data-parallel gradient synchronisation of the stage with the most params.
Nanos dp_sync_time(const ModelConfig& model, const ParallelStrategy& strategy,
                   const PipelinePlan& plan, const TrainingJob& job,
                   const ClusterTopology& cluster);

ChunkDurations chunk_durations(const TimingProfile& timing, const PipelinePlan& plan);

struct CostEstimate {
  Nanos compute{0};
  Nanos bubble{0};
  Nanos dp_comm{0};
  Nanos tp_comm{0};
  Nanos ep_comm{0};
  Nanos pp_comm{0};
  Nanos step_time{0};
  MemoryBreakdown memory;

  double step_time_sec() const { return to_seconds(step_time); }
  double bubble_fraction() const;
};

// step = m * (compute + tp + ep of the bottleneck stage)
//        + (p - 1) * (longest chunk) + pp + dp.
CostEstimate step_time_estimate(const ModelConfig& model, const ParallelStrategy& strategy,
                                const PipelinePlan& plan, const TrainingJob& job,
                                const ClusterTopology& cluster,
                                ScheduleKind schedule = ScheduleKind::kInterleaved1F1BOverlap);

// Same as above for callers holding explicit per-chunk durations (no comm).
CostEstimate step_time_from_durations(const ChunkDurations& durations,
                                      std::int64_t num_micro_batches);

}  // namespace moeplan
