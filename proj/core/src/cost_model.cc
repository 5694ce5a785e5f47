// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeplan/cost_model.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "moeplan/errors.h"
#include "moeplan/inflight.h"

namespace moeplan {
namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

Nanos seconds_to_nanos(double seconds) { return Nanos(std::llround(seconds * 1e9)); }

MemoryBreakdown static_breakdown(std::int64_t elements, const ModelConfig& model, std::int64_t op) {
  MemoryBreakdown m;
  m.params = elements * model.param_dtype_bytes;
  m.gradients = m.params;
  // fp32 master copy plus two Adam moments, sharded over the OP group.
  m.optimizer_states = ceil_div(elements * model.master_dtype_bytes * 3, op);
  m.total = m.params + m.gradients + m.optimizer_states;
  return m;
}

std::int64_t sp_divisor(const ParallelStrategy& s) { return s.sp_enabled ? s.tp : 1; }

// A group of `size` ranks spaced `stride` apart stays inside a node when the
// span fits; otherwise its slowest hop is the inter-node link.
const LinkSpec& group_link(std::int64_t stride, std::int64_t size, const ClusterTopology& c) {
  return stride * size <= c.devices_per_node ? c.intra_node_link : c.inter_node_link;
}

void check_plan_shape(const ParallelStrategy& strategy, const PipelinePlan& plan,
                      const ModelConfig& model) {
  if (plan.stages() != strategy.pp || plan.chunks() != strategy.vpp) {
    throw IncompletePlan(fmt::format("plan is {}x{}, strategy needs {}x{}", plan.stages(),
                                     plan.chunks(), strategy.pp, strategy.vpp));
  }
  for (std::int64_t s = 0; s < plan.stages(); ++s) {
    if (static_cast<std::int64_t>(plan.layer_counts[s].size()) != strategy.vpp ||
        static_cast<std::int64_t>(plan.recompute.size()) != strategy.pp ||
        static_cast<std::int64_t>(plan.recompute[s].size()) != strategy.vpp) {
      throw IncompletePlan("plan rows have inconsistent lengths");
    }
    for (auto n : plan.layer_counts[s]) {
      if (n < 0) throw IncompletePlan("negative layer count");
    }
  }
  if (plan.total_layers() != model.num_layers) {
    throw IncompletePlan(
        fmt::format("plan places {} layers, model has {}", plan.total_layers(), model.num_layers));
  }
}

ModelConfig with_seq_len(ModelConfig model, const TrainingJob& job) {
  if (job.seq_len > 0) model.seq_len = job.seq_len;
  return model;
}

}  // namespace

MemoryBreakdown& operator+=(MemoryBreakdown& a, const MemoryBreakdown& b) {
  a.params += b.params;
  a.gradients += b.gradients;
  a.optimizer_states += b.optimizer_states;
  a.activations += b.activations;
  a.total += b.total;
  return a;
}

MemoryBreakdown operator*(const MemoryBreakdown& m, std::int64_t n) {
  return {m.params * n, m.gradients * n, m.optimizer_states * n, m.activations * n, m.total * n};
}

double LayerCost::recompute_flops(RecomputeMode mode) const {
  switch (mode) {
    case RecomputeMode::kNone:
      return 0;
    case RecomputeMode::kSelective:
      return attention_core_flops;
    case RecomputeMode::kFull:
      return fwd_flops;
  }
  return 0;
}

double collective_time(CollectiveKind kind, double bytes, std::int64_t group_size,
                       const LinkSpec& link) {
  if (bytes < 0) throw InvalidParams("collective_time: bytes must be >= 0");
  if (group_size < 1) throw InvalidParams("collective_time: group_size must be >= 1");
  if (group_size == 1) return 0;
  const double g = static_cast<double>(group_size);
  const double hops = g - 1;
  const double volume = bytes * hops / (g * link.bandwidth_bytes_per_sec);
  switch (kind) {
    case CollectiveKind::kAllReduce:
      return link.latency_sec * 2 * hops + 2 * volume;
    case CollectiveKind::kAllGather:
    case CollectiveKind::kReduceScatter:
    case CollectiveKind::kAllToAll:
      return link.latency_sec * hops + volume;
  }
  return 0;
}

void check_strategy(const ParallelStrategy& s, const ModelConfig& model) {
  if (s.dp < 1 || s.tp < 1 || s.pp < 1 || s.vpp < 1 || s.ep < 1 || s.op < 1 ||
      s.micro_batch_size < 1 || s.num_micro_batches < 1) {
    throw InvalidStrategy("all parallel degrees and batch sizes must be >= 1");
  }
  if (s.dp % s.ep != 0) throw InvalidStrategy("ep must divide dp");
  if (s.dp % s.op != 0) throw InvalidStrategy("op must divide dp");
  if (model.num_routed_experts % s.ep != 0) {
    throw InvalidStrategy("ep must divide num_routed_experts");
  }
  if (model.num_layers < s.pp * s.vpp) throw InvalidStrategy("num_layers must be >= pp * vpp");
}

void check_strategy(const ParallelStrategy& s, const ModelConfig& model,
                    const ClusterTopology& cluster, const TrainingJob& job) {
  check_strategy(s, model);
  if (s.dp * s.tp * s.pp != cluster.world_size()) {
    throw InvalidStrategy(fmt::format("dp*tp*pp = {} but world size is {}", s.dp * s.tp * s.pp,
                                      cluster.world_size()));
  }
  if (s.tp > cluster.devices_per_node) {
    throw InvalidStrategy("tp must fit inside one node");
  }
  if (s.dp * s.micro_batch_size * s.num_micro_batches != job.global_batch) {
    throw InvalidStrategy("dp * micro_batch_size * num_micro_batches must equal global_batch");
  }
}

LayerCost layer_cost(const ModelConfig& model, const ParallelStrategy& strategy,
                     std::int64_t micro_batch_size) {
  check_strategy(strategy, model);
  if (micro_batch_size < 1) throw InvalidStrategy("micro_batch_size must be >= 1");
  const std::int64_t H = model.hidden_size;
  const std::int64_t F = model.expert_intermediate_size;
  const std::int64_t S = model.seq_len;
  const std::int64_t d = model.param_dtype_bytes;
  const std::int64_t k = model.experts_per_token;
  const std::int64_t shared = model.num_shared_experts;
  const std::int64_t tp = strategy.tp;
  const std::int64_t sp = sp_divisor(strategy);
  const std::int64_t T = micro_batch_size * S;

  const double tokens = static_cast<double>(T);
  const double h = static_cast<double>(H);
  const double f = static_cast<double>(F);
  const double projection_flops = 2.0 * tokens * 4.0 * h * h;
  const double core_flops = 4.0 * tokens * static_cast<double>(S) * h;
  const double moe_flops = 6.0 * tokens * static_cast<double>(k + shared) * h * f;

  LayerCost cost;
  cost.fwd_flops = (projection_flops + core_flops + moe_flops) / static_cast<double>(tp);
  cost.bwd_flops = 2.0 * cost.fwd_flops;
  cost.attention_core_flops = core_flops / static_cast<double>(tp);

  const std::int64_t expert_elements = 3 * H * F;
  const std::int64_t local_experts = model.num_routed_experts / strategy.ep;
  cost.attention_param_bytes = ceil_div(4 * H * H, tp) * d;
  cost.expert_param_bytes = local_experts * ceil_div(expert_elements, tp) * d;
  cost.shared_expert_param_bytes = shared * ceil_div(expert_elements, tp) * d;
  cost.param_bytes =
      cost.attention_param_bytes + cost.expert_param_bytes + cost.shared_expert_param_bytes;

  const std::int64_t norms = ceil_div(2 * d * H * T, sp);
  const std::int64_t attention_linear = ceil_div(5 * d * H * T, tp);
  const std::int64_t attention_scores = ceil_div((2 * d + 1) * model.num_heads * S * T, tp);
  const std::int64_t moe = ceil_div(d * (H + (k + shared) * (H + 3 * F)) * T, tp);
  const std::int64_t boundary = ceil_div(d * H * T, sp);
  const std::int64_t none = norms + attention_linear + attention_scores + moe;
  cost.act_bytes_per_microbatch = {none, none - attention_scores, boundary};
  return cost;
}

MemoryProfile memory_profile(const ModelConfig& base, const ParallelStrategy& strategy,
                             const TrainingJob& job) {
  const ModelConfig model = with_seq_len(base, job);
  const LayerCost cost = layer_cost(model, strategy, strategy.micro_batch_size);
  const std::int64_t d = model.param_dtype_bytes;
  const std::int64_t tp = strategy.tp;

  MemoryProfile profile;
  profile.layer_static = static_breakdown(cost.param_bytes / d, model, strategy.op);
  profile.layer_act = cost.act_bytes_per_microbatch;
  const std::int64_t vocab_elements = ceil_div(model.vocab_size * model.hidden_size, tp);
  profile.embedding_static = static_breakdown(vocab_elements, model, strategy.op);
  profile.head_static = profile.embedding_static;
  const std::int64_t tokens = strategy.micro_batch_size * model.seq_len;
  profile.head_act = ceil_div(tokens * model.vocab_size * d, tp);
  return profile;
}

std::vector<MemoryBreakdown> stage_memory(const MemoryProfile& profile, const PipelinePlan& plan,
                                          const StageChunkMatrix<std::int64_t>& inflight) {
  const std::int64_t p = plan.stages();
  const std::int64_t v = plan.chunks();
  std::vector<MemoryBreakdown> stages(p);
  for (std::int64_t s = 0; s < p; ++s) {
    MemoryBreakdown& m = stages[s];
    for (std::int64_t c = 0; c < v; ++c) {
      const std::int64_t n = plan.layer_counts[s][c];
      m += profile.layer_static * n;
      Bytes act = n * profile.layer_act[static_cast<int>(plan.recompute[s][c])];
      if (s == p - 1 && c == v - 1) act += profile.head_act;
      m.activations += inflight[s][c] * act;
      m.total += inflight[s][c] * act;
    }
    if (s == 0) m += profile.embedding_static;
    if (s == p - 1) m += profile.head_static;
  }
  return stages;
}

MemoryBreakdown device_memory(const ModelConfig& model, const ParallelStrategy& strategy,
                              const PipelinePlan& plan, const TrainingJob& job,
                              ScheduleKind schedule) {
  check_strategy(strategy, model);
  check_plan_shape(strategy, plan, model);
  const auto inflight =
      inflight_table(strategy.pp, strategy.vpp, strategy.num_micro_batches, schedule);
  const auto stages = stage_memory(memory_profile(model, strategy, job), plan, inflight);
  return *std::max_element(stages.begin(), stages.end(),
                           [](const auto& a, const auto& b) { return a.total < b.total; });
}

TimingProfile timing_profile(const ModelConfig& base, const ParallelStrategy& strategy,
                             const TrainingJob& job, const ClusterTopology& cluster) {
  const ModelConfig model = with_seq_len(base, job);
  const LayerCost cost = layer_cost(model, strategy, strategy.micro_batch_size);
  const double rate = cluster.effective_flops_per_sec();
  const double tokens = static_cast<double>(strategy.micro_batch_size * model.seq_len);
  const double h = static_cast<double>(model.hidden_size);
  const double d = static_cast<double>(model.param_dtype_bytes);
  const double sp = static_cast<double>(sp_divisor(strategy));

  TimingProfile t;
  t.layer_compute_forward = seconds_to_nanos(cost.fwd_flops / rate);
  t.layer_compute_backward = seconds_to_nanos(cost.bwd_flops / rate);
  t.layer_compute_recompute = {Nanos(0), seconds_to_nanos(cost.attention_core_flops / rate),
                               t.layer_compute_forward};

  // Two all-reduce equivalents per direction (attention output and MoE
  // output); with SP they become all-gather + reduce-scatter pairs of equal
  // cost.
  const Nanos tp_direction =
      seconds_to_nanos(2 * collective_time(CollectiveKind::kAllReduce, tokens * h * d, strategy.tp,
                                           group_link(1, strategy.tp, cluster)));
  // Dispatch and combine all-to-all of k copies of every local token.
  const double a2a_bytes = tokens * static_cast<double>(model.experts_per_token) * h * d / sp;
  const Nanos ep_direction =
      seconds_to_nanos(2 * collective_time(CollectiveKind::kAllToAll, a2a_bytes, strategy.ep,
                                           group_link(strategy.tp, strategy.ep, cluster)));

  t.layer_forward = t.layer_compute_forward + tp_direction + ep_direction;
  t.layer_backward = t.layer_compute_backward + tp_direction + ep_direction;
  t.layer_recompute = {Nanos(0), t.layer_compute_recompute[1], t.layer_forward};
  t.layer_tp_comm = 2 * tp_direction;
  t.layer_ep_comm = 2 * ep_direction;
  t.layer_tp_recompute = {Nanos(0), Nanos(0), tp_direction};
  t.layer_ep_recompute = {Nanos(0), Nanos(0), ep_direction};

  const double head_flops =
      2.0 * tokens * h * static_cast<double>(model.vocab_size) / static_cast<double>(strategy.tp);
  t.head_forward = seconds_to_nanos(head_flops / rate);
  t.head_backward = seconds_to_nanos(2 * head_flops / rate);

  const LinkSpec& pp_link = group_link(strategy.tp * strategy.dp, strategy.pp, cluster);
  if (strategy.pp > 1) {
    t.send = seconds_to_nanos(pp_link.latency_sec +
                              tokens * h * d / sp / pp_link.bandwidth_bytes_per_sec);
  }
  return t;
}

Nanos dp_sync_time(const ModelConfig& model, const ParallelStrategy& strategy,
                   const PipelinePlan& plan, const TrainingJob& job,
                   const ClusterTopology& cluster) {
  check_plan_shape(strategy, plan, model);
  const LayerCost cost = layer_cost(with_seq_len(model, job), strategy, strategy.micro_batch_size);
  const MemoryProfile profile = memory_profile(model, strategy, job);
  const LinkSpec& dense_link = group_link(strategy.tp, strategy.dp, cluster);
  const std::int64_t expert_replicas = strategy.dp / strategy.ep;
  const LinkSpec& expert_link = group_link(strategy.tp * strategy.ep, expert_replicas, cluster);

  Nanos worst{0};
  for (std::int64_t s = 0; s < plan.stages(); ++s) {
    std::int64_t layers = 0;
    for (auto n : plan.layer_counts[s]) layers += n;
    double dense =
        static_cast<double>(layers * (cost.attention_param_bytes + cost.shared_expert_param_bytes));
    if (s == 0) dense += static_cast<double>(profile.embedding_static.params);
    if (s == plan.stages() - 1) dense += static_cast<double>(profile.head_static.params);
    const double expert = static_cast<double>(layers * cost.expert_param_bytes);
    const Nanos t = seconds_to_nanos(
        collective_time(CollectiveKind::kAllReduce, dense, strategy.dp, dense_link) +
        collective_time(CollectiveKind::kAllReduce, expert, expert_replicas, expert_link));
    worst = std::max(worst, t);
  }
  return worst;
}

ChunkDurations chunk_durations(const TimingProfile& t, const PipelinePlan& plan) {
  const std::int64_t p = plan.stages();
  const std::int64_t v = plan.chunks();
  ChunkDurations d;
  d.forward.assign(p, std::vector<Nanos>(v, Nanos(0)));
  d.backward = d.forward;
  d.recompute = d.forward;
  for (std::int64_t s = 0; s < p; ++s) {
    for (std::int64_t c = 0; c < v; ++c) {
      const std::int64_t n = plan.layer_counts[s][c];
      const int mode = static_cast<int>(plan.recompute[s][c]);
      d.forward[s][c] = n * t.layer_forward;
      d.backward[s][c] = n * t.layer_backward;
      d.recompute[s][c] = n * t.layer_recompute[mode];
      if (s == 0 && c == 0) {
        d.forward[s][c] += t.embedding_forward;
        d.backward[s][c] += t.embedding_backward;
      }
      if (s == p - 1 && c == v - 1) {
        d.forward[s][c] += t.head_forward;
        d.backward[s][c] += t.head_backward;
      }
    }
  }
  return d;
}

double CostEstimate::bubble_fraction() const {
  if (step_time.count() == 0) return 0;
  return static_cast<double>(bubble.count()) / static_cast<double>(step_time.count());
}

CostEstimate step_time_from_durations(const ChunkDurations& d, std::int64_t num_micro_batches) {
  const std::size_t p = d.forward.size();
  Nanos bottleneck{0};
  Nanos longest_chunk{0};
  for (std::size_t s = 0; s < p; ++s) {
    Nanos stage{0};
    for (std::size_t c = 0; c < d.forward[s].size(); ++c) {
      const Nanos busy = d.forward[s][c] + d.backward[s][c] + d.recompute[s][c];
      stage += busy;
      longest_chunk = std::max(longest_chunk, busy);
    }
    bottleneck = std::max(bottleneck, stage);
  }
  CostEstimate e;
  e.compute = num_micro_batches * bottleneck;
  e.bubble = static_cast<std::int64_t>(p > 0 ? p - 1 : 0) * longest_chunk;
  e.step_time = e.compute + e.bubble;
  return e;
}

CostEstimate step_time_estimate(const ModelConfig& model, const ParallelStrategy& strategy,
                                const PipelinePlan& plan, const TrainingJob& job,
                                const ClusterTopology& cluster, ScheduleKind schedule) {
  check_strategy(strategy, model, cluster, job);
  check_plan_shape(strategy, plan, model);
  const TimingProfile t = timing_profile(model, strategy, job, cluster);
  const ChunkDurations d = chunk_durations(t, plan);
  const std::int64_t p = plan.stages();
  const std::int64_t v = plan.chunks();

  std::int64_t bottleneck_stage = 0;
  Nanos bottleneck{-1};
  Nanos longest_chunk{0};
  for (std::int64_t s = 0; s < p; ++s) {
    Nanos stage{0};
    for (std::int64_t c = 0; c < v; ++c) {
      const Nanos busy = d.forward[s][c] + d.backward[s][c] + d.recompute[s][c];
      stage += busy;
      longest_chunk = std::max(longest_chunk, busy);
    }
    if (stage > bottleneck) {
      bottleneck = stage;
      bottleneck_stage = s;
    }
  }

  Nanos tp{0};
  Nanos ep{0};
  for (std::int64_t c = 0; c < v; ++c) {
    const std::int64_t n = plan.layer_counts[bottleneck_stage][c];
    const int mode = static_cast<int>(plan.recompute[bottleneck_stage][c]);
    tp += n * (t.layer_tp_comm + t.layer_tp_recompute[mode]);
    ep += n * (t.layer_ep_comm + t.layer_ep_recompute[mode]);
  }

  const std::int64_t m = strategy.num_micro_batches;
  CostEstimate e;
  e.tp_comm = m * tp;
  e.ep_comm = m * ep;
  e.compute = m * bottleneck - e.tp_comm - e.ep_comm;
  e.bubble = (p - 1) * longest_chunk;
  e.pp_comm = 2 * (p - 1) * t.send;
  e.dp_comm = dp_sync_time(model, strategy, plan, job, cluster);
  e.step_time = e.compute + e.tp_comm + e.ep_comm + e.bubble + e.pp_comm + e.dp_comm;
  e.memory = device_memory(model, strategy, plan, job, schedule);
  return e;
}

}  // namespace moeplan
