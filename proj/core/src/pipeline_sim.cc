// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeplan/pipeline_sim.h"

#include <fmt/format.h>

#include <algorithm>
#include <stdexcept>

#include "moeplan/errors.h"
#include "moeplan/inflight.h"

namespace moeplan {
namespace {

struct Step {
  bool forward;
  std::int64_t chunk;
  std::int64_t microbatch;
};

// Forward issue order shared by every stage: micro-batches in groups of p,
// each group walking all chunks. The backward order reverses the chunks.
Step virtual_step(std::int64_t j, std::int64_t p, std::int64_t v, bool forward) {
  const std::int64_t group = j / (p * v);
  const std::int64_t within = j % (p * v);
  std::int64_t chunk = within / p;
  if (!forward) chunk = v - 1 - chunk;
  return {forward, chunk, group * p + within % p};
}

std::vector<Step> stage_program(ScheduleKind kind, std::int64_t p, std::int64_t v, std::int64_t m,
                                std::int64_t s) {
  // Padding m up to a multiple of p keeps the group structure intact; the
  // phantom tasks are dropped afterwards. Dropping whole micro-batch chains
  // cannot introduce a wait cycle.
  const std::int64_t padded = (m + p - 1) / p * p;
  const std::int64_t total = padded * v;
  std::int64_t warmup = 0;
  switch (kind) {
    case ScheduleKind::kGPipe:
      warmup = total;
      break;
    case ScheduleKind::kOneFOneB:
      warmup = std::min(total, p - s - 1);
      break;
    case ScheduleKind::kInterleaved1F1B:
    case ScheduleKind::kInterleaved1F1BOverlap:
      warmup = std::min(total, v == 1 ? p - s - 1 : 2 * (p - s - 1) + (v - 1) * p);
      break;
  }
  std::vector<Step> raw;
  raw.reserve(2 * total);
  for (std::int64_t j = 0; j < warmup; ++j) raw.push_back(virtual_step(j, p, v, true));
  std::int64_t b = 0;
  for (std::int64_t j = warmup; j < total; ++j, ++b) {
    raw.push_back(virtual_step(j, p, v, true));
    raw.push_back(virtual_step(b, p, v, false));
  }
  for (; b < total; ++b) raw.push_back(virtual_step(b, p, v, false));
  std::erase_if(raw, [m](const Step& t) { return t.microbatch >= m; });
  return raw;
}

void check_inputs(const PipelinePlan& plan, const ParallelStrategy& strategy,
                  const ChunkDurations& d, Nanos comm, ScheduleKind kind) {
  const std::int64_t p = strategy.pp;
  const std::int64_t v = strategy.vpp;
  if (p < 1 || v < 1 || strategy.num_micro_batches < 1) {
    throw InconsistentPlan("pp, vpp and num_micro_batches must be >= 1");
  }
  if (plan.stages() != p || plan.chunks() != v) {
    throw InconsistentPlan(fmt::format("plan is {}x{} but strategy has pp={} vpp={}", plan.stages(),
                                       plan.chunks(), p, v));
  }
  for (const auto* matrix : {&d.forward, &d.backward, &d.recompute}) {
    if (static_cast<std::int64_t>(matrix->size()) != p) {
      throw InconsistentPlan("duration matrix has the wrong number of stages");
    }
    for (const auto& row : *matrix) {
      if (static_cast<std::int64_t>(row.size()) != v) {
        throw InconsistentPlan("duration matrix has the wrong number of chunks");
      }
      for (auto t : row) {
        if (t.count() < 0) throw InconsistentPlan("durations must be >= 0");
      }
    }
  }
  if (comm.count() < 0) throw InconsistentPlan("comm must be >= 0");
  if (kind == ScheduleKind::kOneFOneB && v != 1) {
    throw UnsupportedSchedule("one_f_one_b requires vpp == 1; use interleaved_1f1b");
  }
}

}  // namespace

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kForward:
      return "forward";
    case TaskKind::kBackward:
      return "backward";
    case TaskKind::kRecompute:
      return "recompute";
    case TaskKind::kSendRecv:
      return "send_recv";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view text) {
  for (auto k :
       {TaskKind::kForward, TaskKind::kBackward, TaskKind::kRecompute, TaskKind::kSendRecv}) {
    if (to_string(k) == text) return k;
  }
  throw ParseError(fmt::format("unknown task kind '{}'", text));
}

ChunkDurations uniform_durations(std::int64_t p, std::int64_t v, Nanos forward, Nanos backward,
                                 Nanos recompute) {
  ChunkDurations d;
  d.forward.assign(p, std::vector<Nanos>(v, forward));
  d.backward.assign(p, std::vector<Nanos>(v, backward));
  d.recompute.assign(p, std::vector<Nanos>(v, recompute));
  return d;
}

ScheduleTrace simulate(const PipelinePlan& plan, const ParallelStrategy& strategy,
                       const ChunkDurations& d, Nanos comm, ScheduleKind kind) {
  check_inputs(plan, strategy, d, comm, kind);
  const std::int64_t p = strategy.pp;
  const std::int64_t v = strategy.vpp;
  const std::int64_t m = strategy.num_micro_batches;
  const bool overlap = kind == ScheduleKind::kInterleaved1F1BOverlap;

  std::vector<std::vector<Step>> programs(p);
  for (std::int64_t s = 0; s < p; ++s) programs[s] = stage_program(kind, p, v, m, s);

  // Times indexed by (stage, chunk, microbatch); -1 means not yet produced.
  const auto slot = [v, m](std::int64_t s, std::int64_t c, std::int64_t mb) {
    return (s * v + c) * m + mb;
  };
  const std::size_t slots = static_cast<std::size_t>(p * v * m);
  std::vector<std::int64_t> forward_end(slots, -1);
  std::vector<std::int64_t> forward_out(slots, -1);  // arrival at the consumer
  std::vector<std::int64_t> backward_out(slots, -1);

  std::vector<std::vector<TaskEvent>> per_stage(p);
  std::vector<std::size_t> next(p, 0);
  std::vector<std::int64_t> compute_free(p, 0);
  std::vector<std::int64_t> comm_free(p, 0);

  auto emit_send = [&](std::int64_t s, std::int64_t c, std::int64_t mb,
                       std::int64_t ready) -> std::int64_t {
    if (comm.count() == 0) return ready;
    std::int64_t& resource = overlap ? comm_free[s] : compute_free[s];
    const std::int64_t start = std::max(resource, ready);
    const std::int64_t end = start + comm.count();
    resource = end;
    per_stage[s].push_back({s, c, mb, TaskKind::kSendRecv, Nanos(start), Nanos(end)});
    return end;
  };

  for (bool progress = true; progress;) {
    progress = false;
    for (std::int64_t s = 0; s < p; ++s) {
      while (next[s] < programs[s].size()) {
        const Step& t = programs[s][next[s]];
        const std::int64_t c = t.chunk;
        const std::int64_t mb = t.microbatch;
        std::int64_t dep = 0;
        if (t.forward) {
          if (s > 0 || c > 0) {
            const std::int64_t up = s > 0 ? slot(s - 1, c, mb) : slot(p - 1, c - 1, mb);
            if (forward_out[up] < 0) break;
            dep = forward_out[up];
          }
          const std::int64_t start = std::max(compute_free[s], dep);
          const std::int64_t end = start + d.forward[s][c].count();
          per_stage[s].push_back({s, c, mb, TaskKind::kForward, Nanos(start), Nanos(end)});
          compute_free[s] = end;
          forward_end[slot(s, c, mb)] = end;
          const bool last = s == p - 1 && c == v - 1;
          forward_out[slot(s, c, mb)] = last ? end : emit_send(s, c, mb, end);
        } else {
          if (forward_end[slot(s, c, mb)] < 0) break;
          dep = forward_end[slot(s, c, mb)];
          if (s < p - 1 || c < v - 1) {
            const std::int64_t down = s < p - 1 ? slot(s + 1, c, mb) : slot(0, c + 1, mb);
            if (backward_out[down] < 0) break;
            dep = std::max(dep, backward_out[down]);
          }
          std::int64_t start = std::max(compute_free[s], dep);
          if (d.recompute[s][c].count() > 0) {
            const std::int64_t end = start + d.recompute[s][c].count();
            per_stage[s].push_back({s, c, mb, TaskKind::kRecompute, Nanos(start), Nanos(end)});
            start = end;
          }
          const std::int64_t end = start + d.backward[s][c].count();
          per_stage[s].push_back({s, c, mb, TaskKind::kBackward, Nanos(start), Nanos(end)});
          compute_free[s] = end;
          const bool last = s == 0 && c == 0;
          backward_out[slot(s, c, mb)] = last ? end : emit_send(s, c, mb, end);
        }
        ++next[s];
        progress = true;
      }
    }
  }
  for (std::int64_t s = 0; s < p; ++s) {
    if (next[s] != programs[s].size()) {
      throw std::logic_error(fmt::format("schedule deadlocked at stage {}", s));
    }
  }

  ScheduleTrace trace;
  trace.kind = kind;
  trace.stages = p;
  trace.chunks = v;
  trace.micro_batches = m;
  std::int64_t busiest = 0;
  for (std::int64_t s = 0; s < p; ++s) {
    std::int64_t busy = 0;
    for (const auto& e : per_stage[s]) {
      trace.makespan = std::max(trace.makespan, e.end);
      if (e.kind != TaskKind::kSendRecv) busy += (e.end - e.start).count();
    }
    busiest = std::max(busiest, busy);
    trace.events.insert(trace.events.end(), per_stage[s].begin(), per_stage[s].end());
  }
  trace.bubble_ratio =
      trace.makespan.count() == 0
          ? 0.0
          : 1.0 - static_cast<double>(busiest) / static_cast<double>(trace.makespan.count());
  trace.peak_inflight = measure_inflight(trace);
  return trace;
}

std::pair<ScheduleTrace, ScheduleTrace> compare_overlap(const PipelinePlan& plan,
                                                        const ParallelStrategy& strategy,
                                                        const ChunkDurations& durations,
                                                        Nanos comm) {
  return {simulate(plan, strategy, durations, comm, ScheduleKind::kInterleaved1F1B),
          simulate(plan, strategy, durations, comm, ScheduleKind::kInterleaved1F1BOverlap)};
}

StageChunkMatrix<std::int64_t> measure_inflight(const ScheduleTrace& trace) {
  StageChunkMatrix<std::int64_t> peak(trace.stages, std::vector<std::int64_t>(trace.chunks, 0));
  std::vector<std::vector<const TaskEvent*>> by_stage(trace.stages);
  for (const auto& e : trace.events) {
    if (e.kind == TaskKind::kForward || e.kind == TaskKind::kBackward) {
      by_stage.at(e.stage).push_back(&e);
    }
  }
  for (std::int64_t s = 0; s < trace.stages; ++s) {
    auto& events = by_stage[s];
    std::stable_sort(events.begin(), events.end(),
                     [](const TaskEvent* a, const TaskEvent* b) { return a->start < b->start; });
    std::vector<std::int64_t> live(trace.chunks, 0);
    for (const TaskEvent* e : events) {
      auto& n = live.at(e->chunk);
      if (e->kind == TaskKind::kForward) {
        peak[s][e->chunk] = std::max(peak[s][e->chunk], ++n);
      } else {
        --n;
      }
    }
  }
  return peak;
}

}  // namespace moeplan
