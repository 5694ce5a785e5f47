// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "moeplan/types.h"
#include "moeplan/units.h"

namespace moeplan {

enum class TaskKind : std::uint8_t { kForward, kBackward, kRecompute, kSendRecv };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

// A send_recv event belongs to the sending stage; it carries the chunk and
// micro-batch of the forward or backward that produced the tensor.
struct TaskEvent {
  std::int64_t stage = 0;
  std::int64_t chunk = 0;
  std::int64_t microbatch = 0;
  TaskKind kind = TaskKind::kForward;
  Nanos start{0};
  Nanos end{0};

  double start_sec() const { return to_seconds(start); }
  double end_sec() const { return to_seconds(end); }
  bool operator==(const TaskEvent&) const = default;
};

struct ScheduleTrace {
  ScheduleKind kind = ScheduleKind::kInterleaved1F1B;
  std::int64_t stages = 0;
  std::int64_t chunks = 0;
  std::int64_t micro_batches = 0;
  // Grouped by stage; each stage's events appear in issue order.
  std::vector<TaskEvent> events;
  Nanos makespan{0};
  double bubble_ratio = 0;
  StageChunkMatrix<std::int64_t> peak_inflight;

  double makespan_sec() const { return to_seconds(makespan); }
};

// Runs the static per-stage program of `kind` through a max-plus event loop.
//
// Each stage executes one task at a time in a fixed issue order. A forward of
// (s, c, mb) waits for the forward of (s-1, c, mb), or of (p-1, c-1, mb) at a
// chunk boundary; backwards mirror that in reverse and also wait for their own
// forward. Recompute, when its duration is non-zero, runs right before the
// backward. A send of `comm` follows every forward and backward whose
// consumer lives on another (stage, chunk); without overlap it occupies the
// sender's compute resource, with interleaved_1f1b_overlap it runs on a
// per-stage communication resource instead.
//
// Throws InconsistentPlan when durations or the plan disagree with the
// strategy's (pp, vpp), or a duration is negative; UnsupportedSchedule for
// one_f_one_b with vpp > 1.
ScheduleTrace simulate(const PipelinePlan& plan, const ParallelStrategy& strategy,
                       const ChunkDurations& durations, Nanos comm, ScheduleKind kind);

// (interleaved_1f1b, interleaved_1f1b_overlap) on identical inputs.
std::pair<ScheduleTrace, ScheduleTrace> compare_overlap(const PipelinePlan& plan,
                                                        const ParallelStrategy& strategy,
                                                        const ChunkDurations& durations,
                                                        Nanos comm);

// Peak count, per (stage, chunk), of micro-batches whose forward has run but
// whose backward has not started.
StageChunkMatrix<std::int64_t> measure_inflight(const ScheduleTrace& trace);

// Uniform per-chunk durations, convenient for schedule studies.
ChunkDurations uniform_durations(std::int64_t p, std::int64_t v, Nanos forward, Nanos backward,
                                 Nanos recompute = Nanos(0));

}  // namespace moeplan
