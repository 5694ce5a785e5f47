// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeplan/types.h"

#include <fmt/format.h>

#include "moeplan/errors.h"

namespace moeplan {

std::string to_string(const ParallelStrategy& s) {
  return fmt::format("dp={} tp={} pp={} vpp={} ep={} op={} mbs={} m={}{}", s.dp, s.tp, s.pp, s.vpp,
                     s.ep, s.op, s.micro_batch_size, s.num_micro_batches,
                     s.sp_enabled ? " sp" : "");
}

std::string_view to_string(RecomputeMode mode) {
  switch (mode) {
    case RecomputeMode::kNone:
      return "none";
    case RecomputeMode::kSelective:
      return "selective";
    case RecomputeMode::kFull:
      return "full";
  }
  return "none";
}

RecomputeMode parse_recompute_mode(std::string_view text) {
  for (auto mode : kAllRecomputeModes) {
    if (to_string(mode) == text) return mode;
  }
  throw ParseError(fmt::format("unknown recompute mode '{}'", text));
}

std::int64_t PipelinePlan::total_layers() const {
  std::int64_t total = 0;
  for (const auto& row : layer_counts) {
    for (auto n : row) total += n;
  }
  return total;
}

std::int64_t PipelinePlan::first_layer(std::int64_t stage, std::int64_t chunk) const {
  std::int64_t first = 0;
  for (std::int64_t c = 0; c <= chunk; ++c) {
    for (std::int64_t s = 0; s < stages(); ++s) {
      if (c == chunk && s == stage) return first;
      first += layer_counts[s][c];
    }
  }
  return first;
}

PipelinePlan even_plan(std::int64_t num_layers, std::int64_t pp, std::int64_t vpp,
                       RecomputeMode mode) {
  PipelinePlan plan;
  plan.layer_counts.assign(pp, std::vector<std::int64_t>(vpp, 0));
  plan.recompute.assign(pp, std::vector<RecomputeMode>(vpp, mode));
  const std::int64_t positions = pp * vpp;
  const std::int64_t base = num_layers / positions;
  const std::int64_t extra = num_layers % positions;
  for (std::int64_t k = 0; k < positions; ++k) {
    plan.layer_counts[k % pp][k / pp] = base + (k < extra ? 1 : 0);
  }
  return plan;
}

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kGPipe:
      return "gpipe";
    case ScheduleKind::kOneFOneB:
      return "one_f_one_b";
    case ScheduleKind::kInterleaved1F1B:
      return "interleaved_1f1b";
    case ScheduleKind::kInterleaved1F1BOverlap:
      return "interleaved_1f1b_overlap";
  }
  return "gpipe";
}

ScheduleKind parse_schedule_kind(std::string_view text) {
  for (auto kind : kAllScheduleKinds) {
    if (to_string(kind) == text) return kind;
  }
  throw UnsupportedSchedule(fmt::format("unknown schedule '{}'", text));
}

}  // namespace moeplan
