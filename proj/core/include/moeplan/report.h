// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "moeplan/balancer.h"
#include "moeplan/config.h"
#include "moeplan/pipeline_sim.h"
#include "moeplan/planner.h"
#include "moeplan/strategy.h"
#include "moeplan/types.h"

namespace moeplan {

std::string tool_version();

// Re-emits any JSON document canonically: keys sorted, no whitespace,
// floating-point values rounded to 6 significant digits, integers verbatim.
// Throws ParseError on malformed input.
std::string canonical_json(std::string_view json_text);

// 64-bit FNV-1a, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

// Canonical JSON of everything that determines a `plan` run.
std::string inputs_document(const ModelConfig& model, const ClusterTopology& cluster,
                            const TrainingJob& job, const SearchLimits& limits, std::int64_t top_k);

// Simulation of one balanced candidate. `rank` refers to the candidate list;
// `objective` is the balancer's surrogate and `step_time` the simulated
// makespan plus gradient sync.
struct TraceSummary {
  std::int64_t rank = 0;
  ScheduleKind kind = ScheduleKind::kInterleaved1F1B;
  Nanos objective{0};
  Nanos step_time{0};
  Nanos makespan{0};
  double bubble_ratio = 0;
  StageChunkMatrix<std::int64_t> peak_inflight;
};

TraceSummary summarize(const ScheduleTrace& trace);
TraceSummary summarize(const RealizedPlan& plan, std::int64_t rank);

struct ChosenPlan {
  std::int64_t rank = 0;
  ParallelStrategy strategy;
  BalanceResult result;
};

struct PlanReport {
  std::string tool_version;
  std::string inputs_digest;
  std::string inputs_json;  // canonical; embedded as an object
  std::int64_t evaluated = 0;
  std::int64_t infeasible = 0;
  std::vector<RankedCandidate> candidates;
  std::optional<ChosenPlan> chosen;
  std::vector<TraceSummary> traces;
};

// Schema "moeplan.report/1". Times appear twice: exact integer *_ns fields,
// which parse_report reads, and 6-digit *_sec fields for people.
std::string emit_report(const PlanReport& report);
PlanReport parse_report(std::string_view text);

// Everything `simulate` needs to replay a balanced plan. Schema
// "moeplan.plan/1".
struct PlanFile {
  ParallelStrategy strategy;
  ScheduleKind schedule = ScheduleKind::kInterleaved1F1BOverlap;
  BalanceResult result;
  ChunkDurations durations;
  Nanos send{0};
};

std::string emit_plan_file(const PlanFile& plan);
PlanFile parse_plan_file(std::string_view text);

// Schema "moeplan.trace/1"; event times are integer nanoseconds.
std::string emit_trace(const ScheduleTrace& trace);
ScheduleTrace parse_trace(std::string_view text);

enum class GanttFormat : std::uint8_t { kSvg, kText };
GanttFormat parse_gantt_format(std::string_view text);

// One lane per stage. SVG: a rect per event with class F, B, R or C (sends
// drawn as a thin bar along the lane bottom) and a <title> naming the
// micro-batch and chunk. Text: `columns` cells per lane, each showing the
// compute task covering the cell's midpoint. Throws EmptyTrace for a trace
// without events or duration.
std::string render_gantt(const ScheduleTrace& trace, GanttFormat format, int columns = 96);

}  // namespace moeplan
