// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace moeplan {

// One point of the parallelism search space. Rank order inside the world is
// tp (fastest), then dp, then pp; EP and OP groups nest inside DP.
struct ParallelStrategy {
  std::int64_t dp = 1;
  std::int64_t tp = 1;
  std::int64_t pp = 1;
  std::int64_t vpp = 1;
  std::int64_t ep = 1;
  std::int64_t op = 1;
  std::int64_t micro_batch_size = 1;
  std::int64_t num_micro_batches = 1;
  bool sp_enabled = false;

  bool operator==(const ParallelStrategy&) const = default;
};

std::string to_string(const ParallelStrategy& s);

enum class RecomputeMode : std::uint8_t { kNone = 0, kSelective = 1, kFull = 2 };
inline constexpr std::array<RecomputeMode, 3> kAllRecomputeModes{
    RecomputeMode::kNone, RecomputeMode::kSelective, RecomputeMode::kFull};

std::string_view to_string(RecomputeMode mode);
RecomputeMode parse_recompute_mode(std::string_view text);

template <typename T>
using StageChunkMatrix = std::vector<std::vector<T>>;  // [stage][chunk]

// Layer placement over p stages x v chunks. Layers are laid out chunk-major:
// chunk 0 of stages 0..p-1 first, then chunk 1, and so on, so every (stage,
// chunk) holds one contiguous span.
struct PipelinePlan {
  StageChunkMatrix<std::int64_t> layer_counts;
  StageChunkMatrix<RecomputeMode> recompute;

  std::int64_t stages() const { return static_cast<std::int64_t>(layer_counts.size()); }
  std::int64_t chunks() const {
    return layer_counts.empty() ? 0 : static_cast<std::int64_t>(layer_counts.front().size());
  }
  std::int64_t embedding_stage() const { return 0; }
  std::int64_t head_stage() const { return stages() - 1; }
  std::int64_t total_layers() const;
  // First layer index of (stage, chunk) in the chunk-major layout.
  std::int64_t first_layer(std::int64_t stage, std::int64_t chunk) const;

  bool operator==(const PipelinePlan&) const = default;
};

// As-even-as-possible split; the first L mod (p*v) chunk-major positions get
// one extra layer.
PipelinePlan even_plan(std::int64_t num_layers, std::int64_t pp, std::int64_t vpp,
                       RecomputeMode mode);

enum class ScheduleKind : std::uint8_t {
  kGPipe,
  kOneFOneB,
  kInterleaved1F1B,
  kInterleaved1F1BOverlap,
};
inline constexpr std::array<ScheduleKind, 4> kAllScheduleKinds{
    ScheduleKind::kGPipe, ScheduleKind::kOneFOneB, ScheduleKind::kInterleaved1F1B,
    ScheduleKind::kInterleaved1F1BOverlap};

std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view text);

}  // namespace moeplan

namespace moeplan {

// Per (stage, chunk) task durations consumed by the pipeline simulator.
struct ChunkDurations {
  StageChunkMatrix<std::chrono::nanoseconds> forward;
  StageChunkMatrix<std::chrono::nanoseconds> backward;
  StageChunkMatrix<std::chrono::nanoseconds> recompute;
};

}  // namespace moeplan
