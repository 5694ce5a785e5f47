// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeplan/inflight.h"

#include <algorithm>
#include <vector>

#include "moeplan/errors.h"

namespace moeplan {
namespace {

// Chunk of the j-th forward (or backward) issued by any stage when micro-
// batches are processed in groups of p. `padded_m` is a multiple of p, and
// micro-batch ids >= m are phantoms that are never issued.
struct VirtualTask {
  std::int64_t chunk;
  std::int64_t microbatch;
};

VirtualTask forward_task(std::int64_t j, std::int64_t p, std::int64_t v) {
  const std::int64_t group = j / (p * v);
  const std::int64_t within = j % (p * v);
  return {within / p, group * p + within % p};
}

VirtualTask backward_task(std::int64_t j, std::int64_t p, std::int64_t v) {
  auto t = forward_task(j, p, v);
  t.chunk = v - 1 - t.chunk;
  return t;
}

StageChunkMatrix<std::int64_t> interleaved(std::int64_t p, std::int64_t v, std::int64_t m) {
  const std::int64_t padded_m = (m + p - 1) / p * p;
  const std::int64_t total = padded_m * v;
  StageChunkMatrix<std::int64_t> peak(p, std::vector<std::int64_t>(v, 0));
  for (std::int64_t s = 0; s < p; ++s) {
    const std::int64_t warmup = std::min(total, v == 1 ? p - s - 1 : 2 * (p - s - 1) + (v - 1) * p);
    std::vector<std::int64_t> live(v, 0);
    auto forward = [&](std::int64_t j) {
      auto t = forward_task(j, p, v);
      if (t.microbatch >= m) return;
      peak[s][t.chunk] = std::max(peak[s][t.chunk], ++live[t.chunk]);
    };
    auto backward = [&](std::int64_t j) {
      auto t = backward_task(j, p, v);
      if (t.microbatch >= m) return;
      --live[t.chunk];
    };
    for (std::int64_t j = 0; j < warmup; ++j) forward(j);
    // Steady state: the counts only grow on forwards, and cooldown only
    // drains, so the remaining backwards cannot raise the peak.
    for (std::int64_t j = 0; warmup + j < total; ++j) {
      forward(warmup + j);
      backward(j);
    }
  }
  return peak;
}

}  // namespace

StageChunkMatrix<std::int64_t> inflight_table(std::int64_t p, std::int64_t v, std::int64_t m,
                                              ScheduleKind kind) {
  if (p < 1 || v < 1 || m < 1) throw InvalidParams("inflight_table: p, v and m must be >= 1");
  switch (kind) {
    case ScheduleKind::kGPipe:
      return StageChunkMatrix<std::int64_t>(p, std::vector<std::int64_t>(v, m));
    case ScheduleKind::kOneFOneB: {
      if (v != 1) throw UnsupportedSchedule("one_f_one_b requires vpp == 1");
      StageChunkMatrix<std::int64_t> table(p, std::vector<std::int64_t>(1, 0));
      for (std::int64_t s = 0; s < p; ++s) table[s][0] = std::min(m, p - s);
      return table;
    }
    case ScheduleKind::kInterleaved1F1B:
    case ScheduleKind::kInterleaved1F1BOverlap:
      return interleaved(p, v, m);
  }
  throw UnsupportedSchedule("unknown schedule kind");
}

}  // namespace moeplan
