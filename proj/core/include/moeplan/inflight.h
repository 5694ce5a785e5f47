// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "moeplan/types.h"

namespace moeplan {

// Peak number of micro-batches whose forward activations for (stage, chunk)
// are held at once under `kind`, derived by counting over the schedule's
// per-stage issue order (no timing involved).
//
//   gpipe        every entry is m
//   one_f_one_b  min(m, p - s); v must be 1
//   interleaved  warmup of 2(p-s-1) + (v-1)p forwards, then 1F1B pairs;
//                v = 1 degenerates to one_f_one_b
//
// Throws UnsupportedSchedule for one_f_one_b with v > 1 and InvalidParams for
// non-positive sizes.
StageChunkMatrix<std::int64_t> inflight_table(std::int64_t p, std::int64_t v, std::int64_t m,
                                              ScheduleKind kind);

}  // namespace moeplan
