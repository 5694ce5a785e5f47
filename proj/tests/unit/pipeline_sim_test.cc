// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeplan/pipeline_sim.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <tuple>

#include "moeplan/errors.h"
#include "moeplan/inflight.h"

namespace moeplan {
namespace {

struct Case {
  PipelinePlan plan;
  ParallelStrategy strategy;
  ChunkDurations durations;
};

Case uniform(std::int64_t p, std::int64_t v, std::int64_t m, Nanos f, Nanos b,
             Nanos rc = Nanos(0)) {
  Case c;
  c.plan = even_plan(p * v, p, v, rc.count() > 0 ? RecomputeMode::kFull : RecomputeMode::kNone);
  c.strategy.pp = p;
  c.strategy.vpp = v;
  c.strategy.num_micro_batches = m;
  c.durations = uniform_durations(p, v, f, b, rc);
  return c;
}

ScheduleTrace run(const Case& c, ScheduleKind kind, Nanos comm = Nanos(0)) {
  return simulate(c.plan, c.strategy, c.durations, comm, kind);
}

TEST(Simulate, TwoStagesFourMicroBatches) {
  const ScheduleTrace t = run(uniform(2, 1, 4, Nanos(1), Nanos(1)), ScheduleKind::kOneFOneB);
  EXPECT_EQ(t.makespan, Nanos(10));
  EXPECT_DOUBLE_EQ(t.bubble_ratio, 0.2);
  EXPECT_EQ(t.events.size(), 16u);
}

TEST(Simulate, SingleStageHasNoBubble) {
  for (std::int64_t m : {1, 3, 17}) {
    for (ScheduleKind kind : {ScheduleKind::kGPipe, ScheduleKind::kOneFOneB}) {
      const ScheduleTrace t = run(uniform(1, 1, m, Nanos(2), Nanos(3)), kind);
      EXPECT_EQ(t.bubble_ratio, 0.0);
      EXPECT_EQ(t.makespan, Nanos(5 * m));
    }
  }
}

TEST(Simulate, InterleavedBubbleClosedForm) {
  const ScheduleTrace t =
      run(uniform(4, 2, 16, Nanos(1), Nanos(1)), ScheduleKind::kInterleaved1F1B);
  EXPECT_EQ(t.makespan, Nanos(70));
  EXPECT_NEAR(t.bubble_ratio, 1.5 / 17.5, 1e-12);
}

TEST(Simulate, NonInterleavedMakespanClosedForm) {
  for (std::int64_t p : {2, 3, 5}) {
    for (std::int64_t m : {1, 2, 7, 16}) {
      for (ScheduleKind kind : {ScheduleKind::kGPipe, ScheduleKind::kOneFOneB}) {
        const ScheduleTrace t = run(uniform(p, 1, m, Nanos(3), Nanos(4)), kind);
        EXPECT_EQ(t.makespan, Nanos((m + p - 1) * 7)) << "p=" << p << " m=" << m;
      }
    }
  }
}

TEST(Simulate, ResourcesNeverRunTwoTasksAtOnce) {
  for (ScheduleKind kind : kAllScheduleKinds) {
    const std::int64_t v = kind == ScheduleKind::kGPipe || kind == ScheduleKind::kOneFOneB ? 1 : 3;
    const ScheduleTrace t = run(uniform(4, v, 9, Nanos(5), Nanos(7), Nanos(2)), kind, Nanos(3));
    // Sends own a separate resource only under overlap.
    const bool overlap = kind == ScheduleKind::kInterleaved1F1BOverlap;
    std::map<std::pair<std::int64_t, bool>, std::vector<std::pair<Nanos, Nanos>>> busy;
    for (const TaskEvent& e : t.events) {
      const bool comm_lane = overlap && e.kind == TaskKind::kSendRecv;
      busy[{e.stage, comm_lane}].push_back({e.start, e.end});
      EXPECT_LE(e.start, e.end);
      EXPECT_LE(e.end, t.makespan);
    }
    for (auto& [key, spans] : busy) {
      std::sort(spans.begin(), spans.end());
      for (std::size_t i = 1; i < spans.size(); ++i) {
        EXPECT_LE(spans[i - 1].second, spans[i].first) << to_string(kind) << " stage " << key.first;
      }
    }
  }
}

TEST(Simulate, DependenciesAreRespected) {
  for (ScheduleKind kind : kAllScheduleKinds) {
    const std::int64_t p = 3;
    const std::int64_t v = kind == ScheduleKind::kGPipe || kind == ScheduleKind::kOneFOneB ? 1 : 2;
    const std::int64_t m = 6;
    const ScheduleTrace t = run(uniform(p, v, m, Nanos(4), Nanos(6), Nanos(1)), kind, Nanos(2));
    std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t, TaskKind>, TaskEvent> at;
    for (const TaskEvent& e : t.events) {
      if (e.kind != TaskKind::kSendRecv) at[{e.stage, e.chunk, e.microbatch, e.kind}] = e;
    }
    ASSERT_EQ(at.size(), static_cast<std::size_t>(3 * p * v * m));
    auto get = [&](std::int64_t s, std::int64_t c, std::int64_t mb, TaskKind k) {
      return at.at({s, c, mb, k});
    };
    for (std::int64_t mb = 0; mb < m; ++mb) {
      for (std::int64_t c = 0; c < v; ++c) {
        for (std::int64_t s = 0; s < p; ++s) {
          const TaskEvent f = get(s, c, mb, TaskKind::kForward);
          const TaskEvent b = get(s, c, mb, TaskKind::kBackward);
          const TaskEvent r = get(s, c, mb, TaskKind::kRecompute);
          EXPECT_LE(f.end, r.start);
          EXPECT_LE(r.end, b.start);
          if (s > 0) {
            EXPECT_LE(get(s - 1, c, mb, TaskKind::kForward).end, f.start);
            EXPECT_LE(b.end, get(s - 1, c, mb, TaskKind::kBackward).start);
          } else if (c > 0) {
            EXPECT_LE(get(p - 1, c - 1, mb, TaskKind::kForward).end, f.start);
            EXPECT_LE(b.end, get(p - 1, c - 1, mb, TaskKind::kBackward).start);
          }
        }
      }
    }
  }
}

TEST(Simulate, RejectsMismatchedInputs) {
  Case c = uniform(2, 2, 4, Nanos(1), Nanos(1));
  EXPECT_THROW(run(c, ScheduleKind::kOneFOneB), UnsupportedSchedule);
  Case wrong = c;
  wrong.strategy.pp = 3;
  EXPECT_THROW(run(wrong, ScheduleKind::kInterleaved1F1B), InconsistentPlan);
  Case negative = c;
  negative.durations.forward[0][0] = Nanos(-1);
  EXPECT_THROW(run(negative, ScheduleKind::kInterleaved1F1B), InconsistentPlan);
  Case short_durations = c;
  short_durations.durations.backward.pop_back();
  EXPECT_THROW(run(short_durations, ScheduleKind::kInterleaved1F1B), InconsistentPlan);
}

TEST(Simulate, MicroBatchCountNeedNotDivideStages) {
  const ScheduleTrace t =
      run(uniform(4, 2, 10, Nanos(1), Nanos(2)), ScheduleKind::kInterleaved1F1B);
  std::int64_t forwards = 0;
  for (const auto& e : t.events) forwards += e.kind == TaskKind::kForward;
  EXPECT_EQ(forwards, 4 * 2 * 10);
}

TEST(CompareOverlap, NoCommunicationMeansNoDifference) {
  const Case c = uniform(4, 2, 8, Nanos(3), Nanos(5));
  const auto [plain, overlapped] = compare_overlap(c.plan, c.strategy, c.durations, Nanos(0));
  EXPECT_EQ(plain.makespan, overlapped.makespan);
}

TEST(CompareOverlap, SingleMicroBatchGivesEqualTraces) {
  const Case c = uniform(4, 1, 1, Nanos(3), Nanos(5));
  const auto [plain, overlapped] = compare_overlap(c.plan, c.strategy, c.durations, Nanos(2));
  EXPECT_EQ(plain.makespan, overlapped.makespan);
}

TEST(CompareOverlap, HidesBoundarySends) {
  for (std::int64_t m : {8, 16, 32}) {
    const std::int64_t p = 4;
    const Nanos comm(2);
    const Case c = uniform(p, 2, m, Nanos(5), Nanos(5));
    const auto [plain, overlapped] = compare_overlap(c.plan, c.strategy, c.durations, comm);
    EXPECT_LE(overlapped.makespan, plain.makespan);
    EXPECT_GE(plain.makespan - overlapped.makespan, (m - p) * 2 * comm) << "m=" << m;
  }
}

TEST(Inflight, TableExamples) {
  EXPECT_EQ(inflight_table(2, 1, 3, ScheduleKind::kGPipe),
            (StageChunkMatrix<std::int64_t>{{3}, {3}}));
  EXPECT_EQ(inflight_table(4, 1, 8, ScheduleKind::kOneFOneB),
            (StageChunkMatrix<std::int64_t>{{4}, {3}, {2}, {1}}));
  EXPECT_EQ(inflight_table(1, 1, 9, ScheduleKind::kOneFOneB),
            (StageChunkMatrix<std::int64_t>{{1}}));
  for (ScheduleKind kind : kAllScheduleKinds) {
    const std::int64_t v = kind == ScheduleKind::kOneFOneB ? 1 : 2;
    for (const auto& row : inflight_table(4, v, 1, kind)) {
      for (std::int64_t n : row) EXPECT_EQ(n, 1) << to_string(kind);
    }
  }
  EXPECT_THROW(inflight_table(4, 2, 8, ScheduleKind::kOneFOneB), UnsupportedSchedule);
  EXPECT_THROW(inflight_table(0, 1, 8, ScheduleKind::kGPipe), InvalidParams);
}

TEST(Inflight, TableMatchesMeasuredTraces) {
  for (ScheduleKind kind : kAllScheduleKinds) {
    for (std::int64_t p = 1; p <= 5; ++p) {
      for (std::int64_t v = 1; v <= 3; ++v) {
        if (kind == ScheduleKind::kOneFOneB && v > 1) continue;
        for (std::int64_t m : {std::int64_t{1}, std::int64_t{2}, p, 2 * p + 1, 3 * p}) {
          const ScheduleTrace t = run(uniform(p, v, m, Nanos(2), Nanos(3)), kind);
          EXPECT_EQ(measure_inflight(t), inflight_table(p, v, m, kind))
              << to_string(kind) << " p=" << p << " v=" << v << " m=" << m;
        }
      }
    }
  }
}

TEST(Inflight, GPipeAndOneFOneBShareAMakespanButNotMemory) {
  const Case c = uniform(4, 1, 8, Nanos(2), Nanos(2));
  const ScheduleTrace g = run(c, ScheduleKind::kGPipe);
  const ScheduleTrace o = run(c, ScheduleKind::kOneFOneB);
  EXPECT_EQ(g.makespan, o.makespan);
  EXPECT_NE(g.peak_inflight, o.peak_inflight);
}

TEST(TaskKind, NamesRoundTrip) {
  for (TaskKind k :
       {TaskKind::kForward, TaskKind::kBackward, TaskKind::kRecompute, TaskKind::kSendRecv}) {
    EXPECT_EQ(parse_task_kind(to_string(k)), k);
  }
  for (ScheduleKind k : kAllScheduleKinds) EXPECT_EQ(parse_schedule_kind(to_string(k)), k);
  EXPECT_THROW(parse_schedule_kind("zero_bubble"), UnsupportedSchedule);
}

}  // namespace
}  // namespace moeplan
