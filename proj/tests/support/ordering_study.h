// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "moeplan/config.h"
#include "moeplan/strategy.h"
#include "moeplan/types.h"

namespace moeplan::testing {

struct HandPlan {
  std::string name;
  ParallelStrategy strategy;
  PipelinePlan plan;
};

// fixtures/step_time_ordering: one job plus hand-designed plans to compare
// the tool's own choice against.
struct OrderingStudy {
  ModelConfig model;
  ClusterTopology cluster;
  TrainingJob job;
  ScheduleKind schedule = ScheduleKind::kInterleaved1F1BOverlap;
  SearchLimits limits;
  std::int64_t top_k = 10;
  std::vector<HandPlan> experts;
};

OrderingStudy load_ordering_study(const std::string& fixture_dir);

}  // namespace moeplan::testing
