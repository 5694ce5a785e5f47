// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeplan/planner.h"

#include <fmt/format.h>

#include <algorithm>
#include <limits>
#include <utility>

#include "moeplan/cost_model.h"
#include "moeplan/errors.h"

namespace moeplan {
namespace {

RealizedPlan replay(const ParallelStrategy& strategy, BalanceResult result,
                    const BalanceProblem& problem, const ModelConfig& model,
                    const ClusterTopology& cluster, const TrainingJob& job, ScheduleKind schedule) {
  RealizedPlan r;
  r.strategy = strategy;
  r.schedule = schedule;
  r.durations = plan_durations(problem, result.plan);
  r.send = timing_profile(model, strategy, job, cluster).send;
  r.dp_sync = dp_sync_time(model, strategy, result.plan, job, cluster);
  r.trace = simulate(result.plan, strategy, r.durations, r.send, schedule);
  r.result = std::move(result);
  return r;
}

}  // namespace

RealizedPlan realize(const ParallelStrategy& strategy, const ModelConfig& model,
                     const ClusterTopology& cluster, const TrainingJob& job,
                     ScheduleKind schedule) {
  BalanceResult result = balance(strategy, model, cluster, job, schedule);
  const BalanceProblem problem = balance_problem(strategy, model, cluster, job, schedule);
  return replay(strategy, std::move(result), problem, model, cluster, job, schedule);
}

RealizedPlan realize(const ParallelStrategy& strategy, const PipelinePlan& plan,
                     const ModelConfig& model, const ClusterTopology& cluster,
                     const TrainingJob& job, ScheduleKind schedule) {
  const BalanceProblem problem = balance_problem(strategy, model, cluster, job, schedule);
  if (plan.stages() != problem.stages || plan.chunks() != problem.chunks ||
      plan.total_layers() != static_cast<std::int64_t>(problem.layers.size())) {
    throw InconsistentPlan("plan shape does not match the strategy and model");
  }
  BalanceResult result;
  result.plan = plan;
  result.objective = plan_objective(problem, plan);
  result.per_stage_memory = plan_stage_memory(problem, plan);
  return replay(strategy, std::move(result), problem, model, cluster, job, schedule);
}

PlanSearch search_plans(const ModelConfig& model, const ClusterTopology& cluster,
                        const TrainingJob& job, const SearchLimits& limits, std::int64_t top_k,
                        ScheduleKind schedule, unsigned threads) {
  if (top_k < 1) throw InvalidParams("top_k must be >= 1");
  const auto evaluated =
      evaluate(enumerate(model, cluster, job, limits), model, cluster, job, threads);

  PlanSearch out;
  out.evaluated = static_cast<std::int64_t>(evaluated.size());
  Bytes lightest = std::numeric_limits<Bytes>::max();
  for (const auto& c : evaluated) {
    if (c.feasible) {
      out.ranked.push_back(c);
    } else {
      ++out.infeasible;
      lightest = std::min(lightest, c.estimate.memory.total);
    }
  }
  if (out.ranked.empty()) {
    const Bytes cap =
        job.max_device_memory_bytes > 0 ? job.max_device_memory_bytes : cluster.device_memory_bytes;
    throw Infeasible(fmt::format("none of {} strategies fits {} per device even with full "
                                 "recomputation; the lightest needs {}",
                                 out.evaluated, format_bytes(cap), format_bytes(lightest)),
                     lightest);
  }
  std::sort(out.ranked.begin(), out.ranked.end(), rank_before);
  if (static_cast<std::int64_t>(out.ranked.size()) > top_k) out.ranked.resize(top_k);
  for (std::size_t i = 0; i < out.ranked.size(); ++i) {
    out.ranked[i].rank = static_cast<std::int64_t>(i) + 1;
  }

  for (const auto& c : out.ranked) {
    try {
      RealizedPlan r = realize(c.strategy, model, cluster, job, schedule);
      if (!out.best || r.step_time() < out.realized[*out.best].second.step_time()) {
        out.best = out.realized.size();
      }
      out.realized.emplace_back(c.rank, std::move(r));
    } catch (const Infeasible& e) {
      // The even-plan estimate fit but no balanced plan does; the memory
      // accounting differs only in how layers are spread over stages.
      out.unbalanced.emplace_back(c.rank, e.what());
    }
  }
  return out;
}

}  // namespace moeplan
