// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

// Slow, obviously-correct reference implementations. None of them call the
// code they are used to check.

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "moeplan/balancer.h"
#include "moeplan/ep_comm.h"
#include "moeplan/types.h"

namespace moeplan::oracle {

struct ExhaustiveBalance {
  PipelinePlan plan;  // lexicographically smallest optimum
  Nanos objective{0};
  Bytes min_peak_memory = 0;  // over all plans, ignoring the cap
};

// Enumerates every composition of the layers into p*v non-empty chunk-major
// spans and every recompute mode per (stage, chunk). nullopt when no plan
// fits the cap.
std::optional<ExhaustiveBalance> exhaustive_balance(const BalanceProblem& problem,
                                                    Bytes* min_peak_memory = nullptr);

// Surrogate objective and per-stage memory totals of one plan, recomputed
// from the problem's fields.
Nanos objective_of(const BalanceProblem& problem, const PipelinePlan& plan);
std::vector<Bytes> stage_memory_of(const BalanceProblem& problem, const PipelinePlan& plan);

// Random heterogeneous or uniform instance with L <= 12, p <= 4, v <= 2.
BalanceProblem random_problem(std::mt19937_64& rng, bool uniform_layers);

// Minimum over every assignment of exactly `per_device` items per device of
// the maximum device load.
std::int64_t min_max_partition(const std::vector<std::int64_t>& costs, std::int64_t devices,
                               std::int64_t per_device);

// Number of (query, key) pairs a causal mask with document boundaries lets
// through, by walking the full total_len x total_len mask.
std::int64_t masked_pairs(const std::vector<std::int64_t>& doc_lengths);

struct TokenBytes {
  std::vector<Bytes> inter_sent;
  std::vector<Bytes> intra_sent;
  std::vector<Bytes> inter_received;
  std::vector<Bytes> intra_received;
};

// Walks every token of the routing table and books each hop.
TokenBytes count_ep_bytes(const RoutingTable& routing, const EpLayout& layout, EpMode mode);

}  // namespace moeplan::oracle
