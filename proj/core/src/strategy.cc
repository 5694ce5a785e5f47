// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeplan/strategy.h"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <tuple>

#include "moeplan/errors.h"

namespace moeplan {
namespace {

std::vector<std::int64_t> divisors(std::int64_t n) {
  std::vector<std::int64_t> out;
  for (std::int64_t d = 1; d * d <= n; ++d) {
    if (n % d != 0) continue;
    out.push_back(d);
    if (d != n / d) out.push_back(n / d);
  }
  std::sort(out.begin(), out.end());
  return out;
}

auto enumeration_key(const ParallelStrategy& s) {
  return std::tuple(s.dp, s.tp, s.pp, s.vpp, s.ep, s.op, s.micro_batch_size, s.sp_enabled);
}

auto tie_key(const ParallelStrategy& s) {
  return std::tuple(s.pp, s.tp, s.ep, s.dp, s.vpp, s.op, s.micro_batch_size, s.sp_enabled);
}

Bytes memory_cap(const TrainingJob& job, const ClusterTopology& cluster) {
  return job.max_device_memory_bytes > 0 ? job.max_device_memory_bytes
                                         : cluster.device_memory_bytes;
}

RankedCandidate evaluate_one(const ParallelStrategy& s, const ModelConfig& model,
                             const ClusterTopology& cluster, const TrainingJob& job) {
  const Bytes cap = memory_cap(job, cluster);
  RankedCandidate out;
  out.strategy = s;
  for (RecomputeMode mode : kAllRecomputeModes) {
    const PipelinePlan plan = even_plan(model.num_layers, s.pp, s.vpp, mode);
    out.estimate = step_time_estimate(model, s, plan, job, cluster);
    out.recompute = mode;
    if (out.estimate.memory.total <= cap) {
      out.feasible = true;
      break;
    }
  }
  return out;
}

}  // namespace

SpMode parse_sp_mode(std::string_view text) {
  for (auto m : {SpMode::kAuto, SpMode::kOff, SpMode::kOn, SpMode::kBoth}) {
    if (to_string(m) == text) return m;
  }
  throw ParseError(fmt::format("unknown sp mode '{}' (auto, off, on, both)", text));
}

std::string_view to_string(SpMode mode) {
  switch (mode) {
    case SpMode::kAuto:
      return "auto";
    case SpMode::kOff:
      return "off";
    case SpMode::kOn:
      return "on";
    case SpMode::kBoth:
      return "both";
  }
  return "auto";
}

std::vector<ParallelStrategy> enumerate(const ModelConfig& model, const ClusterTopology& cluster,
                                        const TrainingJob& job, const SearchLimits& limits) {
  validate(model);
  validate(cluster);
  validate(job);
  const std::int64_t world = cluster.world_size();
  const std::int64_t max_tp = std::min(limits.max_tp > 0 ? limits.max_tp : cluster.devices_per_node,
                                       cluster.devices_per_node);
  const std::int64_t max_pp = limits.max_pp > 0 ? limits.max_pp : world;
  const std::int64_t max_ep = limits.max_ep > 0 ? limits.max_ep : world;

  std::vector<ParallelStrategy> out;
  for (std::int64_t tp : divisors(world)) {
    if (tp > max_tp) break;
    for (std::int64_t pp : divisors(world / tp)) {
      if (pp > std::max(max_pp, limits.pin_pp)) break;
      if (limits.pin_pp > 0 && pp != limits.pin_pp) continue;
      const std::int64_t dp = world / tp / pp;
      if (job.global_batch % dp != 0) continue;
      const std::int64_t per_replica = job.global_batch / dp;
      std::vector<bool> sp_options;
      switch (limits.sp_mode) {
        case SpMode::kAuto:
          sp_options = {tp > 1};
          break;
        case SpMode::kOff:
          sp_options = {false};
          break;
        case SpMode::kOn:
          sp_options = {tp > 1};
          break;
        case SpMode::kBoth:
          sp_options = tp > 1 ? std::vector<bool>{false, true} : std::vector<bool>{false};
          break;
      }
      for (std::int64_t vpp = 1; vpp <= std::max(limits.max_vpp, limits.pin_vpp); ++vpp) {
        if (model.num_layers < pp * vpp) break;
        if (limits.pin_vpp > 0 && vpp != limits.pin_vpp) continue;
        for (std::int64_t ep : divisors(dp)) {
          if (ep > max_ep) break;
          if (model.num_routed_experts % ep != 0) continue;
          for (std::int64_t op : divisors(dp)) {
            if (limits.max_op > 0 && op > limits.max_op) break;
            for (std::int64_t mbs : divisors(per_replica)) {
              if (mbs > limits.max_micro_batch_size) break;
              if (limits.pin_micro_batches > 0 && per_replica / mbs != limits.pin_micro_batches) {
                continue;
              }
              for (bool sp : sp_options) {
                ParallelStrategy s;
                s.dp = dp;
                s.tp = tp;
                s.pp = pp;
                s.vpp = vpp;
                s.ep = ep;
                s.op = op;
                s.micro_batch_size = mbs;
                s.num_micro_batches = per_replica / mbs;
                s.sp_enabled = sp;
                out.push_back(s);
              }
            }
          }
        }
      }
    }
  }
  if (out.empty()) {
    throw EmptySearchSpace(
        fmt::format("no strategy fits world size {} and global batch {}", world, job.global_batch));
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return enumeration_key(a) < enumeration_key(b); });
  return out;
}

std::vector<RankedCandidate> evaluate(const std::vector<ParallelStrategy>& candidates,
                                      const ModelConfig& model, const ClusterTopology& cluster,
                                      const TrainingJob& job, unsigned threads) {
  std::vector<RankedCandidate> out(candidates.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, candidates.size()));

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (std::size_t i = next++; i < candidates.size() && !failed; i = next++) {
      try {
        out[i] = evaluate_one(candidates[i], model, cluster, job);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

bool rank_before(const RankedCandidate& a, const RankedCandidate& b) {
  if (a.estimate.step_time != b.estimate.step_time) {
    return a.estimate.step_time < b.estimate.step_time;
  }
  return tie_key(a.strategy) < tie_key(b.strategy);
}

std::vector<RankedCandidate> rank(const std::vector<ParallelStrategy>& candidates,
                                  const ModelConfig& model, const ClusterTopology& cluster,
                                  const TrainingJob& job, std::int64_t top_k, unsigned threads) {
  auto all = evaluate(candidates, model, cluster, job, threads);
  std::erase_if(all, [](const RankedCandidate& c) { return !c.feasible; });
  std::sort(all.begin(), all.end(), rank_before);
  if (top_k >= 0 && static_cast<std::int64_t>(all.size()) > top_k) all.resize(top_k);
  for (std::size_t i = 0; i < all.size(); ++i) all[i].rank = static_cast<std::int64_t>(i) + 1;
  return all;
}

}  // namespace moeplan
