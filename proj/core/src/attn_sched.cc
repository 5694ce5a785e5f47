// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeplan/attn_sched.h"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

#include "moeplan/errors.h"

namespace moeplan {
namespace {

void check_shape(std::size_t count, std::int64_t num_devices, std::int64_t samples_per_device) {
  if (num_devices < 1 || samples_per_device < 1 ||
      static_cast<std::int64_t>(count) != num_devices * samples_per_device) {
    throw ShapeMismatch(fmt::format("{} samples cannot fill {} devices x {} samples", count,
                                    num_devices, samples_per_device));
  }
}

std::vector<std::int64_t> loads_of(const std::vector<std::int64_t>& costs,
                                   const std::vector<std::int64_t>& device_of,
                                   std::int64_t num_devices) {
  std::vector<std::int64_t> loads(num_devices, 0);
  for (std::size_t i = 0; i < costs.size(); ++i) loads[device_of[i]] += costs[i];
  return loads;
}

// Swaps one sample on the most loaded device with a cheaper one elsewhere
// whenever both resulting loads stay below the old maximum. Each accepted
// swap lowers the sorted load vector, so the loop terminates.
void refine(const std::vector<std::int64_t>& costs, std::vector<std::int64_t>& device_of,
            std::vector<std::int64_t>& loads) {
  const std::size_t n = costs.size();
  for (bool improved = true; improved;) {
    improved = false;
    const auto top =
        static_cast<std::int64_t>(std::max_element(loads.begin(), loads.end()) - loads.begin());
    for (std::size_t a = 0; a < n && !improved; ++a) {
      if (device_of[a] != top) continue;
      for (std::size_t b = 0; b < n && !improved; ++b) {
        const std::int64_t other = device_of[b];
        if (other == top) continue;
        const std::int64_t delta = costs[a] - costs[b];
        if (delta <= 0 || loads[other] + delta >= loads[top]) continue;
        loads[top] -= delta;
        loads[other] += delta;
        std::swap(device_of[a], device_of[b]);
        improved = true;
      }
    }
  }
}

}  // namespace

std::int64_t SampleSpec::total_len() const {
  return std::accumulate(doc_lengths.begin(), doc_lengths.end(), std::int64_t{0});
}

std::int64_t sample_cost(const SampleSpec& sample) {
  if (sample.doc_lengths.empty()) throw InvalidParams("sample has no documents");
  std::int64_t cost = 0;
  for (auto len : sample.doc_lengths) {
    if (len < 1) throw InvalidParams("document lengths must be >= 1");
    cost += len * (len + 1) / 2;
  }
  return cost;
}

Assignment identity_assignment(const std::vector<std::int64_t>& costs, std::int64_t num_devices,
                               std::int64_t samples_per_device) {
  check_shape(costs.size(), num_devices, samples_per_device);
  Assignment a;
  a.num_devices = num_devices;
  a.samples_per_device = samples_per_device;
  a.device_of_sample.resize(costs.size());
  for (std::size_t i = 0; i < costs.size(); ++i) {
    a.device_of_sample[i] = static_cast<std::int64_t>(i) / samples_per_device;
  }
  a.loads = loads_of(costs, a.device_of_sample, num_devices);
  return a;
}

Assignment balance_costs(const std::vector<std::int64_t>& costs, std::int64_t num_devices,
                         std::int64_t samples_per_device) {
  check_shape(costs.size(), num_devices, samples_per_device);
  std::vector<std::size_t> order(costs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return costs[a] > costs[b]; });

  Assignment a;
  a.num_devices = num_devices;
  a.samples_per_device = samples_per_device;
  a.device_of_sample.assign(costs.size(), -1);
  a.loads.assign(num_devices, 0);
  std::vector<std::int64_t> slots(num_devices, samples_per_device);
  for (std::size_t i : order) {
    std::int64_t best = -1;
    for (std::int64_t d = 0; d < num_devices; ++d) {
      if (slots[d] > 0 && (best < 0 || a.loads[d] < a.loads[best])) best = d;
    }
    a.device_of_sample[i] = best;
    a.loads[best] += costs[i];
    --slots[best];
  }
  refine(costs, a.device_of_sample, a.loads);

  // LPT carries no guarantee against the incoming order, so the refined
  // identity start competes as well; LPT keeps ties.
  Assignment start = identity_assignment(costs, num_devices, samples_per_device);
  refine(costs, start.device_of_sample, start.loads);
  if (*std::max_element(start.loads.begin(), start.loads.end()) <
      *std::max_element(a.loads.begin(), a.loads.end())) {
    return start;
  }
  return a;
}

Assignment balance_samples(const std::vector<SampleSpec>& samples, std::int64_t num_devices,
                           std::int64_t samples_per_device) {
  std::vector<std::int64_t> costs;
  costs.reserve(samples.size());
  for (const auto& s : samples) costs.push_back(sample_cost(s));
  return balance_costs(costs, num_devices, samples_per_device);
}

Assignment balance_per_microbatch(const std::vector<std::int64_t>& costs, std::int64_t num_devices,
                                  std::int64_t samples_per_device, std::int64_t micro_batch_size) {
  check_shape(costs.size(), num_devices, samples_per_device);
  if (micro_batch_size < 1 || samples_per_device % micro_batch_size != 0) {
    throw ShapeMismatch("micro_batch_size must divide samples_per_device");
  }
  const std::size_t group = static_cast<std::size_t>(num_devices * micro_batch_size);
  Assignment out;
  out.num_devices = num_devices;
  out.samples_per_device = samples_per_device;
  out.device_of_sample.resize(costs.size());
  out.loads.assign(num_devices, 0);
  for (std::size_t first = 0; first < costs.size(); first += group) {
    const std::vector<std::int64_t> part(costs.begin() + first, costs.begin() + first + group);
    const Assignment a = balance_costs(part, num_devices, micro_batch_size);
    for (std::size_t i = 0; i < group; ++i) out.device_of_sample[first + i] = a.device_of_sample[i];
    for (std::int64_t d = 0; d < num_devices; ++d) out.loads[d] += a.loads[d];
  }
  return out;
}

double imbalance(const Assignment& assignment) {
  if (assignment.loads.empty()) return 1.0;
  const std::int64_t total =
      std::accumulate(assignment.loads.begin(), assignment.loads.end(), std::int64_t{0});
  if (total == 0) return 1.0;
  const double mean = static_cast<double>(total) / static_cast<double>(assignment.loads.size());
  const auto top = *std::max_element(assignment.loads.begin(), assignment.loads.end());
  return static_cast<double>(top) / mean;
}

}  // namespace moeplan
