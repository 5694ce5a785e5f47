// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

namespace moeplan {

// A packed training sequence: documents concatenated back to back, separated
// by an end-of-document mask.
struct SampleSpec {
  std::vector<std::int64_t> doc_lengths;

  std::int64_t total_len() const;
};

// Causal attention scores with the cross-document mask:
// sum over documents of L (L + 1) / 2. Throws InvalidParams for empty samples
// or non-positive lengths.
std::int64_t sample_cost(const SampleSpec& sample);

struct Assignment {
  std::int64_t num_devices = 0;
  std::int64_t samples_per_device = 0;
  std::vector<std::int64_t> device_of_sample;
  std::vector<std::int64_t> loads;
};

// Sample i goes to device i / samples_per_device.
Assignment identity_assignment(const std::vector<std::int64_t>& costs, std::int64_t num_devices,
                               std::int64_t samples_per_device);

// Cardinality-constrained min-max partition: longest-processing-time greedy
// into devices with spare slots, then first-improvement pairwise swaps off
// the most loaded device until none lowers it. The same refinement is run
// from the identity order and the lower peak wins, so the result is never
// worse than identity. Ties go to the lower sample and device index.
// Throws ShapeMismatch unless |costs| = num_devices * samples_per_device.
Assignment balance_costs(const std::vector<std::int64_t>& costs, std::int64_t num_devices,
                         std::int64_t samples_per_device);
Assignment balance_samples(const std::vector<SampleSpec>& samples, std::int64_t num_devices,
                           std::int64_t samples_per_device);

// Balances each micro-batch (num_devices * micro_batch_size consecutive
// samples) on its own; loads accumulate over the step.
Assignment balance_per_microbatch(const std::vector<std::int64_t>& costs, std::int64_t num_devices,
                                  std::int64_t samples_per_device, std::int64_t micro_batch_size);

// Max load over mean load; 1.0 for an all-zero assignment.
double imbalance(const Assignment& assignment);

}  // namespace moeplan
