// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "moeplan/units.h"

namespace moeplan {

// Transformer / MoE hyperparameters. Every layer is an attention block
// followed by a MoE block with `num_routed_experts` routed experts (top-k
// routing) and `num_shared_experts` always-active experts.
struct ModelConfig {
  std::int64_t num_layers = 0;
  std::int64_t hidden_size = 0;
  std::int64_t num_heads = 0;
  std::int64_t vocab_size = 131072;
  std::int64_t seq_len = 4096;
  std::int64_t num_routed_experts = 0;
  std::int64_t expert_intermediate_size = 0;
  std::int64_t experts_per_token = 0;
  std::int64_t num_shared_experts = 0;
  std::int64_t param_dtype_bytes = 2;
  std::int64_t master_dtype_bytes = 4;

  bool operator==(const ModelConfig&) const = default;
};

struct LinkSpec {
  double latency_sec = 0;
  double bandwidth_bytes_per_sec = 0;

  bool operator==(const LinkSpec&) const = default;
};

struct ClusterTopology {
  std::int64_t num_nodes = 0;
  std::int64_t devices_per_node = 0;
  Bytes device_memory_bytes = 0;
  double device_flops_per_sec = 0;
  // Fraction of peak FLOP/s achieved by the model's kernels; the only
  // calibration knob of the cost model.
  double compute_efficiency = 1.0;
  LinkSpec intra_node_link;
  LinkSpec inter_node_link;

  std::int64_t world_size() const { return num_nodes * devices_per_node; }
  double effective_flops_per_sec() const { return device_flops_per_sec * compute_efficiency; }

  bool operator==(const ClusterTopology&) const = default;
};

struct TrainingJob {
  std::int64_t global_batch = 0;
  std::int64_t seq_len = 0;
  Bytes max_device_memory_bytes = 0;
};

// Throw ValidationError naming the offending field.
void validate(const ModelConfig& model);
void validate(const ClusterTopology& cluster);
void validate(const LinkSpec& link, const std::string& field);
void validate(const TrainingJob& job);

// Documents are a flat `key: scalar` subset of YAML. Unknown keys, nested
// values, anchors and aliases are rejected with ParseError; invariant
// violations raise ValidationError.
ModelConfig load_model_config(std::string_view text);
ClusterTopology load_cluster(std::string_view text);
ModelConfig load_model_config_file(const std::string& path);
ClusterTopology load_cluster_file(const std::string& path);

// Inverse of the loaders; re-parsing the output yields an equal value.
std::string to_document(const ModelConfig& model);
std::string to_document(const ClusterTopology& cluster);

// The three published model sizes: "105B", "438B", "1119B".
ModelConfig preset(std::string_view name);
std::vector<std::string> preset_names();

}  // namespace moeplan
