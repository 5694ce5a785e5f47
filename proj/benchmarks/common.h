// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "moeplan/config.h"
#include "moeplan/types.h"

namespace moeplan::bench {

// 512 nodes of 8 devices; mirrors fixtures/cluster_4096.yaml.
inline ClusterTopology cluster_4096() {
  ClusterTopology c;
  c.num_nodes = 512;
  c.devices_per_node = 8;
  c.device_memory_bytes = 64 * kGiB;
  c.device_flops_per_sec = 280e12;
  c.compute_efficiency = 0.4;
  c.intra_node_link = {5e-6, 196e9};
  c.inter_node_link = {15e-6, 25e9};
  return c;
}

inline TrainingJob job_16k() {
  TrainingJob j;
  j.global_batch = 16384;
  j.seq_len = 4096;
  j.max_device_memory_bytes = 45'000'000'000;
  return j;
}

inline ParallelStrategy pp8_v2_m64() {
  ParallelStrategy s;
  s.dp = 64;
  s.tp = 8;
  s.pp = 8;
  s.vpp = 2;
  s.ep = 8;
  s.op = 8;
  s.micro_batch_size = 4;
  s.num_micro_batches = 64;
  s.sp_enabled = true;
  return s;
}

}  // namespace moeplan::bench
