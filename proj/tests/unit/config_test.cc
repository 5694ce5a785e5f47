// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeplan/config.h"

#include <gtest/gtest.h>

#include "moeplan/errors.h"
#include "moeplan/units.h"

namespace moeplan {
namespace {

constexpr const char* k105B = R"(
num_layers: 45
hidden_size: 2560
num_heads: 32
num_routed_experts: 192
expert_intermediate_size: 1536
experts_per_token: 4
num_shared_experts: 1
vocab_size: 131072
)";

constexpr const char* kCluster = R"(
num_nodes: 512
devices_per_node: 8
device_memory_bytes: 64GiB
device_flops_per_sec: 280TFLOPS
intra_node_bandwidth_bytes_per_sec: 196GB/s
inter_node_latency_sec: 15us
inter_node_bandwidth_bytes_per_sec: 25GB/s
)";

TEST(ModelConfig, DocumentMatchesPreset) { EXPECT_EQ(load_model_config(k105B), preset("105B")); }

TEST(ModelConfig, DefaultsApplyToMissingOptionalKeys) {
  const ModelConfig m = load_model_config(k105B);
  EXPECT_EQ(m.seq_len, 4096);
  EXPECT_EQ(m.param_dtype_bytes, 2);
  EXPECT_EQ(m.master_dtype_bytes, 4);
}

TEST(ModelConfig, TopKAboveExpertCountNamesTheField) {
  const std::string doc = R"(
num_layers: 4
hidden_size: 64
num_heads: 4
num_routed_experts: 8
expert_intermediate_size: 128
experts_per_token: 9
num_shared_experts: 0
)";
  try {
    load_model_config(doc);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "experts_per_token");
  }
}

TEST(ModelConfig, HiddenSizeMustDivideByHeads) {
  ModelConfig m = preset("105B");
  m.num_heads = 7;
  EXPECT_THROW(validate(m), ValidationError);
}

TEST(ModelConfig, EmptyDocumentIsAParseError) {
  EXPECT_THROW(load_model_config(""), ParseError);
  EXPECT_THROW(load_model_config("   \n# only a comment\n"), ParseError);
}

TEST(ModelConfig, RejectsUnknownKeysAndNonScalars) {
  EXPECT_THROW(load_model_config(std::string(k105B) + "dropout: 0.1\n"), ParseError);
  EXPECT_THROW(load_model_config(std::string(k105B) + "extra:\n  nested: 1\n"), ParseError);
  EXPECT_THROW(load_model_config("num_layers: [1, 2]\n"), ParseError);
  EXPECT_THROW(load_model_config("num_layers: &a 4\nhidden_size: *a\n"), ParseError);
  EXPECT_THROW(load_model_config("num_layers: [unclosed\n"), ParseError);
}

TEST(ModelConfig, RejectsNonIntegerCounts) {
  EXPECT_THROW(load_model_config(std::string(k105B) + "seq_len: 4096.5\n"), Error);
  EXPECT_THROW(load_model_config(std::string(k105B) + "seq_len: lots\n"), Error);
}

TEST(ModelConfig, RoundTripsThroughItsDocument) {
  for (const auto& name : preset_names()) {
    ModelConfig m = preset(name);
    m.seq_len = 32768;
    EXPECT_EQ(load_model_config(to_document(m)), m) << name;
  }
}

TEST(Presets, MatchThePublishedRows) {
  const ModelConfig a = preset("105B");
  EXPECT_EQ(a.num_layers, 45);
  EXPECT_EQ(a.hidden_size, 2560);
  EXPECT_EQ(a.num_routed_experts, 192);
  EXPECT_EQ(a.experts_per_token, 4);

  const ModelConfig b = preset("438B");
  EXPECT_EQ(b.num_layers, 54);
  EXPECT_EQ(b.hidden_size, 5120);
  EXPECT_EQ(b.num_heads, 128);
  EXPECT_EQ(b.num_routed_experts, 256);
  EXPECT_EQ(b.expert_intermediate_size, 2048);
  EXPECT_EQ(b.experts_per_token, 8);
  EXPECT_EQ(b.num_shared_experts, 1);

  const ModelConfig c = preset("1119B");
  EXPECT_EQ(c.num_layers, 61);
  EXPECT_EQ(c.num_routed_experts, 384);
  EXPECT_EQ(c.expert_intermediate_size, 3072);
}

TEST(Presets, AllValidateAndUnknownNamesThrow) {
  ASSERT_EQ(preset_names().size(), 3u);
  for (const auto& name : preset_names()) EXPECT_NO_THROW(validate(preset(name)));
  EXPECT_THROW(preset("7B"), UnknownPreset);
}

TEST(ClusterTopology, ParsesUnitsAndWorldSize) {
  const ClusterTopology c = load_cluster(kCluster);
  EXPECT_EQ(c.world_size(), 4096);
  EXPECT_EQ(c.device_memory_bytes, 64 * kGiB);
  EXPECT_DOUBLE_EQ(c.device_flops_per_sec, 280e12);
  EXPECT_DOUBLE_EQ(c.inter_node_link.latency_sec, 15e-6);
  EXPECT_DOUBLE_EQ(c.inter_node_link.bandwidth_bytes_per_sec, 25e9);
  EXPECT_DOUBLE_EQ(c.intra_node_link.latency_sec, 0.0);
  EXPECT_DOUBLE_EQ(c.compute_efficiency, 1.0);
}

TEST(ClusterTopology, SingleNodeIsValid) {
  const ClusterTopology c = load_cluster(R"(
num_nodes: 1
devices_per_node: 8
device_memory_bytes: 64GiB
device_flops_per_sec: 1e15
intra_node_bandwidth_bytes_per_sec: 1e11
inter_node_bandwidth_bytes_per_sec: 1e10
)");
  EXPECT_EQ(c.world_size(), 8);
}

TEST(ClusterTopology, ZeroBandwidthIsRejected) {
  const std::string doc = std::string(kCluster) + "intra_node_bandwidth_bytes_per_sec: 0\n";
  // Duplicate keys are a parse error; build the zero-bandwidth document cleanly.
  EXPECT_THROW(load_cluster(doc), Error);
  const std::string zero = R"(
num_nodes: 1
devices_per_node: 8
device_memory_bytes: 64GiB
device_flops_per_sec: 1e15
intra_node_bandwidth_bytes_per_sec: 0
inter_node_bandwidth_bytes_per_sec: 1e10
)";
  try {
    load_cluster(zero);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "intra_node_link.bandwidth_bytes_per_sec");
  }
}

TEST(ClusterTopology, RoundTripsThroughItsDocument) {
  ClusterTopology c = load_cluster(kCluster);
  c.compute_efficiency = 0.4;
  c.intra_node_link.latency_sec = 5e-6;
  EXPECT_EQ(load_cluster(to_document(c)), c);
}

TEST(Units, ByteRateAndTimeSuffixes) {
  EXPECT_EQ(parse_byte_quantity("45GiB").value(), 45.0 * kGiB);
  EXPECT_EQ(parse_byte_quantity("45GB").value(), 45e9);
  EXPECT_EQ(parse_byte_quantity("1.5 MiB").value(), 1.5 * kMiB);
  EXPECT_EQ(parse_byte_quantity("1024").value(), 1024.0);
  EXPECT_FALSE(parse_byte_quantity("12 parsecs").has_value());
  EXPECT_FALSE(parse_byte_quantity("").has_value());
  EXPECT_EQ(parse_rate_quantity("25GB/s").value(), 25e9);
  EXPECT_DOUBLE_EQ(parse_time_quantity("15us").value(), 15e-6);
  EXPECT_DOUBLE_EQ(parse_time_quantity("2ms").value(), 2e-3);
  EXPECT_DOUBLE_EQ(parse_flops_quantity("280TFLOPS").value(), 280e12);
  EXPECT_EQ(from_seconds(1.5), Nanos(1'500'000'000));
  EXPECT_EQ(format_bytes(3 * kGiB), "3.00 GiB");
}

TEST(TrainingJob, NeedsAPositiveBatch) {
  TrainingJob job;
  job.seq_len = 4096;
  EXPECT_THROW(validate(job), ValidationError);
  job.global_batch = 1;
  EXPECT_NO_THROW(validate(job));
  job.max_device_memory_bytes = -1;
  EXPECT_THROW(validate(job), ValidationError);
}

}  // namespace
}  // namespace moeplan
