// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeplan/config.h"

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "moeplan/errors.h"

namespace moeplan {
namespace {

using FlatDoc = std::map<std::string, std::string>;

FlatDoc parse_flat(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ParseError(fmt::format("malformed document: {}", e.what()));
  }
  if (!root || root.IsNull()) throw ParseError("empty document");
  if (!root.IsMap()) throw ParseError("document must be a mapping of key: value pairs");

  FlatDoc doc;
  for (const auto& entry : root) {
    if (!entry.first.IsScalar()) throw ParseError("keys must be scalars");
    const auto key = entry.first.Scalar();
    if (!entry.second.IsScalar()) {
      throw ParseError(fmt::format("{}: only scalar values are allowed", key));
    }
    if (!doc.emplace(key, entry.second.Scalar()).second) {
      throw ParseError(fmt::format("{}: duplicate key", key));
    }
  }
  return doc;
}

// yaml-cpp resolves aliases transparently, so reject the syntax up front.
void reject_anchors(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    auto value = line.substr(colon + 1);
    auto first = value.find_first_not_of(" \t");
    if (first != std::string::npos && (value[first] == '&' || value[first] == '*')) {
      throw ParseError("anchors and aliases are not supported");
    }
  }
}

std::optional<double> parse_plain(std::string_view text) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

class FieldReader {
 public:
  explicit FieldReader(FlatDoc doc) : doc_(std::move(doc)) {}

  std::optional<std::string> take(const std::string& key) {
    auto it = doc_.find(key);
    if (it == doc_.end()) return std::nullopt;
    auto value = it->second;
    doc_.erase(it);
    return value;
  }

  std::int64_t count(const std::string& key, std::optional<std::int64_t> fallback) {
    auto raw = take(key);
    if (!raw) return required(key, fallback);
    auto parsed = parse_plain(*raw);
    if (!parsed) throw ParseError(fmt::format("{}: expected an integer, got '{}'", key, *raw));
    double v = *parsed;
    if (v != std::floor(v)) throw ValidationError(key, "must be an integer");
    return static_cast<std::int64_t>(v);
  }

  double number(const std::string& key, std::optional<double> fallback,
                const std::function<std::optional<double>(std::string_view)>& parser) {
    auto raw = take(key);
    if (!raw) return required(key, fallback);
    auto parsed = parser(*raw);
    if (!parsed) throw ParseError(fmt::format("{}: cannot parse '{}'", key, *raw));
    return *parsed;
  }

  void expect_consumed() const {
    if (!doc_.empty()) throw ParseError(fmt::format("unknown key '{}'", doc_.begin()->first));
  }

 private:
  template <typename T>
  T required(const std::string& key, std::optional<T> fallback) {
    if (!fallback) throw ParseError(fmt::format("missing required key '{}'", key));
    return *fallback;
  }

  FlatDoc doc_;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(fmt::format("cannot open '{}'", path));
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// %.17g round-trips every double.
std::string exact(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

void validate(const ModelConfig& m) {
  auto positive = [](std::int64_t v, const char* field) {
    if (v < 1) throw ValidationError(field, "must be >= 1");
  };
  positive(m.num_layers, "num_layers");
  positive(m.hidden_size, "hidden_size");
  positive(m.num_heads, "num_heads");
  positive(m.vocab_size, "vocab_size");
  positive(m.seq_len, "seq_len");
  positive(m.num_routed_experts, "num_routed_experts");
  positive(m.expert_intermediate_size, "expert_intermediate_size");
  positive(m.experts_per_token, "experts_per_token");
  positive(m.param_dtype_bytes, "param_dtype_bytes");
  positive(m.master_dtype_bytes, "master_dtype_bytes");
  if (m.num_shared_experts < 0) throw ValidationError("num_shared_experts", "must be >= 0");
  if (m.hidden_size % m.num_heads != 0) {
    throw ValidationError("hidden_size", "must be divisible by num_heads");
  }
  if (m.experts_per_token > m.num_routed_experts) {
    throw ValidationError("experts_per_token", "must not exceed num_routed_experts");
  }
}

void validate(const LinkSpec& link, const std::string& field) {
  if (!(link.latency_sec >= 0) || !std::isfinite(link.latency_sec)) {
    throw ValidationError(field + ".latency_sec", "must be >= 0");
  }
  if (!(link.bandwidth_bytes_per_sec > 0) || !std::isfinite(link.bandwidth_bytes_per_sec)) {
    throw ValidationError(field + ".bandwidth_bytes_per_sec", "must be > 0");
  }
}

void validate(const ClusterTopology& c) {
  if (c.num_nodes < 1) throw ValidationError("num_nodes", "must be >= 1");
  if (c.devices_per_node < 1) throw ValidationError("devices_per_node", "must be >= 1");
  if (c.device_memory_bytes <= 0) throw ValidationError("device_memory_bytes", "must be > 0");
  if (!(c.device_flops_per_sec > 0)) throw ValidationError("device_flops_per_sec", "must be > 0");
  if (!(c.compute_efficiency > 0) || c.compute_efficiency > 1) {
    throw ValidationError("compute_efficiency", "must be in (0, 1]");
  }
  validate(c.intra_node_link, "intra_node_link");
  validate(c.inter_node_link, "inter_node_link");
}

void validate(const TrainingJob& job) {
  if (job.global_batch < 1) throw ValidationError("global_batch", "must be >= 1");
  if (job.seq_len < 1) throw ValidationError("seq_len", "must be >= 1");
  // 0 means "the device memory of the cluster".
  if (job.max_device_memory_bytes < 0) {
    throw ValidationError("max_device_memory_bytes", "must be >= 0");
  }
}

ModelConfig load_model_config(std::string_view text) {
  reject_anchors(text);
  FieldReader r(parse_flat(text));
  r.take("name");
  ModelConfig m;
  m.num_layers = r.count("num_layers", std::nullopt);
  m.hidden_size = r.count("hidden_size", std::nullopt);
  m.num_heads = r.count("num_heads", std::nullopt);
  m.vocab_size = r.count("vocab_size", ModelConfig{}.vocab_size);
  m.seq_len = r.count("seq_len", ModelConfig{}.seq_len);
  m.num_routed_experts = r.count("num_routed_experts", std::nullopt);
  m.expert_intermediate_size = r.count("expert_intermediate_size", std::nullopt);
  m.experts_per_token = r.count("experts_per_token", std::nullopt);
  m.num_shared_experts = r.count("num_shared_experts", ModelConfig{}.num_shared_experts);
  m.param_dtype_bytes = r.count("param_dtype_bytes", ModelConfig{}.param_dtype_bytes);
  m.master_dtype_bytes = r.count("master_dtype_bytes", ModelConfig{}.master_dtype_bytes);
  r.expect_consumed();
  validate(m);
  return m;
}

ClusterTopology load_cluster(std::string_view text) {
  reject_anchors(text);
  FieldReader r(parse_flat(text));
  r.take("name");
  ClusterTopology c;
  c.num_nodes = r.count("num_nodes", std::nullopt);
  c.devices_per_node = r.count("devices_per_node", std::nullopt);
  c.device_memory_bytes = static_cast<Bytes>(
      std::llround(r.number("device_memory_bytes", std::nullopt, parse_byte_quantity)));
  c.device_flops_per_sec = r.number("device_flops_per_sec", std::nullopt, parse_flops_quantity);
  c.compute_efficiency = r.number("compute_efficiency", 1.0, parse_plain);
  c.intra_node_link.latency_sec = r.number("intra_node_latency_sec", 0.0, parse_time_quantity);
  c.intra_node_link.bandwidth_bytes_per_sec =
      r.number("intra_node_bandwidth_bytes_per_sec", std::nullopt, parse_rate_quantity);
  c.inter_node_link.latency_sec = r.number("inter_node_latency_sec", 0.0, parse_time_quantity);
  c.inter_node_link.bandwidth_bytes_per_sec =
      r.number("inter_node_bandwidth_bytes_per_sec", std::nullopt, parse_rate_quantity);
  r.expect_consumed();
  validate(c);
  return c;
}

ModelConfig load_model_config_file(const std::string& path) {
  return load_model_config(read_file(path));
}

ClusterTopology load_cluster_file(const std::string& path) { return load_cluster(read_file(path)); }

std::string to_document(const ModelConfig& m) {
  return fmt::format(
      "num_layers: {}\nhidden_size: {}\nnum_heads: {}\nvocab_size: {}\nseq_len: {}\n"
      "num_routed_experts: {}\nexpert_intermediate_size: {}\nexperts_per_token: {}\n"
      "num_shared_experts: {}\nparam_dtype_bytes: {}\nmaster_dtype_bytes: {}\n",
      m.num_layers, m.hidden_size, m.num_heads, m.vocab_size, m.seq_len, m.num_routed_experts,
      m.expert_intermediate_size, m.experts_per_token, m.num_shared_experts, m.param_dtype_bytes,
      m.master_dtype_bytes);
}

std::string to_document(const ClusterTopology& c) {
  return fmt::format(
      "num_nodes: {}\ndevices_per_node: {}\ndevice_memory_bytes: {}\n"
      "device_flops_per_sec: {}\ncompute_efficiency: {}\n"
      "intra_node_latency_sec: {}\nintra_node_bandwidth_bytes_per_sec: {}\n"
      "inter_node_latency_sec: {}\ninter_node_bandwidth_bytes_per_sec: {}\n",
      c.num_nodes, c.devices_per_node, c.device_memory_bytes, exact(c.device_flops_per_sec),
      exact(c.compute_efficiency), exact(c.intra_node_link.latency_sec),
      exact(c.intra_node_link.bandwidth_bytes_per_sec), exact(c.inter_node_link.latency_sec),
      exact(c.inter_node_link.bandwidth_bytes_per_sec));
}

ModelConfig preset(std::string_view name) {
  ModelConfig m;
  m.vocab_size = 131072;
  m.num_shared_experts = 1;
  if (name == "105B") {
    m.num_layers = 45;
    m.hidden_size = 2560;
    m.num_heads = 32;
    m.num_routed_experts = 192;
    m.expert_intermediate_size = 1536;
    m.experts_per_token = 4;
  } else if (name == "438B") {
    m.num_layers = 54;
    m.hidden_size = 5120;
    m.num_heads = 128;
    m.num_routed_experts = 256;
    m.expert_intermediate_size = 2048;
    m.experts_per_token = 8;
  } else if (name == "1119B") {
    m.num_layers = 61;
    m.hidden_size = 5120;
    m.num_heads = 128;
    m.num_routed_experts = 384;
    m.expert_intermediate_size = 3072;
    m.experts_per_token = 8;
  } else {
    throw UnknownPreset(fmt::format("unknown preset '{}'", name));
  }
  return m;
}

std::vector<std::string> preset_names() { return {"105B", "438B", "1119B"}; }

}  // namespace moeplan
