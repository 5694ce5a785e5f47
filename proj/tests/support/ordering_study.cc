// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "ordering_study.h"

#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "moeplan/units.h"

namespace moeplan::testing {
namespace {

using nlohmann::json;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return json::parse(in);
}

}  // namespace

OrderingStudy load_ordering_study(const std::string& fixture_dir) {
  const std::string dir = fixture_dir + "/step_time_ordering/";
  const json setup = read_json(dir + "setup.json");

  OrderingStudy study;
  study.model = preset(setup.at("model_preset").get<std::string>());
  study.model.seq_len = setup.at("seq_len").get<std::int64_t>();
  study.cluster = load_cluster_file(fixture_dir + "/" + setup.at("cluster").get<std::string>());
  study.job.global_batch = setup.at("global_batch").get<std::int64_t>();
  study.job.seq_len = study.model.seq_len;
  study.job.max_device_memory_bytes =
      static_cast<Bytes>(parse_byte_quantity(setup.at("mem_limit").get<std::string>()).value());
  study.schedule = parse_schedule_kind(setup.at("schedule").get<std::string>());
  const json& search = setup.at("search");
  study.limits.pin_pp = search.at("pp").get<std::int64_t>();
  study.limits.pin_vpp = search.at("vpp").get<std::int64_t>();
  study.limits.pin_micro_batches = search.at("micro_batches").get<std::int64_t>();
  study.top_k = search.at("top_k").get<std::int64_t>();

  for (const auto& file : setup.at("experts")) {
    const json e = read_json(dir + file.get<std::string>());
    HandPlan h;
    h.name = e.at("name").get<std::string>();
    const json& s = e.at("strategy");
    h.strategy.dp = s.at("dp");
    h.strategy.tp = s.at("tp");
    h.strategy.pp = s.at("pp");
    h.strategy.vpp = s.at("vpp");
    h.strategy.ep = s.at("ep");
    h.strategy.op = s.at("op");
    h.strategy.micro_batch_size = s.at("micro_batch_size");
    h.strategy.num_micro_batches = s.at("num_micro_batches");
    h.strategy.sp_enabled = s.at("sp_enabled");
    h.plan.layer_counts = e.at("layer_counts").get<StageChunkMatrix<std::int64_t>>();
    for (const auto& row : e.at("recompute")) {
      std::vector<RecomputeMode> modes;
      for (const auto& m : row) modes.push_back(parse_recompute_mode(m.get<std::string>()));
      h.plan.recompute.push_back(std::move(modes));
    }
    study.experts.push_back(std::move(h));
  }
  return study;
}

}  // namespace moeplan::testing
