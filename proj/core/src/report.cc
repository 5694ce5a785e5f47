// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeplan/report.h"

#include <fmt/format.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <json.hpp>

#include "moeplan/errors.h"

#ifndef MOEPLAN_VERSION
#define MOEPLAN_VERSION "0.0.0"
#endif

namespace moeplan {
namespace {

using nlohmann::json;

double round6(double x) {
  if (!std::isfinite(x)) throw InvalidParams("non-finite value in report");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return std::strtod(buf, nullptr);
}

void canonicalize(json& j) {
  if (j.is_number_float()) {
    j = round6(j.get<double>());
  } else if (j.is_object() || j.is_array()) {
    for (auto& child : j) canonicalize(child);
  }
}

std::string dump(json j) {
  canonicalize(j);
  return j.dump();
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("malformed JSON: {}", e.what()));
  }
}

// Wraps nlohmann lookups so schema problems surface as ParseError.
template <typename T>
T field(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("field '{}': {}", key, e.what()));
  }
}

void expect_schema(const json& j, std::string_view schema) {
  if (!j.is_object() || !j.contains("schema") || j["schema"] != schema) {
    throw ParseError(fmt::format("expected a {} document", schema));
  }
}

json strategy_json(const ParallelStrategy& s) {
  return {{"dp", s.dp},
          {"tp", s.tp},
          {"pp", s.pp},
          {"vpp", s.vpp},
          {"ep", s.ep},
          {"op", s.op},
          {"micro_batch_size", s.micro_batch_size},
          {"num_micro_batches", s.num_micro_batches},
          {"sp_enabled", s.sp_enabled}};
}

ParallelStrategy strategy_from(const json& j) {
  ParallelStrategy s;
  s.dp = field<std::int64_t>(j, "dp");
  s.tp = field<std::int64_t>(j, "tp");
  s.pp = field<std::int64_t>(j, "pp");
  s.vpp = field<std::int64_t>(j, "vpp");
  s.ep = field<std::int64_t>(j, "ep");
  s.op = field<std::int64_t>(j, "op");
  s.micro_batch_size = field<std::int64_t>(j, "micro_batch_size");
  s.num_micro_batches = field<std::int64_t>(j, "num_micro_batches");
  s.sp_enabled = field<bool>(j, "sp_enabled");
  return s;
}

json memory_json(const MemoryBreakdown& m) {
  return {{"params", m.params},
          {"gradients", m.gradients},
          {"optimizer_states", m.optimizer_states},
          {"activations", m.activations},
          {"total", m.total}};
}

MemoryBreakdown memory_from(const json& j) {
  return {field<Bytes>(j, "params"), field<Bytes>(j, "gradients"),
          field<Bytes>(j, "optimizer_states"), field<Bytes>(j, "activations"),
          field<Bytes>(j, "total")};
}

void put_time(json& j, const std::string& name, Nanos t) {
  j[name + "_ns"] = t.count();
  j[name + "_sec"] = to_seconds(t);
}

Nanos time_from(const json& j, const std::string& name) {
  return Nanos(field<std::int64_t>(j, (name + "_ns").c_str()));
}

json estimate_json(const CostEstimate& e) {
  json j;
  put_time(j, "compute", e.compute);
  put_time(j, "bubble", e.bubble);
  put_time(j, "dp_comm", e.dp_comm);
  put_time(j, "tp_comm", e.tp_comm);
  put_time(j, "ep_comm", e.ep_comm);
  put_time(j, "pp_comm", e.pp_comm);
  put_time(j, "step_time", e.step_time);
  j["bubble_fraction"] = e.bubble_fraction();
  j["memory"] = memory_json(e.memory);
  return j;
}

CostEstimate estimate_from(const json& j) {
  CostEstimate e;
  e.compute = time_from(j, "compute");
  e.bubble = time_from(j, "bubble");
  e.dp_comm = time_from(j, "dp_comm");
  e.tp_comm = time_from(j, "tp_comm");
  e.ep_comm = time_from(j, "ep_comm");
  e.pp_comm = time_from(j, "pp_comm");
  e.step_time = time_from(j, "step_time");
  e.memory = memory_from(field<json>(j, "memory"));
  return e;
}

json modes_json(const StageChunkMatrix<RecomputeMode>& modes) {
  json out = json::array();
  for (const auto& row : modes) {
    json r = json::array();
    for (auto m : row) r.push_back(std::string(to_string(m)));
    out.push_back(r);
  }
  return out;
}

StageChunkMatrix<RecomputeMode> modes_from(const json& j) {
  StageChunkMatrix<RecomputeMode> out;
  for (const auto& row : j) {
    std::vector<RecomputeMode> r;
    for (const auto& m : row) {
      try {
        r.push_back(parse_recompute_mode(m.get<std::string>()));
      } catch (const json::exception& e) {
        throw ParseError(fmt::format("recompute: {}", e.what()));
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

json balance_json(const BalanceResult& r) {
  json offsets = json::array();
  for (std::int64_t s = 0; s < r.plan.stages(); ++s) {
    json row = json::array();
    for (std::int64_t c = 0; c < r.plan.chunks(); ++c) row.push_back(r.plan.first_layer(s, c));
    offsets.push_back(row);
  }
  json stages = json::array();
  for (const auto& m : r.per_stage_memory) stages.push_back(memory_json(m));
  json j{{"layer_counts", r.plan.layer_counts},
         {"recompute", modes_json(r.plan.recompute)},
         {"stage_offsets", offsets},
         {"proven_optimal", r.proven_optimal},
         {"per_stage_memory", stages}};
  put_time(j, "objective", r.objective);
  return j;
}

BalanceResult balance_from(const json& j) {
  BalanceResult r;
  r.plan.layer_counts = field<StageChunkMatrix<std::int64_t>>(j, "layer_counts");
  r.plan.recompute = modes_from(field<json>(j, "recompute"));
  r.objective = time_from(j, "objective");
  r.proven_optimal = field<bool>(j, "proven_optimal");
  for (const auto& m : field<json>(j, "per_stage_memory"))
    r.per_stage_memory.push_back(memory_from(m));
  if (r.plan.recompute.size() != r.plan.layer_counts.size()) {
    throw ParseError("layer_counts and recompute disagree in shape");
  }
  for (std::size_t s = 0; s < r.plan.recompute.size(); ++s) {
    if (r.plan.recompute[s].size() != r.plan.layer_counts[s].size()) {
      throw ParseError("layer_counts and recompute disagree in shape");
    }
  }
  return r;
}

json ns_matrix(const StageChunkMatrix<Nanos>& m) {
  json out = json::array();
  for (const auto& row : m) {
    json r = json::array();
    for (auto t : row) r.push_back(t.count());
    out.push_back(r);
  }
  return out;
}

StageChunkMatrix<Nanos> ns_matrix_from(const json& j) {
  StageChunkMatrix<Nanos> out;
  try {
    for (const auto& row : j) {
      std::vector<Nanos> r;
      for (const auto& t : row) r.emplace_back(t.get<std::int64_t>());
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("duration matrix: {}", e.what()));
  }
  return out;
}

json summary_json(const TraceSummary& t) {
  json j{{"rank", t.rank},
         {"kind", std::string(to_string(t.kind))},
         {"bubble_ratio", t.bubble_ratio},
         {"peak_inflight", t.peak_inflight}};
  put_time(j, "objective", t.objective);
  put_time(j, "step_time", t.step_time);
  put_time(j, "makespan", t.makespan);
  return j;
}

TraceSummary summary_from(const json& j) {
  TraceSummary t;
  t.rank = field<std::int64_t>(j, "rank");
  t.kind = parse_schedule_kind(field<std::string>(j, "kind"));
  t.objective = time_from(j, "objective");
  t.step_time = time_from(j, "step_time");
  t.makespan = time_from(j, "makespan");
  t.bubble_ratio = field<double>(j, "bubble_ratio");
  t.peak_inflight = field<StageChunkMatrix<std::int64_t>>(j, "peak_inflight");
  return t;
}

std::string_view svg_class(TaskKind kind) {
  switch (kind) {
    case TaskKind::kForward:
      return "F";
    case TaskKind::kBackward:
      return "B";
    case TaskKind::kRecompute:
      return "R";
    case TaskKind::kSendRecv:
      return "C";
  }
  return "C";
}

std::string render_svg(const ScheduleTrace& trace) {
  constexpr double kLeft = 72;
  constexpr double kRight = 16;
  constexpr double kTop = 28;
  constexpr double kLane = 30;
  constexpr double kPlot = 1200;
  const double width = kLeft + kPlot + kRight;
  const double height = kTop + kLane * static_cast<double>(trace.stages) + 24;
  const double scale = kPlot / static_cast<double>(trace.makespan.count());

  std::string out = fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{0:.0f}\" "
      "height=\"{1:.0f}\" viewBox=\"0 0 {0:.0f} {1:.0f}\">\n"
      "<style>.F{{fill:#4e79a7}}.B{{fill:#f28e2b}}.R{{fill:#b07aa1}}.C{{fill:#59a14f}}"
      "text{{font:11px monospace}}.lbl{{fill:#fff;font-size:9px}}</style>\n"
      "<text x=\"{2:.0f}\" y=\"16\">{3} p={4} v={5} m={6} makespan={7:.6g}s "
      "bubble={8:.4f}</text>\n",
      width, height, kLeft, to_string(trace.kind), trace.stages, trace.chunks, trace.micro_batches,
      trace.makespan_sec(), trace.bubble_ratio);
  for (std::int64_t s = 0; s < trace.stages; ++s) {
    const double y = kTop + kLane * static_cast<double>(s);
    out += fmt::format("<text x=\"4\" y=\"{:.1f}\">stage {}</text>\n", y + 18, s);
    out += fmt::format(
        "<line x1=\"{0:.0f}\" y1=\"{1:.1f}\" x2=\"{2:.0f}\" y2=\"{1:.1f}\" "
        "stroke=\"#ccc\"/>\n",
        kLeft, y + kLane, kLeft + kPlot);
  }
  for (const auto& e : trace.events) {
    const double x = kLeft + static_cast<double>(e.start.count()) * scale;
    const double w = static_cast<double>((e.end - e.start).count()) * scale;
    const double lane = kTop + kLane * static_cast<double>(e.stage);
    const bool comm = e.kind == TaskKind::kSendRecv;
    const double y = comm ? lane + kLane - 8 : lane + 2;
    const double h = comm ? 5 : kLane - 12;
    out += fmt::format(
        "<rect class=\"{}\" x=\"{:.2f}\" y=\"{:.1f}\" width=\"{:.2f}\" height=\"{:.0f}\">"
        "<title>{} mb={} chunk={} [{}, {}] ns</title></rect>\n",
        svg_class(e.kind), x, y, w, h, to_string(e.kind), e.microbatch, e.chunk, e.start.count(),
        e.end.count());
    if (!comm && w >= 18) {
      out += fmt::format("<text class=\"lbl\" x=\"{:.2f}\" y=\"{:.1f}\">{}{}.{}</text>\n", x + 2,
                         lane + 13, svg_class(e.kind), e.microbatch, e.chunk);
    }
  }
  out += "</svg>\n";
  return out;
}

std::string render_text(const ScheduleTrace& trace, int columns) {
  if (columns < 1) throw InvalidParams("render_gantt: columns must be >= 1");
  const double cell = static_cast<double>(trace.makespan.count()) / columns;
  std::vector<std::string> rows(trace.stages, std::string(columns, '.'));
  std::vector<std::vector<int>> rank(trace.stages, std::vector<int>(columns, 0));
  // Compute tasks outrank sends drawn on an idle cell.
  for (const auto& e : trace.events) {
    const bool comm = e.kind == TaskKind::kSendRecv;
    const char glyph = comm ? '~' : svg_class(e.kind)[0];
    const int weight = comm ? 1 : 2;
    for (int col = 0; col < columns; ++col) {
      const double mid = (col + 0.5) * cell;
      if (mid < static_cast<double>(e.start.count()) || mid >= static_cast<double>(e.end.count())) {
        continue;
      }
      if (weight > rank[e.stage][col]) {
        rows[e.stage][col] = glyph;
        rank[e.stage][col] = weight;
      }
    }
  }
  std::string out = fmt::format("{} p={} v={} m={} makespan={:.6g}s bubble={:.4f}\n",
                                to_string(trace.kind), trace.stages, trace.chunks,
                                trace.micro_batches, trace.makespan_sec(), trace.bubble_ratio);
  for (std::int64_t s = 0; s < trace.stages; ++s) {
    out += fmt::format("stage {:>3} |{}|\n", s, rows[s]);
  }
  out += "F forward  B backward  R recompute  ~ send  . idle\n";
  return out;
}

}  // namespace

std::string tool_version() { return fmt::format("moeplan {}", MOEPLAN_VERSION); }

std::string canonical_json(std::string_view json_text) { return dump(parse_json(json_text)); }

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

std::string inputs_document(const ModelConfig& model, const ClusterTopology& cluster,
                            const TrainingJob& job, const SearchLimits& limits,
                            std::int64_t top_k) {
  auto link = [](const LinkSpec& l) {
    return json{{"latency_sec", l.latency_sec},
                {"bandwidth_bytes_per_sec", l.bandwidth_bytes_per_sec}};
  };
  json j{{"model",
          {{"num_layers", model.num_layers},
           {"hidden_size", model.hidden_size},
           {"num_heads", model.num_heads},
           {"vocab_size", model.vocab_size},
           {"seq_len", model.seq_len},
           {"num_routed_experts", model.num_routed_experts},
           {"expert_intermediate_size", model.expert_intermediate_size},
           {"experts_per_token", model.experts_per_token},
           {"num_shared_experts", model.num_shared_experts},
           {"param_dtype_bytes", model.param_dtype_bytes},
           {"master_dtype_bytes", model.master_dtype_bytes}}},
         {"cluster",
          {{"num_nodes", cluster.num_nodes},
           {"devices_per_node", cluster.devices_per_node},
           {"device_memory_bytes", cluster.device_memory_bytes},
           {"device_flops_per_sec", cluster.device_flops_per_sec},
           {"compute_efficiency", cluster.compute_efficiency},
           {"intra_node_link", link(cluster.intra_node_link)},
           {"inter_node_link", link(cluster.inter_node_link)}}},
         {"job",
          {{"global_batch", job.global_batch},
           {"seq_len", job.seq_len},
           {"max_device_memory_bytes", job.max_device_memory_bytes}}},
         {"limits",
          {{"max_tp", limits.max_tp},
           {"max_pp", limits.max_pp},
           {"max_vpp", limits.max_vpp},
           {"max_ep", limits.max_ep},
           {"max_op", limits.max_op},
           {"max_micro_batch_size", limits.max_micro_batch_size},
           {"sp_mode", std::string(to_string(limits.sp_mode))},
           {"pin_pp", limits.pin_pp},
           {"pin_vpp", limits.pin_vpp},
           {"pin_micro_batches", limits.pin_micro_batches}}},
         {"top_k", top_k}};
  return dump(j);
}

TraceSummary summarize(const ScheduleTrace& trace) {
  TraceSummary t;
  t.kind = trace.kind;
  t.makespan = trace.makespan;
  t.step_time = trace.makespan;
  t.bubble_ratio = trace.bubble_ratio;
  t.peak_inflight = trace.peak_inflight;
  return t;
}

TraceSummary summarize(const RealizedPlan& plan, std::int64_t rank) {
  TraceSummary t = summarize(plan.trace);
  t.rank = rank;
  t.objective = plan.result.objective;
  t.step_time = plan.step_time();
  return t;
}

std::string emit_report(const PlanReport& report) {
  json candidates = json::array();
  for (const auto& c : report.candidates) {
    candidates.push_back({{"strategy", strategy_json(c.strategy)},
                          {"estimate", estimate_json(c.estimate)},
                          {"recompute", std::string(to_string(c.recompute))},
                          {"feasible", c.feasible},
                          {"rank", c.rank}});
  }
  json traces = json::array();
  for (const auto& t : report.traces) traces.push_back(summary_json(t));
  json j{{"schema", "moeplan.report/1"},
         {"tool_version", report.tool_version},
         {"inputs_digest", report.inputs_digest},
         {"inputs", report.inputs_json.empty() ? json::object() : parse_json(report.inputs_json)},
         {"evaluated", report.evaluated},
         {"infeasible", report.infeasible},
         {"candidates", candidates},
         {"traces", traces},
         {"chosen", nullptr}};
  if (report.chosen) {
    j["chosen"] = {{"rank", report.chosen->rank},
                   {"strategy", strategy_json(report.chosen->strategy)},
                   {"balance", balance_json(report.chosen->result)}};
  }
  return dump(j) + "\n";
}

PlanReport parse_report(std::string_view text) {
  const json j = parse_json(text);
  expect_schema(j, "moeplan.report/1");
  PlanReport r;
  r.tool_version = field<std::string>(j, "tool_version");
  r.inputs_digest = field<std::string>(j, "inputs_digest");
  const json inputs = field<json>(j, "inputs");
  r.inputs_json = inputs.empty() ? std::string() : dump(inputs);
  r.evaluated = field<std::int64_t>(j, "evaluated");
  r.infeasible = field<std::int64_t>(j, "infeasible");
  for (const auto& c : field<json>(j, "candidates")) {
    RankedCandidate rc;
    rc.strategy = strategy_from(field<json>(c, "strategy"));
    rc.estimate = estimate_from(field<json>(c, "estimate"));
    rc.recompute = parse_recompute_mode(field<std::string>(c, "recompute"));
    rc.feasible = field<bool>(c, "feasible");
    rc.rank = field<std::int64_t>(c, "rank");
    r.candidates.push_back(rc);
  }
  for (const auto& t : field<json>(j, "traces")) r.traces.push_back(summary_from(t));
  const json chosen = field<json>(j, "chosen");
  if (!chosen.is_null()) {
    r.chosen = ChosenPlan{field<std::int64_t>(chosen, "rank"),
                          strategy_from(field<json>(chosen, "strategy")),
                          balance_from(field<json>(chosen, "balance"))};
  }
  return r;
}

std::string emit_plan_file(const PlanFile& plan) {
  json j{{"schema", "moeplan.plan/1"},
         {"strategy", strategy_json(plan.strategy)},
         {"schedule", std::string(to_string(plan.schedule))},
         {"balance", balance_json(plan.result)},
         {"durations",
          {{"forward_ns", ns_matrix(plan.durations.forward)},
           {"backward_ns", ns_matrix(plan.durations.backward)},
           {"recompute_ns", ns_matrix(plan.durations.recompute)}}}};
  put_time(j, "send", plan.send);
  return dump(j) + "\n";
}

PlanFile parse_plan_file(std::string_view text) {
  const json j = parse_json(text);
  expect_schema(j, "moeplan.plan/1");
  PlanFile p;
  p.strategy = strategy_from(field<json>(j, "strategy"));
  p.schedule = parse_schedule_kind(field<std::string>(j, "schedule"));
  p.result = balance_from(field<json>(j, "balance"));
  const json d = field<json>(j, "durations");
  p.durations.forward = ns_matrix_from(field<json>(d, "forward_ns"));
  p.durations.backward = ns_matrix_from(field<json>(d, "backward_ns"));
  p.durations.recompute = ns_matrix_from(field<json>(d, "recompute_ns"));
  p.send = time_from(j, "send");
  return p;
}

std::string emit_trace(const ScheduleTrace& trace) {
  json events = json::array();
  for (const auto& e : trace.events) {
    events.push_back({{"stage", e.stage},
                      {"chunk", e.chunk},
                      {"microbatch", e.microbatch},
                      {"kind", std::string(to_string(e.kind))},
                      {"start_ns", e.start.count()},
                      {"end_ns", e.end.count()}});
  }
  json j{{"schema", "moeplan.trace/1"},
         {"kind", std::string(to_string(trace.kind))},
         {"stages", trace.stages},
         {"chunks", trace.chunks},
         {"micro_batches", trace.micro_batches},
         {"bubble_ratio", trace.bubble_ratio},
         {"peak_inflight", trace.peak_inflight},
         {"events", events}};
  put_time(j, "makespan", trace.makespan);
  return dump(j) + "\n";
}

ScheduleTrace parse_trace(std::string_view text) {
  const json j = parse_json(text);
  expect_schema(j, "moeplan.trace/1");
  ScheduleTrace t;
  t.kind = parse_schedule_kind(field<std::string>(j, "kind"));
  t.stages = field<std::int64_t>(j, "stages");
  t.chunks = field<std::int64_t>(j, "chunks");
  t.micro_batches = field<std::int64_t>(j, "micro_batches");
  t.makespan = time_from(j, "makespan");
  t.bubble_ratio = field<double>(j, "bubble_ratio");
  t.peak_inflight = field<StageChunkMatrix<std::int64_t>>(j, "peak_inflight");
  for (const auto& e : field<json>(j, "events")) {
    TaskEvent ev;
    ev.stage = field<std::int64_t>(e, "stage");
    ev.chunk = field<std::int64_t>(e, "chunk");
    ev.microbatch = field<std::int64_t>(e, "microbatch");
    ev.kind = parse_task_kind(field<std::string>(e, "kind"));
    ev.start = Nanos(field<std::int64_t>(e, "start_ns"));
    ev.end = Nanos(field<std::int64_t>(e, "end_ns"));
    if (ev.stage < 0 || ev.stage >= t.stages || ev.chunk < 0 || ev.chunk >= t.chunks ||
        ev.end < ev.start) {
      throw ParseError("trace event out of range");
    }
    t.events.push_back(ev);
  }
  return t;
}

GanttFormat parse_gantt_format(std::string_view text) {
  if (text == "svg") return GanttFormat::kSvg;
  if (text == "text") return GanttFormat::kText;
  throw ParseError(fmt::format("unknown gantt format '{}' (svg, text)", text));
}

std::string render_gantt(const ScheduleTrace& trace, GanttFormat format, int columns) {
  if (trace.events.empty() || trace.makespan.count() <= 0 || trace.stages < 1) {
    throw EmptyTrace("trace has no timed events");
  }
  return format == GanttFormat::kSvg ? render_svg(trace) : render_text(trace, columns);
}

}  // namespace moeplan
