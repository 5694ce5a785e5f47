// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.h"

#include <fmt/format.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "moeplan/attn_sched.h"
#include "moeplan/balancer.h"
#include "moeplan/config.h"
#include "moeplan/cost_model.h"
#include "moeplan/ep_comm.h"
#include "moeplan/errors.h"
#include "moeplan/pipeline_sim.h"
#include "moeplan/planner.h"
#include "moeplan/report.h"
#include "moeplan/strategy.h"

namespace moeplan::cli {
namespace {

using nlohmann::json;

// Routing seed used when --seed is absent.
constexpr std::uint64_t kDefaultSeed = 20260101;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(fmt::format("cannot read '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_output(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << content;
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file || !(file << content)) throw ParseError(fmt::format("cannot write '{}'", path));
}

Bytes parse_bytes_flag(const std::string& text, const char* flag) {
  auto v = parse_byte_quantity(text);
  if (!v || *v < 0) throw ValidationError(flag, fmt::format("'{}' is not a byte quantity", text));
  return static_cast<Bytes>(*v);
}

double parse_seconds_flag(const std::string& text, const char* flag) {
  auto v = parse_time_quantity(text);
  if (!v || *v < 0) throw ValidationError(flag, fmt::format("'{}' is not a duration", text));
  return *v;
}

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("moeplan", sink);
  logger->set_pattern("[%l] %v");
  const char* level = std::getenv("MOEPLAN_LOG");
  logger->set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
  return logger;
}

struct ModelArgs {
  std::string model_path;
  std::string preset_name;
  std::string cluster_path;
  std::int64_t seq_len = 0;

  void add(CLI::App& cmd, bool seq_len_required) {
    auto* m = cmd.add_option("--model", model_path, "Model document (flat YAML)");
    auto* p = cmd.add_option("--preset", preset_name, "Built-in model: 105B, 438B, 1119B");
    m->excludes(p);
    cmd.add_option("--cluster", cluster_path, "Cluster document (flat YAML)")->required();
    auto* s = cmd.add_option("--seq-len", seq_len, "Training sequence length in tokens");
    if (seq_len_required) s->required();
  }

  ModelConfig model() const {
    ModelConfig m;
    if (!model_path.empty()) {
      m = load_model_config_file(model_path);
    } else if (!preset_name.empty()) {
      m = preset(preset_name);
    } else {
      throw ValidationError("model", "one of --model or --preset is required");
    }
    if (seq_len > 0) m.seq_len = seq_len;
    validate(m);
    return m;
  }
};

TrainingJob make_job(const ModelConfig& model, const ClusterTopology& cluster,
                     std::int64_t global_batch, const std::string& mem_limit) {
  TrainingJob job;
  job.global_batch = global_batch;
  job.seq_len = model.seq_len;
  job.max_device_memory_bytes =
      mem_limit.empty() ? cluster.device_memory_bytes : parse_bytes_flag(mem_limit, "mem-limit");
  validate(job);
  return job;
}

// ----------------------------------------------------------------- presets

void add_presets(CLI::App& app, std::ostream& out, std::function<void()>& action) {
  auto* cmd = app.add_subcommand("presets", "List the built-in model presets");
  auto show = std::make_shared<std::string>();
  cmd->add_option("--show", *show, "Print one preset as a model document");
  action = [show, &out] {
    if (!show->empty()) {
      out << to_document(preset(*show));
      return;
    }
    for (const auto& name : preset_names()) {
      const ModelConfig m = preset(name);
      out << fmt::format("{:<6} layers={} hidden={} heads={} experts={}+{} shared top_k={}\n", name,
                         m.num_layers, m.hidden_size, m.num_heads, m.num_routed_experts,
                         m.num_shared_experts, m.experts_per_token);
    }
  };
}

// -------------------------------------------------------------------- plan

struct PlanArgs {
  ModelArgs inputs;
  std::int64_t global_batch = 0;
  std::string mem_limit;
  SearchLimits limits;
  std::string sp_mode = "auto";
  std::int64_t top_k = 10;
  std::string schedule = "interleaved_1f1b_overlap";
  std::string report_out;
  std::string plan_out;
  std::string gantt_out;
  unsigned threads = 0;
};

int run_plan(const PlanArgs& a, std::ostream& out, spdlog::logger& log) {
  const ModelConfig model = a.inputs.model();
  const ClusterTopology cluster = load_cluster_file(a.inputs.cluster_path);
  const TrainingJob job = make_job(model, cluster, a.global_batch, a.mem_limit);
  SearchLimits limits = a.limits;
  limits.sp_mode = parse_sp_mode(a.sp_mode);
  const ScheduleKind schedule = parse_schedule_kind(a.schedule);

  const PlanSearch search = search_plans(model, cluster, job, limits, a.top_k, schedule, a.threads);
  log.info("evaluated {} strategies, {} over the memory cap", search.evaluated, search.infeasible);

  PlanReport report;
  report.tool_version = tool_version();
  report.inputs_json = inputs_document(model, cluster, job, limits, a.top_k);
  report.inputs_digest = fnv1a_hex(report.inputs_json);
  report.evaluated = search.evaluated;
  report.infeasible = search.infeasible;
  report.candidates = search.ranked;
  for (const auto& [rank, r] : search.realized) {
    report.traces.push_back(summarize(r, rank));
    log.info("rank {} {}: simulated step {:.6g} s", rank, to_string(r.strategy),
             to_seconds(r.step_time()));
  }
  for (const auto& [rank, reason] : search.unbalanced) {
    log.warn("rank {} could not be balanced: {}", rank, reason);
  }
  if (const RealizedPlan* best = search.chosen()) {
    report.chosen = ChosenPlan{search.chosen_rank(), best->strategy, best->result};
    if (!a.plan_out.empty()) {
      write_output(
          a.plan_out,
          emit_plan_file({best->strategy, schedule, best->result, best->durations, best->send}),
          out);
    }
    if (!a.gantt_out.empty()) {
      write_output(a.gantt_out, render_gantt(best->trace, GanttFormat::kSvg), out);
    }
  }
  write_output(a.report_out, emit_report(report), out);
  return report.chosen ? kExitOk : kExitNoSolution;
}

void add_plan(CLI::App& app, std::ostream& out, spdlog::logger& log, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("plan", "Enumerate, rank and balance strategies");
  auto a = std::make_shared<PlanArgs>();
  a->inputs.add(*cmd, true);
  cmd->add_option("--global-batch", a->global_batch, "Sequences per optimizer step")->required();
  cmd->add_option("--mem-limit", a->mem_limit, "Per-device memory cap, e.g. 45GiB");
  cmd->add_option("--max-tp", a->limits.max_tp, "Upper bound on TP (default: devices per node)");
  cmd->add_option("--max-pp", a->limits.max_pp, "Upper bound on PP");
  cmd->add_option("--max-vpp", a->limits.max_vpp, "Upper bound on VPP")->capture_default_str();
  cmd->add_option("--max-ep", a->limits.max_ep, "Upper bound on EP");
  cmd->add_option("--max-op", a->limits.max_op, "Upper bound on OP");
  cmd->add_option("--max-micro-batch-size", a->limits.max_micro_batch_size,
                  "Upper bound on micro-batch size")
      ->capture_default_str();
  cmd->add_option("--pp", a->limits.pin_pp, "Search only this many pipeline stages");
  cmd->add_option("--vpp", a->limits.pin_vpp, "Search only this many chunks per stage");
  cmd->add_option("--micro-batches", a->limits.pin_micro_batches,
                  "Search only this many micro-batches per step");
  cmd->add_option("--sp", a->sp_mode, "Sequence parallel: auto, off, on, both")
      ->capture_default_str();
  cmd->add_option("--top-k", a->top_k, "Candidates kept in the report")->capture_default_str();
  cmd->add_option("--schedule", a->schedule, "Pipeline schedule")->capture_default_str();
  cmd->add_option("--out", a->report_out, "Report path (default stdout)");
  cmd->add_option("--plan-out", a->plan_out, "Write the chosen plan for `simulate`");
  cmd->add_option("--gantt", a->gantt_out, "Write an SVG Gantt of the chosen plan");
  cmd->add_option("--threads", a->threads, "Evaluation threads (0 = all cores)");
  action = [a, &out, &log] { return run_plan(*a, out, log); };
}

// ----------------------------------------------------------------- balance

struct BalanceArgs {
  ModelArgs inputs;
  std::int64_t global_batch = 0;
  std::string mem_limit;
  ParallelStrategy s;
  std::string sp = "auto";
  std::string schedule = "interleaved_1f1b_overlap";
  std::string plan_out;
};

int run_balance(const BalanceArgs& a, std::ostream& out) {
  const ModelConfig model = a.inputs.model();
  const ClusterTopology cluster = load_cluster_file(a.inputs.cluster_path);
  const TrainingJob job = make_job(model, cluster, a.global_batch, a.mem_limit);
  ParallelStrategy s = a.s;
  const std::int64_t replicas = s.tp * s.pp;
  if (s.dp == 0 && replicas > 0) s.dp = cluster.world_size() / replicas;
  if (s.num_micro_batches == 0 && s.dp > 0 && s.micro_batch_size > 0) {
    s.num_micro_batches = job.global_batch / (s.dp * s.micro_batch_size);
  }
  const SpMode sp = parse_sp_mode(a.sp);
  s.sp_enabled = sp == SpMode::kOn || sp == SpMode::kBoth || (sp == SpMode::kAuto && s.tp > 1);
  const ScheduleKind schedule = parse_schedule_kind(a.schedule);

  const RealizedPlan r = realize(s, model, cluster, job, schedule);
  const std::string text = emit_plan_file({s, schedule, r.result, r.durations, r.send});
  if (a.plan_out.empty()) {
    out << text;
  } else {
    write_output(a.plan_out, text, out);
    out << fmt::format("objective {:.6g} s, simulated step {:.6g} s, proven optimal: {}\n",
                       r.result.objective_sec(), to_seconds(r.step_time()),
                       r.result.proven_optimal ? "yes" : "no");
  }
  return kExitOk;
}

void add_strategy_flags(CLI::App& cmd, ParallelStrategy& s, std::string& sp) {
  s.dp = 0;
  s.num_micro_batches = 0;
  cmd.add_option("--dp", s.dp, "Data-parallel degree (default: world / (tp * pp))");
  cmd.add_option("--tp", s.tp, "Tensor-parallel degree")->capture_default_str();
  cmd.add_option("--pp", s.pp, "Pipeline stages")->required();
  cmd.add_option("--vpp", s.vpp, "Chunks per stage")->capture_default_str();
  cmd.add_option("--ep", s.ep, "Expert-parallel degree")->capture_default_str();
  cmd.add_option("--op", s.op, "Optimizer-parallel degree")->capture_default_str();
  cmd.add_option("--micro-batch-size", s.micro_batch_size, "Sequences per micro-batch")
      ->capture_default_str();
  cmd.add_option("--micro-batches", s.num_micro_batches,
                 "Micro-batches per step (default: derived from the global batch)");
  cmd.add_option("--sp", sp, "Sequence parallel: auto, off, on")->capture_default_str();
}

void add_balance(CLI::App& app, std::ostream& out, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("balance", "Optimally place layers for one strategy");
  auto a = std::make_shared<BalanceArgs>();
  a->inputs.add(*cmd, false);
  cmd->add_option("--global-batch", a->global_batch, "Sequences per optimizer step")->required();
  cmd->add_option("--mem-limit", a->mem_limit, "Per-device memory cap, e.g. 45GiB");
  add_strategy_flags(*cmd, a->s, a->sp);
  cmd->add_option("--schedule", a->schedule, "Pipeline schedule")->capture_default_str();
  cmd->add_option("--out", a->plan_out, "Plan file path (default stdout)");
  action = [a, &out] { return run_balance(*a, out); };
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string plan_path;
  std::string schedule;
  std::string comm;
  std::string trace_out;
  std::string gantt_out;
  std::string gantt_format = "svg";
};

int run_simulate(const SimulateArgs& a, std::ostream& out) {
  const PlanFile plan = parse_plan_file(read_file(a.plan_path));
  const ScheduleKind kind = a.schedule.empty() ? plan.schedule : parse_schedule_kind(a.schedule);
  const Nanos comm = a.comm.empty() ? plan.send : from_seconds(parse_seconds_flag(a.comm, "comm"));
  const ScheduleTrace trace = simulate(plan.result.plan, plan.strategy, plan.durations, comm, kind);
  if (!a.trace_out.empty()) write_output(a.trace_out, emit_trace(trace), out);
  if (!a.gantt_out.empty()) {
    write_output(a.gantt_out, render_gantt(trace, parse_gantt_format(a.gantt_format)), out);
  }
  const json summary{{"kind", std::string(to_string(kind))},
                     {"makespan_ns", trace.makespan.count()},
                     {"makespan_sec", trace.makespan_sec()},
                     {"bubble_ratio", trace.bubble_ratio},
                     {"peak_inflight", trace.peak_inflight}};
  if (a.trace_out != "-" && a.gantt_out != "-") out << canonical_json(summary.dump()) << "\n";
  return kExitOk;
}

void add_simulate(CLI::App& app, std::ostream& out, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("simulate", "Replay a plan file through the event simulator");
  auto a = std::make_shared<SimulateArgs>();
  cmd->add_option("--plan", a->plan_path, "Plan file from `plan --plan-out` or `balance`")
      ->required();
  cmd->add_option("--schedule", a->schedule,
                  "gpipe, one_f_one_b, interleaved_1f1b, interleaved_1f1b_overlap");
  cmd->add_option("--comm", a->comm, "Override the stage-boundary send time, e.g. 2ms");
  cmd->add_option("--trace", a->trace_out, "Write the event trace as JSON");
  cmd->add_option("--gantt", a->gantt_out, "Write a Gantt chart");
  cmd->add_option("--gantt-format", a->gantt_format, "svg or text")->capture_default_str();
  action = [a, &out] { return run_simulate(*a, out); };
}

// ----------------------------------------------------------------- ep-comm

struct EpArgs {
  std::int64_t nodes = 2;
  std::int64_t devices_per_node = 8;
  std::int64_t experts = 16;
  std::int64_t k = 8;
  std::int64_t tokens = 4096;
  std::int64_t hidden = 5120;
  std::int64_t dtype_bytes = 2;
  double skew = 0;
  std::uint64_t seed = kDefaultSeed;
  std::int64_t streams = 2;
  std::string ffn_compute = "0";
  std::string cluster_path;
  std::string format = "text";
};

int run_ep(const EpArgs& a, std::ostream& out) {
  ClusterTopology cluster;
  if (!a.cluster_path.empty()) {
    cluster = load_cluster_file(a.cluster_path);
  } else {
    // Stand-in links when no cluster document is given.
    cluster.intra_node_link = {5e-6, 100e9};
    cluster.inter_node_link = {10e-6, 25e9};
  }
  const EpLayout layout = make_ep_layout(a.nodes, a.devices_per_node, a.experts);
  const RoutingTable routing =
      route_tokens(a.tokens, a.k, layout, a.skew, a.seed, a.hidden * a.dtype_bytes);
  const double ffn = parse_seconds_flag(a.ffn_compute, "ffn-compute");

  json rows = json::array();
  std::string table = fmt::format("{:<13} {:>16} {:>16} {:>12} {:>12}\n", "mode", "inter_bytes",
                                  "intra_bytes", "serial_sec", fmt::format("S={}_sec", a.streams));
  for (EpMode mode : {EpMode::kGlobalA2A, EpMode::kHierarchical}) {
    const EpTraffic t = traffic(routing, layout, mode, cluster);
    const double serial = ep_time(t, cluster, {1, ffn});
    const double overlapped = ep_time(t, cluster, {a.streams, ffn});
    rows.push_back({{"mode", std::string(to_string(mode))},
                    {"inter_node_bytes_per_device", t.inter_node_bytes_per_device},
                    {"intra_node_bytes_per_device", t.intra_node_bytes_per_device},
                    {"expected_inter_node_bytes",
                     expected_inter_bytes(mode, layout, a.k, a.tokens, routing.token_bytes)},
                    {"exposed_sec_serial", serial},
                    {"exposed_sec_overlap", overlapped}});
    table += fmt::format("{:<13} {:>16} {:>16} {:>12.6g} {:>12.6g}\n", to_string(mode),
                         t.inter_node_bytes_per_device, t.intra_node_bytes_per_device, serial,
                         overlapped);
  }
  const bool wins = hierarchical_wins(layout, a.k);
  table += fmt::format("hierarchical moves fewer inter-node bytes: {} ((N_g-1) < k(E-d_g)/E)\n",
                       wins ? "yes" : "no");
  const json doc{{"layout",
                  {{"num_nodes", a.nodes},
                   {"devices_per_node", a.devices_per_node},
                   {"num_experts", a.experts}}},
                 {"k", a.k},
                 {"tokens_per_device", a.tokens},
                 {"token_bytes", routing.token_bytes},
                 {"skew", a.skew},
                 {"seed", a.seed},
                 {"streams", a.streams},
                 {"hierarchical_wins", wins},
                 {"modes", rows}};
  if (a.format == "json") {
    out << canonical_json(doc.dump()) << "\n";
  } else if (a.format == "text") {
    out << table;
  } else {
    throw ValidationError("format", "must be text or json");
  }
  return kExitOk;
}

void add_ep(CLI::App& app, std::ostream& out, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("ep-comm", "Compare global and hierarchical EP dispatch");
  auto a = std::make_shared<EpArgs>();
  cmd->add_option("--nodes", a->nodes, "Nodes in the EP group (N_g)")->capture_default_str();
  cmd->add_option("--devices-per-node", a->devices_per_node, "EP devices per node (d_g)")
      ->capture_default_str();
  cmd->add_option("--experts", a->experts, "Routed experts")->capture_default_str();
  cmd->add_option("--k", a->k, "Experts per token")->capture_default_str();
  cmd->add_option("--tokens", a->tokens, "Tokens per device")->capture_default_str();
  cmd->add_option("--hidden", a->hidden, "Hidden size")->capture_default_str();
  cmd->add_option("--dtype-bytes", a->dtype_bytes, "Bytes per activation element")
      ->capture_default_str();
  cmd->add_option("--skew", a->skew, "Probability mass on the hot expert")->capture_default_str();
  cmd->add_option("--seed", a->seed, "Routing seed")->capture_default_str();
  cmd->add_option("--streams", a->streams, "Overlap slices")->capture_default_str();
  cmd->add_option("--ffn-compute", a->ffn_compute, "FFN compute per dispatch, e.g. 3ms")
      ->capture_default_str();
  cmd->add_option("--cluster", a->cluster_path, "Cluster document supplying link speeds");
  cmd->add_option("--format", a->format, "text or json")->capture_default_str();
  action = [a, &out] { return run_ep(*a, out); };
}

// -------------------------------------------------------------------- pack

struct PackArgs {
  std::string input;
  std::int64_t devices = 0;
  std::int64_t samples_per_device = 0;
  std::string scope = "step";
  std::int64_t micro_batch_size = 1;
  std::string out_path;
};

std::vector<SampleSpec> load_samples(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("{}: {}", path, e.what()));
  }
  if (j.is_object() && j.contains("samples")) j = j["samples"];
  if (!j.is_array()) throw ParseError("pack input must be a list of samples");
  std::vector<SampleSpec> samples;
  for (const auto& s : j) {
    const json& lengths = s.is_object() ? s.at("doc_lengths") : s;
    SampleSpec sample;
    try {
      sample.doc_lengths = lengths.get<std::vector<std::int64_t>>();
    } catch (const json::exception& e) {
      throw ParseError(fmt::format("doc_lengths: {}", e.what()));
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

int run_pack(const PackArgs& a, std::ostream& out) {
  const auto samples = load_samples(a.input);
  std::vector<std::int64_t> costs;
  for (const auto& s : samples) costs.push_back(sample_cost(s));
  const Assignment before = identity_assignment(costs, a.devices, a.samples_per_device);
  Assignment after;
  if (a.scope == "step") {
    after = balance_costs(costs, a.devices, a.samples_per_device);
  } else if (a.scope == "microbatch") {
    after = balance_per_microbatch(costs, a.devices, a.samples_per_device, a.micro_batch_size);
  } else {
    throw ValidationError("scope", "must be step or microbatch");
  }
  const json doc{{"scope", a.scope},
                 {"costs", costs},
                 {"device_of_sample", after.device_of_sample},
                 {"loads", after.loads},
                 {"loads_before", before.loads},
                 {"imbalance_before", imbalance(before)},
                 {"imbalance_after", imbalance(after)}};
  write_output(a.out_path, canonical_json(doc.dump()) + "\n", out);
  return kExitOk;
}

void add_pack(CLI::App& app, std::ostream& out, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("pack", "Balance packed samples by attention cost");
  auto a = std::make_shared<PackArgs>();
  cmd->add_option("--input", a->input, "JSON list of samples (doc_lengths arrays)")->required();
  cmd->add_option("--devices", a->devices, "Data-parallel devices")->required();
  cmd->add_option("--samples-per-device", a->samples_per_device, "Samples per device per step")
      ->required();
  cmd->add_option("--scope", a->scope, "step or microbatch")->capture_default_str();
  cmd->add_option("--micro-batch-size", a->micro_batch_size,
                  "Samples per device per micro-batch (microbatch scope)")
      ->capture_default_str();
  cmd->add_option("--out", a->out_path, "Output path (default stdout)");
  action = [a, &out] { return run_pack(*a, out); };
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  auto logger = make_logger(err);
  CLI::App app{"Planner and simulator for MoE training parallelism", "moeplan"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version());

  std::function<void()> presets_action;
  std::function<int()> plan_action, balance_action, simulate_action, ep_action, pack_action;
  add_presets(app, out, presets_action);
  add_plan(app, out, *logger, plan_action);
  add_balance(app, out, balance_action);
  add_simulate(app, out, simulate_action);
  add_ep(app, out, ep_action);
  add_pack(app, out, pack_action);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, x;
    const int code = app.exit(e, o, x);
    out << o.str();
    err << x.str();
    return code == 0 ? kExitOk : kExitInvalidInput;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "presets") {
      presets_action();
      return kExitOk;
    }
    if (name == "plan") return plan_action();
    if (name == "balance") return balance_action();
    if (name == "simulate") return simulate_action();
    if (name == "ep-comm") return ep_action();
    if (name == "pack") return pack_action();
  } catch (const Infeasible& e) {
    err << "infeasible: " << e.what() << "\n";
    return kExitNoSolution;
  } catch (const EmptySearchSpace& e) {
    err << "no solution: " << e.what() << "\n";
    return kExitNoSolution;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalidInput;
  }
  return kExitInvalidInput;
}

}  // namespace moeplan::cli
