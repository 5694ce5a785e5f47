// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeplan/balancer.h"

#include <fmt/format.h>

#include <algorithm>
#include <limits>
#include <optional>
#include <stdexcept>

#include "moeplan/errors.h"
#include "moeplan/inflight.h"

namespace moeplan {
namespace {

constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
constexpr std::array<RecomputeMode, 3> kModes = kAllRecomputeModes;

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

Nanos extra_busy(const BalanceProblem& pb, std::int64_t s, std::int64_t c) {
  return pb.extra_forward[s][c] + pb.extra_backward[s][c];
}

void validate_problem(const BalanceProblem& pb) {
  const std::int64_t p = pb.stages;
  const std::int64_t v = pb.chunks;
  if (p < 1 || v < 1 || pb.micro_batches < 1) {
    throw InvalidParams("balance: stages, chunks and micro_batches must be >= 1");
  }
  if (static_cast<std::int64_t>(pb.layers.size()) < p * v) {
    throw InvalidStrategy(
        fmt::format("{} layers cannot fill {} stages x {} chunks", pb.layers.size(), p, v));
  }
  auto check_shape = [p, v](const auto& matrix, const char* name) {
    bool ok = static_cast<std::int64_t>(matrix.size()) == p;
    for (const auto& row : matrix) ok = ok && static_cast<std::int64_t>(row.size()) == v;
    if (!ok) throw InvalidParams(fmt::format("balance: {} must be {}x{}", name, p, v));
  };
  check_shape(pb.inflight, "inflight");
  check_shape(pb.extra_forward, "extra_forward");
  check_shape(pb.extra_backward, "extra_backward");
  check_shape(pb.extra_act, "extra_act");
  if (static_cast<std::int64_t>(pb.extra_static.size()) != p) {
    throw InvalidParams("balance: extra_static needs one entry per stage");
  }
  for (const auto& layer : pb.layers) {
    if (layer.forward.count() < 0 || layer.backward.count() < 0 || layer.static_memory.total < 0) {
      throw InvalidParams("balance: layer costs must be >= 0");
    }
    for (int i = 0; i < 3; ++i) {
      if (layer.recompute[i].count() < 0 || layer.act_bytes[i] < 0) {
        throw InvalidParams("balance: layer costs must be >= 0");
      }
    }
  }
}

bool lex_less(const PipelinePlan& a, const PipelinePlan& b) {
  if (a.layer_counts != b.layer_counts) return a.layer_counts < b.layer_counts;
  return a.recompute < b.recompute;
}

PipelinePlan empty_plan(std::int64_t p, std::int64_t v) {
  PipelinePlan plan;
  plan.layer_counts.assign(p, std::vector<std::int64_t>(v, 0));
  plan.recompute.assign(p, std::vector<RecomputeMode>(v, RecomputeMode::kNone));
  return plan;
}

// (time, memory) points sorted by time with strictly falling memory.
struct Point {
  std::int64_t time;
  std::int64_t mem;
};
using Front = std::vector<Point>;

void make_pareto(Front& f) {
  std::sort(f.begin(), f.end(), [](const Point& a, const Point& b) {
    return a.time != b.time ? a.time < b.time : a.mem < b.mem;
  });
  std::size_t kept = 0;
  for (const Point& pt : f) {
    if (kept == 0 || pt.mem < f[kept - 1].mem) f[kept++] = pt;
  }
  f.resize(kept);
}

// Every layer identical: the search collapses to counts per (stage, chunk).
// Scans the chunk-time bound T2 over every achievable chunk time; for each
// bound a per-stage Pareto DP over (time, memory) and a min-max DP over
// stages give the least T1.
class UniformSolver {
 public:
  explicit UniformSolver(const BalanceProblem& pb)
      : pb_(pb),
        p_(pb.stages),
        v_(pb.chunks),
        layers_(static_cast<std::int64_t>(pb.layers.size())),
        max_chunk_(layers_ - (p_ * v_ - 1)),
        max_stage_(layers_ - (p_ - 1) * v_) {
    const LayerProfile& layer = pb.layers.front();
    for (int i = 0; i < 3; ++i) {
      busy_[i] = layer.busy(kModes[i]).count();
      act_[i] = layer.act_bytes[i];
    }
    static_ = layer.static_memory.total;
  }

  std::optional<PipelinePlan> solve(std::int64_t& objective) const {
    std::vector<std::int64_t> candidates;
    for (std::int64_t s = 0; s < p_; ++s) {
      for (std::int64_t c = 0; c < v_; ++c) {
        for (std::int64_t n = 1; n <= max_chunk_; ++n) {
          for (int mode = 0; mode < 3; ++mode) candidates.push_back(chunk_time(s, c, n, mode));
        }
      }
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    const std::int64_t t1_floor = min_t1(candidates.back());
    if (t1_floor >= kInf) return std::nullopt;

    const std::int64_t m = pb_.micro_batches;
    std::int64_t best = kInf;
    std::vector<std::int64_t> winners;
    for (std::int64_t t : candidates) {
      if ((p_ - 1) * t + m * t1_floor > best) break;
      const std::int64_t t1 = min_t1(t);
      if (t1 >= kInf) continue;
      const std::int64_t value = m * t1 + (p_ - 1) * t;
      if (value < best) {
        best = value;
        winners.clear();
      }
      if (value == best) winners.push_back(t);
    }

    // Optimal plans are the union over winners t of the boxes {chunk <= t,
    // stage <= U(t)}; a box whose U is matched by a larger t is contained in
    // that one and can be skipped.
    std::optional<PipelinePlan> chosen;
    std::int64_t best_u_above = -1;
    for (auto it = winners.rbegin(); it != winners.rend(); ++it) {
      const std::int64_t t = *it;
      const std::int64_t u = (best - (p_ - 1) * t) / m;
      if (u <= best_u_above) continue;
      best_u_above = u;
      auto plan = extract(t, u);
      if (!plan) throw std::logic_error("balance: optimal box has no plan");
      if (!chosen || lex_less(*plan, *chosen)) chosen = std::move(plan);
    }
    objective = best;
    return chosen;
  }

  bool feasible(Bytes cap) const {
    std::vector<char> reach(layers_ + 1, 0);
    reach[0] = 1;
    for (std::int64_t s = 0; s < p_; ++s) {
      const auto fronts = stage_fronts(s, kInf, kInf, cap, {});
      std::vector<char> next(layers_ + 1, 0);
      for (std::int64_t n = 0; n <= max_stage_; ++n) {
        if (fronts[n].empty()) continue;
        for (std::int64_t r = 0; r + n <= layers_; ++r) next[r + n] |= reach[r];
      }
      reach = std::move(next);
    }
    return reach[layers_] != 0;
  }

 private:
  std::int64_t chunk_time(std::int64_t s, std::int64_t c, std::int64_t n, int mode) const {
    return n * busy_[mode] + extra_busy(pb_, s, c).count();
  }
  std::int64_t chunk_mem(std::int64_t s, std::int64_t c, std::int64_t n, int mode) const {
    return n * static_ + pb_.inflight[s][c] * (n * act_[mode] + pb_.extra_act[s][c]);
  }

  // fronts[N]: Pareto set of (stage time, stage memory) over placements of N
  // layers on stage s with every chunk time <= t, stage time <= u and memory
  // <= cap. The first fixed.size() chunks have their count pinned.
  std::vector<Front> stage_fronts(std::int64_t s, std::int64_t t, std::int64_t u, Bytes cap,
                                  const std::vector<std::int64_t>& fixed) const {
    std::vector<Front> cur(max_stage_ + 1);
    const std::int64_t base = pb_.extra_static[s].total;
    if (base <= cap) cur[0].push_back({0, base});
    for (std::int64_t c = 0; c < v_; ++c) {
      const bool pinned = c < static_cast<std::int64_t>(fixed.size());
      const std::int64_t lo = pinned ? fixed[c] : 1;
      const std::int64_t hi = pinned ? fixed[c] : max_chunk_;
      std::vector<Front> next(max_stage_ + 1);
      for (std::int64_t have = 0; have <= max_stage_; ++have) {
        if (cur[have].empty()) continue;
        for (std::int64_t n = lo; n <= hi && have + n <= max_stage_; ++n) {
          for (int mode = 0; mode < 3; ++mode) {
            const std::int64_t ct = chunk_time(s, c, n, mode);
            if (ct > t) continue;
            const std::int64_t cm = chunk_mem(s, c, n, mode);
            for (const Point& pt : cur[have]) {
              const std::int64_t time = pt.time + ct;
              const std::int64_t mem = pt.mem + cm;
              if (time <= u && mem <= cap) next[have + n].push_back({time, mem});
            }
          }
        }
      }
      for (auto& f : next) make_pareto(f);
      cur = std::move(next);
    }
    return cur;
  }

  // Least achievable max stage time when every chunk time is <= t.
  std::int64_t min_t1(std::int64_t t) const {
    std::vector<std::int64_t> suffix(layers_ + 1, kInf);
    suffix[0] = 0;
    for (std::int64_t s = p_ - 1; s >= 0; --s) {
      const auto fronts = stage_fronts(s, t, kInf, pb_.memory_cap, {});
      std::vector<std::int64_t> next(layers_ + 1, kInf);
      bool any = false;
      for (std::int64_t n = 0; n <= max_stage_; ++n) {
        if (fronts[n].empty()) continue;
        any = true;
        const std::int64_t g = fronts[n].front().time;
        for (std::int64_t r = 0; r + n <= layers_; ++r) {
          if (suffix[r] >= kInf) continue;
          next[r + n] = std::min(next[r + n], std::max(g, suffix[r]));
        }
      }
      if (!any) return kInf;
      suffix = std::move(next);
    }
    return suffix[layers_];
  }

  // Lexicographically smallest plan with chunk times <= t, stage times <= u.
  std::optional<PipelinePlan> extract(std::int64_t t, std::int64_t u) const {
    const Bytes cap = pb_.memory_cap;
    // reach[s][r]: stages s.. can absorb exactly r layers.
    std::vector<std::vector<char>> reach(p_ + 1, std::vector<char>(layers_ + 1, 0));
    reach[p_][0] = 1;
    for (std::int64_t s = p_ - 1; s >= 0; --s) {
      const auto fronts = stage_fronts(s, t, u, cap, {});
      for (std::int64_t n = 0; n <= max_stage_; ++n) {
        if (fronts[n].empty()) continue;
        for (std::int64_t r = 0; r + n <= layers_; ++r) reach[s][r + n] |= reach[s + 1][r];
      }
    }
    if (!reach[0][layers_]) return std::nullopt;

    PipelinePlan plan = empty_plan(p_, v_);
    std::int64_t remaining = layers_;
    for (std::int64_t s = 0; s < p_; ++s) {
      std::vector<std::int64_t> prefix;
      for (std::int64_t c = 0; c < v_; ++c) {
        bool placed = false;
        for (std::int64_t n = 1; n <= max_chunk_ && !placed; ++n) {
          prefix.push_back(n);
          const auto fronts = stage_fronts(s, t, u, cap, prefix);
          for (std::int64_t total = 0; total <= max_stage_ && total <= remaining; ++total) {
            if (!fronts[total].empty() && reach[s + 1][remaining - total]) {
              placed = true;
              break;
            }
          }
          if (!placed) prefix.pop_back();
        }
        if (!placed) return std::nullopt;
      }
      plan.layer_counts[s] = prefix;
      for (auto n : prefix) remaining -= n;
      if (!pick_modes(s, t, u, cap, plan)) return std::nullopt;
    }
    return plan;
  }

  // Smallest mode vector (chunk 0 most significant) that fits the bounds.
  bool pick_modes(std::int64_t s, std::int64_t t, std::int64_t u, Bytes cap,
                  PipelinePlan& plan) const {
    std::int64_t combos = 1;
    for (std::int64_t c = 0; c < v_; ++c) combos *= 3;
    for (std::int64_t code = 0; code < combos; ++code) {
      std::int64_t rest = code;
      std::int64_t div = combos / 3;
      std::int64_t time = 0;
      std::int64_t mem = pb_.extra_static[s].total;
      bool ok = true;
      for (std::int64_t c = 0; c < v_; ++c, div /= 3) {
        const int mode = static_cast<int>(rest / div);
        rest %= div;
        const std::int64_t n = plan.layer_counts[s][c];
        const std::int64_t ct = chunk_time(s, c, n, mode);
        ok = ok && ct <= t;
        time += ct;
        mem += chunk_mem(s, c, n, mode);
        plan.recompute[s][c] = kModes[mode];
      }
      if (ok && time <= u && mem <= cap) return true;
    }
    return false;
  }

  const BalanceProblem& pb_;
  std::int64_t p_;
  std::int64_t v_;
  std::int64_t layers_;
  std::int64_t max_chunk_;
  std::int64_t max_stage_;
  std::array<std::int64_t, 3> busy_{};
  std::array<std::int64_t, 3> act_{};
  std::int64_t static_ = 0;
};

// Depth-first branch-and-bound over positions in chunk-major order. Pruning
// is strict (bound > incumbent) so equal-objective plans are still reached
// and the lexicographic tie-break sees all of them.
class BranchAndBound {
 public:
  explicit BranchAndBound(const BalanceProblem& pb)
      : pb_(pb),
        p_(pb.stages),
        v_(pb.chunks),
        layers_(static_cast<std::int64_t>(pb.layers.size())) {
    for (int i = 0; i < 3; ++i) {
      busy_[i].assign(layers_ + 1, 0);
      act_[i].assign(layers_ + 1, 0);
    }
    static_.assign(layers_ + 1, 0);
    min_busy_suffix_.assign(layers_ + 1, 0);
    for (std::int64_t l = 0; l < layers_; ++l) {
      const LayerProfile& layer = pb.layers[l];
      for (int i = 0; i < 3; ++i) {
        busy_[i][l + 1] = busy_[i][l] + layer.busy(kModes[i]).count();
        act_[i][l + 1] = act_[i][l] + layer.act_bytes[i];
      }
      static_[l + 1] = static_[l] + layer.static_memory.total;
    }
    for (std::int64_t l = layers_ - 1; l >= 0; --l) {
      std::int64_t lo = kInf;
      for (int i = 0; i < 3; ++i) lo = std::min(lo, pb.layers[l].busy(kModes[i]).count());
      min_busy_suffix_[l] = min_busy_suffix_[l + 1] + lo;
    }
    extra_suffix_.assign(p_ * v_ + 1, 0);
    for (std::int64_t k = p_ * v_ - 1; k >= 0; --k) {
      extra_suffix_[k] = extra_suffix_[k + 1] + extra_busy(pb, k % p_, k / p_).count();
    }
  }

  // Returns the optimum, or nullopt when no plan fits (or the node limit hit
  // before any plan was found; see exhausted()).
  std::optional<PipelinePlan> solve(std::int64_t& objective) {
    time_only_ = false;
    reset(pb_.memory_cap);
    dfs(0, 0);
    objective = best_;
    return best_plan_;
  }

  bool feasible(Bytes cap) {
    time_only_ = true;
    reset(cap);
    dfs(0, 0);
    return best_plan_.has_value();
  }

  bool exhausted() const { return exhausted_; }

 private:
  void reset(Bytes cap) {
    cap_ = cap;
    best_ = kInf;
    best_plan_.reset();
    nodes_ = 0;
    exhausted_ = false;
    current_ = empty_plan(p_, v_);
    stage_time_.assign(p_, 0);
    stage_mem_.assign(p_, 0);
    for (std::int64_t s = 0; s < p_; ++s) stage_mem_[s] = pb_.extra_static[s].total;
    max_chunk_ = 0;
  }

  std::int64_t chunk_time(std::int64_t s, std::int64_t c, std::int64_t first, std::int64_t n,
                          int mode) const {
    return busy_[mode][first + n] - busy_[mode][first] + extra_busy(pb_, s, c).count();
  }
  std::int64_t chunk_mem(std::int64_t s, std::int64_t c, std::int64_t first, std::int64_t n,
                         int mode) const {
    return static_[first + n] - static_[first] +
           pb_.inflight[s][c] * (act_[mode][first + n] - act_[mode][first] + pb_.extra_act[s][c]);
  }

  void dfs(std::int64_t k, std::int64_t first) {
    if (exhausted_ || (time_only_ && best_plan_)) return;
    if (++nodes_ > pb_.node_limit) {
      exhausted_ = true;
      return;
    }
    const std::int64_t positions = p_ * v_;
    if (k == positions) {
      leaf();
      return;
    }
    for (std::int64_t s = 0; s < p_; ++s) {
      if (stage_mem_[s] > cap_) return;
    }
    if (!time_only_ && lower_bound(k, first) > best_) return;

    const std::int64_t s = k % p_;
    const std::int64_t c = k / p_;
    // Later positions need one layer each; the last takes whatever is left.
    const std::int64_t max_n = layers_ - first - (positions - k - 1);
    const std::int64_t min_n = k + 1 == positions ? max_n : 1;
    for (std::int64_t n = min_n; n <= max_n; ++n) {
      for (int mode = 0; mode < 3; ++mode) {
        const std::int64_t ct = chunk_time(s, c, first, n, mode);
        const std::int64_t cm = chunk_mem(s, c, first, n, mode);
        if (stage_mem_[s] + cm > cap_) continue;
        const std::int64_t saved_max = max_chunk_;
        stage_time_[s] += ct;
        stage_mem_[s] += cm;
        max_chunk_ = std::max(max_chunk_, ct);
        current_.layer_counts[s][c] = n;
        current_.recompute[s][c] = kModes[mode];
        dfs(k + 1, first + n);
        stage_time_[s] -= ct;
        stage_mem_[s] -= cm;
        max_chunk_ = saved_max;
        if (exhausted_ || (time_only_ && best_plan_)) return;
      }
    }
  }

  std::int64_t lower_bound(std::int64_t k, std::int64_t first) const {
    std::int64_t worst = 0;
    std::int64_t total = 0;
    for (auto t : stage_time_) {
      worst = std::max(worst, t);
      total += t;
    }
    total += min_busy_suffix_[first] + extra_suffix_[k];
    const std::int64_t t1 = std::max(worst, ceil_div(total, p_));
    return pb_.micro_batches * t1 + (p_ - 1) * max_chunk_;
  }

  void leaf() {
    if (time_only_) {
      best_plan_ = current_;
      return;
    }
    std::int64_t t1 = 0;
    for (auto t : stage_time_) t1 = std::max(t1, t);
    const std::int64_t value = pb_.micro_batches * t1 + (p_ - 1) * max_chunk_;
    if (value < best_ || (value == best_ && lex_less(current_, *best_plan_))) {
      best_ = value;
      best_plan_ = current_;
    }
  }

  const BalanceProblem& pb_;
  std::int64_t p_;
  std::int64_t v_;
  std::int64_t layers_;
  std::array<std::vector<std::int64_t>, 3> busy_;
  std::array<std::vector<std::int64_t>, 3> act_;
  std::vector<std::int64_t> static_;
  std::vector<std::int64_t> min_busy_suffix_;
  std::vector<std::int64_t> extra_suffix_;

  bool time_only_ = false;
  Bytes cap_ = 0;
  std::int64_t best_ = kInf;
  std::optional<PipelinePlan> best_plan_;
  std::int64_t nodes_ = 0;
  bool exhausted_ = false;
  PipelinePlan current_;
  std::vector<std::int64_t> stage_time_;
  std::vector<std::int64_t> stage_mem_;
  std::int64_t max_chunk_ = 0;
};

bool uniform_layers(const BalanceProblem& pb) {
  return std::all_of(pb.layers.begin(), pb.layers.end(),
                     [&](const LayerProfile& l) { return l == pb.layers.front(); });
}

void check_plan(const BalanceProblem& pb, const PipelinePlan& plan) {
  if (plan.stages() != pb.stages || plan.chunks() != pb.chunks ||
      static_cast<std::int64_t>(plan.recompute.size()) != pb.stages) {
    throw IncompletePlan("plan shape does not match the problem");
  }
  if (plan.total_layers() != static_cast<std::int64_t>(pb.layers.size())) {
    throw IncompletePlan("plan does not place every layer exactly once");
  }
}

template <typename Fn>
void for_each_chunk_layer(const PipelinePlan& plan, std::int64_t s, std::int64_t c, Fn&& fn) {
  const std::int64_t first = plan.first_layer(s, c);
  for (std::int64_t l = first; l < first + plan.layer_counts[s][c]; ++l) fn(l);
}

}  // namespace

BalanceProblem make_problem(std::int64_t p, std::int64_t v, std::int64_t m,
                            std::vector<LayerProfile> layers,
                            StageChunkMatrix<std::int64_t> inflight, Bytes memory_cap) {
  BalanceProblem pb;
  pb.stages = p;
  pb.chunks = v;
  pb.micro_batches = m;
  pb.layers = std::move(layers);
  pb.inflight = std::move(inflight);
  pb.extra_forward.assign(p, std::vector<Nanos>(v, Nanos(0)));
  pb.extra_backward = pb.extra_forward;
  pb.extra_act.assign(p, std::vector<Bytes>(v, 0));
  pb.extra_static.assign(p, MemoryBreakdown{});
  pb.memory_cap = memory_cap;
  return pb;
}

Nanos plan_objective(const BalanceProblem& pb, const PipelinePlan& plan) {
  check_plan(pb, plan);
  Nanos t1{0};
  Nanos t2{0};
  for (std::int64_t s = 0; s < pb.stages; ++s) {
    Nanos stage{0};
    for (std::int64_t c = 0; c < pb.chunks; ++c) {
      Nanos chunk = extra_busy(pb, s, c);
      for_each_chunk_layer(
          plan, s, c, [&](std::int64_t l) { chunk += pb.layers[l].busy(plan.recompute[s][c]); });
      stage += chunk;
      t2 = std::max(t2, chunk);
    }
    t1 = std::max(t1, stage);
  }
  return pb.micro_batches * t1 + (pb.stages - 1) * t2;
}

std::vector<MemoryBreakdown> plan_stage_memory(const BalanceProblem& pb, const PipelinePlan& plan) {
  check_plan(pb, plan);
  std::vector<MemoryBreakdown> out(pb.stages);
  for (std::int64_t s = 0; s < pb.stages; ++s) {
    MemoryBreakdown& m = out[s];
    m += pb.extra_static[s];
    for (std::int64_t c = 0; c < pb.chunks; ++c) {
      const int mode = static_cast<int>(plan.recompute[s][c]);
      Bytes act = pb.extra_act[s][c];
      for_each_chunk_layer(plan, s, c, [&](std::int64_t l) {
        m += pb.layers[l].static_memory;
        act += pb.layers[l].act_bytes[mode];
      });
      m.activations += pb.inflight[s][c] * act;
      m.total += pb.inflight[s][c] * act;
    }
  }
  return out;
}

ChunkDurations plan_durations(const BalanceProblem& pb, const PipelinePlan& plan) {
  check_plan(pb, plan);
  ChunkDurations d;
  d.forward = pb.extra_forward;
  d.backward = pb.extra_backward;
  d.recompute.assign(pb.stages, std::vector<Nanos>(pb.chunks, Nanos(0)));
  for (std::int64_t s = 0; s < pb.stages; ++s) {
    for (std::int64_t c = 0; c < pb.chunks; ++c) {
      const int mode = static_cast<int>(plan.recompute[s][c]);
      for_each_chunk_layer(plan, s, c, [&](std::int64_t l) {
        d.forward[s][c] += pb.layers[l].forward;
        d.backward[s][c] += pb.layers[l].backward;
        d.recompute[s][c] += pb.layers[l].recompute[mode];
      });
    }
  }
  return d;
}

Bytes min_feasible_memory(const BalanceProblem& pb) {
  validate_problem(pb);
  // Everything stacked on one stage bounds every plan's peak stage.
  std::int64_t max_inflight = 0;
  for (const auto& row : pb.inflight) {
    for (auto n : row) max_inflight = std::max(max_inflight, n);
  }
  Bytes hi = 0;
  for (const auto& l : pb.layers) {
    hi += l.static_memory.total +
          max_inflight * *std::max_element(l.act_bytes.begin(), l.act_bytes.end());
  }
  for (std::int64_t s = 0; s < pb.stages; ++s) {
    hi += pb.extra_static[s].total;
    for (auto a : pb.extra_act[s]) hi += max_inflight * a;
  }

  const bool uniform = uniform_layers(pb);
  BranchAndBound bnb(pb);
  UniformSolver uni(pb);
  auto feasible = [&](Bytes cap) { return uniform ? uni.feasible(cap) : bnb.feasible(cap); };
  Bytes lo = 0;
  while (lo < hi) {
    const Bytes mid = lo + (hi - lo) / 2;
    if (feasible(mid)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

BalanceResult balance(const BalanceProblem& pb) {
  validate_problem(pb);
  BalanceResult result;
  std::int64_t objective = kInf;
  std::optional<PipelinePlan> plan;
  if (uniform_layers(pb)) {
    plan = UniformSolver(pb).solve(objective);
    result.proven_optimal = true;
  } else {
    BranchAndBound bnb(pb);
    plan = bnb.solve(objective);
    result.proven_optimal = !bnb.exhausted();
    if (!plan && bnb.exhausted()) {
      throw Error("balance: node limit reached before any plan was found");
    }
  }
  if (!plan) {
    const Bytes need = min_feasible_memory(pb);
    throw Infeasible(fmt::format("no plan fits {}; the smallest feasible cap is {}",
                                 format_bytes(pb.memory_cap), format_bytes(need)),
                     need);
  }
  result.plan = std::move(*plan);
  result.objective = Nanos(objective);
  result.per_stage_memory = plan_stage_memory(pb, result.plan);
  return result;
}

BalanceProblem balance_problem(const ParallelStrategy& strategy, const ModelConfig& model,
                               const ClusterTopology& cluster, const TrainingJob& job,
                               ScheduleKind schedule) {
  check_strategy(strategy, model, cluster, job);
  const std::int64_t p = strategy.pp;
  const std::int64_t v = strategy.vpp;
  const TimingProfile timing = timing_profile(model, strategy, job, cluster);
  const MemoryProfile memory = memory_profile(model, strategy, job);

  LayerProfile layer;
  layer.forward = timing.layer_forward;
  layer.backward = timing.layer_backward;
  layer.recompute = timing.layer_recompute;
  layer.static_memory = memory.layer_static;
  layer.act_bytes = memory.layer_act;

  const Bytes cap =
      job.max_device_memory_bytes > 0 ? job.max_device_memory_bytes : cluster.device_memory_bytes;
  BalanceProblem pb = make_problem(p, v, strategy.num_micro_batches,
                                   std::vector<LayerProfile>(model.num_layers, layer),
                                   inflight_table(p, v, strategy.num_micro_batches, schedule), cap);
  pb.extra_forward[0][0] += timing.embedding_forward;
  pb.extra_backward[0][0] += timing.embedding_backward;
  pb.extra_forward[p - 1][v - 1] += timing.head_forward;
  pb.extra_backward[p - 1][v - 1] += timing.head_backward;
  pb.extra_act[p - 1][v - 1] += memory.head_act;
  pb.extra_static[0] += memory.embedding_static;
  pb.extra_static[p - 1] += memory.head_static;
  return pb;
}

BalanceResult balance(const ParallelStrategy& strategy, const ModelConfig& model,
                      const ClusterTopology& cluster, const TrainingJob& job,
                      ScheduleKind schedule) {
  const BalanceProblem pb = balance_problem(strategy, model, cluster, job, schedule);
  BalanceResult result = balance(pb);

  // Independent re-check through the cost model's own accounting.
  const auto inflight =
      inflight_table(strategy.pp, strategy.vpp, strategy.num_micro_batches, schedule);
  const auto check = stage_memory(memory_profile(model, strategy, job), result.plan, inflight);
  for (std::size_t s = 0; s < check.size(); ++s) {
    if (check[s].total > pb.memory_cap || check[s] != result.per_stage_memory[s]) {
      throw std::logic_error(fmt::format("balance: stage {} fails the memory re-check", s));
    }
  }
  return result;
}

}  // namespace moeplan
