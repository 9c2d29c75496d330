/* Copyright (c) 2026 The LayerPipe Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#include "layerpipe/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <functional>
#include <optional>
#include <ostream>
#include <queue>
#include <set>
#include <tuple>

#include "json.hpp"

namespace layerpipe {

std::string_view to_string(Algorithm a) { return a == Algorithm::LayerPipe ? "layerpipe" : "pipedream"; }

Algorithm parse_algorithm(std::string_view name) {
  if (name == "layerpipe") return Algorithm::LayerPipe;
  if (name == "pipedream") return Algorithm::PipeDream;
  throw Error("unknown algorithm '" + std::string(name) + "'");
}

std::string_view to_string(Priority p) { return p == Priority::DeltaFirst ? "delta-first" : "1f1b"; }

std::string_view to_string(EventOp op) {
  switch (op) {
    case EventOp::Fwd:
      return "FWD";
    case EventOp::GradW:
      return "GRAD_W";
    case EventOp::DeltaPrime:
      return "DELTA_PRIME";
    case EventOp::DeltaDoublePrime:
      return "DELTA_DOUBLE_PRIME";
    case EventOp::WeightUpdate:
      return "WEIGHT_UPDATE";
  }
  return "?";
}

Dfg pipeline_dfg(const Allocation& alloc) {
  const auto stage = alloc.stage_of_layer();
  const int n_stages = *std::max_element(stage.begin(), stage.end()) + 1;
  return insert_pipeline_delays(build_training_dfg(stage.size()), stage, n_stages);
}

namespace {

struct Task {
  std::size_t proc = 0;
  double duration = 0;
  int minibatch = 0;
  int layer = 0;
  EventOp op = EventOp::Fwd;
  std::vector<std::size_t> succ;
  int waiting = 0;
  double start = -1;
  double end = -1;
};

struct LayerPlacement {
  std::size_t fwd = 0;
  std::size_t grad_w = 0;
  double t_fwd = 0;
  double t_grad_w = 0;
  struct Part {
    std::size_t proc;
    double cycles;
    EventOp op;
  };
  std::vector<Part> delta;
};

std::vector<LayerPlacement> placements(const Allocation& alloc, const Profile& profile) {
  const std::size_t layers = profile.size();
  std::vector<LayerPlacement> out(layers);
  std::vector<int> fwd_seen(layers, 0), gw_seen(layers, 0);
  std::vector<double> delta_sum(layers, 0);
  for (std::size_t p = 0; p < alloc.processors.size(); ++p) {
    for (const auto& item : alloc.processors[p].items) {
      if (item.layer < 0 || static_cast<std::size_t>(item.layer) >= layers) {
        throw Error("allocation references layer " + std::to_string(item.layer + 1) +
                    " outside the profile");
      }
      auto& pl = out[item.layer];
      switch (item.op) {
        case WorkOp::Fwd:
          pl.fwd = p;
          pl.t_fwd = item.cycles;
          ++fwd_seen[item.layer];
          break;
        case WorkOp::GradW:
          pl.grad_w = p;
          pl.t_grad_w = item.cycles;
          ++gw_seen[item.layer];
          break;
        case WorkOp::DeltaPrime:
        case WorkOp::DeltaDoublePrime:
          pl.delta.push_back({p, item.cycles,
                              item.op == WorkOp::DeltaPrime ? EventOp::DeltaPrime : EventOp::DeltaDoublePrime});
          delta_sum[item.layer] += item.cycles;
          break;
      }
    }
  }
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string name = "layer " + std::to_string(l + 1);
    if (fwd_seen[l] != 1 || gw_seen[l] != 1) {
      throw Error("allocation does not match profile: " + name + " needs one FWD and one GRAD_W");
    }
    const double want = static_cast<double>(profile[l].t_bpdelta);
    if (std::abs(delta_sum[l] - want) > 1e-6 * std::max(1.0, want)) {
      throw Error("allocation does not match profile: " + name + " delta cycles");
    }
  }
  return out;
}

int edge_delays(const Dfg& dfg, int layer, OpKind from, OpKind to) {
  const auto e = dfg.find_edge(dfg.at(layer, from), dfg.at(layer, to));
  if (!e) throw Error("DFG lacks " + std::string(to_string(from)) + " -> " + std::string(to_string(to)) +
                      " for layer " + std::to_string(layer + 1));
  return dfg.edge(*e).delays;
}

}  // namespace

Schedule build_schedule(const Allocation& alloc, const Profile& profile, const Dfg& dfg,
                        const ScheduleOptions& options) {
  const int layers = static_cast<int>(profile.size());
  if (layers == 0) throw Error("empty network");
  if (dfg.layer_count() != layers || alloc.layer_count() != profile.size()) {
    throw Error("allocation, profile and DFG disagree on the layer count");
  }
  const std::size_t n_proc = alloc.processors.size();
  const auto place = placements(alloc, profile);

  std::vector<int> lag_fwd(layers), lag_delta(layers);
  for (int l = 0; l < layers; ++l) {
    const int m = edge_delays(dfg, l, OpKind::GradW, OpKind::WeightUpdate);
    lag_fwd[l] = m + edge_delays(dfg, l, OpKind::WeightUpdate, OpKind::Fwd);
    lag_delta[l] = m + edge_delays(dfg, l, OpKind::WeightUpdate, OpKind::GradDelta);
  }
  // Minibatches in flight at most; fill and drain each take a few of these.
  const int depth = *std::max_element(lag_fwd.begin(), lag_fwd.end()) + 1;
  const int n_mb = options.minibatches > 0 ? options.minibatches : 8 * depth + 8;

  // Task ids, per minibatch and layer.
  std::vector<Task> tasks;
  using Ids = std::vector<std::vector<std::size_t>>;
  Ids fwd(n_mb, std::vector<std::size_t>(layers)), gw = fwd, wu = fwd;
  std::vector<std::vector<std::vector<std::size_t>>> delta(n_mb, std::vector<std::vector<std::size_t>>(layers));
  auto add = [&](std::size_t proc, double dur, int n, int l, EventOp op) {
    Task t;
    t.proc = proc;
    t.duration = dur;
    t.minibatch = n;
    t.layer = l;
    t.op = op;
    tasks.push_back(std::move(t));
    return tasks.size() - 1;
  };
  for (int n = 0; n < n_mb; ++n) {
    for (int l = 0; l < layers; ++l) {
      const auto& pl = place[l];
      fwd[n][l] = add(pl.fwd, pl.t_fwd, n, l, EventOp::Fwd);
      gw[n][l] = add(pl.grad_w, pl.t_grad_w, n, l, EventOp::GradW);
      for (const auto& part : pl.delta) delta[n][l].push_back(add(part.proc, part.cycles, n, l, part.op));
      wu[n][l] = add(pl.grad_w, 0, n, l, EventOp::WeightUpdate);
    }
  }
  auto dep = [&](std::size_t before, std::size_t after) {
    tasks[before].succ.push_back(after);
    ++tasks[after].waiting;
  };
  for (int n = 0; n < n_mb; ++n) {
    for (int l = 0; l < layers; ++l) {
      // delta^l for layer l: from layer l+1, or from the loss at the last FWD.
      std::vector<std::size_t> delta_in =
          l + 1 < layers ? delta[n][l + 1] : std::vector<std::size_t>{fwd[n][layers - 1]};
      if (l > 0) {
        dep(fwd[n][l - 1], fwd[n][l]);
        dep(fwd[n][l - 1], gw[n][l]);
      }
      for (std::size_t d : delta_in) {
        dep(d, gw[n][l]);
        for (std::size_t part : delta[n][l]) dep(d, part);
      }
      if (const int m = n - lag_fwd[l]; m >= 0) dep(wu[m][l], fwd[n][l]);
      if (const int m = n - lag_delta[l]; m >= 0) {
        for (std::size_t part : delta[n][l]) dep(wu[m][l], part);
      }
      dep(gw[n][l], wu[n][l]);
      if (n > 0) dep(wu[n - 1][l], wu[n][l]);
    }
  }

  // Priority keys; smaller runs first.
  auto op_class = [](EventOp op) {
    switch (op) {
      case EventOp::WeightUpdate:
      case EventOp::DeltaPrime:
      case EventOp::DeltaDoublePrime:
        return 0;
      case EventOp::Fwd:
        return 1;
      case EventOp::GradW:
        return 2;
    }
    return 3;
  };
  using Key = std::tuple<int, int, int, int, std::size_t>;
  auto key_of = [&](std::size_t id) -> Key {
    const auto& t = tasks[id];
    const bool forward = t.op == EventOp::Fwd;
    if (options.priority == Priority::OneFOneB) {
      // Oldest minibatch first; forward blocks front to back, backward
      // blocks back to front.
      return {t.minibatch, forward ? 0 : 1, forward ? t.layer : -t.layer, static_cast<int>(t.op), id};
    }
    return {op_class(t.op), t.minibatch, t.layer, static_cast<int>(t.op), id};
  };
  auto block_of = [&](std::size_t id) {
    return std::make_pair(tasks[id].minibatch, tasks[id].op == EventOp::Fwd);
  };

  std::vector<std::set<Key>> ready(n_proc);
  std::vector<std::optional<std::size_t>> running(n_proc), last(n_proc);
  using Done = std::pair<double, std::size_t>;
  std::priority_queue<Done, std::vector<Done>, std::greater<>> pending;
  double now = 0;
  std::size_t finished = 0;

  std::function<void(std::size_t)> complete = [&](std::size_t id) {
    ++finished;
    for (std::size_t s : tasks[id].succ) {
      if (--tasks[s].waiting == 0) ready[tasks[s].proc].insert(key_of(s));
    }
  };
  for (std::size_t id = 0; id < tasks.size(); ++id) {
    if (tasks[id].waiting == 0) ready[tasks[id].proc].insert(key_of(id));
  }

  while (finished < tasks.size()) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t p = 0; p < n_proc; ++p) {
        if (running[p] || ready[p].empty()) continue;
        auto pick = ready[p].begin();
        if (options.priority == Priority::OneFOneB && last[p]) {
          // Finish the current block, else alternate F and B blocks.
          const auto block = block_of(*last[p]);
          auto same = ready[p].end();
          auto flip = ready[p].end();
          for (auto it = ready[p].begin(); it != ready[p].end(); ++it) {
            const auto b = block_of(std::get<4>(*it));
            if (b == block) {
              same = it;
              break;
            }
            if (flip == ready[p].end() && b.second != block.second) flip = it;
          }
          if (same != ready[p].end()) {
            pick = same;
          } else if (flip != ready[p].end()) {
            pick = flip;
          }
        }
        const std::size_t id = std::get<4>(*pick);
        ready[p].erase(pick);
        auto& t = tasks[id];
        t.start = now;
        t.end = now + t.duration;
        last[p] = id;
        changed = true;
        if (t.duration <= 0) {
          complete(id);
        } else {
          running[p] = id;
          pending.push({t.end, p});
        }
      }
    }
    if (pending.empty()) {
      if (finished < tasks.size()) throw Error("schedule deadlocked");
      break;
    }
    now = pending.top().first;
    while (!pending.empty() && pending.top().first == now) {
      const std::size_t p = pending.top().second;
      pending.pop();
      const std::size_t id = *running[p];
      running[p].reset();
      complete(id);
    }
  }

  Schedule s;
  s.minibatches = n_mb;
  std::vector<double> done(n_mb, 0);
  s.events.reserve(tasks.size());
  for (const auto& t : tasks) {
    s.events.push_back({t.proc, t.start, t.end, t.minibatch, t.layer, t.op});
    done[t.minibatch] = std::max(done[t.minibatch], t.end);
  }
  std::stable_sort(s.events.begin(), s.events.end(), [](const Event& a, const Event& b) {
    return std::tie(a.start, a.processor) < std::tie(b.start, b.processor);
  });
  // Measure between two steady points: past the fill, and before the
  // drain where no later minibatch can run ahead.
  std::vector<double> settled(n_mb);
  std::partial_sum(done.begin(), done.end(), settled.begin(), [](double a, double b) { return std::max(a, b); });
  if (n_mb == 1) {
    s.steady_period = s.measured_period = settled[0];
  } else {
    s.warmup = 2 * depth;
    s.cooldown = 2 * depth;
    while (s.warmup + s.cooldown > n_mb - 2) --(s.cooldown > 0 ? s.cooldown : s.warmup);
    const int last = n_mb - 1 - s.cooldown;
    s.measured_period = (settled[last] - settled[s.warmup]) / (last - s.warmup);
    // A finite window can undercount when work runs ahead of it; no steady
    // state beats the busiest processor.
    s.steady_period = std::max(s.measured_period, alloc.max_load());
  }
  s.latency = done[s.warmup] - tasks[fwd[s.warmup][0]].start;
  return s;
}

Schedule best_schedule(const Allocation& alloc, const Profile& profile, const Dfg& dfg, int minibatches) {
  std::optional<Schedule> best;
  for (auto rule : {Priority::DeltaFirst, Priority::OneFOneB}) {
    auto s = build_schedule(alloc, profile, dfg, {minibatches, rule});
    if (!best || s.steady_period < best->steady_period) best = std::move(s);
  }
  return *best;
}

Allocation partition(const Profile& profile, int n_proc, Algorithm algorithm, const LayerPipeOptions& options) {
  return algorithm == Algorithm::LayerPipe ? layerpipe_partition(profile, n_proc, options)
                                           : pipedream_partition(profile, n_proc);
}

Summary evaluate(const Profile& profile, int n_proc, Algorithm algorithm, const EvalOptions& options) {
  const auto alloc = partition(profile, n_proc, algorithm, options.layerpipe);
  const auto sched = best_schedule(alloc, profile, pipeline_dfg(alloc), options.minibatches);
  Summary s;
  s.algorithm = algorithm;
  s.n_proc = n_proc;
  s.steady_period = sched.steady_period;
  s.latency = sched.latency;
  s.speedup = static_cast<double>(profile.total()) / sched.steady_period;
  s.extra_comm_bytes = alloc.extra_comm_bytes;
  return s;
}

double speedup(const NetworkSpec& network, const RunConfig& run, const ArrayConfig& array, int n_proc,
               Algorithm algorithm, const EvalOptions& options) {
  return evaluate(profile_network(network, run, array), n_proc, algorithm, options).speedup;
}

Comparison compare(const Profile& profile, int n_proc, const EvalOptions& options) {
  Comparison c;
  c.layerpipe = evaluate(profile, n_proc, Algorithm::LayerPipe, options);
  c.pipedream = evaluate(profile, n_proc, Algorithm::PipeDream, options);
  c.period_reduction_pct = 100.0 * (1.0 - c.layerpipe.steady_period / c.pipedream.steady_period);
  c.speedup_gain_pct = 100.0 * (c.layerpipe.speedup / c.pipedream.speedup - 1.0);
  return c;
}

void write_gantt_csv(std::ostream& os, const Schedule& schedule) {
  os << "processor,start,end,minibatch,op\n";
  const auto old = os.precision(17);
  for (const auto& e : schedule.events) {
    os << e.processor << ',' << e.start << ',' << e.end << ',' << e.minibatch << ',' << to_string(e.op)
       << ':' << e.layer + 1 << '\n';
  }
  os.precision(old);
}

namespace {

nlohmann::ordered_json summary_json(const Summary& s) {
  return {{"algorithm", std::string(to_string(s.algorithm))},
          {"n_proc", s.n_proc},
          {"steady_period", s.steady_period},
          {"latency", s.latency},
          {"speedup", s.speedup},
          {"extra_comm_bytes", s.extra_comm_bytes}};
}

}  // namespace

void write_summary_json(std::ostream& os, const Summary& summary) {
  os << summary_json(summary).dump(2) << '\n';
}

void write_comparison_json(std::ostream& os, const Comparison& c) {
  nlohmann::ordered_json j{{"layerpipe", summary_json(c.layerpipe)},
                           {"pipedream", summary_json(c.pipedream)},
                           {"period_reduction_pct", c.period_reduction_pct},
                           {"speedup_gain_pct", c.speedup_gain_pct}};
  os << j.dump(2) << '\n';
}

}  // namespace layerpipe
