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

#include "layerpipe/partitioner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <tuple>
#include <utility>
#include <ostream>

#include "json.hpp"

namespace layerpipe {

std::string_view to_string(WorkOp op) {
  switch (op) {
    case WorkOp::Fwd:
      return "FWD";
    case WorkOp::GradW:
      return "GRAD_W";
    case WorkOp::DeltaPrime:
      return "DELTA_PRIME";
    case WorkOp::DeltaDoublePrime:
      return "DELTA_DOUBLE_PRIME";
  }
  return "?";
}

double ProcessorLoad::total() const {
  double sum = 0;
  for (const auto& item : items) sum += item.cycles;
  return sum;
}

double ProcessorLoad::borrowed() const {
  double sum = 0;
  for (const auto& item : items) {
    if (item.borrowed) sum += item.cycles;
  }
  return sum;
}

double Allocation::max_load() const {
  double best = 0;
  for (const auto& p : processors) best = std::max(best, p.total());
  return best;
}

double Allocation::total() const {
  double sum = 0;
  for (const auto& p : processors) sum += p.total();
  return sum;
}

std::size_t Allocation::layer_count() const {
  int max_layer = -1;
  for (const auto& p : processors) {
    for (const auto& item : p.items) max_layer = std::max(max_layer, item.layer);
  }
  return static_cast<std::size_t>(max_layer + 1);
}

std::vector<int> Allocation::stage_of_layer() const {
  std::vector<int> stage(layer_count(), -1);
  for (std::size_t p = 0; p < processors.size(); ++p) {
    for (const auto& item : processors[p].items) {
      if (item.op == WorkOp::Fwd) stage[item.layer] = static_cast<int>(p);
    }
  }
  for (std::size_t l = 0; l < stage.size(); ++l) {
    if (stage[l] < 0) throw Error("layer " + std::to_string(l + 1) + " has no FWD item");
  }
  return stage;
}

int Allocation::used_processors() const {
  return static_cast<int>(std::count_if(processors.begin(), processors.end(),
                                        [](const ProcessorLoad& p) { return !p.items.empty(); }));
}

DeltaSplit op_split(double t_idle, double t_flex, int in_channels, bool granular) {
  if (!(t_idle > 0) || !(t_idle < t_flex)) throw Error("op_split: need 0 < t_idle < t_flex");
  DeltaSplit s;
  s.fraction = t_idle / t_flex;
  if (granular) {
    if (in_channels < 1) throw Error("op_split: in_channels must be >= 1");
    s.fraction = std::floor(s.fraction * in_channels) / in_channels;
    if (s.fraction <= 0) throw Error("op_split: no whole channel fits the idle time");
  }
  s.delta_double_prime = granular ? s.fraction * t_flex : t_idle;
  s.delta_prime = t_flex - s.delta_double_prime;
  return s;
}

namespace {

void sort_items(std::vector<ProcessorLoad>& procs) {
  for (auto& p : procs) {
    std::stable_sort(p.items.begin(), p.items.end(), [](const WorkItem& a, const WorkItem& b) {
      return std::tie(a.layer, a.op) < std::tie(b.layer, b.op);
    });
  }
}

Allocation finish(std::vector<ProcessorLoad> back_to_front, int n_proc) {
  Allocation a;
  a.processors.assign(back_to_front.rbegin(), back_to_front.rend());
  a.processors.resize(static_cast<std::size_t>(n_proc));
  sort_items(a.processors);
  return a;
}

// One pass of the reverse-order allocation at processor budget t_p.
// Returns nullopt when a single piece exceeds t_p or more than n_proc
// processors are needed.
std::optional<Allocation> allocate_round(const Profile& profile, const std::vector<LayerClass>& cls,
                                         int n_proc, double t_p, const LayerPipeOptions& opt) {
  const double tol = 1e-9 * t_p;
  std::vector<ProcessorLoad> procs(1);
  double idle = t_p;
  std::int64_t extra = 0;
  auto advance = [&](double first_load) {
    procs.emplace_back();
    idle = t_p - first_load;
    return static_cast<int>(procs.size()) <= n_proc;
  };

  for (int l = static_cast<int>(profile.size()) - 1; l >= 0; --l) {
    const auto& e = profile[l];
    const double flex = static_cast<double>(cls[l].t_flex);
    const double fix = static_cast<double>(cls[l].t_fix);

    if (flex > 0) {
      if (flex <= idle + tol) {
        procs.back().items.push_back({l, WorkOp::DeltaPrime, flex, false, 1.0});
        idle -= flex;
      } else {
        DeltaSplit s{flex, 0, 0};
        if (idle > tol) {
          try {
            s = op_split(idle, flex, e.in_channels, opt.granular);
          } catch (const Error&) {
            s = DeltaSplit{flex, 0, 0};  // granular split with no whole channel
          }
        }
        if (s.delta_double_prime > 0) {
          procs.back().items.push_back({l, WorkOp::DeltaDoublePrime, s.delta_double_prime, true, s.fraction});
          extra += e.comm_extra_bytes;
        }
        if (s.delta_prime > t_p + tol) return std::nullopt;
        if (!advance(s.delta_prime)) return std::nullopt;
        procs.back().items.push_back({l, WorkOp::DeltaPrime, s.delta_prime, false, 1.0 - s.fraction});
      }
    }

    if (fix > idle + tol) {
      if (fix > t_p + tol) return std::nullopt;
      if (!advance(0)) return std::nullopt;
    }
    procs.back().items.push_back({l, WorkOp::Fwd, static_cast<double>(e.t_fp), false, 1.0});
    procs.back().items.push_back({l, WorkOp::GradW, static_cast<double>(e.t_bpg), false, 1.0});
    if (cls[l].t_flex == 0) {
      procs.back().items.push_back({l, WorkOp::DeltaPrime, static_cast<double>(e.t_bpdelta), false, 1.0});
    }
    idle -= fix;
  }
  Allocation a = finish(std::move(procs), n_proc);
  a.extra_comm_bytes = extra;
  a.target = t_p;
  return a;
}

std::int64_t optimal_bottleneck(const Profile& profile, int n_proc) {
  const std::size_t n = profile.size();
  std::vector<std::int64_t> prefix(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + profile[i].t_total;
  // best[i] = min bottleneck for layers [i, n) over the stages left.
  std::vector<std::int64_t> best(n + 1);
  for (std::size_t i = 0; i <= n; ++i) best[i] = prefix[n] - prefix[i];
  for (int k = 2; k <= n_proc; ++k) {
    std::vector<std::int64_t> next(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::int64_t v = std::numeric_limits<std::int64_t>::max();
      for (std::size_t j = i + 1; j <= n; ++j) {
        v = std::min(v, std::max(prefix[j] - prefix[i], best[j]));
      }
      next[i] = v;
    }
    best = std::move(next);
  }
  return best[0];
}

}  // namespace

Allocation layerpipe_partition(const Profile& profile, int n_proc, const LayerPipeOptions& opt) {
  if (n_proc < 1) throw Error("n_proc must be >= 1");
  if (!(opt.alpha > 1)) throw Error("alpha must be > 1");
  if (profile.size() == 0) throw Error("empty network");
  auto cls = classify_movable(profile, opt.thresholds);
  // No layer follows the last one, so its delta has nowhere to move.
  cls.back().t_fix += std::exchange(cls.back().t_flex, 0);
  const double t_tot = static_cast<double>(profile.total());

  double t_p = t_tot / n_proc;
  int relaxations = 0;
  std::optional<Allocation> best;
  while (!(best = allocate_round(profile, cls, n_proc, t_p, opt))) {
    t_p *= opt.alpha;
    ++relaxations;
  }
  best->relaxations = relaxations;

  if (opt.refine && relaxations > 0) {
    auto consider = [&](double budget) {
      auto a = allocate_round(profile, cls, n_proc, budget, opt);
      if (!a) return false;
      if (a->max_load() < best->max_load()) {
        a->relaxations = relaxations;
        best = std::move(a);
      }
      return true;
    };
    double lo = t_p / opt.alpha;
    double hi = t_p;
    for (int i = 0; i < opt.refine_steps; ++i) {
      const double mid = 0.5 * (lo + hi);
      (consider(mid) ? hi : lo) = mid;
    }
    // The contiguous optimum is always a feasible budget.
    consider(static_cast<double>(optimal_bottleneck(profile, n_proc)));
  }
  return *best;
}

Allocation pipedream_partition(const Profile& profile, int n_proc) {
  if (n_proc < 1) throw Error("n_proc must be >= 1");
  if (profile.size() == 0) throw Error("empty network");
  const std::int64_t bound = optimal_bottleneck(profile, n_proc);
  std::vector<ProcessorLoad> procs(1);
  std::int64_t load = 0;
  for (int l = static_cast<int>(profile.size()) - 1; l >= 0; --l) {
    const auto& e = profile[l];
    if (load + e.t_total > bound) {
      procs.emplace_back();
      load = 0;
    }
    load += e.t_total;
    procs.back().items.push_back({l, WorkOp::Fwd, static_cast<double>(e.t_fp), false, 1.0});
    procs.back().items.push_back({l, WorkOp::GradW, static_cast<double>(e.t_bpg), false, 1.0});
    procs.back().items.push_back({l, WorkOp::DeltaPrime, static_cast<double>(e.t_bpdelta), false, 1.0});
  }
  return finish(std::move(procs), n_proc);
}

void write_allocation_json(std::ostream& os, const Allocation& alloc) {
  nlohmann::ordered_json j;
  auto& procs = j["processors"] = nlohmann::ordered_json::array();
  for (std::size_t p = 0; p < alloc.processors.size(); ++p) {
    nlohmann::ordered_json items = nlohmann::ordered_json::array();
    for (const auto& item : alloc.processors[p].items) {
      items.push_back({{"layer", item.layer + 1},
                       {"op", std::string(to_string(item.op))},
                       {"cycles", item.cycles},
                       {"fraction", item.fraction}});
    }
    procs.push_back({{"id", p}, {"items", std::move(items)}, {"total", alloc.processors[p].total()}});
  }
  j["extra_comm_bytes"] = alloc.extra_comm_bytes;
  j["relaxations"] = alloc.relaxations;
  os << j.dump(2) << '\n';
}

}  // namespace layerpipe
