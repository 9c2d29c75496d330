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

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "layerpipe/cost_model.hpp"
#include "layerpipe/graph.hpp"
#include "layerpipe/partitioner.hpp"

namespace layerpipe {

enum class Algorithm : std::uint8_t { LayerPipe, PipeDream };

std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view name);

enum class EventOp : std::uint8_t { Fwd, GradW, DeltaPrime, DeltaDoublePrime, WeightUpdate };

std::string_view to_string(EventOp op);

struct Event {
  std::size_t processor = 0;
  double start = 0;
  double end = 0;
  int minibatch = 0;
  int layer = 0;  // 0-based
  EventOp op = EventOp::Fwd;
};

struct Schedule {
  std::vector<Event> events;  // sorted by (start, processor)
  double steady_period = 0;    // max(measured_period, busiest processor load)
  double measured_period = 0;  // completion-time slope over the window
  double latency = 0;
  int minibatches = 0;
  int warmup = 0;    // minibatches before the measured window
  int cooldown = 0;  // minibatches after it
};

// Ready-list rules. DeltaFirst: delta work, then FWD, then GRAD_W, oldest
// minibatch first within a class. OneFOneB: oldest minibatch first, a
// started F or B block is finished before the processor switches, and
// blocks alternate between F and B when both are ready.
enum class Priority : std::uint8_t { DeltaFirst, OneFOneB };

std::string_view to_string(Priority p);

struct ScheduleOptions {
  int minibatches = 0;  // 0: 8 * (max weight lag + 1) + 8
  Priority priority = Priority::DeltaFirst;
};

/// Delay-annotated DFG for an allocation: training DFG with pipeline
/// delays inserted for the allocation's FWD stage map.
Dfg pipeline_dfg(const Allocation& alloc);

/// Non-preemptive list schedule of `minibatches` minibatches. Data edges
/// are same-minibatch dependencies. The delays on GRAD_W -> WEIGHT_UPDATE,
/// WEIGHT_UPDATE -> FWD and WEIGHT_UPDATE -> GRAD_DELTA give the
/// weight-version offsets: the update of layer l applying the gradient of
/// minibatch m runs after GRAD_W_l(m), and FWD_l(n) waits for the update
/// applying minibatch n - d(WU->FWD) - d(GRAD_W->WU).
Schedule build_schedule(const Allocation& alloc, const Profile& profile, const Dfg& dfg,
                        const ScheduleOptions& options = {});

/// Schedules under every priority rule and keeps the lowest steady period
/// (earlier rule on ties).
Schedule best_schedule(const Allocation& alloc, const Profile& profile, const Dfg& dfg, int minibatches = 0);

struct Summary {
  Algorithm algorithm = Algorithm::LayerPipe;
  int n_proc = 1;
  double steady_period = 0;
  double latency = 0;
  double speedup = 0;
  std::int64_t extra_comm_bytes = 0;
};

struct EvalOptions {
  LayerPipeOptions layerpipe;
  int minibatches = 0;
};

Allocation partition(const Profile& profile, int n_proc, Algorithm algorithm,
                     const LayerPipeOptions& options = {});

Summary evaluate(const Profile& profile, int n_proc, Algorithm algorithm, const EvalOptions& options = {});

/// T_tot on one processor over the simulated steady-state period.
double speedup(const NetworkSpec& network, const RunConfig& run, const ArrayConfig& array, int n_proc,
               Algorithm algorithm, const EvalOptions& options = {});

struct Comparison {
  Summary layerpipe;
  Summary pipedream;
  double period_reduction_pct = 0;  // 100 * (1 - LP period / PD period)
  double speedup_gain_pct = 0;      // 100 * (LP speedup / PD speedup - 1)
};

Comparison compare(const Profile& profile, int n_proc, const EvalOptions& options = {});

// processor,start,end,minibatch,op with op as KIND:layer (1-based layer).
void write_gantt_csv(std::ostream& os, const Schedule& schedule);
void write_summary_json(std::ostream& os, const Summary& summary);
void write_comparison_json(std::ostream& os, const Comparison& comparison);

}  // namespace layerpipe
