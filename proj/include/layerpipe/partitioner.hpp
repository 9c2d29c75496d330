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
#include <optional>
#include <string_view>
#include <vector>

#include "layerpipe/cost_model.hpp"

namespace layerpipe {

// DELTA_PRIME is the part of a layer's delta kept by the owning processor
// (the whole delta when unsplit); DELTA_DOUBLE_PRIME is the borrowed part.
enum class WorkOp : std::uint8_t { Fwd, GradW, DeltaPrime, DeltaDoublePrime };

std::string_view to_string(WorkOp op);

struct WorkItem {
  int layer = 0;  // 0-based
  WorkOp op = WorkOp::Fwd;
  double cycles = 0;
  bool borrowed = false;
  double fraction = 1.0;  // share of the layer's delta carried by this item
};

struct ProcessorLoad {
  std::vector<WorkItem> items;

  double total() const;
  double borrowed() const;
};

// Processors are numbered front to back: processor 0 holds layer 0's FWD.
struct Allocation {
  std::vector<ProcessorLoad> processors;
  std::int64_t extra_comm_bytes = 0;
  int relaxations = 0;
  double target = 0;  // final T_p (0 for contiguous baselines)

  double max_load() const;
  double total() const;
  std::size_t layer_count() const;
  // Processor holding each layer's FWD item.
  std::vector<int> stage_of_layer() const;
  // Processors actually used (at least one item).
  int used_processors() const;
};

struct DeltaSplit {
  double delta_prime = 0;
  double delta_double_prime = 0;
  double fraction = 0;  // delta_double_prime / t_flex
};

/// Fill `t_idle` with part of a `t_flex` delta. Granular mode rounds the
/// borrowed fraction down to whole input channels and throws when that
/// leaves nothing to borrow.
DeltaSplit op_split(double t_idle, double t_flex, int in_channels = 1, bool granular = false);

struct LayerPipeOptions {
  double alpha = 1.05;
  bool refine = true;
  int refine_steps = 50;
  bool granular = false;
  Thresholds thresholds;
};

/// Reverse-order allocation with delta borrowing. The last layer's delta
/// stays with the layer.
Allocation layerpipe_partition(const Profile& profile, int n_proc, const LayerPipeOptions& options = {});

/// Contiguous stages minimizing the largest stage total. Among optimal
/// partitions, stages are packed greedily from the last layer.
Allocation pipedream_partition(const Profile& profile, int n_proc);

// {processors:[{id, items:[{layer, op, cycles, fraction}], total}], extra_comm_bytes, relaxations}
void write_allocation_json(std::ostream& os, const Allocation& alloc);

}  // namespace layerpipe
