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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "layerpipe/cost_model.hpp"
#include "layerpipe/network.hpp"

namespace layerpipe {

using NodeId = std::size_t;
using EdgeId = std::size_t;

// FWD computes z^l, a^l; GRAD_W computes G^l; GRAD_DELTA computes
// delta^{l-1} (Hadamard with f'(z) included); WEIGHT_UPDATE applies G^l.
// INPUT is the network-input terminal supplying a^0.
enum class OpKind : std::uint8_t { Fwd, GradW, GradDelta, WeightUpdate, Input };

std::string_view to_string(OpKind kind);

struct OpNode {
  int layer = 0;  // 0-based; -1 for the INPUT terminal
  OpKind kind = OpKind::Fwd;
  Cycles compute_time = 0;
};

// `delays` counts conceptual iteration delays, never negative.
struct Edge {
  NodeId tail = 0;
  NodeId head = 0;
  int delays = 0;
};

class Dfg {
 public:
  NodeId add_node(const OpNode& node);
  EdgeId add_edge(NodeId tail, NodeId head, int delays = 0);

  std::span<const OpNode> nodes() const { return nodes_; }
  std::span<const Edge> edges() const { return edges_; }
  const OpNode& node(NodeId id) const { return nodes_.at(id); }
  const Edge& edge(EdgeId id) const { return edges_.at(id); }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  std::optional<NodeId> find(int layer, OpKind kind) const;
  NodeId at(int layer, OpKind kind) const;  // throws Error when absent
  std::optional<EdgeId> find_edge(NodeId tail, NodeId head) const;

  // Number of network layers (max layer index + 1).
  int layer_count() const;

  Dfg with_delays(std::vector<int> delays) const;
  Dfg with_compute_times(std::vector<Cycles> times) const;

 private:
  std::vector<OpNode> nodes_;
  std::vector<Edge> edges_;
};

struct Cutset {
  std::vector<EdgeId> edges;
  std::vector<bool> forward;  // per edge: tail on the source side
  std::vector<NodeId> source_side;
};

// Node lags; retimed weight w_r(e) = w(e) + r(head) - r(tail).
struct Retiming {
  std::vector<int> lag;

  Retiming& operator+=(const Retiming& other);
};

/// Training DFG with four ops per layer plus the INPUT terminal. The loss
/// is folded into the last FWD node. Every WEIGHT_UPDATE -> {FWD,
/// GRAD_DELTA} weight edge carries the one-iteration weight register; all
/// other edges start with zero delays.
Dfg build_training_dfg(const NetworkSpec& network);
Dfg build_training_dfg(std::size_t layer_count);

/// Cutsets whose edges all point from one side to the other. Both sides
/// must be weakly connected.
std::vector<Cutset> feedforward_cutsets(const Dfg& dfg);

/// Adds `n_stages` delays on every edge of each feedforward cutset and
/// 2 * (n_stages - 1 - stage) delayed-gradient delays on every
/// GRAD_W_l -> WEIGHT_UPDATE_l edge. `stage_of_layer` must be
/// nondecreasing and within [0, n_stages).
Dfg insert_pipeline_delays(const Dfg& dfg, std::span<const int> stage_of_layer, int n_stages);

/// Throws Error("illegal retiming ...") naming the first edge that would
/// go negative.
Dfg retime(const Dfg& dfg, const Retiming& r);

/// Lag k on every node of `side`, zero elsewhere. Moves k delays from the
/// edges leaving `side` onto the edges entering it.
Retiming cutset_retiming(const Dfg& dfg, std::span<const NodeId> side, int k);

struct LayerStash {
  int delayed_gradient = 0;  // delays inserted on GRAD_W -> WEIGHT_UPDATE
  int weight_stash = 0;      // extra weight versions held for GRAD_DELTA
  int activation_stash = 0;  // a^{l-1} versions held for GRAD_W
};

struct StashReport {
  std::vector<LayerStash> layers;
};

/// Delay insertion followed by the stage-boundary cutset retimings.
std::pair<Dfg, StashReport> derive_pipelined_dfg(const Dfg& dfg,
                                                 std::span<const int> stage_of_layer,
                                                 int n_stages);

struct IterationBound {
  Cycles time = 0;    // numerator of the critical ratio
  std::int64_t delays = 1;

  double value() const { return static_cast<double>(time) / static_cast<double>(delays); }
};

struct CriticalLoops {
  IterationBound bound;
  std::vector<std::vector<NodeId>> loops;  // each rotated to start at its smallest id
};

/// Iteration bound max_cycles(sum of node times / delays) and the cycles
/// attaining it. Throws Error("deadlocked graph") on a zero-delay cycle.
CriticalLoops critical_loops(const Dfg& dfg, std::size_t max_loops = 4096);

/// Elementary cycles (Johnson), each rotated to start at its smallest
/// node id, in lexicographic order. Stops after `max_cycles`.
std::vector<std::vector<NodeId>> simple_cycles(const Dfg& dfg, std::size_t max_cycles = 1 << 20);

/// Node times from a profile: FWD = t_fp, GRAD_W = t_bpg,
/// GRAD_DELTA = t_bpdelta, WEIGHT_UPDATE and INPUT = 0.
Dfg annotate_compute_times(const Dfg& dfg, const Profile& profile);

/// "tail KIND:layer -> head KIND:layer [delays=N]" per edge, layers
/// 1-based, ordered by (tail layer, tail kind, head layer, head kind).
std::string dump_dfg(const Dfg& dfg);

}  // namespace layerpipe
