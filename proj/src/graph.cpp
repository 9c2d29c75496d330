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

#include "layerpipe/graph.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>
#include <tuple>

namespace layerpipe {

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Fwd:
      return "FWD";
    case OpKind::GradW:
      return "GRAD_W";
    case OpKind::GradDelta:
      return "GRAD_DELTA";
    case OpKind::WeightUpdate:
      return "WEIGHT_UPDATE";
    case OpKind::Input:
      return "INPUT";
  }
  return "?";
}

// ---------------------------------------------------------------- Dfg

NodeId Dfg::add_node(const OpNode& node) {
  nodes_.push_back(node);
  return nodes_.size() - 1;
}

EdgeId Dfg::add_edge(NodeId tail, NodeId head, int delays) {
  if (tail >= nodes_.size() || head >= nodes_.size()) throw Error("edge endpoint out of range");
  if (delays < 0) throw Error("edge delays must be >= 0");
  edges_.push_back({tail, head, delays});
  return edges_.size() - 1;
}

std::optional<NodeId> Dfg::find(int layer, OpKind kind) const {
  for (NodeId v = 0; v < nodes_.size(); ++v) {
    if (nodes_[v].layer == layer && nodes_[v].kind == kind) return v;
  }
  return std::nullopt;
}

NodeId Dfg::at(int layer, OpKind kind) const {
  if (auto v = find(layer, kind)) return *v;
  throw Error("no " + std::string(to_string(kind)) + " node for layer " + std::to_string(layer + 1));
}

std::optional<EdgeId> Dfg::find_edge(NodeId tail, NodeId head) const {
  for (EdgeId e = 0; e < edges_.size(); ++e) {
    if (edges_[e].tail == tail && edges_[e].head == head) return e;
  }
  return std::nullopt;
}

int Dfg::layer_count() const {
  int max_layer = -1;
  for (const auto& n : nodes_) max_layer = std::max(max_layer, n.layer);
  return max_layer + 1;
}

Dfg Dfg::with_delays(std::vector<int> delays) const {
  if (delays.size() != edges_.size()) throw Error("delay vector size mismatch");
  Dfg out = *this;
  for (EdgeId e = 0; e < edges_.size(); ++e) {
    if (delays[e] < 0) throw Error("edge delays must be >= 0");
    out.edges_[e].delays = delays[e];
  }
  return out;
}

Dfg Dfg::with_compute_times(std::vector<Cycles> times) const {
  if (times.size() != nodes_.size()) throw Error("compute time vector size mismatch");
  Dfg out = *this;
  for (NodeId v = 0; v < nodes_.size(); ++v) out.nodes_[v].compute_time = times[v];
  return out;
}

Retiming& Retiming::operator+=(const Retiming& other) {
  if (lag.size() < other.lag.size()) lag.resize(other.lag.size(), 0);
  for (std::size_t i = 0; i < other.lag.size(); ++i) lag[i] += other.lag[i];
  return *this;
}

// ---------------------------------------------------------------- build

Dfg build_training_dfg(std::size_t layer_count) {
  if (layer_count == 0) throw Error("empty network");
  Dfg g;
  const NodeId input = g.add_node({-1, OpKind::Input, 0});
  const int n = static_cast<int>(layer_count);
  for (int l = 0; l < n; ++l) {
    for (auto kind : {OpKind::Fwd, OpKind::GradW, OpKind::GradDelta, OpKind::WeightUpdate}) {
      g.add_node({l, kind, 0});
    }
  }
  auto id = [](int l, OpKind k) { return NodeId{1} + 4 * static_cast<NodeId>(l) + static_cast<NodeId>(k); };
  for (int l = 0; l < n; ++l) {
    const NodeId fwd = id(l, OpKind::Fwd);
    const NodeId gw = id(l, OpKind::GradW);
    const NodeId gd = id(l, OpKind::GradDelta);
    const NodeId wu = id(l, OpKind::WeightUpdate);
    // a^{l-1} into the forward op and the weight gradient.
    const NodeId act = l == 0 ? input : id(l - 1, OpKind::Fwd);
    g.add_edge(act, fwd);
    g.add_edge(act, gw);
    // delta^l: from the loss (folded into the last FWD) or from layer l+1.
    const NodeId delta = l == n - 1 ? fwd : id(l + 1, OpKind::GradDelta);
    g.add_edge(delta, gw);
    g.add_edge(delta, gd);
    g.add_edge(gw, wu);
    // Weight register: iteration n runs on W(n-1).
    g.add_edge(wu, fwd, 1);
    g.add_edge(wu, gd, 1);
  }
  return g;
}

Dfg build_training_dfg(const NetworkSpec& network) { return build_training_dfg(network.size()); }

// ---------------------------------------------------------------- SCC

namespace {

std::vector<std::vector<NodeId>> successors(const Dfg& g) {
  std::vector<std::vector<NodeId>> adj(g.node_count());
  for (const auto& e : g.edges()) adj[e.tail].push_back(e.head);
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

// Tarjan; components are numbered in reverse topological order.
std::vector<int> strongly_connected(const std::vector<std::vector<NodeId>>& adj, int& count) {
  const std::size_t n = adj.size();
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
  std::vector<bool> on_stack(n, false);
  std::vector<NodeId> stack;
  int next = 0;
  count = 0;
  struct Frame {
    NodeId v;
    std::size_t child;
  };
  for (NodeId root = 0; root < n; ++root) {
    if (index[root] >= 0) continue;
    std::vector<Frame> call{{root, 0}};
    index[root] = low[root] = next++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      auto& f = call.back();
      if (f.child < adj[f.v].size()) {
        const NodeId w = adj[f.v][f.child++];
        if (index[w] < 0) {
          index[w] = low[w] = next++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
        continue;
      }
      const NodeId v = f.v;
      if (low[v] == index[v]) {
        NodeId w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp[w] = count;
        } while (w != v);
        ++count;
      }
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
    }
  }
  return comp;
}

bool weakly_connected(const Dfg& g, const std::vector<bool>& in_side, bool side) {
  std::vector<NodeId> parent(g.node_count());
  std::iota(parent.begin(), parent.end(), NodeId{0});
  std::function<NodeId(NodeId)> root = [&](NodeId v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (const auto& e : g.edges()) {
    if (in_side[e.tail] == side && in_side[e.head] == side) parent[root(e.tail)] = root(e.head);
  }
  std::optional<NodeId> first;
  for (NodeId v = 0; v < g.node_count(); ++v) {
    if (in_side[v] != side) continue;
    if (!first) {
      first = root(v);
    } else if (root(v) != *first) {
      return false;
    }
  }
  return first.has_value();
}

}  // namespace

std::vector<Cutset> feedforward_cutsets(const Dfg& dfg) {
  const auto adj = successors(dfg);
  int n_comp = 0;
  const auto comp = strongly_connected(adj, n_comp);
  // Tarjan numbers sinks first; flip to topological order.
  std::vector<std::vector<int>> preds(n_comp);
  for (const auto& e : dfg.edges()) {
    const int a = n_comp - 1 - comp[e.tail];
    const int b = n_comp - 1 - comp[e.head];
    if (a != b) preds[b].push_back(a);
  }

  // Predecessor-closed unions of components are exactly the source sides
  // whose cut edges all point outward.
  constexpr std::size_t kMaxIdeals = 1 << 20;
  std::vector<std::vector<bool>> ideals;
  std::vector<bool> chosen(n_comp, false);
  std::function<void(int)> grow = [&](int c) {
    if (ideals.size() > kMaxIdeals) throw Error("too many feedforward cutsets to enumerate");
    if (c == n_comp) {
      ideals.push_back(chosen);
      return;
    }
    grow(c + 1);
    if (std::all_of(preds[c].begin(), preds[c].end(), [&](int p) { return chosen[p]; })) {
      chosen[c] = true;
      grow(c + 1);
      chosen[c] = false;
    }
  };
  grow(0);

  std::vector<Cutset> out;
  for (const auto& ideal : ideals) {
    std::vector<bool> in_source(dfg.node_count());
    std::size_t count = 0;
    for (NodeId v = 0; v < dfg.node_count(); ++v) {
      in_source[v] = ideal[n_comp - 1 - comp[v]];
      count += in_source[v];
    }
    if (count == 0 || count == dfg.node_count()) continue;
    if (!weakly_connected(dfg, in_source, true) || !weakly_connected(dfg, in_source, false)) continue;
    Cutset cut;
    for (EdgeId e = 0; e < dfg.edge_count(); ++e) {
      const auto& edge = dfg.edge(e);
      if (in_source[edge.tail] != in_source[edge.head]) {
        cut.edges.push_back(e);
        cut.forward.push_back(true);
      }
    }
    if (cut.edges.empty()) continue;
    for (NodeId v = 0; v < dfg.node_count(); ++v) {
      if (in_source[v]) cut.source_side.push_back(v);
    }
    out.push_back(std::move(cut));
  }
  std::sort(out.begin(), out.end(), [](const Cutset& a, const Cutset& b) { return a.edges < b.edges; });
  return out;
}

// ---------------------------------------------------------------- delays

Dfg insert_pipeline_delays(const Dfg& dfg, std::span<const int> stage_of_layer, int n_stages) {
  const int layers = dfg.layer_count();
  if (n_stages < 1) throw Error("n_stages must be >= 1");
  if (static_cast<int>(stage_of_layer.size()) != layers) {
    throw Error("stage map has " + std::to_string(stage_of_layer.size()) + " entries for " +
                std::to_string(layers) + " layers");
  }
  for (int l = 0; l < layers; ++l) {
    if (stage_of_layer[l] < 0 || stage_of_layer[l] >= n_stages) {
      throw Error("stage of layer " + std::to_string(l + 1) + " out of range");
    }
    if (l > 0 && stage_of_layer[l] < stage_of_layer[l - 1]) {
      throw Error("stage map is not monotone at layer " + std::to_string(l + 1));
    }
  }
  std::vector<int> delays(dfg.edge_count());
  for (EdgeId e = 0; e < dfg.edge_count(); ++e) delays[e] = dfg.edge(e).delays;
  for (const auto& cut : feedforward_cutsets(dfg)) {
    for (EdgeId e : cut.edges) delays[e] += n_stages;
  }
  for (int l = 0; l < layers; ++l) {
    const auto e = dfg.find_edge(dfg.at(l, OpKind::GradW), dfg.at(l, OpKind::WeightUpdate));
    if (!e) throw Error("missing GRAD_W -> WEIGHT_UPDATE edge for layer " + std::to_string(l + 1));
    delays[*e] += 2 * (n_stages - 1 - stage_of_layer[l]);
  }
  return dfg.with_delays(std::move(delays));
}

namespace {

std::string describe(const Dfg& g, NodeId v) {
  const auto& n = g.node(v);
  return std::string(to_string(n.kind)) + ":" + std::to_string(n.layer + 1);
}

}  // namespace

Dfg retime(const Dfg& dfg, const Retiming& r) {
  if (r.lag.size() != dfg.node_count()) throw Error("retiming size does not match node count");
  std::vector<int> delays(dfg.edge_count());
  for (EdgeId e = 0; e < dfg.edge_count(); ++e) {
    const auto& edge = dfg.edge(e);
    delays[e] = edge.delays + r.lag[edge.head] - r.lag[edge.tail];
    if (delays[e] < 0) {
      throw Error("illegal retiming: edge " + describe(dfg, edge.tail) + " -> " +
                  describe(dfg, edge.head) + " would carry " + std::to_string(delays[e]) +
                  " delays");
    }
  }
  return dfg.with_delays(std::move(delays));
}

Retiming cutset_retiming(const Dfg& dfg, std::span<const NodeId> side, int k) {
  Retiming r{std::vector<int>(dfg.node_count(), 0)};
  for (NodeId v : side) r.lag.at(v) = k;
  return r;
}

std::pair<Dfg, StashReport> derive_pipelined_dfg(const Dfg& dfg, std::span<const int> stage_of_layer,
                                                 int n_stages) {
  const Dfg inserted = insert_pipeline_delays(dfg, stage_of_layer, n_stages);
  const int layers = dfg.layer_count();
  const int k_stages = n_stages;
  const NodeId input = dfg.at(-1, OpKind::Input);

  // One forward and one backward unit shift per stage boundary b: the
  // forward ops behind the boundary and the backward ops in front of it.
  Retiming r{std::vector<int>(dfg.node_count(), 0)};
  for (int b = 0; b + 1 < k_stages; ++b) {
    std::vector<NodeId> fwd_side;
    std::vector<NodeId> bwd_side;
    if (stage_of_layer[0] > b) fwd_side.push_back(input);
    for (int l = 0; l < layers; ++l) {
      if (stage_of_layer[l] > b) {
        fwd_side.push_back(dfg.at(l, OpKind::Fwd));
        fwd_side.push_back(dfg.at(l, OpKind::WeightUpdate));
      } else {
        bwd_side.push_back(dfg.at(l, OpKind::GradW));
        bwd_side.push_back(dfg.at(l, OpKind::GradDelta));
      }
    }
    r += cutset_retiming(dfg, fwd_side, 1);
    r += cutset_retiming(dfg, bwd_side, 1);
  }
  // The backward half trails the forward half by the K-1 boundaries of the
  // forward sweep.
  std::vector<NodeId> backward;
  for (int l = 0; l < layers; ++l) {
    backward.push_back(dfg.at(l, OpKind::GradW));
    backward.push_back(dfg.at(l, OpKind::GradDelta));
  }
  r += cutset_retiming(dfg, backward, k_stages - 1);
  // Absorb the delays pipelined onto the input and output cutsets.
  const NodeId in_side[] = {input};
  const NodeId out_side[] = {dfg.at(0, OpKind::GradDelta)};
  r += cutset_retiming(dfg, in_side, k_stages);
  r += cutset_retiming(dfg, out_side, -k_stages);

  Dfg out = retime(inserted, r);

  auto delays_on = [&](NodeId a, NodeId b) {
    const auto e = out.find_edge(a, b);
    if (!e) throw Error("missing edge " + describe(out, a) + " -> " + describe(out, b));
    return out.edge(*e).delays;
  };
  StashReport report;
  for (int l = 0; l < layers; ++l) {
    LayerStash s;
    s.delayed_gradient = 2 * (n_stages - 1 - stage_of_layer[l]);
    const NodeId wu = out.at(l, OpKind::WeightUpdate);
    s.weight_stash = delays_on(wu, out.at(l, OpKind::GradDelta)) - delays_on(wu, out.at(l, OpKind::Fwd));
    const NodeId act = l == 0 ? input : out.at(l - 1, OpKind::Fwd);
    const int crossed = l == 0 ? 0 : stage_of_layer[l] - stage_of_layer[l - 1];
    s.activation_stash = delays_on(act, out.at(l, OpKind::GradW)) - crossed;
    report.layers.push_back(s);
  }
  return {std::move(out), std::move(report)};
}

// ---------------------------------------------------------------- cycles

std::vector<std::vector<NodeId>> simple_cycles(const Dfg& dfg, std::size_t max_cycles) {
  const auto adj = successors(dfg);
  const std::size_t n = adj.size();
  std::vector<std::vector<NodeId>> cycles;
  std::vector<bool> blocked(n, false);
  std::vector<std::vector<NodeId>> block_map(n);
  std::vector<NodeId> path;

  std::function<void(NodeId)> unblock = [&](NodeId u) {
    blocked[u] = false;
    while (!block_map[u].empty()) {
      const NodeId w = block_map[u].back();
      block_map[u].pop_back();
      if (blocked[w]) unblock(w);
    }
  };
  std::function<bool(NodeId, NodeId)> circuit = [&](NodeId v, NodeId s) -> bool {
    bool found = false;
    path.push_back(v);
    blocked[v] = true;
    for (NodeId w : adj[v]) {
      if (w < s || cycles.size() >= max_cycles) continue;
      if (w == s) {
        cycles.push_back(path);
        found = true;
      } else if (!blocked[w] && circuit(w, s)) {
        found = true;
      }
    }
    if (found) {
      unblock(v);
    } else {
      for (NodeId w : adj[v]) {
        if (w >= s && std::find(block_map[w].begin(), block_map[w].end(), v) == block_map[w].end()) {
          block_map[w].push_back(v);
        }
      }
    }
    path.pop_back();
    return found;
  };
  for (NodeId s = 0; s < n && cycles.size() < max_cycles; ++s) {
    std::fill(blocked.begin(), blocked.end(), false);
    for (auto& b : block_map) b.clear();
    circuit(s, s);
  }
  std::sort(cycles.begin(), cycles.end());
  return cycles;
}

namespace {

using Wide = __int128;

bool has_zero_delay_cycle(const Dfg& g) {
  std::vector<int> indeg(g.node_count(), 0);
  std::vector<std::vector<NodeId>> adj(g.node_count());
  for (const auto& e : g.edges()) {
    if (e.delays == 0) {
      adj[e.tail].push_back(e.head);
      ++indeg[e.head];
    }
  }
  std::vector<NodeId> ready;
  for (NodeId v = 0; v < g.node_count(); ++v) {
    if (indeg[v] == 0) ready.push_back(v);
  }
  std::size_t seen = 0;
  while (!ready.empty()) {
    const NodeId v = ready.back();
    ready.pop_back();
    ++seen;
    for (NodeId w : adj[v]) {
      if (--indeg[w] == 0) ready.push_back(w);
    }
  }
  return seen != g.node_count();
}

// Edge weight q*t(tail) - p*d(e); a cycle is positive iff its time/delay
// ratio exceeds p/q.
struct ParametricGraph {
  const Dfg& g;
  Wide p;
  Wide q;

  Wide weight(const Edge& e) const { return q * g.node(e.tail).compute_time - p * e.delays; }

  // Longest-path potentials from a virtual source. Returns a positive
  // cycle when one exists.
  std::optional<std::vector<NodeId>> potentials(std::vector<Wide>& dist) const {
    const std::size_t n = g.node_count();
    dist.assign(n, 0);
    std::vector<std::optional<EdgeId>> pred(n);
    std::optional<NodeId> last;
    for (std::size_t round = 0; round <= n; ++round) {
      last.reset();
      for (EdgeId id = 0; id < g.edge_count(); ++id) {
        const auto& e = g.edge(id);
        const Wide cand = dist[e.tail] + weight(e);
        if (cand > dist[e.head]) {
          dist[e.head] = cand;
          pred[e.head] = id;
          last = e.head;
        }
      }
      if (!last) return std::nullopt;
    }
    NodeId v = *last;
    for (std::size_t i = 0; i < n; ++i) v = g.edge(*pred[v]).tail;
    std::vector<NodeId> cycle{v};
    for (NodeId u = g.edge(*pred[v]).tail; u != v; u = g.edge(*pred[u]).tail) cycle.push_back(u);
    std::reverse(cycle.begin(), cycle.end());
    return cycle;
  }
};

}  // namespace

CriticalLoops critical_loops(const Dfg& dfg, std::size_t max_loops) {
  if (has_zero_delay_cycle(dfg)) throw Error("deadlocked graph");
  CriticalLoops result;
  ParametricGraph pg{dfg, 0, 1};
  std::vector<Wide> dist;
  // Dinkelbach iteration: each positive cycle found raises the ratio
  // strictly, so this terminates at the maximum.
  while (auto cycle = pg.potentials(dist)) {
    Wide time = 0;
    Wide delays = 0;
    for (std::size_t i = 0; i < cycle->size(); ++i) {
      const NodeId a = (*cycle)[i];
      const NodeId b = (*cycle)[(i + 1) % cycle->size()];
      time += dfg.node(a).compute_time;
      std::optional<int> best;
      for (const auto& e : dfg.edges()) {
        if (e.tail == a && e.head == b && (!best || e.delays < *best)) best = e.delays;
      }
      delays += *best;
    }
    if (time * pg.q <= pg.p * delays) break;
    pg.p = time;
    pg.q = delays;
  }
  result.bound.time = static_cast<Cycles>(pg.p);
  result.bound.delays = static_cast<std::int64_t>(pg.q);

  if (!pg.potentials(dist)) {
    Dfg tight;
    for (const auto& n : dfg.nodes()) tight.add_node(n);
    for (const auto& e : dfg.edges()) {
      if (dist[e.tail] + pg.weight(e) == dist[e.head]) tight.add_edge(e.tail, e.head, e.delays);
    }
    for (auto& c : simple_cycles(tight, max_loops)) {
      // Zero-weight cycles only; any cycle of tight edges has weight 0.
      result.loops.push_back(std::move(c));
    }
  }
  if (result.bound.time == 0 && result.loops.empty()) result.bound.delays = 1;
  return result;
}

// ---------------------------------------------------------------- misc

Dfg annotate_compute_times(const Dfg& dfg, const Profile& profile) {
  if (static_cast<std::size_t>(dfg.layer_count()) != profile.size()) {
    throw Error("profile has " + std::to_string(profile.size()) + " layers, DFG has " +
                std::to_string(dfg.layer_count()));
  }
  std::vector<Cycles> times(dfg.node_count(), 0);
  for (NodeId v = 0; v < dfg.node_count(); ++v) {
    const auto& n = dfg.node(v);
    if (n.layer < 0) continue;
    const auto& e = profile[n.layer];
    switch (n.kind) {
      case OpKind::Fwd:
        times[v] = e.t_fp;
        break;
      case OpKind::GradW:
        times[v] = e.t_bpg;
        break;
      case OpKind::GradDelta:
        times[v] = e.t_bpdelta;
        break;
      default:
        break;
    }
  }
  return dfg.with_compute_times(std::move(times));
}

std::string dump_dfg(const Dfg& dfg) {
  std::vector<EdgeId> order(dfg.edge_count());
  std::iota(order.begin(), order.end(), EdgeId{0});
  auto key = [&](EdgeId id) {
    const auto& e = dfg.edge(id);
    const auto& t = dfg.node(e.tail);
    const auto& h = dfg.node(e.head);
    return std::make_tuple(t.layer, static_cast<int>(t.kind), h.layer, static_cast<int>(h.kind), id);
  };
  std::sort(order.begin(), order.end(), [&](EdgeId a, EdgeId b) { return key(a) < key(b); });
  std::ostringstream os;
  for (EdgeId id : order) {
    const auto& e = dfg.edge(id);
    os << describe(dfg, e.tail) << " -> " << describe(dfg, e.head) << " [delays=" << e.delays << "]\n";
  }
  return os.str();
}

}  // namespace layerpipe
