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

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "layerpipe/network.hpp"

namespace layerpipe {

using Cycles = std::int64_t;

// Weight-stationary systolic array. Every tile pays `fill` cycles of
// pipeline fill/drain on top of its stream length.
struct ArrayConfig {
  int rows = 32;
  int cols = 32;
  std::optional<Cycles> fill;  // nullopt: 2*rows + cols - 2

  Cycles fill_cycles() const { return fill ? *fill : Cycles{2} * rows + cols - 2; }

  static ArrayConfig square(int n) { return ArrayConfig{n, n, std::nullopt}; }
};

struct RunConfig {
  int batch = 32;
  int elem_bytes = 1;
  // Count a 1-element border around a^l in the forward boundary transfer.
  bool halo = false;
};

struct ProfileEntry {
  std::string layer;
  Cycles t_fp = 0;
  Cycles t_bpg = 0;
  Cycles t_bpdelta = 0;
  Cycles t_total = 0;
  std::int64_t comm_fp_bytes = 0;     // a^l across a forward stage boundary
  std::int64_t comm_bp_bytes = 0;     // delta^{l-1} across a backward boundary
  std::int64_t comm_extra_bytes = 0;  // weight slice sent to a borrowing processor
  std::int64_t weight_bytes = 0;      // whole filter bank
  int in_channels = 1;
  bool delta_splittable = true;
};

struct Profile {
  std::vector<ProfileEntry> entries;

  std::size_t size() const { return entries.size(); }
  const ProfileEntry& operator[](std::size_t l) const { return entries[l]; }
  Cycles total() const;
};

// Per-layer immovable (FWD + GRAD_W, plus delta if it may not move) and
// movable (delta) time.
struct LayerClass {
  Cycles t_fix = 0;
  Cycles t_flex = 0;
};

struct Thresholds {
  double comm_bytes = 1 << 20;
  double mem_bytes = 64.0 * (1 << 20);
};

/// Cycles to stream `stream_len` rows through `stat_rows x stat_cols`
/// stationary operands tiled onto the array:
/// ceil(stat_rows/Ar) * ceil(stat_cols/Ac) * (stream_len + fill).
Cycles ws_gemm_cycles(std::int64_t stat_rows, std::int64_t stat_cols, std::int64_t stream_len,
                      const ArrayConfig& array);

ProfileEntry profile_layer(const LayerSpec& layer, const RunConfig& run, const ArrayConfig& array);

Profile profile_network(const NetworkSpec& net, const RunConfig& run, const ArrayConfig& array);

std::vector<LayerClass> classify_movable(const Profile& profile, const Thresholds& thresholds = {});

// CSV with header layer,t_fp,t_bpg,t_bpdelta,t_total,comm_fp,comm_bp,comm_extra
void write_profile_csv(std::ostream& os, const Profile& profile);

}  // namespace layerpipe
