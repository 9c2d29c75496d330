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

#include "layerpipe/cost_model.hpp"

#include <ostream>

namespace layerpipe {

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace

Cycles Profile::total() const {
  Cycles sum = 0;
  for (const auto& e : entries) sum += e.t_total;
  return sum;
}

Cycles ws_gemm_cycles(std::int64_t stat_rows, std::int64_t stat_cols, std::int64_t stream_len,
                      const ArrayConfig& array) {
  if (stat_rows < 1 || stat_cols < 1 || stream_len < 1) {
    throw Error("ws_gemm_cycles: operand dims must be >= 1");
  }
  if (array.rows < 1 || array.cols < 1 || array.fill_cycles() < 0) {
    throw Error("ws_gemm_cycles: invalid array config");
  }
  return ceil_div(stat_rows, array.rows) * ceil_div(stat_cols, array.cols) *
         (stream_len + array.fill_cycles());
}

ProfileEntry profile_layer(const LayerSpec& layer, const RunConfig& run, const ArrayConfig& array) {
  if (run.batch < 1 || run.elem_bytes < 1) throw Error("batch and elem_bytes must be >= 1");
  if (layer.in_h < 1 || layer.in_w < 1 || layer.out_h() < 1 || layer.out_w() < 1) {
    throw Error("layer '" + layer.name + "': dims not propagated");
  }
  const std::int64_t batch = run.batch;
  const std::int64_t area = std::int64_t{layer.filter_h} * layer.filter_w;
  const std::int64_t rows_out = batch * layer.out_h() * layer.out_w();
  const std::int64_t rows_in = batch * layer.in_h * layer.in_w;
  const std::int64_t k = area * layer.in_channels;
  const std::int64_t k_t = area * layer.out_channels;

  ProfileEntry e;
  e.layer = layer.name;
  // z = W a: weights stationary, im2col rows of a^{l-1} streamed.
  e.t_fp = ws_gemm_cycles(k, layer.out_channels, rows_out, array);
  // G = delta a^T: delta^l stationary, a^{l-1} patches streamed.
  e.t_bpg = ws_gemm_cycles(layer.out_channels, rows_out, k, array);
  // W^T delta: transposed filters stationary over the full input map,
  // stride-dilation zeros included.
  e.t_bpdelta = ws_gemm_cycles(k_t, layer.in_channels, rows_in, array);
  e.t_total = e.t_fp + e.t_bpg + e.t_bpdelta;

  const std::int64_t halo = run.halo ? 2 : 0;
  e.comm_fp_bytes = batch * (layer.next_h() + halo) * (layer.next_w() + halo) *
                    layer.out_channels * run.elem_bytes;
  e.comm_bp_bytes = rows_in * layer.in_channels * run.elem_bytes;
  e.comm_extra_bytes = k * run.elem_bytes;
  e.weight_bytes = k * layer.out_channels * run.elem_bytes;
  e.in_channels = layer.in_channels;
  return e;
}

Profile profile_network(const NetworkSpec& net, const RunConfig& run, const ArrayConfig& array) {
  if (net.layers.empty()) throw Error("empty network");
  NetworkSpec checked = net;
  propagate_dims(checked);
  Profile p;
  p.entries.reserve(checked.size());
  for (std::size_t l = 0; l < checked.size(); ++l) {
    auto e = profile_layer(checked.layers[l], run, array);
    e.delta_splittable = checked.delta_splittable(l);
    p.entries.push_back(std::move(e));
  }
  return p;
}

std::vector<LayerClass> classify_movable(const Profile& profile, const Thresholds& thresholds) {
  if (thresholds.comm_bytes < 0 || thresholds.mem_bytes < 0) {
    throw Error("thresholds must be >= 0");
  }
  std::vector<LayerClass> out;
  out.reserve(profile.size());
  for (const auto& e : profile.entries) {
    const bool movable = e.delta_splittable &&
                         static_cast<double>(e.comm_extra_bytes) <= thresholds.comm_bytes &&
                         static_cast<double>(e.weight_bytes) <= thresholds.mem_bytes;
    LayerClass c;
    c.t_flex = movable ? e.t_bpdelta : 0;
    c.t_fix = e.t_total - c.t_flex;
    out.push_back(c);
  }
  return out;
}

void write_profile_csv(std::ostream& os, const Profile& profile) {
  os << "layer,t_fp,t_bpg,t_bpdelta,t_total,comm_fp,comm_bp,comm_extra\n";
  for (const auto& e : profile.entries) {
    os << e.layer << ',' << e.t_fp << ',' << e.t_bpg << ',' << e.t_bpdelta << ',' << e.t_total
       << ',' << e.comm_fp_bytes << ',' << e.comm_bp_bytes << ',' << e.comm_extra_bytes << '\n';
  }
}

}  // namespace layerpipe
