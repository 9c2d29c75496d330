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

#include "layerpipe/network.hpp"

#include <algorithm>
#include <string>

namespace layerpipe {

bool NetworkSpec::delta_splittable(std::size_t layer) const {
  return std::none_of(residuals.begin(), residuals.end(),
                      [&](const ResidualAdd& r) {
                        const std::size_t first = r.from ? *r.from + 1 : 0;
                        return first == layer;
                      });
}

namespace {

[[noreturn]] void fail(const LayerSpec& layer, const std::string& what) {
  throw Error("layer '" + layer.name + "': " + what);
}

}  // namespace

void propagate_dims(NetworkSpec& net) {
  if (net.input_h < 1 || net.input_w < 1 || net.input_c < 1) {
    throw Error("input dims must be positive");
  }
  int h = net.input_h;
  int w = net.input_w;
  int c = net.input_c;
  for (auto& layer : net.layers) {
    if (layer.filter_h < 1 || layer.filter_w < 1) fail(layer, "filter size must be >= 1");
    if (layer.stride < 1) fail(layer, "stride must be >= 1");
    if (layer.padding < 0) fail(layer, "padding must be >= 0");
    if (layer.pool < 1) fail(layer, "pool must be >= 1");
    if (layer.out_channels < 1) fail(layer, "out channels must be >= 1");
    if (layer.type == LayerType::FullyConnected) {
      if (layer.in_channels != h * w * c) {
        fail(layer, "fc input " + std::to_string(layer.in_channels) +
                        " does not match flattened " + std::to_string(h * w * c));
      }
      h = w = 1;
    } else if (layer.in_channels != c) {
      fail(layer, "input channels " + std::to_string(layer.in_channels) +
                      " do not match previous output " + std::to_string(c));
    }
    layer.in_h = h;
    layer.in_w = w;
    if (h + 2 * layer.padding < layer.filter_h || w + 2 * layer.padding < layer.filter_w) {
      fail(layer, "filter larger than padded input");
    }
    if (layer.next_h() < 1 || layer.next_w() < 1) fail(layer, "output collapses to zero");
    h = layer.next_h();
    w = layer.next_w();
    c = layer.out_channels;
  }

  for (const auto& r : net.residuals) {
    if (r.to >= net.layers.size() || (r.from && *r.from >= r.to)) {
      throw Error("residual add references an invalid layer pair");
    }
    const auto& to = net.layers[r.to];
    int fh = net.input_h, fw = net.input_w, fc = net.input_c;
    if (r.from) {
      const auto& from = net.layers[*r.from];
      fh = from.next_h();
      fw = from.next_w();
      fc = from.out_channels;
    }
    if (fh != to.next_h() || fw != to.next_w() || fc != to.out_channels) {
      fail(to, "residual add shape mismatch");
    }
  }
}

}  // namespace layerpipe
