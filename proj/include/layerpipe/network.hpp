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
#include <stdexcept>
#include <string>
#include <vector>

namespace layerpipe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LayerType : std::uint8_t { Conv, FullyConnected };

// A convolution layer. FC layers are carried as 1x1 convs over a 1x1 map.
struct LayerSpec {
  std::string name;
  LayerType type = LayerType::Conv;
  int filter_h = 1;
  int filter_w = 1;
  int in_channels = 1;
  int out_channels = 1;
  int padding = 0;
  int stride = 1;
  // Downsampling factor of a max-pool folded after the conv (1 = none).
  int pool = 1;

  // Filled by propagate_dims().
  int in_h = 0;
  int in_w = 0;

  int out_h() const { return (in_h + 2 * padding - filter_h) / stride + 1; }
  int out_w() const { return (in_w + 2 * padding - filter_w) / stride + 1; }
  // Spatial dims handed to the next layer, after the folded pool.
  int next_h() const { return out_h() / pool; }
  int next_w() const { return out_w() / pool; }

  bool operator==(const LayerSpec&) const = default;
};

// Residual add: the output of `from` (nullopt = network input) is summed
// into the output of `to`.
struct ResidualAdd {
  std::optional<std::size_t> from;
  std::size_t to = 0;

  bool operator==(const ResidualAdd&) const = default;
};

struct NetworkSpec {
  int input_h = 0;
  int input_w = 0;
  int input_c = 0;
  int batch = 32;  // default minibatch recorded in the file header
  std::vector<LayerSpec> layers;
  std::vector<ResidualAdd> residuals;

  std::size_t size() const { return layers.size(); }

  // False for the first layer of a residual block: its delta feeds the
  // shortcut summation and may not be split across processors.
  bool delta_splittable(std::size_t layer) const;

  bool operator==(const NetworkSpec&) const = default;
};

// Fills in_h/in_w of every layer from the input dims and checks channel
// counts, output sizes and residual shapes. Throws Error naming the layer.
void propagate_dims(NetworkSpec& net);

}  // namespace layerpipe
