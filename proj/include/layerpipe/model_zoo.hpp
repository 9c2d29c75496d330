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

#include <string>
#include <string_view>

#include "layerpipe/network.hpp"

namespace layerpipe {

/// Four-layer conv network on a 224x224x3 input used throughout the
/// examples: (5x5, 3->32, p2, s2), (5x5, 32->64, p2, s2),
/// (3x3, 64->128, p1, s2), (3x3, 128->128, p1, s1).
NetworkSpec sample4();

/// The 13 conv layers of VGG16, max-pools folded into the following
/// layer's spatial dims.
NetworkSpec vgg16_conv();

/// Main-path convs of ResNet50 (49 layers) in execution order. Identity
/// shortcuts are recorded as residual adds; projection shortcuts are not
/// modeled.
NetworkSpec resnet50_conv();

/// Looks up "sample4", "vgg16" or "resnet50". Throws Error otherwise.
NetworkSpec builtin_network(std::string_view name);

/// Network file grammar (UTF-8, '#' starts a comment):
///
///   input H×W×C batch=B
///   <name> type=conv f=FH×FW in=C out=K pad=P stride=S [pool=N]
///   <name> type=fc in=C out=K
///   residual from=<name|input> to=<name>
///
/// 'x' is accepted in place of '×'. Errors carry the 1-based line number.
NetworkSpec parse_network(std::string_view text);

/// Inverse of parse_network.
std::string serialize_network(const NetworkSpec& net);

NetworkSpec load_network_file(const std::string& path);

}  // namespace layerpipe
