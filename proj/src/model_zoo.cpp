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

#include "layerpipe/model_zoo.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace layerpipe {

namespace {

LayerSpec conv(std::string name, int f, int in, int out, int pad, int stride, int pool = 1) {
  LayerSpec l;
  l.name = std::move(name);
  l.filter_h = l.filter_w = f;
  l.in_channels = in;
  l.out_channels = out;
  l.padding = pad;
  l.stride = stride;
  l.pool = pool;
  return l;
}

NetworkSpec with_input(int h, int w, int c) {
  NetworkSpec net;
  net.input_h = h;
  net.input_w = w;
  net.input_c = c;
  return net;
}

}  // namespace

NetworkSpec sample4() {
  auto net = with_input(224, 224, 3);
  net.layers = {
      conv("layer1", 5, 3, 32, 2, 2),
      conv("layer2", 5, 32, 64, 2, 2),
      conv("layer3", 3, 64, 128, 1, 2),
      conv("layer4", 3, 128, 128, 1, 1),
  };
  propagate_dims(net);
  return net;
}

NetworkSpec vgg16_conv() {
  auto net = with_input(224, 224, 3);
  // Per block: width, number of convs. Every block ends in a 2x2 max-pool.
  const std::pair<int, int> blocks[] = {{64, 2}, {128, 2}, {256, 3}, {512, 3}, {512, 3}};
  int c = 3;
  int b = 1;
  for (auto [width, count] : blocks) {
    for (int i = 1; i <= count; ++i) {
      const int pool = i == count ? 2 : 1;
      net.layers.push_back(conv("conv" + std::to_string(b) + "_" + std::to_string(i), 3, c,
                                width, 1, 1, pool));
      c = width;
    }
    ++b;
  }
  propagate_dims(net);
  return net;
}

NetworkSpec resnet50_conv() {
  auto net = with_input(224, 224, 3);
  net.layers.push_back(conv("conv1", 7, 3, 64, 3, 2, 2));
  struct Stage {
    int width;
    int blocks;
    int stride;
  };
  const Stage stages[] = {{64, 3, 1}, {128, 4, 2}, {256, 6, 2}, {512, 3, 2}};
  int c = 64;
  int s = 2;
  for (const auto& st : stages) {
    for (int b = 0; b < st.blocks; ++b) {
      const std::string prefix = "res" + std::to_string(s) + static_cast<char>('a' + b);
      const std::size_t block_input = net.layers.size() - 1;
      net.layers.push_back(conv(prefix + "_1", 1, c, st.width, 0, 1));
      net.layers.push_back(conv(prefix + "_2", 3, st.width, st.width, 1, b == 0 ? st.stride : 1));
      net.layers.push_back(conv(prefix + "_3", 1, st.width, 4 * st.width, 0, 1));
      if (b > 0) net.residuals.push_back({block_input, net.layers.size() - 1});
      c = 4 * st.width;
    }
    ++s;
  }
  propagate_dims(net);
  return net;
}

NetworkSpec builtin_network(std::string_view name) {
  if (name == "sample4") return sample4();
  if (name == "vgg16") return vgg16_conv();
  if (name == "resnet50") return resnet50_conv();
  throw Error("unknown built-in network '" + std::string(name) + "'");
}

namespace {

constexpr std::string_view kTimes = "\xC3\x97";  // U+00D7

struct ParseError {
  int line;
  std::string what;
};

int to_int(std::string_view s, int line, std::string_view key) {
  int v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) {
    throw ParseError{line, "bad value '" + std::string(s) + "' for " + std::string(key)};
  }
  return v;
}

// "224×224×3" or "5x5" -> {224, 224, 3} / {5, 5}
std::vector<int> to_dims(std::string_view s, int line, std::string_view key) {
  std::string norm(s);
  for (std::size_t pos; (pos = norm.find(kTimes)) != std::string::npos;) {
    norm.replace(pos, kTimes.size(), "x");
  }
  std::vector<int> dims;
  std::size_t start = 0;
  while (true) {
    const auto pos = norm.find('x', start);
    dims.push_back(to_int(std::string_view(norm).substr(start, pos - start), line, key));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return dims;
}

std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::map<std::string, std::string_view, std::less<>> key_values(
    const std::vector<std::string_view>& toks, int line) {
  std::map<std::string, std::string_view, std::less<>> kv;
  for (std::size_t i = 1; i < toks.size(); ++i) {
    const auto eq = toks[i].find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw ParseError{line, "expected key=value, got '" + std::string(toks[i]) + "'"};
    }
    auto [it, fresh] = kv.emplace(std::string(toks[i].substr(0, eq)), toks[i].substr(eq + 1));
    if (!fresh) throw ParseError{line, "duplicate key '" + it->first + "'"};
  }
  return kv;
}

std::string_view require(const std::map<std::string, std::string_view, std::less<>>& kv,
                         std::string_view key, int line) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ParseError{line, "missing key '" + std::string(key) + "'"};
  return it->second;
}

void reject_unknown(const std::map<std::string, std::string_view, std::less<>>& kv,
                    std::initializer_list<std::string_view> allowed, int line) {
  for (const auto& [k, v] : kv) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw ParseError{line, "unknown key '" + k + "'"};
    }
  }
}

NetworkSpec parse_lines(std::string_view text) {
  NetworkSpec net;
  bool have_header = false;
  std::map<std::string, std::size_t, std::less<>> index;
  std::set<std::size_t> residual_targets;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto toks = tokens(line);
    if (toks.empty()) continue;

    if (!have_header) {
      if (toks[0] != "input" || toks.size() < 2) {
        throw ParseError{line_no, "expected header 'input H×W×C batch=B'"};
      }
      const auto dims = to_dims(toks[1], line_no, "input");
      if (dims.size() != 3) throw ParseError{line_no, "input needs H×W×C"};
      net.input_h = dims[0];
      net.input_w = dims[1];
      net.input_c = dims[2];
      std::vector<std::string_view> rest(toks.begin() + 1, toks.end());
      rest[0] = "input";
      const auto kv = key_values(rest, line_no);
      reject_unknown(kv, {"batch"}, line_no);
      if (auto it = kv.find("batch"); it != kv.end()) net.batch = to_int(it->second, line_no, "batch");
      if (net.batch < 1) throw ParseError{line_no, "batch must be >= 1"};
      have_header = true;
      continue;
    }

    const auto kv = key_values(toks, line_no);
    if (toks[0] == "residual") {
      reject_unknown(kv, {"from", "to"}, line_no);
      const auto from = require(kv, "from", line_no);
      const auto to = require(kv, "to", line_no);
      ResidualAdd r;
      if (from != "input") {
        auto it = index.find(from);
        if (it == index.end()) throw ParseError{line_no, "unknown layer '" + std::string(from) + "'"};
        r.from = it->second;
      }
      auto it = index.find(to);
      if (it == index.end()) throw ParseError{line_no, "unknown layer '" + std::string(to) + "'"};
      r.to = it->second;
      if (!residual_targets.insert(r.to).second) {
        throw ParseError{line_no, "layer '" + std::string(to) + "' already has a residual add"};
      }
      net.residuals.push_back(r);
      continue;
    }

    LayerSpec layer;
    layer.name = std::string(toks[0]);
    if (layer.name == "input") throw ParseError{line_no, "'input' is reserved"};
    if (index.count(layer.name)) throw ParseError{line_no, "duplicate layer '" + layer.name + "'"};
    const auto type = require(kv, "type", line_no);
    if (type == "conv") {
      reject_unknown(kv, {"type", "f", "in", "out", "pad", "stride", "pool"}, line_no);
      const auto f = to_dims(require(kv, "f", line_no), line_no, "f");
      if (f.size() != 2) throw ParseError{line_no, "f needs FH×FW"};
      layer.filter_h = f[0];
      layer.filter_w = f[1];
      layer.in_channels = to_int(require(kv, "in", line_no), line_no, "in");
      layer.out_channels = to_int(require(kv, "out", line_no), line_no, "out");
      layer.padding = to_int(require(kv, "pad", line_no), line_no, "pad");
      layer.stride = to_int(require(kv, "stride", line_no), line_no, "stride");
      if (auto it = kv.find("pool"); it != kv.end()) layer.pool = to_int(it->second, line_no, "pool");
    } else if (type == "fc") {
      reject_unknown(kv, {"type", "in", "out"}, line_no);
      layer.type = LayerType::FullyConnected;
      layer.in_channels = to_int(require(kv, "in", line_no), line_no, "in");
      layer.out_channels = to_int(require(kv, "out", line_no), line_no, "out");
    } else {
      throw ParseError{line_no, "unknown layer type '" + std::string(type) + "'"};
    }
    index.emplace(layer.name, net.layers.size());
    net.layers.push_back(std::move(layer));
    try {
      NetworkSpec prefix = net;
      prefix.residuals.clear();
      propagate_dims(prefix);
    } catch (const Error& e) {
      throw ParseError{line_no, e.what()};
    }
  }
  if (!have_header) throw ParseError{line_no, "missing input header"};
  if (net.layers.empty()) throw Error("empty network");
  try {
    propagate_dims(net);
  } catch (const Error& e) {
    throw ParseError{line_no, e.what()};
  }
  return net;
}

}  // namespace

NetworkSpec parse_network(std::string_view text) {
  try {
    return parse_lines(text);
  } catch (const ParseError& e) {
    throw Error("line " + std::to_string(e.line) + ": " + e.what);
  }
}

std::string serialize_network(const NetworkSpec& net) {
  std::ostringstream os;
  os << "input " << net.input_h << kTimes << net.input_w << kTimes << net.input_c
     << " batch=" << net.batch << '\n';
  for (const auto& l : net.layers) {
    os << l.name;
    if (l.type == LayerType::FullyConnected) {
      os << " type=fc in=" << l.in_channels << " out=" << l.out_channels << '\n';
      continue;
    }
    os << " type=conv f=" << l.filter_h << kTimes << l.filter_w << " in=" << l.in_channels
       << " out=" << l.out_channels << " pad=" << l.padding << " stride=" << l.stride;
    if (l.pool != 1) os << " pool=" << l.pool;
    os << '\n';
  }
  for (const auto& r : net.residuals) {
    os << "residual from=" << (r.from ? net.layers[*r.from].name : std::string("input"))
       << " to=" << net.layers[r.to].name << '\n';
  }
  return os.str();
}

NetworkSpec load_network_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read network file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_network(buf.str());
}

}  // namespace layerpipe
