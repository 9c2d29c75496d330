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
#include <string>
#include <vector>

#include "layerpipe/model_zoo.hpp"
#include "layerpipe/scheduler.hpp"

namespace layerpipe {

struct SweepSpec {
  std::vector<int> arrays{32, 64, 128, 256};  // square side
  std::vector<int> batches{16, 32, 64, 128, 256};
  int min_proc = 2;
  int max_proc = 12;
  std::vector<Algorithm> algorithms{Algorithm::LayerPipe, Algorithm::PipeDream};
};

struct SweepRow {
  int array = 0;  // 0 in mean rows
  int batch = 0;
  int n_proc = 0;
  Algorithm algorithm = Algorithm::LayerPipe;
  double speedup = 0;
  double extra_comm_bytes = 0;
  bool mean = false;
};

/// Every (array, batch, n_proc, algorithm) point in canonical order,
/// followed by one mean row per (n_proc, algorithm). `threads` = 0 reads
/// LAYERPIPE_THREADS, falling back to the hardware concurrency.
std::vector<SweepRow> run_sweep(const NetworkSpec& network, const SweepSpec& spec, const RunConfig& run,
                                const EvalOptions& options = {}, unsigned threads = 0);

// array,batch,n_proc,algorithm,speedup,extra_comm_bytes
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

/// Subcommands: profile | partition | schedule | compare | sweep | dump-dfg.
/// Machine-readable output goes to `out`, diagnostics to `err`. Returns the
/// process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace layerpipe
