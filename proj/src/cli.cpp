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

#include "layerpipe/cli.hpp"

#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <ostream>
#include <thread>

#include "CLI11.hpp"
#include "layerpipe/cost_model.hpp"
#include "layerpipe/graph.hpp"

namespace layerpipe {

namespace {

unsigned thread_budget(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("LAYERPIPE_THREADS")) {
    unsigned v = 0;
    const std::string_view s(env);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc() && p == s.data() + s.size() && v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string format_double(double v, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

std::vector<SweepRow> run_sweep(const NetworkSpec& network, const SweepSpec& spec, const RunConfig& run,
                                const EvalOptions& options, unsigned threads) {
  if (spec.arrays.empty() || spec.batches.empty() || spec.algorithms.empty()) {
    throw Error("sweep lists must be nonempty");
  }
  if (spec.min_proc < 1 || spec.max_proc < spec.min_proc) throw Error("invalid processor range");
  const int procs = spec.max_proc - spec.min_proc + 1;
  const std::size_t per_point = static_cast<std::size_t>(procs) * spec.algorithms.size();
  const std::size_t points = spec.arrays.size() * spec.batches.size();
  std::vector<SweepRow> rows(points * per_point);

  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(points);
  auto worker = [&] {
    for (std::size_t i; (i = next++) < points;) {
      const int array = spec.arrays[i / spec.batches.size()];
      const int batch = spec.batches[i % spec.batches.size()];
      try {
        RunConfig rc = run;
        rc.batch = batch;
        const auto profile = profile_network(network, rc, ArrayConfig::square(array));
        std::size_t k = i * per_point;
        for (int n = spec.min_proc; n <= spec.max_proc; ++n) {
          for (auto alg : spec.algorithms) {
            const auto s = evaluate(profile, n, alg, options);
            rows[k++] = {array, batch, n, alg, s.speedup, static_cast<double>(s.extra_comm_bytes), false};
          }
        }
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const unsigned n_threads = std::min<unsigned>(thread_budget(threads), static_cast<unsigned>(points));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(e);
  }

  for (std::size_t j = 0; j < per_point; ++j) {
    SweepRow mean = rows[j];
    mean.array = mean.batch = 0;
    mean.mean = true;
    mean.speedup = mean.extra_comm_bytes = 0;
    for (std::size_t i = 0; i < points; ++i) {
      mean.speedup += rows[i * per_point + j].speedup;
      mean.extra_comm_bytes += rows[i * per_point + j].extra_comm_bytes;
    }
    mean.speedup /= static_cast<double>(points);
    mean.extra_comm_bytes /= static_cast<double>(points);
    rows.push_back(mean);
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "array,batch,n_proc,algorithm,speedup,extra_comm_bytes\n";
  for (const auto& r : rows) {
    if (r.mean) {
      os << "mean,mean,";
    } else {
      os << r.array << ',' << r.batch << ',';
    }
    os << r.n_proc << ',' << to_string(r.algorithm) << ',' << format_double(r.speedup, "%.6f") << ','
       << (r.mean ? format_double(r.extra_comm_bytes, "%.1f") : format_double(r.extra_comm_bytes, "%.0f"))
       << '\n';
  }
}

namespace {

struct Common {
  std::string file;
  std::string builtin;
  int batch = 0;
  std::string array = "32";
  std::int64_t fill = -1;
  int elem_bytes = 1;
  bool halo = false;

  int processors = 3;
  double alpha = 1.05;
  double comm_threshold = 1 << 20;
  double mem_threshold = 64.0 * (1 << 20);
  bool granular = false;
  bool no_refine = false;
  std::string algorithm = "layerpipe";
  int minibatches = 0;
};

void add_network_options(CLI::App* cmd, Common& c) {
  cmd->add_option("network", c.file, "Network description file");
  cmd->add_option("--builtin", c.builtin, "Built-in network: sample4, vgg16, resnet50");
  cmd->add_option("--batch", c.batch, "Minibatch size (default: file header)")->check(CLI::PositiveNumber);
  cmd->add_option("--array", c.array, "Systolic array, N or RxC")->capture_default_str();
  cmd->add_option("--fill", c.fill, "Fill cycles per tile (default 2R+C-2)");
  cmd->add_option("--elem-bytes", c.elem_bytes, "Bytes per element")->capture_default_str();
  cmd->add_flag("--halo", c.halo, "Count a 1-element halo in forward transfers");
}

void add_partition_options(CLI::App* cmd, Common& c) {
  cmd->add_option("-n,--processors", c.processors, "Processor count")->capture_default_str();
  cmd->add_option("--alpha", c.alpha, "Relaxation factor")->capture_default_str();
  cmd->add_option("--comm-threshold", c.comm_threshold, "Max extra bytes for a movable delta")
      ->capture_default_str();
  cmd->add_option("--mem-threshold", c.mem_threshold, "Max weight bytes for a movable delta")
      ->capture_default_str();
  cmd->add_flag("--granular", c.granular, "Split deltas at whole input channels");
  cmd->add_flag("--no-refine", c.no_refine, "Stop at the first feasible relaxation");
}

ArrayConfig parse_array(const std::string& s, std::int64_t fill) {
  ArrayConfig a;
  const auto x = s.find_first_of("xX");
  try {
    std::size_t used = 0;
    a.rows = std::stoi(s.substr(0, x), &used);
    if (used != (x == std::string::npos ? s.size() : x)) throw std::invalid_argument(s);
    a.cols = x == std::string::npos ? a.rows : std::stoi(s.substr(x + 1), &used);
    if (x != std::string::npos && used != s.size() - x - 1) throw std::invalid_argument(s);
  } catch (const std::logic_error&) {
    throw Error("bad --array '" + s + "'");
  }
  if (a.rows < 1 || a.cols < 1) throw Error("bad --array '" + s + "'");
  if (fill >= 0) a.fill = fill;
  return a;
}

NetworkSpec load(const Common& c) {
  if (c.file.empty() == c.builtin.empty()) throw Error("give exactly one of a network file or --builtin");
  return c.builtin.empty() ? load_network_file(c.file) : builtin_network(c.builtin);
}

RunConfig run_config(const Common& c, const NetworkSpec& net) {
  RunConfig r;
  r.batch = c.batch > 0 ? c.batch : net.batch;
  r.elem_bytes = c.elem_bytes;
  r.halo = c.halo;
  return r;
}

EvalOptions eval_options(const Common& c) {
  EvalOptions o;
  o.layerpipe.alpha = c.alpha;
  o.layerpipe.refine = !c.no_refine;
  o.layerpipe.granular = c.granular;
  o.layerpipe.thresholds = {c.comm_threshold, c.mem_threshold};
  o.minibatches = c.minibatches;
  return o;
}

std::vector<int> parse_stage_map(const std::string& s) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const std::string tok = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::logic_error&) {
      throw Error("bad --stage-map entry '" + tok + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pipeline-parallel training simulator and partitioner", "layerpipe"};
  app.require_subcommand(1);
  Common c;

  auto* profile = app.add_subcommand("profile", "Per-layer cycle and byte profile (CSV)");
  add_network_options(profile, c);

  auto* part = app.add_subcommand("partition", "Processor allocation (JSON)");
  add_network_options(part, c);
  add_partition_options(part, c);
  part->add_option("--algorithm", c.algorithm, "layerpipe or pipedream")->capture_default_str();

  auto* sched = app.add_subcommand("schedule", "Simulated pipeline schedule");
  add_network_options(sched, c);
  add_partition_options(sched, c);
  sched->add_option("--algorithm", c.algorithm, "layerpipe or pipedream")->capture_default_str();
  sched->add_option("--minibatches", c.minibatches, "Simulated minibatches (default 8 * depth + 8)");
  bool gantt = false;
  sched->add_flag("--gantt", gantt, "Emit the Gantt CSV instead of the summary JSON");

  auto* cmp = app.add_subcommand("compare", "LayerPipe against PipeDream (JSON)");
  add_network_options(cmp, c);
  add_partition_options(cmp, c);

  auto* sweep = app.add_subcommand("sweep", "Speedup sweep over arrays, batches and processors (CSV)");
  add_network_options(sweep, c);
  SweepSpec spec;
  std::string proc_range = "2-12";
  std::vector<std::string> algorithms{"layerpipe", "pipedream"};
  sweep->add_option("--arrays", spec.arrays, "Square array sides")->delimiter(',')->capture_default_str();
  sweep->add_option("--batches", spec.batches, "Minibatch sizes")->delimiter(',')->capture_default_str();
  sweep->add_option("--processors", proc_range, "Processor range A-B or single N")->capture_default_str();
  sweep->add_option("--algorithms", algorithms, "layerpipe,pipedream")->delimiter(',')->capture_default_str();
  sweep->add_option("--alpha", c.alpha, "Relaxation factor")->capture_default_str();
  sweep->add_option("--comm-threshold", c.comm_threshold, "Max extra bytes for a movable delta");
  sweep->add_option("--mem-threshold", c.mem_threshold, "Max weight bytes for a movable delta");

  auto* dump = app.add_subcommand("dump-dfg", "Training DFG edge list");
  add_network_options(dump, c);
  std::string stage_map;
  int stages = 0;
  bool retimed = false;
  dump->add_option("--stage-map", stage_map, "Comma-separated stage per layer; inserts pipeline delays");
  dump->add_option("--stages", stages, "Stage count (default: max stage + 1)");
  dump->add_flag("--retimed", retimed, "Apply the stage-boundary retiming");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    const NetworkSpec net = load(c);
    const RunConfig run = run_config(c, net);
    const ArrayConfig array = parse_array(c.array, c.fill);
    if (*profile) {
      write_profile_csv(out, profile_network(net, run, array));
    } else if (*part) {
      const auto p = profile_network(net, run, array);
      write_allocation_json(out, partition(p, c.processors, parse_algorithm(c.algorithm),
                                           eval_options(c).layerpipe));
    } else if (*sched) {
      const auto p = profile_network(net, run, array);
      const auto alg = parse_algorithm(c.algorithm);
      const auto opts = eval_options(c);
      if (gantt) {
        const auto alloc = partition(p, c.processors, alg, opts.layerpipe);
        write_gantt_csv(out, best_schedule(alloc, p, pipeline_dfg(alloc), c.minibatches));
      } else {
        write_summary_json(out, evaluate(p, c.processors, alg, opts));
      }
    } else if (*cmp) {
      write_comparison_json(out, compare(profile_network(net, run, array), c.processors, eval_options(c)));
    } else if (*sweep) {
      const auto dash = proc_range.find('-');
      try {
        spec.min_proc = std::stoi(proc_range.substr(0, dash));
        spec.max_proc = dash == std::string::npos ? spec.min_proc : std::stoi(proc_range.substr(dash + 1));
      } catch (const std::logic_error&) {
        throw Error("bad --processors '" + proc_range + "'");
      }
      spec.algorithms.clear();
      for (const auto& a : algorithms) spec.algorithms.push_back(parse_algorithm(a));
      write_sweep_csv(out, run_sweep(net, spec, run, eval_options(c)));
    } else if (*dump) {
      Dfg g = build_training_dfg(net);
      if (!stage_map.empty()) {
        const auto map = parse_stage_map(stage_map);
        const int k = stages > 0 ? stages : (map.empty() ? 1 : *std::max_element(map.begin(), map.end()) + 1);
        g = retimed ? derive_pipelined_dfg(g, map, k).first : insert_pipeline_delays(g, map, k);
      } else if (retimed || stages > 0) {
        throw Error("--retimed and --stages need --stage-map");
      }
      out << dump_dfg(g);
    }
  } catch (const std::exception& e) {
    err << "layerpipe: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace layerpipe
