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

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"

#include "layerpipe/model_zoo.hpp"
#include "layerpipe/partitioner.hpp"
#include "oracles.hpp"

namespace layerpipe {
namespace {

Profile sample_profile() {
  return profile_network(sample4(), RunConfig{32, 1, false}, ArrayConfig::square(32));
}

// Per-layer checks shared by every allocation.
void expect_well_formed(const Profile& p, const Allocation& a, int n_proc, const char* what) {
  SCOPED_TRACE(what);
  ASSERT_EQ(a.processors.size(), static_cast<std::size_t>(n_proc));
  std::map<int, int> fwd_at, gw_at, dp_at, ddp_at;
  std::map<int, double> delta;
  for (std::size_t q = 0; q < a.processors.size(); ++q) {
    for (const auto& it : a.processors[q].items) {
      const int proc = static_cast<int>(q);
      switch (it.op) {
        case WorkOp::Fwd:
          EXPECT_TRUE(fwd_at.emplace(it.layer, proc).second);
          EXPECT_EQ(it.cycles, static_cast<double>(p[it.layer].t_fp));
          break;
        case WorkOp::GradW:
          EXPECT_TRUE(gw_at.emplace(it.layer, proc).second);
          EXPECT_EQ(it.cycles, static_cast<double>(p[it.layer].t_bpg));
          break;
        case WorkOp::DeltaPrime:
          EXPECT_TRUE(dp_at.emplace(it.layer, proc).second);
          delta[it.layer] += it.cycles;
          break;
        case WorkOp::DeltaDoublePrime:
          EXPECT_TRUE(ddp_at.emplace(it.layer, proc).second);
          EXPECT_TRUE(it.borrowed);
          delta[it.layer] += it.cycles;
          break;
      }
    }
  }
  double total = 0;
  for (std::size_t l = 0; l < p.size(); ++l) {
    const int li = static_cast<int>(l);
    ASSERT_TRUE(fwd_at.count(li) && gw_at.count(li) && dp_at.count(li)) << "layer " << l;
    EXPECT_EQ(fwd_at[li], gw_at[li]);
    EXPECT_NEAR(delta[li], static_cast<double>(p[l].t_bpdelta), 1e-6 * p[l].t_bpdelta + 1e-6);
    if (ddp_at.count(li)) {
      EXPECT_EQ(ddp_at[li], dp_at[li] + 1);
      ASSERT_LT(l + 1, p.size());
      EXPECT_EQ(ddp_at[li], fwd_at[li + 1]);
    }
    // delta work stays on its own layer's processor or the next layer's
    EXPECT_GE(dp_at[li], fwd_at[li]);
    if (l + 1 < p.size()) EXPECT_LE(dp_at[li], fwd_at[li + 1]);
    if (l > 0) EXPECT_LE(fwd_at[li - 1], fwd_at[li]);
    total += static_cast<double>(p[l].t_total);
  }
  EXPECT_NEAR(a.total(), total, 1e-9 * total);
  EXPECT_GE(a.max_load() * (1 + 1e-12), total / n_proc);
}

TEST(OpSplit, Continuous) {
  const auto s = op_split(1.0, 3.0);
  EXPECT_DOUBLE_EQ(s.fraction, 1.0 / 3);
  EXPECT_DOUBLE_EQ(s.delta_double_prime, 1.0);
  EXPECT_DOUBLE_EQ(s.delta_prime, 2.0);
  const auto l1 = op_split(1.13e7, 4.01e7);
  EXPECT_DOUBLE_EQ(l1.delta_double_prime, 1.13e7);
}

TEST(OpSplit, Errors) {
  EXPECT_THROW(op_split(3.0, 3.0), Error);
  EXPECT_THROW(op_split(0.0, 3.0), Error);
  EXPECT_THROW(op_split(0.28, 1.0, 3, true), Error);
}

TEST(OpSplit, GranularRoundsDown) {
  const auto s = op_split(0.7, 1.0, 3, true);
  EXPECT_DOUBLE_EQ(s.fraction, 2.0 / 3);
  EXPECT_DOUBLE_EQ(s.delta_double_prime, 2.0 / 3);
  EXPECT_LE(s.delta_double_prime, 0.7);
}

TEST(LayerPipe, SampleThreeProcessors) {
  const auto p = sample_profile();
  const auto a = layerpipe_partition(p, 3);
  expect_well_formed(p, a, 3, "sample n=3");
  for (const auto& q : a.processors) EXPECT_NEAR(q.total(), 3.22e7, 0.01 * 3.22e7);
  EXPECT_EQ(a.processors[0].borrowed(), 0);
  EXPECT_NEAR(a.processors[1].borrowed(), 1.13e7, 0.02 * 1.13e7);
  EXPECT_NEAR(a.processors[2].borrowed(), 9.86e6, 0.02 * 9.86e6);
  EXPECT_EQ(a.relaxations, 0);
  // layers 1 and 2 are split
  EXPECT_EQ(a.extra_comm_bytes, 75 + 800);
  EXPECT_EQ(a.stage_of_layer(), (std::vector<int>{0, 1, 2, 2}));
}

TEST(LayerPipe, SampleBorrowedWorkByHand) {
  // Walk the reverse allocation at T_tot / 3 on the profiled cycle counts.
  const auto p = sample_profile();
  const double tp = static_cast<double>(p.total()) / 3;
  double idle = tp;
  idle -= p[3].t_bpdelta;
  idle -= p[3].t_fp + p[3].t_bpg;
  idle -= p[2].t_bpdelta;
  idle -= p[2].t_fp + p[2].t_bpg;
  const double borrowed_l2 = idle;  // layer 2 delta'' fills the last processor
  idle = tp - (p[1].t_bpdelta - borrowed_l2) - (p[1].t_fp + p[1].t_bpg);
  const double borrowed_l1 = idle;
  const auto a = layerpipe_partition(p, 3);
  EXPECT_NEAR(a.processors[2].borrowed(), borrowed_l2, 1);
  EXPECT_NEAR(a.processors[1].borrowed(), borrowed_l1, 1);
}

TEST(LayerPipe, OneProcessor) {
  const auto p = sample_profile();
  const auto a = layerpipe_partition(p, 1);
  expect_well_formed(p, a, 1, "n=1");
  EXPECT_DOUBLE_EQ(a.max_load(), static_cast<double>(p.total()));
  EXPECT_EQ(a.extra_comm_bytes, 0);
  EXPECT_EQ(a.processors[0].borrowed(), 0);
}

TEST(LayerPipe, TwoProcessorsBoundedByTailLayers) {
  // Only delta moves, and only onto the previous processor: the second
  // processor still carries all of layers 2-4 (5.30e7).
  const auto p = sample_profile();
  const auto a = layerpipe_partition(p, 2);
  expect_well_formed(p, a, 2, "n=2");
  const auto pd = pipedream_partition(p, 2);
  EXPECT_LE(a.max_load(), pd.max_load() * (1 + 1e-12));
  EXPECT_NEAR(a.max_load(), 5.30e7, 0.01e7);
}

TEST(LayerPipe, ZeroThresholdMatchesContiguous) {
  const auto p = sample_profile();
  LayerPipeOptions o;
  o.thresholds = Thresholds{0, 0};
  for (int n = 1; n <= 5; ++n) {
    const auto a = layerpipe_partition(p, n, o);
    expect_well_formed(p, a, n, "pinned");
    EXPECT_EQ(a.extra_comm_bytes, 0);
    EXPECT_NEAR(a.max_load(), pipedream_partition(p, n).max_load(), 1);
  }
}

TEST(LayerPipe, MoreProcessorsThanWork) {
  const auto p = sample_profile();
  const auto a = layerpipe_partition(p, 12);
  expect_well_formed(p, a, 12, "n=12");
  EXPECT_LT(a.used_processors(), 12);
}

TEST(LayerPipe, BadArguments) {
  const auto p = sample_profile();
  EXPECT_THROW(layerpipe_partition(p, 0), Error);
  LayerPipeOptions o;
  o.alpha = 1.0;
  EXPECT_THROW(layerpipe_partition(p, 2, o), Error);
}

TEST(LayerPipe, RelaxationBound) {
  const auto p = profile_network(vgg16_conv(), RunConfig{32, 1, false}, ArrayConfig::square(64));
  for (int n = 2; n <= 12; ++n) {
    const auto a = layerpipe_partition(p, n);
    expect_well_formed(p, a, n, "vgg");
    EXPECT_LE(a.max_load(), a.target * (1 + 1e-9));
    EXPECT_LE(a.target, std::pow(1.05, a.relaxations) * p.total() / n * (1 + 1e-9));
    double cap = 0;
    for (const auto& c : classify_movable(p)) cap = std::max(cap, static_cast<double>(c.t_fix));
    EXPECT_GE(a.max_load(), cap);
  }
}

TEST(LayerPipe, NoRefineStopsAtFirstFeasible) {
  const auto p = profile_network(vgg16_conv(), RunConfig{32, 1, false}, ArrayConfig::square(32));
  LayerPipeOptions o;
  o.refine = false;
  const auto a = layerpipe_partition(p, 8, o);
  EXPECT_GT(a.relaxations, 0);
  EXPECT_NEAR(a.target, std::pow(1.05, a.relaxations) * p.total() / 8, 1e-6 * p.total());
  EXPECT_LE(layerpipe_partition(p, 8).max_load(), a.max_load());
}

TEST(LayerPipe, GranularSplitsAtChannels) {
  const auto p = sample_profile();
  LayerPipeOptions o;
  o.granular = true;
  const auto a = layerpipe_partition(p, 3, o);
  expect_well_formed(p, a, 3, "granular");
  for (const auto& q : a.processors) {
    for (const auto& it : q.items) {
      if (it.op != WorkOp::DeltaDoublePrime) continue;
      const double c = it.fraction * p[it.layer].in_channels;
      EXPECT_NEAR(c, std::round(c), 1e-9);
    }
  }
}

Profile random_profile(std::mt19937& rng, int layers) {
  std::uniform_int_distribution<int> t(1, 1000);
  std::bernoulli_distribution pinned(0.2);
  Profile p;
  for (int l = 0; l < layers; ++l) {
    ProfileEntry e;
    e.layer = "r" + std::to_string(l);
    e.t_fp = t(rng);
    e.t_bpg = t(rng);
    e.t_bpdelta = 3 * t(rng);
    e.t_total = e.t_fp + e.t_bpg + e.t_bpdelta;
    e.comm_extra_bytes = 10;
    e.in_channels = 1 + l;
    e.delta_splittable = !pinned(rng);
    p.entries.push_back(e);
  }
  return p;
}

TEST(PipeDream, SampleStages) {
  const auto p = sample_profile();
  const auto a = pipedream_partition(p, 3);
  expect_well_formed(p, a, 3, "pd");
  EXPECT_NEAR(a.processors[0].total(), 4.35e7, 0.005 * 4.35e7);
  EXPECT_NEAR(a.processors[1].total(), 3.07e7, 0.005 * 3.07e7);
  EXPECT_NEAR(a.processors[2].total(), 2.23e7, 0.005 * 2.23e7);
  EXPECT_EQ(a.stage_of_layer(), (std::vector<int>{0, 1, 2, 2}));
  EXPECT_EQ(a.extra_comm_bytes, 0);
  EXPECT_DOUBLE_EQ(pipedream_partition(p, 1).max_load(), static_cast<double>(p.total()));
}

TEST(PipeDream, OptimalAgainstBruteForce) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_profile(rng, 1 + trial % 10);
    std::vector<std::int64_t> t;
    for (const auto& e : p.entries) t.push_back(e.t_total);
    const int n = 1 + trial % 5;
    const auto a = pipedream_partition(p, n);
    expect_well_formed(p, a, n, "random pd");
    EXPECT_EQ(static_cast<std::int64_t>(a.max_load()), oracle::contiguous_min_max(t, n)) << "trial " << trial;
    for (const auto& q : a.processors) {
      for (const auto& it : q.items) EXPECT_FALSE(it.borrowed);
    }
  }
}

TEST(Dominance, LayerPipeNeverWorseOnRandomProfiles) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const auto p = random_profile(rng, 1 + trial % 12);
    const int n = 1 + trial % 7;
    const auto lp = layerpipe_partition(p, n);
    expect_well_formed(p, lp, n, "random lp");
    const auto pd = pipedream_partition(p, n);
    EXPECT_LE(lp.max_load(), pd.max_load() * (1 + 1e-12)) << "trial " << trial;
    double cap = 0;
    for (const auto& c : classify_movable(p)) cap = std::max(cap, static_cast<double>(c.t_fix));
    EXPECT_GE(lp.max_load() * (1 + 1e-12), cap);
  }
}

TEST(Json, Shape) {
  std::ostringstream os;
  write_allocation_json(os, layerpipe_partition(sample_profile(), 3));
  const auto j = nlohmann::json::parse(os.str());
  ASSERT_EQ(j["processors"].size(), 3u);
  EXPECT_EQ(j["processors"][0]["id"], 0);
  EXPECT_EQ(j["processors"][0]["items"][0]["layer"], 1);
  EXPECT_EQ(j["processors"][0]["items"][0]["op"], "FWD");
  EXPECT_EQ(j["extra_comm_bytes"], 875);
  EXPECT_EQ(j["relaxations"], 0);
}

}  // namespace
}  // namespace layerpipe
