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

#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "layerpipe/cli.hpp"

namespace layerpipe {
namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "layerpipe");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string sample_file() {
  const char* dir = std::getenv("LAYERPIPE_NETWORKS");
  return std::string(dir ? dir : "networks") + "/sample4.net";
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

TEST(Cli, ProfileSample) {
  const auto r = cli({"profile", sample_file()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.err.empty());
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 5u);
  EXPECT_EQ(ls[1], "layer1,1204506,2119936,40143150,43467592,12845056,4816896,75");
}

TEST(Cli, ProfileFileMatchesBuiltin) {
  EXPECT_EQ(cli({"profile", sample_file()}).out, cli({"profile", "--builtin", "sample4"}).out);
}

TEST(Cli, ProfileTinyArray) {
  const auto r = cli({"profile", "--builtin", "sample4", "--array", "1x1", "--fill", "0", "--batch", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  // layer 1: K = 75 rows by 32 cols, one cycle per element of each tile
  // stream: 75 * 32 * 112 * 112
  EXPECT_NE(lines(r.out)[1].find("layer1,30105600,"), std::string::npos) << lines(r.out)[1];
}

TEST(Cli, ProfileCalibratedFill) {
  const auto r = cli({"profile", "--builtin", "sample4", "--fill", "97"});
  ASSERT_EQ(r.code, 0);
  std::istringstream row(lines(r.out)[1]);
  std::string name, fp, bpg;
  std::getline(row, name, ',');
  std::getline(row, fp, ',');
  std::getline(row, bpg, ',');
  EXPECT_NEAR(std::stod(bpg), 2.16e6, 0.003 * 2.16e6);
}

TEST(Cli, CompareSample) {
  const auto r = cli({"compare", "--builtin", "sample4", "-n", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j["period_reduction_pct"].get<double>(), 26.0, 2.0);
  EXPECT_EQ(j["layerpipe"]["algorithm"], "layerpipe");
  EXPECT_EQ(j["pipedream"]["n_proc"], 3);
  const auto one = nlohmann::json::parse(cli({"compare", "--builtin", "sample4", "-n", "1"}).out);
  EXPECT_DOUBLE_EQ(one["period_reduction_pct"].get<double>(), 0.0);
}

TEST(Cli, PartitionJson) {
  const auto r = cli({"partition", "--builtin", "sample4", "--algorithm", "pipedream"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["processors"].size(), 3u);
  EXPECT_EQ(j["relaxations"], 0);
}

TEST(Cli, ScheduleGanttAndSummary) {
  const auto g = cli({"schedule", "--builtin", "sample4", "--gantt", "--minibatches", "4"});
  ASSERT_EQ(g.code, 0) << g.err;
  EXPECT_EQ(lines(g.out)[0], "processor,start,end,minibatch,op");
  EXPECT_EQ(g.out, cli({"schedule", "--builtin", "sample4", "--gantt", "--minibatches", "4"}).out);
  const auto s = cli({"schedule", "--builtin", "sample4", "--algorithm", "pipedream"});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_NEAR(nlohmann::json::parse(s.out)["steady_period"].get<double>(), 4.35e7, 0.005 * 4.35e7);
}

TEST(Cli, SweepSinglePoint) {
  const auto r = cli({"sweep", "--builtin", "sample4", "--arrays", "32", "--batches", "32", "--processors", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 5u);
  EXPECT_EQ(ls[0], "array,batch,n_proc,algorithm,speedup,extra_comm_bytes");
  EXPECT_EQ(ls[1].substr(0, 18), "32,32,3,layerpipe,");
  EXPECT_EQ(ls[2].substr(0, 18), "32,32,3,pipedream,");
  EXPECT_EQ(ls[3].substr(0, 22), "mean,mean,3,layerpipe,");
  EXPECT_EQ(ls[4].substr(0, 22), "mean,mean,3,pipedream,");
}

TEST(Cli, SweepThreadCountDoesNotChangeOutput) {
  const std::vector<std::string> args{"sweep", "--builtin", "sample4", "--arrays", "32,64", "--batches", "16,32",
                                      "--processors", "1-4"};
  setenv("LAYERPIPE_THREADS", "1", 1);
  const auto a = cli(args);
  setenv("LAYERPIPE_THREADS", "4", 1);
  const auto b = cli(args);
  unsetenv("LAYERPIPE_THREADS");
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(lines(a.out).size(), 1u + 2 * 2 * 4 * 2 + 4 * 2);
}

TEST(Cli, DumpDfg) {
  const auto plain = cli({"dump-dfg", "--builtin", "sample4"});
  ASSERT_EQ(plain.code, 0);
  EXPECT_EQ(lines(plain.out).size(), 28u);
  const auto r = cli({"dump-dfg", sample_file(), "--stage-map", "0,1,2,2", "--stages", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("GRAD_W:1 -> WEIGHT_UPDATE:1 [delays=4]"), std::string::npos);
  EXPECT_NE(r.out.find("GRAD_W:2 -> WEIGHT_UPDATE:2 [delays=2]"), std::string::npos);
  const auto t = cli({"dump-dfg", sample_file(), "--stage-map", "0,1,2,2", "--retimed"});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("FWD:1 -> FWD:2 [delays=1]"), std::string::npos);
}

TEST(Cli, Errors) {
  const auto none = cli({"profile"});
  EXPECT_EQ(none.code, 1);
  EXPECT_TRUE(none.out.empty());
  EXPECT_EQ(none.err.rfind("layerpipe: ", 0), 0u) << none.err;
  EXPECT_EQ(cli({"profile", "--builtin", "nope"}).code, 1);
  EXPECT_EQ(cli({"profile", "/nonexistent.net"}).code, 1);
  EXPECT_EQ(cli({"profile", "--builtin", "sample4", "--array", "0"}).code, 1);
  EXPECT_EQ(cli({"dump-dfg", "--builtin", "sample4", "--stage-map", "0,x"}).code, 1);
  EXPECT_EQ(cli({"dump-dfg", "--builtin", "sample4", "--retimed"}).code, 1);
  EXPECT_EQ(cli({"partition", "--builtin", "sample4", "--algorithm", "gpipe"}).code, 1);
  EXPECT_NE(cli({"frobnicate"}).code, 0);
  EXPECT_NE(cli({}).code, 0);
}

TEST(Cli, HelpExitsZero) {
  const auto r = cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("sweep"), std::string::npos);
}

}  // namespace
}  // namespace layerpipe
