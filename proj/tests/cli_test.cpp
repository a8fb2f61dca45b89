/* Copyright 2026 The sidflow Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <json.hpp>

#include "oracles.hpp"
#include "sidflow/behavior_store.hpp"
#include "sidflow/tokenizer.hpp"

namespace sidflow {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunResult {
  int code = -1;
  std::string output;
};

fs::path work_dir() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "sidflow_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run(const std::string& args) {
  const auto log = work_dir() / "last_run.txt";
  const std::string cmd = std::string("\"") + SIDFLOW_CLI_PATH + "\" " + args + " > \"" +
                          log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = read_file(log);
  return r;
}

std::string in_dir(const std::string& name) { return (work_dir() / name).string(); }

TEST(Cli, HelpListsSubcommands) {
  const auto r = run("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"synth", "tokenize", "train", "eval", "retrieve", "bench"}) {
    EXPECT_NE(r.output.find(sub), std::string::npos) << sub;
  }
}

TEST(Cli, SynthIsByteIdentical) {
  const std::string common = " --users 30 --items 80 --dim 8 --history 20 --seed 5";
  ASSERT_EQ(run("synth" + common + " --out-dir " + in_dir("synth_a")).code, 0);
  ASSERT_EQ(run("synth" + common + " --out-dir " + in_dir("synth_b")).code, 0);
  for (const char* f : {"interactions.csv", "embeddings.embf"}) {
    const auto a = read_file(work_dir() / "synth_a" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, read_file(work_dir() / "synth_b" / f)) << f;
  }
  const auto manifest = json::parse(read_file(work_dir() / "synth_a" / "synth.manifest.json"));
  EXPECT_EQ(manifest["command"], "synth");
  EXPECT_EQ(manifest["seed"], 5);
}

TEST(Cli, UnknownOptionIsUsageError) {
  EXPECT_EQ(run("synth --bogus 3").code, 1);
}

TEST(Cli, MissingCheckpointNamesThePath) {
  ASSERT_EQ(run("synth --users 10 --items 30 --dim 4 --history 10 --out-dir " +
                in_dir("small")).code, 0);
  const auto r = run("eval --interactions " + in_dir("small/interactions.csv") +
                     " --sid-map " + in_dir("small/none.csv") + " --checkpoint " +
                     in_dir("missing.r2lc"));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("missing.r2lc"), std::string::npos) << r.output;
}

// Eight corners of a box with very different side lengths, plus a copy of
// the first corner. With two centroids per level the three levels split on
// the three axes in order of scale.
EmbeddingMatrix toy_embeddings() {
  const std::vector<std::array<float, 3>> rows = {
      {100, 10, 1},   {100, 10, -1},  {100, -10, 1}, {100, 10, 1},  {100, -10, -1},
      {-100, 10, 1}, {-100, 10, -1}, {-100, -10, 1}, {-100, -10, -1}};
  std::vector<float> values;
  for (const auto& r : rows) values.insert(values.end(), r.begin(), r.end());
  return EmbeddingMatrix(rows.size(), 3, std::move(values));
}

class ToyFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    save_embeddings(work_dir() / "toy.embf", toy_embeddings());
    // user 1 clicks items 1..4, then sees item 1 again without clicking
    save_interactions(work_dir() / "toy.csv",
                      std::vector<Interaction>{{1, 1, 1, 1}, {1, 2, 2, 1}, {1, 3, 3, 1},
                                               {1, 4, 4, 1}, {1, 1, 5, 0}});
    const auto r = run("tokenize --embeddings " + in_dir("toy.embf") + " --codebook " +
                       in_dir("toy.sidc") + " --sid-map " + in_dir("toy_sids.csv") +
                       " --codebook-size 2");
    ASSERT_EQ(r.code, 0) << r.output;
  }

  static json retrieve(const std::string& extra) {
    const auto r = run("retrieve --interactions " + in_dir("toy.csv") + " --sid-map " +
                       in_dir("toy_sids.csv") + " --user 1 --item 1 " + extra);
    EXPECT_EQ(r.code, 0) << r.output;
    return json::parse(r.output);
  }

  static std::vector<std::pair<std::uint32_t, std::int64_t>> entries(const json& route) {
    std::vector<std::pair<std::uint32_t, std::int64_t>> out;
    for (const auto& e : route) out.emplace_back(e["position"], e["score"]);
    return out;
  }
};

TEST_F(ToyFixture, SidsFollowTheAxes) {
  const auto sids = load_sid_map(work_dir() / "toy_sids.csv");
  ASSERT_EQ(sids.n_items(), 9u);
  auto prefix = [&](ItemId a, ItemId b) { return prefix_score(sids[a], sids[b]); };
  EXPECT_EQ(sids[1], sids[4]);
  EXPECT_EQ(prefix(1, 2), 2);
  EXPECT_EQ(prefix(1, 3), 1);
  EXPECT_EQ(prefix(1, 5), 1);
  EXPECT_EQ(prefix(1, 6), 0);
  EXPECT_EQ(prefix(6, 7), 2);
  EXPECT_NE(sids[2][2], sids[1][2]);
  EXPECT_EQ(sids[3][2], sids[1][2]);
}

TEST_F(ToyFixture, RoutesMatchHandDerivation) {
  const auto j = retrieve("--k 2 --w 2");
  EXPECT_EQ(j["history_length"], 4);
  // LCP with item 1 over history items 1,2,3,4 is 3,2,1,3.
  using V = std::vector<std::pair<std::uint32_t, std::int64_t>>;
  EXPECT_EQ(entries(j["routes"]["target"]), (V{{3, 3}, {0, 3}}));
  // window = positions 2,3
  EXPECT_EQ(entries(j["routes"]["recent"]), (V{{0, 4}, {1, 3}}));
  EXPECT_EQ(entries(j["routes"]["global"]), (V{{3, 6}, {0, 6}}));
  EXPECT_FALSE(j["id_fill"]["open"].get<bool>());
}

TEST_F(ToyFixture, RoutesMatchOracles) {
  const auto sids = load_sid_map(work_dir() / "toy_sids.csv");
  const std::vector<SemanticId> history = {sids[1], sids[2], sids[3], sids[4]};
  const auto j = retrieve("--k 20 --w 2");
  EXPECT_EQ(entries(j["routes"]["target"]), oracle::target_route(history, sids[1], 20));
  EXPECT_EQ(entries(j["routes"]["recent"]), oracle::recent_route(history, 2, 20));
  EXPECT_EQ(entries(j["routes"]["global"]), oracle::global_route(history, 20));
}

TEST(Cli, EndToEndIsDeterministic) {
  ASSERT_EQ(run("synth --users 40 --items 100 --dim 8 --history 25 --ref-codebook-size 8 "
                "--out-dir " + in_dir("e2e")).code, 0);
  const std::string emb = in_dir("e2e/embeddings.embf");
  const std::string inter = in_dir("e2e/interactions.csv");
  for (const char* tag : {"a", "b"}) {
    const std::string t = tag;
    ASSERT_EQ(run("tokenize --embeddings " + emb + " --codebook-size 8 --sid-map " +
                  in_dir("e2e/sids_" + t + ".csv") + " --codebook " +
                  in_dir("e2e/cb_" + t + ".sidc")).code, 0);
    const auto tr = run("train --interactions " + inter + " --sid-map " +
                        in_dir("e2e/sids_" + t + ".csv") + " --out " +
                        in_dir("e2e/model_" + t + ".r2lc") + " --batch-size 64 --hidden 16 --quiet");
    ASSERT_EQ(tr.code, 0) << tr.output;
    const auto ev = run("eval --interactions " + inter + " --sid-map " +
                        in_dir("e2e/sids_" + t + ".csv") + " --checkpoint " +
                        in_dir("e2e/model_" + t + ".r2lc") + " --no-timing --output " +
                        in_dir("e2e/metrics_" + t + ".json"));
    ASSERT_EQ(ev.code, 0) << ev.output;
  }
  for (const char* f : {"sids_", "model_", "metrics_"}) {
    const std::string ext = std::string(f) == "sids_" ? ".csv"
                            : std::string(f) == "model_" ? ".r2lc" : ".json";
    const auto a = read_file(work_dir() / "e2e" / (std::string(f) + "a" + ext));
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, read_file(work_dir() / "e2e" / (std::string(f) + "b" + ext))) << f;
  }
  const auto report = json::parse(read_file(work_dir() / "e2e" / "metrics_a.json"));
  EXPECT_TRUE(report["overall"].contains("auc"));
  EXPECT_FALSE(report.contains("timing"));

  const auto bench = run("bench --interactions " + inter + " --sid-map " +
                         in_dir("e2e/sids_a.csv") + " --checkpoint " +
                         in_dir("e2e/model_a.r2lc") + " --max-instances 20");
  ASSERT_EQ(bench.code, 0) << bench.output;
  const auto bj = json::parse(bench.output);
  EXPECT_EQ(bj["stage1"]["samples"], 20);
  EXPECT_EQ(bj["stage1_plus_stage2"]["samples"], 20);
  EXPECT_EQ(bj["threads"], 1);
  EXPECT_GT(bj["stage1"]["median_us"].get<double>(), 0.0);
}

}  // namespace
}  // namespace sidflow
