// Copyright 2026 The DCP Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dcp/cli.hpp"
#include "dcp/config.hpp"
#include "dcp/errors.hpp"
#include "test_util.hpp"

using namespace dcp;

namespace {
struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dcp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::parse_and_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream(path) << text;
}

// Every TrainConfig field, by config key name.
const char* const kTrainFields[] = {
    "method", "b_inst", "b_id", "batch_mode", "pool_frac", "pool_c", "k", "scale",
    "insert_instance_features", "hidden", "embed_dim", "cos_weight", "cos_reduction",
    "cos_hinge", "partial_frac", "lr", "lr_decay_epochs", "lr_decay_factor", "epochs",
    "sgd_momentum", "weight_decay", "momentum_m", "seed", "holdout_per_id",
    "eval_genuine", "eval_impostor", "log_every"};
}  // namespace

TEST_CASE("empty config yields the defaults") {
  const RunSpec s = parse_config_text("");
  CHECK(s.train == TrainConfig{});
  CHECK(s.train.lr == 0.1);
  CHECK(s.train.epochs == 20);
  CHECK(s.train.lr_decay_epochs == std::vector<std::size_t>{10, 14, 17});
  CHECK(s.train.b_inst == 256);
  CHECK(!s.train.b_id);
  CHECK(s.train.pool_frac == 0.10);
  CHECK(s.train.k == 2);
}

TEST_CASE("config text parses comments, lists and optional sizes") {
  const RunSpec s = parse_config_text(
      "# comment\n"
      "method = partial-fc\n"
      "hidden = 32, 16\n"
      "b_id = 12   # trailing comment\n"
      "pool_c = auto\n"
      "cos_reduction = max\n"
      "cos_hinge = true\n"
      "data_n_id = 77\n");
  CHECK(s.train.method == Method::partial_fc);
  CHECK(s.train.hidden == std::vector<std::size_t>{32, 16});
  CHECK(*s.train.b_id == 12);
  CHECK(!s.train.pool_c);
  CHECK(s.train.cos_reduction == CosReduction::max);
  CHECK(s.train.cos_hinge);
  CHECK(s.data.n_id == 77);
}

TEST_CASE("config errors name the key and line") {
  try {
    parse_config_text("k = 2\nbogus_key = 1\nlr = abc\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bogus_key") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("lr") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text("epochs = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("no equals sign\n"), ConfigError);
  RunSpec s;
  CHECK_THROWS_AS(apply_override(s, "nope", "1"), ConfigError);
  CHECK_THROWS_AS(apply_override(s, "k", "-1"), ConfigError);
}

TEST_CASE("effective config parses back to the same settings") {
  RunSpec s;
  s.train.method = Method::fc;
  s.train.lr = 0.1 / 3;
  s.train.b_id = 7;
  s.train.hidden = {5, 6, 7};
  s.train.lr_decay_epochs = {};
  s.train.momentum_m = 0.0;
  s.data.noise_sigma = 0.123456789;
  s.data_path = "x.dcpd";
  const RunSpec back = parse_config_text(effective_config(s));
  CHECK(back == s);
  for (const auto& k : config_keys()) {
    CHECK(effective_config(s).find(k.name + " = ") != std::string::npos);
  }
}

TEST_CASE("every training field is a config key and shows in help") {
  const Result r = run_cli({"train", "--help"});
  CHECK(r.code == 0);
  for (const char* f : kTrainFields) {
    bool found = false;
    for (const auto& k : config_keys()) found |= k.name == f;
    CHECK_MESSAGE(found, f);
    CHECK_MESSAGE(r.out.find(std::string("  ") + f + "  ") != std::string::npos, f);
  }
  CHECK(run_cli({"--help"}).code == 0);
  CHECK(run_cli({"bench", "--help"}).out.find("--n-ids") != std::string::npos);
}

TEST_CASE("config file, flags and --set layer in that order") {
  const auto path = testing::temp_path("layer.cfg");
  write_file(path, "epochs = 2\nk = 3\nlr_decay_epochs =\n");
  RunSpec s = load_config(path);
  CHECK(s.train.epochs == 2);
  CHECK(s.train.k == 3);
  CHECK_THROWS_AS(load_config(testing::temp_path("missing.cfg")), ConfigError);
}

TEST_CASE("cli exit codes") {
  CHECK(run_cli({}).code == 1);
  CHECK(run_cli({"frobnicate"}).code == 1);
  const Result e0 = run_cli({"train", "--epochs", "0"});
  CHECK(e0.code == 1);
  CHECK(e0.err.find("epochs") != std::string::npos);
  const Result unk = run_cli({"train", "--set", "warp_factor=9"});
  CHECK(unk.code == 1);
  CHECK(unk.err.find("warp_factor") != std::string::npos);
  CHECK(run_cli({"report", "-i", testing::temp_path("nope.json")}).code == 2);
}

TEST_CASE("cli end to end: data, train, eval, bench, report") {
  const auto dir = testing::temp_path("cli");
  std::filesystem::create_directories(dir);
  const auto data = dir + "/data.bin";
  const Result g = run_cli({"gen-data", "--n-id", "1000", "--k-min", "2", "--k-max", "20",
                            "--seed", "1", "-o", data, "-q"});
  CHECK(g.code == 0);
  CHECK(std::filesystem::exists(data));

  const Result small = run_cli({"gen-data", "--n-id", "40", "--k-min", "4", "--k-max", "6",
                                "-o", dir + "/small.bin", "--csv", dir + "/small.csv"});
  REQUIRE(small.code == 0);
  const Result t = run_cli({"train", "-q", "--data", dir + "/small.bin", "--epochs", "1",
                            "--set", "lr_decay_epochs=", "--set", "b_inst=20", "--set",
                            "hidden=16", "--set", "eval_genuine=30", "--set",
                            "eval_impostor=200", "-o", dir + "/run"});
  CHECK(t.code == 0);
  CHECK(t.out.find("# effective config") != std::string::npos);
  CHECK(t.out.find("roc_auc") != std::string::npos);
  CHECK(std::filesystem::exists(dir + "/run/probe_net.dcpn"));

  const Result ev = run_cli({"eval", "--data", dir + "/small.bin", "--checkpoint",
                             dir + "/run/probe_net.dcpn", "--genuine", "30", "--impostor",
                             "200"});
  CHECK(ev.code == 0);
  CHECK(ev.out.find("roc_auc") != std::string::npos);

  const Result b = run_cli({"bench", "--n-ids", "100,200", "--methods", "dcp", "--trials",
                            "1", "--pool-c", "20", "-o", dir + "/bench.json"});
  CHECK(b.code == 0);
  const Result rep = run_cli({"report", "-i", dir + "/bench.json", "--format", "csv"});
  CHECK(rep.code == 0);
  CHECK(rep.out.rfind("method,n_id,", 0) == 0);
}
