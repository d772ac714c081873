// Copyright 2026 The dfno Authors
// SPDX-License-Identifier: Apache-2.0
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
//
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dfno/commands.hpp"
#include "dfno/error.hpp"
#include "dfno/heat.hpp"
#include "dfno/tensor_file.hpp"

using namespace dfno;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "dfno_unit_commands";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string dataset() {
  static const std::string dir = [] {
    auto d = (scratch() / "data").string();
    gen_data_cmd({{"out_dir", d}, {"samples", 4}, {"n", 8}, {"n_t", 4}, {"seed", 5}}, {});
    return d;
  }();
  return dir;
}

nlohmann::json train_config(const std::string& out, double lr, std::vector<int> partition) {
  return {{"data_dir", dataset()},
          {"out_dir", (scratch() / out).string()},
          {"train_samples", 3},
          {"val_samples", 1},
          {"epochs", 1},
          {"learning_rate", lr},
          {"seed", 3},
          {"partition", partition},
          {"model", {{"width", 4}, {"blocks", 2}, {"modes", {2, 2, 2}}}}};
}

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::internal;
}

}  // namespace

TEST_CASE("training with zero learning rate leaves the parameters bitwise unchanged") {
  auto report = train_cmd(train_config("lr0", 0.0, {1, 1, 1, 1, 1}), {});
  REQUIRE(report.history.size() == 1);
  auto ck = read_checkpoint(report.checkpoint_dir);
  FnoConfig c = ck.config;
  c.partition = {1, 1, 1, 1, 1};
  auto initial = launch(1, [&](WorkerContext& ctx) {
    return gather_params(ctx, init_model(c, 3, ctx.rank()));
  })[0];
  REQUIRE(initial.size() == ck.groups.size());
  for (std::size_t i = 0; i < initial.size(); ++i) {
    CAPTURE(initial[i].name);
    CHECK(initial[i].values == ck.groups[i].values);
  }
  std::ifstream csv(report.loss_csv);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "epoch,train_loss,val_loss");
}

TEST_CASE("training is deterministic and matches across worker counts") {
  RunOptions four;
  four.workers = 4;
  auto a = train_cmd(train_config("det_a", 1e-3, {1, 1, 1, 1, 1}), {});
  auto b = train_cmd(train_config("det_b", 1e-3, {1, 1, 1, 1, 1}), {});
  auto c = train_cmd(train_config("det_c", 1e-3, {1, 1, 2, 2, 1}), four);
  CHECK(a.history[0].train == b.history[0].train);
  CHECK(a.history[0].validation == b.history[0].validation);
  CHECK(std::abs(a.history[0].train - c.history[0].train) < 1e-6 * a.history[0].train);
  CHECK(std::abs(a.history[0].validation - c.history[0].validation) <
        1e-6 * a.history[0].validation);
}

TEST_CASE("inference output agrees across worker counts and reruns") {
  auto report = train_cmd(train_config("infer_src", 1e-3, {1, 1, 1, 1, 1}), {});
  const auto input = (fs::path(dataset()) / input_file_name(3)).string();
  auto cfg = [&](const std::string& out) {
    return nlohmann::json{{"checkpoint", report.checkpoint_dir},
                          {"input", input},
                          {"output", (scratch() / out).string()}};
  };
  RunOptions four;
  four.workers = 4;
  auto one = infer_cmd(cfg("y1.dfno"), {});
  auto again = infer_cmd(cfg("y1b.dfno"), {});
  auto cfg4 = cfg("y4.dfno");
  cfg4["partition"] = {1, 1, 2, 2, 1};
  infer_cmd(cfg4, four);
  CHECK(one.output_shape == Shape{1, 8, 8, 4});
  CHECK(one.seconds >= 0.0);
  auto y1 = read_tensor(one.output), y1b = read_tensor(again.output);
  auto y4 = read_tensor((scratch() / "y4.dfno").string());
  CHECK(y1 == y1b);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < y1.size(); ++i) {
    num += (y1[i] - y4[i]) * (y1[i] - y4[i]);
    den += y1[i] * y1[i];
  }
  CHECK(std::sqrt(num / den) < 1e-8);

  // A target file has the wrong shape for this checkpoint.
  auto bad = cfg("bad.dfno");
  bad["input"] = (fs::path(dataset()) / target_file_name(0)).string();
  CHECK(code_of([&] { infer_cmd(bad, {}); }) == Errc::invalid_argument);
}

TEST_CASE("configurations reject unknown keys and bad values") {
  auto cfg = train_config("rejects", 1e-3, {1, 1, 1, 1, 1});
  cfg["epoch"] = 3;
  CHECK(code_of([&] { train_cmd(cfg, {}); }) == Errc::invalid_argument);

  cfg = train_config("rejects", 1e-3, {1, 1, 1, 1, 1});
  cfg["model"]["depth"] = 3;
  CHECK(code_of([&] { train_cmd(cfg, {}); }) == Errc::invalid_argument);

  cfg = train_config("rejects", 1e-3, {1, 1, 0, 1, 1});
  CHECK(code_of([&] { train_cmd(cfg, {}); }) == Errc::invalid_argument);

  cfg = train_config("rejects", 1e-3, {1, 1, 2, 1, 1});
  CHECK(code_of([&] { train_cmd(cfg, {}); }) == Errc::invalid_argument);

  cfg = train_config("rejects", 1e-3, {1, 1, 1, 1, 1});
  cfg["batch_size"] = 2;
  CHECK(code_of([&] { train_cmd(cfg, {}); }) == Errc::invalid_argument);

  cfg = train_config("rejects", 1e-3, {1, 1, 1, 1, 1});
  cfg["train_samples"] = 4;
  CHECK(code_of([&] { train_cmd(cfg, {}); }) == Errc::invalid_argument);

  CHECK(code_of([&] { gen_data_cmd({{"out_dir", "x"}, {"n", "eight"}}, {}); }) ==
        Errc::invalid_argument);
  CHECK(code_of([&] { gen_data_cmd({{"samples", 1}}, {}); }) == Errc::invalid_argument);
}

TEST_CASE("bench partitions follow the scaling table and need enough workers") {
  CHECK(bench_partition(1) == std::vector<int>{1, 1, 1, 1, 1, 1});
  CHECK(bench_partition(2) == std::vector<int>{1, 1, 2, 1, 1, 1});
  CHECK(bench_partition(4) == std::vector<int>{1, 1, 2, 2, 1, 1});
  CHECK(bench_partition(8) == std::vector<int>{1, 1, 2, 2, 2, 1});
  CHECK(bench_partition(16) == std::vector<int>{1, 1, 4, 2, 2, 1});
  CHECK(bench_partition(512) == std::vector<int>{1, 1, 8, 8, 8, 1});
  CHECK(code_of([] { bench_partition(3); }) == Errc::invalid_argument);

  RunOptions two;
  two.workers = 2;
  CHECK(code_of([&] { bench_cmd({{"workers", {1, 4}}}, two); }) == Errc::invalid_argument);
  CHECK(code_of([&] { bench_cmd({{"repetitions", 3}}, two); }) == Errc::invalid_argument);

  auto rows = bench_cmd({{"workers", {1, 2}},
                         {"series", {"temporal"}},
                         {"base", 4},
                         {"time_steps", 2},
                         {"width", 2},
                         {"blocks", 1},
                         {"modes", {1, 1, 1, 1}}},
                        two);
  REQUIRE(rows.size() == 6);
  CHECK(rows[3].output_shape == Shape{1, 1, 4, 4, 4, 4});
  CHECK(rows[0].local_volume == rows[5].local_volume);
}
