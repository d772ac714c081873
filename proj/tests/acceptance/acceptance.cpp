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
// Runs the eight acceptance criteria at their stated tolerances and prints one
// PASS/FAIL line per criterion. Usage: dfno_acceptance [scratch_dir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <string>

#include "dfno/checks.hpp"
#include "dfno/commands.hpp"
#include "dfno/error.hpp"

using namespace dfno;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string summary;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Outcome from_checks(std::initializer_list<CheckResult> results, double time_limit) {
  Outcome o{true, ""};
  double seconds = 0;
  for (const auto& r : results) {
    o.pass = o.pass && r.passed();
    seconds += r.seconds;
    if (!o.summary.empty()) o.summary += "; ";
    o.summary += r.name + " max " + fmt("%.2e", r.max_discrepancy) +
                 (r.tolerance > 0 ? " < " + fmt("%.0e", r.tolerance) : std::string(" (exact)")) +
                 " over " + std::to_string(r.cases) + " cases";
  }
  if (time_limit > 0) {
    o.pass = o.pass && seconds < time_limit;
    o.summary += fmt("; %.1f s (limit %.0f s)", seconds, time_limit);
  }
  return o;
}

Outcome training(const fs::path& scratch) {
  const auto data = (scratch / "heat").string();
  RunOptions quiet;
  gen_data_cmd({{"out_dir", data}, {"samples", 250}, {"n", 32}, {"n_t", 10}, {"seed", 1}}, quiet);

  auto run = [&](int workers, std::vector<int> partition) {
    nlohmann::json cfg{{"data_dir", data},
                       {"out_dir", (scratch / ("train_" + std::to_string(workers))).string()},
                       {"train_samples", 200},
                       {"val_samples", 50},
                       {"epochs", 30},
                       {"batch_size", 1},
                       {"learning_rate", 1e-3},
                       {"seed", 0},
                       {"partition", partition},
                       {"model", {{"width", 8}, {"blocks", 4}, {"modes", {8, 8, 5}}}}};
    RunOptions o;
    o.workers = workers;
    return train_cmd(cfg, o).history;
  };
  auto t0 = std::chrono::steady_clock::now();
  auto one = run(1, {1, 1, 1, 1, 1});
  auto four = run(4, {1, 1, 2, 2, 1});
  double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60;

  double worst = 0;
  for (std::size_t e = 0; e < one.size(); ++e) {
    worst = std::max(worst, std::abs(one[e].train - four[e].train) / std::abs(one[e].train));
    worst = std::max(worst,
                     std::abs(one[e].validation - four[e].validation) / std::abs(one[e].validation));
  }
  const double ratio = one.back().train / one.front().train;
  const double val = one.back().validation;
  Outcome o;
  o.pass = one.size() == 30 && four.size() == 30 && ratio <= 0.5 && val < 0.8 && worst < 1e-6 &&
           minutes < 30;
  o.summary = fmt("train loss epoch 30 / epoch 1 = %.3f (<= 0.5), val loss epoch 30 = %.4f (< 0.8)",
                  ratio, val) +
              fmt(", 1 vs 4 workers max rel diff %.2e (< 1e-6), %.1f min", worst, minutes);
  return o;
}

Outcome weak_scaling(const fs::path& scratch) {
  const auto csv = (scratch / "bench.csv").string();
  nlohmann::json cfg{{"series", {"spatial", "temporal"}},
                     {"workers", {1, 2, 4, 8}},
                     {"base", 8},
                     {"time_steps", 4},
                     {"width", 4},
                     {"blocks", 2},
                     {"modes", {2, 2, 2, 2}},
                     {"output", csv}};
  RunOptions o;
  o.workers = 8;
  auto rows = bench_cmd(cfg, o);

  const std::vector<std::vector<int>> expect_partition{
      {1, 1, 1, 1, 1, 1}, {1, 1, 2, 1, 1, 1}, {1, 1, 2, 2, 1, 1}, {1, 1, 2, 2, 2, 1}};
  const std::vector<Shape> spatial_in{
      {1, 1, 8, 8, 8, 1}, {1, 1, 16, 8, 8, 1}, {1, 1, 16, 16, 8, 1}, {1, 1, 16, 16, 16, 1}};
  const std::vector<int> ps{1, 2, 4, 8};
  bool ok = rows.size() == 24;
  std::set<std::string> phases;
  for (std::size_t i = 0; ok && i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::size_t k = (i / 3) % 4;
    const bool spatial = i < 12;
    ok = r.series == (spatial ? "spatial" : "temporal") && r.workers == ps[k] &&
         r.partition == expect_partition[k] && r.median_seconds > 0 &&
         r.local_volume == rows[spatial ? 0 : 12].local_volume;
    if (spatial) {
      Shape out = spatial_in[k];
      out.back() = 4;
      ok = ok && r.input_shape == spatial_in[k] && r.output_shape == out;
    } else {
      ok = ok && r.input_shape == spatial_in[0] &&
           r.output_shape == Shape{1, 1, 8, 8, 8, 4 * ps[k]};
    }
    phases.insert(r.phase);
  }
  ok = ok && phases == std::set<std::string>{"inference", "forward_train", "backward"};
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  ok = ok && header == "series,p,partition,input_shape,output_shape,phase,median_seconds,local_volume";
  return {ok, std::to_string(rows.size()) +
                  " rows; partitions (1,1,1,1,1,1) -> (1,1,2,2,2,1); per-worker local volume " +
                  (rows.empty() ? std::string("-") : std::to_string(rows[0].local_volume)) +
                  " (spatial) / " +
                  (rows.size() < 13 ? std::string("-") : std::to_string(rows[12].local_volume)) +
                  " (temporal) constant; phases inference, forward_train, backward"};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path scratch =
      argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "dfno_acceptance";
  fs::create_directories(scratch);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"adjoint suite", [] { return from_checks({check_adjoint(50)}, 60); }},
      {"DFFT oracle", [] { return from_checks({check_dfft_oracle(), check_dfft_unitarity()}, 120); }},
      {"mode-ownership equivalence", [] { return from_checks({check_mode_ownership()}, 0); }},
      {"partition invariance", [] { return from_checks({check_partition_invariance()}, 0); }},
      {"gradient check", [] { return from_checks({check_gradients(1e-6)}, 300); }},
      {"training sanity", [&] { return training(scratch); }},
      {"weak-scaling harness", [&] { return weak_scaling(scratch); }},
      {"file format", [&] { return from_checks({check_file_roundtrip(scratch.string(), 100)}, 0); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.summary.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu of %zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed ? 1 : 0;
}
