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
#pragma once
// The five user-facing commands. Each takes a parsed JSON configuration;
// relative paths in it are resolved against the working directory.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dfno/checks.hpp"
#include "dfno/model.hpp"
#include "json.hpp"

namespace dfno {

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides the config's seed
  int workers = 1;
  std::function<void(const std::string&)> log;  // one line per call, no newline
};

struct SelftestReport {
  std::vector<CheckResult> suites;
  bool passed() const;
};

SelftestReport selftest_cmd(const nlohmann::json& config, const RunOptions& options);

void gen_data_cmd(const nlohmann::json& config, const RunOptions& options);

struct EpochLoss {
  int epoch = 0;
  double train = 0.0;
  double validation = 0.0;
};

struct TrainReport {
  std::vector<EpochLoss> history;
  std::string loss_csv;
  std::string checkpoint_dir;
};

TrainReport train_cmd(const nlohmann::json& config, const RunOptions& options);

struct InferReport {
  double seconds = 0.0;
  Shape output_shape;
  std::string output;
};

InferReport infer_cmd(const nlohmann::json& config, const RunOptions& options);

struct BenchRow {
  std::string series;  // "spatial" or "temporal"
  int workers = 1;
  std::vector<int> partition;
  Shape input_shape;
  Shape output_shape;
  std::string phase;  // inference, forward_train, backward
  double median_seconds = 0.0;
  Index local_volume = 0;
};

std::vector<BenchRow> bench_cmd(const nlohmann::json& config, const RunOptions& options);

/// Input partition used by the weak-scaling rows: workers doubled over
/// x, y, z in turn, as in the scaling table.
std::vector<int> bench_partition(int workers);

// ---- checkpoints ----

nlohmann::ordered_json model_to_json(const FnoConfig& config);
/// Model hyperparameters only; partition fields are left empty.
FnoConfig model_from_json(const nlohmann::json& doc);

void write_checkpoint(const std::string& dir, const FnoConfig& config,
                      const std::vector<ParamGroup>& groups);

struct Checkpoint {
  FnoConfig config;
  std::vector<ParamGroup> groups;
};

Checkpoint read_checkpoint(const std::string& dir);

}  // namespace dfno
