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

// Synthetic training data: 2-D heat equation with a variable diffusivity.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dfno/partition.hpp"

namespace dfno {

/// Largest explicit step that keeps the update a convex combination.
double stable_dt(std::span<const double> kappa, double h);

/// One explicit step of u_t = div(kappa grad u) on an nx x ny grid with
/// face-averaged kappa and insulated (zero-flux) boundaries.
std::vector<double> heat_step(std::span<const double> u, std::span<const double> kappa, Index nx,
                              Index ny, double dt, double h);

struct DatasetOptions {
  int samples = 200;
  Index n = 32;
  Index n_t = 10;
  std::uint64_t seed = 0;
  double t_end = 0.02;        // time of the last frame on the unit square
  double log_kappa_std = 0.5;
  int smoothing_passes = 4;
  double bump_width = 0.1;
  Shape chunk{16, 16};        // spatial chunk extents of the written files
};

struct HeatSample {
  std::vector<double> kappa;   // n x n
  std::vector<double> initial; // n x n
  std::vector<double> frames;  // n x n x n_t, time innermost
};

std::vector<double> gaussian_bump(Index n, double width);
std::vector<double> diffusivity_field(const DatasetOptions& options, int sample);
HeatSample simulate_sample(const DatasetOptions& options, int sample);

std::string input_file_name(int sample);
std::string target_file_name(int sample);

/// Writes input_NNNN.dfno (2, n, n, 1: kappa and the initial condition),
/// target_NNNN.dfno (1, n, n, n_t) and manifest.json into `out_dir`.
void generate_dataset(const DatasetOptions& options, const std::string& out_dir);

}  // namespace dfno
