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
// Invariant suites shared by the selftest command and the acceptance runner.
// Each suite returns the worst discrepancy it observed next to its tolerance.

#include <cstdint>
#include <string>
#include <vector>

namespace dfno {

struct CheckResult {
  std::string name;
  double tolerance = 0.0;  // zero: the suite demands exact agreement
  double max_discrepancy = 0.0;
  int cases = 0;
  double seconds = 0.0;
  std::string detail;

  bool passed() const {
    return tolerance > 0 ? max_discrepancy < tolerance : max_discrepancy == 0;
  }
};

/// Broadcast and repartition dot-product tests over random partitions
/// (<= 8 workers, dims <= 12), one of each per seed.
CheckResult check_adjoint(int seeds = 50);

/// Distributed FFT against gather + sequential FFT and against a direct DFT,
/// dims drawn from {4, 6, 8, 15, 16, 60}. Unitarity reports the norm defect.
CheckResult check_dfft_oracle();
CheckResult check_dfft_unitarity();

/// Distributed spectral convolution against the dense sequential reference.
CheckResult check_mode_ownership();

/// Full forward pass on (1,2,16,16,16,1), n_t = 10, over 1/2/4/8 workers.
CheckResult check_partition_invariance();

/// Adjoint gradients against central differences on a tiny model.
CheckResult check_gradients(double epsilon = 1e-6);

/// Write/read round trips and randomized region reads under `dir`.
CheckResult check_file_roundtrip(const std::string& dir, int trials = 100);

std::vector<CheckResult> run_all_checks(const std::string& scratch_dir);

}  // namespace dfno
