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

// Undistributed FNO over whole row-major tensors. Shares no partition or
// collective machinery with the distributed model and serves as its oracle.

#include <span>
#include <vector>

#include "dfno/model.hpp"

namespace dfno {

/// Spectral convolution of `x` (shape (batch, c_in, field...)) with dense
/// retained-mode weights laid out (2m_1, ..., 2m_r, c_out, c_in).
std::vector<double> reference_spectral_conv(const Shape& shape, std::span<const Index> modes,
                                            int c_out, std::span<const Complex> weights,
                                            std::span<const double> x);

std::vector<double> reference_forward(const FnoConfig& config,
                                      const std::vector<ParamGroup>& params,
                                      std::span<const double> a);

struct ReferenceGradients {
  double loss = 0.0;
  std::vector<ParamGroup> params;  // same names and shapes as the inputs
  std::vector<double> input;
};

ReferenceGradients reference_backward(const FnoConfig& config,
                                      const std::vector<ParamGroup>& params,
                                      std::span<const double> a, std::span<const double> target);

}  // namespace dfno
