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

// Distributed separable FFT: a chain of repartitions and local transforms over
// dimension subsets that are whole on every worker.

#include <span>
#include <vector>

#include "dfno/collectives.hpp"
#include "dfno/fft.hpp"

namespace dfno {

struct DfftStage {
  std::vector<std::size_t> dims;  // transformed locally in this stage
  Partition partition;            // size 1 on every entry of `dims`
};

struct DfftPlan {
  Partition input;
  Shape shape;
  std::vector<std::size_t> transform_dims;
  std::vector<DfftStage> stages;

  /// Partition the spectrum lives on after the forward transform.
  const Partition& output_partition() const {
    return stages.empty() ? input : stages.back().partition;
  }
};

struct SpectralField {
  ComplexTensor data;
  std::vector<std::size_t> transformed;
};

/// Two stages when the input is distributed along the transform dims: the
/// trailing half of `transform_dims` first, then the leading half. A single
/// stage otherwise. Stage partitions keep the worker count and spread it over
/// the transform dims that are not local in that stage.
DfftPlan plan_dfft(const Partition& partition, const Shape& shape,
                   std::vector<std::size_t> transform_dims);

SpectralField dfft_forward(WorkerContext& ctx, const DfftPlan& plan, const ComplexTensor& x);
ComplexTensor dfft_inverse(WorkerContext& ctx, const DfftPlan& plan, const SpectralField& spectrum);
/// Adjoint of dfft_forward, composed from stage adjoints in reverse order.
ComplexTensor dfft_adjoint(WorkerContext& ctx, const DfftPlan& plan, const ComplexTensor& g);

}  // namespace dfno
