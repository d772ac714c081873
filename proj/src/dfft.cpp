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
#include "dfno/dfft.hpp"

#include <algorithm>

namespace dfno {

namespace {

std::vector<std::size_t> minus(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  std::vector<std::size_t> out;
  for (std::size_t d : a)
    if (std::find(b.begin(), b.end(), d) == b.end()) out.push_back(d);
  return out;
}

void check_input(const DfftPlan& plan, const ComplexTensor& x, const Partition& expected,
                 const char* what) {
  if (x.shape() != plan.shape)
    fail(Errc::invalid_argument, std::string(what) + ": tensor shape " + to_string(x.shape()) +
                                     " does not match plan shape " + to_string(plan.shape));
  if (!x.partition().same_layout(expected))
    fail(Errc::invalid_argument, std::string(what) + ": tensor is not on the plan's partition");
}

}  // namespace

DfftPlan plan_dfft(const Partition& partition, const Shape& shape,
                   std::vector<std::size_t> transform_dims) {
  require(partition.ndim() == shape.size(), "plan_dfft: partition/shape dimensionality mismatch");
  std::sort(transform_dims.begin(), transform_dims.end());
  require(std::adjacent_find(transform_dims.begin(), transform_dims.end()) ==
              transform_dims.end(),
          "plan_dfft: repeated transform dimension");
  for (std::size_t d : transform_dims)
    require(d < shape.size(), "plan_dfft: transform dimension out of range");

  DfftPlan plan{partition, shape, transform_dims, {}};
  if (transform_dims.empty()) return plan;

  bool whole = true;
  for (std::size_t d : transform_dims) whole = whole && partition.dims()[d] == 1;
  if (whole) {
    plan.stages.push_back({transform_dims, partition});
    return plan;
  }

  const std::size_t n = transform_dims.size();
  std::vector<std::size_t> later(transform_dims.begin() + static_cast<long>(n - n / 2),
                                 transform_dims.end());
  std::vector<std::size_t> earlier(transform_dims.begin(),
                                   transform_dims.begin() + static_cast<long>(n - n / 2));
  if (later.empty()) {
    // one transform dim, distributed: move its workers elsewhere
    std::vector<std::size_t> all(shape.size());
    for (std::size_t d = 0; d < all.size(); ++d) all[d] = d;
    plan.stages.push_back({earlier, make_whole(partition, shape, earlier, minus(all, earlier))});
    return plan;
  }
  Partition first = make_whole(partition, shape, later, minus(transform_dims, later));
  Partition second = make_whole(first, shape, earlier, minus(transform_dims, earlier));
  plan.stages.push_back({later, first});
  plan.stages.push_back({earlier, second});
  return plan;
}

SpectralField dfft_forward(WorkerContext& ctx, const DfftPlan& plan, const ComplexTensor& x) {
  check_input(plan, x, plan.input, "dfft_forward");
  ComplexTensor cur = x;
  for (const auto& stage : plan.stages) {
    cur = repartition(ctx, cur, stage.partition);
    local_fft(cur, stage.dims, Direction::forward);
  }
  return {std::move(cur), plan.transform_dims};
}

ComplexTensor dfft_inverse(WorkerContext& ctx, const DfftPlan& plan, const SpectralField& spectrum) {
  check_input(plan, spectrum.data, plan.output_partition(), "dfft_inverse");
  ComplexTensor cur = spectrum.data;
  for (std::size_t s = plan.stages.size(); s-- > 0;) {
    local_fft(cur, plan.stages[s].dims, Direction::inverse);
    const Partition& prev = s == 0 ? plan.input : plan.stages[s - 1].partition;
    cur = repartition(ctx, cur, prev);
  }
  return cur;
}

ComplexTensor dfft_adjoint(WorkerContext& ctx, const DfftPlan& plan, const ComplexTensor& g) {
  check_input(plan, g, plan.output_partition(), "dfft_adjoint");
  ComplexTensor cur = g;
  for (std::size_t s = plan.stages.size(); s-- > 0;) {
    // unitary local transform: adjoint == inverse
    local_fft(cur, plan.stages[s].dims, Direction::inverse);
    const Partition& prev = s == 0 ? plan.input : plan.stages[s - 1].partition;
    cur = repartition_adj(ctx, cur, prev);
  }
  return cur;
}

}  // namespace dfno
