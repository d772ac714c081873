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

// Partitioned tensors and the two core parallel primitives, broadcast and
// repartition, each paired with its adjoint.

#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dfno/partition.hpp"
#include "dfno/runtime.hpp"

namespace dfno {

using Complex = std::complex<double>;

/// One worker's view of a globally partitioned tensor. The local buffer is
/// row-major over `box()`; workers outside the partition hold an empty box.
template <class T>
class DistTensor {
 public:
  using value_type = T;

  DistTensor() = default;
  DistTensor(Shape shape, Partition partition, int rank)
      : shape_(std::move(shape)), partition_(std::move(partition)), rank_(rank) {
    require(shape_.size() == partition_.ndim(),
            "tensor: shape " + to_string(shape_) + " does not match partition dimensionality");
    box_ = partition_.contains_rank(rank_) ? local_region(partition_, rank_, shape_)
                                           : RegionBox{std::vector<IndexRange>(shape_.size())};
    data_.assign(static_cast<std::size_t>(box_.volume()), T{});
  }
  /// Explicit block, used for broadcast copies whose box belongs to the
  /// matched source worker.
  DistTensor(Shape shape, Partition partition, int rank, RegionBox box, std::vector<T> data)
      : shape_(std::move(shape)),
        partition_(std::move(partition)),
        rank_(rank),
        box_(std::move(box)),
        data_(std::move(data)) {
    require(static_cast<Index>(data_.size()) == box_.volume(),
            "tensor: buffer length does not match box volume");
  }

  const Shape& shape() const { return shape_; }
  const Partition& partition() const { return partition_; }
  int rank() const { return rank_; }
  const RegionBox& box() const { return box_; }
  Shape local_shape() const { return box_.extent(); }
  bool active() const { return partition_.contains_rank(rank_); }
  std::size_t size() const { return data_.size(); }

  std::span<T> local() { return data_; }
  std::span<const T> local() const { return data_; }
  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  /// Same layout, zero-filled.
  DistTensor zeros_like() const { return DistTensor(shape_, partition_, rank_, box_, std::vector<T>(data_.size())); }

 private:
  Shape shape_;
  Partition partition_;
  int rank_ = 0;
  RegionBox box_;
  std::vector<T> data_;
};

using RealTensor = DistTensor<double>;
using ComplexTensor = DistTensor<Complex>;

/// Local block of a replicated global tensor (no communication).
template <class T>
DistTensor<T> scatter(std::span<const T> global, const Shape& shape, const Partition& partition,
                      int rank) {
  require(static_cast<Index>(global.size()) == volume(shape), "scatter: global buffer size");
  DistTensor<T> t(shape, partition, rank);
  copy_region(global.data(), full_box(shape), t.data().data(), t.box(), t.box());
  return t;
}

// Broadcast B_{P->Q}: every destination worker receives the block of its
// matched source worker. The output's shape is the input's, left-padded with
// 1s to Q's dimensionality.
template <class T>
DistTensor<T> broadcast_fwd(WorkerContext& ctx, const DistTensor<T>& x, const Partition& dest);

// Adjoint of broadcast: each source worker receives the sum of its copy
// group's blocks, accumulated in ascending rank order.
template <class T>
DistTensor<T> broadcast_adj(WorkerContext& ctx, const DistTensor<T>& g, const Partition& source,
                            const Shape& source_shape);

template <class T>
DistTensor<T> repartition(WorkerContext& ctx, const DistTensor<T>& x, const Partition& dest);

template <class T>
DistTensor<T> repartition_adj(WorkerContext& ctx, const DistTensor<T>& g, const Partition& source);

/// Whole tensor on `root` (empty elsewhere).
template <class T>
std::vector<T> gather(WorkerContext& ctx, const DistTensor<T>& x, int root = 0);

/// Whole tensor on every worker.
template <class T>
std::vector<T> gather_all(WorkerContext& ctx, const DistTensor<T>& x);

/// Global inner product <x, y>, conjugate-linear in x, summed over every
/// worker's block in ascending rank order.
double dot(WorkerContext& ctx, const RealTensor& x, const RealTensor& y);
Complex dot(WorkerContext& ctx, const ComplexTensor& x, const ComplexTensor& y);
double norm2(WorkerContext& ctx, const RealTensor& x);
double norm2(WorkerContext& ctx, const ComplexTensor& x);

template <class T>
struct LinearOp {
  std::string name;
  Shape input_shape;
  Partition input_partition;
  std::function<DistTensor<T>(WorkerContext&, const DistTensor<T>&)> forward;
  std::function<DistTensor<T>(WorkerContext&, const DistTensor<T>&)> adjoint;
};

/// |<Ax, y> - <x, A^T y>| / (|Ax| |y|) for seeded random x and y.
template <class T>
double adjoint_check(WorkerContext& ctx, const LinearOp<T>& op, std::uint64_t seed);

/// Fills a tensor with uniform [-1, 1) values keyed on (seed, global index),
/// so the gathered result does not depend on the partition.
template <class T>
void fill_random(DistTensor<T>& t, std::uint64_t seed);

/// Uniform [-1, 1) values keyed on (seed, rank, local index); for layouts
/// without a partition-independent global index (broadcast copies).
template <class T>
void fill_random_local(DistTensor<T>& t, std::uint64_t seed);

double uniform_from_key(std::uint64_t key);

namespace debug {
/// Test hook: perturbs repartition_adj so adjoint checks must fail.
void set_corrupt_adjoint(bool on);
bool corrupt_adjoint();
}  // namespace debug

}  // namespace dfno
