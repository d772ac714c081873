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

// Communication-free partition algebra: Cartesian worker grids, balanced
// block decomposition, broadcast compatibility and repartition planning.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dfno {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index volume(std::span<const Index> shape);
std::string to_string(std::span<const Index> values);

/// Half-open index interval [start, stop).
struct IndexRange {
  Index start = 0;
  Index stop = 0;

  Index size() const { return stop - start; }
  bool empty() const { return stop <= start; }
  bool contains(Index i) const { return i >= start && i < stop; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

/// One index range per tensor dimension, in global coordinates.
struct RegionBox {
  std::vector<IndexRange> ranges;

  std::size_t ndim() const { return ranges.size(); }
  Shape extent() const;
  Index volume() const;
  bool empty() const;
  bool contains(std::span<const Index> point) const;
  friend bool operator==(const RegionBox&, const RegionBox&) = default;
  friend bool operator<(const RegionBox& a, const RegionBox& b);
};

RegionBox full_box(std::span<const Index> shape);
RegionBox intersect(const RegionBox& a, const RegionBox& b);

/// Cartesian grid of workers. Coordinates map to ranks in row-major order,
/// and a partition with N workers occupies ranks 0..N-1 of a launch.
class Partition {
 public:
  Partition() = default;

  const std::vector<int>& dims() const { return dims_; }
  std::size_t ndim() const { return dims_.size(); }
  int size() const { return size_; }
  std::uint64_t id() const { return id_; }

  std::vector<int> coords(int rank) const;
  int rank_of(std::span<const int> coords) const;
  bool contains_rank(int rank) const { return rank >= 0 && rank < size_; }

  /// Structural equality: same worker grid, ignoring the id.
  bool same_layout(const Partition& other) const { return dims_ == other.dims_; }

 private:
  friend Partition make_partition(std::vector<int> dims);
  std::vector<int> dims_;
  int size_ = 0;
  std::uint64_t id_ = 0;
};

Partition make_partition(std::vector<int> dims);

/// All-ones partition with `ndim` dimensions (a single worker).
Partition root_partition(std::size_t ndim);

/// Balanced split of [0, n) into p contiguous blocks; the first n mod p
/// blocks get one extra element.
IndexRange block_range(Index global_size, int num_blocks, int block_index);

RegionBox local_region(const Partition& partition, int rank, std::span<const Index> global_shape);

/// Per-dimension broadcast verdict, aligned to the destination's dimensions.
struct BroadcastDescriptor {
  std::vector<int> source_dims;  // left-padded with 1s
  std::vector<bool> copied;      // true where source_dim == 1 < dest_dim

  /// Source rank whose block the given destination rank receives.
  int source_rank_for(const Partition& dest, int dest_rank) const;
};

std::optional<BroadcastDescriptor> broadcast_compatible(const Partition& source,
                                                        const Partition& dest);

struct Transfer {
  int peer = 0;
  RegionBox box;
  friend bool operator==(const Transfer&, const Transfer&) = default;
};

struct WorkerTransfers {
  std::vector<Transfer> sends;
  std::vector<Transfer> recvs;
  friend bool operator==(const WorkerTransfers&, const WorkerTransfers&) = default;
};

/// Block intersections realizing a repartition between two partitions of the
/// same global shape. Indexed by rank over max(source.size(), dest.size()).
struct TransferPlan {
  Partition source;
  Partition dest;
  Shape shape;
  std::vector<WorkerTransfers> workers;

  const WorkerTransfers& at(int rank) const;
  /// Wire key shared by all workers executing this plan.
  std::uint64_t key() const;
};

TransferPlan transfer_plan(const Partition& source, const Partition& dest,
                           std::span<const Index> global_shape);

/// Greedy placement of `total_workers` onto `eligible` dimensions of `shape`:
/// prime factors, largest first, go to the eligible dimension with the most
/// remaining extent per worker. Throws Errc::plan when a factor cannot be
/// placed without exceeding a dimension's size.
Partition refactor_partition(int total_workers, std::span<const Index> shape,
                             std::span<const std::size_t> eligible);

/// Returns `partition` if it is already 1 on every `whole` dimension, else
/// a refactored partition with the same worker count over `eligible`.
Partition make_whole(const Partition& partition, std::span<const Index> shape,
                     std::span<const std::size_t> whole, std::span<const std::size_t> eligible);

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value);

}  // namespace dfno
