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
#include "dfno/partition.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

#include "dfno/error.hpp"

namespace dfno {

namespace {

std::atomic<std::uint64_t> next_partition_id{1};

std::vector<int> prime_factors_descending(int n) {
  std::vector<int> out;
  for (int p = 2; p * p <= n; ++p) {
    while (n % p == 0) {
      out.push_back(p);
      n /= p;
    }
  }
  if (n > 1) out.push_back(n);
  std::sort(out.rbegin(), out.rend());
  return out;
}

}  // namespace

Index volume(std::span<const Index> shape) {
  Index v = 1;
  for (Index s : shape) v *= s;
  return v;
}

std::string to_string(std::span<const Index> values) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? "," : "") << values[i];
  os << ')';
  return os.str();
}

Shape RegionBox::extent() const {
  Shape out(ranges.size());
  for (std::size_t d = 0; d < ranges.size(); ++d) out[d] = std::max<Index>(0, ranges[d].size());
  return out;
}

Index RegionBox::volume() const {
  Index v = 1;
  for (const auto& r : ranges) v *= std::max<Index>(0, r.size());
  return v;
}

bool RegionBox::empty() const { return volume() == 0; }

bool RegionBox::contains(std::span<const Index> point) const {
  if (point.size() != ranges.size()) return false;
  for (std::size_t d = 0; d < ranges.size(); ++d)
    if (!ranges[d].contains(point[d])) return false;
  return true;
}

bool operator<(const RegionBox& a, const RegionBox& b) {
  return std::lexicographical_compare(
      a.ranges.begin(), a.ranges.end(), b.ranges.begin(), b.ranges.end(),
      [](const IndexRange& x, const IndexRange& y) {
        return x.start != y.start ? x.start < y.start : x.stop < y.stop;
      });
}

RegionBox full_box(std::span<const Index> shape) {
  RegionBox box;
  for (Index s : shape) box.ranges.push_back({0, s});
  return box;
}

RegionBox intersect(const RegionBox& a, const RegionBox& b) {
  require(a.ndim() == b.ndim(), "intersect: dimensionality mismatch");
  RegionBox out;
  out.ranges.resize(a.ndim());
  for (std::size_t d = 0; d < a.ndim(); ++d) {
    Index lo = std::max(a.ranges[d].start, b.ranges[d].start);
    Index hi = std::min(a.ranges[d].stop, b.ranges[d].stop);
    out.ranges[d] = {lo, std::max(lo, hi)};
  }
  return out;
}

std::vector<int> Partition::coords(int rank) const {
  require(contains_rank(rank), "partition: rank " + std::to_string(rank) + " out of range");
  std::vector<int> c(dims_.size());
  for (std::size_t d = dims_.size(); d-- > 0;) {
    c[d] = rank % dims_[d];
    rank /= dims_[d];
  }
  return c;
}

int Partition::rank_of(std::span<const int> c) const {
  require(c.size() == dims_.size(), "partition: coordinate dimensionality mismatch");
  int rank = 0;
  for (std::size_t d = 0; d < dims_.size(); ++d) {
    require(c[d] >= 0 && c[d] < dims_[d], "partition: coordinate out of range");
    rank = rank * dims_[d] + c[d];
  }
  return rank;
}

Partition make_partition(std::vector<int> dims) {
  require(!dims.empty(), "make_partition: at least one dimension required");
  long long total = 1;
  for (int d : dims) {
    require(d >= 1, "make_partition: worker counts must be >= 1, got " + std::to_string(d));
    total *= d;
    require(total <= (1 << 20), "make_partition: too many workers");
  }
  Partition p;
  p.dims_ = std::move(dims);
  p.size_ = static_cast<int>(total);
  p.id_ = next_partition_id.fetch_add(1);
  return p;
}

Partition root_partition(std::size_t ndim) { return make_partition(std::vector<int>(ndim, 1)); }

IndexRange block_range(Index n, int p, int i) {
  require(p >= 1, "block_range: num_blocks must be >= 1");
  require(n >= 0, "block_range: negative global size");
  require(i >= 0 && i < p, "block_range: block index " + std::to_string(i) + " out of range");
  Index q = n / p;
  Index r = n % p;
  Index start = i * q + std::min<Index>(i, r);
  Index len = q + (i < r ? 1 : 0);
  return {start, start + len};
}

RegionBox local_region(const Partition& partition, int rank, std::span<const Index> shape) {
  require(shape.size() == partition.ndim(),
          "local_region: partition has " + std::to_string(partition.ndim()) +
              " dims, shape has " + std::to_string(shape.size()));
  auto c = partition.coords(rank);
  RegionBox box;
  box.ranges.reserve(shape.size());
  for (std::size_t d = 0; d < shape.size(); ++d)
    box.ranges.push_back(block_range(shape[d], partition.dims()[d], c[d]));
  return box;
}

int BroadcastDescriptor::source_rank_for(const Partition& dest, int dest_rank) const {
  auto c = dest.coords(dest_rank);
  int rank = 0;
  for (std::size_t d = 0; d < c.size(); ++d) {
    int coord = copied[d] ? 0 : c[d];
    rank = rank * source_dims[d] + coord;
  }
  return rank;
}

std::optional<BroadcastDescriptor> broadcast_compatible(const Partition& source,
                                                        const Partition& dest) {
  if (source.ndim() > dest.ndim()) return std::nullopt;
  BroadcastDescriptor desc;
  desc.source_dims.assign(dest.ndim() - source.ndim(), 1);
  desc.source_dims.insert(desc.source_dims.end(), source.dims().begin(), source.dims().end());
  desc.copied.resize(dest.ndim());
  for (std::size_t d = 0; d < dest.ndim(); ++d) {
    int s = desc.source_dims[d];
    int q = dest.dims()[d];
    if (s != q && s != 1) return std::nullopt;
    desc.copied[d] = (s == 1 && q > 1);
  }
  return desc;
}

const WorkerTransfers& TransferPlan::at(int rank) const {
  static const WorkerTransfers none;
  if (rank < 0 || static_cast<std::size_t>(rank) >= workers.size()) return none;
  return workers[rank];
}

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
  // splitmix64 finalizer over the running state
  std::uint64_t z = seed ^ (value + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t TransferPlan::key() const {
  std::uint64_t h = hash_combine(0x5245504152544eULL, shape.size());
  for (int d : source.dims()) h = hash_combine(h, static_cast<std::uint64_t>(d));
  h = hash_combine(h, 0xffff);
  for (int d : dest.dims()) h = hash_combine(h, static_cast<std::uint64_t>(d));
  h = hash_combine(h, 0xfffe);
  for (Index s : shape) h = hash_combine(h, static_cast<std::uint64_t>(s));
  return h;
}

TransferPlan transfer_plan(const Partition& source, const Partition& dest,
                           std::span<const Index> shape) {
  require(source.ndim() == shape.size() && dest.ndim() == shape.size(),
          "transfer_plan: partitions and shape must have equal dimensionality");
  TransferPlan plan{source, dest, Shape(shape.begin(), shape.end()), {}};
  const int n = std::max(source.size(), dest.size());
  plan.workers.resize(n);

  std::vector<RegionBox> dest_boxes;
  dest_boxes.reserve(dest.size());
  for (int r = 0; r < dest.size(); ++r) dest_boxes.push_back(local_region(dest, r, shape));

  for (int s = 0; s < source.size(); ++s) {
    RegionBox src_box = local_region(source, s, shape);
    if (src_box.empty()) continue;
    for (int r = 0; r < dest.size(); ++r) {
      RegionBox box = intersect(src_box, dest_boxes[r]);
      if (box.empty()) continue;
      plan.workers[s].sends.push_back({r, box});
      plan.workers[r].recvs.push_back({s, std::move(box)});
    }
  }
  return plan;
}

Partition refactor_partition(int total, std::span<const Index> shape,
                             std::span<const std::size_t> eligible) {
  std::vector<int> dims(shape.size(), 1);
  for (int p : prime_factors_descending(total)) {
    std::size_t best = shape.size();
    double best_extent = -1.0;
    for (std::size_t d : eligible) {
      require(d < shape.size(), "refactor_partition: eligible dimension out of range");
      if (static_cast<Index>(dims[d]) * p > shape[d]) continue;
      double extent = static_cast<double>(shape[d]) / dims[d];
      if (extent > best_extent) {
        best_extent = extent;
        best = d;
      }
    }
    if (best == shape.size())
      fail(Errc::plan, "cannot place " + std::to_string(total) + " workers over shape " +
                           to_string(shape));
    dims[best] *= p;
  }
  return make_partition(std::move(dims));
}

Partition make_whole(const Partition& partition, std::span<const Index> shape,
                     std::span<const std::size_t> whole, std::span<const std::size_t> eligible) {
  bool legal = true;
  for (std::size_t d : whole) legal = legal && partition.dims()[d] == 1;
  if (legal) return partition;
  return refactor_partition(partition.size(), shape, eligible);
}

}  // namespace dfno
