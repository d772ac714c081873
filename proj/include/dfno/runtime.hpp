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

// In-process multi-worker execution. Each worker runs the same program in its
// own thread; all cross-worker traffic goes through a Runtime mailbox of
// per-(source, destination) FIFO channels. Sends never block.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "dfno/box_copy.hpp"
#include "dfno/error.hpp"
#include "dfno/partition.hpp"

namespace dfno {

enum class OpTag : std::uint8_t { broadcast, reduce, repartition };

const char* op_tag_name(OpTag tag);

struct Message {
  OpTag tag = OpTag::repartition;
  std::uint64_t key = 0;
  std::uint64_t seq = 0;
  int source = 0;
  RegionBox box;
  std::vector<double> payload;  // row-major scalars; complex values interleaved
};

class Runtime {
 public:
  explicit Runtime(int num_workers);
  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  int size() const { return size_; }

  void post(int dest, Message msg);
  /// Blocks until a message from `source` to `dest` is available. Throws
  /// Errc::protocol when no worker can make progress, Errc::cancelled when
  /// another worker failed.
  Message take(int dest, int source);

  void mark_finished(int rank);
  void abort(int rank, Errc code, const std::string& what);

  /// First recorded non-cancellation failure, if any.
  std::optional<LaunchError> failure() const;
  std::size_t undelivered() const;

 private:
  bool stalled_locked() const;

  int size_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<std::deque<Message>> channels_;
  std::vector<int> waiting_on_;
  std::vector<bool> finished_;
  bool aborted_ = false;
  std::optional<LaunchError> failure_;
};

class WorkerContext {
 public:
  WorkerContext(Runtime& runtime, int rank) : runtime_(&runtime), rank_(rank) {}

  int rank() const { return rank_; }
  int size() const { return runtime_->size(); }

  /// Per-key collective counter; identical across workers that execute the
  /// same sequence of collectives.
  std::uint64_t next_seq(std::uint64_t key) { return seq_[key]++; }

  void send(int dest, Message msg);
  /// Receives the next message from `source` and checks that its header
  /// matches the expected collective.
  Message recv(int source, OpTag tag, std::uint64_t key, std::uint64_t seq);

  void register_partition(const Partition& p) { partitions_[p.id()] = p; }
  const Partition* find_partition(std::uint64_t id) const;

 private:
  Runtime* runtime_;
  int rank_;
  std::unordered_map<std::uint64_t, std::uint64_t> seq_;
  std::map<std::uint64_t, Partition> partitions_;
};

namespace detail {
void run_workers(int num_workers, const std::function<void(WorkerContext&)>& body);
}

/// Runs `program(ctx)` once per rank and returns the results in rank order.
/// The first worker failure cancels the others and is rethrown as a
/// LaunchError naming the failing rank.
template <class F>
auto launch(int num_workers, F&& program) {
  using R = std::invoke_result_t<F&, WorkerContext&>;
  if constexpr (std::is_void_v<R>) {
    detail::run_workers(num_workers, [&](WorkerContext& ctx) { program(ctx); });
  } else {
    std::vector<std::optional<R>> slots(num_workers > 0 ? num_workers : 0);
    detail::run_workers(num_workers,
                        [&](WorkerContext& ctx) { slots[ctx.rank()].emplace(program(ctx)); });
    std::vector<R> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
  }
}

/// Executes a transfer plan: sends this worker's pieces of its source block
/// and assembles its destination block from received pieces.
template <class T>
std::vector<T> exchange(WorkerContext& ctx, const TransferPlan& plan, std::span<const T> local);

/// Elementwise sum over `group` (ascending ranks), delivered to `root` only.
/// The root need not be a group member.
std::optional<std::vector<double>> reduce_sum(WorkerContext& ctx, std::span<const int> group,
                                              int root, std::span<const double> local);

/// Sum over all workers in ascending rank order; every worker gets the result.
std::vector<double> allreduce_sum(WorkerContext& ctx, std::span<const double> local);
double allreduce_sum(WorkerContext& ctx, double local);

/// Copies `values` from `root` to every worker.
void share_from_root(WorkerContext& ctx, int root, std::vector<double>& values);

// ---------------------------------------------------------------------------

template <class T>
constexpr std::size_t scalar_width() {
  static_assert(sizeof(T) % sizeof(double) == 0);
  return sizeof(T) / sizeof(double);
}

template <class T>
std::vector<T> exchange(WorkerContext& ctx, const TransferPlan& plan, std::span<const T> local) {
  const int me = ctx.rank();
  const std::uint64_t key = plan.key();
  const std::uint64_t seq = ctx.next_seq(key);

  RegionBox src_box = plan.source.contains_rank(me)
                          ? local_region(plan.source, me, plan.shape)
                          : RegionBox{std::vector<IndexRange>(plan.shape.size())};
  RegionBox dst_box = plan.dest.contains_rank(me)
                          ? local_region(plan.dest, me, plan.shape)
                          : RegionBox{std::vector<IndexRange>(plan.shape.size())};
  if (static_cast<Index>(local.size()) != src_box.volume())
    fail(Errc::invalid_argument, "exchange: local buffer has " + std::to_string(local.size()) +
                                     " elements, source box needs " +
                                     std::to_string(src_box.volume()));

  const auto& mine = plan.at(me);
  for (const auto& t : mine.sends) {
    if (t.peer == me) continue;
    Message msg{OpTag::repartition, key, seq, me, t.box, {}};
    msg.payload.resize(static_cast<std::size_t>(t.box.volume()) * scalar_width<T>());
    copy_region(local.data(), src_box, reinterpret_cast<T*>(msg.payload.data()), t.box, t.box);
    ctx.send(t.peer, std::move(msg));
  }

  std::vector<T> out(static_cast<std::size_t>(dst_box.volume()));
  for (const auto& t : mine.recvs) {
    if (t.peer == me) {
      copy_region(local.data(), src_box, out.data(), dst_box, t.box);
      continue;
    }
    Message msg = ctx.recv(t.peer, OpTag::repartition, key, seq);
    if (!(msg.box == t.box) ||
        msg.payload.size() != static_cast<std::size_t>(t.box.volume()) * scalar_width<T>())
      fail(Errc::protocol, "exchange: received block does not match plan");
    copy_region(reinterpret_cast<const T*>(msg.payload.data()), t.box, out.data(), dst_box, t.box);
  }
  return out;
}

}  // namespace dfno
