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
#include "dfno/runtime.hpp"

#include <algorithm>
#include <thread>

namespace dfno {

const char* op_tag_name(OpTag tag) {
  switch (tag) {
    case OpTag::broadcast: return "broadcast";
    case OpTag::reduce: return "reduce";
    case OpTag::repartition: return "repartition";
  }
  return "?";
}

Runtime::Runtime(int n)
    : size_(n),
      channels_(static_cast<std::size_t>(n) * n),
      waiting_on_(n, -1),
      finished_(n, false) {
  require(n >= 1, "runtime: worker count must be >= 1");
}

void Runtime::post(int dest, Message msg) {
  require(dest >= 0 && dest < size_, "runtime: destination rank out of range");
  {
    std::lock_guard lock(mutex_);
    channels_[static_cast<std::size_t>(msg.source) * size_ + dest].push_back(std::move(msg));
  }
  cv_.notify_all();
}

bool Runtime::stalled_locked() const {
  for (int r = 0; r < size_; ++r) {
    if (finished_[r]) continue;
    int src = waiting_on_[r];
    if (src < 0) return false;
    if (!channels_[static_cast<std::size_t>(src) * size_ + r].empty()) return false;
  }
  return true;
}

Message Runtime::take(int dest, int source) {
  require(source >= 0 && source < size_, "runtime: source rank out of range");
  std::unique_lock lock(mutex_);
  auto& chan = channels_[static_cast<std::size_t>(source) * size_ + dest];
  waiting_on_[dest] = source;
  while (chan.empty()) {
    if (aborted_) {
      waiting_on_[dest] = -1;
      throw Error(Errc::cancelled, "cancelled after failure of another worker");
    }
    if (stalled_locked()) {
      waiting_on_[dest] = -1;
      std::string what = "rank " + std::to_string(dest) + " waits for a message from rank " +
                         std::to_string(source) + " that is never sent";
      if (!failure_) failure_.emplace(dest, Errc::protocol, what);
      aborted_ = true;
      cv_.notify_all();
      throw Error(Errc::protocol, what);
    }
    cv_.wait(lock);
  }
  waiting_on_[dest] = -1;
  Message msg = std::move(chan.front());
  chan.pop_front();
  return msg;
}

void Runtime::mark_finished(int rank) {
  {
    std::lock_guard lock(mutex_);
    finished_[rank] = true;
  }
  cv_.notify_all();
}

void Runtime::abort(int rank, Errc code, const std::string& what) {
  {
    std::lock_guard lock(mutex_);
    if (!failure_ && code != Errc::cancelled) failure_.emplace(rank, code, what);
    aborted_ = true;
  }
  cv_.notify_all();
}

std::optional<LaunchError> Runtime::failure() const {
  std::lock_guard lock(mutex_);
  return failure_;
}

std::size_t Runtime::undelivered() const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& c : channels_) n += c.size();
  return n;
}

void WorkerContext::send(int dest, Message msg) {
  msg.source = rank_;
  runtime_->post(dest, std::move(msg));
}

Message WorkerContext::recv(int source, OpTag tag, std::uint64_t key, std::uint64_t seq) {
  Message msg = runtime_->take(rank_, source);
  if (msg.tag != tag || msg.key != key || msg.seq != seq) {
    fail(Errc::protocol, std::string("rank ") + std::to_string(rank_) + " expected " +
                             op_tag_name(tag) + " #" + std::to_string(seq) + " from rank " +
                             std::to_string(source) + ", got " + op_tag_name(msg.tag) + " #" +
                             std::to_string(msg.seq) +
                             (msg.key != key ? " on a different collective" : ""));
  }
  return msg;
}

const Partition* WorkerContext::find_partition(std::uint64_t id) const {
  auto it = partitions_.find(id);
  return it == partitions_.end() ? nullptr : &it->second;
}

namespace detail {

void run_workers(int n, const std::function<void(WorkerContext&)>& body) {
  require(n >= 1, "launch: worker count must be >= 1");
  Runtime runtime(n);

  auto worker = [&](int rank) {
    WorkerContext ctx(runtime, rank);
    try {
      body(ctx);
    } catch (const Error& e) {
      runtime.abort(rank, e.code(), e.what());
    } catch (const std::exception& e) {
      runtime.abort(rank, Errc::internal, e.what());
    } catch (...) {
      runtime.abort(rank, Errc::internal, "unknown exception");
    }
    runtime.mark_finished(rank);
  };

  if (n == 1) {
    worker(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(n);
    for (int r = 0; r < n; ++r) threads.emplace_back(worker, r);
    for (auto& t : threads) t.join();
  }

  if (auto f = runtime.failure()) throw *f;
  if (std::size_t left = runtime.undelivered())
    throw LaunchError(0, Errc::protocol,
                      std::to_string(left) + " message(s) sent but never received");
}

}  // namespace detail

std::optional<std::vector<double>> reduce_sum(WorkerContext& ctx, std::span<const int> group,
                                              int root, std::span<const double> local) {
  require(!group.empty(), "reduce_sum: empty group");
  require(std::is_sorted(group.begin(), group.end()) &&
              std::adjacent_find(group.begin(), group.end()) == group.end(),
          "reduce_sum: group must be strictly ascending");
  std::uint64_t key = hash_combine(0x524544554345ULL, static_cast<std::uint64_t>(root));
  for (int r : group) key = hash_combine(key, static_cast<std::uint64_t>(r));
  const std::uint64_t seq = ctx.next_seq(key);
  const int me = ctx.rank();
  const bool member = std::binary_search(group.begin(), group.end(), me);

  if (me != root) {
    require(member, "reduce_sum: caller is neither root nor group member");
    Message msg{OpTag::reduce, key, seq, me, {}, {local.begin(), local.end()}};
    ctx.send(root, std::move(msg));
    return std::nullopt;
  }

  std::optional<std::vector<double>> acc;
  for (int r : group) {
    std::vector<double> part;
    if (r == me) {
      part.assign(local.begin(), local.end());
    } else {
      part = std::move(ctx.recv(r, OpTag::reduce, key, seq).payload);
    }
    if (!acc) {
      acc = std::move(part);
      continue;
    }
    if (part.size() != acc->size())
      fail(Errc::protocol, "reduce_sum: rank " + std::to_string(r) + " contributed " +
                               std::to_string(part.size()) + " values, expected " +
                               std::to_string(acc->size()));
    for (std::size_t i = 0; i < part.size(); ++i) (*acc)[i] += part[i];
  }
  return acc;
}

void share_from_root(WorkerContext& ctx, int root, std::vector<double>& values) {
  const std::uint64_t key = hash_combine(0x53484152450ULL, static_cast<std::uint64_t>(root));
  const std::uint64_t seq = ctx.next_seq(key);
  if (ctx.rank() == root) {
    for (int r = 0; r < ctx.size(); ++r)
      if (r != root) ctx.send(r, Message{OpTag::broadcast, key, seq, root, {}, values});
  } else {
    values = std::move(ctx.recv(root, OpTag::broadcast, key, seq).payload);
  }
}

std::vector<double> allreduce_sum(WorkerContext& ctx, std::span<const double> local) {
  std::vector<int> all(ctx.size());
  for (int r = 0; r < ctx.size(); ++r) all[r] = r;
  auto summed = reduce_sum(ctx, all, 0, local);
  std::vector<double> out = summed ? std::move(*summed) : std::vector<double>{};
  share_from_root(ctx, 0, out);
  return out;
}

double allreduce_sum(WorkerContext& ctx, double local) {
  return allreduce_sum(ctx, std::span<const double>(&local, 1))[0];
}

}  // namespace dfno
