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
#include "dfno/collectives.hpp"

#include <atomic>
#include <cmath>

namespace dfno {

namespace {

std::atomic<bool> corrupt_adjoint_flag{false};

std::uint64_t broadcast_key(const Partition& p, const Partition& q, const Shape& shape) {
  std::uint64_t h = hash_combine(0x42434153ULL, shape.size());
  for (int d : p.dims()) h = hash_combine(h, static_cast<std::uint64_t>(d));
  h = hash_combine(h, 0xfff0);
  for (int d : q.dims()) h = hash_combine(h, static_cast<std::uint64_t>(d));
  h = hash_combine(h, 0xfff1);
  for (Index s : shape) h = hash_combine(h, static_cast<std::uint64_t>(s));
  return h;
}

RegionBox padded_box(const RegionBox& box, std::size_t ndim) {
  RegionBox out;
  out.ranges.assign(ndim - box.ndim(), IndexRange{0, 1});
  out.ranges.insert(out.ranges.end(), box.ranges.begin(), box.ranges.end());
  return out;
}

template <class T>
std::span<const double> as_doubles(std::span<const T> v) {
  return {reinterpret_cast<const double*>(v.data()), v.size() * scalar_width<T>()};
}

template <class T>
std::vector<T> from_doubles(std::vector<double>&& v) {
  std::vector<T> out(v.size() / scalar_width<T>());
  if (!out.empty()) std::memcpy(static_cast<void*>(out.data()), v.data(), v.size() * sizeof(double));
  return out;
}

std::vector<int> copy_group(const BroadcastDescriptor& desc, const Partition& dest, int source) {
  std::vector<int> group;
  for (int d = 0; d < dest.size(); ++d)
    if (desc.source_rank_for(dest, d) == source) group.push_back(d);
  return group;
}

}  // namespace

namespace debug {
void set_corrupt_adjoint(bool on) { corrupt_adjoint_flag = on; }
bool corrupt_adjoint() { return corrupt_adjoint_flag; }
}  // namespace debug

double uniform_from_key(std::uint64_t key) {
  std::uint64_t bits = hash_combine(key, 0x7f4a7c15ULL);
  return static_cast<double>(bits >> 11) * 0x1.0p-52 - 1.0;
}

template <class T>
DistTensor<T> broadcast_fwd(WorkerContext& ctx, const DistTensor<T>& x, const Partition& dest) {
  const Partition& src = x.partition();
  auto desc = broadcast_compatible(src, dest);
  if (!desc)
    fail(Errc::invalid_argument, "broadcast: partition " +
                                     to_string(Shape(src.dims().begin(), src.dims().end())) +
                                     " cannot broadcast to " +
                                     to_string(Shape(dest.dims().begin(), dest.dims().end())));
  const std::size_t nd = dest.ndim();
  Shape shape(nd - x.shape().size(), 1);
  shape.insert(shape.end(), x.shape().begin(), x.shape().end());

  const std::uint64_t key = broadcast_key(src, dest, x.shape());
  const std::uint64_t seq = ctx.next_seq(key);
  const int me = ctx.rank();

  if (x.active()) {
    RegionBox box = padded_box(x.box(), nd);
    for (int d = 0; d < dest.size(); ++d) {
      if (d == me || desc->source_rank_for(dest, d) != me) continue;
      Message msg{OpTag::broadcast, key, seq, me, box, {}};
      auto flat = as_doubles<T>(x.local());
      msg.payload.assign(flat.begin(), flat.end());
      ctx.send(d, std::move(msg));
    }
  }

  if (!dest.contains_rank(me)) return DistTensor<T>(shape, dest, me);
  const int s = desc->source_rank_for(dest, me);
  RegionBox box = padded_box(local_region(src, s, x.shape()), nd);
  if (s == me) return DistTensor<T>(shape, dest, me, std::move(box), x.data());
  Message msg = ctx.recv(s, OpTag::broadcast, key, seq);
  if (!(msg.box == box)) fail(Errc::protocol, "broadcast: received block does not match");
  return DistTensor<T>(shape, dest, me, std::move(box), from_doubles<T>(std::move(msg.payload)));
}

template <class T>
DistTensor<T> broadcast_adj(WorkerContext& ctx, const DistTensor<T>& g, const Partition& source,
                            const Shape& source_shape) {
  const Partition& dest = g.partition();
  auto desc = broadcast_compatible(source, dest);
  if (!desc) fail(Errc::invalid_argument, "broadcast adjoint: incompatible partitions");
  require(source_shape.size() == source.ndim(), "broadcast adjoint: source shape dimensionality");
  Shape padded(dest.ndim() - source_shape.size(), 1);
  padded.insert(padded.end(), source_shape.begin(), source_shape.end());
  require(padded == g.shape(), "broadcast adjoint: gradient shape " + to_string(g.shape()) +
                                   " does not match source shape " + to_string(source_shape));
  const int me = ctx.rank();

  // Contribute to the owning source first; sends never block.
  if (dest.contains_rank(me)) {
    int s = desc->source_rank_for(dest, me);
    if (s != me) reduce_sum(ctx, copy_group(*desc, dest, s), s, as_doubles<T>(g.local()));
  }

  DistTensor<T> out(source_shape, source, me);
  if (!source.contains_rank(me)) return out;
  auto group = copy_group(*desc, dest, me);
  bool member = dest.contains_rank(me) && desc->source_rank_for(dest, me) == me;
  auto summed = reduce_sum(ctx, group, me,
                           member ? as_doubles<T>(g.local()) : std::span<const double>{});
  auto values = from_doubles<T>(std::move(*summed));
  if (values.size() != out.size()) fail(Errc::protocol, "broadcast adjoint: block size mismatch");
  out.data() = std::move(values);
  return out;
}

template <class T>
DistTensor<T> repartition(WorkerContext& ctx, const DistTensor<T>& x, const Partition& dest) {
  require(dest.ndim() == x.shape().size(),
          "repartition: destination partition has " + std::to_string(dest.ndim()) +
              " dims, tensor has " + std::to_string(x.shape().size()));
  if (x.partition().same_layout(dest))
    return DistTensor<T>(x.shape(), dest, x.rank(), x.box(), x.data());
  TransferPlan plan = transfer_plan(x.partition(), dest, x.shape());
  DistTensor<T> out(x.shape(), dest, ctx.rank());
  out.data() = exchange<T>(ctx, plan, x.local());
  return out;
}

template <class T>
DistTensor<T> repartition_adj(WorkerContext& ctx, const DistTensor<T>& g, const Partition& source) {
  DistTensor<T> out = repartition(ctx, g, source);
  if (debug::corrupt_adjoint())
    for (auto& v : out.data()) v *= 1.0 + 1e-6;
  return out;
}

template <class T>
std::vector<T> gather(WorkerContext& ctx, const DistTensor<T>& x, int root) {
  require(root == 0, "gather: only rank 0 can be the root");
  auto whole = repartition(ctx, x, root_partition(x.shape().size()));
  if (ctx.rank() != root) return {};
  return std::move(whole.data());
}

template <class T>
std::vector<T> gather_all(WorkerContext& ctx, const DistTensor<T>& x) {
  auto whole = gather(ctx, x, 0);
  std::vector<double> flat(as_doubles<T>(whole).begin(), as_doubles<T>(whole).end());
  share_from_root(ctx, 0, flat);
  return from_doubles<T>(std::move(flat));
}

double dot(WorkerContext& ctx, const RealTensor& x, const RealTensor& y) {
  require(x.size() == y.size(), "dot: local sizes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x.data()[i] * y.data()[i];
  return allreduce_sum(ctx, acc);
}

Complex dot(WorkerContext& ctx, const ComplexTensor& x, const ComplexTensor& y) {
  require(x.size() == y.size(), "dot: local sizes differ");
  Complex acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += std::conj(x.data()[i]) * y.data()[i];
  double parts[2] = {acc.real(), acc.imag()};
  auto s = allreduce_sum(ctx, std::span<const double>(parts, 2));
  return {s[0], s[1]};
}

double norm2(WorkerContext& ctx, const RealTensor& x) { return std::sqrt(dot(ctx, x, x)); }
double norm2(WorkerContext& ctx, const ComplexTensor& x) {
  return std::sqrt(std::max(0.0, dot(ctx, x, x).real()));
}

template <class T>
void fill_random(DistTensor<T>& t, std::uint64_t seed) {
  if (t.size() == 0) return;
  const RegionBox& box = t.box();
  const Shape ext = box.extent();
  const std::size_t nd = ext.size();
  const Shape gstride = row_major_strides(t.shape());
  Shape idx(nd, 0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    Index g = 0;
    for (std::size_t d = 0; d < nd; ++d) g += (box.ranges[d].start + idx[d]) * gstride[d];
    std::uint64_t k = hash_combine(seed, static_cast<std::uint64_t>(g));
    if constexpr (std::is_same_v<T, Complex>)
      t.data()[i] = Complex(uniform_from_key(k), uniform_from_key(hash_combine(k, 1)));
    else
      t.data()[i] = uniform_from_key(k);
    for (std::size_t d = nd; d-- > 0;) {
      if (++idx[d] < ext[d]) break;
      idx[d] = 0;
    }
  }
}

template <class T>
void fill_random_local(DistTensor<T>& t, std::uint64_t seed) {
  std::uint64_t base = hash_combine(seed, static_cast<std::uint64_t>(t.rank()) + 1);
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint64_t k = hash_combine(base, i);
    if constexpr (std::is_same_v<T, Complex>)
      t.data()[i] = Complex(uniform_from_key(k), uniform_from_key(hash_combine(k, 1)));
    else
      t.data()[i] = uniform_from_key(k);
  }
}

template <class T>
double adjoint_check(WorkerContext& ctx, const LinearOp<T>& op, std::uint64_t seed) {
  DistTensor<T> x(op.input_shape, op.input_partition, ctx.rank());
  fill_random(x, seed);
  DistTensor<T> ax = op.forward(ctx, x);
  DistTensor<T> y = ax.zeros_like();
  fill_random_local(y, hash_combine(seed, 0xad7ULL));
  DistTensor<T> aty = op.adjoint(ctx, y);
  auto lhs = dot(ctx, ax, y);
  auto rhs = dot(ctx, x, aty);
  double diff = std::abs(lhs - rhs);
  double denom = norm2(ctx, ax) * norm2(ctx, y);
  return denom > 0.0 ? diff / denom : diff;
}

#define DFNO_INSTANTIATE(T)                                                                      \
  template DistTensor<T> broadcast_fwd(WorkerContext&, const DistTensor<T>&, const Partition&); \
  template DistTensor<T> broadcast_adj(WorkerContext&, const DistTensor<T>&, const Partition&,  \
                                       const Shape&);                                            \
  template DistTensor<T> repartition(WorkerContext&, const DistTensor<T>&, const Partition&);   \
  template DistTensor<T> repartition_adj(WorkerContext&, const DistTensor<T>&,                  \
                                         const Partition&);                                      \
  template std::vector<T> gather(WorkerContext&, const DistTensor<T>&, int);                     \
  template std::vector<T> gather_all(WorkerContext&, const DistTensor<T>&);                      \
  template void fill_random(DistTensor<T>&, std::uint64_t);                                      \
  template void fill_random_local(DistTensor<T>&, std::uint64_t);                                \
  template double adjoint_check(WorkerContext&, const LinearOp<T>&, std::uint64_t);

DFNO_INSTANTIATE(double)
DFNO_INSTANTIATE(Complex)

#undef DFNO_INSTANTIATE

}  // namespace dfno
