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
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "dfno/collectives.hpp"

using namespace dfno;

namespace {

std::vector<double> iota_vec(Index n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0.0);
  return v;
}

LinearOp<double> broadcast_op(const Partition& p, const Partition& q, const Shape& shape) {
  return {"broadcast", shape, p,
          [q](WorkerContext& ctx, const RealTensor& x) { return broadcast_fwd(ctx, x, q); },
          [p, shape](WorkerContext& ctx, const RealTensor& g) {
            return broadcast_adj(ctx, g, p, shape);
          }};
}

LinearOp<double> repartition_op(const Partition& p, const Partition& q, const Shape& shape) {
  return {"repartition", shape, p,
          [q](WorkerContext& ctx, const RealTensor& x) { return repartition(ctx, x, q); },
          [p](WorkerContext& ctx, const RealTensor& g) { return repartition_adj(ctx, g, p); }};
}

std::vector<int> random_dims(std::mt19937& rng, std::size_t nd, int max_workers) {
  std::vector<int> dims(nd, 1);
  int total = 1;
  for (int tries = 0; tries < 6; ++tries) {
    std::size_t d = rng() % nd;
    int f = 2 + static_cast<int>(rng() % 2);
    if (total * f <= max_workers) {
      dims[d] *= f;
      total *= f;
    }
  }
  return dims;
}

}  // namespace

TEST_CASE("broadcast (1,1,3) -> (4,4,3) copies each slab to its 16 matching workers") {
  auto p = make_partition({1, 1, 3});
  auto q = make_partition({4, 4, 3});
  Shape shape{2, 2, 6};
  auto global = iota_vec(volume(shape));
  auto out = launch(48, [&](WorkerContext& ctx) {
    auto x = scatter<double>(global, shape, p, ctx.rank());
    auto y = broadcast_fwd(ctx, x, q);
    return y.data();
  });
  for (int r = 0; r < 48; ++r) {
    int k = q.coords(r)[2];
    auto expect = scatter<double>(global, shape, p, k).data();
    CHECK(out[r] == expect);
  }
}

TEST_CASE("broadcast of a weight matrix from a root partition") {
  auto pr = make_partition({1, 1});
  auto q = make_partition({1, 1, 4, 2});
  Shape wshape{20, 20};
  auto w = iota_vec(400);
  auto out = launch(8, [&](WorkerContext& ctx) {
    RealTensor x(wshape, pr, ctx.rank());
    if (ctx.rank() == 0) x.data() = w;
    auto y = broadcast_fwd(ctx, x, q);
    CHECK(y.shape() == Shape{1, 1, 20, 20});
    return y.data();
  });
  for (const auto& v : out) CHECK(v == w);

  auto ident = launch(1, [&](WorkerContext& ctx) {
    auto single = make_partition({1});
    auto x = scatter<double>(std::vector<double>{1, 2, 3}, Shape{3}, single, 0);
    return broadcast_fwd(ctx, x, single).data();
  });
  CHECK(ident[0] == std::vector<double>{1, 2, 3});
}

TEST_CASE("broadcast rejects incompatible partitions") {
  try {
    launch(4, [](WorkerContext& ctx) {
      RealTensor x(Shape{4, 3}, make_partition({2, 1}), ctx.rank());
      broadcast_fwd(ctx, x, make_partition({4, 1}));
    });
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_argument);
  }
}

TEST_CASE("broadcast adjoint sums each copy group") {
  auto p = make_partition({1, 3});
  auto q = make_partition({4, 3});
  Shape shape{2, 6};
  auto out = launch(12, [&](WorkerContext& ctx) {
    auto x = scatter<double>(iota_vec(12), shape, p, ctx.rank());
    auto y = broadcast_fwd(ctx, x, q);
    auto g = y.zeros_like();
    std::fill(g.data().begin(), g.data().end(), 1.5);
    auto back = broadcast_adj(ctx, g, p, shape);
    // broadcast then adjoint on all-ones multiplies by the group size
    auto ones = y.zeros_like();
    std::fill(ones.data().begin(), ones.data().end(), 1.0);
    auto count = broadcast_adj(ctx, ones, p, shape);
    for (double v : count.data()) CHECK(v == 4.0);
    return back.data();
  });
  for (int r = 0; r < 3; ++r)
    for (double v : out[r]) CHECK(v == 6.0);
  for (int r = 3; r < 12; ++r) CHECK(out[r].empty());
}

TEST_CASE("broadcast adjoint identity when P == Q") {
  auto p = make_partition({2});
  auto out = launch(2, [&](WorkerContext& ctx) {
    auto g = scatter<double>(std::vector<double>{1, 2, 3, 4}, Shape{4}, p, ctx.rank());
    return broadcast_adj(ctx, g, p, Shape{4}).data();
  });
  CHECK(out[0] == std::vector<double>{1, 2});
  CHECK(out[1] == std::vector<double>{3, 4});
}

TEST_CASE("adjoint checks for broadcast and repartition") {
  auto small = launch(3, [](WorkerContext& ctx) {
    return adjoint_check(ctx, broadcast_op(make_partition({1}), make_partition({3}), Shape{5}), 11);
  });
  CHECK(small[0] < 1e-12);

  auto fig2 = launch(48, [](WorkerContext& ctx) {
    return adjoint_check(
        ctx, broadcast_op(make_partition({1, 1, 3}), make_partition({4, 4, 3}), Shape{3, 4, 6}), 5);
  });
  CHECK(fig2[0] < 1e-12);

  auto rep = launch(4, [](WorkerContext& ctx) {
    return adjoint_check(
        ctx, repartition_op(make_partition({2, 2}), make_partition({4, 1}), Shape{6, 6}), 3);
  });
  CHECK(rep[0] < 1e-12);

  auto rep9 = launch(9, [](WorkerContext& ctx) {
    return adjoint_check(
        ctx, repartition_op(make_partition({3, 3}), make_partition({1, 9}), Shape{7, 10}), 9);
  });
  CHECK(rep9[0] < 1e-12);

  auto ident = launch(2, [](WorkerContext& ctx) {
    auto p = make_partition({2});
    LinearOp<double> op{"identity", Shape{5}, p,
                        [](WorkerContext&, const RealTensor& x) { return x; },
                        [](WorkerContext&, const RealTensor& g) { return g; }};
    return adjoint_check(ctx, op, 1);
  });
  CHECK(ident[0] == 0.0);
}

TEST_CASE("corrupted adjoint hook is caught by the adjoint check") {
  debug::set_corrupt_adjoint(true);
  auto rep = launch(4, [](WorkerContext& ctx) {
    return adjoint_check(
        ctx, repartition_op(make_partition({2, 2}), make_partition({4, 1}), Shape{6, 6}), 3);
  });
  debug::set_corrupt_adjoint(false);
  CHECK(rep[0] > 1e-8);
}

TEST_CASE("repartition preserves the global tensor bitwise") {
  auto p = make_partition({3, 3, 2});
  auto q = make_partition({1, 2, 3});
  Shape shape{7, 5, 6};
  std::vector<double> global(static_cast<std::size_t>(volume(shape)));
  std::mt19937_64 rng(1);
  for (auto& v : global) v = std::ldexp(static_cast<double>(rng() >> 11), -53);
  auto out = launch(18, [&](WorkerContext& ctx) {
    auto x = scatter<double>(global, shape, p, ctx.rank());
    auto y = repartition(ctx, x, q);
    CHECK(y.box() == (q.contains_rank(ctx.rank()) ? local_region(q, ctx.rank(), shape)
                                                   : y.box()));
    return gather(ctx, y);
  });
  CHECK(out[0] == global);
}

TEST_CASE("repartition round trip and composition with its adjoint") {
  auto out = launch(4, [](WorkerContext& ctx) {
    auto p = make_partition({2});
    auto q = make_partition({4});
    auto x = scatter<double>(iota_vec(8), Shape{8}, p, ctx.rank());
    auto y = repartition(ctx, x, q);
    auto back = repartition(ctx, y, p);
    CHECK(back.data() == x.data());
    auto adj = repartition_adj(ctx, y, p);
    CHECK(adj.data() == x.data());
    auto same = repartition(ctx, x, make_partition({2}));
    CHECK(same.data() == x.data());
    return y.data();
  });
  CHECK(out[2] == std::vector<double>{4, 5});
  CHECK_THROWS_AS(launch(1,
                         [](WorkerContext& ctx) {
                           RealTensor x(Shape{4}, make_partition({1}), ctx.rank());
                           repartition(ctx, x, make_partition({1, 1}));
                         }),
                  Error);
}

TEST_CASE("collectives are linear") {
  auto out = launch(6, [](WorkerContext& ctx) {
    auto p = make_partition({2, 3});
    auto q = make_partition({3, 2});
    Shape shape{5, 7};
    RealTensor x(shape, p, ctx.rank()), y(shape, p, ctx.rank());
    fill_random(x, 1);
    fill_random(y, 2);
    const double a = 0.75, b = -1.25;
    auto comb = x.zeros_like();
    for (std::size_t i = 0; i < comb.size(); ++i) comb.data()[i] = a * x.data()[i] + b * y.data()[i];
    auto lhs = repartition(ctx, comb, q);
    auto rx = repartition(ctx, x, q), ry = repartition(ctx, y, q);
    double worst = 0;
    for (std::size_t i = 0; i < lhs.size(); ++i)
      worst = std::max(worst, std::abs(lhs.data()[i] - (a * rx.data()[i] + b * ry.data()[i])));

    auto pr = make_partition({1, 1});
    RealTensor u(shape, pr, ctx.rank()), v(shape, pr, ctx.rank());
    fill_random(u, 3);
    fill_random(v, 4);
    auto uv = u.zeros_like();
    for (std::size_t i = 0; i < uv.size(); ++i) uv.data()[i] = a * u.data()[i] + b * v.data()[i];
    auto bl = broadcast_fwd(ctx, uv, p);
    auto bu = broadcast_fwd(ctx, u, p), bv = broadcast_fwd(ctx, v, p);
    for (std::size_t i = 0; i < bl.size(); ++i)
      worst = std::max(worst, std::abs(bl.data()[i] - (a * bu.data()[i] + b * bv.data()[i])));
    return worst;
  });
  for (double w : out) CHECK(w < 1e-12);
}

TEST_CASE("randomized adjoint sweep over partitions and shapes") {
  std::mt19937 rng(2024);
  double worst = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    std::size_t nd = 1 + rng() % 3;
    Shape shape(nd);
    for (auto& s : shape) s = 1 + rng() % 12;
    auto pd = random_dims(rng, nd, 8);
    auto qd = random_dims(rng, nd, 8);
    auto p = make_partition(pd);
    auto q = make_partition(qd);
    int n = std::max(p.size(), q.size());
    auto r = launch(n, [&](WorkerContext& ctx) {
      return adjoint_check(ctx, repartition_op(p, q, shape), static_cast<std::uint64_t>(seed));
    });
    worst = std::max(worst, r[0]);
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("complex dot is conjugate-linear in the first argument") {
  auto out = launch(2, [](WorkerContext& ctx) {
    auto p = make_partition({2});
    ComplexTensor x(Shape{4}, p, ctx.rank()), y(Shape{4}, p, ctx.rank());
    for (auto& v : x.data()) v = Complex(0, 1);
    for (auto& v : y.data()) v = Complex(1, 0);
    return dot(ctx, x, y);
  });
  CHECK(out[0] == Complex(0, -4));
}
